"""Layer-coded HARQ rate optimization and throughput evaluation from PER curves."""

__version__ = "0.1.0"
