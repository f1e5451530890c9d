"""Block-fading SNR process and expectation services."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def db_to_linear(db):
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Quadrature:
    """Discrete approximation of an SNR distribution.

    ``expect(f)`` returns ``sum(w_i f(x_i))``. The last node usually carries the
    lumped mass beyond ``truncation_point``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    truncation_point: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise ValueError("nodes and weights must be non-empty 1-D arrays of equal length")
        if np.any(weights < 0.0):
            raise ValueError("quadrature weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"quadrature weights sum to {weights.sum()!r}, expected 1")
        if np.any(np.diff(nodes) <= 0.0) or nodes[0] < 0.0:
            raise ValueError("quadrature nodes must be non-negative and strictly increasing")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.nodes.size

    def expect(self, f) -> float:
        """Expectation of ``f`` (callable or array of node values)."""
        values = f(self.nodes) if callable(f) else np.asarray(f, dtype=float)
        return float(np.dot(self.weights, values))


def _hat_weights(nodes: np.ndarray, scale: float) -> np.ndarray:
    """Exact integrals of the piecewise-linear hat functions against Exp(scale).

    Node values are interpolated linearly between nodes, so any f linear on
    each interval is integrated exactly over ``[nodes[0], nodes[-1]]``.
    """
    a = nodes[:-1]
    s = np.diff(nodes) / scale
    mass_a = np.exp(-a / scale)
    # int_0^s (1 - t/s) e^-t dt and int_0^s (t/s) e^-t dt, written stably.
    em1 = -np.expm1(-s)
    small = s < 1e-4
    s_safe = np.where(small, 1.0, s)
    first = np.where(small, s / 2.0 - s**2 / 3.0 + s**3 / 8.0, (em1 - s * np.exp(-s)) / s_safe)
    right = mass_a * first
    left = mass_a * (em1 - first)
    w = np.zeros(nodes.size)
    w[:-1] += left
    w[1:] += right
    return w


@dataclass(frozen=True)
class FadingChannel:
    """I.i.d. Rayleigh block fading: exponentially distributed SNR with mean ``avg_snr``."""

    avg_snr: float

    def __post_init__(self):
        if not self.avg_snr > 0:
            raise ValueError(f"avg_snr must be positive, got {self.avg_snr}")

    @classmethod
    def from_db(cls, avg_snr_db: float) -> "FadingChannel":
        return cls(float(db_to_linear(avg_snr_db)))

    def pdf(self, snr):
        snr = np.asarray(snr, dtype=float)
        return np.where(snr < 0.0, 0.0, np.exp(-np.maximum(snr, 0.0) / self.avg_snr) / self.avg_snr)

    def cdf(self, snr):
        snr = np.asarray(snr, dtype=float)
        return np.where(snr < 0.0, 0.0, -np.expm1(-np.maximum(snr, 0.0) / self.avg_snr))

    def quantile(self, u):
        return -self.avg_snr * np.log1p(-np.asarray(u, dtype=float))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(self.avg_snr, size)

    def quadrature(self, n_nodes: int = 512, truncation_prob: float = 1e-6) -> Quadrature:
        """Quantile-spaced nodes on ``[0, F^-1(1 - truncation_prob)]`` plus a tail node.

        Weights integrate the linear interpolant of the integrand exactly. The
        tail mass ``truncation_prob`` sits at the conditional tail mean, which
        for the exponential law is ``truncation_point + avg_snr``.
        """
        if int(n_nodes) != n_nodes or n_nodes < 2:
            raise ValueError(f"n_nodes must be an integer >= 2, got {n_nodes}")
        if not 0.0 < truncation_prob < 1.0:
            raise ValueError(f"truncation_prob must lie in (0, 1), got {truncation_prob}")
        u = np.linspace(0.0, 1.0 - truncation_prob, int(n_nodes))
        body = self.quantile(u)
        body[-1] = self.avg_snr * math.log(1.0 / truncation_prob)
        w = _hat_weights(body, self.avg_snr)
        tail_mass = truncation_prob
        nodes = np.append(body, body[-1] + self.avg_snr)
        weights = np.append(w, tail_mass)
        weights /= weights.sum()
        return Quadrature(nodes, weights, float(body[-1]))


@dataclass(frozen=True)
class FixedChannel:
    """Degenerate channel whose SNR is always ``snr``; used for limit checks."""

    snr: float

    def __post_init__(self):
        if not self.snr >= 0:
            raise ValueError(f"snr must be non-negative, got {self.snr}")

    @property
    def avg_snr(self) -> float:
        return self.snr

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return float(self.snr)
        return np.full(size, float(self.snr))

    def quadrature(self, n_nodes: int = 512, truncation_prob: float = 1e-6) -> Quadrature:
        return Quadrature(np.array([self.snr]), np.array([1.0]), float(self.snr))


def sample_snr(channel, rng: np.random.Generator, size=None):
    return channel.sample(rng, size)


def build_quadrature(channel, n_nodes: int = 512, truncation_prob: float = 1e-6) -> Quadrature:
    return channel.quadrature(n_nodes, truncation_prob)


def aggregate_snr(snrs, axis: int = -1):
    """SNR whose mutual information equals the summed per-block information.

    With ``I(x) = log2(1 + x)`` this is ``prod(1 + snr) - 1``.
    """
    snrs = np.asarray(snrs, dtype=float)
    if snrs.size == 0 or (snrs.ndim and snrs.shape[axis] == 0):
        raise ValueError("aggregate_snr needs at least one SNR")
    if np.any(snrs < 0.0):
        raise ValueError("SNR values must be non-negative")
    out = np.prod(1.0 + snrs, axis=axis) - 1.0
    return float(out) if np.ndim(out) == 0 else out
