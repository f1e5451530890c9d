"""Fixed-outage backtrack-rate heuristic and its epsilon calibration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analytic import ThroughputReport, lharq_throughput
from .channel import Quadrature
from .per_model import PerModel
from .policy import ActionSet, Policy, make_grid

DEFAULT_EPSILONS = tuple(np.logspace(-4, np.log10(0.5), 25))


def fixed_outage_index(model: PerModel, snr, epsilon: float, action_set: ActionSet):
    """Index of the smallest backtrack rate whose conditional backtrack PER is <= epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    snr = np.asarray(snr, dtype=float)
    rhos = action_set.actions
    cond = np.asarray(model.per_backtrack_cond(snr[..., None], rhos))
    ok = cond <= epsilon
    ok[..., -1] = True  # rho = R always qualifies
    idx = np.argmax(ok, axis=-1)
    return int(idx) if idx.ndim == 0 else idx


def fixed_outage_rate(model: PerModel, snr, epsilon: float, action_set: ActionSet):
    out = action_set.actions[fixed_outage_index(model, snr, epsilon, action_set)]
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FixedOutagePolicy:
    """One-dimensional policy ``rho(snr)``, independent of J and of the round."""

    epsilon: float
    action_set: ActionSet
    snr_nodes: np.ndarray
    table: np.ndarray

    @classmethod
    def build(cls, model: PerModel, quad: Quadrature, epsilon: float, action_set: ActionSet):
        table = np.asarray(fixed_outage_index(model, quad.nodes, epsilon, action_set), dtype=np.int64)
        return cls(float(epsilon), action_set, quad.nodes, table)

    @property
    def rate(self) -> float:
        return self.action_set.rate

    @property
    def rates(self) -> np.ndarray:
        return self.action_set.actions[self.table]

    def to_policy(self, model: PerModel, quad: Quadrature, rounds: int, n_j: int = 64) -> Policy:
        """Broadcast the table over J and rounds into a stored :class:`Policy`."""
        grid = make_grid("fixed_outage", model.rate, rounds, quad, n_j, model.truncation_snr, model.eps_trunc)
        tables = tuple(np.repeat(self.table[:, None], j.size, axis=1) for j in grid.j_nodes[:-1])
        return Policy("fixed_outage", rounds, self.action_set, grid, tables, {"epsilon": self.epsilon})


def fixed_outage_throughput(
    model: PerModel, channel, quad: Quadrature, rounds: int, action_set: ActionSet, epsilon: float
) -> ThroughputReport:
    if rounds == 1:
        return lharq_throughput(None, model, channel, quad)
    policy = FixedOutagePolicy.build(model, quad, epsilon, action_set).to_policy(model, quad, rounds, n_j=2)
    return lharq_throughput(policy, model, channel, quad)


@dataclass(frozen=True)
class EpsilonSweep:
    epsilons: tuple[float, ...]
    etas: tuple[float, ...]

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.etas))

    @property
    def best_epsilon(self) -> float:
        return self.epsilons[self.best_index]

    @property
    def best_eta(self) -> float:
        return self.etas[self.best_index]

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.epsilons, self.etas))


def sweep_epsilon(
    model: PerModel,
    channel,
    quad: Quadrature,
    rounds: int,
    action_set: ActionSet,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
) -> EpsilonSweep:
    """Throughput of the fixed-outage policy for each epsilon."""
    epsilons = tuple(float(e) for e in epsilons)
    if not epsilons:
        raise ValueError("epsilon list is empty")
    etas = tuple(
        fixed_outage_throughput(model, channel, quad, rounds, action_set, e).eta for e in epsilons
    )
    return EpsilonSweep(epsilons, etas)
