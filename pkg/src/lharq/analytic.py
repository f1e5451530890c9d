"""Throughput via the renewal-reward theorem: expected reward over expected cycle length."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import Quadrature, aggregate_snr
from .dp import backward_sweep, check_grid
from .per_model import PerModel
from .policy import Policy

CSV_FIELDS = ("scheme", "R", "K", "avg_snr_db", "eta", "e_reward", "e_duration", "f1", "ci")


@dataclass(frozen=True)
class ThroughputReport:
    scheme: str
    rate: float
    rounds: int
    eta: float
    expected_reward: float
    expected_duration: float
    f1: float
    per_round_failure: tuple[float, ...] = ()
    mode: str = "analytic"
    ci_halfwidth: float = 0.0
    std_error: float = 0.0
    n_cycles: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_moments(cls, scheme, rate, rounds, reward, duration, f1, failures=(), **kw):
        if not duration > 0:
            raise ValueError("expected duration must be positive")
        reward, duration = float(reward), float(duration)
        return cls(scheme, float(rate), int(rounds), reward / duration, reward,
                   float(duration), float(f1), tuple(float(f) for f in failures), **kw)

    def csv_row(self, avg_snr_db: float | None = None) -> list[str]:
        snr = "" if avg_snr_db is None else repr(float(avg_snr_db))
        nums = (self.eta, self.expected_reward, self.expected_duration, self.f1, self.ci_halfwidth)
        return [self.scheme, repr(float(self.rate)), str(self.rounds), snr, *(repr(float(x)) for x in nums)]


def _check_failures(f: Sequence[float]) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("need failure probabilities f_0..f_K with K >= 1")
    if f[0] != 1.0:
        raise ValueError(f"f_0 must equal 1, got {f[0]}")
    if np.any(f < 0.0) or np.any(f > 1.0):
        raise ValueError("failure probabilities must lie in [0, 1]")
    if np.any(np.diff(f) > 1e-12):
        raise ValueError("failure probabilities must be non-increasing")
    return f


def irharq_throughput(rate: float, f: Sequence[float], scheme: str = "ir") -> ThroughputReport:
    """Truncated IR-HARQ: ``R (1 - f_K) / sum_{k<K} f_k``."""
    f = _check_failures(f)
    K = f.size - 1
    return ThroughputReport.from_moments(scheme, rate, K, rate * (1.0 - f[K]), f[:K].sum(), f[1], f[1:])


def xp_throughput(rates: Sequence[float], f: Sequence[float]) -> ThroughputReport:
    """Cross-packet coding with joint rate ``rates[k-1]`` after ``k`` rounds.

    Reward ``R_[k]`` is earned when decoding first succeeds in round ``k``.
    """
    f = _check_failures(f)
    rates = np.asarray(rates, dtype=float)
    K = f.size - 1
    if rates.shape != (K,):
        raise ValueError(f"expected {K} joint rates, got {rates.size}")
    if np.any(np.diff(rates) < 0.0):
        raise ValueError("joint rates must be non-decreasing")
    reward = float(np.dot(rates, f[:-1] - f[1:]))
    return ThroughputReport.from_moments("xp", rates[-1], K, reward, f[:K].sum(), f[1], f[1:])


def irharq_fk(model: PerModel, channel, k: int, n_samples: int = 10**6, rng=None) -> float:
    """Monte-Carlo estimate of ``f_k = E[PER(aggregate SNR of k rounds)]``."""
    if k < 1:
        raise ValueError(f"round index must be >= 1, got {k}")
    rng = np.random.default_rng(rng)
    snr = channel.sample(rng, (int(n_samples), int(k)))
    return float(np.mean(model.per_full(aggregate_snr(snr, axis=1))))


def irharq_failures(
    model: PerModel,
    channel,
    rounds: int,
    quad: Quadrature | None = None,
    n_samples: int = 10**6,
    rng=None,
) -> np.ndarray:
    """``f_0..f_K`` for IR-HARQ.

    ``f_1`` comes from the quadrature when given, so it matches the layered
    schemes exactly. Higher orders use one shared Monte-Carlo sample set
    (common random numbers across ``k``); a running minimum keeps the
    sequence non-increasing.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    f = np.ones(rounds + 1)
    start = 1
    if quad is not None:
        f[1] = quad.expect(model.per_full)
        start = 2
    if rounds >= start:
        rng = np.random.default_rng(rng)
        snr = channel.sample(rng, (int(n_samples), rounds))
        acc = np.cumprod(1.0 + snr, axis=1) - 1.0
        for k in range(start, rounds + 1):
            f[k] = float(np.mean(model.per_full(acc[:, k - 1])))
    return np.minimum.accumulate(f)


def expected_duration_layered(f1: float, rounds: int) -> float:
    """``1 + f1 + ... + f1^(K-1)``."""
    if f1 >= 1.0:
        return float(rounds)
    return (1.0 - f1**rounds) / (1.0 - f1)


def _single_round(model: PerModel, quad: Quadrature, scheme: str) -> ThroughputReport:
    f1 = quad.expect(model.per_full)
    return ThroughputReport.from_moments(scheme, model.rate, 1, model.rate * (1.0 - f1), 1.0, f1, (f1,))


def _evaluate(policy: Policy | None, model: PerModel, quad: Quadrature, accounting: str) -> ThroughputReport:
    if policy is None:
        return _single_round(model, quad, accounting)
    if policy.accounting != accounting:
        raise ValueError(f"policy uses {policy.accounting} accounting, not {accounting}")
    check_grid(policy.grid, quad)
    value, _ = backward_sweep(model, policy.grid, policy.action_set, accounting, fixed=policy.tables)
    K = policy.rounds
    f1 = value.f1
    failures = [f1**k for k in range(1, K + 1)]
    return ThroughputReport.from_moments(
        policy.scheme, model.rate, K, value.reward, expected_duration_layered(f1, K), f1, failures
    )


def lharq_throughput(policy: Policy | None, model: PerModel, channel, quad: Quadrature) -> ThroughputReport:
    """L-HARQ throughput under a given policy; ``policy=None`` means one round."""
    return _evaluate(policy, model, quad, "lharq")


def an_throughput(policy: Policy | None, model: PerModel, channel, quad: Quadrature) -> ThroughputReport:
    """All-or-none L-HARQ throughput under a given policy."""
    return _evaluate(policy, model, quad, "an")


def reward_to_report(reward: float, f1: float, rate: float, rounds: int, scheme: str) -> ThroughputReport:
    """Throughput from an optimal expected reward: reward / E[D]."""
    failures = [f1**k for k in range(1, rounds + 1)]
    return ThroughputReport.from_moments(
        scheme, rate, rounds, reward, expected_duration_layered(f1, rounds), f1, failures
    )
