"""Backward dynamic programming over ``(snr, J)`` grids.

For L-HARQ the state entering round ``k`` is the observed SNR and the
expected backtrack reward banked so far, ``J_{k-1}``; a failed round with
backtrack rate ``rho`` moves it to

    J_k = (R + J_{k-1} - rho) * (1 - P(ERR^b_k | ERR_k; snr_k, rho)).

For the all-or-none variant ``J_{k-1}`` is the reward granted if round ``k``
and the whole backtrack chain succeed, ``J_k = J_{k-1} + R - rho`` with
``J_0 = R``; the chain-success probability is carried multiplicatively.

The same sweep evaluates a stored policy (``fixed`` tables) or maximizes over
the action set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Quadrature
from .per_model import PerModel
from .policy import ActionSet, DpGrid, Policy, make_grid

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ValueFunction:
    """Stage values ``V_k(snr_i, J_j)`` for rounds ``1..K`` and their SNR averages.

    ``values[k - 1]`` has shape ``(n_snr, n_j(k))``; ``expected[k - 1]`` is the
    quadrature average over SNR, a function of J on ``grid.j_nodes[k - 1]``.
    Values are expected rewards in bits/symbol (all-or-none values are not
    normalized by J).
    """

    values: tuple[np.ndarray, ...]
    expected: tuple[np.ndarray, ...]
    f1: float

    @property
    def reward(self) -> float:
        return float(self.expected[0][0])


@dataclass(frozen=True)
class DpResult:
    policy: Policy
    value: ValueFunction
    reward: float

    def __iter__(self):
        return iter((self.policy, self.value, self.reward))


def j_update_lharq(j_prev, rho, snr, model: PerModel):
    """Banked backtrack reward after a failed round with backtrack rate ``rho``."""
    cond = np.asarray(model.per_backtrack_cond(snr, rho))
    out = (model.rate + np.asarray(j_prev, dtype=float) - np.asarray(rho)) * (1.0 - cond)
    return float(out) if out.ndim == 0 else out


def j_update_an(j_prev, rho, rate: float):
    out = np.asarray(j_prev, dtype=float) + rate - np.asarray(rho)
    return float(out) if out.ndim == 0 else out


def check_grid(grid: DpGrid, quad: Quadrature) -> None:
    if grid.snr_nodes.shape != quad.nodes.shape or not np.allclose(
        grid.snr_nodes, quad.nodes, rtol=1e-12, atol=0.0
    ):
        raise ValueError("policy SNR grid does not match the quadrature nodes")


def backward_sweep(
    model: PerModel,
    grid: DpGrid,
    action_set: ActionSet,
    accounting: str,
    fixed: tuple[np.ndarray, ...] | None = None,
) -> tuple[ValueFunction, tuple[np.ndarray, ...]]:
    """Run the backward recursion; returns values and the chosen action tables.

    With ``fixed`` given, those action indices are used instead of maximizing.
    """
    if accounting not in ("lharq", "an"):
        raise ValueError(f"unknown accounting {accounting!r}")
    if not np.isclose(action_set.rate, model.rate, rtol=1e-12, atol=0.0):
        raise ValueError("action set and PER model use different rates")
    rate = model.rate
    K = grid.rounds
    quad = grid.quadrature
    w = quad.weights
    per = np.asarray(model.per_full(quad.nodes), dtype=float)
    f1 = float(np.dot(w, per))
    rhos = action_set.actions
    cond = np.asarray(model.per_backtrack_cond(quad.nodes[:, None], rhos[None, :]), dtype=float)
    keep = 1.0 - cond  # backtrack success prob given failure, shape (n_snr, T)

    # Last round has no action: V_K(snr, J) = base(J) * (1 - P(snr)).
    j_last = grid.j_nodes[K - 1]
    base_last = j_last if accounting == "an" else rate + j_last
    v_last = (1.0 - per)[:, None] * base_last[None, :]
    values = [v_last]
    expected = [w @ v_last]
    tables = []
    for k in range(K - 1, 0, -1):
        j = grid.j_nodes[k - 1]
        j_next = grid.j_nodes[k]
        w_next = expected[0]
        if accounting == "lharq":
            j_new = (rate + j[None, :, None] - rhos[None, None, :]) * keep[:, None, :]
            cont = np.interp(j_new, j_next, w_next)
            base = rate + j
        else:
            if np.any(j <= 0.0):
                raise AssertionError("all-or-none J grid must stay positive")
            j_new = np.broadcast_to(j[None, :, None] + rate - rhos[None, None, :], (per.size, j.size, rhos.size))
            cont = keep[:, None, :] * np.interp(j_new, j_next, w_next)
            base = j
        q = (1.0 - per)[:, None, None] * base[None, :, None] + per[:, None, None] * cont
        if fixed is None:
            qmax = q.max(axis=2, keepdims=True)
            idx = np.argmax(q >= qmax - TIE_RTOL * np.abs(qmax), axis=2)
        else:
            idx = np.asarray(fixed[k - 1], dtype=np.int64)
        v = np.take_along_axis(q, idx[:, :, None], axis=2)[:, :, 0]
        values.insert(0, v)
        expected.insert(0, w @ v)
        tables.insert(0, idx)
    return ValueFunction(tuple(values), tuple(expected), f1), tuple(tables)


def _optimize(model, quad, rounds, action_set, grid, scheme, n_j, metadata):
    if rounds < 2:
        raise ValueError("rate optimization needs at least two rounds")
    if grid is None:
        grid = make_grid(scheme, model.rate, rounds, quad, n_j, model.truncation_snr, model.eps_trunc)
    check_grid(grid, quad)
    if grid.rounds != rounds:
        raise ValueError("grid was built for a different number of rounds")
    value, tables = backward_sweep(model, grid, action_set, scheme)
    policy = Policy(scheme, rounds, action_set, grid, tables, dict(metadata or {}))
    return DpResult(policy, value, value.reward)


def optimize_lharq(
    model: PerModel,
    quad: Quadrature,
    rounds: int,
    action_set: ActionSet,
    grid: DpGrid | None = None,
    n_j: int = 64,
    metadata: dict | None = None,
) -> DpResult:
    """Throughput-optimal L-HARQ backtrack rates.

    Returns the policy, the value function and the optimal expected reward
    per cycle. Since the expected cycle length does not depend on the rates,
    maximizing the reward maximizes throughput.
    """
    return _optimize(model, quad, rounds, action_set, grid, "lharq", n_j, metadata)


def optimize_an(
    model: PerModel,
    quad: Quadrature,
    rounds: int,
    action_set: ActionSet,
    grid: DpGrid | None = None,
    n_j: int = 64,
    metadata: dict | None = None,
) -> DpResult:
    """Throughput-optimal rates when reward needs the whole backtrack chain."""
    return _optimize(model, quad, rounds, action_set, grid, "an", n_j, metadata)
