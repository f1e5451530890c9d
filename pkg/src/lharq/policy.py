"""Backtrack-rate alphabets, DP state grids and stored rate policies."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import IO, Any

import numpy as np

from . import __version__
from .channel import Quadrature

SCHEMES = ("lharq", "an", "fixed_outage")
POLICY_FORMAT = "lharq-policy/1"


@dataclass(frozen=True)
class ActionSet:
    """Backtrack rates ``{delta, 2 delta, ..., R}`` with ``delta = R / n_rates``."""

    rate: float
    n_rates: int

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if int(self.n_rates) != self.n_rates or self.n_rates < 1:
            raise ValueError(f"n_rates must be a positive integer, got {self.n_rates}")

    @classmethod
    def from_bits(cls, rate: float, bits: int) -> "ActionSet":
        return cls(rate, 2 ** int(bits))

    @property
    def delta(self) -> float:
        return self.rate / self.n_rates

    @property
    def actions(self) -> np.ndarray:
        a = np.arange(1, self.n_rates + 1) * self.delta
        a[-1] = self.rate
        return a

    @property
    def feedback_bits(self) -> int:
        return math.ceil(math.log2(self.n_rates)) if self.n_rates > 1 else 0

    def __len__(self) -> int:
        return self.n_rates


def j_range(scheme: str, rate: float, k: int) -> tuple[float, float]:
    """Range of the banked-reward state entering round ``k`` (1-based)."""
    if scheme == "an":
        return rate, k * rate
    return 0.0, (k - 1) * rate


@dataclass(frozen=True)
class DpGrid:
    """State discretization shared by the optimizer, evaluator and lookup.

    ``j_nodes[k - 1]`` is the uniform grid on the J range entering round ``k``
    for ``k = 1..K``; round 1 collapses to a single node.
    """

    quadrature: Quadrature
    j_nodes: tuple[np.ndarray, ...]
    truncation_snr: float
    eps_trunc: float

    @property
    def snr_nodes(self) -> np.ndarray:
        return self.quadrature.nodes

    @property
    def rounds(self) -> int:
        return len(self.j_nodes)


def make_grid(
    scheme: str,
    rate: float,
    rounds: int,
    quadrature: Quadrature,
    n_j: int = 64,
    truncation_snr: float = math.inf,
    eps_trunc: float = 0.0,
) -> DpGrid:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if n_j < 2:
        raise ValueError(f"n_j must be >= 2, got {n_j}")
    acc = "an" if scheme == "an" else "lharq"
    nodes = []
    for k in range(1, rounds + 1):
        lo, hi = j_range(acc, rate, k)
        nodes.append(np.array([lo]) if hi <= lo else np.linspace(lo, hi, n_j))
    return DpGrid(quadrature, tuple(nodes), float(truncation_snr), float(eps_trunc))


@dataclass
class Policy:
    """Per-round action tables ``rho_k(snr, J_{k-1})`` for rounds ``1..K-1``.

    ``tables[k - 1]`` has shape ``(n_snr, n_j(k))`` and holds indices into
    ``action_set.actions``. ``scheme`` selects the reward accounting:
    ``fixed_outage`` policies are scored like ``lharq``.
    """

    scheme: str
    rounds: int
    action_set: ActionSet
    grid: DpGrid
    tables: tuple[np.ndarray, ...]
    metadata: dict[str, Any] = field(default_factory=dict)
    clamped_lookups: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.rounds < 2:
            raise ValueError("a policy needs at least two rounds")
        if len(self.tables) != self.rounds - 1 or self.grid.rounds != self.rounds:
            raise ValueError("table/grid round count does not match rounds")
        n_snr = self.grid.snr_nodes.size
        tables = []
        for k, t in enumerate(self.tables, start=1):
            t = np.asarray(t, dtype=np.int64)
            if t.shape != (n_snr, self.grid.j_nodes[k - 1].size):
                raise ValueError(f"round {k} table shape {t.shape} does not match grid")
            if t.size and (t.min() < 0 or t.max() >= self.action_set.n_rates):
                raise ValueError(f"round {k} table holds an invalid action index")
            t.setflags(write=False)
            tables.append(t)
        self.tables = tuple(tables)

    @property
    def rate(self) -> float:
        return self.action_set.rate

    @property
    def accounting(self) -> str:
        return "an" if self.scheme == "an" else "lharq"

    def rates(self, k: int) -> np.ndarray:
        """Backtrack-rate table of round ``k`` in bits/symbol."""
        return self.action_set.actions[self.tables[k - 1]]

    def lookup_index(self, k: int, snr, j):
        """Nearest-node action index for round ``k`` (vectorized).

        SNRs beyond the last node map to the last node. J values outside the
        round's range are clamped and counted in ``clamped_lookups``.
        """
        if not 1 <= k <= self.rounds - 1:
            raise ValueError(f"round must lie in [1, {self.rounds - 1}], got {k}")
        snr = np.asarray(snr, dtype=float)
        j = np.asarray(j, dtype=float)
        s_nodes = self.grid.snr_nodes
        j_nodes = self.grid.j_nodes[k - 1]
        tol = 1e-9 * max(1.0, abs(j_nodes[-1]))
        out_of_range = (j < j_nodes[0] - tol) | (j > j_nodes[-1] + tol)
        self.clamped_lookups += int(np.count_nonzero(out_of_range))
        si = _nearest(s_nodes, snr)
        ji = _nearest(j_nodes, np.clip(j, j_nodes[0], j_nodes[-1]))
        idx = self.tables[k - 1][si, ji]
        return int(idx) if idx.ndim == 0 else idx

    def lookup_action(self, k: int, snr, j):
        idx = self.lookup_index(k, snr, j)
        out = self.action_set.actions[idx]
        return float(out) if np.ndim(out) == 0 else out


def _nearest(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    if nodes.size == 1:
        return np.zeros(np.shape(x), dtype=np.int64)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    return np.searchsorted(mids, x, side="left")


def lookup_action(policy: Policy, k: int, snr, j):
    return policy.lookup_action(k, snr, j)


def policy_to_dict(policy: Policy) -> dict[str, Any]:
    g = policy.grid
    return {
        "format": POLICY_FORMAT,
        "generator": f"lharq {__version__}",
        "scheme": policy.scheme,
        "rate": policy.rate,
        "rounds": policy.rounds,
        "n_rates": policy.action_set.n_rates,
        "feedback_bits": policy.action_set.feedback_bits,
        "metadata": policy.metadata,
        "grid": {
            "snr_nodes": g.quadrature.nodes.tolist(),
            "snr_weights": g.quadrature.weights.tolist(),
            "truncation_point": g.quadrature.truncation_point,
            "truncation_snr": g.truncation_snr if math.isfinite(g.truncation_snr) else None,
            "eps_trunc": g.eps_trunc,
            "j_nodes": [j.tolist() for j in g.j_nodes],
        },
        "tables": [t.tolist() for t in policy.tables],
    }


def policy_from_dict(d: dict[str, Any]) -> Policy:
    if d.get("format") != POLICY_FORMAT:
        raise ValueError(f"unsupported policy format {d.get('format')!r}")
    g = d["grid"]
    quad = Quadrature(np.array(g["snr_nodes"]), np.array(g["snr_weights"]), g["truncation_point"])
    trunc = math.inf if g["truncation_snr"] is None else g["truncation_snr"]
    grid = DpGrid(quad, tuple(np.array(j, dtype=float) for j in g["j_nodes"]), trunc, g["eps_trunc"])
    return Policy(
        scheme=d["scheme"],
        rounds=int(d["rounds"]),
        action_set=ActionSet(float(d["rate"]), int(d["n_rates"])),
        grid=grid,
        tables=tuple(np.array(t, dtype=np.int64).reshape(quad.nodes.size, -1) for t in d["tables"]),
        metadata=dict(d.get("metadata", {})),
    )


def save_policy(policy: Policy, target: str | os.PathLike | IO[str]) -> None:
    """Write a policy as JSON; floats use repr so the round trip is exact."""
    text = json.dumps(policy_to_dict(policy), indent=1, sort_keys=True) + "\n"
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        target.write(text)


def load_policy(source: str | os.PathLike | IO[str]) -> Policy:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return policy_from_dict(json.load(fh))
    return policy_from_dict(json.load(source))
