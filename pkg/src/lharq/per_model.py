"""Decoder error-probability curves.

Two interchangeable models answer the same three queries:

* ``per_full(snr)``: probability that decoding a rate-``R`` codeword fails.
* ``per_backtrack(snr, rho)``: probability that the backtrack decoding fails
  once ``rho`` bits/symbol of the message are known. Backtrack failure implies
  full-decoding failure, so this is also the joint probability.
* ``per_backtrack_cond(snr, rho)``: the ratio of the two, i.e. the backtrack
  failure probability given that the full decoding failed.

:class:`SyntheticPer` is the threshold-exponential closed form and
:class:`TabulatedPer` interpolates measured curves loaded with
:func:`load_per_table`. Both zero every probability above the SNR where
``per_full`` drops to ``eps_trunc``.
"""

from __future__ import annotations

import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import IO, Protocol, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

DEFAULT_EPS_TRUNC = 1e-6
PROB_FLOOR = 1e-12
_RATE_TOL = 1e-12


def mutual_information(snr: ArrayLike) -> ArrayLike:
    """Gaussian-input mutual information ``log2(1 + snr)``."""
    return np.log2(1.0 + np.asarray(snr, dtype=float))


def snr_threshold(rate: ArrayLike) -> ArrayLike:
    """SNR at which the mutual information equals ``rate``."""
    return np.exp2(np.asarray(rate, dtype=float)) - 1.0


def _scalar_or_array(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


class PerModel(Protocol):
    rate: float
    eps_trunc: float

    @property
    def truncation_snr(self) -> float: ...

    def per_full(self, snr: ArrayLike) -> ArrayLike: ...

    def per_backtrack(self, snr: ArrayLike, rho: ArrayLike) -> ArrayLike: ...

    def per_backtrack_cond(self, snr: ArrayLike, rho: ArrayLike) -> ArrayLike: ...


def _check_rho(rho: np.ndarray, rate: float) -> None:
    if np.any(rho < -_RATE_TOL) or np.any(rho > rate + _RATE_TOL):
        raise ValueError(f"backtrack rate must lie in [0, {rate}], got {rho}")


def _conditional(joint: np.ndarray, full: np.ndarray) -> np.ndarray:
    # 0/0 -> 0: the conditional is only ever used multiplied by per_full.
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(full > 0.0, joint / np.where(full > 0.0, full, 1.0), 0.0)
    return np.clip(ratio, 0.0, 1.0)


class _PerBase:
    rate: float
    eps_trunc: float

    def _truncate(self, snr: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.where(snr > self.truncation_snr, 0.0, p)

    def per_backtrack_cond(self, snr: ArrayLike, rho: ArrayLike) -> ArrayLike:
        snr = np.asarray(snr, dtype=float)
        rho = np.asarray(rho, dtype=float)
        joint = np.asarray(self.per_backtrack(snr, rho))
        full = np.asarray(self.per_full(snr))
        return _scalar_or_array(_conditional(joint, np.broadcast_to(full, joint.shape)))


@dataclass(frozen=True)
class SyntheticPer(_PerBase):
    """Threshold-exponential PER curve.

    ``PER(snr; r) = 1`` below ``2**r - 1`` and ``exp(-a_tilde (snr/th - 1))``
    above it. The backtrack decoder sees the residual rate ``R - rho``;
    a residual rate of zero never fails. ``a_tilde = inf`` gives the
    idealized threshold decoder.
    """

    rate: float
    a_tilde: float = 4.0
    eps_trunc: float = DEFAULT_EPS_TRUNC

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not self.a_tilde > 0:
            raise ValueError(f"a_tilde must be positive, got {self.a_tilde}")
        if not 0.0 <= self.eps_trunc < 1.0:
            raise ValueError(f"eps_trunc must lie in [0, 1), got {self.eps_trunc}")

    @property
    def snr_threshold(self) -> float:
        return float(snr_threshold(self.rate))

    @property
    def truncation_snr(self) -> float:
        if self.eps_trunc == 0.0:
            return math.inf
        if math.isinf(self.a_tilde):
            return self.snr_threshold
        return self.snr_threshold * (1.0 + math.log(1.0 / self.eps_trunc) / self.a_tilde)

    def curve(self, snr: ArrayLike, rate: ArrayLike) -> np.ndarray:
        """Untruncated PER at an arbitrary coding rate (vectorized)."""
        snr = np.asarray(snr, dtype=float)
        rate = np.asarray(rate, dtype=float)
        th = np.exp2(rate) - 1.0
        zero_rate = rate <= _RATE_TOL
        th_safe = np.where(zero_rate, 1.0, th)
        if math.isinf(self.a_tilde):
            above = np.zeros(np.broadcast(snr, rate).shape)
        else:
            above = np.exp(-self.a_tilde * np.maximum(snr / th_safe - 1.0, 0.0))
        p = np.where(snr < th_safe, 1.0, above)
        return np.where(zero_rate, 0.0, p)

    def per_full(self, snr: ArrayLike) -> ArrayLike:
        snr = np.asarray(snr, dtype=float)
        return _scalar_or_array(self._truncate(snr, self.curve(snr, self.rate)))

    def per_backtrack(self, snr: ArrayLike, rho: ArrayLike) -> ArrayLike:
        snr = np.asarray(snr, dtype=float)
        rho = np.asarray(rho, dtype=float)
        _check_rho(rho, self.rate)
        residual = np.maximum(self.rate - rho, 0.0)
        return _scalar_or_array(self._truncate(snr, self.curve(snr, residual)))


class PerTableError(ValueError):
    """Raised for malformed PER tables; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class PerTable:
    """Measured PER curves, one series per backtrack rate.

    ``series[rho] = (snr_db, prob)``. The ``rho = 0`` series is the
    full-decoding PER; the others are joint failure probabilities.
    """

    rate: float
    series: dict[float, tuple[np.ndarray, np.ndarray]]
    n_clamped: int = 0

    @property
    def rhos(self) -> np.ndarray:
        return np.array(sorted(self.series))

    def rows(self) -> list[tuple[float, float, float]]:
        out = []
        for rho in self.rhos:
            snr_db, prob = self.series[float(rho)]
            out.extend((float(s), float(rho), float(p)) for s, p in zip(snr_db, prob))
        return out


_RATE_LINE = re.compile(r"#\s*rate_R\s*=\s*([^\s,]+)")


def _log_interp(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """Interpolate ``fp`` linearly in log10 domain; 1 below, 0 above the range."""
    x = np.asarray(x, dtype=float)
    logp = np.log10(np.maximum(fp, PROB_FLOOR))
    inside = 10.0 ** np.interp(x, xp, logp)
    inside = np.where(inside <= PROB_FLOOR * (1 + 1e-9), 0.0, inside)
    # Nodes are returned verbatim.
    idx = np.clip(np.searchsorted(xp, x), 0, xp.size - 1)
    inside = np.where(xp[idx] == x, fp[idx], inside)
    return np.where(x < xp[0], 1.0, np.where(x > xp[-1], 0.0, inside))


def load_per_table(source: str | os.PathLike | IO[str] | IO[bytes], rate: float | None = None) -> PerTable:
    """Parse a ``snr_db,rho,prob`` CSV into a :class:`PerTable`.

    ``source`` is a path or an open text/byte stream. ``rate`` overrides a
    ``# rate_R=<value>`` metadata line. Joint probabilities above the
    marginal at the same SNR are clamped down and counted in ``n_clamped``.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    file_rate = None
    header_seen = False
    raw: dict[float, list[tuple[float, float, int]]] = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _RATE_LINE.match(stripped)
            if m:
                try:
                    file_rate = float(m.group(1))
                except ValueError:
                    raise PerTableError(f"bad rate_R value {m.group(1)!r}", lineno) from None
            continue
        if not header_seen:
            cols = [c.strip() for c in stripped.split(",")]
            if cols != ["snr_db", "rho", "prob"]:
                raise PerTableError(f"expected header 'snr_db,rho,prob', got {stripped!r}", lineno)
            header_seen = True
            continue
        parts = stripped.split(",")
        if len(parts) != 3:
            raise PerTableError(f"expected 3 fields, got {len(parts)}", lineno)
        try:
            snr_db, rho, prob = (float(p) for p in parts)
        except ValueError:
            raise PerTableError(f"non-numeric field in {stripped!r}", lineno) from None
        if not all(math.isfinite(v) for v in (snr_db, rho)) or math.isnan(prob):
            raise PerTableError("non-finite value", lineno)
        if not 0.0 <= prob <= 1.0:
            raise PerTableError(f"probability {prob} outside [0, 1]", lineno)
        if rho < 0.0:
            raise PerTableError(f"negative backtrack rate {rho}", lineno)
        series = raw.setdefault(rho, [])
        if series and snr_db <= series[-1][0]:
            raise PerTableError(f"snr_db not strictly increasing within rho={rho} series", lineno)
        series.append((snr_db, prob, lineno))

    if not header_seen:
        raise PerTableError("missing header 'snr_db,rho,prob'")
    if rate is None:
        rate = file_rate
    if rate is None:
        raise PerTableError("rate R not given (no '# rate_R=' line and no explicit rate)")
    if not rate > 0:
        raise PerTableError(f"rate must be positive, got {rate}")
    if 0.0 not in raw:
        raise PerTableError("missing rho=0 (full decoding) series")
    for rho, rows in raw.items():
        if rho > rate + _RATE_TOL:
            raise PerTableError(f"backtrack rate {rho} exceeds R={rate}", rows[0][2])

    base_x = np.array([r[0] for r in raw[0.0]])
    base_p = np.array([r[1] for r in raw[0.0]])
    series = {0.0: (base_x, base_p)}
    n_clamped = 0
    for rho in sorted(raw):
        if rho == 0.0:
            continue
        x = np.array([r[0] for r in raw[rho]])
        p = np.array([r[1] for r in raw[rho]])
        marginal = _log_interp(x, base_x, base_p)
        over = p > marginal
        n_clamped += int(np.count_nonzero(over))
        series[float(rho)] = (x, np.where(over, marginal, p))
    if max(series) < rate - _RATE_TOL:
        # A zero-bit residual message always decodes.
        series[float(rate)] = (base_x.copy(), np.zeros_like(base_p))
    return PerTable(rate=float(rate), series=series, n_clamped=n_clamped)


@dataclass(frozen=True)
class TabulatedPer(_PerBase):
    """PER model backed by a :class:`PerTable`.

    Within a series the probability is interpolated linearly in
    ``(snr_db, log10 prob)``; between series it is linear in ``rho``.
    """

    table: PerTable
    eps_trunc: float = DEFAULT_EPS_TRUNC
    _trunc: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.eps_trunc < 1.0:
            raise ValueError(f"eps_trunc must lie in [0, 1), got {self.eps_trunc}")
        object.__setattr__(self, "_trunc", self._find_truncation())

    @property
    def rate(self) -> float:
        return self.table.rate

    @property
    def truncation_snr(self) -> float:
        return self._trunc

    def _find_truncation(self) -> float:
        if self.eps_trunc == 0.0:
            return math.inf
        x, p = self.table.series[0.0]
        above = np.nonzero(p > self.eps_trunc)[0]
        if above.size == 0:
            return float(10.0 ** (x[0] / 10.0))
        i = int(above[-1])
        if i == x.size - 1:
            return float(10.0 ** (x[-1] / 10.0))
        # Log-linear segment: solve for the eps crossing in closed form.
        l0 = math.log10(p[i])
        l1 = math.log10(max(p[i + 1], PROB_FLOOR))
        le = math.log10(self.eps_trunc)
        x_eps = x[i] + (x[i + 1] - x[i]) * (l0 - le) / (l0 - l1)
        return float(10.0 ** (x_eps / 10.0))

    def _series_at(self, rho: float, snr_db: np.ndarray) -> np.ndarray:
        x, p = self.table.series[rho]
        return _log_interp(snr_db, x, p)

    @staticmethod
    def _to_db(snr: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(snr)

    def per_full(self, snr: ArrayLike) -> ArrayLike:
        snr = np.asarray(snr, dtype=float)
        p = self._series_at(0.0, self._to_db(snr))
        return _scalar_or_array(self._truncate(snr, p))

    def per_backtrack(self, snr: ArrayLike, rho: ArrayLike) -> ArrayLike:
        snr = np.asarray(snr, dtype=float)
        rho = np.asarray(rho, dtype=float)
        _check_rho(rho, self.rate)
        snr, rho = np.broadcast_arrays(snr, rho)
        snr_db = self._to_db(snr)
        rhos = self.table.rhos
        values = np.stack([self._series_at(float(r), snr_db).ravel() for r in rhos])
        if rhos.size == 1:
            joint = values[0].reshape(snr.shape)
        else:
            hi = np.clip(np.searchsorted(rhos, rho.ravel(), side="right"), 1, rhos.size - 1)
            lo = hi - 1
            t = np.clip((rho.ravel() - rhos[lo]) / (rhos[hi] - rhos[lo]), 0.0, 1.0)
            cols = np.arange(snr.size)
            joint = ((1.0 - t) * values[lo, cols] + t * values[hi, cols]).reshape(snr.shape)
        full = self._series_at(0.0, snr_db)
        joint = np.minimum(joint, full)
        return _scalar_or_array(self._truncate(snr, joint))


def write_per_table(
    model: PerModel,
    snr_db: np.ndarray,
    rhos: np.ndarray,
    stream: IO[str],
    comments: list[str] | None = None,
) -> None:
    """Sample ``model`` onto the CSV table format.

    ``rho = 0`` rows carry ``per_full``; other rows carry ``per_backtrack``.
    The model is sampled without truncation artefacts only if its
    ``eps_trunc`` is zero.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    snr = 10.0 ** (snr_db / 10.0)
    for line in comments or []:
        stream.write(f"# {line}\n")
    stream.write(f"# rate_R={model.rate!r}\n")
    stream.write("snr_db,rho,prob\n")
    for rho in sorted(set(float(r) for r in np.concatenate([[0.0], np.asarray(rhos, dtype=float)]))):
        if rho == 0.0:
            probs = np.asarray(model.per_full(snr))
        else:
            probs = np.asarray(model.per_backtrack(snr, rho))
        for s, p in zip(snr_db, np.broadcast_to(probs, snr_db.shape)):
            stream.write(f"{float(s)!r},{rho!r},{float(p)!r}\n")
