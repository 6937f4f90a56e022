"""Overlapping Allan and modified Allan deviations with gap tolerance.

Input data are the frequency averages delivered by a dead-time-free counter.
For a Lambda-type counter these are triangle-weighted averages; deviations
are reported as computed from them (Lambda mode) without any conversion to
Pi-mode values. ``constants.MOD_TO_ALLAN_VARIANCE_RATIO`` lists the usual
asymptotic Mod/Allan ratios for reference.

Estimator terms that touch an invalid sample are dropped, never
interpolated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .series import FreqSeries

__all__ = [
    "StabilityCurve",
    "adev",
    "mdev",
    "tau_grid",
    "sinusoid_fm_adev",
    "predicted_deviation",
    "loglog_slope",
]


@dataclass(frozen=True, eq=False)
class StabilityCurve:
    taus: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    kind: str = "adev"

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if not (taus.shape == values.shape == counts.shape):
            raise ValueError("taus, values and counts must have the same length")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return self.taus.size

    def at(self, tau: float) -> float:
        i = np.flatnonzero(np.isclose(self.taus, tau, rtol=1e-9))
        if i.size == 0:
            raise KeyError(f"tau={tau} not in curve")
        return float(self.values[i[0]])


def tau_grid(n: int, gate: float = 1.0, max_fraction: float = 1 / 3) -> np.ndarray:
    """1-2-5 per decade averaging times, from ``gate`` to ``max_fraction`` of the record."""
    m_max = max(1, int(n * max_fraction))
    ms = []
    decade = 1
    while decade <= m_max:
        for k in (1, 2, 5):
            if k * decade <= m_max:
                ms.append(k * decade)
        decade *= 10
    return np.array(ms, dtype=float) * gate


def _averaging_factors(taus, gate: float) -> list[int]:
    ms = []
    for tau in np.atleast_1d(np.asarray(taus, dtype=float)):
        m = tau / gate
        mi = int(round(m))
        if mi < 1 or abs(m - mi) > 1e-9 * max(1.0, m):
            raise ValueError(f"tau={tau} s is not a positive integer multiple of gate={gate} s")
        ms.append(mi)
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise ValueError("taus must be strictly increasing")
    return ms


def _prepare(s: FreqSeries):
    valid = s.valid
    # power-of-two normalisation: exact, keeps squares clear of underflow and
    # makes scaling by powers of two bit-exact
    peak = float(np.max(np.abs(s.y[valid]))) if valid.any() else 0.0
    scale = math.ldexp(1.0, math.frexp(peak)[1]) if peak > 0 else 1.0
    y = s.y / scale
    mean = float(np.mean(y[valid])) if valid.any() else 0.0
    y0 = np.where(valid, y - mean, 0.0)
    x = np.concatenate(([0.0], np.cumsum(y0)))               # phase / gate
    bad = np.concatenate(([0], np.cumsum(~valid, dtype=np.int64)))
    return x, bad, scale


def _allan_terms(x, bad, m):
    """Frequency differences for averaging factor m and their usability."""
    n = x.size - 1
    k = n - 2 * m + 1
    if k < 1:
        return np.empty(0), np.empty(0, dtype=bool)
    d = (x[2 * m :] - 2.0 * x[m:-m] + x[: k]) / m
    ok = (bad[2 * m :] - bad[:k]) == 0
    return d, ok


def _mod_terms(x, bad, m):
    n = x.size - 1
    k2 = n - 2 * m + 1
    k = n - 3 * m + 2
    if k < 1:
        return np.empty(0), np.empty(0, dtype=bool)
    # second differences of phase, then a moving sum of m of them
    d = x[2 * m :] - 2.0 * x[m:-m] + x[:k2]
    c = np.concatenate(([0.0], np.cumsum(d)))
    t = (c[m : m + k] - c[:k]) / (m * m)
    ok = (bad[3 * m - 1 : 3 * m - 1 + k] - bad[:k]) == 0
    return t, ok


def _deviation(s: FreqSeries, taus, kind: str) -> StabilityCurve:
    if taus is None:
        taus = tau_grid(s.n, s.gate)
    ms = _averaging_factors(taus, s.gate)
    x, bad, scale = _prepare(s)
    terms_fn = _allan_terms if kind == "adev" else _mod_terms
    out_t, out_v, out_c = [], [], []
    for m in ms:
        d, ok = terms_fn(x, bad, m)
        d = d[ok]
        if d.size == 0:
            warnings.warn(f"{kind}: no usable terms at tau={m * s.gate:g} s, omitted", stacklevel=3)
            continue
        out_t.append(m * s.gate)
        out_v.append(math.sqrt(0.5 * float(np.mean(d * d))) * scale)
        out_c.append(d.size)
    return StabilityCurve(np.array(out_t), np.array(out_v), np.array(out_c, dtype=np.int64), kind)


def adev(s: FreqSeries, taus: Iterable[float] | None = None) -> StabilityCurve:
    """Overlapping Allan deviation.

    Parameters
    ----------
    s : FreqSeries
        Fractional frequency data.
    taus : sequence of float, optional
        Averaging times, each an integer multiple of ``s.gate``. Defaults to
        :func:`tau_grid`.

    Returns
    -------
    StabilityCurve
        Averaging times with at least one usable term; ``counts`` is the
        number of overlapping terms that survived the validity mask.
    """
    return _deviation(s, taus, "adev")


def mdev(s: FreqSeries, taus: Iterable[float] | None = None) -> StabilityCurve:
    """Overlapping modified Allan deviation. Same conventions as :func:`adev`."""
    return _deviation(s, taus, "mdev")


def sinusoid_fm_adev(y0, f_m, tau):
    """Allan deviation of a sinusoidal frequency modulation of peak ``y0``."""
    f_m = np.asarray(f_m, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(f_m <= 0) or np.any(tau <= 0):
        raise ValueError("f_m and tau must be > 0")
    x = np.pi * f_m * tau
    return np.abs(y0) * np.sin(x) ** 2 / x


def predicted_deviation(
    psd: Callable[[np.ndarray], np.ndarray],
    taus,
    gate: float = 1.0,
    kind: str = "adev",
    points_per_m: int = 64,
) -> np.ndarray:
    """Expected (modified) Allan deviation of a sampled process.

    ``psd`` is the one-sided spectral density S_y(f) of the fractional
    frequency. The samples are assumed to be taken every ``gate`` seconds, so
    the integral runs up to the Nyquist frequency with the exact discrete
    transfer function of the estimator.
    """
    ms = _averaging_factors(taus, gate)
    fn = 0.5 / gate
    out = np.empty(len(ms))
    for i, m in enumerate(ms):
        npts = min(max(1 << 14, points_per_m * m), 1 << 23)
        f = (np.arange(npts) + 0.5) * (fn / npts)
        s1 = np.sin(np.pi * f * gate)
        sm = np.sin(np.pi * f * m * gate)
        if kind == "adev":
            kern = 2.0 * sm**4 / (m * m * s1 * s1)
        elif kind == "mdev":
            kern = 2.0 * sm**6 / (m**4 * s1**4)
        else:
            raise ValueError(f"unknown kind {kind!r}")
        out[i] = math.sqrt(float(np.sum(psd(f) * kern)) * (fn / npts))
    return out


def loglog_slope(curve: StabilityCurve, tau_min: float = 0.0, tau_max: float = math.inf) -> float:
    """Least-squares slope of log(value) vs log(tau) over a tau range."""
    sel = (curve.taus >= tau_min) & (curve.taus <= tau_max) & (curve.values > 0)
    if np.count_nonzero(sel) < 2:
        raise ValueError("need at least two points for a slope")
    return float(np.polyfit(np.log(curve.taus[sel]), np.log(curve.values[sel]), 1)[0])
