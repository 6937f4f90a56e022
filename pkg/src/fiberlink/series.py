"""Uniformly sampled fractional-frequency records and their basic statistics.

Invalid samples are stored as NaN and carried along with a boolean validity
mask. Every statistic in this module looks at valid samples only; nothing is
ever zero-filled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .constants import GATE_DEFAULT, NU0_DEFAULT, SECONDS_PER_DAY

__all__ = [
    "FreqSeries",
    "ValidityMask",
    "Histogram",
    "SummaryStats",
    "rolling_mean",
    "rolling_std",
    "summary_stats",
    "histogram",
    "mask_and",
    "sample_offset",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def sample_offset(t0_a: float, t0_b: float, gate: float) -> int:
    """Number of samples by which timebase ``b`` starts after timebase ``a``.

    Raises ValueError when the two epochs are not an integer number of gates
    apart.
    """
    k = (t0_b - t0_a) * SECONDS_PER_DAY / gate
    ki = int(round(k))
    if abs(k - ki) > 1e-4:
        raise ValueError(f"timebases are not sample-aligned (offset {k:.6f} samples)")
    return ki


@dataclass(frozen=True, eq=False)
class FreqSeries:
    """Fractional frequency record ``y`` sampled every ``gate`` seconds.

    Parameters
    ----------
    y : array_like
        Fractional frequency values. Non-finite values are treated as invalid.
    valid : array_like of bool, optional
        Validity mask, same length as ``y``. Defaults to all valid.
    t0 : float
        Epoch of the first sample, MJD (days).
    gate : float
        Sampling / gate time in seconds.
    nu0 : float
        Carrier frequency in Hz; ``y * nu0`` is the frequency deviation in Hz.
    """

    y: np.ndarray
    valid: np.ndarray | None = None
    t0: float = 0.0
    gate: float = GATE_DEFAULT
    nu0: float = NU0_DEFAULT

    def __post_init__(self):
        y = np.array(self.y, dtype=float, ndmin=1)
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        if self.valid is None:
            valid = np.ones(y.shape, dtype=bool)
        else:
            valid = np.array(self.valid, dtype=bool, ndmin=1)
            if valid.shape != y.shape:
                raise ValueError(f"len(valid)={valid.size} != len(y)={y.size}")
        if not self.gate > 0:
            raise ValueError("gate must be > 0")
        if not self.nu0 > 0:
            raise ValueError("nu0 must be > 0")
        valid &= np.isfinite(y)
        y[~valid] = np.nan
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "gate", float(self.gate))
        object.__setattr__(self, "nu0", float(self.nu0))

    def __len__(self) -> int:
        return self.y.size

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def times(self) -> np.ndarray:
        """Sample epochs in MJD."""
        return self.t0 + np.arange(self.n) * (self.gate / SECONDS_PER_DAY)

    @property
    def elapsed(self) -> np.ndarray:
        """Seconds since the first sample."""
        return np.arange(self.n) * self.gate

    @property
    def df(self) -> np.ndarray:
        """Frequency deviation in Hz."""
        return self.y * self.nu0

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    @property
    def uptime(self) -> float:
        return self.n_valid / self.n if self.n else 0.0

    @property
    def mask(self) -> ValidityMask:
        return ValidityMask(self.valid, t0=self.t0, gate=self.gate)

    def replace(self, **changes) -> FreqSeries:
        return dataclasses.replace(self, **changes)

    def with_mask(self, bits) -> FreqSeries:
        """Copy with ``valid`` ANDed with ``bits``."""
        bits = np.asarray(bits, dtype=bool)
        return self.replace(y=self.y, valid=self.valid & bits)

    def same_timebase(self, other: FreqSeries) -> bool:
        return (
            self.n == other.n
            and math.isclose(self.gate, other.gate, rel_tol=1e-12)
            and abs(self.t0 - other.t0) * SECONDS_PER_DAY < 1e-4 * self.gate
        )


@dataclass(frozen=True, eq=False)
class ValidityMask:
    """Boolean quality flags on a uniform timebase (``True`` = usable)."""

    bits: np.ndarray
    t0: float = 0.0
    gate: float = GATE_DEFAULT

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, ndmin=1)
        if not self.gate > 0:
            raise ValueError("gate must be > 0")
        object.__setattr__(self, "bits", _frozen(bits))

    def __len__(self) -> int:
        return self.bits.size

    def __and__(self, other: ValidityMask) -> ValidityMask:
        return mask_and(self, other)

    @property
    def uptime(self) -> float:
        return float(np.count_nonzero(self.bits)) / self.bits.size if self.bits.size else 0.0

    def window(self, t0: float, n: int) -> np.ndarray:
        """Bits for ``n`` samples starting at epoch ``t0`` (must lie inside)."""
        k = sample_offset(self.t0, t0, self.gate)
        if k < 0 or k + n > self.bits.size:
            raise ValueError("requested window is outside the mask")
        return self.bits[k : k + n]


def mask_and(a: ValidityMask, b: ValidityMask) -> ValidityMask:
    """Pointwise AND of two masks on their common interval."""
    if not math.isclose(a.gate, b.gate, rel_tol=1e-12):
        raise ValueError(f"gate mismatch: {a.gate} s vs {b.gate} s")
    k = sample_offset(a.t0, b.t0, a.gate)
    start = max(0, k)
    stop = min(len(a), k + len(b))
    if stop <= start:
        raise ValueError("masks do not overlap")
    bits = a.bits[start:stop] & b.bits[start - k : stop - k]
    t0 = a.t0 if k <= 0 else b.t0
    return ValidityMask(bits, t0=t0, gate=a.gate)


def _window_samples(s: FreqSeries, window_s: float) -> int:
    if s.n == 0:
        raise ValueError("empty series")
    if window_s < s.gate * (1 - 1e-9):
        raise ValueError(f"window {window_s} s is shorter than the gate {s.gate} s")
    w = max(1, int(round(window_s / s.gate)))
    if w > s.n:
        raise ValueError(f"window of {w} samples exceeds series of {s.n} samples")
    return w


def _rolling(s: FreqSeries, window_s: float, stat: str) -> FreqSeries:
    w = _window_samples(s, window_s)
    n = s.n
    # Shift by a typical value so the running sums stay well conditioned.
    ref = float(np.median(s.y[s.valid])) if s.n_valid else 0.0
    r = pd.Series(s.y - ref).rolling(w, min_periods=(w + 1) // 2)
    trailing = (r.mean() if stat == "mean" else r.std(ddof=1)).to_numpy()
    if stat == "mean":
        trailing = trailing + ref

    # trailing[j] covers [j-w+1, j]; the window centred on i ends at i + lead
    lead = (w - 1) // 2
    left = w // 2
    out = np.full(n, np.nan)
    out[: n - lead] = trailing[lead:]
    out[:left] = np.nan
    return FreqSeries(out, np.isfinite(out), t0=s.t0, gate=s.gate, nu0=s.nu0)


def rolling_mean(s: FreqSeries, window_s: float) -> FreqSeries:
    """Centred moving average over valid samples.

    The window holds ``round(window_s / gate)`` samples. An output sample is
    invalid when its window is incomplete (series edges) or when fewer than
    half of the window's samples are valid.
    """
    return _rolling(s, window_s, "mean")


def rolling_std(s: FreqSeries, window_s: float) -> FreqSeries:
    """Centred moving sample standard deviation (N-1 denominator).

    Same windowing and validity rules as :func:`rolling_mean`; windows with
    fewer than two valid samples are invalid.
    """
    return _rolling(s, window_s, "std")


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    median: float
    count: int
    nu0: float = NU0_DEFAULT

    @property
    def mean_hz(self) -> float:
        return self.mean * self.nu0

    @property
    def median_hz(self) -> float:
        return self.median * self.nu0


def summary_stats(s: FreqSeries) -> SummaryStats:
    """Mean, median and count of the valid samples.

    The mean uses a correctly rounded sum; the median of an even count is the
    midpoint of the two central order statistics.
    """
    v = s.y[s.valid]
    if v.size == 0:
        raise ValueError("no valid samples")
    return SummaryStats(
        mean=math.fsum(v) / v.size,
        median=float(np.median(v)),
        count=int(v.size),
        nu0=s.nu0,
    )


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_width: float
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def histogram(s: FreqSeries, bin_width: float) -> Histogram:
    """Histogram of the valid frequency deviations ``y * nu0`` in Hz.

    Edges are uniform, aligned on integer multiples of ``bin_width`` and span
    ``[min, max]``. Bins are half-open ``[e_j, e_j+1)`` except the last, which
    is closed so the maximum is counted.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    v = s.df[s.valid]
    if v.size == 0:
        raise ValueError("no valid samples")
    lo, hi = float(v.min()), float(v.max())
    first = math.floor(lo / bin_width)
    nbins = max(1, math.ceil(hi / bin_width) - first)
    edges = (first + np.arange(nbins + 1)) * bin_width
    while edges[0] > lo:
        first -= 1
        nbins += 1
        edges = (first + np.arange(nbins + 1)) * bin_width
    while edges[-1] < hi:
        nbins += 1
        edges = (first + np.arange(nbins + 1)) * bin_width
    idx = np.searchsorted(edges, v, side="right") - 1
    idx = np.clip(idx, 0, nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    return Histogram(bin_width=float(bin_width), edges=edges, counts=counts)
