"""Data validation for clock comparisons: filtering, selection, uptime, budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Decimal
from typing import Sequence

import numpy as np
import pandas as pd

from .constants import MAD_TO_SIGMA
from .series import FreqSeries, ValidityMask, rolling_mean, rolling_std, sample_offset

__all__ = [
    "REASON_COARSE",
    "REASON_MEAN",
    "REASON_STD",
    "REASON_QF",
    "SelectionConfig",
    "SelectionResult",
    "UncertaintyBudget",
    "BudgetEntry",
    "UptimeReport",
    "coarse_filter",
    "simple_select",
    "three_observable_select",
    "uptime",
    "uptime_product",
    "combine_budget",
    "ceil_one_digit",
    "apply_correction",
]

REASON_COARSE, REASON_MEAN, REASON_STD, REASON_QF = 1, 2, 4, 8


def coarse_filter(s: FreqSeries, bw: float, center: str = "zero",
                  center_window: float = 3600.0) -> tuple[FreqSeries, ValidityMask]:
    """Reject samples whose deviation in Hz strays more than ``bw`` from a centre.

    ``center`` is ``"zero"`` (nominal set point, the series holds deviations)
    or ``"median"`` (centred rolling median over ``center_window`` seconds).
    Returns the filtered series and the quality factor: ``True`` where the
    sample was valid and kept. Samples invalid on input are not flagged as
    removed by the filter.

    With ``bw`` = 1 Hz at a 1 s gate a single cycle slip is a hop of exactly
    1 Hz, so slips sit on the rejection boundary; the noise decides. Use
    :func:`simple_select` to remove them reliably.
    """
    if not bw > 0:
        raise ValueError("bw must be > 0")
    df = s.df
    if center == "zero":
        c = 0.0
    elif center == "median":
        w = max(1, int(round(center_window / s.gate)))
        c = pd.Series(df).rolling(w, center=True, min_periods=1).median().to_numpy()
    else:
        raise ValueError(f"unknown center policy {center!r}")
    with np.errstate(invalid="ignore"):
        keep = s.valid & (np.abs(df - c) <= bw)
    out = s.with_mask(keep)
    return out, ValidityMask(keep, t0=s.t0, gate=s.gate)


def simple_select(s: FreqSeries, bw: float = 1.0, outlier_sigma: float = 5.0) -> FreqSeries:
    """Bandwidth filter followed by removal of robust outliers.

    Outliers are samples further than ``outlier_sigma`` robust standard
    deviations (1.4826 * MAD) from the median. A single cycle slip (5e-15 at
    1 s) on a link with ~4e-17 short-term noise is removed by the second step.
    """
    out, _ = coarse_filter(s, bw)
    v = out.y[out.valid]
    if v.size == 0:
        return out
    med = float(np.median(v))
    scale = MAD_TO_SIGMA * float(np.median(np.abs(v - med)))
    if scale == 0:
        return out
    with np.errstate(invalid="ignore"):
        keep = np.abs(out.y - med) <= outlier_sigma * scale
    return out.with_mask(keep)


@dataclass(frozen=True)
class SelectionConfig:
    """Parameters of the three-observable selection.

    Limits left as ``None`` are derived from the data: ``mean_limit`` is
    ``mean_k`` robust standard deviations of the rolling-mean observable
    (about its median), ``std_limit`` is ``std_k`` times the median rolling
    standard deviation.
    """

    coarse_bw: float = 10.0
    fine_bw: float = 1.0
    mean_window: float = 9.0
    std_window: float = 2750.0
    qf_window: float = 2750.0
    mean_limit: float | None = None
    std_limit: float | None = None
    qf_limit: float = 0.1
    mean_k: float = 5.0
    std_k: float = 2.0
    center: str = "zero"

    def __post_init__(self):
        if not (self.coarse_bw > 0 and self.fine_bw > 0):
            raise ValueError("bandwidths must be > 0")
        if min(self.mean_window, self.std_window, self.qf_window) <= 0:
            raise ValueError("windows must be > 0")


@dataclass(frozen=True, eq=False)
class SelectionResult:
    series: FreqSeries
    mask: ValidityMask
    reasons: np.ndarray
    quality: ValidityMask
    rolling_mean: FreqSeries
    rolling_std: FreqSeries
    qf_std: FreqSeries
    limits: dict = field(default_factory=dict)

    @property
    def kept_fraction(self) -> float:
        return self.mask.uptime


def three_observable_select(s: FreqSeries, cfg: SelectionConfig = SelectionConfig()) -> SelectionResult:
    """Three-step selection on coarse-filtered data.

    1. Coarse filter at ``cfg.coarse_bw`` gives the 0/1 quality factor.
    2. Rolling mean over ``mean_window``: rejects outliers.
    3. Rolling std over ``std_window``: rejects periods of anomalous noise.
    4. Rolling std of the quality factor over ``qf_window``: rejects stretches
       with many coarse rejections.

    Observables are computed on the coarse-filtered data. A sample is kept
    only if it survives the coarse filter and all three observables are
    defined and within their limits. ``reasons`` carries one bit per failed
    step (1 coarse, 2 mean, 4 std, 8 quality factor); samples invalid on input
    are dropped with reason 0.
    """
    if s.n_valid == 0:
        raise ValueError("no valid samples to select from")
    longest = max(cfg.mean_window, cfg.std_window, cfg.qf_window)
    if longest / s.gate > s.n:
        raise ValueError(f"series of {s.n * s.gate:g} s is shorter than the {longest:g} s window")
    if min(cfg.mean_window, cfg.std_window, cfg.qf_window) < s.gate:
        raise ValueError("selection windows must be at least one gate long")

    filtered, quality = coarse_filter(s, cfg.coarse_bw, center=cfg.center)
    rm = rolling_mean(filtered, cfg.mean_window)
    rs = rolling_std(filtered, cfg.std_window)
    q = FreqSeries(quality.bits.astype(float), s.valid, t0=s.t0, gate=s.gate, nu0=1.0)
    qs = rolling_std(q, cfg.qf_window)

    rm_ok = rm.y[rm.valid]
    rm_center = float(np.median(rm_ok)) if rm_ok.size else 0.0
    mean_limit = cfg.mean_limit
    if mean_limit is None:
        mad = float(np.median(np.abs(rm_ok - rm_center))) if rm_ok.size else 0.0
        mean_limit = cfg.mean_k * MAD_TO_SIGMA * mad
    std_limit = cfg.std_limit
    if std_limit is None:
        rs_ok = rs.y[rs.valid]
        std_limit = cfg.std_k * float(np.median(rs_ok)) if rs_ok.size else 0.0

    with np.errstate(invalid="ignore"):
        bad_mean = ~(rm.valid & (np.abs(rm.y - rm_center) <= mean_limit))
        bad_std = ~(rs.valid & (rs.y <= std_limit))
        bad_qf = ~(qs.valid & (qs.y <= cfg.qf_limit))

    reasons = np.zeros(s.n, dtype=np.uint8)
    reasons[s.valid & ~quality.bits] |= REASON_COARSE
    for bad, bit in ((bad_mean, REASON_MEAN), (bad_std, REASON_STD), (bad_qf, REASON_QF)):
        reasons[s.valid & bad] |= bit
    keep = s.valid & (reasons == 0)
    limits = {"mean_center": rm_center, "mean_limit": mean_limit, "std_limit": std_limit,
              "qf_limit": cfg.qf_limit}
    return SelectionResult(
        series=s.with_mask(keep),
        mask=ValidityMask(keep, t0=s.t0, gate=s.gate),
        reasons=reasons,
        quality=quality,
        rolling_mean=rm,
        rolling_std=rs,
        qf_std=qs,
        limits=limits,
    )


@dataclass(frozen=True)
class UptimeReport:
    per_element: tuple[tuple[str, float], ...]
    combined: float
    n_samples: int

    def to_text(self) -> str:
        width = max([len(lbl) for lbl, _ in self.per_element] + [8])
        lines = [f"{lbl.ljust(width)}  {100 * u:8.3f} %" for lbl, u in self.per_element]
        lines.append(f"{'combined'.ljust(width)}  {100 * self.combined:8.3f} %")
        return "\n".join(lines) + "\n"


def uptime(masks: Sequence[tuple[str, ValidityMask | FreqSeries]]) -> UptimeReport:
    """Per-element and combined availability on the common interval of all masks."""
    if not masks:
        raise ValueError("no masks")
    ms = [(lbl, m.mask if isinstance(m, FreqSeries) else m) for lbl, m in masks]
    ref = ms[0][1]
    start, stop = 0, len(ref)
    offsets = []
    for lbl, m in ms:
        if not math.isclose(m.gate, ref.gate, rel_tol=1e-12):
            raise ValueError(f"{lbl}: gate {m.gate} s differs from {ref.gate} s")
        k = sample_offset(ref.t0, m.t0, ref.gate)
        offsets.append(k)
        start, stop = max(start, k), min(stop, k + len(m))
    if stop <= start:
        raise ValueError("masks have no common interval")
    combined = np.ones(stop - start, dtype=bool)
    per = []
    for (lbl, m), k in zip(ms, offsets):
        bits = m.bits[start - k : stop - k]
        per.append((lbl, float(np.count_nonzero(bits)) / bits.size))
        combined &= bits
    return UptimeReport(tuple(per), float(np.count_nonzero(combined)) / combined.size, stop - start)


def uptime_product(fractions: Sequence[float]) -> float:
    """Availability of a chain of independent elements."""
    out = 1.0
    for u in fractions:
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"uptime {u} outside [0, 1]")
        out *= u
    return out


@dataclass(frozen=True)
class BudgetEntry:
    label: str
    bias: float
    uncertainty: float

    def __post_init__(self):
        if not self.uncertainty >= 0:
            raise ValueError(f"{self.label}: uncertainty must be >= 0")


@dataclass(frozen=True)
class UncertaintyBudget:
    entries: tuple[BudgetEntry, ...]
    policy: str = "quadrature"

    def __post_init__(self):
        entries = tuple(e if isinstance(e, BudgetEntry) else BudgetEntry(*e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.policy not in ("quadrature", "conservative_ceiling"):
            raise ValueError(f"unknown policy {self.policy!r}")

    def add(self, label: str, bias: float, uncertainty: float) -> UncertaintyBudget:
        return UncertaintyBudget((*self.entries, BudgetEntry(label, bias, uncertainty)), self.policy)

    @property
    def quadrature(self) -> float:
        return math.hypot(*(e.uncertainty for e in self.entries))


def ceil_one_digit(x: float) -> float:
    """Round ``x >= 0`` up to one significant digit (9.0036e-20 -> 1e-19)."""
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 0.0
    d = Decimal(repr(x))
    exp = d.adjusted()
    q = Decimal(1).scaleb(exp)
    return float((d / q).to_integral_value(rounding=ROUND_CEILING) * q)


def combine_budget(b: UncertaintyBudget) -> tuple[float, float]:
    """Total bias and combined uncertainty.

    Biases add. Uncertainties add in quadrature; the ``conservative_ceiling``
    policy then rounds the result up to one significant digit.
    """
    if not b.entries:
        raise ValueError("empty budget")
    bias = math.fsum(e.bias for e in b.entries)
    u = b.quadrature
    if b.policy == "conservative_ceiling":
        u = ceil_one_digit(u)
    return bias, u


def apply_correction(comparison: FreqSeries, correction: FreqSeries) -> FreqSeries:
    """``comparison - correction`` with validity ANDed."""
    if not comparison.same_timebase(correction):
        raise ValueError("comparison and correction are on different timebases")
    return FreqSeries(comparison.y - correction.y, comparison.valid & correction.valid,
                      t0=comparison.t0, gate=comparison.gate, nu0=comparison.nu0)
