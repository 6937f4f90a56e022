"""Link topology and the physics of the two-branch arrangement.

The short interconnect between the two repeater stations is not servoed: a
Faraday mirror sends the light back, the round trip is detected at twice the
AOM frequency, tracked, divided and counted. Half of the counted round trip is
the one-way correction that post-processing subtracts from the comparison
data (``corrected = comparison - correction``). Reciprocity is assumed.

Fiber noise is modelled as distributed along the fiber. A disturbance at
distance ``z`` from the launch end reaches the far end after ``(L - z)/v``
and enters the round trip twice, so the one-way error left after the
correction is the difference of the two arrival times. For uniformly
distributed noise this leaves ``(2 pi f tau_d)**2 / 3`` of the free-running
phase noise, the same delay-limited residual as for a servoed link. Servoed
spans are modelled by that residual only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .constants import C_LIGHT, COUNTER_MAX_HZ, GATE_DEFAULT, N_GROUP, NU0_DEFAULT
from .noise import (
    NoiseSpec,
    ThermalModel,
    deterministic_y,
    inject_cycle_slips,
    inject_gaps,
    power_law_spectrum,
    random_gaps,
    random_slips,
    rng_for,
    thermal_y,
)
from .postproc import apply_correction
from .series import FreqSeries
from .stability import StabilityCurve, predicted_deviation, sinusoid_fm_adev, tau_grid

__all__ = [
    "COMPENSATION_KINDS",
    "Span",
    "RepeaterStation",
    "TwoWayMonitor",
    "LinkTopology",
    "PlanStage",
    "FrequencyPlan",
    "PlanRow",
    "PlanReport",
    "ComponentNoise",
    "SimulationResult",
    "fiber_delay",
    "delay_suppression",
    "two_way_correction",
    "residual_floor",
    "uncompensated_thermal_limit",
    "loss_budget",
    "check_plan",
    "station_plan",
    "rf_reference_contribution",
    "desync_error",
    "simulate_end_to_end",
]

COMPENSATION_KINDS = ("active", "passive", "hybrid", "none")


@dataclass(frozen=True)
class Span:
    name: str
    length_km: float
    loss_db_per_km: float = 0.0
    compensation: str = "active"

    def __post_init__(self):
        if not self.length_km > 0:
            raise ValueError(f"span {self.name}: length must be > 0")
        if self.loss_db_per_km < 0:
            raise ValueError(f"span {self.name}: loss must be >= 0")
        if self.compensation not in COMPENSATION_KINDS:
            raise ValueError(f"span {self.name}: unknown compensation {self.compensation!r}")

    @property
    def length_m(self) -> float:
        return self.length_km * 1e3


@dataclass(frozen=True)
class RepeaterStation:
    name: str
    aom_offset: float = 37e6
    pll_offset: float = 0.0
    interferometer_imbalance: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.aom_offset) and math.isfinite(self.pll_offset)):
            raise ValueError(f"station {self.name}: offsets must be finite")
        if self.interferometer_imbalance < 0:
            raise ValueError(f"station {self.name}: imbalance must be >= 0")


@dataclass(frozen=True)
class TwoWayMonitor:
    name: str = "interconnect"
    fiber_length: float = 5.0
    carrier_rf: float = 74e6
    divide_by: int = 74
    gate: float = GATE_DEFAULT
    nu0: float = NU0_DEFAULT

    def __post_init__(self):
        if self.divide_by < 1:
            raise ValueError("divide_by must be >= 1")
        if not self.fiber_length > 0:
            raise ValueError("fiber_length must be > 0")

    @property
    def delay(self) -> float:
        return fiber_delay(self.fiber_length)

    @property
    def counted_frequency(self) -> float:
        return self.carrier_rf / self.divide_by


@dataclass(frozen=True)
class LinkTopology:
    spans: tuple[Span, ...] = ()
    stations: tuple[RepeaterStation, ...] = ()
    short_links: tuple[TwoWayMonitor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "short_links", tuple(self.short_links))
        names = [c.name for c in (*self.spans, *self.stations, *self.short_links)]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate component names: {sorted(dup)}")
        if self.stations:
            aoms = [st.aom_offset for st in self.stations]
            for mon in self.short_links:
                if not any(math.isclose(mon.carrier_rf, 2 * a, rel_tol=1e-9) for a in aoms):
                    raise ValueError(
                        f"monitor {mon.name}: carrier {mon.carrier_rf:g} Hz is not twice any station AOM offset"
                    )


def fiber_delay(length_m: float, n_group: float = N_GROUP) -> float:
    """One-way propagation delay of ``length_m`` metres of fiber."""
    return n_group * length_m / C_LIGHT


def delay_suppression(f, delay: float) -> np.ndarray:
    """Fraction of free-running phase noise left after reciprocal correction."""
    return (2 * math.pi * np.asarray(f, dtype=float) * delay) ** 2 / 3


def two_way_correction(counted: FreqSeries, mon: TwoWayMonitor) -> FreqSeries:
    """One-way fractional correction from the counted round-trip record.

    ``counted.y * counted.nu0`` must be the deviation in Hz of the divided,
    tracked beat from its nominal value. The optical round-trip deviation is
    ``divide_by`` times larger and half of it is accumulated one way.
    """
    dev_hz = counted.y * counted.nu0
    y = mon.divide_by * dev_hz / (2 * mon.nu0)
    return FreqSeries(y, counted.valid, t0=counted.t0, gate=counted.gate, nu0=mon.nu0)


def residual_floor(free_running, delay: float, taus=None, gate: float | None = None,
                   fourier: str = "bandwidth") -> StabilityCurve:
    """Stability left after a delay-limited reciprocal correction.

    Parameters
    ----------
    free_running : StabilityCurve or NoiseSpec
        Free-running one-way stability or its noise recipe.
    delay : float
        One-way fiber delay in seconds.
    taus : sequence of float, optional
        Averaging times for a NoiseSpec input (defaults to a 1-2-5 grid up to
        1e5 s). Ignored for curves.
    gate : float, optional
        Sampling time. For curves defaults to the smallest tau.
    fourier : {"bandwidth", "inverse_tau"}
        Curve input only. ``"bandwidth"`` applies the suppression at the
        Nyquist frequency ``1/(2 gate)``, the largest it reaches in the record,
        which bounds the residual at every tau. ``"inverse_tau"`` evaluates it
        at ``f = 1/tau``, a quicker and less conservative estimate.

    Returns
    -------
    StabilityCurve
        For a NoiseSpec, the expected Allan deviation of the residual computed
        from its spectrum; for a curve, the free-running values scaled by the
        square root of the suppression.
    """
    if delay < 0:
        raise ValueError("delay must be >= 0")
    if isinstance(free_running, NoiseSpec):
        gate = GATE_DEFAULT if gate is None else gate
        taus = tau_grid(int(3e5 / gate), gate) if taus is None else np.asarray(taus, dtype=float)
        vals = predicted_deviation(lambda f: free_running.psd(f) * delay_suppression(f, delay), taus, gate)
        return StabilityCurve(taus, vals, np.ones(len(taus), dtype=np.int64), "adev")
    curve: StabilityCurve = free_running
    if gate is None:
        gate = float(curve.taus[0])
    if fourier == "bandwidth":
        f = np.full(curve.taus.shape, 0.5 / gate)
    elif fourier == "inverse_tau":
        f = 1.0 / curve.taus
    else:
        raise ValueError(f"unknown fourier mapping {fourier!r}")
    vals = curve.values * np.sqrt(delay_suppression(f, delay))
    return StabilityCurve(curve.taus, vals, curve.counts, curve.kind)


def uncompensated_thermal_limit(tm: ThermalModel, tau, envelope: bool = True):
    """Allan deviation limit set by an uncompensated, temperature-cycled fiber.

    The temperature swing is treated as a sinusoidal frequency modulation of
    peak ``tm.peak_y``. With ``envelope`` (default) the result is the least
    non-increasing bound of that Allan deviation, ``max over tau' >= tau``,
    which is what limits averaging beyond ``tau``: it fills the zeros the bare
    expression has at multiples of the period. ``envelope=False`` returns the
    bare expression.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be > 0")
    y0 = tm.peak_y
    f_m = 1.0 / tm.temp_period
    if y0 == 0:
        return np.zeros_like(tau)[()] if tau.ndim == 0 else np.zeros_like(tau)
    if not envelope:
        return sinusoid_fm_adev(y0, f_m, tau)
    # sin(x)^2/x peaks where tan x = 2x: once in the main lobe, then once
    # per later lobe; beyond the main lobe max(tau'>=tau) is the next peak
    # at or after x, or x itself while the curve is still rising.
    x = np.pi * f_m * np.atleast_1d(tau)
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        k = math.floor(xi / math.pi)
        peak = _lobe_peak(k)
        if xi <= peak:
            out[i] = math.sin(peak) ** 2 / peak
        else:
            here = math.sin(xi) ** 2 / xi
            nxt = _lobe_peak(k + 1)
            out[i] = max(here, math.sin(nxt) ** 2 / nxt)
    out *= abs(y0)
    return out[0] if tau.ndim == 0 else out


def _lobe_peak(k: int) -> float:
    """Abscissa of the maximum of sin(x)^2/x in (k*pi, (k+1)*pi)."""
    x = k * math.pi + math.pi / 2 if k else 1.1656
    for _ in range(50):  # Newton on g(x) = sin(2x) * x - sin(x)^2
        g = math.sin(2 * x) * x - math.sin(x) ** 2
        dg = 2 * math.cos(2 * x) * x
        step = g / dg
        x -= step
        if abs(step) < 1e-15:
            break
    return x


def loss_budget(spans: Sequence[Span]) -> dict[str, float]:
    """Total loss and length-weighted mean loss per km."""
    if not spans:
        raise ValueError("no spans")
    total = sum(s.length_km * s.loss_db_per_km for s in spans)
    length = sum(s.length_km for s in spans)
    return {"total_db": total, "db_per_km": total / length, "length_km": length}


@dataclass(frozen=True)
class PlanStage:
    """One element of the frequency chain.

    ``offset_hz`` is applied ``passes`` times (2 for a double-passed AOM).
    When ``detect`` is set, the light is beaten against ``reference_hz`` and
    the beat is divided by ``divide`` before counting.
    """

    label: str
    offset_hz: float = 0.0
    passes: int = 1
    detect: bool = False
    divide: int = 1
    reference_hz: float = 0.0


@dataclass(frozen=True)
class FrequencyPlan:
    stages: tuple[PlanStage, ...]
    counter_max: float = COUNTER_MAX_HZ
    filter_bands: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.counter_max > 0:
            raise ValueError("counter_max must be > 0")
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "filter_bands", tuple((float(a), float(b)) for a, b in self.filter_bands))


@dataclass(frozen=True)
class PlanRow:
    label: str
    cumulative_hz: float
    beat_hz: float | None
    counted_hz: float | None
    violations: tuple[str, ...]


@dataclass(frozen=True)
class PlanReport:
    rows: tuple[PlanRow, ...]
    counter_max: float

    @property
    def ok(self) -> bool:
        return not any(r.violations for r in self.rows)

    @property
    def violations(self) -> list[tuple[str, str]]:
        return [(r.label, v) for r in self.rows for v in r.violations]

    @property
    def counted(self) -> dict[str, float]:
        return {r.label: r.counted_hz for r in self.rows if r.counted_hz is not None}

    def to_text(self) -> str:
        def mhz(v):
            return "-" if v is None else f"{v / 1e6:.6f}"

        header = ("stage", "cumulative_MHz", "beat_MHz", "counted_MHz", "status")
        body = [
            (r.label, mhz(r.cumulative_hz), mhz(r.beat_hz), mhz(r.counted_hz),
             "; ".join(r.violations) if r.violations else "ok")
            for r in self.rows
        ]
        widths = [max(len(str(row[i])) for row in (header, *body)) for i in range(len(header))]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in (header, *body)]
        lines.append(f"counter limit {self.counter_max / 1e6:g} MHz: {'PASS' if self.ok else 'VIOLATION'}")
        return "\n".join(lines) + "\n"


def check_plan(plan: FrequencyPlan) -> PlanReport:
    """Walk the frequency chain and flag beats the hardware cannot handle.

    Violations are reported, never raised: a counted frequency above
    ``counter_max`` or a detected beat outside every filter band.
    """
    rows = []
    cum = 0.0
    for st in plan.stages:
        cum += st.offset_hz * st.passes
        beat = counted = None
        problems = []
        if st.detect:
            beat = abs(cum - st.reference_hz)
            counted = beat / st.divide
            if counted > plan.counter_max:
                problems.append(f"counted {counted / 1e6:g} MHz > counter max {plan.counter_max / 1e6:g} MHz")
            if plan.filter_bands and not any(lo <= beat <= hi for lo, hi in plan.filter_bands):
                problems.append(f"beat {beat / 1e6:g} MHz outside filter bands")
        rows.append(PlanRow(st.label, cum, beat, counted, tuple(problems)))
    return PlanReport(tuple(rows), plan.counter_max)


def station_plan(station: RepeaterStation, mon: TwoWayMonitor) -> FrequencyPlan:
    """Frequency chain of the two-way monitor behind ``station``."""
    return FrequencyPlan(stages=(
        PlanStage(f"{station.name} AOM (double pass)", station.aom_offset, passes=2),
        PlanStage(f"{mon.name} round-trip beat", 0.0, detect=True, divide=mon.divide_by),
    ))


def rf_reference_contribution(beat: float, sigma_rf: float, nu0: float = NU0_DEFAULT) -> float:
    """Fractional error imprinted by counting ``beat`` against an RF reference
    of fractional instability ``sigma_rf``."""
    if beat < 0 or sigma_rf < 0 or nu0 <= 0:
        raise ValueError("beat and sigma_rf must be >= 0, nu0 > 0")
    return beat * sigma_rf / nu0


def desync_error(drift: float, dt: float, nu0: float = NU0_DEFAULT) -> float:
    """Fractional error from a laser drift seen by two measurements ``dt`` apart."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return drift * dt / nu0


@dataclass(frozen=True)
class ComponentNoise:
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    thermal: ThermalModel | None = None


@dataclass(frozen=True, eq=False)
class SimulationResult:
    remote: FreqSeries
    end_to_end: FreqSeries
    monitor: FreqSeries | None
    monitors: dict[str, FreqSeries]
    corrections: dict[str, FreqSeries]


def _segment_delays(length_m: float, segments: int) -> np.ndarray:
    z = (np.arange(segments) + 0.5) / segments * length_m
    return fiber_delay(length_m - z)


def _distributed(comp: ComponentNoise, length_m: float, n: int, gate: float, seed: int,
                 index: int, segments: int):
    """One-way, correction and residual series for a distributed fiber noise."""
    delays = _segment_delays(length_m, segments)
    t = np.arange(n) * gate
    one_way = np.zeros(n)
    corr = np.zeros(n)
    resid = np.zeros(n)
    spec = comp.noise
    if any(spec.h_coeffs.values()):
        h_seg = {a: h / segments for a, h in spec.h_coeffs.items()}
        acc_ow = acc_c = acc_r = None
        for k, d in enumerate(delays):
            Y, f, m = power_law_spectrum(h_seg, n, gate, rng_for(seed, spec.seed, index, k))
            w = 2 * np.pi * f * d
            ow, c, r = Y * np.exp(-1j * w), Y * np.cos(w), Y * (-1j * np.sin(w))
            if acc_ow is None:
                acc_ow, acc_c, acc_r = ow, c, r
            else:
                acc_ow += ow
                acc_c += c
                acc_r += r
        one_way += np.fft.irfft(acc_ow, m)[:n]
        corr += np.fft.irfft(acc_c, m)[:n]
        resid += np.fft.irfft(acc_r, m)[:n]

    def det(tt):
        v = deterministic_y(spec, tt)
        if comp.thermal is not None:
            v = v + thermal_y(comp.thermal, tt)
        return v

    if not spec.is_quiet or comp.thermal is not None:
        for d in delays:
            early, late = det(t - d), det(t + d)
            one_way += early / segments
            corr += 0.5 * (early + late) / segments
            resid += 0.5 * (early - late) / segments
    return one_way, corr, resid


def simulate_end_to_end(topo: LinkTopology, specs: Mapping[str, ComponentNoise], n: int,
                        gate: float = GATE_DEFAULT, seed: int = 0, t0: float = 0.0,
                        nu0: float = NU0_DEFAULT, segments: int = 16) -> SimulationResult:
    """Simulate the delivered signal, its two-way monitors and the corrected record.

    Every span and short link must have an entry in ``specs``; stations may.
    Servoed spans (active, passive, hybrid) contribute their delay-limited
    residual; ``none`` spans and short links contribute their full noise.
    Cycle slips and unlocks of a span are applied to its contribution; those
    of a short link to its counted monitor record.

    Returns
    -------
    SimulationResult
        ``end_to_end`` is the uncorrected fractional frequency error at the
        remote end, ``monitors`` the counted round-trip records (``y * nu0``
        is the counted deviation in Hz) and ``remote`` the record after
        subtracting every two-way correction.
    """
    required = {c.name for c in (*topo.spans, *topo.short_links)}
    known = required | {st.name for st in topo.stations}
    missing = required - set(specs)
    extra = set(specs) - known
    if missing or extra:
        raise ValueError(f"spec/topology mismatch: missing {sorted(missing)}, unknown {sorted(extra)}")
    if n < 2:
        raise ValueError("n must be >= 2")

    def series(y, valid=None):
        return FreqSeries(y, valid, t0=t0, gate=gate, nu0=nu0)

    y_e2e = np.zeros(n)
    valid = np.ones(n, dtype=bool)
    for index, span in enumerate(topo.spans):
        comp = specs[span.name]
        one_way, _, resid = _distributed(comp, span.length_m, n, gate, seed, index, segments)
        part = series(one_way if span.compensation == "none" else resid)
        part = inject_gaps(inject_cycle_slips(part, random_slips(comp.noise, n, gate)),
                           random_gaps(comp.noise, n, gate))
        y_e2e += np.where(part.valid, part.y, 0.0)
        valid &= part.valid

    for st in topo.stations:
        comp = specs.get(st.name)
        if comp is None or comp.thermal is None or st.interferometer_imbalance == 0:
            continue
        tm = ThermalModel(st.interferometer_imbalance, comp.thermal.kappa, comp.thermal.temp_amplitude,
                          comp.thermal.temp_period, comp.thermal.temp_phase, nu0, comp.thermal.waveform)
        y_e2e += thermal_y(tm, np.arange(n) * gate)

    monitors, corrections = {}, {}
    base = len(topo.spans)
    for j, mon in enumerate(topo.short_links):
        comp = specs[mon.name]
        one_way, corr, _ = _distributed(comp, mon.fiber_length, n, gate, seed, base + j, segments)
        y_e2e += one_way
        # counted deviation in Hz is 2 nu0 corr / divide_by; store it as y * nu0
        counted = series(2.0 * corr / mon.divide_by)
        counted = inject_cycle_slips(counted, random_slips(comp.noise, n, gate))
        counted = inject_gaps(counted, random_gaps(comp.noise, n, gate))
        monitors[mon.name] = counted
        corrections[mon.name] = two_way_correction(counted, mon)

    end_to_end = series(y_e2e, valid)
    remote = end_to_end
    for c in corrections.values():
        remote = apply_correction(remote, c)
    first = next(iter(monitors.values()), None)
    return SimulationResult(remote, end_to_end, first, monitors, corrections)
