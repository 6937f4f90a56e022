"""Seeded synthesis of fractional-frequency link noise.

Power-law noise is produced by spectral shaping of seeded white Gaussian
noise with a real FFT, using the one-sided convention

    S_y(f) = sum_alpha h_alpha * f**alpha,   alpha in {-2, -1, 0, 1, 2}.

The record is synthesised at twice the requested length and truncated, which
keeps the circular wrap-around of red noise out of the returned samples.
Random pieces (power law, slips, gaps) draw from independent child streams
of one ``SeedSequence`` so that enabling one never changes the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .constants import C_LIGHT, GATE_DEFAULT, KAPPA_DEFAULT, NU0_DEFAULT, SECONDS_PER_DAY
from .series import FreqSeries
from .stability import predicted_deviation

__all__ = [
    "NOISE_TYPES",
    "NoiseSpec",
    "ThermalModel",
    "rng_for",
    "power_law_spectrum",
    "gen_power_law",
    "deterministic_y",
    "thermal_phase",
    "thermal_y",
    "thermal_phase_series",
    "inject_cycle_slips",
    "inject_gaps",
    "random_slips",
    "random_gaps",
    "compose",
    "realize",
    "h_for_deviation",
]

NOISE_TYPES = {
    "white_pm": 2,
    "flicker_pm": 1,
    "white_fm": 0,
    "flicker_fm": -1,
    "random_walk_fm": -2,
}

_STREAM_POWER, _STREAM_SLIPS, _STREAM_GAPS = 0, 1, 2


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) pair."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class NoiseSpec:
    """Recipe for one noise realisation.

    ``sinusoids`` holds ``(amplitude_y, period_s, phase_rad)`` triples with
    ``y = amplitude * sin(2*pi*t/period + phase)``. ``gap_model`` is
    ``(rate_per_s, mean_duration_s)``.
    """

    h_coeffs: Mapping[int, float] = field(default_factory=dict)
    drift_rate: float = 0.0
    sinusoids: Sequence[tuple[float, float, float]] = ()
    slip_rate: float = 0.0
    gap_model: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        h = {int(a): float(v) for a, v in dict(self.h_coeffs).items()}
        for a, v in h.items():
            if a not in NOISE_TYPES.values():
                raise ValueError(f"unsupported power-law exponent {a}")
            if v < 0:
                raise ValueError(f"h_{a} must be >= 0")
        sins = tuple((float(a), float(p), float(ph)) for a, p, ph in self.sinusoids)
        if any(p <= 0 for _, p, _ in sins):
            raise ValueError("sinusoid period must be > 0")
        if self.slip_rate < 0:
            raise ValueError("slip_rate must be >= 0")
        rate, dur = (float(v) for v in self.gap_model)
        if rate < 0 or dur < 0:
            raise ValueError("gap rate and duration must be >= 0")
        object.__setattr__(self, "h_coeffs", h)
        object.__setattr__(self, "sinusoids", sins)
        object.__setattr__(self, "gap_model", (rate, dur))

    def psd(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        out = np.zeros_like(f)
        for a, h in self.h_coeffs.items():
            if h:
                with np.errstate(divide="ignore"):
                    out = out + h * f**a
        return out

    def scaled(self, factor: float) -> NoiseSpec:
        """Same spec with every PSD coefficient multiplied by ``factor``."""
        return NoiseSpec({a: h * factor for a, h in self.h_coeffs.items()}, self.drift_rate,
                         self.sinusoids, self.slip_rate, self.gap_model, self.seed)

    @property
    def is_quiet(self) -> bool:
        return (not any(self.h_coeffs.values()) and self.drift_rate == 0
                and not any(a for a, _, _ in self.sinusoids))


@dataclass(frozen=True)
class ThermalModel:
    """Temperature-driven optical path variation of an uncompensated fiber.

    The temperature excursion ``dT(t)`` has peak ``temp_amplitude`` and is
    either a sine ``A*sin(2*pi*t/P + phase)`` or a triangle wave with the same
    peak, period and phase. The accumulated optical phase in cycles is
    ``nu0/c * length * kappa * dT(t)``.
    """

    length: float
    kappa: float = KAPPA_DEFAULT
    temp_amplitude: float = 0.0
    temp_period: float = SECONDS_PER_DAY
    temp_phase: float = 0.0
    nu0: float = NU0_DEFAULT
    waveform: str = "sine"

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be >= 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")
        if not self.temp_period > 0:
            raise ValueError("temp_period must be > 0")
        if self.waveform not in ("sine", "triangle"):
            raise ValueError(f"unknown waveform {self.waveform!r}")

    @classmethod
    def from_amplitude(cls, length: float, amplitude: float, kind: str = "peak", **kw) -> ThermalModel:
        """Build from a temperature amplitude quoted as peak, peak-to-peak or rms."""
        waveform = kw.get("waveform", "sine")
        if kind == "peak":
            peak = amplitude
        elif kind == "peak_to_peak":
            peak = amplitude / 2
        elif kind == "rms":
            peak = amplitude * (math.sqrt(2) if waveform == "sine" else math.sqrt(3))
        else:
            raise ValueError(f"unknown amplitude kind {kind!r}")
        return cls(length=length, temp_amplitude=peak, **kw)

    @property
    def peak_y(self) -> float:
        """Peak fractional frequency excursion."""
        rate = (2 * math.pi if self.waveform == "sine" else 4.0) * self.temp_amplitude / self.temp_period
        return self.length * self.kappa * rate / C_LIGHT


def _triangle(u):
    # unit-peak triangle wave in phase with sin(u)
    return (2 / math.pi) * np.arcsin(np.sin(u))


def thermal_phase(tm: ThermalModel, t) -> np.ndarray:
    """Optical phase excursion in cycles at times ``t`` (s)."""
    u = 2 * math.pi * np.asarray(t, dtype=float) / tm.temp_period + tm.temp_phase
    shape = np.sin(u) if tm.waveform == "sine" else _triangle(u)
    return tm.nu0 / C_LIGHT * tm.length * tm.kappa * tm.temp_amplitude * shape


def thermal_y(tm: ThermalModel, t) -> np.ndarray:
    """Fractional frequency ``(d phase/dt) / nu0`` at times ``t`` (s)."""
    u = 2 * math.pi * np.asarray(t, dtype=float) / tm.temp_period + tm.temp_phase
    if tm.waveform == "sine":
        return tm.peak_y * np.cos(u)
    return tm.peak_y * np.sign(np.cos(u))


def thermal_phase_series(tm: ThermalModel, n: int, gate: float = GATE_DEFAULT, t0: float = 0.0) -> FreqSeries:
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.arange(n) * gate
    return FreqSeries(thermal_y(tm, t), t0=t0, gate=gate, nu0=tm.nu0)


def deterministic_y(spec: NoiseSpec, t) -> np.ndarray:
    """Drift and sinusoidal part of ``spec`` evaluated at times ``t`` (s)."""
    t = np.asarray(t, dtype=float)
    y = spec.drift_rate * t
    for amp, period, phase in spec.sinusoids:
        y = y + amp * np.sin(2 * math.pi * t / period + phase)
    return y


def power_law_spectrum(h_coeffs: Mapping[int, float], n: int, gate: float, rng: np.random.Generator):
    """Shaped real-FFT coefficients of a power-law realisation.

    Returns ``(spectrum, freqs, m)``; ``np.fft.irfft(spectrum, m)[:n]`` is the
    time series.
    """
    m = 2 * n
    freqs = np.fft.rfftfreq(m, d=gate)
    w = rng.standard_normal(m)
    gain = np.zeros(freqs.size)
    with np.errstate(divide="ignore"):
        for a, h in h_coeffs.items():
            if h:
                term = h * freqs[1:] ** a
                gain[1:] += term
                if a == 0:
                    gain[0] += h
    gain = np.sqrt(gain / (2 * gate))
    return np.fft.rfft(w) * gain, freqs, m


def gen_power_law(spec: NoiseSpec, n: int, gate: float = GATE_DEFAULT, t0: float = 0.0,
                  nu0: float = NU0_DEFAULT) -> FreqSeries:
    """Power-law noise plus linear drift.

    For white frequency noise alone the Allan deviation is
    ``sqrt(h0 / (2 tau))``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    y = np.zeros(n)
    if any(spec.h_coeffs.values()):
        spec_c, _, m = power_law_spectrum(spec.h_coeffs, n, gate, rng_for(spec.seed, _STREAM_POWER))
        y = np.fft.irfft(spec_c, m)[:n]
    if spec.drift_rate:
        y = y + spec.drift_rate * np.arange(n) * gate
    return FreqSeries(y, t0=t0, gate=gate, nu0=nu0)


def inject_cycle_slips(s: FreqSeries, slips) -> FreqSeries:
    """Add ``sign`` cycles over one gate at each ``(index, sign)``.

    One cycle in one gate shifts the fractional frequency by
    ``1 / (gate * nu0)``; 5.144e-15 at 1 s and 194.4 THz.
    """
    y = s.y.copy()
    hop = 1.0 / (s.gate * s.nu0)
    for index, sign in slips:
        if not 0 <= index < s.n:
            raise ValueError(f"slip index {index} out of range [0, {s.n})")
        y[index] += sign * hop
    return FreqSeries(y, s.valid, t0=s.t0, gate=s.gate, nu0=s.nu0)


def inject_gaps(s: FreqSeries, gaps) -> FreqSeries:
    """Mark ``(start_index, length)`` ranges invalid. Overlaps act as a union."""
    valid = s.valid.copy()
    for start, length in gaps:
        if length < 0 or start < 0 or start + length > s.n:
            raise ValueError(f"gap ({start}, {length}) outside [0, {s.n})")
        valid[start : start + length] = False
    return FreqSeries(s.y, valid, t0=s.t0, gate=s.gate, nu0=s.nu0)


def random_slips(spec: NoiseSpec, n: int, gate: float = GATE_DEFAULT) -> list[tuple[int, int]]:
    """Poisson slip times with random sign, drawn from ``spec.slip_rate``."""
    if spec.slip_rate == 0:
        return []
    rng = rng_for(spec.seed, _STREAM_SLIPS)
    k = rng.poisson(spec.slip_rate * n * gate)
    idx = np.sort(rng.integers(0, n, size=k))
    sign = rng.choice((-1, 1), size=k)
    return [(int(i), int(sg)) for i, sg in zip(idx, sign)]


def random_gaps(spec: NoiseSpec, n: int, gate: float = GATE_DEFAULT) -> list[tuple[int, int]]:
    """Poisson unlock starts with exponentially distributed durations."""
    rate, mean_dur = spec.gap_model
    if rate == 0 or mean_dur == 0:
        return []
    rng = rng_for(spec.seed, _STREAM_GAPS)
    k = rng.poisson(rate * n * gate)
    starts = np.sort(rng.integers(0, n, size=k))
    lengths = np.maximum(1, np.round(rng.exponential(mean_dur, size=k) / gate)).astype(int)
    return [(int(s), int(min(ln, n - s))) for s, ln in zip(starts, lengths)]


def compose(parts: Sequence[FreqSeries]) -> FreqSeries:
    """Pointwise sum of series on one timebase; validity is the AND."""
    if not parts:
        raise ValueError("nothing to compose")
    first = parts[0]
    y = first.y.copy()
    valid = first.valid.copy()
    for p in parts[1:]:
        if not first.same_timebase(p):
            raise ValueError("cannot compose series on different timebases")
        y += p.y
        valid &= p.valid
    return FreqSeries(y, valid, t0=first.t0, gate=first.gate, nu0=first.nu0)


def realize(spec: NoiseSpec, n: int, gate: float = GATE_DEFAULT, t0: float = 0.0,
            nu0: float = NU0_DEFAULT) -> FreqSeries:
    """Full realisation of ``spec``: power law, drift, sinusoids, slips and gaps."""
    s = gen_power_law(spec, n, gate, t0, nu0)
    if spec.sinusoids:
        y = s.y + deterministic_y(NoiseSpec(sinusoids=spec.sinusoids), s.elapsed)
        s = FreqSeries(y, s.valid, t0=t0, gate=gate, nu0=nu0)
    s = inject_cycle_slips(s, random_slips(spec, n, gate))
    return inject_gaps(s, random_gaps(spec, n, gate))


def h_for_deviation(noise_type: str | int, deviation: float, tau: float = GATE_DEFAULT,
                    gate: float = GATE_DEFAULT) -> float:
    """PSD coefficient that gives the requested expected Allan deviation at ``tau``."""
    a = NOISE_TYPES[noise_type] if isinstance(noise_type, str) else int(noise_type)
    unit = predicted_deviation(lambda f: f**a, [tau], gate)[0]
    return (deviation / unit) ** 2
