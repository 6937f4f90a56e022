"""TOML scenario, topology, plan, budget and selection files.

Scenario schema (units as in the data types)::

    [run]
    n = 1036800            # samples
    gate = 1.0             # s
    t0 = 57900.0           # MJD of first sample
    seed = 2017
    nu0 = 194.4e12         # Hz
    segments = 16          # fiber discretisation for delay effects

    [[spans]]              # long-haul spans
    name = "hybrid"
    length_km = 43
    loss_db_per_km = 0.372
    compensation = "hybrid"          # active | passive | hybrid | none
    [spans.noise]                    # NoiseSpec
    h = { white_fm = 9.2e-26 }       # PSD coefficients by noise type ...
    adev = { white_pm = 2.3e-16 }    # ... or Allan deviation at one gate
    drift_rate = 0.0                 # 1/s
    sinusoids = [[1e-18, 86400.0, 0.0]]   # (amplitude_y, period_s, phase_rad)
    slip_rate = 0.0                  # 1/s
    gaps = { rate = 0.0, mean_duration = 0.0 }
    seed = 1
    [spans.thermal]                  # ThermalModel, optional
    length = 1.0
    kappa = 1.1e-5
    amplitude = 0.5
    amplitude_kind = "peak_to_peak"  # peak | peak_to_peak | rms
    period = 86400.0
    phase = 0.0
    waveform = "sine"                # sine | triangle

    [[stations]]
    name = "RLS2"
    aom_offset = 37e6
    pll_offset = 0.0
    interferometer_imbalance = 0.15
    [stations.thermal]               # temperature seen by the imbalance

    [[short_links]]                  # two-way monitored interconnects
    name = "interconnect"
    fiber_length = 5.0
    carrier_rf = 74e6
    divide_by = 74
    [short_links.noise] ...
    [short_links.thermal] ...        # length defaults to fiber_length
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .constants import GATE_DEFAULT, KAPPA_DEFAULT, NU0_DEFAULT, SECONDS_PER_DAY
from .io import load_toml
from .link import ComponentNoise, FrequencyPlan, LinkTopology, PlanStage, RepeaterStation, Span, TwoWayMonitor
from .noise import NOISE_TYPES, NoiseSpec, ThermalModel, h_for_deviation
from .postproc import BudgetEntry, SelectionConfig, UncertaintyBudget

__all__ = [
    "Scenario",
    "bundled_scenarios",
    "bundled_path",
    "load_scenario",
    "parse_scenario",
    "parse_noise",
    "parse_thermal",
    "load_plan",
    "load_budget",
    "load_selection",
]


@dataclass(frozen=True)
class Scenario:
    topology: LinkTopology
    specs: dict[str, ComponentNoise]
    n: int
    gate: float = GATE_DEFAULT
    t0: float = 0.0
    seed: int = 0
    nu0: float = NU0_DEFAULT
    segments: int = 16
    raw: dict | None = None


def bundled_scenarios() -> list[str]:
    root = resources.files("fiberlink") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_path(name: str) -> Path:
    p = resources.files("fiberlink") / "scenarios" / f"{name}.toml"
    if not p.is_file():
        raise FileNotFoundError(f"no bundled scenario {name!r}; have {bundled_scenarios()}")
    return Path(str(p))


def _noise_key(k: str) -> int:
    if k in NOISE_TYPES:
        return NOISE_TYPES[k]
    try:
        return int(k)
    except ValueError:
        raise ValueError(f"unknown noise type {k!r}") from None


def parse_noise(d: dict | None, gate: float = GATE_DEFAULT) -> NoiseSpec:
    d = dict(d or {})
    h = {_noise_key(k): float(v) for k, v in d.pop("h", {}).items()}
    for k, dev in d.pop("adev", {}).items():
        a = _noise_key(k)
        h[a] = h.get(a, 0.0) + h_for_deviation(a, float(dev), gate, gate)
    gaps = d.pop("gaps", {})
    spec = NoiseSpec(
        h_coeffs=h,
        drift_rate=float(d.pop("drift_rate", 0.0)),
        sinusoids=[tuple(x) for x in d.pop("sinusoids", [])],
        slip_rate=float(d.pop("slip_rate", 0.0)),
        gap_model=(float(gaps.get("rate", 0.0)), float(gaps.get("mean_duration", 0.0))),
        seed=int(d.pop("seed", 0)),
    )
    if d:
        raise ValueError(f"unknown noise keys: {sorted(d)}")
    return spec


def parse_thermal(d: dict | None, default_length: float | None = None, nu0: float = NU0_DEFAULT):
    if d is None:
        return None
    d = dict(d)
    length = float(d.pop("length", default_length if default_length is not None else 0.0))
    tm = ThermalModel.from_amplitude(
        length,
        float(d.pop("amplitude", 0.0)),
        d.pop("amplitude_kind", "peak"),
        kappa=float(d.pop("kappa", KAPPA_DEFAULT)),
        temp_period=float(d.pop("period", SECONDS_PER_DAY)),
        temp_phase=float(d.pop("phase", 0.0)),
        nu0=nu0,
        waveform=d.pop("waveform", "sine"),
    )
    if d:
        raise ValueError(f"unknown thermal keys: {sorted(d)}")
    return tm


def parse_scenario(cfg: dict) -> Scenario:
    run = dict(cfg.get("run", {}))
    gate = float(run.get("gate", GATE_DEFAULT))
    nu0 = float(run.get("nu0", NU0_DEFAULT))
    if "n" in run:
        n = int(run["n"])
    elif "days" in run:
        n = int(round(float(run["days"]) * SECONDS_PER_DAY / gate))
    else:
        raise ValueError("[run] needs n or days")

    spans, stations, monitors, specs = [], [], [], {}
    for d in cfg.get("spans", []):
        d = dict(d)
        noise, thermal = d.pop("noise", None), d.pop("thermal", None)
        span = Span(**d)
        spans.append(span)
        specs[span.name] = ComponentNoise(parse_noise(noise, gate), parse_thermal(thermal, None, nu0))
    for d in cfg.get("stations", []):
        d = dict(d)
        thermal = d.pop("thermal", None)
        st = RepeaterStation(**d)
        stations.append(st)
        if thermal is not None:
            specs[st.name] = ComponentNoise(NoiseSpec(), parse_thermal(thermal, st.interferometer_imbalance, nu0))
    for d in cfg.get("short_links", []):
        d = dict(d)
        noise, thermal = d.pop("noise", None), d.pop("thermal", None)
        mon = TwoWayMonitor(gate=gate, nu0=nu0, **d)
        monitors.append(mon)
        specs[mon.name] = ComponentNoise(parse_noise(noise, gate), parse_thermal(thermal, mon.fiber_length, nu0))

    return Scenario(
        topology=LinkTopology(tuple(spans), tuple(stations), tuple(monitors)),
        specs=specs,
        n=n,
        gate=gate,
        t0=float(run.get("t0", 0.0)),
        seed=int(run.get("seed", 0)),
        nu0=nu0,
        segments=int(run.get("segments", 16)),
        raw=cfg,
    )


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if not p.exists() and p.suffix == "":
        p = bundled_path(str(path_or_name))
    return parse_scenario(load_toml(p))


def load_plan(path) -> FrequencyPlan:
    cfg = load_toml(path)
    plan = cfg.get("plan", cfg)
    return FrequencyPlan(
        stages=tuple(PlanStage(**st) for st in plan.get("stages", [])),
        counter_max=float(plan.get("counter_max", 55e6)),
        filter_bands=tuple(tuple(b) for b in plan.get("filter_bands", [])),
    )


def load_budget(path) -> UncertaintyBudget:
    cfg = load_toml(path)
    b = cfg.get("budget", cfg)
    entries = tuple(BudgetEntry(e["label"], float(e.get("bias", 0.0)), float(e["uncertainty"]))
                    for e in b.get("entries", []))
    return UncertaintyBudget(entries, b.get("policy", "quadrature"))


def load_selection(path) -> SelectionConfig:
    cfg = load_toml(path)
    return SelectionConfig(**cfg.get("selection", cfg))
