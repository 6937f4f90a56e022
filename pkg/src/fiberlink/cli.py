"""``fiberlink`` command line.

Exit status: 0 on success, 1 on I/O or format errors, 2 when a validation
check fails (e.g. a frequency plan exceeds the counter range).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .constants import NU0_DEFAULT
from .link import TwoWayMonitor, check_plan, simulate_end_to_end, two_way_correction
from .postproc import (
    SelectionConfig,
    apply_correction,
    combine_budget,
    simple_select,
    three_observable_select,
    uptime,
    uptime_product,
)
from .scenario import bundled_path, load_budget, load_plan, load_selection, parse_scenario
from .series import histogram, rolling_mean, summary_stats
from .stability import adev, mdev, tau_grid

EXIT_OK, EXIT_IO, EXIT_VIOLATION = 0, 1, 2


class _Style:
    def __init__(self, stream=sys.stdout):
        self.on = stream.isatty() and not os.environ.get("FIBERLINK_NO_COLOR")

    def __call__(self, text: str, code: str) -> str:
        return f"\033[{code}m{text}\033[0m" if self.on else text

    def ok(self, text):
        return self(text, "32")

    def bad(self, text):
        return self(text, "31;1")


def parse_taus(spec: str | None, n: int, gate: float) -> np.ndarray:
    if spec in (None, "", "1-2-5", "125"):
        return tau_grid(n, gate)
    if spec == "octave":
        ms, m = [], 1
        while m <= n // 3:
            ms.append(m)
            m *= 2
        return np.array(ms, dtype=float) * gate
    return np.array(sorted({float(v) for v in spec.split(",") if v.strip()}))


def _config_path(value: str) -> Path:
    p = Path(value)
    if p.exists():
        return p
    if p.suffix == "":
        return bundled_path(value)
    raise FileNotFoundError(value)


def _sha_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_simulate(args) -> int:
    path = _config_path(args.config)
    cfg = fio.load_toml(path)
    sc = parse_scenario(cfg)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    sha = fio.config_hash(cfg, sc.seed)
    res = simulate_end_to_end(sc.topology, sc.specs, sc.n, sc.gate, sc.seed, sc.t0, sc.nu0, sc.segments)
    out = Path(args.out)
    files = {"end_to_end.tsv": res.end_to_end, "remote.tsv": res.remote}
    for name, mon in res.monitors.items():
        files[f"monitor_{name}.tsv"] = mon
    notes = {
        "end_to_end.tsv": "uncorrected fractional frequency at the remote end",
        "remote.tsv": "remote record after subtracting two-way corrections (corrected = comparison - correction)",
    }
    for fname, s in files.items():
        desc = notes.get(fname, "counted round-trip record; y*nu0 is the counted deviation in Hz")
        fio.write_series(out / fname, s, sha, seed=sc.seed, content=desc)
    manifest = {
        "tool": f"fiberlink {__version__}",
        "config": str(path.name),
        "config_sha256": sha,
        "seed": sc.seed,
        "n": sc.n,
        "gate_s": sc.gate,
        "files": {f: _sha_file(out / f) for f in sorted(files)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(files)} series ({sc.n} samples) to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = Path(args.out)
    for f in args.files:
        s = fio.read_series(f, nu0=args.nu0)
        sha = fio.config_hash({"file": Path(f).name, "taus": args.taus, "bin_width": args.bin_width})
        taus = parse_taus(args.taus, s.n, s.gate)
        a = adev(s, taus)
        m = mdev(s, taus[taus <= s.n * s.gate / 3])
        stem = Path(f).stem
        fio.write_curve(out / f"{stem}.curve.tsv", a, m, sha, source=Path(f).name)
        st = summary_stats(s)
        lines = [
            f"file       {Path(f).name}",
            f"samples    {s.n} ({st.count} valid, uptime {100 * s.uptime:.3f} %)",
            f"mean       {st.mean:.4e}  ({st.mean_hz * 1e3:.4f} mHz)",
            f"median     {st.median:.4e}  ({st.median_hz * 1e3:.4f} mHz)",
        ]
        if st.count:
            h = histogram(s, args.bin_width)
            fio.write_histogram(out / f"{stem}.hist.tsv", h, sha, source=Path(f).name)
            lines.append(f"histogram  {len(h.counts)} bins of {args.bin_width * 1e3:g} mHz")
        if s.n * s.gate >= args.rolling:
            rm = rolling_mean(s, args.rolling)
            if rm.n_valid:
                v = rm.y[rm.valid]
                lines.append(f"rolling    {args.rolling:g} s mean in [{v.min():.3e}, {v.max():.3e}]")
        for tau, val in zip(a.taus[:3], a.values[:3]):
            lines.append(f"adev       {val:.3e} at {tau:g} s")
        text = "\n".join(lines) + "\n"
        (out / f"{stem}.summary.txt").write_text(text)
        sys.stdout.write(text)
    return EXIT_OK


def cmd_select(args) -> int:
    s = fio.read_series(args.file, nu0=args.nu0)
    stem = Path(args.file).stem
    out = Path(args.out)
    if args.simple:
        cfg = {"simple": True, "bw": args.bw}
        sel = simple_select(s, args.bw)
        keep, reasons = sel.valid, np.where(s.valid & ~sel.valid, 1, 0)
    else:
        cfg_obj = load_selection(args.config) if args.config else SelectionConfig()
        cfg = cfg_obj.__dict__
        res = three_observable_select(s, cfg_obj)
        sel, keep, reasons = res.series, res.mask.bits, res.reasons
    sha = fio.config_hash(cfg)
    fio.write_series(out / f"{stem}.selected.tsv", sel, sha, source=Path(args.file).name)
    fio.write_mask(out / f"{stem}.mask.tsv", sel.mask, reasons, sha,
                   reason_bits="1=coarse 2=mean 4=std 8=qf", source=Path(args.file).name)
    kept = np.count_nonzero(keep)
    print(f"kept {kept}/{s.n_valid} valid samples ({100 * kept / max(1, s.n_valid):.3f} %)")
    return EXIT_OK


def cmd_uptime(args) -> int:
    if args.fractions:
        u = uptime_product(args.fractions)
        text = f"product of {len(args.fractions)} uptimes: {100 * u:.4f} %\n"
    else:
        if not args.files:
            raise ValueError("give mask/series files or --fractions")
        labels = args.labels.split(",") if args.labels else [Path(f).stem for f in args.files]
        if len(labels) != len(args.files):
            raise ValueError("one label per file")
        rep = uptime([(lbl, fio.read_mask(f)) for lbl, f in zip(labels, args.files)])
        text = rep.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "uptime.txt").write_text(text)
    return EXIT_OK


def cmd_budget(args) -> int:
    b = load_budget(args.config)
    bias, u = combine_budget(b)
    width = max(len(e.label) for e in b.entries)
    lines = [f"{e.label.ljust(width)}  bias {e.bias:+.2e}  u {e.uncertainty:.2e}" for e in b.entries]
    lines += [
        f"total bias         {bias:+.3e}",
        f"quadrature         {b.quadrature:.4e}",
        f"combined ({b.policy})  {u:.3e}",
    ]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "budget.txt").write_text(text)
    return EXIT_OK


def cmd_plan(args) -> int:
    rep = check_plan(load_plan(args.config))
    style = _Style()
    text = rep.to_text()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "plan.txt").write_text(text)
    body, last = text.rstrip("\n").rsplit("\n", 1)
    print(body)
    print(style.ok(last) if rep.ok else style.bad(last))
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_ingest(args) -> int:
    s = fio.read_counter(args.file, args.channel, args.nominal, nu0=args.nu0, gate=args.gate)
    sha = fio.config_hash({"channel": args.channel, "nominal": args.nominal, "nu0": args.nu0})
    fio.write_series(args.out, s, sha, source=Path(args.file).name, channel=args.channel)
    print(f"{s.n} samples ({s.n_valid} valid) from channel {args.channel}")
    return EXIT_OK


def cmd_correct(args) -> int:
    comp = fio.read_series(args.comparison)
    mon_series = fio.read_series(args.monitor)
    mon = TwoWayMonitor(divide_by=args.divide_by, gate=comp.gate, nu0=comp.nu0)
    corr = two_way_correction(mon_series, mon)
    out = apply_correction(comp, corr)
    sha = fio.config_hash({"divide_by": args.divide_by})
    fio.write_series(args.out, out, sha, source=Path(args.comparison).name, monitor=Path(args.monitor).name)
    print(f"corrected {out.n} samples ({out.n_valid} valid)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fiberlink", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fiberlink {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("simulate", help="simulate a scenario")
    q.add_argument("--config", required=True, help="scenario file or bundled scenario name")
    q.add_argument("--seed", type=int)
    q.add_argument("--out", default="out")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("analyze", help="stability, histogram and summary of series files")
    q.add_argument("files", nargs="+")
    q.add_argument("--taus", help="'1-2-5' (default), 'octave' or comma list in seconds")
    q.add_argument("--bin-width", type=float, default=0.045, help="histogram bin in Hz")
    q.add_argument("--rolling", type=float, default=3600.0, help="rolling-mean window in s")
    q.add_argument("--nu0", type=float)
    q.add_argument("--out", default="out")
    q.set_defaults(func=cmd_analyze)

    q = sub.add_parser("select", help="data selection")
    q.add_argument("file")
    q.add_argument("--config", help="selection parameters (TOML)")
    q.add_argument("--simple", action="store_true", help="bandwidth filter plus outlier removal")
    q.add_argument("--bw", type=float, default=1.0, help="bandwidth for --simple, Hz")
    q.add_argument("--nu0", type=float)
    q.add_argument("--out", default="out")
    q.set_defaults(func=cmd_select)

    q = sub.add_parser("uptime", help="per-element and combined uptime")
    q.add_argument("files", nargs="*")
    q.add_argument("--labels")
    q.add_argument("--fractions", type=float, nargs="+")
    q.add_argument("--out")
    q.set_defaults(func=cmd_uptime)

    q = sub.add_parser("budget", help="combine an uncertainty budget")
    q.add_argument("--config", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_budget)

    q = sub.add_parser("plan", help="check a frequency plan")
    q.add_argument("--config", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_plan)

    q = sub.add_parser("ingest", help="convert a counter export to a series file")
    q.add_argument("file")
    q.add_argument("--channel", required=True)
    q.add_argument("--nominal", type=float, required=True, help="nominal channel frequency, Hz")
    q.add_argument("--nu0", type=float, default=NU0_DEFAULT)
    q.add_argument("--gate", type=float)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_ingest)

    q = sub.add_parser("correct", help="subtract the two-way correction from comparison data")
    q.add_argument("comparison")
    q.add_argument("monitor")
    q.add_argument("--divide-by", type=int, default=74)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_correct)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"fiberlink {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
