"""Text file formats.

Every file starts with ``#`` header lines naming the tool version, the config
hash and the column schema, followed by tab-separated records:

* series:     ``mjd  y  valid``
* mask:       ``mjd  keep  reason``
* curve:      ``tau_s  adev  mdev  n_terms``
* histogram:  ``left_hz  right_hz  count``

Counter exports (``MJD ch1 ch2 ...``, whitespace separated) are read by
:func:`read_counter`.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from . import __version__
from .constants import NU0_DEFAULT, SECONDS_PER_DAY
from .series import FreqSeries, Histogram, ValidityMask
from .stability import StabilityCurve

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "load_toml",
    "config_hash",
    "header_lines",
    "read_header",
    "write_series",
    "read_series",
    "write_mask",
    "read_mask",
    "write_curve",
    "write_histogram",
    "read_counter",
]


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def config_hash(config: dict, seed: int | None = None) -> str:
    payload = json.dumps({"config": config, "seed": seed}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def header_lines(columns: Iterable[str], config_sha: str = "-", **meta) -> list[str]:
    lines = [f"# fiberlink {__version__}", f"# config_sha256: {config_sha}"]
    for k, v in meta.items():
        lines.append(f"# {k}: {v}")
    lines.append("# columns: " + "\t".join(columns))
    return lines


def read_header(path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, val = line[1:].strip().partition(":")
            if sep:
                meta[key.strip()] = val.strip()
    return meta


def _write(path, header: list[str], body: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(header) + "\n")
        fh.write(body)


def _fmt_mjd(t: np.ndarray) -> list[str]:
    return [f"{v:.12f}" for v in t]


def write_series(path, s: FreqSeries, config_sha: str = "-", **meta) -> None:
    header = header_lines(("mjd", "y", "valid"), config_sha, gate_s=repr(s.gate), nu0_hz=repr(s.nu0), **meta)
    rows = [f"{t}\t{y:.17e}\t{int(v)}" for t, y, v in zip(_fmt_mjd(s.times), s.y, s.valid)]
    _write(path, header, "".join(r + "\n" for r in rows))


def _read_table(path, ncols: int) -> np.ndarray:
    try:
        df = pd.read_csv(path, sep=r"\s+", comment="#", header=None, engine="c",
                         na_values=["nan", "NaN"], dtype=float, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        return np.empty((0, ncols))
    if df.shape[1] != ncols:
        raise ValueError(f"{path}: expected {ncols} columns, found {df.shape[1]}")
    return df.to_numpy()


def _timebase(meta: dict, mjd: np.ndarray, path) -> tuple[float, float]:
    if "gate_s" in meta:
        gate = float(meta["gate_s"])
    elif mjd.size >= 2:
        # span over count, to the millisecond: timestamps carry rounding noise
        gate = round((mjd[-1] - mjd[0]) * SECONDS_PER_DAY / (mjd.size - 1), 3)
    else:
        gate = 1.0
    if mjd.size >= 2:
        expected = mjd[0] + np.arange(mjd.size) * gate / SECONDS_PER_DAY
        if np.max(np.abs(mjd - expected)) * SECONDS_PER_DAY > 1e-3 * gate + 1e-6:
            raise ValueError(f"{path}: samples are not uniformly spaced at {gate} s")
    return (float(mjd[0]) if mjd.size else 0.0), gate


def read_series(path, nu0: float | None = None) -> FreqSeries:
    meta = read_header(path)
    cols = meta.get("columns", "mjd\ty\tvalid").split()
    if cols[:2] != ["mjd", "y"]:
        raise ValueError(f"{path}: not a series file (columns {cols})")
    data = _read_table(path, 3)
    if data.shape[0] == 0:
        raise ValueError(f"{path}: no records")
    t0, gate = _timebase(meta, data[:, 0], path)
    if nu0 is None:
        nu0 = float(meta.get("nu0_hz", NU0_DEFAULT))
    return FreqSeries(data[:, 1], data[:, 2] != 0, t0=t0, gate=gate, nu0=nu0)


def write_mask(path, mask: ValidityMask, reasons=None, config_sha: str = "-", **meta) -> None:
    reasons = np.zeros(len(mask), dtype=int) if reasons is None else np.asarray(reasons, dtype=int)
    header = header_lines(("mjd", "keep", "reason"), config_sha, gate_s=repr(mask.gate), **meta)
    t = mask.t0 + np.arange(len(mask)) * (mask.gate / SECONDS_PER_DAY)
    rows = [f"{a}\t{int(k)}\t{int(r)}" for a, k, r in zip(_fmt_mjd(t), mask.bits, reasons)]
    _write(path, header, "".join(r + "\n" for r in rows))


def read_mask(path) -> ValidityMask:
    """Read a mask file, or the validity column of a series file."""
    meta = read_header(path)
    cols = meta.get("columns", "").split()
    data = _read_table(path, 3)
    if data.shape[0] == 0:
        raise ValueError(f"{path}: no records")
    t0, gate = _timebase(meta, data[:, 0], path)
    if cols[:2] == ["mjd", "keep"]:
        bits = data[:, 1] != 0
    elif cols[:2] == ["mjd", "y"] or not cols:
        bits = data[:, 2] != 0
    else:
        raise ValueError(f"{path}: unknown columns {cols}")
    return ValidityMask(bits, t0=t0, gate=gate)


def _num(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6e}"


def write_curve(path, a: StabilityCurve, m: StabilityCurve | None = None, config_sha: str = "-", **meta) -> None:
    taus = sorted(set(a.taus.tolist()) | (set(m.taus.tolist()) if m is not None else set()))
    av = dict(zip(a.taus.tolist(), a.values.tolist()))
    ac = dict(zip(a.taus.tolist(), a.counts.tolist()))
    mv = dict(zip(m.taus.tolist(), m.values.tolist())) if m is not None else {}
    header = header_lines(("tau_s", "adev", "mdev", "n_terms"), config_sha, **meta)
    rows = [f"{t:.6g}\t{_num(av.get(t))}\t{_num(mv.get(t))}\t{ac.get(t, 0)}" for t in taus]
    _write(path, header, "".join(r + "\n" for r in rows))


def write_histogram(path, h: Histogram, config_sha: str = "-", **meta) -> None:
    header = header_lines(("left_hz", "right_hz", "count"), config_sha, bin_width_hz=repr(h.bin_width), **meta)
    rows = [f"{lo:.9e}\t{hi:.9e}\t{int(c)}" for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts)]
    _write(path, header, "".join(r + "\n" for r in rows))


def read_counter(path, channel: str, nominal: float, nu0: float = NU0_DEFAULT,
                 gate: float | None = None) -> FreqSeries:
    """Read one channel of a dead-time-free counter export.

    The file is whitespace separated with a header line ``MJD ch1 ch2 ...``
    (optionally ``#``-prefixed). Readings are in Hz; the returned series holds
    ``(f - nominal) / nu0``. Missing or non-numeric readings become invalid
    samples; absent timestamps are not allowed (the record must be
    uniformly sampled).
    """
    names = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.lstrip("#").split()
            if tokens and tokens[0].upper() == "MJD":
                names = tokens
                break
    if names is None:
        raise ValueError(f"{path}: no 'MJD ...' header line")
    if channel not in names[1:]:
        raise ValueError(f"{path}: channel {channel!r} not in {names[1:]}")
    df = pd.read_csv(path, sep=r"\s+", comment="#", header=None, names=names, engine="c",
                     float_precision="round_trip")
    df = df[pd.to_numeric(df["MJD"], errors="coerce").notna()]
    mjd = df["MJD"].astype(float).to_numpy()
    f = pd.to_numeric(df[channel], errors="coerce").to_numpy(dtype=float)
    meta = {"gate_s": repr(gate)} if gate else {}
    t0, g = _timebase(meta, mjd, path)
    return FreqSeries((f - nominal) / nu0, np.isfinite(f), t0=t0, gate=g, nu0=nu0)
