"""Command-line front end: ``gconv <subcommand> [--config FILE] [flags]``.

A config file is a JSON object with flat dotted keys (see CONFIG_KEYS);
flags given on the command line override the file.  Every output embeds the
config hash and seed.  Exit codes: 0 ok, 2 config/spec, 3 truncation/guard,
4 convention calibration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, statelib
from .channel import GaussianChannel, fidelity_after_map, fidelity_grid, get_family
from .errors import GconvError, InvalidInputError
from .fock import mean_photon_number
from .optim import PsoConfig, optimize_conversion, sweep, write_summary_csv
from .phasespace import (
    NEGATIVITY_GRID,
    SUPPORT_TOL,
    WIGNER_SUPPORT_TOL,
    PhaseGrid,
    char_fn,
    default_grid,
    match_triplicity,
    radial_cut,
    to_binary,
    to_csv,
    wigner_from_char,
    wigner_log_negativity,
)

OUTPUT_ROOT_ENV = "GCONV_OUTPUT_ROOT"
KINDS = ("state", "fidelity", "convert", "sweep", "negativity-match", "wigner")

# key -> (type, default); lists are JSON arrays
CONFIG_KEYS = {
    "kind": (str, None),
    "spec": (str, None),
    "input": (str, None),
    "target": (str, None),
    "inputs": (list, []),
    "targets": (list, []),
    "family": (str, "full_cptp"),
    "channel": (str, "identity"),
    "dim": (int, statelib.DEFAULT_DIM),
    "seed": (int, 0),
    "threads": (int, 1),
    "out_dir": (str, None),
    "grid.half_extent": (float, None),
    "grid.points": (int, None),
    "pso.swarm_size": (int, PsoConfig.swarm_size),
    "pso.max_iters": (int, PsoConfig.max_iters),
    "pso.w": (float, PsoConfig.w),
    "pso.c1": (float, PsoConfig.c1),
    "pso.c2": (float, PsoConfig.c2),
    "pso.stall_tolerance": (float, PsoConfig.stall_tolerance),
    "pso.stall_iters": (int, PsoConfig.stall_iters),
    "pso.restarts": (int, PsoConfig.restarts),
    "negativity.c": (list, []),
    "negativity.xi": (list, []),
    "negativity.t_lo": (float, 0.005),
    "negativity.t_hi": (float, 0.25),
    "wigner.radius": (float, None),
}
# keys that never change numeric results and stay out of the hash
_UNHASHED = {"threads", "out_dir"}


def _coerce(key: str, value):
    typ = CONFIG_KEYS[key][0]
    if value is None:
        return None
    try:
        if typ is list:
            if isinstance(value, str):
                value = [v for v in value.split(";") if v.strip()]
            if not isinstance(value, list):
                raise TypeError
            return value
        if typ is int:
            if isinstance(value, float) and not value.is_integer():
                raise TypeError
            return int(value)
        return typ(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"config key {key!r} expects {typ.__name__}, got {value!r}") from None


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidInputError("config must be a JSON object with flat keys")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise InvalidInputError(f"unknown config keys: {unknown}")
    return {k: _coerce(k, v) for k, v in raw.items()}


def resolve_config(kind: str, file_cfg: dict, overrides: dict) -> dict:
    cfg = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    cfg.update(file_cfg)
    cfg.update({k: _coerce(k, v) for k, v in overrides.items() if v is not None})
    if cfg.get("kind") not in (None, kind):
        raise InvalidInputError(f"config is for {cfg['kind']!r}, not {kind!r}")
    cfg["kind"] = kind
    return cfg


def config_hash(cfg: dict) -> str:
    payload = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def provenance(cfg: dict) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "config": {k: v for k, v in cfg.items() if k not in _UNHASHED},
        "versions": {"gconv": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }


def _header(cfg: dict) -> str:
    return f"config_hash={config_hash(cfg)} seed={cfg['seed']}"


def _out_dir(cfg: dict) -> Path:
    if cfg.get("out_dir"):
        out = Path(cfg["out_dir"])
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "gconv-out"))
        out = root / f"{cfg['kind']}-{config_hash(cfg)}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _require(cfg: dict, key: str):
    if cfg.get(key) in (None, "", []):
        raise InvalidInputError(f"missing required setting {key!r}")
    return cfg[key]


def _grid(cfg: dict, *specs, wigner: bool = False) -> PhaseGrid:
    ext, pts = cfg.get("grid.half_extent"), cfg.get("grid.points")
    if ext is None and pts is None and not wigner:
        return fidelity_grid(*specs, dim=cfg["dim"])
    tol = WIGNER_SUPPORT_TOL if wigner else SUPPORT_TOL
    base = default_grid(*specs, dim=cfg["dim"], tol=tol)
    if ext is None and pts is None:
        return base
    return PhaseGrid(ext if ext is not None else base.half_extent, pts if pts is not None else base.points)


def _pso(cfg: dict) -> PsoConfig:
    return PsoConfig(
        swarm_size=cfg["pso.swarm_size"], max_iters=cfg["pso.max_iters"],
        w=cfg["pso.w"], c1=cfg["pso.c1"], c2=cfg["pso.c2"], seed=cfg["seed"],
        stall_tolerance=cfg["pso.stall_tolerance"], stall_iters=cfg["pso.stall_iters"],
        restarts=cfg["pso.restarts"], threads=cfg["threads"],
    )


def parse_channel(text: str) -> GaussianChannel:
    """``identity`` or comma-separated ``x00=..,x01=..,...,l1=..`` (missing keys take identity values)."""
    text = text.strip()
    rec = GaussianChannel.identity().to_record()
    if text and text != "identity":
        for token in text.replace(";", ",").split(","):
            if not token.strip():
                continue
            if "=" not in token:
                raise InvalidInputError(f"channel entry {token!r} is not key=value")
            k, v = (s.strip() for s in token.split("=", 1))
            if k not in rec:
                raise InvalidInputError(f"unknown channel entry {k!r}")
            try:
                rec[k] = float(v)
            except ValueError:
                raise InvalidInputError(f"bad number for {k}: {v!r}") from None
    return GaussianChannel.from_record(rec)


# ---------------------------------------------------------------- commands


def cmd_state(cfg: dict) -> Path:
    spec = statelib.parse_spec(_require(cfg, "spec"))
    state = statelib.build_state(spec, cfg["dim"])
    out = _out_dir(cfg)
    with open(out / "fock.csv", "w", newline="") as fh:
        fh.write(f"# {_header(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(["n", "re", "im"])
        for n, a in enumerate(state.amps):
            w.writerow([n, repr(float(a.real)), repr(float(a.imag))])
    grid = _grid(cfg, spec, wigner=True)
    cf = char_fn(state, grid)
    wf = wigner_from_char(cf)
    to_binary(cf, out / "chi.bin")
    to_binary(wf, out / "wigner.bin")
    to_csv(wf, out / "wigner.csv", _header(cfg))
    report = {
        "spec": statelib.to_record(spec),
        "description": statelib.describe(spec),
        "mean_photon_number": mean_photon_number(state),
        "wln": wigner_log_negativity(wf),
        "tail_mass": state.tail_mass(),
        "grid": grid.to_record(),
        "provenance": provenance(cfg),
    }
    _write_json(out / "report.json", report)
    return out


def cmd_wigner(cfg: dict) -> Path:
    spec = statelib.parse_spec(_require(cfg, "spec"))
    state = statelib.build_state(spec, cfg["dim"])
    grid = _grid(cfg, spec, wigner=True)
    wf = wigner_from_char(char_fn(state, grid))
    out = _out_dir(cfg)
    to_csv(wf, out / "wigner.csv", _header(cfg))
    report = {"spec": statelib.to_record(spec), "wln": wigner_log_negativity(wf), "grid": grid.to_record(),
              "aliasing": wf.aliasing, "provenance": provenance(cfg)}
    if cfg.get("wigner.radius") is not None:
        theta, vals = radial_cut(wf, cfg["wigner.radius"])
        with open(out / "radial_cut.csv", "w", newline="") as fh:
            fh.write(f"# {_header(cfg)} radius={cfg['wigner.radius']!r}\n")
            w = csv.writer(fh)
            w.writerow(["theta", "value"])
            for t, v in zip(theta, vals):
                w.writerow([repr(float(t)), repr(float(v))])
        report["radius"] = cfg["wigner.radius"]
    _write_json(out / "report.json", report)
    return out


def cmd_fidelity(cfg: dict) -> Path:
    inp = statelib.parse_spec(_require(cfg, "input"))
    tgt = statelib.parse_spec(_require(cfg, "target"))
    ch = parse_channel(cfg["channel"])
    grid = _grid(cfg, inp, tgt)
    f = fidelity_after_map(inp, ch, tgt, grid, cfg["dim"])
    out = _out_dir(cfg)
    _write_json(out / "fidelity.json", {
        "input": statelib.to_record(inp), "target": statelib.to_record(tgt),
        "channel": ch.to_record(), "fidelity": f, "grid": grid.to_record(), "dim": cfg["dim"],
        "provenance": provenance(cfg),
    })
    return out


def cmd_convert(cfg: dict) -> Path:
    inp = statelib.parse_spec(_require(cfg, "input"))
    tgt = statelib.parse_spec(_require(cfg, "target"))
    fam = get_family(cfg["family"])
    res = optimize_conversion(inp, tgt, fam, _pso(cfg), _grid(cfg, inp, tgt), cfg["dim"])
    out = _out_dir(cfg)
    rec = res.to_record()
    rec["provenance"] = provenance(cfg)
    _write_json(out / "result.json", rec)
    _summary(out / "summary.csv", [res], cfg)
    return out


def _summary(path: Path, results, cfg: dict) -> None:
    write_summary_csv(results, path)
    body = path.read_text()
    path.write_text(f"# {_header(cfg)}\n" + body)


def cmd_sweep(cfg: dict) -> Path:
    inputs = [statelib.parse_spec(s) for s in cfg["inputs"]]
    targets = [statelib.parse_spec(s) for s in cfg["targets"]]
    fam = get_family(cfg["family"])
    out = _out_dir(cfg)
    grid = None
    if cfg.get("grid.half_extent") is not None or cfg.get("grid.points") is not None:
        grid = _grid(cfg, *inputs, *targets)
    results = sweep(inputs, targets, fam, _pso(cfg), cfg["dim"], out / "cells", cfg["threads"], grid)
    _summary(out / "summary.csv", results, cfg)
    _write_json(out / "provenance.json", provenance(cfg))
    return out


def negativity_table(cs, xis, bracket=(0.005, 0.25), dim: int = statelib.DEFAULT_DIM) -> list[dict]:
    """One row per (xi, c) cell; bracket failures are kept as per-cell errors."""
    rows = []
    for xi in xis:
        for c in cs:
            row = {"xi": float(xi), "c": float(c), "t": math.nan, "error": ""}
            try:
                row["t"] = match_triplicity(float(c), float(xi), bracket, NEGATIVITY_GRID, dim)
            except GconvError as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def cmd_negativity_match(cfg: dict) -> Path:
    cs = [float(c) for c in cfg["negativity.c"]]
    xis = [float(x) for x in cfg["negativity.xi"]]
    rows = negativity_table(cs, xis, (cfg["negativity.t_lo"], cfg["negativity.t_hi"]), cfg["dim"])
    out = _out_dir(cfg)
    with open(out / "triplicity.csv", "w", newline="") as fh:
        fh.write(f"# {_header(cfg)}\n")
        w = csv.DictWriter(fh, fieldnames=["xi", "c", "t", "error"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "t": repr(r["t"])})
    _write_json(out / "provenance.json", provenance(cfg))
    return out


COMMANDS = {
    "state": cmd_state,
    "fidelity": cmd_fidelity,
    "convert": cmd_convert,
    "sweep": cmd_sweep,
    "negativity-match": cmd_negativity_match,
    "wigner": cmd_wigner,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gconv", description="Gaussian conversion of non-Gaussian single-mode states")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON file with flat dotted keys")
        p.add_argument("--out", dest="out_dir", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<kind>-<hash>)")
        p.add_argument("--dim", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="cap on worker threads")
        p.add_argument("--half-extent", dest="grid.half_extent", type=float)
        p.add_argument("--points", dest="grid.points", type=int)
        if kind in ("state", "wigner"):
            p.add_argument("--spec", help='state spec, e.g. "family=cat N=2 alpha=2 mu=0"')
        if kind == "wigner":
            p.add_argument("--radius", dest="wigner.radius", type=float, help="also export W on this circle")
        if kind in ("fidelity", "convert"):
            p.add_argument("--input")
            p.add_argument("--target")
        if kind == "fidelity":
            p.add_argument("--channel", help='"identity" or "x00=..,x01=..,...,l1=.."')
        if kind in ("convert", "sweep"):
            p.add_argument("--family", help="full_cptp, symplectic_displacement or squeeze_only")
            p.add_argument("--swarm-size", dest="pso.swarm_size", type=int)
            p.add_argument("--max-iters", dest="pso.max_iters", type=int)
            p.add_argument("--restarts", dest="pso.restarts", type=int)
            p.add_argument("--stall-tolerance", dest="pso.stall_tolerance", type=float)
        if kind == "sweep":
            p.add_argument("--inputs", help="';'-separated specs")
            p.add_argument("--targets", help="';'-separated specs")
        if kind == "negativity-match":
            p.add_argument("--c", dest="negativity.c", help="';'-separated cubicities")
            p.add_argument("--xi", dest="negativity.xi", help="';'-separated squeezing values")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("kind", "config")}
    try:
        file_cfg = load_config(args.config) if args.config else {}
        cfg = resolve_config(args.kind, file_cfg, flags)
        out = COMMANDS[args.kind](cfg)
    except GconvError as exc:
        print(f"gconv {args.kind}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
