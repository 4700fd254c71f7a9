"""Particle-swarm maximization of conversion fidelity over channel families."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import statelib
from .channel import ChannelFamily, GaussianChannel, fidelity_after_map, fidelity_grid, get_family
from .errors import GconvError, InvalidInputError
from .phasespace import PhaseGrid


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 256
    max_iters: int = 400
    w: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    seed: int = 0
    bounds: tuple | None = None
    stall_tolerance: float = 1e-6
    stall_iters: int = 40
    restarts: int = 4
    threads: int = 1

    def __post_init__(self):
        if self.swarm_size < 2:
            raise InvalidInputError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be >= 0")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")
        if self.threads < 1:
            raise InvalidInputError("threads must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must fit in 64 unsigned bits")
        if self.bounds is not None:
            object.__setattr__(self, "bounds", _check_bounds(self.bounds))

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["bounds"] = None if self.bounds is None else [list(b) for b in self.bounds]
        return rec


def _check_bounds(bounds) -> tuple:
    out = []
    for b in bounds:
        lo, hi = float(b[0]), float(b[1])
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise InvalidInputError(f"empty or non-finite bound interval {b!r}")
        out.append((lo, hi))
    if not out:
        raise InvalidInputError("at least one bounded parameter is required")
    return tuple(out)


@dataclass(frozen=True)
class PsoResult:
    best_params: np.ndarray
    best_value: float
    trace: list


def _particle_streams(seed: int, n: int) -> list[np.random.Generator]:
    """One counter-based stream per particle, independent of evaluation order."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _evaluate(objective, positions: np.ndarray, pool) -> np.ndarray:
    rows = [p.copy() for p in positions]
    values = list(pool.map(objective, rows)) if pool is not None else [objective(r) for r in rows]
    out = np.array(values, dtype=float)
    out[~np.isfinite(out)] = -np.inf
    return out


def pso_maximize(
    objective: Callable[[np.ndarray], float],
    cfg: PsoConfig,
    bounds=None,
    seed_points: Sequence | None = None,
) -> PsoResult:
    """Constriction-coefficient PSO with reflective walls.

    ``seed_points`` replace the first random particles.  The trace holds the
    swarm-best value after initialization and after every iteration.
    """
    bounds = _check_bounds(bounds if bounds is not None else cfg.bounds)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    span = hi - lo
    vmax = 0.5 * span
    n, d = cfg.swarm_size, lo.size
    streams = _particle_streams(cfg.seed, n)

    x = np.array([lo + span * g.random(d) for g in streams])
    v = np.array([vmax * (2.0 * g.random(d) - 1.0) for g in streams])
    for i, pt in enumerate(seed_points or ()):
        if i >= n:
            break
        x[i] = np.clip(np.asarray(pt, dtype=float), lo, hi)
        v[i] = 0.0

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        f = _evaluate(objective, x, pool)
        pbest, pval = x.copy(), f.copy()
        g = int(np.argmax(pval))
        gbest, gval = pbest[g].copy(), float(pval[g])
        trace = [gval]
        for _ in range(cfg.max_iters):
            r1 = np.array([s.random(d) for s in streams])
            r2 = np.array([s.random(d) for s in streams])
            v = cfg.w * v + cfg.c1 * r1 * (pbest - x) + cfg.c2 * r2 * (gbest - x)
            v = np.clip(v, -vmax, vmax)
            x = x + v
            over, under = x > hi, x < lo
            x = np.where(over, 2 * hi - x, x)
            x = np.where(under, 2 * lo - x, x)
            v = np.where(over | under, -v, v)
            x = np.clip(x, lo, hi)

            f = _evaluate(objective, x, pool)
            better = f > pval
            pbest[better] = x[better]
            pval[better] = f[better]
            g = int(np.argmax(pval))
            if pval[g] > gval:
                gbest, gval = pbest[g].copy(), float(pval[g])
            trace.append(gval)
            k = cfg.stall_iters
            if len(trace) > k and trace[-1] - trace[-1 - k] < cfg.stall_tolerance:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return PsoResult(gbest, gval, trace)


# ---------------------------------------------------------------- conversions


@dataclass(frozen=True)
class ConversionResult:
    input: object
    target: object
    family: str
    best_channel: GaussianChannel
    best_params: tuple
    fidelity_init: float
    fidelity_best: float
    trace: list
    seed: int
    grid: PhaseGrid
    dim: int
    config: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "input": statelib.to_record(self.input),
            "target": statelib.to_record(self.target),
            "family": self.family,
            "best_channel": self.best_channel.to_record(),
            "best_params": [float(p) for p in self.best_params],
            "fidelity_init": self.fidelity_init,
            "fidelity_best": self.fidelity_best,
            "trace": [float(t) for t in self.trace],
            "seed": int(self.seed),
            "grid": self.grid.to_record(),
            "dim": self.dim,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec: dict) -> "ConversionResult":
        return cls(
            input=statelib.from_record(rec["input"]),
            target=statelib.from_record(rec["target"]),
            family=rec["family"],
            best_channel=GaussianChannel.from_record(rec["best_channel"]),
            best_params=tuple(rec["best_params"]),
            fidelity_init=rec["fidelity_init"],
            fidelity_best=rec["fidelity_best"],
            trace=list(rec["trace"]),
            seed=rec["seed"],
            grid=PhaseGrid(**rec["grid"]),
            dim=rec["dim"],
            config=rec.get("config", {}),
        )

    def csv_row(self) -> dict:
        row = {
            "input": statelib.describe(self.input),
            "target": statelib.describe(self.target),
            "family": self.family,
            "fidelity_init": self.fidelity_init,
            "fidelity_best": self.fidelity_best,
            "iterations": len(self.trace) - 1,
            "seed": self.seed,
            "half_extent": self.grid.half_extent,
            "points": self.grid.points,
            "dim": self.dim,
            "error": "",
        }
        row.update(self.best_channel.to_record())
        return row


CSV_FIELDS = (
    "input", "target", "family", "fidelity_init", "fidelity_best", "iterations", "seed",
    "half_extent", "points", "dim",
    "x00", "x01", "x10", "x11", "y00", "y01", "y11", "l0", "l1", "error",
)


def _family(family) -> ChannelFamily:
    return family if isinstance(family, ChannelFamily) else get_family(family)


def optimize_conversion(
    input_spec,
    target_spec,
    family,
    cfg: PsoConfig = PsoConfig(),
    grid: PhaseGrid | None = None,
    dim: int = statelib.DEFAULT_DIM,
    warm_start: bool = True,
) -> ConversionResult:
    """Best channel of ``family`` for turning ``input_spec`` into ``target_spec``.

    Every restart seeds the identity channel as one particle, so the returned
    fidelity is never below the identity-channel fidelity.  For full_cptp with
    ``warm_start`` the symplectic-plus-displacement family is searched first
    and its best channel is seeded as a second particle: the nine-parameter
    swarm otherwise tends to settle on replacement channels.
    """
    fam = _family(family)
    if grid is None:
        grid = fidelity_grid(input_spec, target_spec, dim)
    f_init = fidelity_after_map(input_spec, GaussianChannel.identity(), target_spec, grid, dim)
    bounds = cfg.bounds if cfg.bounds is not None else fam.bounds
    if len(bounds) != fam.size:
        raise InvalidInputError(f"{fam.name} takes {fam.size} parameters, got {len(bounds)} bounds")

    def objective(params):
        return fidelity_after_map(input_spec, fam.channel(params), target_spec, grid, dim)

    seed_points = [fam.identity_params]
    if warm_start and fam.name == "full_cptp" and cfg.bounds is None:
        inner = optimize_conversion(input_spec, target_spec, "symplectic_displacement", cfg, grid, dim)
        seed_points.append(fam.params_for_noiseless(inner.best_channel))

    seeds = np.random.SeedSequence(int(cfg.seed)).generate_state(cfg.restarts, dtype=np.uint64)
    best = None
    for run_seed in seeds:
        run = pso_maximize(objective, replace(cfg, seed=int(run_seed)), bounds, seed_points)
        if best is None or run.best_value > best.best_value:
            best = run
    return ConversionResult(
        input=input_spec,
        target=target_spec,
        family=fam.name,
        best_channel=fam.channel(best.best_params),
        best_params=tuple(float(p) for p in best.best_params),
        fidelity_init=f_init,
        fidelity_best=max(best.best_value, f_init),
        trace=best.trace,
        seed=int(cfg.seed),
        grid=grid,
        dim=dim,
        config={**cfg.to_record(), "warm_start": bool(warm_start and fam.name == "full_cptp")},
    )


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class CellFailure:
    """A sweep cell that raised; recorded instead of aborting the sweep."""

    input: object
    target: object
    family: str
    error_type: str
    message: str

    def to_record(self) -> dict:
        return {
            "input": statelib.to_record(self.input),
            "target": statelib.to_record(self.target),
            "family": self.family,
            "error_type": self.error_type,
            "message": self.message,
        }

    def csv_row(self) -> dict:
        row = {k: "" for k in CSV_FIELDS}
        row.update(input=statelib.describe(self.input), target=statelib.describe(self.target),
                   family=self.family, error=f"{self.error_type}: {self.message}")
        return row


def cell_key(input_spec, target_spec, family: str, cfg: PsoConfig, dim: int) -> str:
    payload = json.dumps(
        [statelib.to_record(input_spec), statelib.to_record(target_spec), family, cfg.to_record(), dim],
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _run_cell(input_spec, target_spec, fam, cfg, dim, grid):
    try:
        return optimize_conversion(input_spec, target_spec, fam, cfg, grid, dim)
    except GconvError as exc:
        return CellFailure(input_spec, target_spec, fam.name, type(exc).__name__, str(exc))


def _write_cell(path: Path, result) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(result.to_record(), sort_keys=True))
    os.replace(tmp, path)


def _read_cell(path: Path):
    rec = json.loads(path.read_text())
    if "error_type" in rec:
        return None  # failed cells are retried on resume
    return ConversionResult.from_record(rec)


def sweep(
    inputs: Sequence,
    targets: Sequence,
    family,
    cfg: PsoConfig = PsoConfig(),
    dim: int = statelib.DEFAULT_DIM,
    out_dir=None,
    workers: int = 1,
    grid: PhaseGrid | None = None,
) -> list:
    """optimize_conversion over inputs x targets, in row-major order.

    With ``out_dir`` each finished cell is written to ``cell-<key>.json`` as it
    completes and cells already present are loaded instead of recomputed.
    Failing cells come back as CellFailure records.
    """
    fam = _family(family)
    cells = [(i, t) for i in inputs for t in targets]
    results: list = [None] * len(cells)
    paths: list = [None] * len(cells)
    todo = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for k, (i, t) in enumerate(cells):
        if out_dir is not None:
            paths[k] = out_dir / f"cell-{cell_key(i, t, fam.name, cfg, dim)}.json"
            if paths[k].exists():
                results[k] = _read_cell(paths[k])
        if results[k] is None:
            todo.append(k)

    def finish(k, res):
        results[k] = res
        if paths[k] is not None:
            _write_cell(paths[k], res)

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(workers) as pool:
            futs = {pool.submit(_run_cell, *cells[k], fam, cfg, dim, grid): k for k in todo}
            for fut in as_completed(futs):
                finish(futs[fut], fut.result())
    else:
        for k in todo:
            finish(k, _run_cell(*cells[k], fam, cfg, dim, grid))
    return results


def write_summary_csv(results: Sequence, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in results:
            writer.writerow(r.csv_row())
