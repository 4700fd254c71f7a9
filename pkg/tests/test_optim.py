import json
import math

import numpy as np
import pytest

from gconv import optim, statelib
from gconv.channel import SQUEEZE_ONLY
from gconv.errors import InvalidInputError
from gconv.optim import ConversionResult, PsoConfig, optimize_conversion, pso_maximize, sweep
from gconv.statelib import CatCode, FockBasis, Pass

SMALL = PsoConfig(swarm_size=8, max_iters=12, restarts=1, stall_iters=6, stall_tolerance=1e-9)


def bowl(x):
    return -float(np.sum((x - 0.3) ** 2))


def rastrigin(x):
    return -float(10 * x.size + np.sum(x * x - 10 * np.cos(2 * np.pi * x)))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        PsoConfig(swarm_size=1)
    with pytest.raises(InvalidInputError):
        PsoConfig(bounds=((1.0, 0.0),))
    with pytest.raises(InvalidInputError):
        PsoConfig(bounds=())
    with pytest.raises(InvalidInputError):
        PsoConfig(seed=-1)
    assert PsoConfig().swarm_size == 256 and PsoConfig().w == 0.729


def test_quadratic_bowl():
    cfg = PsoConfig(max_iters=200, stall_tolerance=0.0, seed=11, bounds=((-1.0, 1.0),) * 5)
    res = pso_maximize(bowl, cfg)
    assert np.abs(res.best_params - 0.3).max() < 1e-6
    assert len(res.trace) <= 201


def test_determinism_and_monotone_trace():
    cfg = PsoConfig(swarm_size=20, max_iters=50, seed=3, bounds=((-1.0, 1.0),) * 5)
    a = pso_maximize(bowl, cfg)
    b = pso_maximize(bowl, cfg)
    assert a.trace == b.trace
    assert np.array_equal(a.best_params, b.best_params)
    assert all(y >= x for x, y in zip(a.trace, a.trace[1:]))


def test_threads_do_not_change_results():
    cfg = PsoConfig(swarm_size=20, max_iters=30, seed=5, bounds=((-1.0, 1.0),) * 3)
    a = pso_maximize(bowl, cfg)
    b = pso_maximize(bowl, PsoConfig(**{**cfg.__dict__, "threads": 4}))
    assert a.trace == b.trace


def test_seed_points_are_used():
    cfg = PsoConfig(swarm_size=4, max_iters=0, seed=1, bounds=((-1.0, 1.0),) * 2)
    res = pso_maximize(bowl, cfg, seed_points=[(0.3, 0.3)])
    assert res.best_value == 0.0


def test_stall_stops_early():
    cfg = PsoConfig(swarm_size=10, max_iters=400, seed=2, stall_iters=5, stall_tolerance=1.0,
                    bounds=((-1.0, 1.0),))
    assert len(pso_maximize(bowl, cfg).trace) == 6


def test_rastrigin_benchmark():
    hits = 0
    for seed in range(10):
        res = pso_maximize(rastrigin, PsoConfig(seed=seed, bounds=((-5.12, 5.12),) * 4))
        hits += res.best_value > -1e-3
    assert hits >= 9


def test_non_finite_objective_is_ignored():
    cfg = PsoConfig(swarm_size=6, max_iters=10, seed=0, bounds=((-1.0, 1.0),))
    res = pso_maximize(lambda x: math.nan if x[0] > 0 else -abs(x[0]), cfg)
    assert res.best_value <= 0 and res.best_params[0] <= 0


def test_identity_conversion_is_perfect():
    cat = CatCode(1, 1.0, 0)
    res = optimize_conversion(cat, cat, SQUEEZE_ONLY, SMALL)
    assert res.fidelity_best == pytest.approx(1.0, abs=1e-4)
    assert res.fidelity_init == pytest.approx(1.0, abs=1e-4)
    assert abs(res.best_params[0]) < 1e-2


def test_conversion_never_worse_than_identity():
    res = optimize_conversion(Pass(-2, 0, 0.6), CatCode(1, 2j, 0), "squeeze_only", SMALL)
    assert res.fidelity_best >= res.fidelity_init - 1e-9
    assert res.family == "squeeze_only"
    assert all(y >= x for x, y in zip(res.trace, res.trace[1:]))


def test_result_serialization(tmp_path):
    res = optimize_conversion(Pass(-1, 0, 0.3), FockBasis(1), "symplectic_displacement", SMALL)
    rec = json.loads(res.to_json())
    assert {"input", "target", "family", "best_channel", "fidelity_init", "fidelity_best", "trace", "seed",
            "grid", "dim"} <= set(rec)
    back = ConversionResult.from_record(rec)
    assert back.fidelity_best == res.fidelity_best and back.input == res.input
    row = res.csv_row()
    assert set(row) == set(optim.CSV_FIELDS)
    optim.write_summary_csv([res], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(optim.CSV_FIELDS)


def test_bounds_size_must_match_family():
    with pytest.raises(InvalidInputError):
        optimize_conversion(FockBasis(0), FockBasis(0), "squeeze_only", PsoConfig(bounds=((0, 1), (0, 1))))


def test_empty_sweep():
    assert sweep([], [CatCode()], "squeeze_only", SMALL) == []


def test_sweep_isolates_failures_and_resumes(tmp_path):
    inputs = [Pass(-1, 0, 0.2), Pass(5, 0, 1.5)]  # the second overflows the default truncation
    targets = [FockBasis(1)]
    res = sweep(inputs, targets, "squeeze_only", SMALL, out_dir=tmp_path)
    assert isinstance(res[0], ConversionResult)
    assert isinstance(res[1], optim.CellFailure) and res[1].error_type == "TruncationError"
    files = sorted(tmp_path.glob("cell-*.json"))
    assert len(files) == 2
    stamp = {f: f.stat().st_mtime_ns for f in files}
    again = sweep(inputs[:1], targets, "squeeze_only", SMALL, out_dir=tmp_path)
    assert again[0].to_record() == res[0].to_record()
    ok_file = tmp_path / f"cell-{optim.cell_key(inputs[0], targets[0], 'squeeze_only', SMALL, statelib.DEFAULT_DIM)}.json"
    assert ok_file.stat().st_mtime_ns == stamp[ok_file]


def test_parallel_sweep_matches_serial():
    inputs = [Pass(-1, 0, 0.2), Pass(-2, 0, 0.3)]
    targets = [FockBasis(1), CatCode(1, 1.0, 0)]
    a = sweep(inputs, targets, "squeeze_only", SMALL)
    b = sweep(inputs, targets, "squeeze_only", SMALL, workers=3)
    assert [r.to_record() for r in a] == [r.to_record() for r in b]
