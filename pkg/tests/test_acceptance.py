"""End-to-end acceptance checks, one test per criterion.

Every bundled config is executed once per session; the terminal summary prints
a PASS/FAIL line for each ``test_criterion_NN_*`` test.
"""

import math
import time

import numpy as np
import pytest

from ptlab import cli, config
from ptlab.engine import integrate
from ptlab.scaling import TimeHorizon, mu


@pytest.fixture(scope="session")
def runs():
    out = {}
    for path in config.bundled_configs():
        cfg = config.load_config(path)
        start = time.perf_counter()
        res = cli.execute(cfg)
        out[path.stem] = (path, cfg, res, time.perf_counter() - start)
    return out


def _run(runs, stem):
    return runs[stem][1:]


def test_criterion_01_double_integrator_comparison(runs):
    cfg, res, wall = _run(runs, "double_integrator_compare")
    csvs = [name for name in res.files if name.endswith(".csv") and name != "summary.csv"]
    assert len(csvs) == 8 and "summary.csv" in res.files
    rows = res.data["rows"]
    scenarios = res.data["scenarios"]
    by_kind = {}
    for sc, r in zip(scenarios, rows):
        assert r.settle_time is not None, f"{r.kind} from {sc.x0} did not settle"
        by_kind.setdefault(r.kind, []).append(r.settle_time)
        if r.kind == "prescribed":
            assert r.settle_time <= cfg["horizon.T"] + sc.dt
        elif r.kind == "fixed":
            assert r.settle_time <= 5.363
        elif r.kind == "predefined":
            assert r.settle_time <= 1.0

    def spread(v):
        return (max(v) - min(v)) / min(v)

    assert spread(by_kind["finite"]) >= 0.10
    assert spread(by_kind["prescribed"]) <= 0.01
    assert wall < 30.0


def test_criterion_02_finite_time_as_prescribed_time(runs):
    _, res, wall = _run(runs, "equivalence")
    results = res.data["equivalence"]
    assert len(results) == 9
    assert all(r.ok for r in results), [(r.alpha, r.x0, r.max_deviation) for r in results if not r.ok]
    assert wall < 5.0


def test_criterion_03_inequality_bounds(runs):
    _, res, _ = _run(runs, "inequality_sweep")
    rows = res.data["rows"]
    kinds = sorted({r[0] for r in rows})
    assert len(kinds) == 10
    for kind in kinds:
        mine = [r for r in rows if r[0] == kind]
        assert len(mine) >= 20
        assert all(r[7] for r in mine), f"{kind}: bound exceeded"
        if kind == "FT1":
            assert all(r[8] != "" and bool(r[8]) for r in mine)


def test_criterion_04_prescribed_limit_with_disturbance(runs):
    cfg, res, _ = _run(runs, "prescribed_limit")
    assert cfg["bound.kind"] == "PT12" and cfg["coefficients.k"] == 2 and cfg["bound.d"] == 0.1
    traj = res.data["run"].trajectory
    assert traj.times[-1] == pytest.approx(1.0 - 1e-4)
    assert traj.states[-1] <= 1e-3


def _spread(values):
    return (max(values) - min(values)) / min(values)


def test_criterion_05_robust_regulation(runs):
    _, res, _ = _run(runs, "robust_pt")
    run, x0, labels = res.data["run"], res.data["x0"], res.data["labels"]
    assert len(x0) == 12 and len(set(labels)) == 3
    assert res.data["regulation"]["ok"]
    assert run.diagnostics["gain_sign_violations"] == 0
    assert np.all(np.isfinite(run.diagnostics["max_abs_u"]))
    crossing = res.data["crossing"]
    decades = math.log10(max(abs(v) for v in x0) / min(abs(v) for v in x0))
    assert decades >= 2
    for profile in set(labels):
        times = [c for c, lab in zip(crossing, labels) if lab == profile]
        assert None not in times
        assert _spread(times) <= 0.05, f"{profile}: {times}"


@pytest.mark.parametrize("name", ["adaptive_ti", "adaptive_tv"])
def test_criterion_06_adaptive_regulation(runs, name):
    _, res, _ = _run(runs, name)
    run = res.data["run"]
    assert res.data["regulation"]["ok"]
    assert np.all(np.isfinite(run.diagnostics["max_abs_u"]))
    est = run.trajectory.estimates
    cols = [0, 1, 2] if name == "adaptive_tv" else [0, 1]
    drift = np.abs(est[-1, ..., cols] - est[-101, ..., cols])
    assert drift.max() <= 1e-3
    assert run.diagnostics["rho_monotone"]


def test_criterion_07_nussbaum(runs):
    _, res, _ = _run(runs, "nussbaum")
    run = res.data["run"]
    assert np.max(np.abs(run.terminal)) <= 1e-2
    xi = run.trajectory.estimates[..., 3]
    assert np.all(np.isfinite(xi))
    print(f"xi range [{xi.min():.6g}, {xi.max():.6g}]")
    assert run.diagnostics["xi_dot_min"] >= -1e-12


def _effective_b(plant, X, t):
    if plant.square:
        return np.asarray(plant.B(X, t), dtype=float)
    return plant.A @ np.asarray(plant.M(X, t), dtype=float)


@pytest.mark.parametrize("name", ["mimo_square", "mimo_nonsquare"])
def test_criterion_08_mimo(runs, name):
    cfg, res, _ = _run(runs, name)
    term = res.data["terminal"]
    assert len(term) == 10
    assert term.max() <= 1e-3
    assert np.all(np.isfinite(res.data["max_u"]))
    traj = res.data["trajectory"]
    h = TimeHorizon(cfg["horizon.T"])
    for i, plant in enumerate(res.data["members"]):
        for j in np.linspace(0, len(traj.times) - 1, 10).astype(int):
            t = traj.times[j]
            X = traj.states[j, i]
            Z = mu(t, h) * X
            B = _effective_b(plant, X, t)
            if B.shape[0] != B.shape[1]:
                continue
            skew = abs(float(Z @ (B - B.T) @ Z))
            assert skew <= 1e-12 * float(Z @ Z) * np.linalg.norm(B, 2) 


@pytest.mark.parametrize("name", ["consensus_path4", "consensus_cycle4", "consensus_complete5"])
def test_criterion_09_consensus(runs, name):
    _, res, _ = _run(runs, name)
    ex = res.data["trajectory"].extras
    assert res.data["c"] == pytest.approx(1.0 / res.data["lambda2"], rel=1e-15)
    assert np.all(ex["chi_norm"] <= ex["bound"] * (1 + 1e-6))
    assert np.max(np.abs(ex["sum_drift"])) <= 1e-9


def test_criterion_10_containment(runs):
    # values exactly as the criterion states them
    _, res, _ = _run(runs, "containment_chain3")
    dec = res.data["decomposition"]
    problems = []
    checks = [
        ("L1", dec.L1, np.array([[1.0, 0.0], [-1.0, 1.0]])),
        ("P", dec.P, np.diag([2.0, 1.0])),
        ("Q", dec.Q, np.array([[4.0, -2.0], [-2.0, 2.0]])),
        ("c_min", np.array(dec.c_min), np.array(4.0 / (3.0 - math.sqrt(5.0)))),
    ]
    for label, got, want in checks:
        if not np.allclose(got, want, rtol=0, atol=1e-12):
            problems.append(f"{label}: got {got.tolist()}, expected {want.tolist()}")
    if res.data["deviation"] > 1e-3:
        problems.append(f"follower deviation {res.data['deviation']:.3e}")
    assert not problems, "; ".join(problems)


def test_criterion_11_rk4_order():
    errors = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        tr = integrate(lambda t, x: -x, 1.0, 1.0, dt)
        errors.append(abs(tr.states[-1] - math.exp(-1.0)))
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    assert all(r >= 8.0 for r in ratios), ratios


def test_criterion_12_determinism(runs):
    for stem, (path, _, res, _) in runs.items():
        again = cli.execute(config.load_config(path))
        assert again.files.keys() == res.files.keys(), stem
        for name, text in res.files.items():
            assert again.files[name].encode() == text.encode(), f"{stem}/{name}"
