"""Command-line entry point.

    ptlab <simulate|compare|bound|consensus|containment> --config FILE [--out DIR]
          [--seed N] [--threads N]
    ptlab run-all [--out DIR] [--threads N]

``--config`` takes a file path or the name of a bundled config. Every run
writes its CSVs plus ``manifest.json`` (config echo, version, wall time).
Exit codes: 0 success, 2 validation, 3 numeric failure, 4 I/O. Failures
print a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, bench, mas, mimo, scalar, settling
from .config import COMMANDS, bundled_configs, load_config
from .engine import csv_text
from .errors import DomainError, NumericError, ValidationError
from .scaling import TimeHorizon

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4, 1


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def table_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    """Files to write (name -> text) plus in-memory results for callers."""

    command: str
    files: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)


def _horizon(cfg):
    return TimeHorizon(cfg["horizon.T"], cfg["horizon.eps"], cfg["horizon.mu_cap"])


def _rng(cfg, seed):
    return np.random.default_rng(cfg["seed"] if seed is None else seed)


# -- simulate -------------------------------------------------------------------

def _scalar_members(cfg):
    """Batch layout: the product of (disturbance or theta profile) x initial state."""
    x0s = cfg["initial.x0"]
    if any(isinstance(v, list) for v in x0s):
        raise ValidationError("initial.x0: scalar plants take a flat list of numbers")
    preset = cfg["plant.preset"]
    amp, freq, off = cfg["disturbance.amplitude"], cfg["disturbance.frequency"], cfg["disturbance.offset"]
    if preset == "polynomial" and "plant.theta" in cfg.given:
        profiles = [(f"theta={th:g}", scalar.Disturbance("constant", th)) for th in cfg["plant.theta"]]
    else:
        kinds = cfg["disturbance.kinds"]
        freqs = freq * len(kinds) if len(freq) == 1 else freq
        profiles = [(kind, scalar.Disturbance(kind, amp, f, off)) for kind, f in zip(kinds, freqs)]
    members = list(itertools.product(profiles, x0s))
    bank = scalar.DisturbanceBank([p[1] for p, _ in members])
    labels = [p[0] for p, _ in members]
    x0 = np.array([x for _, x in members])
    return bank, labels, x0


def _scalar_plant(cfg, bank):
    preset = cfg["plant.preset"]
    if preset == "robust_benchmark":
        return scalar.robust_benchmark_plant(bank)
    return scalar.polynomial_plant(cfg["plant.b"], bank, b_sign=cfg.get("plant.b_sign"),
                                   b_lower=cfg.get("plant.b_lower"))


def _prepare_scalar(cfg):
    spec = scalar.ControllerSpec(
        cfg["controller.kind"], cfg["controller.k"], cfg["controller.theta"],
        cfg["controller.gamma_theta"], cfg["controller.gamma_rho"], cfg["controller.gamma_delta"])
    bank, labels, x0 = _scalar_members(cfg)
    plant = _scalar_plant(cfg, bank)
    state0 = scalar.AdaptiveState(cfg["estimates.theta_hat"], cfg["estimates.rho_hat"],
                                  cfg["estimates.delta_hat"], cfg["estimates.xi"])
    if spec.kind in ("adaptive_ti", "adaptive_tv"):
        scalar.check_gain_condition(spec, state0, plant)
    return spec, plant, state0, labels, x0


def _run_scalar(cfg, prepared):
    spec, plant, state0, labels, x0 = prepared
    h = _horizon(cfg)
    run = scalar.simulate_scalar(spec, plant, x0, h, state0=state0, dt=cfg["integration.dt"],
                                 t_end=cfg.get("integration.t_end"))
    traj = run.trajectory
    level = cfg["report.level"]
    crossing = scalar.crossing_time(traj, level)
    reg = scalar.regulation_report(run, x0)
    res = RunResult("simulate", data={"run": run, "x0": x0, "labels": labels,
                                      "regulation": reg, "crossing": crossing})
    rows = []
    est_labels = list(scalar.ESTIMATE_LABELS)
    for i in range(len(x0)):
        sub = traj.member(i, axis=1)
        sub.state_labels, sub.control_labels = ["x"], ["u"]
        if sub.estimates is not None:
            sub.estimate_labels = est_labels
        res.files[f"member_{i:02d}.csv"] = csv_text(sub)
        rows.append([i, labels[i], x0[i], reg["terminal"][i], reg["limit"][i],
                     bool(reg["terminal"][i] <= reg["limit"][i]),
                     run.diagnostics["max_abs_u"][i], crossing[i]])
    header = ["member", "profile", "x0", "terminal_abs_x", "limit", "regulated", "max_abs_u",
              f"settle_time_{level:g}"]
    res.files["summary.csv"] = table_text(header, rows)
    d = run.diagnostics
    res.lines.append(f"{spec.kind}: {len(x0)} closed loops, regulated={reg['ok']}, "
                     f"max |u| = {np.max(d['max_abs_u']):.6g}")
    for name in ("rho_monotone", "delta_monotone", "xi_dot_min"):
        if name in d:
            res.lines.append(f"  {name} = {d[name]}")
    return res


def _mimo_plant(cfg, rng):
    preset = cfg["plant.preset"]
    kind = cfg["controller.kind"]
    count, n, m = cfg["plant.count"], cfg["plant.n"], cfg["plant.m"]
    if preset == "random_square":
        return mimo.random_square_plants(rng, count, n, cfg["plant.margin"], cfg["plant.drift"])[0]
    if preset == "random_nonsquare":
        return mimo.random_nonsquare_plants(rng, count, n, m, cfg["plant.margin"],
                                            cfg["plant.drift"])[0]
    F, Psi = mimo.polynomial_drift(cfg["plant.drift"])
    if kind == "square":
        B = np.array(cfg["plant.B"])
        if B.shape[0] != B.shape[1]:
            raise ValidationError(f"plant.B: must be square (got shape {B.shape})")
        return mimo.MimoPlant(n=B.shape[0], m=B.shape[0], F=F, Psi=Psi, B=lambda X, t: B,
                              d_bound=cfg["plant.drift"], name="matrix")
    A, M = np.array(cfg["plant.A"]), np.array(cfg["plant.M"])
    return mimo.MimoPlant(n=A.shape[0], m=A.shape[1], F=F, Psi=Psi, A=A, M=lambda X, t: M,
                          d_bound=cfg["plant.drift"], name="matrix")


def _prepare_mimo(cfg, rng):
    plant = _mimo_plant(cfg, rng)
    if cfg["initial.x0"] is None:
        # random presets draw their initial states after the plants, from the same stream
        r = cfg["initial.x0_range"]
        x0 = rng.uniform(-r, r, (cfg["plant.count"], plant.n))
    else:
        x0 = np.array(cfg["initial.x0"], dtype=float)
    batched = plant.A is not None and plant.A.ndim == 3 or plant.name.startswith("random")
    if batched:
        count = cfg["plant.count"]
        if x0.ndim == 1:
            x0 = np.broadcast_to(x0, (count, plant.n)).copy()
        if x0.shape != (count, plant.n):
            raise ValidationError(f"initial.x0: expected {count} rows of {plant.n} (got {x0.shape})")
    elif x0.shape != (plant.n,):
        raise ValidationError(f"initial.x0: expected {plant.n} entries (got {x0.shape})")
    members = [mimo.member_plant(plant, i) for i in range(len(x0))] if batched else [plant]
    rows0 = x0 if batched else x0[None]
    gains = [mimo.check_gain_assumption(p, [(r, 0.0)]) for p, r in zip(members, rows0)]
    failed = [i for i, g in enumerate(gains) if not g.passed]
    if failed:
        raise ValidationError([f"plant member {i}: gain assumption fails "
                               f"(margin {gains[i].value:.3e})" for i in failed])
    return plant, x0, batched, members, gains


def _run_mimo(cfg, prepared):
    plant, x0, batched, members, gains = prepared
    h = _horizon(cfg)
    traj = mimo.simulate_mimo(plant, x0, h, cfg["controller.k"], cfg["controller.theta"],
                              dt=cfg["integration.dt"], t_end=cfg.get("integration.t_end"))
    term = np.atleast_1d(mimo.terminal_norms(traj))
    umax = np.atleast_1d(mimo.max_control_norms(traj))
    res = RunResult("simulate", data={"trajectory": traj, "plant": plant, "x0": x0,
                                      "terminal": term, "max_u": umax, "gains": gains,
                                      "members": members})
    rows = []
    for i in range(len(term)):
        sub = traj.member(i, axis=1) if batched else traj
        sub.state_labels = [f"x{j + 1}" for j in range(plant.n)]
        sub.control_labels = [f"u{j + 1}" for j in range(plant.m)]
        res.files[f"member_{i:02d}.csv"] = csv_text(sub)
        norm0 = float(np.linalg.norm(x0[i] if batched else x0))
        rows.append([i, norm0, term[i], bool(term[i] <= 1e-3), umax[i], gains[i].value])
    res.files["summary.csv"] = table_text(
        ["member", "x0_norm", "terminal_norm", "regulated", "max_u_norm", "gain_margin"], rows)
    res.lines.append(f"{cfg['controller.kind']}: {len(term)} plants, "
                     f"max terminal norm {term.max():.3e}, max |U| {umax.max():.6g}")
    return res


# -- compare ----------------------------------------------------------------------

def _prepare_compare(cfg):
    if cfg["compare.suite"] == "equivalence":
        for a in cfg["compare.alphas"]:
            if not 0 < a < 1:
                raise ValidationError(f"compare.alphas: entries must satisfy 0 < alpha < 1 (got {a})")
        return None
    scenarios = []
    for x0 in cfg["compare.x0"]:
        if len(x0) != 2:
            raise ValidationError("compare.x0: each row must be (x1, x2)")
        for kind in cfg["compare.kinds"]:
            if kind == "prescribed":
                sc = bench.ComparisonScenario(kind, tuple(x0), cfg["compare.pt_span"],
                                              {"T": cfg["horizon.T"], "eps": cfg["horizon.eps"]},
                                              cfg["integration.dt"])
            elif kind == "predefined":
                sc = bench.ComparisonScenario(kind, tuple(x0), cfg["compare.span"],
                                              {"T1": cfg["compare.T1"], "T2": cfg["compare.T2"]},
                                              cfg["integration.dt"])
            else:
                sc = bench.ComparisonScenario(kind, tuple(x0), cfg["compare.span"], {},
                                              cfg["integration.dt"])
            scenarios.append(sc)
    return scenarios


def _run_compare(cfg, scenarios, threads):
    res = RunResult("compare")
    if scenarios is None:
        results = [bench.equivalence_check(a, x, eps_fraction=cfg["compare.eps_fraction"])
                   for a in cfg["compare.alphas"] for x in cfg["compare.x0_first_order"]]
        rows = [[r.alpha, r.x0, r.T_f, r.max_deviation, r.tolerance, r.ok] for r in results]
        res.files["equivalence.csv"] = table_text(
            ["alpha", "x0", "T_f", "max_deviation", "tolerance", "ok"], rows)
        res.data["equivalence"] = results
        res.lines.append(f"equivalence: {sum(r.ok for r in results)}/{len(results)} pairs agree")
        return res
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        trajs = list(pool.map(bench.simulate_scenario, scenarios))
    rows = [bench.summarize(sc, tr) for sc, tr in zip(scenarios, trajs)]
    for sc, tr in zip(scenarios, trajs):
        res.files[f"{sc.label}.csv"] = csv_text(tr)
    res.files["summary.csv"] = table_text(bench.SUMMARY_HEADER, [r.csv_fields() for r in rows])
    if cfg["compare.plot_script"]:
        res.files["runs.txt"] = "\n".join(f"{sc.label}.csv" for sc in scenarios) + "\n"
        res.files["plot_comparison.py"] = bench.PLOT_SCRIPT
    res.data.update({"rows": rows, "scenarios": scenarios, "trajectories": trajs})
    for r in rows:
        res.lines.append(f"{r.kind:>10} x0=({r.x1_0:g}, {r.x2_0:g}) settle={_fmt(r.settle_time)} "
                         f"bound={_fmt(r.bound)} within={r.within_bound} max|u|={r.max_u:.6g}")
    return res


# -- bound --------------------------------------------------------------------------

def _prepare_bound(cfg):
    kind = cfg["bound.kind"]
    if kind == "all":
        return None
    coeffs = {k.split(".", 1)[1]: v for k, v in cfg.values.items()
              if k.startswith("coefficients.") and v is not None}
    return settling.LyapunovSpec(kind, coeffs, cfg["bound.V0"])


def _run_bound(cfg, spec, seed):
    res = RunResult("bound")
    if spec is None:
        rng = _rng(cfg, seed)
        rows, summary = [], {}
        for kind in list(settling.Kind)[:10]:
            for i in range(cfg["bound.draws"]):
                sp = settling.sample_spec(kind, rng)
                # FT1 reaches zero exactly, so it is timed to zero for the exactness check
                level = 0.0 if kind is settling.Kind.FT1 else None
                run = settling.simulate_inequality(sp, threshold=level)
                ok = run.settle_time is not None and run.settle_time <= run.bound + 2 * run.dt
                exact = None
                if kind is settling.Kind.FT1:
                    exact = abs(run.settle_time - run.bound) <= 0.01 * run.bound
                coeffs = ";".join(f"{k}={v:.17g}" for k, v in sp.coefficients.items())
                rows.append([kind.value, i, sp.V0, coeffs, run.bound, run.settle_time, run.dt, ok,
                             "" if exact is None else exact])
                summary.setdefault(kind.value, []).append((ok, exact))
        res.files["sweep.csv"] = table_text(
            ["kind", "draw", "V0", "coefficients", "bound", "measured", "dt", "within_bound",
             "exact_1pct"], rows)
        res.data["rows"] = rows
        for kind, oks in summary.items():
            res.lines.append(f"{kind:>13}: {sum(o for o, _ in oks)}/{len(oks)} draws within bound")
        return res
    res.lines.append(spec.row)
    bound = None
    if spec.kind not in settling.PRESCRIBED:
        bound = settling.settling_bound(spec)
        res.lines.append(f"bound = {bound:.17g}")
    else:
        res.lines.append(f"bound = T = {cfg['horizon.T']:.17g} (prescribed)")
    measured, run = None, None
    if cfg["bound.oracle"]:
        if spec.kind in settling.PRESCRIBED:
            run = settling.simulate_inequality(spec, d=cfg["bound.d"], horizon=_horizon(cfg),
                                               dt=cfg["integration.dt"])
        else:
            run = settling.simulate_inequality(spec)
        measured = run.settle_time
        res.lines.append(f"oracle settle time = {_fmt(measured)} (dt = {run.dt:.3g}, "
                         f"threshold = {run.threshold:.3g}, V_end = {run.trajectory.states[-1]:.6g})")
        res.files["oracle.csv"] = csv_text(run.trajectory)
    res.files["bound.csv"] = table_text(
        ["kind", "V0", "bound", "oracle_time", "V_end"],
        [[spec.kind.value, spec.V0, bound, measured,
          None if run is None else run.trajectory.states[-1]]])
    res.data.update({"spec": spec, "bound": bound, "run": run})
    return res


# -- consensus / containment -------------------------------------------------------------

def _graph(cfg, directed):
    if cfg.get("graph.path") is not None:
        return mas.load_edge_list(cfg["graph.path"], directed=directed, n=cfg.get("graph.n"))
    return mas.preset(cfg["graph.preset"], cfg["graph.n"], cfg["graph.weight"])


def _prepare_graph(cfg, directed):
    g = _graph(cfg, directed)
    if len(cfg["initial.x0"]) != g.n:
        raise ValidationError(f"initial.x0: expected {g.n} entries (got {len(cfg['initial.x0'])})")
    return g


def _run_consensus(cfg, g):
    h = _horizon(cfg)
    l2 = mas.lambda2(g)
    c = cfg.get("consensus.c", 1.0 / l2 if l2 > 0 else math.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = mas.simulate_consensus(g, cfg["initial.x0"], h, cfg["consensus.k"], c,
                                      dt=cfg["integration.dt"])
    ex = traj.extras
    res = RunResult("consensus", files={"trajectory.csv": csv_text(traj)},
                    data={"trajectory": traj, "lambda2": l2, "c": c, "graph": g})
    ok = bool(ex["bound_ok"].min() == 1.0)
    res.files["summary.csv"] = table_text(
        ["n", "lambda2", "c", "chi_terminal", "bound_holds", "max_sum_drift"],
        [[g.n, l2, c, ex["chi_norm"][-1], ok, np.max(np.abs(ex["sum_drift"]))]])
    res.lines.append(f"lambda2 = {l2:.17g}, c = {c:.17g}, ||chi(T-eps)|| = {ex['chi_norm'][-1]:.3e}, "
                     f"bound holds: {ok}")
    return res


def _run_containment(cfg, g):
    h = _horizon(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj, dec = mas.simulate_containment(g, cfg["initial.x0"], h, cfg["containment.k"],
                                             cfg.get("containment.c"),
                                             root=cfg["containment.root"] - 1,
                                             dt=cfg["integration.dt"])
    c = cfg.get("containment.c", dec.c_min)
    dev = float(np.max(np.abs(traj.states[-1] - traj.states[-1, dec.root])))
    res = RunResult("containment", files={"trajectory.csv": csv_text(traj)},
                    data={"trajectory": traj, "decomposition": dec, "deviation": dev})
    res.files["decomposition.json"] = json.dumps({
        "order": [i + 1 for i in dec.order],
        "L1": dec.L1.tolist(), "L2": dec.L2.tolist(), "P": dec.P.tolist(), "Q": dec.Q.tolist(),
        "lambda_min_Q": dec.lambda_Q, "c_min": dec.c_min, "c": c,
    }, indent=2) + "\n"
    ok = bool(traj.extras["bound_ok"].min() == 1.0)
    res.files["summary.csv"] = table_text(
        ["n", "c_min", "c", "max_follower_deviation", "bound_holds"],
        [[g.n, dec.c_min, c, dev, ok]])
    res.lines.append(f"c_min = {dec.c_min:.17g}, max follower deviation at T-eps = {dev:.3e}, "
                     f"bound holds: {ok}")
    return res


# -- dispatch --------------------------------------------------------------------------------

def prepare(cfg, seed=None):
    """Build every object the run needs; any validation problem surfaces here, before output."""
    if cfg.command == "simulate":
        if cfg["controller.kind"] in ("square", "nonsquare"):
            return _prepare_mimo(cfg, _rng(cfg, seed))
        return _prepare_scalar(cfg)
    if cfg.command == "compare":
        return _prepare_compare(cfg)
    if cfg.command == "bound":
        return _prepare_bound(cfg)
    return _prepare_graph(cfg, directed=cfg.command == "containment")


def execute(cfg, seed=None, threads=1):
    """Run a validated config and return its files and in-memory results (nothing is written)."""
    prepared = prepare(cfg, seed)
    if cfg.command == "simulate":
        if cfg["controller.kind"] in ("square", "nonsquare"):
            return _run_mimo(cfg, prepared)
        return _run_scalar(cfg, prepared)
    if cfg.command == "compare":
        return _run_compare(cfg, prepared, threads)
    if cfg.command == "bound":
        return _run_bound(cfg, prepared, seed)
    if cfg.command == "consensus":
        return _run_consensus(cfg, prepared)
    return _run_containment(cfg, prepared)


def write_result(res, cfg, out_dir, wall, seed):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in res.files.items():
        (out / name).write_text(text, encoding="utf-8", newline="")
    manifest = {
        "command": cfg.command,
        "config_source": cfg.source,
        "config": cfg.echo(),
        "seed": cfg["seed"] if seed is None else seed,
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "files": sorted(res.files),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def run_config(path, command=None, out_dir=None, seed=None, threads=1):
    cfg = load_config(path, command)
    start = time.perf_counter()
    res = execute(cfg, seed, threads)
    out = out_dir or cfg.get("output.dir") or Path("ptlab_out") / Path(cfg.source).stem
    write_result(res, cfg, out, time.perf_counter() - start, seed)
    return res, Path(out)


def _error_record(exc, code):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ValidationError):
        rec["violations"] = exc.violations
    if isinstance(exc, NumericError):
        rec["t"] = exc.t
    return rec


def _exit_code(exc):
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (NumericError, DomainError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_INTERNAL


def build_parser():
    p = argparse.ArgumentParser(prog="ptlab", description="Prescribed-time control laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run a {name} scenario")
        sp.add_argument("--config", required=True, help="config file or bundled config name")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--threads", type=int, default=1)
    ra = sub.add_parser("run-all", help="run every bundled config")
    ra.add_argument("--out", default="ptlab_out")
    ra.add_argument("--seed", type=int)
    ra.add_argument("--threads", type=int, default=1)
    return p


def _run_all(args):
    paths = bundled_configs()
    cfgs = [load_config(p) for p in paths]   # validate everything before any output

    def one(cfg):
        start = time.perf_counter()
        res = execute(cfg, args.seed, 1)
        return res, time.perf_counter() - start

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(one, cfgs))
    for path, cfg, (res, wall) in zip(paths, cfgs, results):
        out = write_result(res, cfg, Path(args.out) / path.stem, wall, args.seed)
        print(f"[{path.stem}] -> {out}")
        for line in res.lines:
            print(f"  {line}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        args.seed = None
        print(json.dumps({"error": "ValidationError", "message": "--seed must be >= 0",
                          "exit_code": EXIT_VALIDATION}), file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "run-all":
            _run_all(args)
        else:
            res, out = run_config(args.config, args.command, args.out, args.seed, args.threads)
            for line in res.lines:
                print(line)
            print(f"wrote {len(res.files) + 1} files to {out}")
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code
        code = _exit_code(exc)
        print(json.dumps(_error_record(exc, code)), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
