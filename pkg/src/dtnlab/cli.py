"""Command-line entry point.

``dtnlab run --config FILE [--out DIR] [--seed N] [--threads K]`` runs one
configured experiment and writes ``<experiment>-<timestamp>-*.csv`` tables plus
a ``<experiment>-<timestamp>-summary.json`` with one entry per assertion.

``dtnlab verify-all [--suite FILE]`` runs the acceptance checks and writes an
aggregate report.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 usage or
configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ConfigError, Experiment, ExperimentConfig, SuiteConfig, load_config
from .errors import ConvergenceError, DtnLabError, LinearSolveError
from .recon import ReconstructionError
from .tables import write_csv
from .verify import DEFAULT_TOLERANCES, Table, _jsonable, verify_all, write_tables

EXIT_OK, EXIT_ASSERT, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("dtnlab")


@dataclass
class Assertion:
    name: str
    anchor: str
    value: object
    tolerance: object
    passed: bool

    def to_dict(self) -> dict:
        return _jsonable({"assertion": self.name, "anchor": self.anchor, "value": self.value,
                          "tolerance": self.tolerance, "passed": bool(self.passed)})

    def line(self) -> str:
        return f"{self.name}: {'pass' if self.passed else 'FAIL'}"


# -- experiments ------------------------------------------------------------------------

def _exp_solve(cfg, p, mesh, base, rng, tol, threads):
    from .fem import l2_norm
    from .solver import solve_quasilinear_kirchhoff, solve_quasilinear_picard

    a, c = cfg.a.build(base), cfg.c.build(mesh, base)
    g = p.g.build(mesh, rng)
    kw = dict(tol=p.tol, max_iter=p.max_iter, damping=p.damping)
    out, asserts, cols = {}, [], []
    fields = []
    if p.path in ("picard", "both"):
        u, rep = solve_quasilinear_picard(mesh, a, c, g, **kw)
        fields.append(("u_picard", u))
        asserts.append(Assertion(f"Picard iteration converged in {rep.iterations} iterations",
                                 "fixed-point solve", rep.final_update_norm, p.tol, rep.converged))
    if p.path in ("kirchhoff", "both"):
        uk, repk = solve_quasilinear_kirchhoff(mesh, a, c, g, **kw)
        fields.append(("u_kirchhoff", uk))
        asserts.append(Assertion("semilinear route converged", "Kirchhoff transform", repk.final_update_norm,
                                 p.tol, repk.converged))
    if p.path == "both":
        d = l2_norm(mesh, fields[0][1] - fields[1][1])
        asserts.append(Assertion(f"Picard vs Kirchhoff L2 difference <= {tol['kirchhoff_l2']:g}",
                                 "Kirchhoff transform equivalence", d, tol["kirchhoff_l2"],
                                 d <= tol["kirchhoff_l2"]))
    cols = ["vertex", "x", "y"] + [n for n, _ in fields]
    rows = [[i, x, y] + [f[i] for _, f in fields] for i, (x, y) in enumerate(mesh.vertices)]
    out["solution"] = Table(cols, rows)
    return out, asserts


def _exp_dtn(cfg, p, mesh, base, rng, tol, threads):
    from .dtn import dtn_apply, linear_response

    a, c = cfg.a.build(base), cfg.c.build(mesh, base)
    g, h = p.g.build(mesh, rng), p.h.build(mesh, rng)
    r = dtn_apply(mesh, a, c, g)
    a0 = float(a(0.0))
    lg, _ = linear_response(mesh, a0, c, g)
    lh, _ = linear_response(mesh, a0, c, h)
    lgh, _ = linear_response(mesh, a0, c, g + h)
    scale = max(np.abs(lg).max(), np.abs(lh).max(), 1.0)
    sym = abs(float(lg @ h - lh @ g)) / scale
    sup = float(np.abs(lgh - lg - lh).max()) / scale
    B = mesh.boundary_nodes
    rows = [[int(k), *mesh.vertices[k], g[i], r[i], lg[i]] for i, k in enumerate(B)]
    asserts = [
        Assertion(f"linearized map symmetric <= {tol['conormal']:g}", "weak conormal pairing", sym,
                  tol["conormal"], sym <= tol["conormal"]),
        Assertion(f"linearized map superposition <= {tol['conormal']:g}", "weak conormal pairing", sup,
                  tol["conormal"], sup <= tol["conormal"]),
    ]
    return {"response": Table(["vertex", "x", "y", "g", "pairing", "pairing_linearized"], rows)}, asserts


def _exp_linearize(cfg, p, mesh, base, rng, tol, threads):
    from .dtn import limit_summary, linearization_limit

    a, c = cfg.a.build(base), cfg.c.build(mesh, base)
    g = p.g.build(mesh, rng)
    table = linearization_limit(mesh, a, c, g, p.taus, threads=threads)
    dev = [d for _, d in table]
    anchor = "linearization limit of the DtN map"
    if np.all(a.a_values == a.a_values[0]):
        m = max(dev)
        asserts = [Assertion(f"deviation <= {tol['limit_constant']:g} at all tau", anchor, m,
                             tol["limit_constant"], m <= tol["limit_constant"])]
    else:
        s = limit_summary(table)
        asserts = [
            Assertion("deviation nonincreasing over the last 4 tau", anchor, s["tail_monotone"], True,
                      s["tail_monotone"]),
            Assertion(f"log-log slope >= {tol['limit_slope']:g}", anchor, s["slope"], tol["limit_slope"],
                      s["slope"] >= tol["limit_slope"]),
        ]
    return {"linearization": Table(["tau", "deviation"], [list(t) for t in table])}, asserts


def _exp_probe_a0(cfg, p, mesh, base, rng, tol, threads):
    from .probes import a0_dichotomy_sweep

    pair1 = (p.pair1.a0, p.pair1.c.build(mesh, base))
    pair2 = (p.pair2.a0, p.pair2.c.build(mesh, base))
    rows = a0_dichotomy_sweep(mesh, pair1, pair2, sorted(p.distances, reverse=True))
    I_grad = np.array([r.I_grad for r in rows])
    I_low = np.array([r.I_low for r in rows])
    rel = max(abs(r.lhs - r.rhs) / max(abs(r.lhs), abs(r.rhs), 1e-300) for r in rows)
    anchor = "singular probe dichotomy for a(0)"
    ratio = float(I_low.max() / I_low.min())
    asserts = [
        Assertion("I_grad strictly increasing as d decreases", anchor, I_grad.tolist(), None,
                  bool(np.all(np.diff(I_grad) > 0))),
        Assertion(f"I_low max/min <= {tol['a0_low_ratio']:g}", anchor, ratio, tol["a0_low_ratio"],
                  ratio <= tol["a0_low_ratio"]),
        Assertion(f"orthogonality relation residual <= {tol['orthogonality_rel']:g}",
                  "linear orthogonality relation residual", rel, tol["orthogonality_rel"],
                  rel <= tol["orthogonality_rel"]),
    ]
    cols = ["d", "I_grad", "I_low", "lhs", "rhs", "phi_energy", "correction_norm"]
    return {"a0_dichotomy": Table(cols, [[getattr(r, k) for k in cols] for r in rows])}, asserts


def _exp_probe_au(cfg, p, mesh, base, rng, tol, threads):
    from .probes import au_dichotomy_sweep, au_sweep_summary

    a1, a2 = p.a1.build(base), p.a2.build(base)
    c = cfg.c.build(mesh, base)
    rows = au_dichotomy_sweep(mesh, a1, a2, c, p.g_high, p.g_low, sorted(p.eps, reverse=True))
    s = au_sweep_summary(rows)
    anchor = "cap datum blow-up for a(u)"
    dev = tol["cap_slope_dev"]
    asserts = [
        Assertion(f"cap term log-log slope -1 +- {dev:g}", anchor, s["cap_slope"], [-1 - dev, -1 + dev],
                  abs(s["cap_slope"] + 1) <= dev),
        Assertion("ring/cap ratio decreasing", anchor, s["ring_ratio"], None, s["ring_ratio_decreasing"]),
        Assertion(f"final ring/cap ratio < {tol['ring_ratio']:g}", anchor, s["ring_ratio_final"],
                  tol["ring_ratio"], s["ring_ratio_final"] < tol["ring_ratio"]),
        Assertion(f"probe L1 norm within factor {tol['volume_spread']:g}", anchor, s["probe_l1_spread"],
                  tol["volume_spread"], s["probe_l1_spread"] <= tol["volume_spread"]),
        Assertion(f"volume bound within factor {tol['volume_spread']:g} of its first value", anchor,
                  s["volume_bound_growth"], tol["volume_spread"], s["volume_bound_growth"] <= tol["volume_spread"]),
    ]
    cols = ["eps", "volume_term", "lhs_volume_bound", "probe_l1", "cap_term", "cap_term_quadrature",
            "ring_term", "boundary_term_quadrature"]
    return {"au_dichotomy": Table(cols, [[getattr(r, k) for k in cols] for r in rows])}, asserts


def _exp_cap(cfg, p, mesh, base, rng, tol, threads):
    from .probes import cap_integral_2d_flat, cap_integral_3d_flat

    rows = []
    for r in p.r:
        for e in p.eps:
            c3, c2 = cap_integral_3d_flat(r, e), cap_integral_2d_flat(r, e)
            rows.append([r, e, c3.closed_form, c3.quadrature, c3.error, c2.closed_form, c2.quadrature, c2.error])
    e3 = max(row[4] for row in rows)
    e2 = max(row[7] for row in rows)
    asserts = [
        Assertion(f"3D closed form vs quadrature within {tol['cap']:g}", "cap integral closed form", e3,
                  tol["cap"], e3 <= tol["cap"]),
        Assertion(f"2D closed form vs quadrature within {tol['cap']:g}", "two-dimensional cap integral", e2,
                  tol["cap"], e2 <= tol["cap"]),
    ]
    cols = ["r", "eps", "closed_3d", "quadrature_3d", "error_3d", "closed_2d", "quadrature_2d", "error_2d"]
    return {"caps": Table(cols, rows)}, asserts


def _exp_identity(cfg, p, mesh, base, rng, tol, threads):
    from .probes import au_identity_check

    a1, a2 = p.a1.build(base), p.a2.build(base)
    c = cfg.c.build(mesh, base)
    g = p.g.build(mesh, rng)
    rows, asserts = [], []
    for spec in p.lambdas:
        t = au_identity_check(mesh, a1, a2, c, g, spec.build())
        ok = t.holds(tol["identity_rel"])
        rows.append([spec.label(), t.lhs, t.rhs_volume, t.rhs_boundary, t.rhs_boundary_analytic,
                     t.relative_residual, ok])
        asserts.append(Assertion(f"identity residual <= {tol['identity_rel']:g} for {spec.label()}",
                                 "nonlinear orthogonality identity", t.relative_residual,
                                 tol["identity_rel"], ok))
    cols = ["lambda", "lhs", "rhs_volume", "rhs_boundary", "rhs_boundary_analytic", "relative_residual", "holds"]
    return {"identity": Table(cols, rows)}, asserts


def _exp_reconstruct(cfg, p, mesh, base, rng, tol, threads):
    from .recon import run_pipeline

    a_true = cfg.a.build(base)
    result = run_pipeline(mesh, a_true, cfg.c.function(), p.alpha, p.u_grid, beta_c=p.beta_c,
                          beta_a=p.beta_a, small_amplitude=p.small_amplitude, small_degree=p.small_degree,
                          large_amplitudes=p.large_amplitudes, large_degree=p.large_degree, guard=p.guard,
                          noise=p.noise, seed=cfg.seed, threads=threads)
    e = result.errors
    anchor = "staged recovery of a(0), c and a(u)"
    asserts = [
        Assertion(f"a(0) error <= {tol['recon_a0']:g}", anchor, e["a0_abs"], tol["recon_a0"],
                  e["a0_abs"] <= tol["recon_a0"]),
        Assertion(f"c relative L2 error <= {tol['recon_c']:g}", anchor, e["c_rel_l2"], tol["recon_c"],
                  e["c_rel_l2"] <= tol["recon_c"]),
        Assertion(f"a(u) swept-knot error <= {tol['recon_a']:g}", anchor, e["a_swept_max"], tol["recon_a"],
                  e["a_swept_max"] <= tol["recon_a"]),
    ]
    unswept = result.reports["a(u)"].unswept_knots
    a_ref = a_true(np.asarray(p.u_grid))
    tables = {
        "a": Table(["knot", "u", "a_true", "a_recovered", "unswept"],
                   [[k, u, a_ref[k], result.a.a_values[k], k in unswept] for k, u in enumerate(p.u_grid)]),
        "c": Table(["vertex", "x", "y", "c_recovered"],
                   [[i, x, y, v] for i, ((x, y), v) in enumerate(zip(mesh.vertices, result.c.values))]),
    }
    for stage, rep in result.reports.items():
        key = "history_" + stage.replace("(", "").replace(")", "")
        hist = rep.objective_history or rep.misfit_history
        tables[key] = Table(["iteration", "objective"], [[i, v] for i, v in enumerate(hist)])
    return tables, asserts, {"reports": {k: r.to_dict() for k, r in result.reports.items()}}


EXPERIMENTS = {
    Experiment.SOLVE: _exp_solve,
    Experiment.DTN: _exp_dtn,
    Experiment.LINEARIZE: _exp_linearize,
    Experiment.PROBE_A0: _exp_probe_a0,
    Experiment.PROBE_AU: _exp_probe_au,
    Experiment.CAP_CHECK: _exp_cap,
    Experiment.IDENTITY_CHECK: _exp_identity,
    Experiment.RECONSTRUCT: _exp_reconstruct,
}


def run_experiment(cfg: ExperimentConfig, base: Path = Path("."), threads: int = 1):
    """Run a validated configuration; returns ``(tables, assertions, extra)``."""
    mesh = cfg.mesh.build(base)
    rng = np.random.default_rng(cfg.seed)
    tol = dict(DEFAULT_TOLERANCES, **cfg.tolerances)
    out = EXPERIMENTS[cfg.experiment](cfg, cfg.typed_params, mesh, base, rng, tol, threads)
    tables, asserts = out[0], out[1]
    extra = out[2] if len(out) > 2 else {}
    return tables, asserts, extra


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    base = Path(args.config).parent
    out_dir = Path(args.out) if args.out else base / cfg.output_dir
    start = time.perf_counter()
    try:
        tables, asserts, extra = run_experiment(cfg, base, args.threads)
    except (ConvergenceError, LinearSolveError, ReconstructionError) as exc:
        report = getattr(exc, "report", None)
        print(f"solver failure in experiment '{cfg.experiment.value}': {exc}", file=sys.stderr)
        print(f"parameters: {json.dumps(cfg.model_dump(mode='json'), sort_keys=True)}", file=sys.stderr)
        if report is not None:
            print(f"report: {json.dumps(_jsonable(report.to_dict()))}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError, DtnLabError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.experiment.value}-{_timestamp()}"
    files = []
    for name, table in tables.items():
        path = out_dir / f"{stem}-{name}.csv"
        write_csv(path, table.columns, table.rows)
        files.append(path.name)
    passed = all(a.passed for a in asserts)
    summary = {
        "experiment": cfg.experiment.value,
        "seed": cfg.seed,
        "passed": passed,
        "assertions": [a.to_dict() for a in asserts],
        "tables": files,
        "seconds": time.perf_counter() - start,
        "config": cfg.model_dump(mode="json"),
        **_jsonable(extra),
    }
    (out_dir / f"{stem}-summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for a in asserts:
        print(a.line())
    print(f"outputs: {out_dir / stem}-*")
    return EXIT_OK if passed else EXIT_ASSERT


def cmd_verify_all(args) -> int:
    suite = SuiteConfig()
    if args.suite:
        try:
            suite = load_config(args.suite, SuiteConfig)
        except ConfigError as exc:
            print(f"configuration error:\n{exc}", file=sys.stderr)
            return EXIT_USAGE
    threads = args.threads or suite.threads
    seed = suite.seed if args.seed is None else args.seed
    out_dir = Path(args.out) if args.out else Path(f"verify-all-{_timestamp()}")
    start = time.perf_counter()
    results = verify_all(seed, suite.tolerances, suite.checks, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        write_tables(r, out_dir / "tables")
    report = {
        "seed": seed,
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
        "seconds": time.perf_counter() - start,
    }
    (out_dir / "verify-all-report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed; report in {out_dir}")
    return EXIT_OK if n_fail == 0 else EXIT_ASSERT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtnlab", description="Quasilinear elliptic DtN laboratory.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured experiment")
    run.add_argument("--config", required=True, help="experiment JSON file")
    run.add_argument("--out", help="output directory (overrides output_dir in the config)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads for independent solves")
    run.set_defaults(func=cmd_run)

    va = sub.add_parser("verify-all", help="run the acceptance checks")
    va.add_argument("--suite", help="suite JSON file (seed, threads, checks, tolerances)")
    va.add_argument("--out", help="output directory")
    va.add_argument("--seed", type=int, help="override the suite seed")
    va.add_argument("--threads", type=int, help="worker threads")
    va.set_defaults(func=cmd_verify_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
