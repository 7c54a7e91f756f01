"""Command-line entry point.

Subcommands: analyze, simulate, solve, compare, validate, report.

Exit status:
    0  success
    1  a validation or policy-comparison check failed
    2  invalid input (bad flags, unknown or malformed configuration keys)
    3  solution dump missing or unreadable (``compare``, ``simulate --policy optimal``)
    4  output directory cannot be written
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .hjb import (GridSpec, HjbSolution, control_area_fraction, refinement_deltas, solve_hjb,
                  threshold_curve, value_at)
from .model import (ModelParams, critical_threshold, disengagement_boundary, drift,
                    expected_hitting_time, get_preset, hitting_probability, mean_autonomy,
                    parse_flat_config, variance_autonomy)
from .policies import QUALITY_METRIC, compare_policies, parse_policy
from .reporting import (base_meta, write_csv, write_ensemble_csv, write_path_csv, write_structured,
                        write_summary)
from .simulate import SimConfig, exact_ensemble, simulate_ensemble, simulate_path
from .validation import run_validation

log = logging.getLogger("autonomy_lab")

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NO_SOLUTION, EXIT_OUTPUT = 0, 1, 2, 3, 4

MODEL_KEYS = {f.name for f in dataclasses.fields(ModelParams)}
SIM_KEYS = {"dt": float, "n_paths": int, "master_seed": int, "record_stride": int,
            "chunk_size": int, "boundary_enabled": "bool", "bridge": "bool", "scheme": str}
GRID_KEYS = {"a_max": float, "n_a": int, "n_i": int, "n_t": int, "record_dt": float,
             "safety": float}


class InputError(Exception):
    pass


class OutputError(Exception):
    pass


def _convert(key, raw, kind):
    try:
        if kind == "bool":
            low = str(raw).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        return kind(raw)
    except ValueError:
        raise InputError(f"malformed value for {key}: {raw!r}") from None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    preset: str
    params: ModelParams
    sim: SimConfig
    grid: dict
    out: Path
    fmt: str
    overrides: dict

    def manifest(self) -> dict:
        sim = dataclasses.asdict(self.sim)
        sim.pop("n_jobs")  # outputs must not depend on the worker count
        return {"preset": self.preset, "params": self.params.to_dict(), "sim": sim,
                "grid": self.grid, "format": self.fmt, "overrides": self.overrides}


def resolve_config(args) -> RunConfig:
    try:
        params = get_preset(args.preset)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    values = {}
    if args.config:
        try:
            values = parse_flat_config(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        except Exception as exc:  # configparser errors
            raise InputError(f"malformed config {args.config}: {exc}") from None
    unknown = sorted(set(values) - MODEL_KEYS - set(SIM_KEYS) - set(GRID_KEYS))
    if unknown:
        raise InputError(f"unknown configuration keys: {unknown}")

    flag_overrides = {}
    for flag, key in (("seed", "master_seed"), ("paths", "n_paths"), ("dt", "dt")):
        v = getattr(args, flag, None)
        if v is not None:
            if key in values:
                log.info("flag --%s overrides config value %s=%s", flag, key, values[key])
            flag_overrides[key] = str(v)
    values.update(flag_overrides)

    model_vals, sim_vals, grid_vals = {}, {}, {}
    for k, raw in values.items():
        if k in MODEL_KEYS:
            model_vals[k] = _convert(k, raw, float)
        elif k in SIM_KEYS:
            sim_vals[k] = _convert(k, raw, SIM_KEYS[k])
        else:
            grid_vals[k] = _convert(k, raw, GRID_KEYS[k])
    for k in ("a_max", "n_a", "n_i"):
        v = getattr(args, k, None)
        if v is not None:
            grid_vals[k] = v
    try:
        params = params.replace(**model_vals)
        sim = SimConfig(**{"master_seed": 42, **sim_vals, "n_jobs": getattr(args, "jobs", 1)})
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {out} is not writable: {exc}") from None
    return RunConfig(args.preset, params, sim, grid_vals, out, args.format,
                     {k: values[k] for k in sorted(values)})


def _meta(rc: RunConfig, **extra):
    return base_meta(rc.preset, seed=rc.sim.master_seed, dt=rc.sim.dt,
                     n_paths=rc.sim.n_paths, **extra)


def _write_manifest(rc: RunConfig, command: str, files: list, extra: dict | None = None):
    payload = {"command": command, "config": rc.manifest(),
               "files": sorted(Path(f).name for f in files)}
    if extra:
        payload.update(extra)
    write_structured(rc.out / f"manifest_{command}.json", payload, _meta(rc))


def _grid(rc: RunConfig) -> GridSpec:
    g = dict(rc.grid)
    a_max = g.pop("a_max", 3.0)
    try:
        return GridSpec.for_params(rc.params, a_max=a_max, **g)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None


def _load_solution(path, params: ModelParams) -> HjbSolution:
    if path is None or not Path(path).exists():
        raise FileNotFoundError(f"solution dump not found: {path}")
    sol = HjbSolution.load(path)
    if sol.params != params:
        raise InputError("solution dump was computed for different parameters")
    return sol


# ---------------------------------------------------------------- analyze
def cmd_analyze(rc: RunConfig, args) -> int:
    p = rc.params
    what = args.what
    results = {}
    if what in ("critical-threshold", "all"):
        results["critical_threshold"] = critical_threshold(p)
        print(f"{results['critical_threshold']:.4g}")
    if what in ("drift", "all"):
        levels = np.linspace(0.0, p.i_max, 11)
        results["drift"] = [{"i": float(i), "drift": drift(float(i), p).value,
                             "regime": drift(float(i), p).regime.value} for i in levels]
        for row in results["drift"]:
            print(f"drift I={row['i']:<4g} {row['drift']:+.4g} {row['regime']}")
    if what in ("moments", "all"):
        times = np.linspace(0.0, p.horizon, 11)
        results["moments"] = [{"i": float(i), "t": times.tolist(),
                               "mean": mean_autonomy(times, float(i), p).tolist(),
                               "variance": variance_autonomy(times, float(i), p).tolist()}
                              for i in range(int(p.i_max) + 1)]
        for row in results["moments"]:
            print(f"E[A_T] I={row['i']:g}: {row['mean'][-1]:.4g}  Var: {row['variance'][-1]:.4g}")
    if what in ("hitting-times", "all"):
        rows = []
        for wm in (2, 3, 4, 5, 6):
            for i in range(int(p.i_max) + 1):
                ht = expected_hitting_time(p.a0, float(i), wm, p)
                rows.append({"wm": wm, "i": float(i), "boundary": disengagement_boundary(wm, p),
                             "expected_time": ht.value, "kind": ht.kind,
                             "p_by_horizon": hitting_probability(p.a0, float(i), wm, p.horizon, p)})
        results["hitting_times"] = rows
        for r in rows:
            et = "inf" if r["expected_time"] is None else f"{r['expected_time']:.4g}"
            print(f"WM={r['wm']} I={r['i']:g} B={r['boundary']:.2f} E[tau]={et} "
                  f"P(tau<T)={r['p_by_horizon']:.4g}")
    path = write_summary(rc.out / "analysis", {"analysis": results}, _meta(rc), rc.fmt)
    _write_manifest(rc, "analyze", [path])
    return EXIT_OK


# ---------------------------------------------------------------- simulate
def cmd_simulate(rc: RunConfig, args) -> int:
    solution = None
    if args.policy.split(":")[0] == "optimal":
        solution = _load_solution(args.solution, rc.params)
    try:
        policy = parse_policy(args.policy, rc.params, solution)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    stats = simulate_ensemble(policy, rc.params, rc.sim)
    meta = _meta(rc, policy=policy.label)
    files = [write_ensemble_csv(rc.out / "ensemble.csv", stats, meta)]
    for k in range(min(args.dump_paths, rc.sim.n_paths)):
        files.append(write_path_csv(rc.out / f"path_{k:04d}.csv",
                                    simulate_path(policy, rc.params, rc.sim, k), meta))
    taus = stats.absorption_times
    b = stats.batch
    files.append(write_csv(rc.out / "absorption.csv", ["path", "absorbed", "tau"],
                           zip(b.indices, ~np.isnan(b.tau), b.tau),
                           meta))
    summary = {
        "policy": policy.label,
        "absorption_fraction": stats.absorption_fraction,
        "mean_absorption_time": float(taus.mean()) if taus.size else None,
        "sd_absorption_time": float(taus.std(ddof=1)) if taus.size > 1 else None,
        "mean_final_autonomy": float(stats.final_a.mean()),
        "mean_discounted_reward": float(stats.discounted_reward.mean()),
        "mean_quality": float(stats.quality_avg.mean()),
        "quality_metric": QUALITY_METRIC,
    }
    files.append(write_summary(rc.out / "simulation", {"summary": summary}, meta, rc.fmt))
    _write_manifest(rc, "simulate", files)
    mt = summary["mean_absorption_time"]
    print(f"policy={policy.label} absorbed={summary['absorption_fraction']:.4g} "
          f"mean_tau={'nan' if mt is None else format(mt, '.4g')}")
    return EXIT_OK


# ---------------------------------------------------------------- solve
def cmd_solve(rc: RunConfig, args) -> int:
    grid = _grid(rc)
    sol = solve_hjb(rc.params, grid)
    if args.refine:
        sol.diagnostics["refinement"] = refinement_deltas(rc.params, grid, coarse=sol)
    meta = _meta(rc, grid=grid.to_dict())
    files = []
    dump = rc.out / "solution.npz"
    sol.save(dump)
    files.append(dump)
    k5 = int(np.argmin(np.abs(sol.times - rc.params.horizon / 2)))
    aa, ii = np.meshgrid(sol.a_nodes, sol.i_nodes, indexing="ij")
    files.append(write_csv(rc.out / "control_mid.csv", ["t", "a", "i", "u"],
                           zip(np.full(aa.size, sol.times[k5]), aa.ravel(), ii.ravel(),
                               sol.control[k5].ravel() * rc.params.u_max), meta))
    files.append(write_csv(rc.out / "value_t0.csv", ["a", "i", "V"],
                           zip(aa.ravel(), ii.ravel(), sol.value[0].ravel()), meta))
    files.append(write_csv(rc.out / "threshold_mid.csv", ["a", "i_star"],
                           threshold_curve(sol, float(sol.times[k5])), meta))
    files.append(write_csv(rc.out / "control_area_fraction.csv", ["t", "fraction"],
                           zip(sol.times, control_area_fraction(sol)), meta))
    if args.full_csv:
        files.append(write_csv(rc.out / "hjb_long.csv", ["t", "a", "i", "V", "u"],
                               sol.to_rows(), meta))
    summary = {"dt": sol.dt, "n_steps": sol.n_steps, "stability_bound": sol.bound,
               "diagnostics": sol.diagnostics,
               "value_a0_i0_t0": value_at(sol, rc.params.a0, rc.params.i0, 0.0)}
    files.append(write_summary(rc.out / "solve", {"summary": summary}, meta, rc.fmt))
    _write_manifest(rc, "solve", files)
    print(f"solved: {sol.n_steps} steps, dt={sol.dt:.4g}, V(a0,i0,0)={summary['value_a0_i0_t0']:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------- compare
def cmd_compare(rc: RunConfig, args) -> int:
    sol = _load_solution(args.solution, rc.params)
    report = compare_policies(rc.params, rc.sim, sol)
    meta = _meta(rc)
    files = [write_summary(rc.out / "comparison", report.to_dict(), meta, rc.fmt)]
    for name, traj in report.mean_autonomy.items():
        files.append(write_csv(rc.out / f"trajectory_{name}.csv", ["t", "mean_A"],
                               zip(report.times, traj), dict(meta, policy=name)))
    _write_manifest(rc, "compare", files, {"passed": report.passed})
    for name, r in report.reports.items():
        print(f"{name:<17} A_T={r.mean_final_autonomy:.3f} P(dis)={r.disengagement_probability:.3f} "
              f"quality={r.mean_quality:.3f} reward={r.mean_discounted_reward:.3f}")
    for k, v in report.checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return EXIT_OK if report.passed else EXIT_FAILED


# ---------------------------------------------------------------- validate
def _mc_plot_files(rc: RunConfig, report, meta) -> list:
    recs = {r.id: r.details for r in report.records}
    p1, p2 = recs["P1"], recs["P2"]
    rows = [(float(lvl), t, m, th) for lvl, d in p1["levels"].items()
            for t, m, th in zip(p1["times"], d["mean"], d["theory"])]
    files = [write_csv(rc.out / "mc_mean.csv", ["i", "t", "mean", "theory"], rows, meta)]
    if "levels" in p2:
        rows = [(float(lvl), t, v, th) for lvl, d in p2["levels"].items()
                for t, v, th in zip(p2["times"], d["variance"], d["theory"])]
        files.append(write_csv(rc.out / "mc_variance.csv", ["i", "t", "variance", "theory"],
                               rows, meta))
    p3 = recs["P3"]["levels"]
    files.append(write_csv(rc.out / "mc_hitting_times.csv", ["i", "simulated", "theory"],
                           [(float(k), d["simulated"], d["theory"]) for k, d in p3.items()], meta))
    p4 = recs["P4"]
    files.append(write_csv(rc.out / "mc_wm_sweep.csv", ["wm", "simulated", "analytic"],
                           zip(p4["wm"], p4["simulated"], p4["analytic"]), meta))
    if "level" in recs["P5"]:
        sample = exact_ensemble([rc.params.horizon], recs["P5"]["level"], rc.params,
                                rc.sim.n_paths, rc.sim.master_seed)[:, 0]
        logs = np.sort(np.log(sample))
        n = logs.size
        q = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        files.append(write_csv(rc.out / "mc_qq.csv", ["theoretical", "sample"],
                               zip(q, logs), meta))
    return files


def cmd_validate(rc: RunConfig, args) -> int:
    report = run_validation(rc.params, rc.sim)
    meta = _meta(rc)
    files = [write_summary(rc.out / "validation", report.to_dict(), meta, rc.fmt)]
    summary = report.summary()
    (rc.out / "validation_summary.txt").write_text(summary + "\n")
    files.append(rc.out / "validation_summary.txt")
    files += _mc_plot_files(rc, report, meta)
    _write_manifest(rc, "validate", files, {"passed": report.passed})
    print(summary)
    return EXIT_OK if report.passed else EXIT_FAILED


# ---------------------------------------------------------------- report
def cmd_report(rc: RunConfig, args) -> int:
    """Collate existing outputs in --out; never recomputes."""
    sections = []
    found = False
    for name in ("analyze", "simulate", "solve", "compare", "validate"):
        man = rc.out / f"manifest_{name}.json"
        if not man.exists():
            continue
        found = True
        m = json.loads(man.read_text())
        sections.append({"command": name, "files": m["files"], "passed": m.get("passed"),
                         "seed": m["meta"]["seed"], "preset": m["meta"]["preset"]})
    if not found:
        raise InputError(f"no manifests found in {rc.out}")
    lines = ["# Run report", ""]
    for s in sections:
        status = "" if s["passed"] is None else (" PASS" if s["passed"] else " FAIL")
        lines.append(f"## {s['command']}{status} (preset {s['preset']}, seed {s['seed']})")
        lines.extend(f"- {f}" for f in s["files"])
        lines.append("")
    summ = rc.out / "validation_summary.txt"
    if summ.exists():
        lines += ["## Validation summary", "", "```", summ.read_text().rstrip(), "```", ""]
    comp = rc.out / "comparison.json"
    if comp.exists():
        c = json.loads(comp.read_text())
        lines += ["## Policy comparison", ""]
        for k, r in c["reports"].items():
            lines.append(f"- {k}: final autonomy {r['mean_final_autonomy']:.3f}, "
                         f"disengagement {r['disengagement_probability']:.3f}, "
                         f"quality {r['mean_quality']:.3f}")
        lines.append("")
    (rc.out / "report.md").write_text("\n".join(lines))
    write_structured(rc.out / "report.json", {"sections": sections}, _meta(rc))
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", default="paper-2025")
    common.add_argument("--config", help="flat key = value file")
    common.add_argument("--seed", type=int)
    common.add_argument("--paths", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--out", default="out")
    common.add_argument("--format", choices=("csv", "structured"), default="structured")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (outputs unaffected)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="autonomy-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common], help="closed-form quantities")
    a.add_argument("--what", default="all",
                   choices=("critical-threshold", "drift", "moments", "hitting-times", "all"))
    s = sub.add_parser("simulate", parents=[common], help="simulate an ensemble under a policy")
    s.add_argument("--policy", default="max", help="none | max | optimal | constant:<I>")
    s.add_argument("--solution", help="solution dump for --policy optimal")
    s.add_argument("--dump-paths", type=int, default=0, help="write the first K paths as CSV")
    v = sub.add_parser("solve", parents=[common], help="solve the HJB equation")
    v.add_argument("--a-max", dest="a_max", type=float)
    v.add_argument("--n-a", dest="n_a", type=int)
    v.add_argument("--n-i", dest="n_i", type=int)
    v.add_argument("--refine", action="store_true", help="also run a doubled-grid refinement check")
    v.add_argument("--full-csv", action="store_true", help="export every stored (t, a, i) node")
    c = sub.add_parser("compare", parents=[common], help="three-arm policy comparison")
    c.add_argument("--solution", help="solution dump written by `solve`")
    sub.add_parser("validate", parents=[common], help="prediction checks and table reproduction")
    sub.add_parser("report", parents=[common], help="collate previous outputs")
    return parser


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "solve": cmd_solve,
            "compare": cmd_compare, "validate": cmd_validate, "report": cmd_report}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        rc = resolve_config(args)
        return COMMANDS[args.command](rc, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
