"""Batch command-line front door.

Subcommands
-----------
run       integrate one configuration, write trajectory artifacts
gap       energy-gap report over a family of trajectory CSVs
verify    inequality suites on a random field ensemble
converge  nested-resolution convergence study

Exit codes: 0 all checks pass, 1 check failure, 2 usage/config error,
3 runtime error (stiffness, I/O).  PLSF_THREADS caps fan-out workers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import gap as gapmod
from . import inequalities as ineq
from .basis import basis_capacity
from .config import RunConfig, load_config, serialize_config, with_overrides
from .constitutive import (
    FluidParams,
    oo_identity_residual,
    oo_residual_scale,
)
from .errors import CapacityError, ConfigError, PlsfError, StiffnessError
from .fields import SpectralVelocity, save_checkpoint
from .galerkin import TrajectoryRecord, run_trajectory


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonify(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- run ---------------------------------------------------------------------


def cmd_run(cfg: RunConfig, out_dir: str | None) -> int:
    directory = Path(out_dir or cfg.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    want_ckpt = "checkpoint" in cfg.output_formats
    if want_ckpt:
        record, states = run_trajectory(cfg.solver, collect_states_at=[cfg.solver.T])
    else:
        record = run_trajectory(cfg.solver)
    record.to_csv(directory / "trajectory.csv")
    if "json" in cfg.output_formats:
        summary = {
            "p": record.p,
            "mu": record.mu,
            "N": record.N,
            "T": cfg.solver.T,
            "steps": record.steps,
            "rejections": record.rejections,
            "samples": int(record.times.size),
            "final_energy": float(record.energy[-1]),
            "initial_energy": float(record.energy[0]),
            "config": serialize_config(cfg),
        }
        _write_json(directory / "summary.json", summary)
    if want_ckpt:
        grid = cfg.solver.build_grid()
        save_checkpoint(directory / "final_state.plsf",
                        SpectralVelocity(grid, states[-1], validate=False))
    print(f"run: N={record.N} steps={record.steps} "
          f"samples={record.times.size} -> {directory}")
    return 0


# -- gap ---------------------------------------------------------------------


def _load_manifest(path: str):
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("p", "trajectories"):
        if key not in manifest:
            raise ConfigError([f"manifest {path} lacks the {key!r} field"])
    records = []
    for entry in manifest["trajectories"]:
        traj_path = Path(entry["path"])
        if not traj_path.is_absolute():
            traj_path = Path(path).parent / traj_path
        if not traj_path.exists():
            raise FileNotFoundError(f"manifest references missing file {traj_path}")
        records.append(
            TrajectoryRecord.from_csv(
                traj_path, p=manifest["p"], mu=manifest.get("mu", float("nan")),
                N=int(entry["N"]),
            )
        )
    return manifest, records


def cmd_gap(manifest_path: str, s: float, t: float, alphas, out: str | None) -> int:
    manifest, records = _load_manifest(manifest_path)
    table = gapmod.exponents(manifest["p"])
    est = gapmod.gap_estimate(records, s, t, alphas, table.gamma)
    failures = []
    for row_group, alpha in zip(est.per_alpha, est.alphas):
        for row in row_group:
            rec = next(r for r in records if r.N == row["N"])
            part = gapmod.exceedance_partition(rec, s, t, alpha, table.gamma)
            budget = gapmod.energy_residual_over(rec, part)
            mismatch = abs(row["dissipation_form"] - row["jump_form"])
            if mismatch > budget + 1e-10 * max(1.0, abs(row["dissipation_form"])):
                failures.append(
                    {"N": row["N"], "alpha": alpha, "mismatch": mismatch,
                     "budget": budget}
                )
    report = gapmod.gap_report_json(est, table)
    report["two_form_failures"] = failures
    out_path = out or "gap_report.json"
    _write_json(out_path, report)
    print(f"gap: M_estimate={est.M_estimate!r} at alpha={est.M_alpha!r} "
          f"plateau={est.plateau_found} -> {out_path}")
    return 1 if failures else 0


# -- verify ------------------------------------------------------------------

SUITES = ("lemma1", "friedrichs", "lemma3", "interp", "oo", "ap3")


def _suite_lemma1(ensemble, params):
    half = ensemble.count // 2
    cal = ineq.FieldEnsemble(**{**ensemble.__dict__, "samples": ensemble.samples[:half]})
    fresh = ineq.FieldEnsemble(**{**ensemble.__dict__, "samples": ensemble.samples[half:]})
    calibration = ineq.check_lemma1(cal, params.p)
    report = ineq.check_lemma1(fresh, params.p, frozen_c=2.0 * calibration.empirical_C)
    passed = report.violations == 0
    return passed, {"calibrated_C": calibration.empirical_C,
                    "frozen_C": report.frozen_C, **report.to_json()}


def _suite_friedrichs(ensemble, params):
    r1 = ineq.check_friedrichs(ensemble, max(params.p, 1.3), 0.1)
    r2 = ineq.check_friedrichs(ensemble, max(params.p, 1.3), 0.05)
    passed = r2.kappa >= r1.kappa
    return passed, {"kappa_eps_0.1": r1.kappa, "kappa_eps_0.05": r2.kappa,
                    "monotone_in_eps": passed}

def _suite_lemma3(ensemble, params):
    mus = (1e-2, 1.0, 1e2)
    constants = {"SD1": [], "SD4": [], "SD2": []}
    for mu in mus:
        for rep in ineq.check_lemma3(ensemble, FluidParams(params.p, mu)):
            constants[rep.id].append(rep.empirical_C)
    detail = {}
    passed = True
    for name, vals in constants.items():
        spread = max(vals) / min(vals)
        ok = spread < 2.0
        passed = passed and ok
        detail[name] = {"constants_by_mu": dict(zip(map(str, mus), vals)),
                        "spread": spread, "mu_stable": ok}
    return passed, detail


def _suite_interp(ensemble, params):
    reports = ineq.check_interpolations(ensemble, params.p)
    passed = reports["c1"].violations == 0 and reports["c2"].violations == 0
    return passed, {k: r.to_json() for k, r in reports.items()}


def _suite_oo(ensemble, params, count, seed):
    rng = np.random.default_rng(seed)
    d = ensemble.dim
    failures = 0
    worst = 0.0
    for _ in range(count):
        A = rng.standard_normal((d, d)) * 10 ** rng.uniform(-2, 2)
        dA = rng.standard_normal((d, d)) * 10 ** rng.uniform(-2, 2)
        A = 0.5 * (A + A.T)
        dA = 0.5 * (dA + dA.T)
        res = oo_identity_residual(A, dA, params)
        scale = oo_residual_scale(A, dA, params)
        worst = max(worst, res / scale if scale > 0 else 0.0)
        if res > 1e-10 * scale:
            failures += 1
    return failures == 0, {"count": count, "failures": failures,
                           "worst_scaled_residual": worst}


def _suite_ap3(ensemble, params):
    report = ineq.check_ap3(ensemble, params)
    rows = report.pop("rows")
    del rows
    return report["violations"] == 0, report


def cmd_verify(cfg: RunConfig, suites: list[str], out: str | None) -> int:
    needs_mu = {"lemma3", "oo", "ap3"} & set(suites)
    if needs_mu and cfg.solver.mu <= 0:
        raise ConfigError(
            [f"suites {sorted(needs_mu)} need [fluid] mu > 0, got {cfg.solver.mu}"]
        )
    params = FluidParams(cfg.solver.p, cfg.solver.mu)
    results = {}
    all_pass = True
    ensemble = None
    if suites:
        ensemble = ineq.FieldEnsemble.generate(
            cfg.solver.dim, cfg.solver.M, cfg.solver.L,
            band=cfg.verify_band, decay=cfg.verify_decay,
            seed=cfg.verify_seed, count=cfg.verify_count,
            amplitude=cfg.verify_amplitude, dealias=cfg.solver.dealias,
        )
    for suite in suites:
        if suite == "lemma1":
            passed, detail = _suite_lemma1(ensemble, params)
        elif suite == "friedrichs":
            passed, detail = _suite_friedrichs(ensemble, params)
        elif suite == "lemma3":
            passed, detail = _suite_lemma3(ensemble, params)
        elif suite == "interp":
            passed, detail = _suite_interp(ensemble, params)
        elif suite == "oo":
            passed, detail = _suite_oo(ensemble, params, cfg.verify_count,
                                       cfg.verify_seed)
        elif suite == "ap3":
            passed, detail = _suite_ap3(ensemble, params)
        else:
            raise ConfigError([f"unknown suite {suite!r}; choose from {SUITES}"])
        results[suite] = {"pass": passed, "detail": detail}
        all_pass = all_pass and passed
        print(f"verify {suite:<12} {'PASS' if passed else 'FAIL'}")
    if out:
        _write_json(out, results)
    return 0 if all_pass else 1


# -- converge ----------------------------------------------------------------


def _study_times(cfg: RunConfig) -> list[float]:
    T = cfg.solver.T
    dt = cfg.study_state_dt
    n = int(np.floor(T / dt + 1e-9))
    times = [k * dt for k in range(n + 1)]
    if times[-1] < T:
        times.append(T)
    return times


def _run_study_member(args):
    solver_cfg, times = args
    return run_trajectory(solver_cfg, collect_states_at=times)


def cmd_converge(cfg: RunConfig, out: str | None) -> int:
    if cfg.study_N_list is None:
        raise ConfigError(["[study] N_list is required for the convergence study"])
    n_list = list(cfg.study_N_list)
    grid = cfg.solver.build_grid()
    cap = basis_capacity(grid)
    if n_list[-1] > cap:
        raise ConfigError(
            [f"[study] N_list max {n_list[-1]} exceeds grid capacity {cap}"]
        )
    times = _study_times(cfg)
    jobs = [(with_overrides(cfg, N=N, lambda_cut=None).solver, times) for N in n_list]
    workers = int(os.environ.get("PLSF_THREADS", "1"))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_study_member, jobs))
    else:
        outputs = [_run_study_member(job) for job in jobs]

    table = gapmod.exponents(cfg.solver.p)
    beta = table.beta if table.beta_variant != "undefined" else 1.0
    records = [rec for rec, _ in outputs]
    states = [st for _, st in outputs]
    ref_states = states[-1]

    from .fields import gradient, lp_norm

    report = {
        "N_list": n_list,
        "q_list": list(cfg.study_q_list),
        "state_times": times,
        "beta_used": beta,
        "beta_variant": table.beta_variant,
        "errors": {},
        "monotone": {},
        "pointwise_fraction_improving": [],
        "pc_integrals": [],
        "histograms": [],
    }
    p = cfg.solver.p
    grad_norm_diffs = []  # per member: |grad-norm deviation| at each time
    for member, member_states in enumerate(states[:-1]):
        diffs = []
        for c_n, c_ref in zip(member_states, ref_states):
            v_diff = SpectralVelocity(grid, c_n - c_ref, validate=False)
            diffs.append(lp_norm(gradient(v_diff), p))
        diffs = np.array(diffs)
        grad_norm_diffs.append(diffs)
        for q in cfg.study_q_list:
            e = float(np.trapezoid(diffs**q, times) ** (1.0 / q))
            report["errors"].setdefault(repr(q), []).append(e)

    for q in cfg.study_q_list:
        e_vals = report["errors"][repr(q)]
        report["monotone"][repr(q)] = all(
            b < a for a, b in zip(e_vals, e_vals[1:])
        )

    # pointwise a.e.-convergence surrogate on ||grad v||_2
    dev_rows = []
    for member_states in states[:-1]:
        devs = []
        for c_n, c_ref in zip(member_states, ref_states):
            g_n = lp_norm(gradient(SpectralVelocity(grid, c_n, validate=False)), 2.0)
            g_r = lp_norm(gradient(SpectralVelocity(grid, c_ref, validate=False)), 2.0)
            devs.append(abs(g_n - g_r))
        dev_rows.append(np.array(devs))
    edges = [0.0] + [10.0**e for e in range(-14, 3)]
    for devs in dev_rows:
        hist, _ = np.histogram(devs, bins=edges)
        report["histograms"].append([int(x) for x in hist])
    for prev, nxt in zip(dev_rows, dev_rows[1:]):
        improving = float(np.mean(nxt <= prev + 1e-15))
        report["pointwise_fraction_improving"].append(improving)

    for rec in records:
        report["pc_integrals"].append(
            float(np.trapezoid(rec.rho ** (beta / 2.0), rec.times))
        )

    report["all_monotone"] = all(report["monotone"].values())
    out_path = out or "convergence_report.json"
    _write_json(out_path, report)
    for q in cfg.study_q_list:
        print(f"converge q={q}: e_N={report['errors'][repr(q)]} "
              f"monotone={report['monotone'][repr(q)]}")
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plsf",
        description="Pseudo-spectral power-law fluid solver and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")

    p_gap = sub.add_parser("gap", help="energy-gap report from a manifest")
    p_gap.add_argument("manifest")
    p_gap.add_argument("--s", type=float, required=True)
    p_gap.add_argument("--t", type=float, required=True)
    p_gap.add_argument("--alphas", required=True,
                       help="comma-separated alpha grid (radians)")
    p_gap.add_argument("--out", default=None)

    p_ver = sub.add_parser("verify", help="inequality suites")
    p_ver.add_argument("config")
    p_ver.add_argument("--suites", default=",".join(SUITES))
    p_ver.add_argument("--out", default=None)

    p_con = sub.add_parser("converge", help="nested-resolution study")
    p_con.add_argument("config")
    p_con.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(load_config(args.config), args.out)
        if args.command == "gap":
            alphas = [float(x) for x in args.alphas.split(",") if x.strip()]
            return cmd_gap(args.manifest, args.s, args.t, alphas, args.out)
        if args.command == "verify":
            suites = [s.strip() for s in args.suites.split(",") if s.strip()]
            return cmd_verify(load_config(args.config), suites, args.out)
        if args.command == "converge":
            return cmd_converge(load_config(args.config), args.out)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        for line in exc.violations:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except (ValueError, CapacityError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (StiffnessError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except PlsfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
