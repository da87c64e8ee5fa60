"""Command-line interface: simulate / moments / fit / gamma-scan / validate /
compare / preprocess.

Every output embeds the invocation options and master seed, and every code
path is deterministic given --seed, so reruns are byte-identical.  Usage
errors exit 2; computation errors exit 1 with the originating error class.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .exceptions import NlimError
from .experiments import run_lorenz, run_table1
from .io import dump_json, load_json, load_trajectory, save_trajectory
from .lim import colored_lim_fit, default_gamma_grid, gamma_select, reconstruct_K, white_lim_fit
from .metrics import wasserstein_1d
from .models import LinModel, model_from_dict, model_to_dict
from .moments import estimate_moments, forward_derivatives
from .nlim import ConstraintSpec, QOptConfig, colored_nlim_fit, white_nlim_fit
from .preprocess import load_monthly_csv, monthly_anomalies
from .simulate import (
    ChainConfig,
    SimPlan,
    WallSpec,
    default_wall,
    derive_seed,
    simulate,
    stationary_moments,
    strided_initial_states,
)

METHODS = ("white-lim", "colored-lim", "white-nlim", "colored-nlim")


def _provenance(args) -> dict:
    opts = {k: v for k, v in sorted(vars(args).items()) if k != "func" and not callable(v)}
    return {"tool": f"nlim {__version__}", "options": _json_safe(opts)}


def _parse_wall(text: str, data=None):
    if text == "off":
        return None
    if text == "auto":
        return "auto"
    try:
        r, m = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("wall must be 'auto', 'off' or 'r,m'")
    return (r, m)


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, k = text.split(":")
        return np.geomspace(float(lo), float(hi), int(k))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must be 'lo:hi:count'")


def cmd_simulate(args) -> int:
    model = model_from_dict(load_json(args.model))
    wall = _parse_wall(args.wall)
    plan = SimPlan(
        dt=args.dt,
        t_final=args.tf,
        initial_state=np.zeros(model.n) if args.x0 is None else np.array(args.x0, dtype=float),
        subsample=args.subsample,
        seed=args.seed,
        record_noise=args.record_noise,
        discard=0.0 if args.keep_transient else "auto",
    )
    if wall == "auto":
        pilot_plan = SimPlan(
            dt=args.dt,
            t_final=min(args.tf, max(50.0, 100 * args.dt)),
            initial_state=plan.initial_state,
            subsample=args.subsample,
            seed=derive_seed(args.seed, 999),
        )
        pilot = simulate(model, None, pilot_plan)
        wall = default_wall(pilot)
    elif isinstance(wall, tuple):
        wall = WallSpec(center=np.zeros(model.n), radius=wall[0], steepness=wall[1])
    traj = simulate(model, wall, plan)
    save_trajectory(args.out, traj, meta={"provenance": _provenance(args), "seed": args.seed})
    print(f"wrote {traj.n_samples} samples (dt={traj.dt_out:g}) to {args.out}")
    return 0


def cmd_moments(args) -> int:
    traj = load_trajectory(args.data)
    m = estimate_moments(traj, max_lag=args.max_lag, max_lag_s=args.max_lag_s)
    out = m.to_dict()
    out["provenance"] = _provenance(args)
    dump_json(args.out, out)
    print(f"wrote moments (n={m.n}, lags 0..{m.max_lag}) to {args.out}")
    return 0


def _load_constraints(path, n):
    spec = ConstraintSpec.from_dict(load_json(path))
    if spec.n != n:
        raise NlimError(f"constraints are for n={spec.n}, data has n={n}")
    return spec


def cmd_fit(args) -> int:
    traj = load_trajectory(args.data)
    scan = None
    max_lag = 2
    if args.method == "colored-lim" and args.gamma is None:
        window = args.window if args.window is not None else 12 * traj.dt_out
        max_lag = max(2, int(np.floor(window / traj.dt_out + 1e-9)))
    m = estimate_moments(traj, max_lag=max_lag, max_lag_s=1)
    d = forward_derivatives(m)
    constraints = _load_constraints(args.constraints, m.n) if args.constraints else None
    if constraints is not None and args.method in ("white-lim", "colored-lim"):
        raise NlimError("structural constraints apply to the quadratic fits only")

    extra = {}
    if args.method == "white-lim":
        model = white_lim_fit(m, d)
        fitinfo = {k: v for k, v in model.info.items()}
    elif args.method == "colored-lim":
        if args.gamma is None:
            grid = args.gamma_grid if args.gamma_grid is not None else default_gamma_grid()
            window = args.window if args.window is not None else 12 * traj.dt_out
            scan = gamma_select(m, d, grid, window)
            gamma = scan.best
            extra["gamma_scan"] = scan.to_dict()
        else:
            gamma = args.gamma
        model = colored_lim_fit(m, d, gamma)
        fitinfo = {k: v for k, v in model.info.items()}
    elif args.method == "white-nlim":
        report = white_nlim_fit(m, d, constraints=constraints)
        model = report.model
        fitinfo = report.to_dict()
        fitinfo.pop("model")
    else:
        if args.gamma is None:
            raise NlimError("colored-nlim requires --gamma")
        opt = None
        if not args.no_q_minimize:
            sim_length = args.opt_sim_length
            if sim_length is None:
                sim_length = max(10.0 * traj.duration, 2000.0 * traj.dt_out)
            n_chains = 64
            sub = max(20, int(np.ceil(5.0 * traj.dt_out / args.gamma)))
            opt = QOptConfig(
                wall=default_wall(traj, multiplier=args.wall_multiplier),
                init=strided_initial_states(traj, n_chains),
                seed=derive_seed(args.seed, 11),
                t_burn=30.0 * traj.dt_out,
                t_measure=sim_length / n_chains,
                dt=traj.dt_out / sub,
                subsample=sub,
                max_evals=args.opt_evals,
                ftol_rel=1e-6,
            )
        report = colored_nlim_fit(m, d, args.gamma, constraints=constraints, opt=opt)
        model = report.model
        fitinfo = report.to_dict()
        fitinfo.pop("model")

    out = model_to_dict(model, provenance={**_provenance(args), "seed": args.seed})
    out["fit"] = _json_safe(fitinfo)
    out.update(_json_safe(extra))
    dump_json(args.out, out)
    print(f"fitted {args.method} (n={model.n}); wrote {args.out}")
    return 0


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def cmd_gamma_scan(args) -> int:
    traj = load_trajectory(args.data)
    window = args.window if args.window is not None else 12 * traj.dt_out
    max_lag = max(2, int(np.floor(window / traj.dt_out + 1e-9)))
    m = estimate_moments(traj, max_lag=max_lag, max_lag_s=1)
    d = forward_derivatives(m)
    grid = args.gamma_grid if args.gamma_grid is not None else default_gamma_grid()
    scan = gamma_select(m, d, grid, window)
    out = scan.to_dict()
    out["provenance"] = _provenance(args)
    dump_json(args.out, out)
    print(f"best gamma = {scan.best:g} (objective {scan.objective[scan.best_index]:.6g})")
    return 0


def cmd_validate(args) -> int:
    if args.target == "table1":
        kinds = ["white", "colored"] if args.noise == "both" else [args.noise]
        tables = {}
        for kind in kinds:
            table = run_table1(
                noise_kind=kind,
                t_final=args.tf,
                realizations=args.realizations,
                seed=args.seed,
                full=args.full,
                progress=args.progress,
            )
            tables[kind] = table.to_dict()
            print(table.to_text())
        report = {"target": "table1", "tables": tables, "provenance": _provenance(args)}
    else:
        result = run_lorenz(
            restriction=not args.no_restriction,
            subsample=args.subsample,
            t_final=args.tf if args.tf is not None else 2000.0,
            seed=args.seed,
            minimize_q=args.minimize_q,
        )
        readout = result["readout"]
        print("lorenz readout: " + ", ".join(f"{k}={v:.4f}" for k, v in readout.items()))
        report = {
            "target": "lorenz",
            "readout": readout,
            "fit": _json_safe(result["report"].to_dict()),
            "config": result["config"],
            "provenance": _provenance(args),
        }
    if args.out:
        dump_json(args.out, report)
    return 0


def _sim_resolution(model, dt_out):
    """Integration step and subsample factor resolving both the output grid
    and, for colored noise, the correlation time."""
    sub = 20
    if model.noise.is_colored:
        sub = max(sub, int(np.ceil(5.0 * dt_out / model.noise.gamma)))
    return dt_out / sub, sub


def _model_marginal_samples(model, data, sim_length, seed, wall_multiplier):
    n_chains = 64
    dt_sim, sub = _sim_resolution(model, data.dt_out)
    cfg = ChainConfig(
        init=strided_initial_states(data, n_chains),
        t_burn=30.0 * data.dt_out,
        t_measure=sim_length / n_chains,
        dt=dt_sim,
        subsample=sub,
        seed=seed,
    )
    stats = stationary_moments(model, default_wall(data, multiplier=wall_multiplier), cfg, max_lag=0)
    return stats


def cmd_compare(args) -> int:
    traj = load_trajectory(args.data)
    model = model_from_dict(load_json(args.fit))
    metrics = [mname.strip() for mname in args.metrics.split(",") if mname.strip()]
    max_lag = args.max_lag if args.max_lag is not None else min(24, (traj.n_samples - 2) // 2)
    m_obs = estimate_moments(traj, max_lag=max_lag, max_lag_s=1)
    sim_length = args.sim_length if args.sim_length is not None else 100.0 * traj.duration

    report = {"provenance": _provenance(args), "kind": model_to_dict(model)["kind"]}
    stats = None
    taus = np.arange(max_lag + 1) * traj.dt_out

    if "corr" in metrics:
        if isinstance(model, LinModel):
            K_model = reconstruct_K(model, m_obs.K[0], taus)
            M_model = None
        else:
            dt_sim, sub = _sim_resolution(model, traj.dt_out)
            cfg = ChainConfig(
                init=strided_initial_states(traj, 64),
                t_burn=30.0 * traj.dt_out,
                t_measure=sim_length / 64,
                dt=dt_sim,
                subsample=sub,
                seed=derive_seed(args.seed, 21),
            )
            stats = stationary_moments(
                model, default_wall(traj, multiplier=args.wall_multiplier), cfg, max_lag=max_lag
            )
            K_model = np.array(stats.K)
            M_model = np.array(stats.M)
        csv_path = args.out.rsplit(".", 1)[0] + "_corr.csv"
        _write_corr_csv(csv_path, taus, m_obs, K_model, M_model)
        report["corr_csv"] = csv_path
        report["corr_abs_error_K"] = float(np.linalg.norm(np.array(m_obs.K) - K_model))
        if M_model is not None:
            report["corr_abs_error_M"] = float(np.linalg.norm(np.array(m_obs.M) - M_model))

    if "wasserstein" in metrics:
        mstats = _model_marginal_samples(
            model, traj, sim_length, derive_seed(args.seed, 22), args.wall_multiplier
        )
        samples = mstats.samples
        ws = {}
        for p in (1, 2):
            ws[f"p{p}"] = [
                wasserstein_1d(traj.values[:, c], samples[:, c], p=p) for c in range(traj.n)
            ]
        obs_c = traj.values - traj.values.mean(axis=0)
        report["wasserstein"] = ws
        report["third_central"] = {
            "observed": (obs_c**3).mean(axis=0).tolist(),
            "model": mstats.third_central.tolist(),
        }

    dump_json(args.out, report)
    print(f"wrote comparison to {args.out}")
    return 0


def _write_corr_csv(path, taus, m_obs, K_model, M_model):
    n = m_obs.n
    cols = ["lag"]
    cols += [f"K_obs_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    cols += [f"K_model_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    cols += [f"M_obs_{i + 1}{j + 1}{k + 1}" for i in range(n) for j in range(n) for k in range(j, n)]
    if M_model is not None:
        cols += [f"M_model_{i + 1}{j + 1}{k + 1}" for i in range(n) for j in range(n) for k in range(j, n)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for t_idx, tau in enumerate(taus):
            fields = [repr(float(tau))]
            fields += [repr(float(v)) for v in m_obs.K[t_idx].ravel()]
            fields += [repr(float(v)) for v in K_model[t_idx].ravel()]
            fields += [
                repr(float(m_obs.M[t_idx, i, j, k]))
                for i in range(n)
                for j in range(n)
                for k in range(j, n)
            ]
            if M_model is not None:
                fields += [
                    repr(float(M_model[t_idx, i, j, k]))
                    for i in range(n)
                    for j in range(n)
                    for k in range(j, n)
                ]
            fh.write(",".join(fields) + "\n")


def cmd_preprocess(args) -> int:
    series = load_monthly_csv(args.data)
    traj = monthly_anomalies(series, window=args.window)
    save_trajectory(args.out, traj, meta={"provenance": _provenance(args), "columns": list(series.names)})
    print(f"wrote {traj.n_samples} monthly anomalies to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nlim",
        description="Fit and validate linear/quadratic stochastic models with white or colored noise.",
    )
    p.add_argument("--version", action="version", version=f"nlim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="integrate a model and write a trajectory CSV")
    ps.add_argument("--model", required=True, help="model JSON file")
    ps.add_argument("--tf", type=float, required=True, help="total duration (time units)")
    ps.add_argument("--dt", type=float, default=1e-3, help="integration step")
    ps.add_argument("--subsample", type=int, default=10, help="output every k-th step")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.add_argument("--record-noise", action="store_true", help="record colored-noise samples")
    ps.add_argument("--wall", default="off", help="'auto', 'off' or 'radius,steepness'")
    ps.add_argument("--x0", type=float, nargs="+", default=None, help="initial state (default zeros)")
    ps.add_argument("--keep-transient", action="store_true", help="do not discard the initial transient")
    ps.set_defaults(func=cmd_simulate)

    pm = sub.add_parser("moments", help="estimate lagged moment tensors from a trajectory")
    pm.add_argument("--data", required=True)
    pm.add_argument("--max-lag", type=int, default=24)
    pm.add_argument("--max-lag-s", type=int, default=1)
    pm.add_argument("--out", required=True)
    pm.set_defaults(func=cmd_moments)

    pf = sub.add_parser("fit", help="fit a model to a trajectory")
    pf.add_argument("--method", required=True, choices=METHODS)
    pf.add_argument("--data", required=True)
    pf.add_argument("--gamma", type=float, default=None, help="noise correlation time (colored fits)")
    pf.add_argument("--gamma-grid", type=_parse_grid, default=None, help="lo:hi:count log grid for selection")
    pf.add_argument("--window", type=float, default=None, help="gamma-selection lag window (time units)")
    pf.add_argument("--constraints", default=None, help="structural constraints JSON")
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--opt-evals", type=int, default=None, help="Q-refinement evaluation budget")
    pf.add_argument("--opt-sim-length", type=float, default=None, help="effective simulated length per objective call")
    pf.add_argument("--no-q-minimize", action="store_true", help="keep the closed-form Q (colored-nlim)")
    pf.add_argument("--wall-multiplier", type=float, default=1.5, help="confining-wall radius factor for model simulations")
    pf.add_argument("--out", required=True)
    pf.set_defaults(func=cmd_fit)

    pg = sub.add_parser("gamma-scan", help="scan the noise correlation time for a colored linear fit")
    pg.add_argument("--data", required=True)
    pg.add_argument("--gamma-grid", type=_parse_grid, default=None)
    pg.add_argument("--window", type=float, default=None)
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=cmd_gamma_scan)

    pv = sub.add_parser("validate", help="run a bundled benchmark experiment")
    pv.add_argument("target", choices=["table1", "lorenz"])
    pv.add_argument("--noise", choices=["white", "colored", "both"], default="both")
    pv.add_argument("--tf", type=float, default=1000.0)
    pv.add_argument("--realizations", type=int, default=20)
    pv.add_argument("--full", action="store_true", help="full-scale settings (slow)")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--no-restriction", action="store_true", help="lorenz: fit without structural constraints")
    pv.add_argument("--subsample", action="store_true", help="lorenz: coarsen the sampling tenfold")
    pv.add_argument("--minimize-q", action="store_true", help="lorenz: refine Q by simulation")
    pv.add_argument("--progress", action="store_true")
    pv.add_argument("--out", default=None)
    pv.set_defaults(func=cmd_validate)

    pc = sub.add_parser("compare", help="observed vs model correlations and distributions")
    pc.add_argument("--fit", required=True, help="fit/model JSON")
    pc.add_argument("--data", required=True)
    pc.add_argument("--metrics", default="corr,wasserstein")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--max-lag", type=int, default=None)
    pc.add_argument("--sim-length", type=float, default=None)
    pc.add_argument("--wall-multiplier", type=float, default=1.5, help="confining-wall radius factor for model simulations")
    pc.add_argument("--out", required=True)
    pc.set_defaults(func=cmd_compare)

    pp = sub.add_parser("preprocess", help="monthly series to standardized anomalies")
    pp.add_argument("--data", required=True, help="monthly CSV (date,<name>,...)")
    pp.add_argument("--window", type=int, default=3)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_preprocess)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NlimError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
