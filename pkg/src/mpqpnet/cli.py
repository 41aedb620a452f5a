"""Command-line interface.

Subcommands cover the full workflow: solve single instances, discover
critical regions, generate solver-free datasets, train the partially
supervised and baseline networks, predict, benchmark, simulate a day of
renewable uncertainty, and dump oracle sweeps.  Report-style commands write
delimited output plus a PNG figure next to it (disable with --no-figures).

Randomized commands require --seed so results are reproducible; pass
--entropy instead to draw a seed from the OS (it is printed).

Exit codes: 0 success, 2 validation/usage, 3 infeasible instance,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import secrets
import sys

import numpy as np

from . import baseline as bl
from . import bench as bn
from . import dcopf
from . import discovery as dv
from . import psnn as ps
from .errors import MpqpError, ValidationError
from .kkt import METRICS, kkt_report
from .oracle import solve_active_set
from .qp_core import ParamPoint, problem_from_json, problem_to_json


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _read(path):
    return pathlib.Path(path).read_text()


def _write(path, text):
    p = pathlib.Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p


def _load_case(spec: str) -> dcopf.GridCase:
    path = pathlib.Path(spec)
    if path.exists():
        return dcopf.parse_case(path.read_text(), name=path.stem)
    return dcopf.load_case(spec)


def _load_problem(args):
    """Resolve the problem from --problem / --case / --atlas."""
    if getattr(args, "problem", None):
        return problem_from_json(_read(args.problem)), None
    if getattr(args, "case", None):
        case = _load_case(args.case)
        return dcopf.build_qp(case), case
    if getattr(args, "atlas", None):
        atlas = dv.atlas_from_json(_read(args.atlas))
        return atlas.problem, None
    raise ValidationError("one of --case / --problem is required")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if getattr(args, "entropy", False):
        seed = secrets.randbits(32)
        print(f"seed drawn from OS entropy: {seed}")
        return seed
    raise ValidationError("this command is randomized: pass --seed N (or --entropy)")


def _parse_theta(problem, args) -> ParamPoint:
    if getattr(args, "theta", None):
        vals = [float(v) for v in args.theta.replace(";", ",").split(",") if v.strip()]
        if len(vals) != problem.stacked_size:
            raise ValidationError(
                f"--theta needs {problem.stacked_size} values "
                f"(n={problem.n} + m1={problem.m1} + m2={problem.m2}), got {len(vals)}")
        return ParamPoint.from_stacked(problem, np.asarray(vals))
    if getattr(args, "scale", None) is not None:
        if getattr(args, "case", None) is None:
            raise ValidationError("--scale requires --case")
        case = _load_case(args.case)
        pts = dcopf.make_realistic_dataset(case, 1, seed=0, lo=args.scale, hi=args.scale)
        return pts[0]
    return ParamPoint.zeros(problem)


def _theta_rows_from_csv(text: str) -> np.ndarray:
    """Varying-parameter rows from a CSV with t0..tk columns (extras ignored)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty input CSV")
    header = lines[0].split(",")
    t_cols = [i for i, h in enumerate(header) if h.strip().startswith("t")]
    if not t_cols:
        raise ValidationError("input CSV has no t* columns")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append([float(parts[i]) for i in t_cols])
    return np.asarray(rows)


def _solutions_csv(problem, X, LAM, MU, reports=None) -> str:
    n, m1, m2 = problem.n, problem.m1, problem.m2
    cols = [f"x{i}" for i in range(n)] + [f"lam{i}" for i in range(m1)] + \
           [f"mu{i}" for i in range(m2)]
    if reports is not None:
        cols += list(METRICS)
    lines = [",".join(cols)]
    for i in range(X.shape[0]):
        vals = list(X[i]) + list(LAM[i]) + list(MU[i])
        if reports is not None:
            vals += list(reports[i])
        lines.append(",".join(f"{v:.17g}" for v in vals))
    return "\n".join(lines) + "\n"


def _figures_enabled(args) -> bool:
    return not getattr(args, "no_figures", False)


def _sibling(path, suffix) -> str:
    p = pathlib.Path(path)
    return str(p.with_name(p.stem + suffix))


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def cmd_solve(args):
    problem, _case = _load_problem(args)
    p = _parse_theta(problem, args)
    res = solve_active_set(problem, p, tol=args.tol)
    rep = kkt_report(problem, p, res.solution)
    from .qp_core import objective
    doc = {
        "x": res.solution.x.tolist(),
        "lam": res.solution.lam.tolist(),
        "mu": res.solution.mu.tolist(),
        "objective": objective(problem, res.solution.x, p),
        "active_set": list(res.active_set.indices),
        "iterations": res.iterations,
        "kkt": rep.as_dict(),
    }
    if args.format == "table":
        lines = [f"objective    {doc['objective']:.9g}",
                 f"active set   {doc['active_set']}",
                 f"iterations   {doc['iterations']}"]
        lines += [f"x[{i}]        {v:.9g}" for i, v in enumerate(doc["x"])]
        lines += [f"lam[{i}]      {v:.9g}" for i, v in enumerate(doc["lam"])]
        lines += [f"mu[{i}]       {v:.9g}" for i, v in enumerate(doc["mu"])]
        lines += [f"kkt {k:<10} {v:.3e}" for k, v in doc["kkt"].items()]
        out = "\n".join(lines) + "\n"
    else:
        out = json.dumps(doc, indent=2) + "\n"
    if args.out:
        _write(args.out, out)
    else:
        sys.stdout.write(out)
    return 0


def cmd_discover(args):
    problem, case = _load_problem(args)
    if args.bus is not None:
        if case is None:
            raise ValidationError("--bus requires --case")
        axis = dcopf.axis_for_bus(case, args.bus)
        theta0 = dcopf.sweep_start(case, args.bus, baseline=args.baseline)
        theta_plus = args.theta_plus if args.theta_plus is not None else case.total_capacity()
    else:
        if args.axis is None:
            raise ValidationError("pass --bus (with --case) or --axis")
        axis = args.axis
        theta0 = ParamPoint.zeros(problem)
        if args.theta_plus is None:
            raise ValidationError("--theta-plus is required with --axis")
        theta_plus = args.theta_plus
    atlas = dv.discover(problem, theta0, axis, alpha=args.alpha,
                        theta_plus=theta_plus, tol=args.tol, refine=args.refine)
    _write(args.out, dv.atlas_to_json(atlas))
    print(f"{len(atlas.regions)} regions -> {args.out}")
    for i, r in enumerate(atlas.regions):
        print(f"  region {i}: active={list(r.active_set.indices)} "
              f"axis range [{r.lo_value():.6g}, {r.hi_value():.6g}]")
    if atlas.infeasible_from is not None:
        print(f"  infeasible from sweep offset {atlas.infeasible_from:.6g}")
    return 0


def cmd_gen_data(args):
    atlas = dv.atlas_from_json(_read(args.atlas))
    problem = atlas.problem
    seed = _resolve_seed(args)
    ds = dv.populate(problem, atlas, per_region=args.per_region, seed=seed)
    _write(args.out, dv.dataset_to_csv(ds))
    print(f"{len(ds)} rows -> {args.out}")
    if args.axis2 is not None or args.bus2 is not None:
        axis2 = args.axis2
        if axis2 is None:
            if args.case is None:
                raise ValidationError("--bus2 requires --case")
            axis2 = dcopf.axis_for_bus(_load_case(args.case), args.bus2)
        ext = dv.second_axis_extend(problem, atlas, axis2,
                                    per_region=args.per_region, seed=seed)
        out2 = args.out_extend or _sibling(args.out, "_axis2.csv")
        _write(out2, dv.dataset_to_csv(ext))
        print(f"{len(ext)} extension rows ({ext.meta.get('drops', 0)} dropped) -> {out2}")
    return 0


def cmd_train(args):
    atlas = dv.atlas_from_json(_read(args.atlas))
    problem = atlas.problem
    seed = _resolve_seed(args)
    train_ds = dv.dataset_from_csv(_read(args.data))
    val_ds = dv.dataset_from_csv(_read(args.val))
    net = ps.build_mu_net(atlas, seed=seed, analytic_init=args.analytic_init)
    cfg = ps.TrainConfig(
        learning_rate=args.lr, max_epochs=args.epochs, tol=args.tol_train,
        batch_size=args.batch, seed=seed, optimizer=args.optimizer,
    )
    trained, hist = ps.train(net, train_ds, val_ds, cfg)
    model = ps.build_model(problem, trained)
    _write(args.out, ps.model_to_json(model))
    print(f"trained {hist['epochs']} epochs, train MSE {hist['train'][-1]:.3e}, "
          f"val MSE {hist['val'][-1]:.3e} -> {args.out}")
    hist_path = args.history or _sibling(args.out, "_history.csv")
    lines = ["epoch,train_mse,val_mse,lr"]
    for i, (tr, va, lr) in enumerate(zip(hist["train"], hist["val"], hist["lr"])):
        lines.append(f"{i},{tr:.17g},{va:.17g},{lr:.17g}")
    _write(hist_path, "\n".join(lines) + "\n")
    if _figures_enabled(args):
        from . import plots
        fig = plots.loss_figure(hist, _sibling(args.out, "_loss.png"))
        print(f"loss curve -> {fig}")
    return 0


def cmd_train_baseline(args):
    if args.case is None:
        raise ValidationError("--case is required")
    case = _load_case(args.case)
    problem = dcopf.build_qp(case)
    seed = _resolve_seed(args)
    pts_train = dcopf.make_realistic_dataset(case, args.n_train, seed=seed)
    pts_val = dcopf.make_realistic_dataset(case, args.n_val, seed=seed + 1)
    train_ds = bl.make_solution_dataset(problem, pts_train, tol=args.tol)
    val_ds = bl.make_solution_dataset(problem, pts_val, tol=args.tol)
    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip())
    cfg = bl.BaselineConfig(hidden=hidden, learning_rate=args.lr,
                            max_epochs=args.epochs, batch_size=args.batch,
                            patience=args.patience, seed=seed)
    model = bl.init_dnn(problem, cfg)
    trained, hist = bl.train_baseline(model, train_ds, val_ds, cfg)
    _write(args.out, bl.baseline_to_json(trained))
    print(f"baseline trained {hist['epochs']} epochs, best val MSE "
          f"{hist['best_val']:.3e} -> {args.out}")
    if _figures_enabled(args):
        from . import plots
        fig = plots.loss_figure(hist, _sibling(args.out, "_loss.png"),
                                title="baseline training loss")
        print(f"loss curve -> {fig}")
    return 0


def _predict_common(args, kind):
    problem, _case = _load_problem(args)
    if kind == "psnn":
        model = ps.model_from_json(_read(args.model))
    else:
        model = bl.baseline_from_json(_read(args.model))
    if args.data:
        thetas = _theta_rows_from_csv(_read(args.data))
        if thetas.shape[1] != problem.n_varying:
            raise ValidationError(
                f"input rows have {thetas.shape[1]} varying values, "
                f"expected {problem.n_varying}")
        stacked = np.zeros((thetas.shape[0], problem.stacked_size))
        stacked[:, problem.varying_idx] = thetas
    else:
        p = _parse_theta(problem, args)
        stacked = p.to_stacked()[None, :]
    if kind == "psnn":
        X, LAM, MU = ps.batch_predict_arrays(model, problem, stacked,
                                             clamp=not args.no_clamp)
    else:
        X, LAM, MU = bl.dnn_predict_batch(model, problem,
                                          stacked[:, problem.varying_idx])
    reports = None
    if args.kkt:
        from .kkt import kkt_report_batch
        reports = kkt_report_batch(problem, stacked, X, LAM, MU)
    out = _solutions_csv(problem, X, LAM, MU, reports)
    if args.out:
        _write(args.out, out)
        print(f"{X.shape[0]} predictions -> {args.out}")
    else:
        sys.stdout.write(out)
    return 0


def cmd_predict(args):
    return _predict_common(args, "psnn")


def cmd_predict_baseline(args):
    return _predict_common(args, "baseline")


def cmd_benchmark(args):
    case = _load_case(args.case)
    psnn_model = ps.model_from_json(_read(args.psnn))
    dnn_model = bl.baseline_from_json(_read(args.dnn)) if args.dnn else None
    seed = _resolve_seed(args)
    cfg = bn.BenchConfig(n_test=args.n, seed=seed, tol=args.tol,
                         timing_repeats=args.repeats)
    report = bn.benchmark(case, psnn_model, dnn_model, cfg)
    _write(args.out, json.dumps(report, indent=2) + "\n")
    csv_path = _sibling(args.out, ".csv")
    _write(csv_path, bn.bench_csv(report))
    sys.stdout.write(bn.bench_table(report))
    print(f"report -> {args.out}, {csv_path}")
    if _figures_enabled(args):
        from . import plots
        fig = plots.bench_figure(report, _sibling(args.out, ".png"))
        print(f"figure -> {fig}")
    return 0


def cmd_simulate(args):
    case = _load_case(args.case)
    model = ps.model_from_json(_read(args.model))
    seed = _resolve_seed(args)
    scalers = None
    if args.profile:
        text = _read(args.profile)
        rows = [ln.split(",") for ln in text.splitlines()[1:] if ln.strip()]
        scalers = tuple(float(r[1]) for r in rows)
    ren = None
    if args.renewable_buses:
        ren = tuple(int(b) for b in args.renewable_buses.split(",") if b.strip())
    rate = args.rate
    if args.renewable_mean:
        rate = 1.0 / rate  # interpret the parameter as a mean instead
    cfg = bn.SimConfig(samples_per_hour=args.samples, rate=rate, cap=args.cap,
                       renewable_buses=ren, seed=seed, scalers=scalers,
                       kkt_tol=args.kkt_tol)
    sim = bn.simulate_uncertainty(case, model, cfg)
    prefix = args.out
    p1 = _write(f"{prefix}_dispatch.csv", bn.sim_dispatch_csv(sim, case))
    p2 = _write(f"{prefix}_duals.csv", bn.sim_duals_csv(sim))
    total = sim.pass_counts.sum()
    print(f"{sim.hours.size} hours x {cfg.samples_per_hour} samples, "
          f"{int(total)} passed KKT at {cfg.kkt_tol:g} -> {p1}, {p2}")
    if _figures_enabled(args):
        from . import plots
        labels = [f"bus {g.bus}" for g in case.generators]
        fig = plots.sim_figure(sim.hours, sim.dispatch_q, sim.pass_counts,
                               f"{prefix}.png", gen_labels=labels)
        print(f"figure -> {fig}")
    return 0


def cmd_sweep(args):
    case = _load_case(args.case)
    rep = bn.sweep_report(case, args.bus, theta_max=args.max, step=args.step,
                          baseline=args.baseline, tol=args.tol)
    _write(args.out, bn.sweep_csv(rep))
    n_ok = sum(1 for s in rep["statuses"] if s == "ok")
    print(f"{len(rep['offsets'])} points ({n_ok} feasible) -> {args.out}")
    if _figures_enabled(args):
        from . import plots
        fig = plots.sweep_figure(rep["offsets"], rep["mu"], rep["statuses"],
                                 _sibling(args.out, ".png"),
                                 axis_label=f"bus {args.bus} demand (pu)")
        print(f"figure -> {fig}")
    return 0


def cmd_export_problem(args):
    problem, _case = _load_problem(args)
    out = problem_to_json(problem) + "\n"
    if args.out:
        _write(args.out, out)
        print(f"problem -> {args.out}")
    else:
        sys.stdout.write(out)
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def _add_problem_sources(p, with_atlas=False):
    p.add_argument("--case", help="packaged case name or case file (JSON / MATPOWER .m)")
    p.add_argument("--problem", help="problem JSON file")
    if with_atlas:
        p.add_argument("--atlas", help="atlas JSON file (problem is embedded)")


def _add_common(p, seed=False, out_required=False):
    p.add_argument("--tol", type=float, default=1e-9, help="KKT tolerance (default 1e-9)")
    p.add_argument("--out", required=out_required,
                   help="output path" + (" (required)" if out_required else ""))
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--entropy", action="store_true",
                       help="draw the seed from OS entropy (printed)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mpqpnet",
        description="Exact multiparametric QP solutions, critical-region "
                    "discovery, and partially supervised networks for DC-OPF.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance with the oracle")
    _add_problem_sources(p, with_atlas=True)
    p.add_argument("--theta", help="stacked theta values, comma separated")
    p.add_argument("--scale", type=float, help="scale case demand by this factor")
    p.add_argument("--format", choices=("json", "table"), default="json")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("discover", help="sweep an axis and build a region atlas")
    _add_problem_sources(p)
    p.add_argument("--bus", type=int, help="sweep this bus's demand (with --case)")
    p.add_argument("--axis", type=int, help="stacked parameter index to sweep")
    p.add_argument("--alpha", type=float, default=0.01, help="sweep step (default 0.01)")
    p.add_argument("--theta-plus", type=float, default=None,
                   help="sweep extent (default: case capacity)")
    p.add_argument("--baseline", type=float, default=0.01,
                   help="demand at the other load buses (default 0.01 pu)")
    p.add_argument("--refine", action="store_true", help="bisect region boundaries")
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("gen-data", help="populate labeled data from an atlas")
    p.add_argument("--atlas", required=True)
    p.add_argument("--per-region", type=int, required=True)
    p.add_argument("--case", help="needed only with --bus2")
    p.add_argument("--axis2", type=int, help="extend along this stacked axis")
    p.add_argument("--bus2", type=int, help="extend along this bus's demand axis")
    p.add_argument("--out-extend", help="path for the extension rows")
    _add_common(p, seed=True, out_required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the partially supervised network")
    p.add_argument("--atlas", required=True)
    p.add_argument("--data", required=True, help="training CSV from gen-data")
    p.add_argument("--val", required=True, help="validation CSV")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=50_000)
    p.add_argument("--tol-train", type=float, default=1e-12,
                   help="stop when validation MSE falls below this")
    p.add_argument("--batch", type=int, default=None, help="minibatch size (default full)")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--analytic-init", action="store_true",
                   help="start b0 at the exact region intercepts")
    p.add_argument("--history", help="path for the loss history CSV")
    _add_common(p, seed=True, out_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-baseline", help="train the fully supervised DNN")
    p.add_argument("--case", required=True)
    p.add_argument("--n-train", type=int, default=5000)
    p.add_argument("--n-val", type=int, default=1000)
    p.add_argument("--hidden", default="64,64,64")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--patience", type=int, default=50)
    _add_common(p, seed=True, out_required=True)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("predict", help="predict with a trained PSNN model")
    _add_problem_sources(p, with_atlas=True)
    p.add_argument("--model", required=True)
    p.add_argument("--theta", help="stacked theta values, comma separated")
    p.add_argument("--scale", type=float)
    p.add_argument("--data", help="CSV with t* columns for batch prediction")
    p.add_argument("--no-clamp", action="store_true",
                   help="do not clamp negative multiplier predictions")
    p.add_argument("--kkt", action="store_true", help="append KKT residual columns")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("predict-baseline", help="predict with the baseline DNN")
    _add_problem_sources(p, with_atlas=True)
    p.add_argument("--model", required=True)
    p.add_argument("--theta", help="stacked theta values, comma separated")
    p.add_argument("--scale", type=float)
    p.add_argument("--data", help="CSV with t* columns for batch prediction")
    p.add_argument("--kkt", action="store_true", help="append KKT residual columns")
    p.set_defaults(no_clamp=True)
    _add_common(p)
    p.set_defaults(func=cmd_predict_baseline)

    p = sub.add_parser("benchmark", help="compare PSNN, baseline, and oracle")
    p.add_argument("--case", required=True)
    p.add_argument("--psnn", required=True, help="PSNN model JSON")
    p.add_argument("--dnn", help="baseline model JSON")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=5)
    _add_common(p, seed=True, out_required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("simulate", help="Monte-Carlo day under renewable uncertainty")
    p.add_argument("--case", required=True)
    p.add_argument("--model", required=True, help="PSNN model JSON")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--rate", type=float, default=1.25,
                   help="exponential rate of renewable infeed (default 1.25)")
    p.add_argument("--renewable-mean", action="store_true",
                   help="interpret --rate as the mean instead of the rate")
    p.add_argument("--cap", type=float, default=1.5,
                   help="truncate renewable draws at this (default 1.5 pu)")
    p.add_argument("--renewable-buses", help="comma-separated bus ids")
    p.add_argument("--profile", help="CSV with hour,scaler rows (default: packaged)")
    p.add_argument("--kkt-tol", type=float, default=1e-6)
    _add_common(p, seed=True, out_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="oracle multipliers along a demand sweep")
    p.add_argument("--case", required=True)
    p.add_argument("--bus", type=int, required=True)
    p.add_argument("--max", type=float, required=True, help="sweep extent in pu")
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--baseline", type=float, default=0.01)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-problem", help="dump the QP built from a case")
    _add_problem_sources(p, with_atlas=True)
    _add_common(p)
    p.set_defaults(func=cmd_export_problem)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        code = args.func(args)
    except MpqpError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
