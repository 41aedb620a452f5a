"""Benchmark harness, renewable-uncertainty simulation, and sweep reports.

Everything here consumes a ``GridCase`` plus trained models and produces
plain dicts/arrays that the CLI serializes (JSON/CSV) and renders (PNG).
Statistics over test sets are computed on oracle-feasible rows only; the
number of infeasible draws is reported alongside (the extreme protocol
deliberately samples past the feasible envelope).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .baseline import DnnModel, dnn_predict_batch
from .dcopf import GridCase, axis_for_bus, build_qp, make_extreme_dataset, make_realistic_dataset, sweep_start
from .errors import Infeasible, ValidationError
from .kkt import METRICS, kkt_report_batch, metric_row_counts, summarize
from .oracle import solve_active_set
from .psnn import PsnnModel, batch_predict_arrays
from .qp_core import ParamPoint, QpProblem


@dataclass(frozen=True)
class BenchConfig:
    n_test: int = 1000
    seed: int = 0
    tol: float = 1e-9           # oracle tolerance
    timing_repeats: int = 5     # timings are medians over this many runs
    datasets: tuple = ("realistic", "extreme")

    def validate(self):
        if self.n_test <= 0:
            raise ValidationError("n_test must be positive")
        if self.timing_repeats <= 0:
            raise ValidationError("timing_repeats must be positive")
        bad = [d for d in self.datasets if d not in ("realistic", "extreme")]
        if bad:
            raise ValidationError(f"unknown datasets: {bad}")


def _test_points(case: GridCase, name: str, n: int, seed: int):
    if name == "realistic":
        return make_realistic_dataset(case, n, seed)
    return make_extreme_dataset(case, n, seed + 1)


def _objectives(problem: QpProblem, X: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    c_eff = problem.C + stacked[:, :problem.n]
    return np.einsum("ij,jk,ik->i", X, problem.Q, X) + np.sum(c_eff * X, axis=1) + problem.C0


def _oracle_sweep(problem, points, tol):
    """Solve every point once; returns (mask, X*, LAM*, MU*)."""
    n, m1, m2 = problem.n, problem.m1, problem.m2
    N = len(points)
    mask = np.zeros(N, bool)
    X = np.zeros((N, n)); LAM = np.zeros((N, m1)); MU = np.zeros((N, m2))
    for i, p in enumerate(points):
        try:
            res = solve_active_set(problem, p, tol=tol)
        except Infeasible:
            continue
        mask[i] = True
        X[i], LAM[i], MU[i] = res.solution.x, res.solution.lam, res.solution.mu
    return mask, X, LAM, MU


def _time_median(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def benchmark(case: GridCase, psnn_model: PsnnModel, dnn_model: DnnModel = None,
              cfg: BenchConfig = BenchConfig()) -> dict:
    """Accuracy, optimality-gap, and timing comparison on fresh test sets.

    Returns a plain dict: per dataset the oracle feasibility split and loop
    time, and per method the mean KKT residuals, objective-gap quantiles
    against the oracle, and the batch prediction time.
    """
    cfg.validate()
    problem = build_qp(case)
    row_counts = metric_row_counts(problem)
    report = {
        "case": case.name,
        "n_test": cfg.n_test,
        "seed": cfg.seed,
        "tol": cfg.tol,
        "datasets": list(cfg.datasets),
        "oracle": {},
        "methods": {},
    }
    methods = {"psnn": psnn_model}
    if dnn_model is not None:
        methods["dnn"] = dnn_model

    for ds_name in cfg.datasets:
        points = _test_points(case, ds_name, cfg.n_test, cfg.seed)
        stacked = np.stack([p.to_stacked() for p in points])
        mask, Xo, LAMo, MUo = _oracle_sweep(problem, points, cfg.tol)

        def oracle_loop():
            for p in points:
                try:
                    solve_active_set(problem, p, tol=cfg.tol)
                except Infeasible:
                    pass

        loop_seconds = _time_median(oracle_loop, cfg.timing_repeats)
        obj_star = _objectives(problem, Xo[mask], stacked[mask])
        report["oracle"][ds_name] = {
            "feasible": int(mask.sum()),
            "infeasible": int((~mask).sum()),
            "loop_seconds": loop_seconds,
        }

        for m_name, model in methods.items():
            if m_name == "psnn":
                predict = lambda: batch_predict_arrays(model, problem, stacked)
            else:
                varying = stacked[:, problem.varying_idx]
                predict = lambda: dnn_predict_batch(model, problem, varying)
            X, LAM, MU = predict()
            batch_seconds = _time_median(predict, cfg.timing_repeats)
            reps = kkt_report_batch(problem, stacked[mask], X[mask], LAM[mask], MU[mask])
            gaps = _objectives(problem, X[mask], stacked[mask]) - obj_star
            qs = np.percentile(gaps, [0, 25, 50, 75, 100]) if gaps.size else [np.nan] * 5
            report["methods"].setdefault(m_name, {})[ds_name] = {
                "kkt": summarize(reps, row_counts),
                "gap": {
                    "min": float(qs[0]), "q25": float(qs[1]), "median": float(qs[2]),
                    "q75": float(qs[3]), "max": float(qs[4]),
                    "median_abs": float(np.median(np.abs(gaps))) if gaps.size else float("nan"),
                },
                "batch_seconds": batch_seconds,
            }
    return report


def bench_table(report: dict) -> str:
    """Human-readable summary of a benchmark report."""
    lines = [f"case {report['case']}  n={report['n_test']}  seed={report['seed']}"]
    for ds in report["datasets"]:
        o = report["oracle"][ds]
        lines.append(f"\n[{ds}] oracle: {o['feasible']} feasible, "
                     f"{o['infeasible']} infeasible, loop {o['loop_seconds']:.3f}s")
        header = f"  {'metric':<12}" + "".join(f"{m:>14}" for m in report["methods"])
        lines.append(header)
        for metric in METRICS:
            row = f"  {metric:<12}"
            for m in report["methods"]:
                row += f"{report['methods'][m][ds]['kkt'][metric]:>14.3e}"
            lines.append(row)
        row = f"  {'gap median':<12}"
        for m in report["methods"]:
            row += f"{report['methods'][m][ds]['gap']['median']:>14.3e}"
        lines.append(row)
        row = f"  {'batch sec':<12}"
        for m in report["methods"]:
            row += f"{report['methods'][m][ds]['batch_seconds']:>14.3e}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def bench_csv(report: dict) -> str:
    """Flat CSV: one row per (method, dataset)."""
    cols = ["method", "dataset"] + list(METRICS) + [
        "gap_min", "gap_q25", "gap_median", "gap_q75", "gap_max",
        "batch_seconds", "oracle_loop_seconds", "feasible", "infeasible",
    ]
    lines = [",".join(cols)]
    for m_name, per_ds in report["methods"].items():
        for ds, entry in per_ds.items():
            o = report["oracle"][ds]
            vals = [m_name, ds]
            vals += [f"{entry['kkt'][k]:.17g}" for k in METRICS]
            g = entry["gap"]
            vals += [f"{g[k]:.17g}" for k in ("min", "q25", "median", "q75", "max")]
            vals += [f"{entry['batch_seconds']:.17g}", f"{o['loop_seconds']:.17g}",
                     str(o["feasible"]), str(o["infeasible"])]
            lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# renewable-uncertainty simulation
# ---------------------------------------------------------------------------


def load_profile() -> np.ndarray:
    """The packaged 24-hour demand scaler profile."""
    text = resources.files(__package__).joinpath("data/hourly_profile.csv").read_text()
    rows = [ln.split(",") for ln in text.splitlines()[1:] if ln.strip()]
    return np.asarray([float(r[1]) for r in rows])


@dataclass(frozen=True)
class SimConfig:
    samples_per_hour: int = 500
    rate: float = 1.25            # exponential rate parameter (mean 1/rate pu)
    cap: float = 1.5              # truncation of each renewable draw, pu
    renewable_buses: tuple = None  # default: every load bus
    seed: int = 0
    scalers: tuple = None         # default: packaged 24-hour profile
    kkt_tol: float = 1e-6         # acceptance threshold for predicted rows

    def validate(self):
        if self.samples_per_hour <= 0:
            raise ValidationError("samples_per_hour must be positive")
        if self.rate <= 0 or self.cap <= 0:
            raise ValidationError("rate and cap must be positive")
        if self.kkt_tol <= 0:
            raise ValidationError("kkt_tol must be positive")


@dataclass(eq=False)
class SimResult:
    hours: np.ndarray            # (H,)
    scalers: np.ndarray          # (H,)
    draws: np.ndarray            # (H, S, n_ren) renewable draws
    renewable_buses: tuple
    pass_counts: np.ndarray      # (H,)
    dispatch_q: np.ndarray       # (H, n_g, 5): min, q25, median, q75, max
    duals_binding: np.ndarray    # (H, m2) fraction of passing rows with mu > 1e-6
    duals_mean_pos: np.ndarray   # (H, m2) mean positive mu over passing rows
    gen_pmax: np.ndarray         # (n_g,)
    dispatch: np.ndarray         # (H, S, n_g) raw predictions
    kkt: np.ndarray              # (H, S, 6)


def simulate_uncertainty(case: GridCase, model: PsnnModel,
                         cfg: SimConfig = SimConfig()) -> SimResult:
    """Monte-Carlo day simulation under renewable infeed uncertainty.

    For each of the 24 hourly demand scalers, ``samples_per_hour`` net-demand
    profiles are built as scaler * Pd minus truncated-exponential renewable
    infeed at the configured buses, then solved in one batched network pass.
    Rows are accepted when every KKT metric is at or below ``kkt_tol``;
    dispatch quantiles and binding-limit dual summaries cover accepted rows.
    """
    cfg.validate()
    problem = build_qp(case)
    scalers = np.asarray(cfg.scalers if cfg.scalers is not None else load_profile(), float)
    if scalers.ndim != 1 or scalers.size == 0:
        raise ValidationError("scalers must be a non-empty vector")
    loads = case.load_buses()
    ren = tuple(cfg.renewable_buses) if cfg.renewable_buses is not None else tuple(loads)
    if not ren:
        raise ValidationError("no renewable buses configured")
    unknown = [b for b in ren if b not in set(loads)]
    if unknown:
        raise ValidationError(
            f"renewable buses must be load buses (varying parameters); got {unknown}")

    idx = case.bus_index()
    n, m1 = problem.n, problem.m1
    H, S = scalers.size, cfg.samples_per_hour
    n_g = case.n_gen
    demand = np.zeros(m1)
    for bus in case.buses:
        demand[idx[bus.id]] = bus.demand
    ren_cols = [idx[b] for b in ren]

    rng = np.random.default_rng(cfg.seed)
    draws = np.minimum(rng.exponential(scale=1.0 / cfg.rate, size=(H, S, len(ren))), cfg.cap)

    stacked = np.zeros((H * S, problem.stacked_size))
    for h in range(H):
        theta_e = np.tile((scalers[h] - 1.0) * demand, (S, 1))
        for c, col in enumerate(ren_cols):
            theta_e[:, col] -= draws[h, :, c]
        stacked[h * S:(h + 1) * S, n:n + m1] = theta_e

    X, LAM, MU = batch_predict_arrays(model, problem, stacked)
    reps = kkt_report_batch(problem, stacked, X, LAM, MU)
    passing = np.all(reps <= cfg.kkt_tol, axis=1).reshape(H, S)
    dispatch = X[:, :n_g].reshape(H, S, n_g)
    mu = MU.reshape(H, S, problem.m2)

    dispatch_q = np.full((H, n_g, 5), np.nan)
    duals_binding = np.full((H, problem.m2), np.nan)
    duals_mean_pos = np.full((H, problem.m2), np.nan)
    for h in range(H):
        rows = passing[h]
        if not rows.any():
            continue
        d = dispatch[h, rows]
        dispatch_q[h] = np.percentile(d, [0, 25, 50, 75, 100], axis=0).T
        m = mu[h, rows]
        duals_binding[h] = (m > 1e-6).mean(axis=0)
        pos_count = (m > 0).sum(axis=0)
        pos_sum = np.where(m > 0, m, 0.0).sum(axis=0)
        duals_mean_pos[h] = np.where(pos_count > 0, pos_sum / np.maximum(pos_count, 1), 0.0)
    return SimResult(
        hours=np.arange(H), scalers=scalers, draws=draws, renewable_buses=ren,
        pass_counts=passing.sum(axis=1), dispatch_q=dispatch_q,
        duals_binding=duals_binding, duals_mean_pos=duals_mean_pos,
        gen_pmax=np.asarray([g.pmax for g in case.generators]),
        dispatch=dispatch, kkt=reps.reshape(H, S, 6),
    )


def sim_dispatch_csv(sim: SimResult, case: GridCase) -> str:
    """Per-hour, per-generator dispatch quantiles over accepted rows."""
    header = "hour,scaler,passing,generator_bus,min,q25,median,q75,max"
    lines = [header]
    for h in sim.hours:
        for g, gen in enumerate(case.generators):
            q = sim.dispatch_q[h, g]
            lines.append(
                f"{h},{sim.scalers[h]:.17g},{int(sim.pass_counts[h])},{gen.bus},"
                + ",".join(f"{v:.17g}" for v in q)
            )
    return "\n".join(lines) + "\n"


def sim_duals_csv(sim: SimResult) -> str:
    """Per-hour binding fractions and mean positive multipliers."""
    m2 = sim.duals_binding.shape[1]
    header = "hour," + ",".join(
        [f"binding_frac_m{j}" for j in range(m2)] + [f"mean_pos_m{j}" for j in range(m2)]
    )
    lines = [header]
    for h in sim.hours:
        vals = list(sim.duals_binding[h]) + list(sim.duals_mean_pos[h])
        lines.append(f"{h}," + ",".join(f"{v:.17g}" for v in vals))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# oracle sweep report
# ---------------------------------------------------------------------------


def sweep_report(case: GridCase, bus: int, theta_max: float, step: float,
                 baseline: float = 0.01, tol: float = 1e-9) -> dict:
    """Oracle multipliers along a demand sweep at one bus.

    Returns a dict with offsets (swept-bus demand), multiplier matrix, active
    sets, and per-point status ("ok" / "infeasible").
    """
    if step <= 0 or theta_max < step:
        raise ValidationError("need 0 < step <= theta_max")
    problem = build_qp(case)
    theta0 = sweep_start(case, bus, baseline=baseline)
    axis = axis_for_bus(case, bus)
    base = float(theta0.to_stacked()[axis])
    offsets, mus, sets, statuses = [], [], [], []
    prev = None
    for i in range(int(round(theta_max / step)) + 1):
        d = i * step
        p = theta0.with_coord(problem, axis, base + d)
        offsets.append(d)
        try:
            res = solve_active_set(problem, p, tol=tol, start=prev)
            prev = res.active_set
            mus.append(res.solution.mu)
            sets.append(res.active_set.indices)
            statuses.append("ok")
        except Infeasible:
            mus.append(np.full(problem.m2, np.nan))
            sets.append(())
            statuses.append("infeasible")
            prev = None
    return {
        "case": case.name,
        "bus": bus,
        "baseline": baseline,
        "offsets": np.asarray(offsets),
        "mu": np.asarray(mus),
        "active_sets": sets,
        "statuses": statuses,
    }


def sweep_csv(rep: dict) -> str:
    m2 = rep["mu"].shape[1]
    header = "demand," + ",".join(f"mu_{j}" for j in range(m2)) + ",active_set,status"
    lines = [header]
    for d, mu, s, st in zip(rep["offsets"], rep["mu"], rep["active_sets"], rep["statuses"]):
        mu_txt = ",".join("" if np.isnan(v) else f"{v:.17g}" for v in mu)
        lines.append(f"{d:.17g},{mu_txt},{'|'.join(map(str, s))},{st}")
    return "\n".join(lines) + "\n"
