"""Critical-region discovery along a parameter axis, and solver-free labeling.

``discover`` walks one stacked-parameter coordinate from its start value in
steps of alpha, keeping the current active set as long as the region solution
still satisfies the KKT system and consulting the oracle only when it stops
doing so.  Each maximal run of grid points sharing an active set becomes a
``CriticalRegion`` carrying the exact multiplier slopes for that set.

``populate`` then draws parameters uniformly inside each region and labels
them with the affine map mu = slopes theta + intercept, verifying every row
by reconstructing the primal point from mu and checking KKT residuals.  No
QP is solved during labeling.

The sweep offset d is relative to theta0: the swept coordinate takes the
value theta0[axis] + d.  This lets DC-OPF sweeps start from zero bus demand
even though the builder keeps the nominal demand inside b_e.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleDetected,
    DegenerateActiveSet,
    Infeasible,
    InfeasibleStart,
    OracleLimit,
    ParseError,
    RegionExhausted,
    SingularKkt,
    ValidationError,
)
from .kkt import is_optimal, kkt_report
from .oracle import solve_active_set
from .qp_core import (
    ActiveSet,
    FullSolution,
    ParamPoint,
    QpProblem,
    problem_from_dict,
    problem_to_dict,
    region_solution,
    slope_matrix,
    solution_from_mu,
)

ATLAS_SCHEMA_VERSION = 1
DATASET_MAX_RESAMPLE = 100


@dataclass(frozen=True, eq=False)
class CriticalRegion:
    """One maximal interval of the sweep sharing an optimal active set."""

    active_set: ActiveSet
    slopes: np.ndarray      # (|b|, n_varying)
    intercept: np.ndarray   # (|b|,)
    lo: ParamPoint
    hi: ParamPoint
    axis: int

    def lo_value(self) -> float:
        return float(self.lo.to_stacked()[self.axis])

    def hi_value(self) -> float:
        return float(self.hi.to_stacked()[self.axis])


@dataclass(eq=False)
class RegionAtlas:
    problem: QpProblem
    theta0: ParamPoint
    axis: int
    alpha: float
    theta_plus: float
    tol: float
    regions: list
    infeasible_from: float = None  # sweep offset d of the first infeasible point
    refined: bool = False

    @property
    def fingerprint(self) -> str:
        return self.problem.fingerprint

    def active_sets(self) -> list:
        return [r.active_set for r in self.regions]


@dataclass(eq=False)
class LabeledDataset:
    """Rows of (varying theta, full mu vector, region id)."""

    inputs: np.ndarray    # (N, n_varying)
    targets: np.ndarray   # (N, m2)
    region_id: np.ndarray  # (N,)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# discovery
# ---------------------------------------------------------------------------


def _sweep_point(problem, theta0, axis, value) -> ParamPoint:
    return theta0.with_coord(problem, axis, value)


def _region(problem, b, axis, lo, hi) -> CriticalRegion:
    slopes, intercept = slope_matrix(problem, b)
    return CriticalRegion(active_set=b, slopes=slopes, intercept=intercept,
                          lo=lo, hi=hi, axis=axis)


def discover(
    problem: QpProblem,
    theta0: ParamPoint,
    axis: int,
    alpha: float,
    theta_plus: float,
    tol: float = 1e-9,
    refine: bool = False,
) -> RegionAtlas:
    """Sweep coordinate ``axis`` from theta0 and collect critical regions.

    Grid points are theta0[axis] + d for d = 0, alpha, 2 alpha, ... up to
    theta_plus.  The oracle runs once per region change; interior points are
    certified by checking the current region's solution.  An infeasible grid
    point ends the sweep and is recorded as ``infeasible_from``.

    With ``refine=True`` every interior boundary is tightened by 20 bisection
    steps so consecutive regions nearly touch instead of being one grid step
    apart.
    """
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    if theta_plus < alpha:
        raise ValidationError("theta_plus must be at least alpha")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if not 0 <= axis < problem.stacked_size:
        raise ValidationError(f"axis {axis} out of range")
    if not problem.varying_mask[axis]:
        raise ValidationError(f"axis {axis} is not flagged varying")
    stacked0 = theta0.to_stacked()
    nonzero = np.flatnonzero(stacked0)
    if not set(nonzero).issubset(set(problem.varying_idx)):
        raise ValidationError(
            "theta0 has nonzero entries outside the varying mask; slope-based "
            "labeling would be inexact"
        )

    base = float(stacked0[axis])
    steps = int(round(theta_plus / alpha))

    p0 = _sweep_point(problem, theta0, axis, base)
    try:
        res = solve_active_set(problem, p0, tol=tol)
    except Infeasible as e:
        raise InfeasibleStart(f"sweep start theta0 is infeasible: {e}") from e
    current = res.active_set
    regions = [_region(problem, current, axis, p0, p0)]
    infeasible_from = None

    for i in range(1, steps + 1):
        d = i * alpha
        p = _sweep_point(problem, theta0, axis, base + d)
        ok = False
        try:
            sol = region_solution(problem, current, p)
            ok = is_optimal(kkt_report(problem, p, sol), tol)
        except (DegenerateActiveSet, SingularKkt):
            ok = False
        if ok:
            regions[-1] = _region(problem, current, axis, regions[-1].lo, p)
            continue
        try:
            res = solve_active_set(problem, p, tol=tol, start=current)
        except Infeasible:
            infeasible_from = d
            break
        except (CycleDetected, OracleLimit):
            res = solve_active_set(problem, p, tol=tol)  # cold restart
        if res.active_set == current:
            # Borderline numerics: the set did not actually change.
            regions[-1] = _region(problem, current, axis, regions[-1].lo, p)
            continue
        current = res.active_set
        regions.append(_region(problem, current, axis, p, p))

    atlas = RegionAtlas(problem=problem, theta0=theta0, axis=axis, alpha=alpha,
                        theta_plus=theta_plus, tol=tol, regions=regions,
                        infeasible_from=infeasible_from)
    if refine:
        _refine_boundaries(atlas)
    return atlas


def _refine_boundaries(atlas: RegionAtlas, iters: int = 20):
    """Bisect each interior boundary so adjacent regions nearly touch."""
    problem, axis = atlas.problem, atlas.axis
    for i in range(len(atlas.regions) - 1):
        left, right = atlas.regions[i], atlas.regions[i + 1]
        a, b = left.hi_value(), right.lo_value()
        for _ in range(iters):
            mid = 0.5 * (a + b)
            p = atlas.theta0.with_coord(problem, axis, mid)
            try:
                sol = region_solution(problem, left.active_set, p)
                good = is_optimal(kkt_report(problem, p, sol), atlas.tol)
            except (DegenerateActiveSet, SingularKkt):
                good = False
            if good:
                a = mid
            else:
                b = mid
        atlas.regions[i] = _region(
            problem, left.active_set, axis, left.lo,
            atlas.theta0.with_coord(problem, axis, a))
        atlas.regions[i + 1] = _region(
            problem, right.active_set, axis,
            atlas.theta0.with_coord(problem, axis, b), right.hi)
    atlas.refined = True


# ---------------------------------------------------------------------------
# solver-free labeling
# ---------------------------------------------------------------------------


def _label_at(problem, region, p, tol):
    """Affine mu label plus KKT verification; returns (ok, varying, mu)."""
    varying = p.to_stacked()[problem.varying_idx]
    mu = np.zeros(problem.m2)
    if len(region.active_set):
        mu[region.active_set.as_array()] = region.slopes @ varying + region.intercept
    x, lam = solution_from_mu(problem, mu, p)
    ok = is_optimal(kkt_report(problem, p, FullSolution(x, lam, mu)), tol)
    return ok, varying, mu


def populate(problem: QpProblem, atlas: RegionAtlas, per_region: int, seed: int) -> LabeledDataset:
    """Draw ``per_region`` labeled rows inside every region of the atlas.

    Sampling is uniform on the swept coordinate within [lo, hi]; every row is
    verified against the KKT system before acceptance, with at most
    ``DATASET_MAX_RESAMPLE`` redraws per row.  Depends only on (seed, region
    index), so regions could be populated independently.
    """
    if per_region <= 0:
        raise ValidationError("per_region must be positive")
    if problem.fingerprint != atlas.fingerprint:
        raise ValidationError("atlas does not belong to this problem")
    inputs, targets, region_id = [], [], []
    for i, region in enumerate(atlas.regions):
        rng = np.random.default_rng([seed, i])
        lo, hi = region.lo_value(), region.hi_value()
        for _ in range(per_region):
            for _attempt in range(DATASET_MAX_RESAMPLE):
                value = rng.uniform(lo, hi)
                p = atlas.theta0.with_coord(problem, atlas.axis, value)
                ok, varying, mu = _label_at(problem, region, p, atlas.tol)
                if ok:
                    inputs.append(varying)
                    targets.append(mu)
                    region_id.append(i)
                    break
            else:
                raise RegionExhausted(
                    f"region {i} (active set {region.active_set.indices}) failed "
                    f"verification {DATASET_MAX_RESAMPLE} times in a row"
                )
    return LabeledDataset(
        inputs=np.asarray(inputs), targets=np.asarray(targets),
        region_id=np.asarray(region_id, dtype=int),
        meta={"seed": seed, "per_region": per_region, "axis": atlas.axis},
    )


def second_axis_extend(problem: QpProblem, atlas: RegionAtlas, axis2: int,
                       per_region: int, seed: int) -> LabeledDataset:
    """Reuse the atlas intervals on a second varying coordinate.

    The working assumption is that each region's interval carries over to
    ``axis2`` with all other coordinates held at theta0.  Rows that fail KKT
    verification (the assumption does not hold there) are redrawn and
    eventually dropped, with the drop count reported in ``meta`` and as a
    warning.  Returns an empty dataset when no distinct second axis exists.
    """
    if per_region <= 0:
        raise ValidationError("per_region must be positive")
    if problem.fingerprint != atlas.fingerprint:
        raise ValidationError("atlas does not belong to this problem")
    empty = LabeledDataset(
        inputs=np.zeros((0, problem.n_varying)),
        targets=np.zeros((0, problem.m2)),
        region_id=np.zeros(0, dtype=int),
        meta={"seed": seed, "axis2": axis2, "drops": 0},
    )
    if axis2 == atlas.axis or axis2 not in set(problem.varying_idx):
        warnings.warn(
            f"no distinct varying second axis (axis2={axis2}); returning an "
            f"empty dataset", stacklevel=2)
        return empty

    inputs, targets, region_id = [], [], []
    drops = 0
    for i, region in enumerate(atlas.regions):
        rng = np.random.default_rng([seed, i, 2])
        lo, hi = region.lo_value(), region.hi_value()
        for _ in range(per_region):
            accepted = False
            for _attempt in range(DATASET_MAX_RESAMPLE):
                value = rng.uniform(lo, hi)
                p = atlas.theta0.with_coord(problem, axis2, value)
                ok, varying, mu = _label_at(problem, region, p, atlas.tol)
                if ok:
                    inputs.append(varying)
                    targets.append(mu)
                    region_id.append(i)
                    accepted = True
                    break
            if not accepted:
                drops += 1
    if drops:
        warnings.warn(f"second_axis_extend dropped {drops} rows that never "
                      f"passed verification", stacklevel=2)
    if not inputs:
        empty.meta["drops"] = drops
        return empty
    return LabeledDataset(
        inputs=np.asarray(inputs), targets=np.asarray(targets),
        region_id=np.asarray(region_id, dtype=int),
        meta={"seed": seed, "per_region": per_region, "axis2": axis2, "drops": drops},
    )


def merge_datasets(a: LabeledDataset, b: LabeledDataset) -> LabeledDataset:
    if a.inputs.shape[1] != b.inputs.shape[1] or a.targets.shape[1] != b.targets.shape[1]:
        raise ValidationError("datasets have incompatible widths")
    return LabeledDataset(
        inputs=np.vstack([a.inputs, b.inputs]),
        targets=np.vstack([a.targets, b.targets]),
        region_id=np.concatenate([a.region_id, b.region_id]),
        meta={"merged": [a.meta, b.meta]},
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def atlas_to_dict(atlas: RegionAtlas) -> dict:
    return {
        "schema_version": ATLAS_SCHEMA_VERSION,
        "problem": problem_to_dict(atlas.problem),
        "fingerprint": atlas.fingerprint,
        "theta0": atlas.theta0.to_stacked().tolist(),
        "axis": atlas.axis,
        "alpha": atlas.alpha,
        "theta_plus": atlas.theta_plus,
        "tol": atlas.tol,
        "infeasible_from": atlas.infeasible_from,
        "refined": atlas.refined,
        "regions": [
            {
                "active_set": list(r.active_set.indices),
                "slopes": np.asarray(r.slopes).tolist(),
                "intercept": np.asarray(r.intercept).tolist(),
                "lo": r.lo.to_stacked().tolist(),
                "hi": r.hi.to_stacked().tolist(),
            }
            for r in atlas.regions
        ],
    }


def atlas_from_dict(doc: dict) -> RegionAtlas:
    try:
        if doc.get("schema_version") != ATLAS_SCHEMA_VERSION:
            raise ParseError(f"unsupported atlas schema_version {doc.get('schema_version')!r}")
        problem = problem_from_dict(doc["problem"])
        axis = int(doc["axis"])
        regions = []
        for r in doc["regions"]:
            # an empty slope matrix serializes as [], so restore its
            # (0, n_varying) shape explicitly
            regions.append(CriticalRegion(
                active_set=ActiveSet.of(r["active_set"]),
                slopes=np.asarray(r["slopes"], float).reshape(-1, problem.n_varying),
                intercept=np.asarray(r["intercept"], float),
                lo=ParamPoint.from_stacked(problem, np.asarray(r["lo"], float)),
                hi=ParamPoint.from_stacked(problem, np.asarray(r["hi"], float)),
                axis=axis,
            ))
        atlas = RegionAtlas(
            problem=problem,
            theta0=ParamPoint.from_stacked(problem, np.asarray(doc["theta0"], float)),
            axis=axis,
            alpha=float(doc["alpha"]),
            theta_plus=float(doc["theta_plus"]),
            tol=float(doc["tol"]),
            regions=regions,
            infeasible_from=doc.get("infeasible_from"),
            refined=bool(doc.get("refined", False)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed atlas document: {e}") from e
    if doc.get("fingerprint") and doc["fingerprint"] != atlas.fingerprint:
        raise ParseError("atlas fingerprint does not match the embedded problem")
    return atlas


def atlas_to_json(atlas: RegionAtlas) -> str:
    return json.dumps(atlas_to_dict(atlas), indent=2)


def atlas_from_json(text: str) -> RegionAtlas:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid atlas JSON: {e}") from e
    return atlas_from_dict(doc)


def dataset_to_csv(ds: LabeledDataset) -> str:
    n_in, n_out = ds.inputs.shape[1], ds.targets.shape[1]
    header = ",".join(
        [f"t{i}" for i in range(n_in)] + [f"m{j}" for j in range(n_out)] + ["region"]
    )
    lines = [header]
    for row_in, row_out, rid in zip(ds.inputs, ds.targets, ds.region_id):
        vals = [f"{v:.17g}" for v in row_in] + [f"{v:.17g}" for v in row_out]
        lines.append(",".join(vals + [str(int(rid))]))
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str) -> LabeledDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty dataset file")
    header = lines[0].split(",")
    n_in = sum(1 for h in header if h.startswith("t"))
    n_out = sum(1 for h in header if h.startswith("m"))
    if header != [f"t{i}" for i in range(n_in)] + [f"m{j}" for j in range(n_out)] + ["region"]:
        raise ParseError("unrecognized dataset header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != n_in + n_out + 1:
            raise ParseError(f"dataset row has {len(parts)} fields, expected {n_in + n_out + 1}")
        rows.append([float(v) for v in parts])
    arr = np.asarray(rows)
    if arr.size == 0:
        arr = arr.reshape(0, n_in + n_out + 1)
    return LabeledDataset(
        inputs=arr[:, :n_in],
        targets=arr[:, n_in:n_in + n_out],
        region_id=arr[:, -1].astype(int),
        meta={},
    )
