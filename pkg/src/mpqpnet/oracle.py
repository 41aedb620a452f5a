"""Reference QP solvers used as ground truth for everything else.

Two independent paths:

* ``solve_enumerate`` -- brute force over active-set candidates in order of
  increasing cardinality.  Slow but essentially assumption-free; this is the
  verification oracle used by the tests.
* ``solve_active_set`` -- primal active-set iteration (add most-violated row,
  drop most-negative multiplier) with Bland-style lowest-index selection once
  a state repeats.  This is the production oracle used for dataset labeling
  and timing baselines.

Feasibility certification is delegated to ``scipy.optimize.linprog`` (HiGHS).
``solve_enumerate`` runs it up front for clean Infeasible signaling; the
active-set path consults it only after the iteration fails, so the common
(feasible) path stays a pure sequence of small dense solves.

Multipliers below ``DUAL_THRESHOLD`` are zeroed in reported solutions, making
complementary slackness exact on inactive rows; the reported active set is
the set of rows with multipliers above the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .errors import (
    CycleDetected,
    DegenerateActiveSet,
    Infeasible,
    NumericError,
    OracleLimit,
    SingularKkt,
    ValidationError,
)
from .kkt import is_optimal, kkt_report
from .qp_core import ActiveSet, FullSolution, ParamPoint, QpProblem, region_solution

# Multipliers at or below this are treated as zero / inactive.
DUAL_THRESHOLD = 1e-9

# Enumeration refuses problems with more inequality rows than this.
ENUMERATE_MAX_M2 = 20


@dataclass(frozen=True)
class OracleResult:
    solution: FullSolution
    active_set: ActiveSet
    iterations: int
    method: str


def check_feasible(problem: QpProblem, p: ParamPoint) -> None:
    """Phase-1 feasibility check; raises ``Infeasible`` when the constraint
    system { Ae x = be + theta_e, Ac x <= bc + theta_C } has no solution."""
    res = linprog(
        c=np.zeros(problem.n),
        A_ub=problem.Ac if problem.m2 else None,
        b_ub=problem.bc + p.theta_C if problem.m2 else None,
        A_eq=problem.Ae if problem.m1 else None,
        b_eq=problem.be + p.theta_e if problem.m1 else None,
        bounds=[(None, None)] * problem.n,
        method="highs",
    )
    if res.status == 2:
        raise Infeasible("constraint system is infeasible at this theta")
    if res.status != 0:  # pragma: no cover - unbounded cannot happen for phase-1
        raise NumericError(f"phase-1 LP ended with status {res.status}: {res.message}")


def _finalize(sol: FullSolution, iterations: int, method: str) -> OracleResult:
    mu = np.array(sol.mu)
    mu[mu <= DUAL_THRESHOLD] = 0.0
    active = ActiveSet.of(np.flatnonzero(mu > DUAL_THRESHOLD))
    return OracleResult(
        solution=FullSolution(sol.x, sol.lam, mu),
        active_set=active,
        iterations=iterations,
        method=method,
    )


def solve_enumerate(problem: QpProblem, p: ParamPoint, tol: float = 1e-9) -> OracleResult:
    """Try every LICQ-compatible active set, smallest first.

    Returns the first candidate whose region solution satisfies all KKT
    metrics at ``tol``.  Subsets with m1 + |b| > n are skipped outright
    (their stacked rows cannot be independent).
    """
    if problem.m2 > ENUMERATE_MAX_M2:
        raise OracleLimit(
            f"enumeration limited to m2 <= {ENUMERATE_MAX_M2}, got {problem.m2}"
        )
    check_feasible(problem, p)
    tried = 0
    max_card = min(problem.m2, problem.n - problem.m1)
    for k in range(max_card + 1):
        for comb in combinations(range(problem.m2), k):
            tried += 1
            b = ActiveSet(comb)
            try:
                sol = region_solution(problem, b, p)
            except (DegenerateActiveSet, SingularKkt):
                continue
            if is_optimal(kkt_report(problem, p, sol), tol):
                return _finalize(sol, tried, "enumerate")
    # Phase-1 said feasible, so for a PSD objective some subset must pass;
    # reaching this point means tolerances could not be met anywhere.
    raise Infeasible(
        f"no active set among {tried} candidates satisfies the KKT system at tol={tol}"
    )


def solve_active_set(
    problem: QpProblem,
    p: ParamPoint,
    tol: float = 1e-9,
    start: ActiveSet = None,
    max_iter: int = None,
) -> OracleResult:
    """Primal active-set iteration from ``start`` (default: all inactive)."""
    if max_iter is None:
        max_iter = max(30, 4 * problem.m2 + 10)
    b = ActiveSet.empty() if start is None else start
    if len(b) and b.as_array().max() >= problem.m2:
        raise ValidationError(f"start set {b.indices} out of range for m2={problem.m2}")
    seen = {b.indices}
    bland = False
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        try:
            sol = region_solution(problem, b, p)
        except (DegenerateActiveSet, SingularKkt):
            # Typically the iteration has been pushed past the feasible
            # envelope (e.g. every generator pinned to its limit).
            check_feasible(problem, p)
            raise
        if is_optimal(kkt_report(problem, p, sol), tol):
            return _finalize(sol, iterations, "active-set")

        slack = problem.Ac @ sol.x - problem.bc - p.theta_C
        inactive = [j for j in range(problem.m2) if j not in b]
        violated = [j for j in inactive if slack[j] > 1e-11]
        negative = [j for j in b if sol.mu[j] < -1e-11]
        room = problem.m1 + len(b) < problem.n
        if violated and room:
            j = min(violated) if bland else max(violated, key=lambda j: slack[j])
            cand = ActiveSet.of(list(b.indices) + [j])
        elif negative:
            # also the escape hatch for a full working set (no room) whose
            # forced point violates an inactive constraint: free the most
            # negative multiplier first
            j = min(negative) if bland else min(negative, key=lambda j: sol.mu[j])
            cand = ActiveSet.of(i for i in b.indices if i != j)
        else:
            # a full, all-nonnegative working set that still violates some
            # inactive row is the signature of an infeasible instance under
            # the lazy phase-1 policy; confirm before giving up
            check_feasible(problem, p)
            raise CycleDetected(
                "active-set iteration stalled: KKT residuals above tol but no "
                "admissible add or drop step"
            )
        if cand.indices in seen:
            if bland:
                check_feasible(problem, p)
                raise CycleDetected(
                    f"active-set iteration revisited {cand.indices} under "
                    f"lowest-index selection"
                )
            bland = True
            continue
        seen.add(cand.indices)
        b = cand
    check_feasible(problem, p)
    raise OracleLimit(f"active-set iteration exceeded {max_iter} iterations")
