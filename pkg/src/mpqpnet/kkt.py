"""KKT residual metrics used to verify and compare candidate solutions.

Six scalar metrics per solution, each a mean of squared row residuals so all
share squared units:

* ``kkt1_x`` / ``kkt1_delta`` -- stationarity residual split over the two
  primal blocks when the problem declares ``x_block_split`` (everything lands
  in ``kkt1_x`` otherwise),
* ``kkt2_eq`` -- equality feasibility,
* ``kkt2_ineq`` -- inequality feasibility, one-sided:  max(0, Ac x - bc - theta_C),
* ``kkt3`` -- dual feasibility, one-sided:  max(0, -mu),
* ``kkt4`` -- complementary slackness:  mu_j * slack_j per row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .qp_core import FullSolution, ParamPoint, QpProblem

METRICS = ("kkt1_x", "kkt1_delta", "kkt2_eq", "kkt2_ineq", "kkt3", "kkt4")


@dataclass(frozen=True)
class KktReport:
    kkt1_x: float
    kkt1_delta: float
    kkt2_eq: float
    kkt2_ineq: float
    kkt3: float
    kkt4: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRICS}

    def max(self) -> float:
        return max(self.as_dict().values())


def _mean_sq(rows: np.ndarray, axis=-1) -> np.ndarray:
    if rows.shape[axis] == 0:
        return np.zeros(rows.shape[:-1])
    return np.mean(np.square(rows), axis=axis)


def kkt_report_batch(problem: QpProblem, thetas: np.ndarray,
                     X: np.ndarray, LAM: np.ndarray, MU: np.ndarray) -> np.ndarray:
    """Vectorized residuals for N solutions.

    Parameters are stacked theta rows (N, n + m1 + m2); returns an (N, 6)
    array ordered as ``METRICS``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, float))
    X = np.atleast_2d(np.asarray(X, float))
    LAM = np.atleast_2d(np.asarray(LAM, float))
    MU = np.atleast_2d(np.asarray(MU, float))
    n, m1, m2 = problem.n, problem.m1, problem.m2
    if thetas.shape[1] != problem.stacked_size:
        raise ValidationError("thetas must have n + m1 + m2 columns")
    if X.shape[1] != n or LAM.shape[1] != m1 or MU.shape[1] != m2:
        raise ValidationError("solution blocks have inconsistent widths")
    tc = thetas[:, :n]
    te = thetas[:, n:n + m1]
    tC = thetas[:, n + m1:]

    stat = 2.0 * X @ problem.Q.T + problem.C + tc - LAM @ problem.Ae + MU @ problem.Ac
    split = problem.x_block_split if problem.x_block_split is not None else n
    eq = X @ problem.Ae.T - problem.be - te
    slack = X @ problem.Ac.T - problem.bc - tC

    out = np.empty((X.shape[0], 6))
    out[:, 0] = _mean_sq(stat[:, :split])
    out[:, 1] = _mean_sq(stat[:, split:])
    out[:, 2] = _mean_sq(eq)
    out[:, 3] = _mean_sq(np.maximum(slack, 0.0))
    out[:, 4] = _mean_sq(np.maximum(-MU, 0.0))
    out[:, 5] = _mean_sq(MU * slack)
    return out


def kkt_report(problem: QpProblem, p: ParamPoint, s: FullSolution) -> KktReport:
    """Residual report for a single candidate solution."""
    row = kkt_report_batch(
        problem, p.to_stacked()[None, :], s.x[None, :], s.lam[None, :], s.mu[None, :]
    )[0]
    return KktReport(*[float(v) for v in row])


def is_optimal(report: KktReport, tol: float = 1e-9) -> bool:
    """True when every metric is at or below ``tol``."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    return report.max() <= tol


def summarize(reports: np.ndarray, row_counts=None) -> dict:
    """Mean of each metric over solutions.

    ``reports`` is (N, 6) as produced by ``kkt_report_batch``.  When
    ``row_counts`` (a 6-tuple of residual-row counts) is given, a row-sum
    variant (mean x rows) is included under ``*_sum`` keys for readers who
    prefer summed residuals.
    """
    reports = np.atleast_2d(np.asarray(reports, float))
    if reports.shape[1] != len(METRICS):
        raise ValidationError("reports must have 6 columns")
    means = reports.mean(axis=0)
    out = {name: float(v) for name, v in zip(METRICS, means)}
    if row_counts is not None:
        for name, mean, rows in zip(METRICS, means, row_counts):
            out[name + "_sum"] = float(mean * rows)
    return out


def metric_row_counts(problem: QpProblem) -> tuple:
    """Residual-row counts backing each metric (for row-sum reporting)."""
    split = problem.x_block_split if problem.x_block_split is not None else problem.n
    return (split, problem.n - split, problem.m1, problem.m2, problem.m2, problem.m2)
