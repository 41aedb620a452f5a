"""Core mp-QP data structures and the analytic solution-function algebra.

The problem family is

    minimize    x' Q x + (C + theta_c)' x + C0
    subject to  Ae x  =  be + theta_e        (multipliers lambda)
                Ac x  <= bc + theta_C        (multipliers mu)

with additive parameter perturbations stacked as
theta = [theta_c; theta_e; theta_C].  Multiplier sign convention: the
Lagrangian uses lambda' (be + theta_e - Ae x) + mu' (Ac x - bc - theta_C),
so stationarity reads

    2 Q x + C + theta_c - Ae' lambda + Ac' mu = 0

and binding upper bounds carry mu >= 0.

All solves go through dense LU factorizations of the KKT matrix

    J = [[2 Q, -Ae'], [-Ae, 0]]

optionally expanded with binding inequality rows appended symmetrically.
Because the right-hand side is affine in theta, the multipliers of a fixed
active set are themselves affine in theta; ``slope_matrix`` extracts that
map restricted to the coordinates flagged as varying.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.linalg

from .errors import DegenerateActiveSet, ParseError, SingularKkt, ValidationError

# Reciprocal-condition estimate below which KKT systems are declared singular.
RCOND_MIN = 1e-12

SCHEMA_VERSION = 1


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Immutable mp-QP instance.

    Parameters
    ----------
    Q : (n, n) symmetric positive semidefinite cost matrix.
    C : (n,) linear cost.
    C0 : scalar cost offset.
    Ae, be : equality system, (m1, n) and (m1,).  Ae must have full row rank.
    Ac, bc : inequality system, (m2, n) and (m2,).
    varying_mask : (n + m1 + m2,) boolean mask over the stacked parameter
        vector marking coordinates that actually vary in a study.
    x_block_split : optional index splitting the primal vector into two blocks
        for reporting purposes (e.g. generator injections vs bus angles).
    """

    Q: np.ndarray
    C: np.ndarray
    C0: float
    Ae: np.ndarray
    be: np.ndarray
    Ac: np.ndarray
    bc: np.ndarray
    varying_mask: np.ndarray
    x_block_split: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen_array(self.Q))
        object.__setattr__(self, "C", _frozen_array(self.C))
        object.__setattr__(self, "C0", float(self.C0))
        object.__setattr__(self, "Ae", _frozen_array(self.Ae))
        object.__setattr__(self, "be", _frozen_array(self.be))
        object.__setattr__(self, "Ac", _frozen_array(self.Ac))
        object.__setattr__(self, "bc", _frozen_array(self.bc))
        object.__setattr__(self, "varying_mask", _frozen_array(self.varying_mask, bool))
        object.__setattr__(self, "_cache", {})
        self._validate()

    # -- derived dimensions -------------------------------------------------

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m1(self) -> int:
        return self.Ae.shape[0]

    @property
    def m2(self) -> int:
        return self.Ac.shape[0]

    @property
    def stacked_size(self) -> int:
        return self.n + self.m1 + self.m2

    @property
    def varying_idx(self) -> np.ndarray:
        return np.flatnonzero(self.varying_mask)

    @property
    def n_varying(self) -> int:
        return int(self.varying_mask.sum())

    # -- validation ---------------------------------------------------------

    def _validate(self):
        n = self.Q.shape[0]
        if self.Q.shape != (n, n):
            raise ValidationError("Q must be square")
        for name, arr, shape in (
            ("C", self.C, (n,)),
            ("be", self.be, (self.Ae.shape[0],)),
            ("bc", self.bc, (self.Ac.shape[0],)),
        ):
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
        if self.Ae.ndim != 2 or self.Ae.shape[1] != n:
            raise ValidationError("Ae must be (m1, n)")
        if self.Ac.ndim != 2 or self.Ac.shape[1] != n:
            raise ValidationError("Ac must be (m2, n)")
        if self.varying_mask.shape != (self.stacked_size,):
            raise ValidationError(
                f"varying_mask has shape {self.varying_mask.shape}, "
                f"expected ({self.stacked_size},)"
            )
        for name, arr in (("Q", self.Q), ("C", self.C), ("Ae", self.Ae),
                          ("be", self.be), ("Ac", self.Ac), ("bc", self.bc)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite entries")
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-12:
            raise ValidationError("Q is not symmetric within 1e-12")
        if n and np.linalg.eigvalsh(self.Q).min() < -1e-10:
            raise ValidationError("Q is not positive semidefinite")
        if self.m1 and np.linalg.matrix_rank(self.Ae) < self.m1:
            raise ValidationError("Ae does not have full row rank")
        if self.x_block_split is not None and not 0 <= self.x_block_split <= n:
            raise ValidationError("x_block_split out of range")

    # -- identity -----------------------------------------------------------

    @property
    def fingerprint(self) -> str:
        """SHA-256 over the canonical JSON document (cached)."""
        cached = self._cache.get("fingerprint")
        if cached is None:
            doc = problem_to_dict(self)
            blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
            cached = hashlib.sha256(blob.encode()).hexdigest()
            self._cache["fingerprint"] = cached
        return cached


@dataclass(frozen=True, eq=False)
class ParamPoint:
    """One realization of the stacked parameter vector theta."""

    theta_c: np.ndarray
    theta_e: np.ndarray
    theta_C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_c", _frozen_array(self.theta_c))
        object.__setattr__(self, "theta_e", _frozen_array(self.theta_e))
        object.__setattr__(self, "theta_C", _frozen_array(self.theta_C))

    @classmethod
    def zeros(cls, problem: QpProblem) -> "ParamPoint":
        return cls(np.zeros(problem.n), np.zeros(problem.m1), np.zeros(problem.m2))

    @classmethod
    def from_stacked(cls, problem: QpProblem, stacked) -> "ParamPoint":
        stacked = np.asarray(stacked, float)
        if stacked.shape != (problem.stacked_size,):
            raise ValidationError(
                f"stacked theta has shape {stacked.shape}, "
                f"expected ({problem.stacked_size},)"
            )
        n, m1 = problem.n, problem.m1
        return cls(stacked[:n], stacked[n:n + m1], stacked[n + m1:])

    def to_stacked(self) -> np.ndarray:
        return np.concatenate([self.theta_c, self.theta_e, self.theta_C])

    def with_coord(self, problem: QpProblem, axis: int, value: float) -> "ParamPoint":
        """Return a copy with stacked coordinate ``axis`` set to ``value``."""
        stacked = self.to_stacked()
        if not 0 <= axis < stacked.size:
            raise ValidationError(f"axis {axis} out of range for stacked theta")
        stacked[axis] = value
        return ParamPoint.from_stacked(problem, stacked)


@dataclass(frozen=True)
class ActiveSet:
    """A set of inequality-row indices assumed binding."""

    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValidationError("active-set indices must be nonnegative")
        if list(idx) != sorted(set(idx)):
            raise ValidationError("active-set indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, items: Iterable[int]) -> "ActiveSet":
        return cls(tuple(sorted(set(int(i) for i in items))))

    @classmethod
    def empty(cls) -> "ActiveSet":
        return cls(())

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j):
        return j in self.indices

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)


@dataclass(frozen=True, eq=False)
class FullSolution:
    """Primal point plus both multiplier vectors."""

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        object.__setattr__(self, "lam", _frozen_array(self.lam))
        object.__setattr__(self, "mu", _frozen_array(self.mu))


# ---------------------------------------------------------------------------
# factorization plumbing
# ---------------------------------------------------------------------------


def _factorize(M: np.ndarray):
    """LU factorization plus a cheap reciprocal-condition estimate."""
    if M.size == 0:
        return None, 1.0
    lu_piv = scipy.linalg.lu_factor(M, check_finite=False)
    anorm = np.linalg.norm(M, 1)
    rcond, info = scipy.linalg.lapack.dgecon(lu_piv[0], anorm)
    if info != 0:  # pragma: no cover - LAPACK argument error
        raise SingularKkt(f"dgecon failed with info={info}")
    return lu_piv, float(rcond)


def _solve_refined(M: np.ndarray, lu_piv, rhs: np.ndarray) -> np.ndarray:
    """LU solve with one step of iterative refinement."""
    y = scipy.linalg.lu_solve(lu_piv, rhs, check_finite=False)
    resid = rhs - M @ y
    y += scipy.linalg.lu_solve(lu_piv, resid, check_finite=False)
    return y


def _kkt_factors(problem: QpProblem):
    cached = problem._cache.get("J")
    if cached is None:
        J = assemble_kkt(problem)
        lu_piv, rcond = _factorize(J)
        if rcond < RCOND_MIN:
            raise SingularKkt(
                f"KKT matrix is singular (rcond estimate {rcond:.2e})"
            )
        cached = (J, lu_piv)
        problem._cache["J"] = cached
    return cached


def _expanded_factors(problem: QpProblem, b: ActiveSet):
    key = ("JB", b.indices)
    cached = problem._cache.get(key)
    if cached is None:
        JB = assemble_expanded_kkt(problem, b)
        lu_piv, rcond = _factorize(JB)
        if rcond < RCOND_MIN:
            raise SingularKkt(
                f"expanded KKT for active set {b.indices} is singular "
                f"(rcond estimate {rcond:.2e})"
            )
        cached = (JB, lu_piv)
        problem._cache[key] = cached
    return cached


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def assemble_kkt(problem: QpProblem) -> np.ndarray:
    """Equality-only KKT matrix [[2Q, -Ae'], [-Ae, 0]]."""
    n, m1 = problem.n, problem.m1
    J = np.zeros((n + m1, n + m1))
    J[:n, :n] = 2.0 * problem.Q
    J[:n, n:] = -problem.Ae.T
    J[n:, :n] = -problem.Ae
    return J


def assemble_expanded_kkt(problem: QpProblem, b: ActiveSet) -> np.ndarray:
    """KKT matrix with the binding rows of ``b`` appended symmetrically.

    Layout (n + m1 + |b| square):

        [[2Q, -Ae', +Ab'],
         [-Ae,  0,    0 ],
         [+Ab,  0,    0 ]]

    Raises
    ------
    DegenerateActiveSet
        If the stacked rows [Ae; Ab] are rank deficient (LICQ fails).  A
        simple necessary condition is m1 + |b| <= n.
    """
    idx = b.as_array()
    if idx.size and idx.max() >= problem.m2:
        raise ValidationError(f"active set {b.indices} out of range for m2={problem.m2}")
    n, m1, nb = problem.n, problem.m1, len(b)
    Ab = problem.Ac[idx] if nb else np.zeros((0, n))
    stacked = np.vstack([problem.Ae, Ab])
    if m1 + nb > n or np.linalg.matrix_rank(stacked) < m1 + nb:
        raise DegenerateActiveSet(
            f"stacked equality and binding rows are rank deficient for "
            f"active set {b.indices} (rows={m1 + nb}, n={n})"
        )
    size = n + m1 + nb
    J = np.zeros((size, size))
    J[:n, :n] = 2.0 * problem.Q
    J[:n, n:n + m1] = -problem.Ae.T
    J[n:n + m1, :n] = -problem.Ae
    J[:n, n + m1:] = Ab.T
    J[n + m1:, :n] = Ab
    return J


def _rhs(problem: QpProblem, p: ParamPoint, b: Optional[ActiveSet] = None) -> np.ndarray:
    parts = [-problem.C - p.theta_c, -problem.be - p.theta_e]
    if b is not None and len(b):
        idx = b.as_array()
        parts.append(problem.bc[idx] + p.theta_C[idx])
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------


def solve_equality(problem: QpProblem, p: ParamPoint):
    """Solve the equality-constrained QP: returns (x, lam)."""
    J, lu_piv = _kkt_factors(problem)
    y = _solve_refined(J, lu_piv, _rhs(problem, p))
    return y[:problem.n], y[problem.n:]


def region_solution(problem: QpProblem, b: ActiveSet, p: ParamPoint) -> FullSolution:
    """Solve with active set ``b`` imposed as equalities.

    The returned multipliers are scattered into a full length-m2 vector with
    zeros on inactive rows.  No optimality check happens here; feed the result
    to ``kkt_check.kkt_report`` to decide whether ``b`` is the right set.
    """
    JB, lu_piv = _expanded_factors(problem, b)
    y = _solve_refined(JB, lu_piv, _rhs(problem, p, b))
    n, m1 = problem.n, problem.m1
    mu = np.zeros(problem.m2)
    if len(b):
        mu[b.as_array()] = y[n + m1:]
    return FullSolution(y[:n], y[n:n + m1], mu)


def solution_from_mu(problem: QpProblem, mu: np.ndarray, p: ParamPoint):
    """Recover (x, lam) from a full multiplier vector.

    Folds the inequality contribution into the objective gradient and solves
    the equality KKT system with right-hand side
    [-C - theta_c - Ac' mu; -be - theta_e].
    """
    mu = np.asarray(mu, float)
    if mu.shape != (problem.m2,):
        raise ValidationError(f"mu has shape {mu.shape}, expected ({problem.m2},)")
    J, lu_piv = _kkt_factors(problem)
    rhs = _rhs(problem, p).copy()
    rhs[:problem.n] -= problem.Ac.T @ mu
    y = _solve_refined(J, lu_piv, rhs)
    return y[:problem.n], y[problem.n:]


def slope_matrix(problem: QpProblem, b: ActiveSet):
    """Affine map from varying parameters to the active multipliers.

    Returns ``(slopes, intercept)`` with shapes (|b|, n_varying) and (|b|,)
    such that for any theta whose non-varying coordinates are zero,

        mu_b(theta) = slopes @ theta[varying] + intercept.

    The map comes from the bottom |b| rows of the expanded-KKT inverse
    applied to the affine right-hand side; it is exact, not a fit.
    """
    key = ("slope", b.indices)
    cached = problem._cache.get(key)
    if cached is not None:
        return cached
    JB, lu_piv = _expanded_factors(problem, b)
    n, m1, nb = problem.n, problem.m1, len(b)
    size = n + m1 + nb
    # Rows of inv(JB) for the multiplier block, via solves on unit vectors.
    E = np.zeros((size, nb))
    for col, row in enumerate(range(n + m1, size)):
        E[row, col] = 1.0
    M = _solve_refined(JB.T, scipy.linalg.lu_factor(JB.T, check_finite=False), E).T

    # RHS as r0 + T theta over the stacked parameter vector.
    r0 = np.concatenate([-problem.C, -problem.be,
                         problem.bc[b.as_array()] if nb else np.zeros(0)])
    T = np.zeros((size, problem.stacked_size))
    T[:n, :n] = -np.eye(n)
    T[n:n + m1, n:n + m1] = -np.eye(m1)
    for row, j in enumerate(b.indices):
        T[n + m1 + row, n + m1 + j] = 1.0

    slopes_full = M @ T
    slopes = slopes_full[:, problem.varying_idx]
    intercept = M @ r0
    slopes.setflags(write=False)
    intercept.setflags(write=False)
    problem._cache[key] = (slopes, intercept)
    return slopes, intercept


def objective(problem: QpProblem, x: np.ndarray, p: Optional[ParamPoint] = None) -> float:
    """Objective value x'Qx + (C + theta_c)'x + C0."""
    x = np.asarray(x, float)
    c = problem.C if p is None else problem.C + p.theta_c
    return float(x @ problem.Q @ x + c @ x + problem.C0)


def kkt_inverse(problem: QpProblem) -> np.ndarray:
    """Dense inverse of the equality KKT matrix (the network's g-weights)."""
    J, lu_piv = _kkt_factors(problem)
    return _solve_refined(J, lu_piv, np.eye(J.shape[0]))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def problem_to_dict(problem: QpProblem) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n": problem.n,
        "m1": problem.m1,
        "m2": problem.m2,
        "Q": problem.Q.tolist(),
        "C": problem.C.tolist(),
        "C0": problem.C0,
        "Ae": problem.Ae.tolist(),
        "be": problem.be.tolist(),
        "Ac": problem.Ac.tolist(),
        "bc": problem.bc.tolist(),
        "varying_mask": [bool(v) for v in problem.varying_mask],
        "x_block_split": problem.x_block_split,
    }


def problem_from_dict(doc: dict) -> QpProblem:
    try:
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {doc.get('schema_version')!r}")
        problem = QpProblem(
            Q=doc["Q"], C=doc["C"], C0=doc["C0"],
            Ae=doc["Ae"], be=doc["be"], Ac=doc["Ac"], bc=doc["bc"],
            varying_mask=doc["varying_mask"],
            x_block_split=doc.get("x_block_split"),
        )
    except KeyError as e:
        raise ParseError(f"problem document is missing key {e}") from e
    for dim in ("n", "m1", "m2"):
        if doc.get(dim) is not None and doc[dim] != getattr(problem, dim):
            raise ParseError(f"declared {dim}={doc[dim]} does not match arrays")
    return problem


def problem_to_json(problem: QpProblem) -> str:
    return json.dumps(problem_to_dict(problem), indent=2)


def problem_from_json(text: str) -> QpProblem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid problem JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("problem JSON must be an object")
    return problem_from_dict(doc)
