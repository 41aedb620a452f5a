"""Partially supervised network for multiplier prediction, plus the exact
primal-recovery layer.

Architecture per problem: a two-layer multiplier network

    mu_hat(theta) = W1 relu(W0 theta_varying + b0)

whose first-layer weights W0 are frozen to the exact per-region multiplier
slopes from a ``RegionAtlas`` (one block of m2 rows per distinct active set,
slope rows placed at their constraint indices, zeros elsewhere).  Only b0 and
W1 train.  The second stage is not learned at all: given mu_hat, the primal
point and equality multipliers come from one dense solve with the stored
inverse KKT matrix (the "g-weights"), so equality feasibility is exact by
construction.

Training is full-batch Adam by default with plateau learning-rate halving;
plain gradient descent is available for fidelity with hand-rolled setups.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .discovery import LabeledDataset, RegionAtlas
from .errors import FingerprintMismatch, NonFiniteLoss, ParseError, ValidationError
from .qp_core import FullSolution, ParamPoint, QpProblem, kkt_inverse

MODEL_SCHEMA_VERSION = 1


@dataclass(eq=False)
class MuNet:
    """Two-layer ReLU network with a frozen, structured first layer."""

    W0: np.ndarray                 # (k*m2, n_varying), frozen
    b0: np.ndarray                 # (k*m2,)
    W1: np.ndarray                 # (m2, k*m2)
    k: int
    m2: int
    n_varying: int
    block_active_sets: tuple       # k tuples of constraint indices
    block_intercepts: np.ndarray   # (k*m2,), analytic intercepts scattered

    def w0_checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.W0).tobytes()).hexdigest()

    @property
    def hidden(self) -> int:
        return self.k * self.m2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 50_000
    tol: float = 1e-12            # stop when validation MSE drops below this
    batch_size: int = None        # None = full batch
    seed: int = 0
    optimizer: str = "adam"       # "adam" or "sgd"
    plateau_patience: int = 3000  # epochs without val improvement before halving
    plateau_factor: float = 0.5
    min_learning_rate: float = 1e-5

    def validate(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be nonnegative")
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValidationError("batch_size must be positive when set")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def build_mu_net(atlas: RegionAtlas, seed: int, analytic_init: bool = False) -> MuNet:
    """Assemble the frozen first layer from the atlas and initialize the rest.

    Distinct active sets (in order of first appearance along the sweep) each
    get one block of m2 hidden rows; revisited sets are deduplicated.  b0 and
    W1 start uniform in +-1/sqrt(fan_in); with ``analytic_init`` the b0 rows
    of active constraints start at the exact region intercepts instead.
    """
    problem = atlas.problem
    m2, n_varying = problem.m2, problem.n_varying
    if n_varying == 0:
        raise ValidationError("problem has no varying parameters")
    blocks, intercepts = [], []
    seen = set()
    for region in atlas.regions:
        key = region.active_set.indices
        if key in seen:
            continue
        seen.add(key)
        blocks.append(region)
        intercepts.append(region.intercept)
    k = len(blocks)
    W0 = np.zeros((k * m2, n_varying))
    scattered = np.zeros(k * m2)
    sets = []
    for i, region in enumerate(blocks):
        sets.append(region.active_set.indices)
        for row, j in enumerate(region.active_set.indices):
            W0[i * m2 + j] = region.slopes[row]
            scattered[i * m2 + j] = region.intercept[row]
    W0.setflags(write=False)

    rng = np.random.default_rng(seed)
    bound_b = 1.0 / np.sqrt(n_varying)
    bound_w = 1.0 / np.sqrt(k * m2)
    b0 = rng.uniform(-bound_b, bound_b, size=k * m2)
    W1 = rng.uniform(-bound_w, bound_w, size=(m2, k * m2))
    if analytic_init:
        b0 = scattered.copy()
    return MuNet(W0=W0, b0=b0, W1=W1, k=k, m2=m2, n_varying=n_varying,
                 block_active_sets=tuple(sets), block_intercepts=scattered)


def analytic_second_layer(net: MuNet) -> np.ndarray:
    """Indicator W1: each constraint reads its own hidden unit in every block
    where that constraint is active.  Together with analytic b0 this is the
    hand-constructed second layer used in representability checks."""
    W1 = np.zeros((net.m2, net.hidden))
    for i, indices in enumerate(net.block_active_sets):
        for j in indices:
            W1[j, i * net.m2 + j] = 1.0
    return W1


# ---------------------------------------------------------------------------
# forward and training
# ---------------------------------------------------------------------------


def mu_forward(net: MuNet, theta) -> np.ndarray:
    """Multiplier prediction for one theta row or a matrix of rows."""
    theta = np.asarray(theta, float)
    single = theta.ndim == 1
    T = np.atleast_2d(theta)
    if T.shape[1] != net.n_varying:
        raise ValidationError(f"theta has {T.shape[1]} columns, expected {net.n_varying}")
    Z = T @ net.W0.T + net.b0
    H = np.maximum(Z, 0.0)
    out = H @ net.W1.T
    return out[0] if single else out


def _mse(net_W1, net_b0, W0, X, Y):
    Z = X @ W0.T + net_b0
    P = np.maximum(Z, 0.0) @ net_W1.T
    diff = P - Y
    return float(np.mean(diff * diff))


def _grads(W0, b0, W1, X, Y):
    """Full forward/backward pass; returns (loss, dW1, db0)."""
    Z = X @ W0.T + b0
    H = np.maximum(Z, 0.0)
    P = H @ W1.T
    E = P - Y
    loss = float(np.mean(E * E))
    scale = 2.0 / E.size
    dP = scale * E
    dW1 = dP.T @ H
    dH = dP @ W1
    db0 = (dH * (Z > 0.0)).sum(axis=0)
    return loss, dW1, db0


def train(net: MuNet, train_data: LabeledDataset, val_data: LabeledDataset,
          cfg: TrainConfig = TrainConfig()) -> tuple:
    """Train b0 and W1; W0 never changes.  Returns (trained net, history).

    Stopping: validation MSE below ``cfg.tol`` (checked before the first
    update, so a perfect initialization trains for zero epochs) or the epoch
    budget.  History records train/val MSE and the learning rate per epoch.
    """
    cfg.validate()
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValidationError("training and validation sets must be non-empty")
    X, Y = np.asarray(train_data.inputs, float), np.asarray(train_data.targets, float)
    Xv, Yv = np.asarray(val_data.inputs, float), np.asarray(val_data.targets, float)
    if X.shape[1] != net.n_varying or Y.shape[1] != net.m2:
        raise ValidationError("dataset widths do not match the network")

    W0 = net.W0
    checksum = net.w0_checksum()
    b0 = np.array(net.b0, float)
    W1 = np.array(net.W1, float)
    lr = cfg.learning_rate
    rng = np.random.default_rng(cfg.seed)

    # Adam state
    mW1 = np.zeros_like(W1); vW1 = np.zeros_like(W1)
    mb0 = np.zeros_like(b0); vb0 = np.zeros_like(b0)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0

    history = {"train": [], "val": [], "lr": []}
    best_val = np.inf
    stale = 0

    def record():
        tr = _mse(W1, b0, W0, X, Y)
        va = _mse(W1, b0, W0, Xv, Yv)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise NonFiniteLoss(f"loss became non-finite (train={tr}, val={va})")
        history["train"].append(tr)
        history["val"].append(va)
        history["lr"].append(lr)
        return va

    def step(gW1, gb0):
        nonlocal t, W1, b0, mW1, vW1, mb0, vb0
        if cfg.optimizer == "sgd":
            W1 = W1 - lr * gW1
            b0 = b0 - lr * gb0
            return
        t += 1
        mW1 = beta1 * mW1 + (1 - beta1) * gW1
        vW1 = beta2 * vW1 + (1 - beta2) * gW1 * gW1
        mb0 = beta1 * mb0 + (1 - beta1) * gb0
        vb0 = beta2 * vb0 + (1 - beta2) * gb0 * gb0
        c1 = 1 - beta1 ** t
        c2 = 1 - beta2 ** t
        W1 = W1 - lr * (mW1 / c1) / (np.sqrt(vW1 / c2) + eps)
        b0 = b0 - lr * (mb0 / c1) / (np.sqrt(vb0 / c2) + eps)

    va = record()
    epoch = 0
    while va >= cfg.tol and epoch < cfg.max_epochs:
        epoch += 1
        if cfg.batch_size is None:
            loss, gW1, gb0 = _grads(W0, b0, W1, X, Y)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"training loss became non-finite at epoch {epoch}")
            step(gW1, gb0)
        else:
            order = rng.permutation(X.shape[0])
            for lo in range(0, X.shape[0], cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                loss, gW1, gb0 = _grads(W0, b0, W1, X[idx], Y[idx])
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"training loss became non-finite at epoch {epoch}")
                step(gW1, gb0)
        va = record()
        if va < best_val * (1.0 - 1e-12):
            best_val = va
            stale = 0
        else:
            stale += 1
            if stale >= cfg.plateau_patience and lr > cfg.min_learning_rate:
                lr = max(lr * cfg.plateau_factor, cfg.min_learning_rate)
                stale = 0

    assert net.w0_checksum() == checksum, "frozen first layer was modified"
    trained = MuNet(W0=W0, b0=b0, W1=W1, k=net.k, m2=net.m2,
                    n_varying=net.n_varying,
                    block_active_sets=net.block_active_sets,
                    block_intercepts=net.block_intercepts)
    history["epochs"] = epoch
    history["stopped_early"] = va < cfg.tol
    return trained, history


# ---------------------------------------------------------------------------
# full model: mu network + exact recovery layer
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PsnnModel:
    net: MuNet
    g_weights: np.ndarray  # inverse equality-KKT matrix, (n+m1, n+m1)
    fingerprint: str       # of the problem the model was built for


def build_model(problem: QpProblem, net: MuNet) -> PsnnModel:
    if net.n_varying != problem.n_varying or net.m2 != problem.m2:
        raise ValidationError("network dimensions do not match the problem")
    return PsnnModel(net=net, g_weights=kkt_inverse(problem),
                     fingerprint=problem.fingerprint)


def _check_model(model: PsnnModel, problem: QpProblem):
    if model.fingerprint != problem.fingerprint:
        raise FingerprintMismatch(
            "model fingerprint does not match this problem; rebuild the model"
        )


def _predict_stacked(model: PsnnModel, problem: QpProblem, stacked: np.ndarray,
                     clamp: bool) -> tuple:
    n, m1 = problem.n, problem.m1
    MU = mu_forward(model.net, stacked[:, problem.varying_idx])
    if clamp:
        MU = np.maximum(MU, 0.0)
    rhs = np.empty((stacked.shape[0], n + m1))
    rhs[:, :n] = -problem.C - stacked[:, :n] - MU @ problem.Ac
    rhs[:, n:] = -problem.be - stacked[:, n:n + m1]
    Y = rhs @ model.g_weights.T
    return Y[:, :n], Y[:, n:], MU


def predict_solution(model: PsnnModel, problem: QpProblem, p: ParamPoint,
                     clamp: bool = True) -> FullSolution:
    """Predict the full solution at one parameter point.

    Negative multiplier predictions are clamped to zero by default, which
    zeroes kkt3 at the cost of moving the residual elsewhere.
    """
    _check_model(model, problem)
    X, LAM, MU = _predict_stacked(model, problem, p.to_stacked()[None, :], clamp)
    return FullSolution(X[0], LAM[0], MU[0])


def batch_predict(model: PsnnModel, problem: QpProblem, thetas, clamp: bool = True) -> list:
    """Predict for a matrix of varying-parameter rows (N x n_varying).

    Non-varying coordinates are taken as zero.  A single-row batch equals
    ``predict_solution`` bit for bit.
    """
    _check_model(model, problem)
    thetas = np.atleast_2d(np.asarray(thetas, float))
    if thetas.shape[1] != problem.n_varying:
        raise ValidationError(
            f"thetas has {thetas.shape[1]} columns, expected {problem.n_varying}")
    stacked = np.zeros((thetas.shape[0], problem.stacked_size))
    stacked[:, problem.varying_idx] = thetas
    X, LAM, MU = _predict_stacked(model, problem, stacked, clamp)
    return [FullSolution(x, l, m) for x, l, m in zip(X, LAM, MU)]


def batch_predict_arrays(model: PsnnModel, problem: QpProblem, stacked, clamp: bool = True):
    """Array-in, array-out batch path over full stacked theta rows."""
    _check_model(model, problem)
    stacked = np.atleast_2d(np.asarray(stacked, float))
    if stacked.shape[1] != problem.stacked_size:
        raise ValidationError("stacked thetas have the wrong width")
    return _predict_stacked(model, problem, stacked, clamp)


# ---------------------------------------------------------------------------
# gradient checking (used by the tests, handy for debugging too)
# ---------------------------------------------------------------------------


def gradient_check(net: MuNet, X, Y, h: float = 1e-4, n_probe: int = 25, seed: int = 0):
    """Compare analytic b0/W1 gradients against central differences.

    Returns the worst relative error over ``n_probe`` randomly chosen
    coordinates of each parameter block.  The loss is smooth in W1, and a
    b0 probe whose +-h interval flips a ReLU gate straddles a kink (where
    the comparison is meaningless) and is skipped; within a fixed gate
    pattern the loss is exactly quadratic in each single parameter, so the
    generous step carries no truncation error.  Loss differences are
    evaluated in the factored form ``mean((P+ - P-) * (P+ + P- - 2Y))`` so
    the large shared part of the two losses cancels exactly instead of
    drowning the O(h) signal in rounding error when the targets are big.
    """
    X = np.asarray(X, float); Y = np.asarray(Y, float)
    rng = np.random.default_rng(seed)
    _, dW1, db0 = _grads(net.W0, net.b0, net.W1, X, Y)
    pre = X @ net.W0.T
    H = np.maximum(pre + net.b0, 0.0)

    def central(p_up, p_dn):
        return float(np.mean((p_up - p_dn) * (p_up + p_dn - 2.0 * Y))) / (2 * h)

    worst = 0.0
    for _ in range(n_probe):
        i = rng.integers(net.W1.size)
        W1p = net.W1.copy().ravel(); W1m = net.W1.copy().ravel()
        W1p[i] += h; W1m[i] -= h
        num = central(H @ W1p.reshape(net.W1.shape).T,
                      H @ W1m.reshape(net.W1.shape).T)
        ana = dW1.ravel()[i]
        worst = max(worst, abs(num - ana) / max(1e-12, abs(num) + abs(ana)))
        j = rng.integers(net.b0.size)
        b0p = net.b0.copy(); b0m = net.b0.copy()
        b0p[j] += h; b0m[j] -= h
        if not np.array_equal(pre + b0p > 0.0, pre + b0m > 0.0):
            continue
        num = central(np.maximum(pre + b0p, 0.0) @ net.W1.T,
                      np.maximum(pre + b0m, 0.0) @ net.W1.T)
        ana = db0[j]
        worst = max(worst, abs(num - ana) / max(1e-12, abs(num) + abs(ana)))
    return worst


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: PsnnModel) -> dict:
    net = model.net
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "type": "psnn",
        "fingerprint": model.fingerprint,
        "k": net.k,
        "m2": net.m2,
        "n_varying": net.n_varying,
        "block_active_sets": [list(s) for s in net.block_active_sets],
        "block_intercepts": net.block_intercepts.tolist(),
        "W0": net.W0.tolist(),
        "b0": net.b0.tolist(),
        "W1": net.W1.tolist(),
        "g_weights": model.g_weights.tolist(),
        "w0_checksum": net.w0_checksum(),
    }


def model_from_dict(doc: dict) -> PsnnModel:
    try:
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ParseError(f"unsupported model schema_version {doc.get('schema_version')!r}")
        if doc.get("type") != "psnn":
            raise ParseError(f"not a psnn model file (type={doc.get('type')!r})")
        net = MuNet(
            W0=np.asarray(doc["W0"], float),
            b0=np.asarray(doc["b0"], float),
            W1=np.asarray(doc["W1"], float),
            k=int(doc["k"]),
            m2=int(doc["m2"]),
            n_varying=int(doc["n_varying"]),
            block_active_sets=tuple(tuple(int(i) for i in s) for s in doc["block_active_sets"]),
            block_intercepts=np.asarray(doc["block_intercepts"], float),
        )
        model = PsnnModel(
            net=net,
            g_weights=np.asarray(doc["g_weights"], float),
            fingerprint=str(doc["fingerprint"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed model document: {e}") from e
    if doc.get("w0_checksum") and doc["w0_checksum"] != net.w0_checksum():
        raise ParseError("W0 checksum mismatch; model file is corrupt")
    return model


def model_to_json(model: PsnnModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_json(text: str) -> PsnnModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid model JSON: {e}") from e
    return model_from_dict(doc)
