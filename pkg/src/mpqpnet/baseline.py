"""Classical fully supervised DNN baseline.

A plain MLP maps varying parameters straight to the stacked solution
[x; lambda; mu].  It needs oracle-labeled data (one QP solve per training
row), learns feasibility only statistically, and is the comparison point for
the partially supervised model.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FingerprintMismatch,
    Infeasible,
    NonFiniteLoss,
    ParseError,
    ValidationError,
)
from .oracle import solve_active_set
from .qp_core import FullSolution, ParamPoint, QpProblem

BASELINE_SCHEMA_VERSION = 1


@dataclass(eq=False)
class SolutionDataset:
    """Oracle-labeled rows: varying theta in, stacked [x; lam; mu] out."""

    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.inputs.shape[0]


@dataclass(eq=False)
class DnnModel:
    weights: list          # per layer, (out, in)
    biases: list           # per layer, (out,)
    sizes: tuple           # (in, hidden..., out)
    fingerprint: str
    n: int
    m1: int
    m2: int


@dataclass(frozen=True)
class BaselineConfig:
    hidden: tuple = (64, 64, 64)
    learning_rate: float = 1e-3
    max_epochs: int = 1000
    batch_size: int = 128
    patience: int = 50          # early stopping on validation MSE
    tol: float = 1e-12
    seed: int = 0

    def validate(self):
        if not self.hidden or any(h <= 0 for h in self.hidden):
            raise ValidationError("hidden sizes must be positive")
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValidationError("learning_rate and batch_size must be positive")
        if self.max_epochs < 0 or self.patience <= 0:
            raise ValidationError("max_epochs must be >= 0, patience > 0")


def make_solution_dataset(problem: QpProblem, points, tol: float = 1e-9) -> SolutionDataset:
    """Label parameter points with full oracle solutions.

    Infeasible points are skipped and counted in ``meta['infeasible']``.
    """
    inputs, targets = [], []
    skipped = 0
    for p in points:
        try:
            res = solve_active_set(problem, p, tol=tol)
        except Infeasible:
            skipped += 1
            continue
        s = res.solution
        inputs.append(p.to_stacked()[problem.varying_idx])
        targets.append(np.concatenate([s.x, s.lam, s.mu]))
    return SolutionDataset(
        inputs=np.asarray(inputs), targets=np.asarray(targets),
        meta={"infeasible": skipped, "tol": tol},
    )


def init_dnn(problem: QpProblem, cfg: BaselineConfig = BaselineConfig()) -> DnnModel:
    cfg.validate()
    sizes = (problem.n_varying, *cfg.hidden, problem.n + problem.m1 + problem.m2)
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return DnnModel(weights=weights, biases=biases, sizes=sizes,
                    fingerprint=problem.fingerprint,
                    n=problem.n, m1=problem.m1, m2=problem.m2)


def dnn_forward(model: DnnModel, X) -> np.ndarray:
    X = np.asarray(X, float)
    single = X.ndim == 1
    H = np.atleast_2d(X)
    if H.shape[1] != model.sizes[0]:
        raise ValidationError(f"input has {H.shape[1]} columns, expected {model.sizes[0]}")
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        H = H @ W.T + b
        if i < last:
            H = np.maximum(H, 0.0)
    return H[0] if single else H


def _forward_cache(model, X):
    acts = [X]
    pre = []
    H = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        Z = H @ W.T + b
        pre.append(Z)
        H = np.maximum(Z, 0.0) if i < last else Z
        acts.append(H)
    return acts, pre


def train_baseline(model: DnnModel, train_data: SolutionDataset,
                   val_data: SolutionDataset,
                   cfg: BaselineConfig = BaselineConfig()) -> tuple:
    """Minibatch Adam with early stopping on validation MSE.

    Keeps the best-validation weights seen and restores them at the end.
    Returns (trained model, history).
    """
    cfg.validate()
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValidationError("training and validation sets must be non-empty")
    X, Y = np.asarray(train_data.inputs, float), np.asarray(train_data.targets, float)
    Xv, Yv = np.asarray(val_data.inputs, float), np.asarray(val_data.targets, float)
    if X.shape[1] != model.sizes[0] or Y.shape[1] != model.sizes[-1]:
        raise ValidationError("dataset widths do not match the network")

    Ws = [W.copy() for W in model.weights]
    bs = [b.copy() for b in model.biases]
    mW = [np.zeros_like(W) for W in Ws]; vW = [np.zeros_like(W) for W in Ws]
    mb = [np.zeros_like(b) for b in bs]; vb = [np.zeros_like(b) for b in bs]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0
    lr = cfg.learning_rate
    rng = np.random.default_rng(cfg.seed)
    last = len(Ws) - 1

    def mse(A, B):
        diff = dnn_forward(DnnModel(Ws, bs, model.sizes, model.fingerprint,
                                    model.n, model.m1, model.m2), A) - B
        return float(np.mean(diff * diff))

    history = {"train": [], "val": []}
    best_val = np.inf
    best = ([W.copy() for W in Ws], [b.copy() for b in bs])
    stale = 0
    epoch = 0
    while epoch < cfg.max_epochs:
        tr = mse(X, Y); va = mse(Xv, Yv)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise NonFiniteLoss("baseline loss became non-finite")
        history["train"].append(tr); history["val"].append(va)
        if va < best_val:
            best_val = va
            best = ([W.copy() for W in Ws], [b.copy() for b in bs])
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        if va < cfg.tol:
            break
        epoch += 1
        order = rng.permutation(X.shape[0])
        for lo in range(0, X.shape[0], cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            tmp = DnnModel(Ws, bs, model.sizes, model.fingerprint,
                           model.n, model.m1, model.m2)
            acts, pre = _forward_cache(tmp, X[idx])
            E = acts[-1] - Y[idx]
            delta = (2.0 / E.size) * E
            gW = [None] * len(Ws); gb = [None] * len(bs)
            for i in range(last, -1, -1):
                gW[i] = delta.T @ acts[i]
                gb[i] = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ Ws[i]) * (pre[i - 1] > 0.0)
            t += 1
            c1 = 1 - beta1 ** t; c2 = 1 - beta2 ** t
            for i in range(len(Ws)):
                mW[i] = beta1 * mW[i] + (1 - beta1) * gW[i]
                vW[i] = beta2 * vW[i] + (1 - beta2) * gW[i] * gW[i]
                mb[i] = beta1 * mb[i] + (1 - beta1) * gb[i]
                vb[i] = beta2 * vb[i] + (1 - beta2) * gb[i] * gb[i]
                Ws[i] -= lr * (mW[i] / c1) / (np.sqrt(vW[i] / c2) + eps)
                bs[i] -= lr * (mb[i] / c1) / (np.sqrt(vb[i] / c2) + eps)

    Ws, bs = best
    trained = DnnModel(weights=Ws, biases=bs, sizes=model.sizes,
                       fingerprint=model.fingerprint,
                       n=model.n, m1=model.m1, m2=model.m2)
    history["epochs"] = epoch
    history["best_val"] = best_val
    return trained, history


def gradient_check(model: DnnModel, X, Y, h: float = 1e-4, n_probe: int = 25,
                   seed: int = 0) -> float:
    """Worst relative error between backprop and central finite differences.

    Probes a random sample of entries in every weight and bias array.  Two
    guards keep the comparison numerically meaningful:

    * a probe whose +-h interval flips any ReLU gate straddles a kink, where
      the loss is not differentiable; such probes are skipped.  Within a
      fixed gate pattern the loss is exactly quadratic in any single
      parameter, so central differences carry no truncation error and ``h``
      can be generous.
    * the loss difference is evaluated in the factored form
      ``mean((P+ - P-) * (P+ + P- - 2Y))`` so the large shared part of the
      two losses cancels exactly instead of drowning the O(h) signal in
      rounding error when the targets are big (e.g. equality duals).
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    acts, pre = _forward_cache(model, X)
    E = acts[-1] - Y
    delta = (2.0 / E.size) * E
    last = len(model.weights) - 1
    gW = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for i in range(last, -1, -1):
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0.0)

    def forward_and_gates():
        a, p = _forward_cache(model, X)
        gates = np.concatenate([(q > 0.0).ravel() for q in p]) if p else \
            np.zeros(0, bool)
        return a[-1], gates

    rng = np.random.default_rng(seed)
    worst = 0.0
    pairs = list(zip(model.weights, gW)) + list(zip(model.biases, gb))
    for arr, grad in pairs:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        probes = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        for j in probes:
            orig = flat[j]
            flat[j] = orig + h
            p_up, gates_up = forward_and_gates()
            flat[j] = orig - h
            p_dn, gates_dn = forward_and_gates()
            flat[j] = orig
            if not np.array_equal(gates_up, gates_dn):
                continue
            fd = float(np.mean((p_up - p_dn) * (p_up + p_dn - 2.0 * Y)))
            fd /= 2.0 * h
            denom = max(abs(fd), abs(gflat[j]), 1e-12)
            worst = max(worst, abs(fd - gflat[j]) / denom)
    return worst


def _check_model(model: DnnModel, problem: QpProblem):
    if model.fingerprint != problem.fingerprint:
        raise FingerprintMismatch(
            "baseline model fingerprint does not match this problem")


def dnn_predict(model: DnnModel, problem: QpProblem, p: ParamPoint) -> FullSolution:
    _check_model(model, problem)
    out = dnn_forward(model, p.to_stacked()[problem.varying_idx])
    n, m1 = model.n, model.m1
    return FullSolution(out[:n], out[n:n + m1], out[n + m1:])


def dnn_predict_batch(model: DnnModel, problem: QpProblem, thetas) -> tuple:
    """Array batch path: returns (X, LAM, MU) for varying-parameter rows."""
    _check_model(model, problem)
    out = dnn_forward(model, np.atleast_2d(np.asarray(thetas, float)))
    n, m1 = model.n, model.m1
    return out[:, :n], out[:, n:n + m1], out[:, n + m1:]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def baseline_to_dict(model: DnnModel) -> dict:
    return {
        "schema_version": BASELINE_SCHEMA_VERSION,
        "type": "baseline_dnn",
        "fingerprint": model.fingerprint,
        "sizes": list(model.sizes),
        "n": model.n, "m1": model.m1, "m2": model.m2,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def baseline_from_dict(doc: dict) -> DnnModel:
    try:
        if doc.get("schema_version") != BASELINE_SCHEMA_VERSION:
            raise ParseError(f"unsupported baseline schema_version {doc.get('schema_version')!r}")
        if doc.get("type") != "baseline_dnn":
            raise ParseError(f"not a baseline model file (type={doc.get('type')!r})")
        return DnnModel(
            weights=[np.asarray(W, float) for W in doc["weights"]],
            biases=[np.asarray(b, float) for b in doc["biases"]],
            sizes=tuple(int(s) for s in doc["sizes"]),
            fingerprint=str(doc["fingerprint"]),
            n=int(doc["n"]), m1=int(doc["m1"]), m2=int(doc["m2"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed baseline document: {e}") from e


def baseline_to_json(model: DnnModel) -> str:
    return json.dumps(baseline_to_dict(model), indent=2)


def baseline_from_json(text: str) -> DnnModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid baseline JSON: {e}") from e
    return baseline_from_dict(doc)


def solution_dataset_to_csv(ds: SolutionDataset) -> str:
    n_in, n_out = ds.inputs.shape[1], ds.targets.shape[1]
    header = ",".join([f"t{i}" for i in range(n_in)] + [f"y{j}" for j in range(n_out)])
    lines = [header]
    for row_in, row_out in zip(ds.inputs, ds.targets):
        lines.append(",".join(f"{v:.17g}" for v in list(row_in) + list(row_out)))
    return "\n".join(lines) + "\n"


def solution_dataset_from_csv(text: str) -> SolutionDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty dataset file")
    header = lines[0].split(",")
    n_in = sum(1 for h in header if h.startswith("t"))
    n_out = sum(1 for h in header if h.startswith("y"))
    if header != [f"t{i}" for i in range(n_in)] + [f"y{j}" for j in range(n_out)]:
        raise ParseError("unrecognized solution-dataset header")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    arr = np.asarray(rows)
    if arr.size == 0:
        arr = arr.reshape(0, n_in + n_out)
    return SolutionDataset(inputs=arr[:, :n_in], targets=arr[:, n_in:], meta={})
