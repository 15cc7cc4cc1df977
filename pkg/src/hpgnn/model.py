"""HPGNN: per-order polynomial filters over precomputed propagation operators.

For orders p = 1..P the model computes

    Z_p = sum_k beta[p, k] * S_p^k (X @ theta[p]),   k = 0..K
    Y   = [Z_1 | ... | Z_P] @ W

where ``S_p`` is the symmetrically normalized HiPPR operator of order p. The
map is linear in X; the only nonlinearity is the softmax inside the loss.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, DivergenceError, NumericError

CHECKPOINT_VERSION = 1


@dataclass
class HpgnnModel:
    beta: np.ndarray  # (P, K + 1)
    theta: list  # P arrays of shape (F, h)
    W: np.ndarray  # (P * h, C)
    dropout: float = 0.0
    seed: int | None = None
    init: dict = field(default_factory=dict)

    @property
    def P(self):
        return self.beta.shape[0]

    @property
    def K(self):
        return self.beta.shape[1] - 1

    @property
    def num_features(self):
        return self.theta[0].shape[0]

    @property
    def hidden(self):
        return self.theta[0].shape[1]

    @property
    def num_classes(self):
        return self.W.shape[1]

    def params(self):
        return {"beta": self.beta, "theta": self.theta, "W": self.W}

    def copy(self):
        return HpgnnModel(
            self.beta.copy(), [t.copy() for t in self.theta], self.W.copy(),
            self.dropout, self.seed, dict(self.init),
        )

    def check(self):
        if len(self.theta) != self.P:
            raise DimensionError(f"{len(self.theta)} theta blocks for P={self.P}")
        f, h = self.theta[0].shape
        for t in self.theta:
            if t.shape != (f, h):
                raise DimensionError(f"theta block of shape {t.shape}, expected {(f, h)}")
        if self.W.shape[0] != self.P * h:
            raise DimensionError(f"W has {self.W.shape[0]} rows, expected {self.P * h}")
        for name, arr in (("beta", self.beta), ("W", self.W), ("theta", np.concatenate(self.theta))):
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in {name}", group=name)


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_model(P, K, num_features, num_classes, hidden=64, *, alpha=0.15, dropout=0.0, seed=None):
    """Fresh parameters: beta[p, k] = alpha (1 - alpha)^k, Glorot-uniform theta and W."""
    if P < 1 or K < 0:
        raise ValueError("need P >= 1 and K >= 0")
    if not 0 <= dropout < 1:
        raise ValueError("dropout must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    beta = np.tile(alpha * (1.0 - alpha) ** np.arange(K + 1), (P, 1))
    theta = [_glorot(rng, num_features, hidden) for _ in range(P)]
    W = _glorot(rng, P * hidden, num_classes)
    return HpgnnModel(beta, theta, W, dropout, seed, {"scheme": "glorot_uniform", "alpha": alpha})


def _check_inputs(model, X, operators):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.num_features:
        raise DimensionError(f"features of shape {X.shape}, model expects F={model.num_features}")
    if len(operators) != model.P:
        raise DimensionError(f"{len(operators)} operators for P={model.P}")
    n = X.shape[0]
    for p, s in enumerate(operators, 1):
        if s.shape != (n, n):
            raise DimensionError(f"order-{p} operator has shape {s.shape}, expected {(n, n)}")
    return X


def _dropout(X, rate, rng):
    if rate <= 0 or rng is None:
        return X, None
    keep = (rng.random(X.shape) >= rate) / (1.0 - rate)
    return X * keep, keep


def propagation_stack(S, H0, K):
    """[H0, S H0, S^2 H0, ..., S^K H0]."""
    out = [H0]
    for _ in range(K):
        out.append(np.asarray(S @ out[-1]))
    return out


def as_kernel_operator(s, dense_fraction=0.1, dense_max_n=5000):
    """CSR for sparse operators, a dense array once the fill makes BLAS cheaper."""
    if not sp.issparse(s):
        return np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if n <= dense_max_n and s.nnz >= dense_fraction * n * n:
        return s.toarray()
    return s.tocsr()


def _forward(model, X, operators, rng=None):
    Xd, keep = _dropout(X, model.dropout, rng)
    stacks, Z = [], []
    for p in range(model.P):
        H = propagation_stack(operators[p], Xd @ model.theta[p], model.K)
        stacks.append(H)
        z = model.beta[p, 0] * H[0]
        for k in range(1, model.K + 1):
            z = z + model.beta[p, k] * H[k]
        Z.append(z)
    Zcat = np.concatenate(Z, axis=1)
    return Zcat @ model.W, (Xd, keep, stacks, Zcat)


def forward(model, X, operators, *, rng=None):
    """Logits of shape (n, C). Dropout applies only when ``rng`` is given."""
    X = _check_inputs(model, X, operators)
    return _forward(model, X, operators, rng)[0]


def embed(model, X, operators):
    """The concatenated representation ``[Z_1 | ... | Z_P]`` before the output map."""
    X = _check_inputs(model, X, operators)
    return _forward(model, X, operators)[1][3]


def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grads(model, X, operators, labels, train_mask, weight_decay=0.0, *, rng=None):
    """Mean masked cross-entropy plus ``weight_decay / 2 * (||theta||^2 + ||W||^2)``.

    Returns ``(loss, grads)`` with ``grads`` shaped like ``model.params()``.
    """
    X = _check_inputs(model, X, operators)
    idx = np.flatnonzero(np.asarray(train_mask))
    if idx.size == 0:
        raise ValueError("train_mask selects no nodes")
    labels = np.asarray(labels)
    model.check()
    logits, (Xd, _, stacks, Zcat) = _forward(model, X, operators, rng)

    logp = _log_softmax(logits[idx])
    y = labels[idx]
    ce = -logp[np.arange(idx.size), y].mean()
    penalty = 0.5 * weight_decay * (sum(float((t * t).sum()) for t in model.theta) + float((model.W * model.W).sum()))
    loss = ce + penalty
    if not np.isfinite(loss):
        group = "W" if not np.all(np.isfinite(model.W)) else "theta"
        raise NumericError(f"non-finite loss {loss}", group=group)

    dlogits = np.zeros_like(logits)
    probs = np.exp(logp)
    probs[np.arange(idx.size), y] -= 1.0
    dlogits[idx] = probs / idx.size

    gW = Zcat.T @ dlogits + weight_decay * model.W
    dZcat = dlogits @ model.W.T
    h = model.hidden
    gbeta = np.zeros_like(model.beta)
    gtheta = []
    for p in range(model.P):
        dZ = dZcat[:, p * h : (p + 1) * h]
        H = stacks[p]
        for k in range(model.K + 1):
            gbeta[p, k] = float((dZ * H[k]).sum())
        S = operators[p]
        ST = S.T
        G = model.beta[p, model.K] * dZ
        for k in range(model.K, 0, -1):
            G = model.beta[p, k - 1] * dZ + np.asarray(ST @ G)
        gtheta.append(Xd.T @ G + weight_decay * model.theta[p])

    grads = {"beta": gbeta, "theta": gtheta, "W": gW}
    for name, g in (("beta", gbeta), ("W", gW), ("theta", np.concatenate(gtheta))):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}", group=name)
    return float(loss), grads


def predict(model, X, operators):
    """Argmax class per node; ties go to the smaller class id."""
    return np.argmax(forward(model, X, operators), axis=1)


def accuracy(pred, labels, mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return float("nan")
    return float(np.mean(pred[idx] == np.asarray(labels)[idx]))


@dataclass
class TrainConfig:
    lr: float = 0.05
    weight_decay: float = 0.001
    optimizer: str = "sgd"
    momentum: float = 0.9
    max_epochs: int = 1000
    patience: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be > 0 and weight_decay >= 0")


class _Optimizer:
    def __init__(self, cfg, params):
        self.cfg = cfg
        self.t = 0
        self.m = _zeros_like(params)
        self.v = _zeros_like(params)

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        if cfg.optimizer == "sgd":
            for key in params:
                for i, (p, g) in enumerate(_pairs(params[key], grads[key])):
                    m = _slot(self.m, key, i)
                    m *= cfg.momentum
                    m += g
                    p -= cfg.lr * m
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for key in params:
            for i, (p, g) in enumerate(_pairs(params[key], grads[key])):
                m = _slot(self.m, key, i)
                v = _slot(self.v, key, i)
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _zeros_like(params):
    return {k: [np.zeros_like(a) for a in v] if isinstance(v, list) else np.zeros_like(v) for k, v in params.items()}


def _pairs(p, g):
    if isinstance(p, list):
        return zip(p, g)
    return [(p, g)]


def _slot(store, key, i):
    s = store[key]
    return s[i] if isinstance(s, list) else s


def train(model, X, operators, labels, train_mask, val_mask, test_mask=None, config=None):
    """Full-batch training with early stopping on validation accuracy.

    Returns ``(best_model, history)``; ``history`` holds one dict per epoch.
    Raises :class:`DivergenceError` when the training loss stays above
    ``10 ln C`` for 50 consecutive epochs.
    """
    cfg = config or TrainConfig()
    X = _check_inputs(model, X, operators)
    labels = np.asarray(labels)
    model = model.copy()
    model.check()
    operators = [as_kernel_operator(s) for s in operators]
    rng = np.random.default_rng(cfg.seed) if model.dropout > 0 else None
    opt = _Optimizer(cfg, model.params())
    limit = 10.0 * math.log(max(model.num_classes, 2))
    over = 0
    best, best_key, since = model.copy(), None, 0
    history = []
    for epoch in range(cfg.max_epochs):
        loss, grads = loss_and_grads(model, X, operators, labels, train_mask, cfg.weight_decay, rng=rng)
        opt.step(model.params(), grads)
        over = over + 1 if loss > limit else 0
        if over >= 50:
            raise DivergenceError(f"loss above {limit:.3f} for 50 epochs (epoch {epoch}, loss {loss:.3e})")
        logits = _forward(model, X, operators)[0]
        pred = np.argmax(logits, axis=1)
        val_idx = np.flatnonzero(val_mask)
        val_loss = float(-_log_softmax(logits[val_idx])[np.arange(val_idx.size), labels[val_idx]].mean()) if val_idx.size else float("nan")
        row = {
            "epoch": epoch,
            "train_loss": loss,
            "train_acc": accuracy(pred, labels, train_mask),
            "val_acc": accuracy(pred, labels, val_mask),
            "test_acc": accuracy(pred, labels, test_mask) if test_mask is not None else float("nan"),
        }
        history.append(row)
        key = (row["val_acc"], -val_loss)
        if best_key is None or key > best_key:
            since = 0 if best_key is None or key[0] > best_key[0] else since + 1
            best, best_key = model.copy(), key
        else:
            since += 1
        if since >= cfg.patience:
            break
    return best, history


def write_history(history, path):
    cols = ["epoch", "train_loss", "train_acc", "val_acc", "test_acc"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in history:
            w.writerow({c: row[c] for c in cols})


def save_checkpoint(model, path):
    doc = {
        "version": CHECKPOINT_VERSION,
        "P": model.P,
        "K": model.K,
        "num_features": model.num_features,
        "hidden": model.hidden,
        "num_classes": model.num_classes,
        "dropout": model.dropout,
        "seed": model.seed,
        "init": model.init,
        "beta": model.beta.tolist(),
        "theta": [t.tolist() for t in model.theta],
        "W": model.W.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    f, h = doc["num_features"], doc["hidden"]
    theta = [np.array(t, dtype=np.float64).reshape(f, h) for t in doc["theta"]]
    model = HpgnnModel(
        np.array(doc["beta"], dtype=np.float64).reshape(doc["P"], doc["K"] + 1),
        theta,
        np.array(doc["W"], dtype=np.float64).reshape(doc["P"] * h, doc["num_classes"]),
        doc["dropout"],
        doc["seed"],
        doc.get("init", {}),
    )
    model.check()
    return model
