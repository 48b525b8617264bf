"""Small deterministic float64 neural-network kernels.

Everything here works on plain ``dict[str, np.ndarray]`` parameter maps;
gradients come back as dicts with the same keys and shapes. There is no
autodiff: each forward has a hand-written backward, and :func:`grad_check`
exists to keep them honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import DataError, NumericError

Params = dict[str, np.ndarray]


def check_finite(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"{name}: non-finite value")


def _check_shapes(op, cond, *shapes):
    if not cond:
        raise ValueError(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


# -- initialisation -----------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape or (fan_in, fan_out))


# -- elementwise --------------------------------------------------------------


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(x)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    return dy * (x > 0)


def softmax(logits):
    """Row-wise softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# -- affine -------------------------------------------------------------------


def affine_forward(x, W, b):
    _check_shapes("affine", x.shape[-1] == W.shape[0] and b.shape == (W.shape[1],), x.shape, W.shape, b.shape)
    return x @ W + b


def affine_backward(dy, x, W):
    """Returns (dx, dW, db) for ``y = x @ W + b`` with 2-D ``x``."""
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


# -- LSTM ---------------------------------------------------------------------
# gate layout along the last axis: input, forget, output, candidate


def init_lstm(rng, in_dim: int, cells: int, prefix: str) -> Params:
    b = np.zeros(4 * cells)
    b[cells : 2 * cells] = 1.0
    return {
        f"{prefix}.Wx": glorot_uniform(rng, in_dim, 4 * cells),
        f"{prefix}.Wh": glorot_uniform(rng, cells, 4 * cells),
        f"{prefix}.b": b,
    }


@dataclass
class LstmCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tc: np.ndarray


def lstm_cell(x, h_prev, c_prev, Wx, Wh, b):
    """One LSTM step for a batch. Returns ``(h, c, cache)``."""
    H = h_prev.shape[-1]
    _check_shapes(
        "lstm_cell",
        Wx.shape == (x.shape[-1], 4 * H) and Wh.shape == (H, 4 * H) and b.shape == (4 * H,)
        and c_prev.shape == h_prev.shape,
        x.shape, h_prev.shape, Wx.shape, Wh.shape,
    )
    a = x @ Wx + h_prev @ Wh + b
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H : 2 * H])
    o = sigmoid(a[..., 2 * H : 3 * H])
    g = np.tanh(a[..., 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, LstmCache(x, h_prev, c_prev, i, f, o, g, tc)


def lstm_cell_backward(dh, dc, cache: LstmCache, Wx, Wh):
    """Backward of :func:`lstm_cell`.

    ``dh`` and ``dc`` are the total upstream gradients on ``h`` and ``c``.
    Returns ``(dx, dh_prev, dc_prev, dWx, dWh, db)``.
    """
    k = cache
    dc = dc + dh * k.o * (1.0 - k.tc**2)
    do = dh * k.tc
    di = dc * k.g
    df = dc * k.c_prev
    dg = dc * k.i
    da = np.concatenate(
        [di * k.i * (1 - k.i), df * k.f * (1 - k.f), do * k.o * (1 - k.o), dg * (1 - k.g**2)], axis=-1
    )
    dx = da @ Wx.T
    dh_prev = da @ Wh.T
    dc_prev = dc * k.f
    return dx, dh_prev, dc_prev, k.x.T @ da, k.h_prev.T @ da, da.sum(axis=0)


def lstm_layer_forward(xs, Wx, Wh, b):
    """Run a layer over ``xs`` of shape ``(T, B, D)`` from zero state."""
    T, B, _ = xs.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((T, B, H))
    caches = []
    for t in range(T):
        h, c, cache = lstm_cell(xs[t], h, c, Wx, Wh, b)
        hs[t] = h
        caches.append(cache)
    return hs, caches


def lstm_layer_backward(dhs, caches, Wx, Wh):
    """Full BPTT through one layer. Returns ``(dxs, dWx, dWh, db)``."""
    T, B, H = dhs.shape
    dxs = np.empty((T, B, Wx.shape[0]))
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(Wh.shape[1])
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dx, dh_next, dc_next, gWx, gWh, gb = lstm_cell_backward(dhs[t] + dh_next, dc_next, caches[t], Wx, Wh)
        dxs[t] = dx
        dWx += gWx
        dWh += gWh
        db += gb
    return dxs, dWx, dWh, db


# -- losses -------------------------------------------------------------------


def mse_loss(pred, target, mask=None):
    """Sum of squared errors and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_shapes("mse_loss", pred.shape == target.shape, pred.shape, target.shape)
    diff = pred - target
    if mask is not None:
        diff = diff * mask
    return float(np.sum(diff**2)), 2.0 * diff


def ce_loss_soft(logits, targets, check_targets: bool = True):
    """Cross-entropy ``-sum_k t_k log softmax(z)_k`` summed over rows.

    Returns ``(loss, dlogits)`` with ``dlogits = softmax(z) - t`` per row.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    _check_shapes("ce_loss_soft", logits.shape == targets.shape, logits.shape, targets.shape)
    if check_targets:
        validate_distribution(targets, tol=1e-9)
    logp = log_softmax(logits)
    loss = -float(np.sum(targets * logp))
    return loss, np.exp(logp) - targets


def bce_with_logits(logits, labels):
    """Binary cross-entropy summed over entries; gradient ``sigmoid(z) - y``."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    # log(1 + e^z) computed stably
    softplus = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
    loss = float(np.sum(softplus - y * z))
    return loss, sigmoid(z) - y


def validate_distribution(p, tol: float = 1e-9) -> None:
    p = np.asarray(p)
    if np.any(p < -tol) or not np.all(np.isfinite(p)):
        raise DataError("distribution has negative or non-finite entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise DataError(f"distribution rows must sum to 1 (worst row sums to {sums.flat[np.argmax(np.abs(sums - 1.0))]!r})")


# -- optimisation -------------------------------------------------------------


@dataclass
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
        }


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: Params, grads: Mapping[str, np.ndarray]) -> None:
        for k, g in grads.items():
            params[k] -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k in sorted(grads):
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(cfg.learning_rate)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


# -- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    n_checked: int = 0
    max_rel_error: float = 0.0
    failures: list[tuple[str, tuple, float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


# Central differences at h=1e-5 carry ~1e-11 of roundoff, so gradients much
# below 1e-7 cannot be resolved to 1e-4 relative; the floor turns those
# entries into an absolute check at ~1e-10.
REL_ERROR_FLOOR = 1e-6


def rel_error(a: float, b: float, floor: float = REL_ERROR_FLOOR) -> float:
    return abs(a - b) / max(abs(a) + abs(b), floor)


def grad_check(
    loss_fn: Callable[[Params], tuple[float, Mapping[str, np.ndarray]]],
    params: Params,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    n_samples: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_fn(params)`` must return ``(loss, grads)``. With ``n_samples``
    set, that many entries are drawn (seeded) across all parameters;
    otherwise every entry is checked. ``params`` is restored afterwards.
    """
    report = GradCheckReport()
    names = sorted(params)
    if not names:
        return report
    _, grads = loss_fn(params)
    grads = {k: np.array(grads[k], copy=True) for k in names}
    entries = [(k, idx) for k in names for idx in np.ndindex(params[k].shape)]
    if n_samples is not None and n_samples < len(entries):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(entries), size=n_samples, replace=False)
        entries = [entries[i] for i in sorted(pick)]
    for name, idx in entries:
        p = params[name]
        old = p[idx]
        p[idx] = old + h
        up, _ = loss_fn(params)
        p[idx] = old - h
        down, _ = loss_fn(params)
        p[idx] = old
        numeric = (up - down) / (2 * h)
        analytic = float(grads[name][idx])
        err = rel_error(analytic, numeric)
        report.n_checked += 1
        report.max_rel_error = max(report.max_rel_error, err)
        if err > tolerance:
            report.failures.append((name, idx, analytic, numeric, err))
    return report


# -- checkpoints --------------------------------------------------------------

CHECKPOINT_VERSION = 1


def params_to_json(params: Mapping[str, np.ndarray]) -> dict:
    return {
        k: {"shape": list(params[k].shape), "data": [float(x) for x in np.asarray(params[k]).ravel()]}
        for k in sorted(params)
    }


def params_from_json(d: Mapping) -> Params:
    out = {}
    for k, v in d.items():
        arr = np.asarray(v["data"], dtype=np.float64)
        shape = tuple(v["shape"])
        if int(np.prod(shape)) != arr.size:
            raise DataError(f"parameter {k}: shape {shape} does not match {arr.size} values")
        out[k] = arr.reshape(shape)
    return out


def write_checkpoint(path, kind: str, arch: dict, stats: dict, params: Mapping[str, np.ndarray], extra=None) -> None:
    doc = {"version": CHECKPOINT_VERSION, "kind": kind, "arch": arch, "stats": stats, "params": params_to_json(params)}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, allow_nan=False) + "\n", encoding="utf-8")


def read_checkpoint(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON checkpoint ({exc})") from exc
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    for key in ("kind", "arch", "stats", "params"):
        if key not in doc:
            raise DataError(f"{path}: checkpoint missing {key!r}")
    doc["params"] = params_from_json(doc["params"])
    return doc
