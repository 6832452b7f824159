"""Hand-written layers with explicit backward passes, two optimizers, a
finite-difference gradient checker and the binary checkpoint format.

Layers keep whatever float dtype their parameters carry: training runs in
float32, gradient checks in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

CKPT_MAGIC = b"NNCKPT1"


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def glorot_uniform(rng, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def orthogonal(rng, rows, cols, dtype=np.float32):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(dtype)


# --------------------------------------------------------------------------
# LSTM

@dataclass
class LstmParams:
    """Gate blocks are stacked along the last axis in order i, f, g, o.

    W: input weights (D, 4H); U: recurrent weights (H, 4H); b: biases (4H,).
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = "ifgo".index(name)
        H = self.hidden
        sl = slice(k * H, (k + 1) * H)
        return self.W[:, sl], self.U[:, sl], self.b[sl]

    @classmethod
    def initialize(cls, input_dim: int, hidden: int, rng, dtype=np.float32) -> LstmParams:
        W = glorot_uniform(rng, input_dim, 4 * hidden, dtype)
        U = np.concatenate([orthogonal(rng, hidden, hidden, dtype) for _ in range(4)], axis=1)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = 1.0
        return cls(W, U, b)


def lstm_forward(X, params: LstmParams, h0=None, c0=None, mask=None):
    """Run the LSTM over ``X`` and return the final hidden state and a cache.

    ``X`` is (T, D) for one sequence or (B, T, D) for a batch. ``mask``
    (B, T) marks real steps; on masked steps the state passes through
    unchanged, so front padding is equivalent to the unpadded sequence.
    """
    single = X.ndim == 2
    if single:
        X = X[None]
        mask = None if mask is None else np.asarray(mask)[None]
    B, T, _ = X.shape
    if T == 0:
        raise ValueError("empty sequence")
    H = params.hidden
    dt = params.W.dtype
    h = np.zeros((B, H), dt) if h0 is None else np.broadcast_to(h0, (B, H)).astype(dt)
    c = np.zeros((B, H), dt) if c0 is None else np.broadcast_to(c0, (B, H)).astype(dt)
    m_all = np.ones((B, T, 1), dt) if mask is None else np.asarray(mask, dt)[:, :, None]

    xs = np.ascontiguousarray(X.transpose(1, 0, 2))
    zx = xs @ params.W + params.b
    hs = np.empty((T + 1, B, H), dt)
    cs = np.empty((T + 1, B, H), dt)
    gates = np.empty((T, B, 4 * H), dt)
    tcs = np.empty((T, B, H), dt)
    hs[0], cs[0] = h, c
    for t in range(T):
        z = zx[t] + hs[t] @ params.U
        a = np.empty_like(z)
        a[:, :2 * H] = sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = sigmoid(z[:, 3 * H:])
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        c_new = f * cs[t] + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = m_all[:, t]
        cs[t + 1] = m * c_new + (1 - m) * cs[t]
        hs[t + 1] = m * h_new + (1 - m) * hs[t]
        gates[t] = a
        tcs[t] = tc
    cache = (xs, hs, cs, gates, tcs, m_all, params, single)
    h_T = hs[T][0] if single else hs[T]
    return h_T, cache


def lstm_backward(dh_T, cache):
    """Backpropagate through time.

    Returns ``(grads, dX, dh0, dc0)`` where ``grads`` is an ``LstmParams``
    holding dW, dU, db.
    """
    xs, hs, cs, gates, tcs, m_all, params, single = cache
    T, B, _ = xs.shape
    H = params.hidden
    dh = np.array(dh_T, dtype=params.W.dtype).reshape(B, H)
    dc = np.zeros_like(dh)
    dz_all = np.empty_like(gates)
    for t in range(T - 1, -1, -1):
        m = m_all[:, t]
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = tcs[t]
        dh_new = m * dh
        dc_new = m * dc + dh_new * o * (1 - tc * tc)
        dz = dz_all[t]
        dz[:, :H] = dc_new * g * i * (1 - i)
        dz[:, H:2 * H] = dc_new * cs[t] * f * (1 - f)
        dz[:, 2 * H:3 * H] = dc_new * i * (1 - g * g)
        dz[:, 3 * H:] = dh_new * tc * o * (1 - o)
        dh = dz @ params.U.T + (1 - m) * dh
        dc = dc_new * f + (1 - m) * dc
    dW = np.einsum("tbd,tbk->dk", xs, dz_all)
    dU = np.einsum("tbh,tbk->hk", hs[:-1], dz_all)
    db = dz_all.sum(axis=(0, 1))
    dX = (dz_all @ params.W.T).transpose(1, 0, 2)
    if single:
        return LstmParams(dW, dU, db), dX[0], dh[0], dc[0]
    return LstmParams(dW, dU, db), dX, dh, dc


# --------------------------------------------------------------------------
# dense, dropout, loss

@dataclass
class DenseParams:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "softmax"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def initialize(cls, n_in, n_out, activation, rng, dtype=np.float32) -> DenseParams:
        return cls(glorot_uniform(rng, n_in, n_out, dtype), np.zeros(n_out, dtype), activation)


@dataclass
class DropoutSpec:
    p: float = 0.9
    train: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("drop probability must be in [0, 1)")

    @property
    def active(self) -> bool:
        return self.train and self.p > 0


def dense_forward(x, params: DenseParams, dropout: DropoutSpec | None = None, rng=None):
    """Affine map followed by ReLU (+ inverted dropout) or softmax."""
    x = np.asarray(x)
    if x.shape[-1] != params.W.shape[0]:
        raise ValueError(f"shape mismatch: input {x.shape[-1]} vs weights {params.W.shape[0]}")
    z = x @ params.W + params.b
    if params.activation == "softmax":
        return softmax(z), (x, None, params)
    out = np.maximum(z, 0)
    keep = None
    if dropout is not None and dropout.active:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        q = 1.0 - dropout.p
        keep = (rng.random(out.shape) < q).astype(out.dtype) / out.dtype.type(q)
        out = out * keep
    return out, (x, (z, keep), params)


def dense_backward(dout, cache):
    """For ReLU ``dout`` is the gradient of the output; for softmax it is the
    gradient with respect to the logits (see ``weighted_cross_entropy``)."""
    x, extra, params = cache
    if params.activation == "relu":
        z, keep = extra
        if keep is not None:
            dout = dout * keep
        dout = dout * (z > 0)
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return x2.T @ d2, d2.sum(axis=0), dout @ params.W.T


def weighted_cross_entropy(probs, gold, class_weights):
    """Weighted negative log-likelihood.

    For a single distribution returns ``(loss, dlogits)``. For a batch
    (B, C) with gold (B,) the loss and gradient are means over the batch.
    """
    probs = np.asarray(probs)
    w = np.asarray(class_weights, dtype=probs.dtype)
    if probs.ndim == 1:
        wg = w[gold]
        loss = -wg * np.log(max(float(probs[gold]), 1e-12))
        grad = probs.copy()
        grad[gold] -= 1
        return float(loss), wg * grad
    gold = np.asarray(gold)
    B = probs.shape[0]
    wg = w[gold]
    p_gold = np.maximum(probs[np.arange(B), gold], 1e-12)
    loss = float(np.mean(-wg * np.log(p_gold)))
    grad = probs.copy()
    grad[np.arange(B), gold] -= 1
    grad *= (wg / B)[:, None]
    return loss, grad


# --------------------------------------------------------------------------
# optimizers (pure: inputs are never mutated)

def sgd_momentum_init(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def sgd_momentum_step(params: dict, grads: dict, state: dict, lr=0.015, momentum=0.9):
    """v <- mu*v - lr*g; theta <- theta + v. Returns (params, state)."""
    new_params, new_state = {}, {}
    for k, theta in params.items():
        v = momentum * state[k] - lr * grads[k]
        new_state[k] = v.astype(theta.dtype, copy=False)
        new_params[k] = (theta + v).astype(theta.dtype, copy=False)
    return new_params, new_state


def adadelta_init(params: dict) -> dict:
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}


def adadelta_step(params: dict, grads: dict, state: dict, rho=0.95, eps=1e-6, lr=1.0):
    """AdaDelta with running averages E[g^2] and E[dx^2] per parameter.

    ``lr`` scales the applied step only (1.0 gives the plain method).
    """
    new_params, new_state = {}, {}
    for k, theta in params.items():
        g = grads[k]
        eg2, edx2 = state[k]
        eg2 = rho * eg2 + (1 - rho) * g * g
        delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        edx2 = rho * edx2 + (1 - rho) * delta * delta
        new_state[k] = (eg2.astype(theta.dtype, copy=False), edx2.astype(theta.dtype, copy=False))
        new_params[k] = (theta + lr * delta).astype(theta.dtype, copy=False)
    return new_params, new_state


# --------------------------------------------------------------------------
# gradient check

class NonDeterministicLoss(ValueError):
    pass


def gradient_check(loss_fn: Callable, point, eps: float = 1e-5) -> float:
    """Compare ``loss_fn``'s analytic gradient to central differences.

    ``loss_fn(theta) -> (loss, grad)`` on a flat float64 vector. Returns the
    maximum of |ga - gn| / max(1e-8, |ga| + |gn|) over coordinates.
    """
    theta = np.array(point, dtype=np.float64).ravel()
    loss, grad = loss_fn(theta.copy())
    if not np.isfinite(loss):
        raise ValueError("non-finite loss")
    again, _ = loss_fn(theta.copy())
    if again != loss:
        raise NonDeterministicLoss("non-deterministic loss")
    grad = np.asarray(grad, dtype=np.float64).ravel()
    worst = 0.0
    for j in range(theta.size):
        old = theta[j]
        theta[j] = old + eps
        lp, _ = loss_fn(theta.copy())
        theta[j] = old - eps
        lm, _ = loss_fn(theta.copy())
        theta[j] = old
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise ValueError("non-finite loss")
        gn = (lp - lm) / (2 * eps)
        ga = grad[j]
        worst = max(worst, abs(ga - gn) / max(1e-8, abs(ga) + abs(gn)))
    return worst


# --------------------------------------------------------------------------
# checkpoints

@njit(cache=True)
def _fnv1a64(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for byte in data:
        h = (h ^ np.uint64(byte)) * prime
    return h


def fnv1a64(data: bytes) -> int:
    return int(_fnv1a64(np.frombuffer(data, dtype=np.uint8)))


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float32 tensors in order, followed by an FNV-1a checksum
    of all payload bytes."""
    parts = [CKPT_MAGIC]
    payloads = []
    for name, arr in tensors.items():
        raw_name = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        parts.append(struct.pack("<Q", len(raw_name)) + raw_name)
        parts.append(struct.pack("<Q", arr.ndim) + struct.pack(f"<{arr.ndim}q", *arr.shape))
        payload = arr.tobytes(order="C")
        payloads.append(payload)
        parts.append(payload)
    parts.append(struct.pack("<Q", fnv1a64(b"".join(payloads))))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError(f"{path}: not an NNCKPT1 checkpoint")
    off = len(CKPT_MAGIC)
    end = len(data) - 8
    tensors = {}
    payloads = []
    while off < end:
        (n,) = struct.unpack_from("<Q", data, off)
        off += 8
        name = data[off:off + n].decode("utf-8")
        off += n
        (rank,) = struct.unpack_from("<Q", data, off)
        off += 8
        dims = struct.unpack_from(f"<{rank}q", data, off)
        off += 8 * rank
        size = int(np.prod(dims, dtype=np.int64)) * 4
        payload = data[off:off + size]
        off += size
        payloads.append(payload)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if off != end:
        raise ValueError(f"{path}: truncated checkpoint")
    (stored,) = struct.unpack_from("<Q", data, end)
    if stored != fnv1a64(b"".join(payloads)):
        raise ValueError(f"{path}: checksum mismatch")
    return tensors
