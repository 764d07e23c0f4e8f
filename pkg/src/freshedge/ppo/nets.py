"""Dense networks with hand-written backprop, Adam, and a binary checkpoint format."""
from __future__ import annotations

import io
import os
import struct

import numpy as np
from scipy.special import erf

CHECKPOINT_MAGIC = b"FRESHCKP"
CHECKPOINT_VERSION = 1
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class CheckpointError(ValueError):
    pass


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


class MLP:
    """Fully connected net, GELU hidden layers, linear output.

    ``params`` is a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    (fan_in, fan_out); :meth:`backward` returns gradients in the same order.
    """

    def __init__(self, sizes, rng: np.random.Generator, dropout: float = 0.0, out_scale: float = 0.01):
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least input and output sizes, all positive")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        self.sizes = tuple(int(s) for s in sizes)
        self.dropout = dropout
        self.params = []
        for k, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = k == len(self.sizes) - 2
            std = (out_scale if last else 1.0) * np.sqrt(2.0 / a)
            self.params += [rng.normal(0.0, std, size=(a, b)), np.zeros(b)]

    @property
    def num_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, X, rng: np.random.Generator | None = None):
        """Return ``(output, cache)``; dropout is active only when ``rng`` is given."""
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input of shape (n, {self.sizes[0]}), got {X.shape}")
        acts, pres, masks = [X], [], []
        h = X
        for k in range(self.num_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            a = h @ W + b
            if k == self.num_layers - 1:
                return a, (acts, pres, masks)
            pres.append(a)
            h = gelu(a)
            if rng is not None and self.dropout > 0:
                m = (rng.random(h.shape) >= self.dropout) / (1.0 - self.dropout)
                h = h * m
                masks.append(m)
            else:
                masks.append(None)
            acts.append(h)

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, cache, d_out):
        acts, pres, masks = cache
        grads = [None] * len(self.params)
        g = np.asarray(d_out, float)
        for k in range(self.num_layers - 1, -1, -1):
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k == 0:
                break
            g = g @ self.params[2 * k].T
            if masks[k - 1] is not None:
                g = g * masks[k - 1]
            g = g * gelu_grad(pres[k - 1])
        return grads

    def copy(self) -> "MLP":
        out = object.__new__(MLP)
        out.sizes, out.dropout = self.sizes, self.dropout
        out.params = [p.copy() for p in self.params]
        return out


class Adam:
    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float) -> None:
        """In-place descent step on ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads, max_norm: float):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if not np.isfinite(norm):
        raise FloatingPointError("non-finite gradient")
    if norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads, norm


def lr_schedule(round_index: int, total_rounds: int, initial: float, final: float) -> float:
    """Geometric decay from ``initial`` to ``final`` over the training rounds."""
    if total_rounds <= 1:
        return initial
    frac = min(max(round_index / (total_rounds - 1), 0.0), 1.0)
    return float(initial * (final / initial) ** frac)


# checkpoint: magic, version, count, then per array: name, ndim, shape, float64 LE data

def save_arrays(target, arrays: dict) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        key = name.encode("utf-8")
        buf.write(struct.pack("<H", len(key)))
        buf.write(key)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    data = buf.getvalue()
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            fh.write(data)
    else:
        target.write(data)


def load_arrays(source) -> dict:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    try:
        version, count = struct.unpack_from("<II", data, pos)
        pos += 8
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(data):
                raise CheckpointError("truncated checkpoint")
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if pos != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    return out


def net_arrays(prefix: str, net: MLP, opt: Adam | None = None) -> dict:
    out = {}
    for k, p in enumerate(net.params):
        out[f"{prefix}.param{k}"] = p
        if opt is not None:
            out[f"{prefix}.adam_m{k}"] = opt.m[k]
            out[f"{prefix}.adam_v{k}"] = opt.v[k]
    if opt is not None:
        out[f"{prefix}.adam_t"] = np.array([float(opt.t)])
    return out


def restore_net(prefix: str, arrays: dict, net: MLP, opt: Adam | None = None) -> None:
    for k in range(len(net.params)):
        key = f"{prefix}.param{k}"
        if key not in arrays or arrays[key].shape != net.params[k].shape:
            raise CheckpointError(f"checkpoint does not match network layout at {key}")
        net.params[k] = arrays[key].copy()
        if opt is not None and f"{prefix}.adam_m{k}" in arrays:
            opt.m[k] = arrays[f"{prefix}.adam_m{k}"].copy()
            opt.v[k] = arrays[f"{prefix}.adam_v{k}"].copy()
    if opt is not None and f"{prefix}.adam_t" in arrays:
        opt.t = int(arrays[f"{prefix}.adam_t"][0])
