"""Small fully connected network with exact backprop and Adam, in numpy.

Hidden layers use the exact (erf-based) GeLU; the output layer is affine.
Weights are stored ``out x in`` so a batch ``X`` of shape ``(b, in)`` maps to
``X @ W.T + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import erfc, ndtr

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    """``0.5 x (1 + erf(x / sqrt 2))``, written with erfc to keep the left tail accurate."""
    return 0.5 * x * erfc(-x / SQRT2)


def gelu_grad(x):
    return 0.5 * erfc(-x / SQRT2) + x * np.exp(-0.5 * x * x) * INV_SQRT_2PI


class MlpParams:
    """Weights and biases of the network.

    All parameters live in one contiguous float64 vector ``flat``;
    ``weights[i]`` (shape ``(out, in)``) and ``biases[i]`` are views into it,
    laid out layer by layer as ``W0, b0, W1, b1, ...``.
    """

    def __init__(self, layer_dims, weights, biases):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(weights) != len(self.layer_dims) - 1 or len(biases) != len(weights):
            raise ValueError("one weight matrix and bias per layer transition")
        for i, (W, b) in enumerate(zip(weights, biases)):
            shape = (self.layer_dims[i + 1], self.layer_dims[i])
            if np.shape(W) != shape or np.shape(b) != (shape[0],):
                raise ValueError(f"layer {i}: got W{np.shape(W)}, b{np.shape(b)}, expected W{shape}")
        flat = np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in zip(weights, biases)])
        self._bind(flat.astype(np.float64, copy=False))

    def _bind(self, flat: np.ndarray) -> None:
        self.flat = flat
        self.weights, self.biases = [], []
        pos = 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            self.weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in))
            pos += fan_in * fan_out
            self.biases.append(flat[pos : pos + fan_out])
            pos += fan_out

    @classmethod
    def from_flat(cls, layer_dims, flat: np.ndarray) -> "MlpParams":
        dims = tuple(int(d) for d in layer_dims)
        expected = sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))
        if flat.shape != (expected,):
            raise ValueError(f"flat vector has shape {flat.shape}, expected ({expected},)")
        obj = cls.__new__(cls)
        obj.layer_dims = dims
        obj._bind(flat)
        return obj

    @property
    def n_params(self) -> int:
        return self.flat.size

    def copy(self) -> "MlpParams":
        return MlpParams.from_flat(self.layer_dims, self.flat.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams.from_flat(self.layer_dims, np.zeros_like(self.flat))

    def equals(self, other: "MlpParams") -> bool:
        return self.layer_dims == other.layer_dims and np.array_equal(self.flat, other.flat)

    def __repr__(self):
        return f"MlpParams(layer_dims={self.layer_dims}, n_params={self.n_params})"


def init_mlp(layer_dims: Sequence[int], seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(layer_dims), weights, biases)


def _forward_cache(p: MlpParams, X: np.ndarray):
    """Output plus per-hidden-layer ``(z, Phi(z))`` and layer inputs for backprop."""
    pre, post = [], [X]
    h = X
    last = len(p.weights) - 1
    for i, (W, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ W.T + b
        if i == last:
            return z, pre, post
        cdf = ndtr(z)
        pre.append((z, cdf))
        h = z * cdf
        post.append(h)


def forward(p: MlpParams, e) -> np.ndarray:
    """Q-values for one input (shape ``(n_x,)``) or a batch (``(b, n_x)``)."""
    X = np.asarray(e, dtype=np.float64)
    single = X.ndim == 1
    if X.shape[-1] != p.layer_dims[0]:
        raise ValueError(f"input width {X.shape[-1]} != {p.layer_dims[0]}")
    out, _, _ = _forward_cache(p, np.atleast_2d(X))
    return out[0] if single else out


@dataclass(frozen=True)
class LossSpec:
    kind: str = "huber"
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("huber", "mse"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.kind == "huber" and not self.delta > 0:
            raise ValueError("huber delta must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta} if self.kind == "huber" else {"kind": "mse"}

    @classmethod
    def from_dict(cls, d) -> "LossSpec":
        return cls(d["kind"], float(d.get("delta", 1.0)))


def loss(pred, target, spec: LossSpec) -> float:
    u = np.asarray(target, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    if u.size == 0:
        raise ValueError("empty batch")
    if spec.kind == "mse":
        return float(np.mean(u * u))
    a = np.abs(u)
    d = spec.delta
    return float(np.mean(np.where(a <= d, 0.5 * u * u, d * (a - 0.5 * d))))


def _loss_grad(pred, target, spec: LossSpec) -> np.ndarray:
    """d loss / d pred."""
    r = pred - target
    b = r.size
    if spec.kind == "mse":
        return 2.0 * r / b
    return np.clip(r, -spec.delta, spec.delta) / b


def backward(p: MlpParams, E, actions, targets, spec: LossSpec) -> Tuple[MlpParams, float]:
    """Gradient of the batch loss on the chosen action heads.

    Returns ``(grads, loss_value)``; ``grads`` is shaped like ``p``. Heads not
    selected by a sample's action receive no gradient from that sample.
    """
    X = np.atleast_2d(np.asarray(E, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    out, pre, post = _forward_cache(p, X)
    rows = np.arange(X.shape[0])
    pred = out[rows, actions]
    value = loss(pred, targets, spec)

    delta = np.zeros_like(out)
    delta[rows, actions] = _loss_grad(pred, targets, spec)
    grads = p.zeros_like()
    for i in range(len(p.weights) - 1, -1, -1):
        np.matmul(delta.T, post[i], out=grads.weights[i])
        np.sum(delta, axis=0, out=grads.biases[i])
        if i:
            z, cdf = pre[i - 1]
            delta = (delta @ p.weights[i]) * (cdf + z * np.exp(-0.5 * z * z) * INV_SQRT_2PI)
    return grads, value


@dataclass
class AdamState:
    """Adam moments, stored flat in the same layout as ``MlpParams.flat``."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, p: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(np.zeros_like(p.flat), np.zeros_like(p.flat), 0, beta1, beta2, eps)


def adam_step(p: MlpParams, g: MlpParams, s: AdamState, lr: float) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    if g.flat.shape != p.flat.shape or s.m.shape != p.flat.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    t = s.t + 1
    b1, b2 = s.beta1, s.beta2
    gf = g.flat
    m = b1 * s.m
    m += (1.0 - b1) * gf
    v = gf * gf
    v *= 1.0 - b2
    v += b2 * s.v
    denom = np.sqrt(v)
    denom *= 1.0 / math.sqrt(1.0 - b2**t)
    denom += s.eps
    new = m * (lr / (1.0 - b1**t))
    new /= denom
    np.subtract(p.flat, new, out=new)
    return MlpParams.from_flat(p.layer_dims, new), AdamState(m, v, t, b1, b2, s.eps)
