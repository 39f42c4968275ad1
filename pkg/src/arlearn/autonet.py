"""Minimal dense-network machinery: layers, Adam, and a gradient-check harness.

Batch convention: rows are samples. A layer with weight ``W`` of shape
(out, in) and bias ``b`` of shape (out,) maps x (N, in) to act(x @ W.T + b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError, UsageError
from .numcore import Rng, relu, relu_grad

ACTIVATIONS = ("relu", "linear", "sigmoid")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise ShapeError(f"inconsistent layer shapes W={self.W.shape}, b={self.b.shape}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


@dataclass
class LayerCache:
    """Intermediates stored by dense_forward for the backward pass."""

    x: np.ndarray
    z: np.ndarray  # pre-activation
    y: np.ndarray  # post-activation (post-dropout)
    mask: np.ndarray | None = None  # inverted-dropout mask, if applied


def init_dense(rng: Rng, n_in: int, n_out: int, activation: str = "linear") -> DenseLayer:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero bias."""
    limit = math.sqrt(6.0 / (n_in + n_out))
    W = rng.uniform(n_out, n_in, -limit, limit)
    return DenseLayer(W=W, b=np.zeros(n_out), activation=activation)


def dense_forward(
    layer: DenseLayer,
    x: np.ndarray,
    train_mode: bool = False,
    dropout_rate: float = 0.0,
    rng: Rng | None = None,
) -> tuple[np.ndarray, LayerCache]:
    """y = act(x @ W.T + b), with inverted dropout on y in train mode.

    Dropout is applied only when train_mode is true and dropout_rate > 0,
    so a rate of 0 makes train and inference passes bit-identical.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ShapeError(f"layer expects inputs with {layer.n_in} columns, got shape {x.shape}")
    z = x @ layer.W.T + layer.b
    if layer.activation == "relu":
        y = relu(z)
    elif layer.activation == "sigmoid":
        y = sigmoid(z)
    else:
        y = z
    mask = None
    if train_mode and dropout_rate > 0.0:
        if rng is None:
            raise UsageError("dropout requires an rng stream in train mode")
        mask = rng.dropout_mask(y.shape[0], y.shape[1], dropout_rate)
        y = y * mask
    return y, LayerCache(x=x, z=z, y=y, mask=mask)


def dense_backward(
    layer: DenseLayer, cache: LayerCache, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reverse-mode gradients (dx, dW, db) through the cached forward pass."""
    if cache is None:
        raise UsageError("dense_backward needs the cache from dense_forward")
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != cache.y.shape:
        raise ShapeError(f"cotangent shape {dy.shape} != forward output shape {cache.y.shape}")
    if cache.mask is not None:
        dy = dy * cache.mask
    if layer.activation == "relu":
        dz = dy * relu_grad(cache.z)
    elif layer.activation == "sigmoid":
        s = sigmoid(cache.z)
        dz = dy * s * (1.0 - s)
    else:
        dz = dy
    dW = dz.T @ cache.x
    db = dz.sum(axis=0)
    dx = dz @ layer.W
    return dx, dW, db


@dataclass
class AdamState:
    """First/second moment estimates for one named parameter group."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    state = AdamState()
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, in place on ``params``.

    Parameters without an entry in ``grads`` are treated as zero-gradient
    (their moments decay but their values stay fixed at v=m=0 startup).
    """
    state.t += 1
    b1t = 1.0 - ADAM_BETA1**state.t
    b2t = 1.0 - ADAM_BETA2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(g)
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + ADAM_EPS)
    return params, state


def grad_check_report(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-5,
) -> dict[str, float]:
    """Central-difference check of ``analytic`` against ``loss_fn``.

    ``loss_fn`` must evaluate the objective at the current contents of the
    arrays in ``params``; each entry is perturbed in place by +-h and
    restored. Per parameter the error is |a - n| / max(|a|, |n|, 1e-12) with
    |.| the Euclidean norm over the parameter's entries (for a scalar
    parameter this is the plain relative error). Aggregating per parameter
    keeps the check meaningful in float64: single entries whose true
    gradient is ~1e-5 of the dominant ones carry central-difference rounding
    noise far above any useful per-entry tolerance.
    """
    if h <= 0:
        raise ConfigError(f"finite-difference step must be positive, got {h}")
    report: dict[str, float] = {}
    for name, p in params.items():
        a = analytic[name]
        if a.shape != p.shape:
            raise ShapeError(f"analytic gradient for {name!r} has shape {a.shape}, expected {p.shape}")
        flat = p.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn()
            flat[i] = orig - h
            f_minus = loss_fn()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * h)
        a_norm = float(np.linalg.norm(a))
        n_norm = float(np.linalg.norm(numeric))
        diff = float(np.linalg.norm(a.reshape(-1) - numeric))
        report[name] = diff / max(a_norm, n_norm, 1e-12)
    return report


def grad_check(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error of analytic vs central-difference gradients."""
    report = grad_check_report(loss_fn, params, analytic, h)
    return max(report.values()) if report else 0.0
