"""Dense math primitives: softmax/CE, cosine, Adam and a finite-difference oracle.

Everything here computes in float64; callers hand in float32 data freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .errors import VoxEvalError


class ShapeError(VoxEvalError, ValueError):
    pass


class ZeroNormError(VoxEvalError, ValueError):
    pass


def softmax(logits, axis: int = -1) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0 or x.shape[axis] == 0:
        raise ShapeError("softmax of an empty vector")
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits, label: int):
    """Returns (loss, d loss / d logits) for a single example."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ShapeError("cross_entropy expects a non-empty 1-D logit vector")
    if not 0 <= int(label) < x.size:
        raise ShapeError(f"label {label} out of range for {x.size} classes")
    loss = -log_softmax(x)[label]
    grad = softmax(x)
    grad[label] -= 1.0
    return float(loss), grad


def batch_cross_entropy(logits, labels):
    """Mean CE over rows. Returns (loss, grad) with grad already divided by N."""
    x = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = x.shape
    if n == 0:
        raise ShapeError("empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeError(f"labels out of range for {c} classes")
    rows = np.arange(n)
    loss = -log_softmax(x)[rows, labels].mean()
    grad = softmax(x)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cosine of mismatched shapes {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def l2_normalize(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(n == 0.0):
        raise ZeroNormError("cannot normalize a zero vector")
    return v / n


def l2_normalize_backward(x: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    """Gradient through row-wise x / ||x|| given d loss / d unit."""
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    u = x / norm
    return (grad_unit - u * np.sum(u * grad_unit, axis=-1, keepdims=True)) / norm


def pairwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine matrix of rows of a against rows of b.

    Built from an explicit broadcast product summed over the last axis so that
    pairwise_cosine(b, a) is bitwise the transpose of pairwise_cosine(a, b).
    """
    ua = l2_normalize(a)
    ub = l2_normalize(b)
    prod = ua[:, None, :] * ub[None, :, :]
    return np.clip(prod.sum(axis=-1), -1.0, 1.0)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState, lr: float) -> Dict[str, np.ndarray]:
    """One bias-corrected Adam update. Returns new arrays; only `state` is mutated."""
    if lr < 0:
        raise ValueError("lr must be non-negative")
    if set(params) != set(grads):
        raise ShapeError(f"param/grad keys differ: {sorted(params)} vs {sorted(grads)}")
    for name in params:
        if np.shape(params[name]) != np.shape(grads[name]):
            raise ShapeError(f"shape mismatch for {name!r}")
        if name in state.first_moment and state.first_moment[name].shape != np.shape(params[name]):
            raise ShapeError(f"optimizer state shape mismatch for {name!r}")

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = {}
    for name in sorted(params):
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        out[name] = np.asarray(params[name], dtype=np.float64) - update
    return out


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f at x (any shape)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise VoxEvalError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.ravel(np.asarray(analytic, dtype=np.float64))
    n = np.ravel(np.asarray(numeric, dtype=np.float64))
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / denom)
