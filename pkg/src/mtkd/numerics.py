"""Scalar/vector kernels for the distillation losses.

Every kernel works on the last axis, so a single logit vector of shape
``(K,)`` and a batch of shape ``(N, K)`` go through the same code.  All
arithmetic is float64.  Probabilities are floored at ``PROB_FLOOR`` before
any logarithm is taken; KL and CE are reported in nats.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import InvalidArgument

PROB_FLOOR = 1e-300
LOG_FLOOR = math.log(PROB_FLOOR)

KL_DIRECTIONS = ("student_to_teacher", "teacher_to_student")


def as_logits(values, name: str = "logits") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise InvalidArgument(f"{name} needs at least 2 classes, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def _check_temperature(temperature: float, name: str = "temperature") -> float:
    temperature = float(temperature)
    if not (temperature > 0.0) or not math.isfinite(temperature):
        raise InvalidArgument(f"{name} must be a positive finite number, got {temperature}")
    return temperature


def log_softmax_with_temperature(logits, temperature: float = 1.0) -> np.ndarray:
    """``log softmax(logits / T)`` via log-sum-exp, floored at ``log(PROB_FLOOR)``."""
    z = as_logits(logits) / _check_temperature(temperature)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return np.maximum(z - lse, LOG_FLOOR)


def softmax_with_temperature(logits, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax with max-subtraction.

    >>> softmax_with_temperature([1.0, 1.0, 1.0, 1.0], 5.0)
    array([0.25, 0.25, 0.25, 0.25])
    """
    z = as_logits(logits) / _check_temperature(temperature)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return np.maximum(e / e.sum(axis=-1, keepdims=True), PROB_FLOOR)


def cosine_similarity_checked(a, b) -> tuple[np.ndarray | float, np.ndarray | bool]:
    """Cosine similarity along the last axis plus a zero-norm flag.

    Where either vector has zero norm the similarity is undefined; 0.0 is
    returned there and the flag is set.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise InvalidArgument(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    na = np.sqrt(np.sum(a * a, axis=-1))
    nb = np.sqrt(np.sum(b * b, axis=-1))
    degenerate = (na == 0.0) | (nb == 0.0)
    denom = np.where(degenerate, 1.0, na * nb)
    cs = np.where(degenerate, 0.0, np.sum(a * b, axis=-1) / denom)
    cs = np.clip(cs, -1.0, 1.0)
    if cs.ndim == 0:
        return float(cs), bool(degenerate)
    return cs, degenerate


def cosine_similarity(a, b):
    """``sum(a*b) / (|a| |b|)``; 0.0 for a zero-norm input."""
    return cosine_similarity_checked(a, b)[0]


def sharpen_weights(similarities, tau: float) -> np.ndarray:
    """Softmax of ``similarities / tau`` over the last (teacher) axis."""
    sims = np.asarray(similarities, dtype=np.float64)
    if sims.ndim == 0 or sims.shape[-1] < 1:
        raise InvalidArgument("need at least one similarity score")
    if not np.all(np.isfinite(sims)):
        raise InvalidArgument("similarities must be finite")
    z = sims / _check_temperature(tau, "tau")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return np.maximum(e / e.sum(axis=-1, keepdims=True), PROB_FLOOR)


def kl_divergence(p, q):
    """``sum_j p[j] ln(p[j] / q[j])`` in nats; entries with ``p[j] == 0`` add 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidArgument(f"shape mismatch: {p.shape} vs {q.shape}")
    logq = np.log(np.maximum(q, PROB_FLOOR))
    with np.errstate(divide="ignore"):
        logp = np.log(np.where(p > 0, np.maximum(p, PROB_FLOOR), 1.0))
    terms = np.where(p > 0, p * (logp - logq), 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def kl_from_log_probs(log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """KL(p||q) when both distributions are given as (floored) log-probabilities."""
    return np.sum(np.exp(log_p) * (log_p - log_q), axis=-1)


def kl_student_grad(log_student: np.ndarray, log_teacher: np.ndarray, temperature: float,
                    direction: str = "student_to_teacher") -> tuple[np.ndarray, np.ndarray]:
    """KL value and its gradient w.r.t. the *student logits* (teacher held fixed).

    ``log_student`` / ``log_teacher`` are temperature-``T`` log-probabilities.
    """
    p_s = np.exp(log_student)
    if direction == "student_to_teacher":
        diff = log_student - log_teacher
        kl = np.sum(p_s * diff, axis=-1)
        grad = p_s * (diff - kl[..., None]) / temperature
    elif direction == "teacher_to_student":
        p_t = np.exp(log_teacher)
        kl = np.sum(p_t * (log_teacher - log_student), axis=-1)
        grad = (p_s - p_t) / temperature
    else:
        raise InvalidArgument(f"unknown KL direction {direction!r}; expected one of {KL_DIRECTIONS}")
    return kl, grad


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        if np.any(labels != np.floor(labels)):
            raise InvalidArgument("labels must be integers")
        labels = labels.astype(np.int64)
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise InvalidArgument(f"label out of range [0, {n_classes})")
    return labels


def cross_entropy(logits, label):
    """``-ln softmax(logits)[label]`` at temperature 1."""
    z = as_logits(logits)
    label = _check_labels(label, z.shape[-1])
    logp = log_softmax_with_temperature(z, 1.0)
    out = -np.take_along_axis(logp, label[..., None], axis=-1)[..., 0]
    return float(out) if out.ndim == 0 else out


def cross_entropy_grad(logits, label) -> np.ndarray:
    """``softmax(logits) - onehot(label)``."""
    z = as_logits(logits)
    label = _check_labels(label, z.shape[-1])
    grad = softmax_with_temperature(z, 1.0)
    onehot = np.zeros_like(grad)
    np.put_along_axis(onehot, label[..., None], 1.0, axis=-1)
    return grad - onehot


# central-difference stencils: (offsets in units of step, weights, divisor in units of step)
FD_STENCILS = {
    2: ((1.0, -1.0), (1.0, -1.0), 2.0),
    4: ((2.0, 1.0, -1.0, -2.0), (-1.0, 8.0, -8.0, 1.0), 12.0),
}


def finite_difference_check(f: Callable[[np.ndarray], float], grad_f: Callable[[np.ndarray], np.ndarray],
                            point, step: float = 1e-3, order: int = 2) -> float:
    """Max componentwise relative error between ``grad_f`` and central differences.

    ``order=2`` is the two-point stencil, ``order=4`` the four-point one.
    The step trades truncation (``O(step**order)``) against round-off
    (``O(eps / step)``); for O(1) losses a step near 1e-3 keeps the
    two-point error below 1e-6 relative on components as small as 1e-5,
    and the four-point stencil reaches components near 1e-8.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``.  Returns ``nan``
    if any evaluation is non-finite, so a failed evaluation never looks like
    a passing check.
    """
    if not step > 0:
        raise InvalidArgument("step must be positive")
    if order not in FD_STENCILS:
        raise InvalidArgument(f"order must be one of {sorted(FD_STENCILS)}")
    offsets, coeffs, divisor = FD_STENCILS[order]
    x = np.array(point, dtype=np.float64)
    analytic = np.asarray(grad_f(x.copy()), dtype=np.float64).reshape(-1)
    flat = x.reshape(-1)
    if analytic.size != flat.size:
        raise InvalidArgument("gradient shape does not match the point")
    numeric = np.empty_like(analytic)
    for j in range(flat.size):
        orig = flat[j]
        acc = 0.0
        for off, c in zip(offsets, coeffs):
            flat[j] = orig + off * step
            acc += c * float(f(x.copy()))
        flat[j] = orig
        numeric[j] = acc / (divisor * step)
    if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
        return math.nan
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
