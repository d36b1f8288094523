"""FT, KD and language-aware multi-teacher KD losses.

For one input with student logits ``s``, teacher logits ``t_1..t_M`` and
label ``y``::

    cs_i   = cos(s, t_i)
    w      = softmax(cs / tau)                       # sharpened teacher weights
    P_x    = softmax(x / T)                          # smoothed distributions
    KL_i   = KL(P_s || P_{t_i})                      # or KL(P_{t_i} || P_s)
    KL     = sum_i w_i KL_i
    CE     = -log softmax(s)[y]                      # temperature 1
    loss   = (1 - lam) CE + lam * KL

The weights and teacher logits are constants for differentiation: the
returned gradient is taken w.r.t. ``s`` only, through CE and the ``P_s``
inside each ``KL_i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics
from .data import Dataset, LabeledSample
from .errors import InvalidArgument
from .model import Classifier, Gradients, backward, forward, forward_with_cache

PARADIGMS = ("ft", "kd", "mtkd")


@dataclass(frozen=True)
class DistillConfig:
    lam: float = 0.25
    temperature: float = 5.0
    tau: float = 0.1
    kl_direction: str = "student_to_teacher"
    t_squared_rescale: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidArgument(f"lambda must lie in [0, 1], got {self.lam}")
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise InvalidArgument("smoothing temperature must be positive")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise InvalidArgument("sharpening tau must be positive")
        if self.kl_direction not in numerics.KL_DIRECTIONS:
            raise InvalidArgument(f"kl_direction must be one of {numerics.KL_DIRECTIONS}")

    @property
    def kl_scale(self) -> float:
        return self.temperature ** 2 if self.t_squared_rescale else 1.0


@dataclass
class MtkdDiagnostics:
    cosine_sims: np.ndarray
    teacher_weights: np.ndarray
    per_teacher_kl: np.ndarray
    ce_loss: float
    kl_loss: float
    total_loss: float
    selected_teacher: int
    degenerate_cosine: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    kl_scale: float = 1.0


@dataclass
class BatchDiagnostics:
    """Per-sample diagnostics for a batch, one row per sample."""
    cosine_sims: np.ndarray        # (N, M)
    teacher_weights: np.ndarray    # (N, M)
    per_teacher_kl: np.ndarray     # (N, M)
    ce_loss: np.ndarray            # (N,)
    kl_loss: np.ndarray            # (N,)
    total_loss: np.ndarray         # (N,)
    degenerate_cosine: np.ndarray  # (N, M)
    kl_scale: float = 1.0

    @property
    def selected_teacher(self) -> np.ndarray:
        if self.teacher_weights.shape[1] == 0:
            return np.full(len(self.ce_loss), -1)
        return np.argmax(self.teacher_weights, axis=1)

    def __len__(self) -> int:
        return len(self.ce_loss)

    def row(self, i: int) -> MtkdDiagnostics:
        sel = int(self.selected_teacher[i])
        return MtkdDiagnostics(self.cosine_sims[i].copy(), self.teacher_weights[i].copy(),
                               self.per_teacher_kl[i].copy(), float(self.ce_loss[i]), float(self.kl_loss[i]),
                               float(self.total_loss[i]), sel, self.degenerate_cosine[i].copy(), self.kl_scale)

    @classmethod
    def concat(cls, parts: Sequence["BatchDiagnostics"]) -> "BatchDiagnostics":
        return cls(*(np.concatenate([getattr(p, name) for p in parts])
                     for name in ("cosine_sims", "teacher_weights", "per_teacher_kl", "ce_loss", "kl_loss",
                                  "total_loss", "degenerate_cosine")),
                   kl_scale=parts[0].kl_scale if parts else 1.0)

    def to_records(self, step: int, sample_ids: Sequence[int], languages: Sequence[str]) -> list[dict]:
        return [{"step": int(step), "sample_id": int(sid), "language": str(lang),
                 "cs": self.cosine_sims[i].tolist(), "weights": self.teacher_weights[i].tolist(),
                 "per_teacher_kl": self.per_teacher_kl[i].tolist(), "ce": float(self.ce_loss[i]),
                 "kl": float(self.kl_loss[i]), "total": float(self.total_loss[i])}
                for i, (sid, lang) in enumerate(zip(sample_ids, languages))]


def write_diagnostics_jsonl(records: Sequence[dict], fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec) + "\n")


def mtkd_loss_batch(student_logits, teacher_logits, labels, cfg: DistillConfig):
    """Vectorised multi-teacher loss.

    ``student_logits`` is ``(N, K)``, ``teacher_logits`` ``(M, N, K)`` and
    ``labels`` ``(N,)``.  Returns per-sample losses ``(N,)``, gradients
    w.r.t. the student logits ``(N, K)`` and :class:`BatchDiagnostics`.
    """
    s = numerics.as_logits(student_logits, "student logits")
    if s.ndim != 2:
        raise InvalidArgument("student logits must be (N, K)")
    t = np.asarray(teacher_logits, dtype=np.float64)
    if t.ndim != 3 or t.shape[0] < 1:
        raise InvalidArgument("need at least one teacher")
    if t.shape[1:] != s.shape:
        raise InvalidArgument(f"teacher logits {t.shape[1:]} do not match student {s.shape}")
    numerics.as_logits(t, "teacher logits")

    ce = numerics.cross_entropy(s, labels)
    ce_grad = numerics.cross_entropy_grad(s, labels)

    cs, degenerate = numerics.cosine_similarity_checked(s[None, :, :], t)   # (M, N)
    cs, degenerate = cs.T, degenerate.T
    weights = numerics.sharpen_weights(cs, cfg.tau)                          # (N, M)

    log_ps = numerics.log_softmax_with_temperature(s, cfg.temperature)
    log_pt = numerics.log_softmax_with_temperature(t, cfg.temperature)
    kl_i, kl_grad_i = numerics.kl_student_grad(log_ps[None], log_pt, cfg.temperature, cfg.kl_direction)
    per_teacher_kl = kl_i.T                                                   # (N, M)
    kl = np.sum(weights * per_teacher_kl, axis=1)
    kl_grad = np.einsum("nm,mnk->nk", weights, kl_grad_i)

    scale = cfg.kl_scale
    total = (1.0 - cfg.lam) * ce + cfg.lam * (scale * kl)
    grad = (1.0 - cfg.lam) * ce_grad + cfg.lam * (scale * kl_grad)
    diag = BatchDiagnostics(cs, weights, per_teacher_kl, ce, kl, total, degenerate, scale)
    return total, grad, diag


def ft_loss_batch(student_logits, labels):
    s = numerics.as_logits(student_logits, "student logits")
    ce = numerics.cross_entropy(s, labels)
    n = s.shape[0]
    empty = np.zeros((n, 0))
    diag = BatchDiagnostics(empty, empty, empty, ce, np.zeros(n), ce, np.zeros((n, 0), dtype=bool))
    return ce, numerics.cross_entropy_grad(s, labels), diag


def mtkd_loss(student_logits, teacher_logits: Sequence, label: int, cfg: DistillConfig):
    """Per-sample language-aware multi-teacher loss -> ``(loss, grad, diagnostics)``."""
    s = numerics.as_logits(student_logits, "student logits")
    if s.ndim != 1:
        raise InvalidArgument("student logits must be a single vector")
    if len(teacher_logits) == 0:
        raise InvalidArgument("empty teacher set")
    t = np.stack([numerics.as_logits(x, "teacher logits") for x in teacher_logits])
    if t.shape[1:] != s.shape:
        raise InvalidArgument("teacher and student logit lengths differ")
    total, grad, diag = mtkd_loss_batch(s[None], t[:, None, :], np.array([label]), cfg)
    return float(total[0]), grad[0], diag.row(0)


def kd_loss(student_logits, teacher_logits, label: int, cfg: DistillConfig):
    """Single-teacher distillation; the weight vector collapses to ``[1]``."""
    return mtkd_loss(student_logits, [teacher_logits], label, cfg)


def ft_loss(student_logits, label: int):
    """Cross-entropy only -> ``(loss, grad)``."""
    return numerics.cross_entropy(student_logits, label), numerics.cross_entropy_grad(student_logits, label)


def _as_dataset(batch, n_inputs: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, Dataset):
        return batch.features, batch.labels
    batch = list(batch)
    if not batch:
        raise InvalidArgument("empty batch")
    if not all(isinstance(s, LabeledSample) for s in batch):
        raise InvalidArgument("batch must hold LabeledSample values")
    return np.stack([np.asarray(s.features, dtype=np.float64) for s in batch]), np.array([s.label for s in batch])


def batch_loss(paradigm: str, student: Classifier, teachers: Sequence[Classifier], batch, cfg: DistillConfig,
               teacher_logits: np.ndarray | None = None):
    """Mean loss and mean parameter gradient over a batch.

    Teacher weights are computed per sample.  ``teacher_logits`` (``(M, N,
    K)``) may be supplied to skip the frozen teachers' forward passes.
    Gradient rows are reduced in sample order.
    """
    if paradigm not in PARADIGMS:
        raise InvalidArgument(f"unknown paradigm {paradigm!r}")
    x, y = _as_dataset(batch, student.n_inputs)
    n = len(y)
    if n == 0:
        raise InvalidArgument("empty batch")
    expected = {"ft": 0, "kd": 1}.get(paradigm)
    n_teachers = len(teachers) if teacher_logits is None else len(teacher_logits)
    if expected is not None and n_teachers != expected:
        raise InvalidArgument(f"paradigm {paradigm} takes {expected} teacher(s), got {n_teachers}")
    if paradigm == "mtkd" and n_teachers < 1:
        raise InvalidArgument("mtkd needs at least one teacher")

    logits, cache = forward_with_cache(student, x)
    if paradigm == "ft":
        losses, grads, diag = ft_loss_batch(logits, y)
    else:
        if teacher_logits is None:
            teacher_logits = np.stack([forward(t, x) for t in teachers])
        if teacher_logits.shape[-1] != student.n_classes:
            raise InvalidArgument("teacher and student class counts differ")
        losses, grads, diag = mtkd_loss_batch(logits, teacher_logits, y, cfg)
    param_grads = backward(student, x, grads / n, cache)
    return float(np.mean(losses)), param_grads, diag


def teacher_logits_for(teachers: Sequence[Classifier], features: np.ndarray) -> np.ndarray:
    """Stacked logits ``(M, N, K)`` of frozen teachers."""
    return np.stack([forward(t, features) for t in teachers]) if teachers else np.zeros((0, len(features), 0))


__all__ = ["DistillConfig", "MtkdDiagnostics", "BatchDiagnostics", "mtkd_loss", "mtkd_loss_batch", "kd_loss",
           "ft_loss", "ft_loss_batch", "batch_loss", "teacher_logits_for", "write_diagnostics_jsonl", "PARADIGMS",
           "Gradients"]
