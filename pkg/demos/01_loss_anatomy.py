"""Anatomy of the multi-teacher loss on a single sample.

Walks through the quantities the loss is built from: cosine similarity
between student and teacher logits, sharpened teacher weights, smoothed
distributions and the weighted KL term.  Run with ``python3 demos/01_loss_anatomy.py``.
"""
# %%
import numpy as np

from mtkd import DistillConfig, mtkd_loss, sharpen_weights, softmax_with_temperature
from mtkd.numerics import cosine_similarity

np.set_printoptions(precision=4, suppress=True)

# %% [markdown]
# A 4-class student and three teachers.  The first teacher agrees with the
# student about which classes are likely; the other two disagree.

# %%
student = np.array([2.0, 0.5, -1.0, -1.5])
teachers = [np.array([3.0, 1.0, -2.0, -2.0]),
            np.array([-1.0, 2.5, 0.0, -1.0]),
            np.array([0.0, -1.0, 2.0, 1.0])]
label = 0

sims = np.array([cosine_similarity(student, t) for t in teachers])
print("cosine similarities:", sims)

# %% [markdown]
# Sharpening divides the similarities by tau before the softmax.  A small
# tau concentrates nearly all weight on the most similar teacher.

# %%
for tau in (1.0, 0.3, 0.1):
    print(f"tau={tau:<4} weights:", sharpen_weights(sims, tau))

# %% [markdown]
# Smoothing divides logits by T before the softmax, exposing the relative
# scores of the non-argmax classes that KL then compares.

# %%
for temp in (1.0, 5.0):
    print(f"T={temp}: student", softmax_with_temperature(student, temp),
          " teacher 0", softmax_with_temperature(teachers[0], temp))

# %%
loss, grad, diag = mtkd_loss(student, teachers, label, DistillConfig())
print("per-teacher KL:", diag.per_teacher_kl)
print(f"CE {diag.ce_loss:.4f}  weighted KL {diag.kl_loss:.4f}  total {loss:.4f}")
print("selected teacher:", diag.selected_teacher)
print("gradient w.r.t. student logits:", grad)

# %% [markdown]
# With lambda = 0 the distillation term vanishes and the loss is plain
# cross-entropy; with one teacher the weight is 1 and the loss is ordinary
# single-teacher distillation.

# %%
print("lambda=0:", mtkd_loss(student, teachers, label, DistillConfig(lam=0.0))[0])
print("one teacher weights:", mtkd_loss(student, teachers[:1], label, DistillConfig())[2].teacher_weights)
