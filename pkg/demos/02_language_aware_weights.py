"""Do students lean on the teacher of their own language?

Generates the desk dataset (three languages sharing class geometry under
different rotations and shifts), trains one teacher per language and a
multilingual student with the multi-teacher loss, then tabulates the mean
weight each teacher receives on each language's samples during the final
epoch.  Takes roughly ten seconds.
"""
# %%
import numpy as np

from mtkd.config import ExperimentConfig
from mtkd.experiment import build_dataset, run_experiment

cfg = ExperimentConfig(seed=0, paradigms=("ft-mono", "mtkd-multi"), n_resamples=200)
dataset = build_dataset(cfg)
print(f"{len(dataset)} samples, languages {dataset.manifest.languages}, D={dataset.manifest.dim}")

# %%
run = run_experiment(cfg, dataset)
weights = run.weight_summaries["mtkd-multi/split0"]
langs = list(weights)
print("rows: sample language, columns: teacher")
print("      " + "  ".join(f"{t:>6}" for t in langs))
for lang in langs:
    print(f"{lang:>6}" + "  ".join(f"{weights[lang][t]:6.3f}" for t in langs))

# %% [markdown]
# The diagonal dominates: the cosine between student and teacher logits is
# highest for the teacher trained on the sample's language, and tau = 0.1
# turns that small margin into a large weight.

# %%
for r in run.reports:
    lo, hi = r.ci["UR"]
    print(f"{r.paradigm:<11} {r.language}: UR {r.UR:5.1f}  [{lo:5.1f}, {hi:5.1f}]")
print("identity checks:", all(run.reduction_checks.values()))
