"""Confusion matrices, UR/WR/UA/WA, percentile-bootstrap CIs and report tables.

Definitions (all in percent):

* UR: unweighted mean of per-class recall.
* WR: support-weighted mean of per-class recall, i.e. overall accuracy.
* UA: unweighted mean of per-class one-vs-rest accuracy ``(TP + TN) / N``.
* WA: support-weighted mean of the same one-vs-rest accuracies.

Classes without true samples are left out of the unweighted means.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument
from .rng import SplitMix64

METRICS = ("UR", "WR", "UA", "WA")
CSV_COLUMNS = ("split", "paradigm", "language", "UR", "UR_lo", "UR_hi", "WR", "WR_lo", "WR_hi", "UA", "WA")
MAX_REDRAWS = 10


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class
    class_names: tuple[str, ...] | None = None

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json(self) -> dict:
        names = self.class_names or tuple(str(i) for i in range(self.n_classes))
        return {"class_names": list(names), "counts": self.counts.tolist()}


@dataclass
class MetricReport:
    per_class_recall: np.ndarray
    UR: float
    WR: float
    UA: float
    WA: float
    n_samples: int
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)
    language: str = ""
    split: int | str = ""
    paradigm: str = ""
    widened: list[str] = field(default_factory=list)

    def value(self, metric: str) -> float:
        return float(getattr(self, metric))

    def to_json(self) -> dict:
        return {"paradigm": self.paradigm, "language": self.language, "split": self.split,
                "n_samples": self.n_samples, "per_class_recall": [float(r) for r in self.per_class_recall],
                **{m: self.value(m) for m in METRICS},
                "ci": {m: list(b) for m, b in self.ci.items()}, "widened": list(self.widened)}


def report_from_json(obj: dict) -> MetricReport:
    """Inverse of :meth:`MetricReport.to_json`."""
    return MetricReport(np.asarray(obj["per_class_recall"], dtype=np.float64), *(float(obj[m]) for m in METRICS),
                        int(obj["n_samples"]), {m: (float(b[0]), float(b[1])) for m, b in obj.get("ci", {}).items()},
                        obj.get("language", ""), obj.get("split", ""), obj.get("paradigm", ""),
                        list(obj.get("widened", [])))


def confusion(preds, labels, n_classes: int, class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise InvalidArgument("preds and labels must be 1-D and the same length")
    if len(preds) == 0:
        raise InvalidArgument("cannot build a confusion matrix from no samples")
    if n_classes < 1:
        raise InvalidArgument("need at least one class")
    for name, arr in (("preds", preds), ("labels", labels)):
        if np.any(arr < 0) or np.any(arr >= n_classes):
            raise InvalidArgument(f"{name} contain a class outside [0, {n_classes})")
    counts = np.bincount(labels.astype(np.int64) * n_classes + preds.astype(np.int64),
                         minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts, tuple(class_names) if class_names is not None else None)


def metrics_from_counts(counts: np.ndarray) -> dict[str, np.ndarray]:
    """UR/WR/UA/WA for a stack of confusion matrices ``(..., K, K)``.

    Returns ``nan`` where a matrix is empty.
    """
    counts = np.asarray(counts, dtype=np.float64)
    support = counts.sum(axis=-1)
    n = support.sum(axis=-1)
    tp = np.diagonal(counts, axis1=-2, axis2=-1)
    predicted = counts.sum(axis=-2)
    present = support > 0
    n_present = present.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(present, tp / np.where(present, support, 1.0), 0.0)
        n_safe = np.where(n > 0, n, np.nan)
        k_safe = np.where(n_present > 0, n_present, np.nan)
        correct_ovr = n[..., None] - support - predicted + 2.0 * tp   # TP + TN per class
        ur = 100.0 * np.sum(recall, axis=-1) / k_safe
        wr = 100.0 * np.sum(tp, axis=-1) / n_safe
        ua = 100.0 * np.sum(np.where(present, correct_ovr, 0.0), axis=-1) / (n_safe * k_safe)
        wa = 100.0 * np.sum(support * correct_ovr, axis=-1) / (n_safe * n_safe)
    return {"recall": 100.0 * recall, "UR": ur, "WR": wr, "UA": ua, "WA": wa}


def compute_metrics(cm: ConfusionMatrix | np.ndarray) -> MetricReport:
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise InvalidArgument("confusion matrix must be square")
    if np.any(counts < 0):
        raise InvalidArgument("confusion counts must be non-negative")
    if counts.sum() == 0:
        raise InvalidArgument("confusion matrix is all zeros")
    missing = np.flatnonzero(counts.sum(axis=1) == 0)
    if missing.size:
        warnings.warn(f"classes {missing.tolist()} have no true samples; left out of UR/UA", stacklevel=2)
    m = metrics_from_counts(counts)
    return MetricReport(per_class_recall=m["recall"], UR=float(m["UR"]), WR=float(m["WR"]), UA=float(m["UA"]),
                        WA=float(m["WA"]), n_samples=int(counts.sum()))


def nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    """Nearest-rank percentile: the ``ceil(p/100 * n)``-th smallest value."""
    n = len(sorted_values)
    rank = max(1, math.ceil(percentile / 100.0 * n - 1e-9))
    return float(sorted_values[min(rank, n) - 1])


@dataclass
class BootstrapResult:
    values: dict[str, np.ndarray]
    redraws: int = 0
    dropped_classes: int = 0


def bootstrap_distribution(preds, labels, n_classes: int, n_resamples: int = 1000, seed: int = 0,
                           metrics: Sequence[str] = METRICS) -> BootstrapResult:
    """Metric values over ``n_resamples`` paired resamples of (pred, label).

    A resample that misses a class present in the original labels is redrawn
    (up to 10 times) for the unweighted metrics; after that the class is
    dropped from that resample and counted in ``dropped_classes``.  All
    requested metrics share the same resamples.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_resamples < 100:
        raise InvalidArgument("n_resamples must be at least 100")
    confusion(preds, labels, n_classes)  # validates inputs
    n = len(labels)
    k = n_classes
    gen = SplitMix64(seed)
    idx = gen.integers(n, n_resamples * n).reshape(n_resamples, n)
    codes = labels * k + preds

    def tally(rows: np.ndarray) -> np.ndarray:
        c = codes[rows]
        offsets = np.arange(c.shape[0])[:, None] * (k * k)
        return np.bincount((c + offsets).ravel(), minlength=c.shape[0] * k * k).reshape(-1, k, k)

    counts = tally(idx)
    need_unweighted = any(m in ("UR", "UA") for m in metrics)
    original = np.bincount(labels, minlength=k) > 0
    redraws = dropped = 0
    if need_unweighted:
        for r in range(n_resamples):
            attempts = 0
            while np.any(original & (counts[r].sum(axis=1) == 0)) and attempts < MAX_REDRAWS:
                counts[r] = tally(gen.integers(n, n)[None, :])[0]
                attempts += 1
                redraws += 1
            dropped += int(np.sum(original & (counts[r].sum(axis=1) == 0)))
    values = metrics_from_counts(counts)
    return BootstrapResult({m: values[m] for m in metrics}, redraws, dropped)


def bootstrap_ci(preds, labels, metric: str, n_resamples: int = 1000, seed: int = 0, n_classes: int | None = None,
                 confidence: float = 0.95) -> tuple[float, float]:
    """Percentile-bootstrap interval (nearest rank) for one metric."""
    if metric not in METRICS:
        raise InvalidArgument(f"unknown metric {metric!r}")
    if not 0 < confidence < 1:
        raise InvalidArgument("confidence must lie in (0, 1)")
    if n_classes is None:
        n_classes = int(max(np.max(preds), np.max(labels))) + 1
    res = bootstrap_distribution(preds, labels, n_classes, n_resamples, seed)
    return interval(res.values[metric], confidence)


def interval(values: np.ndarray, confidence: float = 0.95) -> tuple[float, float]:
    vals = np.sort(values[np.isfinite(values)])
    alpha = 100.0 * (1.0 - confidence) / 2.0
    return nearest_rank(vals, alpha), nearest_rank(vals, 100.0 - alpha)


def evaluate(preds, labels, n_classes: int, n_resamples: int = 1000, seed: int = 0, confidence: float = 0.95,
             class_names: Sequence[str] | None = None, **ids) -> tuple[MetricReport, ConfusionMatrix]:
    """Point metrics plus bootstrap CIs for every metric.

    A percentile interval can miss its own point estimate on tiny samples;
    such an interval is widened to include the point and the metric name is
    listed in ``report.widened``.
    """
    cm = confusion(preds, labels, n_classes, class_names)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = compute_metrics(cm)
    boot = bootstrap_distribution(preds, labels, n_classes, n_resamples, seed)
    for m in METRICS:
        lo, hi = interval(boot.values[m], confidence)
        point = report.value(m)
        if not lo <= point <= hi:
            report.widened.append(m)
            lo, hi = min(lo, point), max(hi, point)
        report.ci[m] = (lo, hi)
    for key, val in ids.items():
        setattr(report, key, val)
    return report, cm


# -- tables ------------------------------------------------------------------

def _row(report: MetricReport, split) -> dict:
    return {"split": split, "paradigm": report.paradigm, "language": report.language,
            "UR": report.UR, "UR_lo": report.ci.get("UR", (math.nan,) * 2)[0],
            "UR_hi": report.ci.get("UR", (math.nan,) * 2)[1], "WR": report.WR,
            "WR_lo": report.ci.get("WR", (math.nan,) * 2)[0], "WR_hi": report.ci.get("WR", (math.nan,) * 2)[1],
            "UA": report.UA, "WA": report.WA}


def report_rows(reports: Sequence[MetricReport]) -> list[dict]:
    """Split rows followed by one ``mean`` row per (paradigm, language)."""
    if not reports:
        raise InvalidArgument("need at least one report")
    groups: dict[tuple[str, str], list[MetricReport]] = {}
    for r in reports:
        groups.setdefault((r.paradigm, r.language), []).append(r)
    rows = []
    for (paradigm, language), group in groups.items():
        split_rows = [_row(r, r.split) for r in group]
        rows.extend(split_rows)
        mean = {"split": "mean", "paradigm": paradigm, "language": language}
        for col in CSV_COLUMNS[3:]:
            mean[col] = float(np.mean([row[col] for row in split_rows]))
        rows.append(mean)
    return rows


def render_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([row[c] if c in ("split", "paradigm", "language") else f"{row[c]:.6f}"
                         for c in CSV_COLUMNS])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {c: rec[c] for c in ("split", "paradigm", "language")}
        row.update({c: float(rec[c]) for c in CSV_COLUMNS[3:]})
        rows.append(row)
    return rows


def render_text(rows: Sequence[dict]) -> str:
    """Aligned table per language: one line per split, CI shown as [lo, hi]."""
    out = []
    languages = list(dict.fromkeys(r["language"] for r in rows))
    for language in languages:
        sub = [r for r in rows if r["language"] == language]
        paradigms = list(dict.fromkeys(r["paradigm"] for r in sub))
        splits = list(dict.fromkeys(str(r["split"]) for r in sub if r["split"] != "mean")) + ["mean"]
        header = ["split"] + [f"{p} {m}" for p in paradigms for m in ("UR", "WR")]
        lines = []
        for split in splits:
            cells = [split]
            for p in paradigms:
                match = [r for r in sub if r["paradigm"] == p and str(r["split"]) == split]
                if not match:
                    cells.extend(["-", "-"])
                    continue
                r = match[0]
                for m in ("UR", "WR"):
                    cells.append(f"{r[m]:.1f} [{r[m + '_lo']:.1f}, {r[m + '_hi']:.1f}]")
            lines.append(cells)
        widths = [max(len(row[i]) for row in [header] + lines) for i in range(len(header))]
        fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
        out.append(f"language: {language}")
        out.append(fmt(header))
        out.append("-" * len(fmt(header)))
        out.extend(fmt(cells) for cells in lines)
        out.append("")
    return "\n".join(out)


def render_report(reports: Sequence[MetricReport]) -> tuple[str, str]:
    """``(csv_text, text_table)`` for a set of per-split reports."""
    rows = report_rows(reports)
    return render_csv(rows), render_text(rows)


def confusion_json(matrices: dict[str, ConfusionMatrix]) -> str:
    return json.dumps({key: cm.to_json() for key, cm in matrices.items()}, indent=2, sort_keys=True) + "\n"
