"""Synthetic multilingual emotion embeddings, JSONL I/O, splits and batching.

A sample of language ``l`` and class ``c`` is ``R_l (mu_c + sigma z) + s_l``
with ``R_l`` a per-language orthogonal matrix and ``s_l`` a per-language
shift, so every language carries the same class geometry in a different
coordinate frame.

Split convention: a language with ``n >= 2`` splits stores fold ids
``0..n-1`` in the ``split`` field and split ``k`` tests on fold ``k`` while
training on the rest.  A language with a single split stores its fixed
partition in the same field (``0`` = train pool, ``1`` = test) and uses it
whatever split id is requested.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DataError, InvalidArgument, ParseError
from .rng import SplitMix64, derive_seed

CLASS_NAMES = ("angry", "happy", "neutral", "sad")
LANGUAGES = ("en", "fi", "fr")
MANIFEST_VERSION = 1

# Train/test sample counts reported per language (4 emotion classes).
CORPUS_COUNTS = {
    "en": {"splits": 5, "train": 4508, "test": 1241},
    "fi": {"splits": 9, "train": 2798, "test": 461},
    "fr": {"splits": 1, "train": 420, "test": 84},
}


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: int
    language: str
    split: int
    id: int = -1


@dataclass
class DatasetManifest:
    n_classes: int
    dim: int
    class_names: list[str]
    languages: list[str]
    splits_per_language: dict[str, int]
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    seed: int | None = None
    format_version: int = MANIFEST_VERSION

    def to_json(self) -> dict:
        return {"format_version": self.format_version, "K": self.n_classes, "D": self.dim,
                "class_names": list(self.class_names), "languages": list(self.languages),
                "splits_per_language": dict(self.splits_per_language),
                "counts": {lang: dict(c) for lang, c in self.counts.items()}, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        try:
            version = int(obj.get("format_version", MANIFEST_VERSION))
            if version != MANIFEST_VERSION:
                raise DataError(f"unsupported manifest version {version}")
            return cls(n_classes=int(obj["K"]), dim=int(obj["D"]), class_names=list(obj["class_names"]),
                       languages=list(obj["languages"]),
                       splits_per_language={k: int(v) for k, v in obj["splits_per_language"].items()},
                       counts={k: {s: int(n) for s, n in v.items()} for k, v in obj.get("counts", {}).items()},
                       seed=obj.get("seed"), format_version=version)
        except KeyError as exc:
            raise DataError(f"manifest missing field {exc}") from None


class Dataset:
    """Column-oriented collection of :class:`LabeledSample` rows."""

    def __init__(self, features, labels, languages, splits, manifest: DatasetManifest, ids=None):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.languages = np.asarray(languages, dtype=object)
        self.splits = np.asarray(splits, dtype=np.int64)
        self.ids = np.arange(len(self.labels)) if ids is None else np.asarray(ids, dtype=np.int64)
        self.manifest = manifest
        n = len(self.labels)
        if not (self.features.shape[0] == len(self.languages) == len(self.splits) == len(self.ids) == n):
            raise InvalidArgument("dataset columns have different lengths")
        if n and self.features.shape[1] != manifest.dim:
            raise InvalidArgument("feature width differs from the manifest")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return LabeledSample(self.features[index], int(self.labels[index]), str(self.languages[index]),
                                 int(self.splits[index]), int(self.ids[index]))
        return Dataset(self.features[index], self.labels[index], self.languages[index], self.splits[index],
                       self.manifest, self.ids[index])

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], manifest: DatasetManifest) -> "Dataset":
        if isinstance(samples, Dataset):
            return samples
        samples = list(samples)
        if not samples:
            return cls(np.zeros((0, manifest.dim)), [], [], [], manifest, [])
        return cls(np.stack([s.features for s in samples]), [s.label for s in samples],
                   [s.language for s in samples], [s.split for s in samples], manifest,
                   [s.id for s in samples])

    def language_mask(self, language: str) -> np.ndarray:
        return self.languages == language

    def equals(self, other: "Dataset") -> bool:
        return (np.array_equal(self.features, other.features) and np.array_equal(self.labels, other.labels)
                and list(self.languages) == list(other.languages) and np.array_equal(self.splits, other.splits))


# -- generation --------------------------------------------------------------

@dataclass
class GeneratorSpec:
    class_means: np.ndarray                    # (K, D)
    rotations: dict[str, np.ndarray]           # language -> (D, D) orthogonal
    shifts: dict[str, np.ndarray]              # language -> (D,)
    sigma: float
    counts: dict[str, dict[int, int]]          # language -> split field value -> samples per class
    splits_per_language: dict[str, int]
    seed: int
    class_names: tuple[str, ...] = CLASS_NAMES

    @property
    def languages(self) -> list[str]:
        return list(self.counts)

    def validate(self) -> None:
        if not self.sigma >= 0 or not math.isfinite(self.sigma):
            raise InvalidArgument("sigma must be a finite non-negative number (0 gives noiseless class means)")
        k, d = self.class_means.shape
        if k != len(self.class_names):
            raise InvalidArgument("class_means rows must match class_names")
        gaps = np.linalg.norm(self.class_means[:, None, :] - self.class_means[None, :, :], axis=-1)
        if np.any(gaps[~np.eye(k, dtype=bool)] == 0):
            raise InvalidArgument("class means must be pairwise distinct")
        for lang, counts in self.counts.items():
            if lang not in self.rotations or lang not in self.shifts:
                raise InvalidArgument(f"language {lang!r} lacks a transform")
            r = self.rotations[lang]
            if r.shape != (d, d) or not np.allclose(r.T @ r, np.eye(d), atol=1e-10):
                raise InvalidArgument(f"rotation for {lang!r} is not orthogonal")
            if not counts or any(n < 1 for n in counts.values()):
                raise InvalidArgument(f"language {lang!r} needs positive per-split counts")


def random_orthogonal(dim: int, gen: SplitMix64) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with sign fix."""
    a = gen.normal(dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def make_generator_spec(seed: int, counts: dict[str, dict[int, int]], splits_per_language: dict[str, int],
                        dim: int = 16, sigma: float = 1.0, spacing: float = 3.0, shift_scale: float = 3.0,
                        class_names: Sequence[str] = CLASS_NAMES) -> GeneratorSpec:
    """Build transforms from ``seed``.

    Class means are ``spacing`` times the first ``K`` basis vectors (pairwise
    distance ``spacing * sqrt(2)``).  Each language gets a random orthogonal
    transform and a shift of norm ``shift_scale`` in a random direction.
    """
    k = len(class_names)
    if dim < k:
        raise InvalidArgument("feature dim must be at least the class count")
    means = np.zeros((k, dim))
    means[np.arange(k), np.arange(k)] = spacing
    rotations, shifts = {}, {}
    for lang in counts:
        gen = SplitMix64(derive_seed(seed, "transform", lang))
        rotations[lang] = random_orthogonal(dim, gen)
        direction = gen.normal(dim)
        shifts[lang] = shift_scale * direction / np.linalg.norm(direction)
    spec = GeneratorSpec(means, rotations, shifts, float(sigma), counts, dict(splits_per_language), int(seed),
                         tuple(class_names))
    return spec


def desk_spec(seed: int = 0, n_train: int = 200, n_test: int = 50, dim: int = 16, sigma: float = 1.0,
              spacing: float = 3.0, shift_scale: float = 3.0, languages: Sequence[str] = LANGUAGES) -> GeneratorSpec:
    """Three single-split languages with ``n_train``/``n_test`` samples per class."""
    counts = {lang: {0: n_train, 1: n_test} for lang in languages}
    return make_generator_spec(seed, counts, {lang: 1 for lang in languages}, dim=dim, sigma=sigma,
                               spacing=spacing, shift_scale=shift_scale)


def _spread(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def table1_counts(scale: float = 1.0) -> tuple[dict[str, dict[int, int]], dict[str, int]]:
    """Per-class, per-split-field counts mirroring the corpus sizes.

    Multi-split languages keep their total (train + test) and spread it over
    equal folds; the single-split language keeps its exact train/test sizes.
    Per-language totals are divided evenly over the 4 classes.
    """
    if not scale > 0:
        raise InvalidArgument("scale must be positive")
    k = len(CLASS_NAMES)
    counts, splits = {}, {}
    for lang, row in CORPUS_COUNTS.items():
        n = row["splits"]
        splits[lang] = n
        if n == 1:
            counts[lang] = {0: max(1, round(row["train"] * scale / k)), 1: max(1, round(row["test"] * scale / k))}
        else:
            total = max(n, round((row["train"] + row["test"]) * scale / k))
            counts[lang] = dict(enumerate(_spread(total, n)))
    return counts, splits


def table1_spec(seed: int = 0, scale: float = 1.0, dim: int = 16, sigma: float = 1.0, spacing: float = 3.0,
                shift_scale: float = 3.0) -> GeneratorSpec:
    counts, splits = table1_counts(scale)
    return make_generator_spec(seed, counts, splits, dim=dim, sigma=sigma, spacing=spacing, shift_scale=shift_scale)


def generate_dataset(spec: GeneratorSpec) -> Dataset:
    """Draw samples language by language, split by split, class by class."""
    spec.validate()
    k, d = spec.class_means.shape
    gen = SplitMix64(derive_seed(spec.seed, "samples"))
    feats, labels, langs, splits = [], [], [], []
    manifest_counts: dict[str, dict[str, int]] = {}
    for lang, per_split in spec.counts.items():
        r, s = spec.rotations[lang], spec.shifts[lang]
        manifest_counts[lang] = {}
        for split_value, n in sorted(per_split.items()):
            for c in range(k):
                z = gen.normal(n * d).reshape(n, d)
                x = (spec.class_means[c] + spec.sigma * z) @ r.T + s
                feats.append(x)
                labels.extend([c] * n)
                langs.extend([lang] * n)
                splits.extend([split_value] * n)
            manifest_counts[lang][str(split_value)] = n * k
    manifest = DatasetManifest(k, d, list(spec.class_names), spec.languages, dict(spec.splits_per_language),
                               manifest_counts, spec.seed)
    return Dataset(np.concatenate(feats), labels, langs, splits, manifest)


# -- JSONL -------------------------------------------------------------------

def manifest_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def write_jsonl(dataset: Dataset, path) -> Path:
    """Write samples plus the sibling ``<stem>.manifest.json``."""
    path = Path(path)
    names = dataset.manifest.class_names
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(dataset)):
            row = {"features": [float(v) for v in dataset.features[i]], "label": names[dataset.labels[i]],
                   "language": str(dataset.languages[i]), "split": int(dataset.splits[i])}
            fh.write(json.dumps(row) + "\n")
    with open(manifest_path_for(path), "w", encoding="utf-8") as fh:
        json.dump(dataset.manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_jsonl(path) -> Dataset:
    """Parse a sample file; the sibling manifest is used when present."""
    path = Path(path)
    mpath = manifest_path_for(path)
    manifest = DatasetManifest.from_json(json.loads(mpath.read_text())) if mpath.exists() else None
    class_names = list(manifest.class_names) if manifest else list(CLASS_NAMES)
    class_index = {name: i for i, name in enumerate(class_names)}
    dim = manifest.dim if manifest else None
    feats, labels, langs, splits = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
            for key in ("features", "label", "language", "split"):
                if key not in row:
                    raise ParseError(lineno, f"missing field {key!r}")
            x = row["features"]
            if not isinstance(x, list) or not all(isinstance(v, (int, float)) for v in x):
                raise ParseError(lineno, "features must be a list of numbers")
            if dim is None:
                dim = len(x)
            if len(x) != dim:
                raise ParseError(lineno, f"expected {dim} features, got {len(x)}")
            if row["label"] not in class_index:
                raise ParseError(lineno, f"unknown class name {row['label']!r}")
            if not isinstance(row["split"], int) or row["split"] < 0:
                raise ParseError(lineno, "split must be a non-negative integer")
            feats.append(x)
            labels.append(class_index[row["label"]])
            langs.append(str(row["language"]))
            splits.append(row["split"])
    if not feats:
        raise DataError(f"{path}: no samples")
    if manifest is None:
        seen = list(dict.fromkeys(langs))
        per_lang = {lang: max(s for s, l in zip(splits, langs) if l == lang) + 1 for lang in seen}
        # a language whose fields are only {0, 1} is ambiguous; treat it as a two-fold language
        manifest = DatasetManifest(len(class_names), dim, class_names, seen, per_lang)
        counts: dict[str, dict[str, int]] = {}
        for lang, s in zip(langs, splits):
            counts.setdefault(lang, {}).setdefault(str(s), 0)
            counts[lang][str(s)] += 1
        manifest.counts = counts
    else:
        unknown = set(langs) - set(manifest.languages)
        if unknown:
            raise DataError(f"languages {sorted(unknown)} are not declared in the manifest")
    return Dataset(np.asarray(feats, dtype=np.float64), labels, langs, splits, manifest)


# -- splits and batches ------------------------------------------------------

def select_split(dataset: Dataset, split_id: int, role: str, language: str | None = None) -> Dataset:
    """Train or test portion for cross-validation split ``split_id``.

    ``language=None`` keeps every language (multilingual); otherwise only that
    language is kept.
    """
    if role not in ("train", "test"):
        raise InvalidArgument(f"role must be 'train' or 'test', got {role!r}")
    manifest = dataset.manifest
    langs = manifest.languages if language is None else [language]
    if language is not None and language not in manifest.splits_per_language:
        raise InvalidArgument(f"unknown language {language!r}")
    if split_id < 0:
        raise InvalidArgument("split id must be non-negative")
    keep = np.zeros(len(dataset), dtype=bool)
    for lang in langs:
        n = manifest.splits_per_language[lang]
        in_lang = dataset.language_mask(lang)
        if n == 1:
            test = in_lang & (dataset.splits == 1)
        else:
            if split_id >= n:
                raise InvalidArgument(f"split {split_id} out of range for {lang!r} ({n} splits)")
            test = in_lang & (dataset.splits == split_id)
        keep |= test if role == "test" else (in_lang & ~test)
    return dataset[np.flatnonzero(keep)]


def n_splits(manifest: DatasetManifest, languages: Sequence[str] | None = None) -> int:
    """Number of valid split ids across ``languages``."""
    langs = manifest.languages if languages is None else languages
    multi = [manifest.splits_per_language[l] for l in langs if manifest.splits_per_language[l] > 1]
    return min(multi) if multi else 1


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    if batch_size < 1:
        raise InvalidArgument("batch size must be >= 1")
    order = SplitMix64(derive_seed(seed, "epoch", epoch)).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def make_batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> list[Dataset]:
    """Shuffle keyed by ``(seed, epoch)`` and cut into batches; the short tail is kept."""
    return [dataset[idx] for idx in batch_indices(len(dataset), batch_size, seed, epoch)]
