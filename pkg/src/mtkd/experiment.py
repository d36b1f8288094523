"""Training loop and paradigm orchestration behind the command-line tool.

Paradigms (students):

* ``ft-mono``    one student per language, cross-entropy only; identical to
                 that language's teacher.
* ``ft-multi``   one student on all languages, cross-entropy only.
* ``kd-mono``    one student per language distilled from the ``ft-multi`` model.
* ``mtkd-mono``  one student per language distilled from every monolingual teacher.
* ``mtkd-multi`` one student on all languages distilled from every monolingual teacher.

Component seeds come from the master seed (see :func:`component_seeds`), so
every paradigm in a run shares data, initial weights and shuffle keys.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, TrainSettings
from .data import (Dataset, desk_spec, generate_dataset, load_jsonl, n_splits, select_split, table1_spec,
                   batch_indices)
from .distill import (BatchDiagnostics, DistillConfig, batch_loss, ft_loss_batch, mtkd_loss_batch,
                      teacher_logits_for)
from .errors import DataError, InvalidArgument, TrainingError, UpdateRejected
from .metrics import ConfusionMatrix, MetricReport, evaluate, render_report, confusion_json
from .model import Classifier, forward, init_classifier, init_optimizer, optimizer_step, save_checkpoint
from .rng import derive_seed

log = logging.getLogger(__name__)

MONO_PARADIGMS = ("ft-mono", "kd-mono", "mtkd-mono")
MULTI = "multi"


def component_seeds(master: int) -> dict[str, int]:
    return {name: derive_seed(master, name) for name in ("data", "init", "shuffle", "bootstrap")}


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.path:
        return load_jsonl(d.path)
    seed = component_seeds(cfg.seed)["data"]
    if d.preset == "desk":
        spec = desk_spec(seed, n_train=d.n_train, n_test=d.n_test, dim=d.dim, sigma=d.sigma, spacing=d.spacing,
                         shift_scale=d.shift_scale)
    elif d.preset == "table1-scaled":
        spec = table1_spec(seed, scale=d.scale, dim=d.dim, sigma=d.sigma, spacing=d.spacing,
                           shift_scale=d.shift_scale)
    else:
        raise InvalidArgument(f"unknown data preset {d.preset!r}")
    return generate_dataset(spec)


@dataclass
class TrainResult:
    model: Classifier
    epoch_losses: list[float]
    diagnostics: BatchDiagnostics | None = None     # final epoch, in visiting order
    sample_ids: np.ndarray | None = None
    sample_languages: np.ndarray | None = None
    final_step: int = 0


def train_classifier(train_set: Dataset, layer_dims: Sequence[int], settings: TrainSettings, init_seed: int,
                     shuffle_seed: int, paradigm: str = "ft", teachers: Sequence[Classifier] = (),
                     distill_cfg: DistillConfig | None = None) -> TrainResult:
    """Mini-batch training with a fixed epoch budget; no early stopping."""
    if len(train_set) == 0:
        raise DataError("empty training set")
    distill_cfg = distill_cfg or DistillConfig()
    model = init_classifier(layer_dims, init_seed)
    state = init_optimizer(model, settings.optimizer, settings.learning_rate)
    t_logits = teacher_logits_for(teachers, train_set.features) if paradigm != "ft" else None
    if t_logits is not None and t_logits.shape[-1] != model.n_classes:
        raise InvalidArgument("teacher class count differs from the student's")
    epoch_losses = []
    step = 0
    final_diag: list[BatchDiagnostics] = []
    final_idx: list[np.ndarray] = []
    for epoch in range(settings.epochs):
        last_epoch = epoch == settings.epochs - 1
        total = 0.0
        for idx in batch_indices(len(train_set), settings.batch_size, shuffle_seed, epoch):
            batch = train_set[idx]
            try:
                # inputs were validated above, so a rejection here means the numbers blew up
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads, diag = batch_loss(paradigm, model, teachers, batch, distill_cfg,
                                                   teacher_logits=None if t_logits is None else t_logits[:, idx])
            except InvalidArgument as exc:
                raise TrainingError(f"epoch {epoch}, step {step}: {exc}") from exc
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            try:
                model, state = optimizer_step(model, grads, state)
            except UpdateRejected as exc:
                raise TrainingError(f"epoch {epoch}, step {step}: {exc}") from exc
            step += 1
            total += loss * len(idx)
            if last_epoch:
                final_diag.append(diag)
                final_idx.append(idx)
        epoch_losses.append(total / len(train_set))
    order = np.concatenate(final_idx)
    return TrainResult(model, epoch_losses, BatchDiagnostics.concat(final_diag), train_set.ids[order],
                       train_set.languages[order], step)


def predict(model: Classifier, features: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, features), axis=1)


def weight_summary(result: TrainResult, teacher_languages: Sequence[str]) -> dict[str, dict[str, float]]:
    """Mean teacher weight per sample language over the final epoch."""
    diag = result.diagnostics
    if diag is None or diag.teacher_weights.shape[1] != len(teacher_languages):
        return {}
    out = {}
    for lang in dict.fromkeys(result.sample_languages):
        mask = result.sample_languages == lang
        means = diag.teacher_weights[mask].mean(axis=0)
        out[str(lang)] = {t: float(w) for t, w in zip(teacher_languages, means)}
    return out


@dataclass
class SplitResult:
    split: int
    reports: list[MetricReport]
    confusions: dict[str, dict[str, ConfusionMatrix]]          # paradigm -> language -> matrix
    diagnostics: dict[str, list[dict]]                         # paradigm -> records
    models: dict[str, dict[str, Classifier]]                   # paradigm -> language|multi -> model
    teachers: dict[str, Classifier]                            # trained in-run only
    weight_summaries: dict[str, dict[str, dict[str, float]]]
    reduction_checks: dict[str, bool] = field(default_factory=dict)


def _layer_dims(cfg: ExperimentConfig, dataset: Dataset) -> tuple[int, ...]:
    m = dataset.manifest
    return (m.dim, *cfg.hidden, m.n_classes)


def check_reductions(student: Classifier, teachers: Sequence[Classifier], data: Dataset,
                     cfg: DistillConfig) -> dict[str, bool]:
    """Loss identities evaluated on a trained student and real samples.

    * lambda = 0 multi-teacher loss equals the cross-entropy loss bit for bit.
    * A one-teacher multi-teacher batch loss equals the single-teacher one.
    """
    logits = forward(student, data.features)
    t_logits = teacher_logits_for(teachers, data.features)
    ft_l, ft_g, _ = ft_loss_batch(logits, data.labels)
    zero = DistillConfig(lam=0.0, temperature=cfg.temperature, tau=cfg.tau, kl_direction=cfg.kl_direction,
                         t_squared_rescale=cfg.t_squared_rescale)
    mt_l, mt_g, _ = mtkd_loss_batch(logits, t_logits, data.labels, zero)
    lam0 = bool(np.array_equal(ft_l, mt_l) and np.array_equal(ft_g, mt_g))
    one = t_logits[:1]
    l_m, g_m, _ = batch_loss("mtkd", student, teachers[:1], data, cfg, teacher_logits=one)
    l_k, g_k, _ = batch_loss("kd", student, teachers[:1], data, cfg, teacher_logits=one)
    single = bool(l_m == l_k and np.array_equal(g_m.flat(), g_k.flat()))
    return {"lambda0_equals_ft": lam0, "one_teacher_equals_kd": single}


def run_split(cfg: ExperimentConfig, dataset: Dataset, split: int,
              loaded_teachers: dict[str, Classifier] | None = None) -> SplitResult:
    """Train and evaluate every configured paradigm on one split.

    ``loaded_teachers`` maps language tags (and ``"multi"`` for the
    multilingual teacher of ``kd-mono``) to frozen models; when given, the
    distillation paradigms use them instead of training teachers in-run.
    """
    manifest = dataset.manifest
    seeds = component_seeds(cfg.seed)
    dims = _layer_dims(cfg, dataset)
    all_langs = list(manifest.languages)
    targets = list(cfg.languages) or all_langs
    missing = set(targets) - set(all_langs)
    if missing:
        raise DataError(f"languages {sorted(missing)} are not in the dataset")
    paradigms = cfg.paradigms
    dcfg = cfg.distill

    def train(train_set, paradigm="ft", teachers=()):
        return train_classifier(train_set, dims, cfg.train, seeds["init"], seeds["shuffle"], paradigm, teachers,
                                dcfg)

    train_mono = {lang: select_split(dataset, split, "train", lang) for lang in all_langs}
    train_multi = select_split(dataset, split, "train")
    test_sets = {lang: select_split(dataset, split, "test", lang) for lang in targets}

    needs_mtkd = any(p.startswith("mtkd") for p in paradigms)
    teachers: dict[str, Classifier] = {}
    if loaded_teachers is not None:
        wanted = (all_langs if needs_mtkd else []) + ([MULTI] if "kd-mono" in paradigms else [])
        absent = [k for k in wanted if k not in loaded_teachers]
        if absent:
            raise DataError(f"split {split}: missing teacher checkpoint(s) for {absent}")
        for key in wanted:
            if loaded_teachers[key].layer_dims[0] != dims[0] or loaded_teachers[key].n_classes != dims[-1]:
                raise DataError(f"teacher {key!r} has dims {loaded_teachers[key].layer_dims}, data needs "
                                f"{dims[0]} inputs and {dims[-1]} classes")
        teachers = {k: loaded_teachers[k] for k in wanted}
    if "ft-mono" in paradigms:
        for lang in targets:
            log.info("split %d: ft-mono %s", split, lang)
            if loaded_teachers is None:
                teachers[lang] = train(train_mono[lang]).model
    if needs_mtkd and loaded_teachers is None:
        for lang in all_langs:
            if lang not in teachers:
                log.info("split %d: teacher %s", split, lang)
                teachers[lang] = train(train_mono[lang]).model
    teacher_list = [teachers[l] for l in all_langs] if needs_mtkd else []

    models: dict[str, dict[str, Classifier]] = {}
    diag_records: dict[str, list[dict]] = {}
    summaries: dict[str, dict[str, dict[str, float]]] = {}
    checks: dict[str, bool] = {}

    def record(paradigm: str, result: TrainResult):
        if result.diagnostics is not None:
            diag_records.setdefault(paradigm, []).extend(
                result.diagnostics.to_records(result.final_step, result.sample_ids, result.sample_languages))

    ft_multi = teachers.get(MULTI)
    if "ft-multi" in paradigms or ("kd-mono" in paradigms and ft_multi is None):
        res = train(train_multi)
        if ft_multi is None:
            ft_multi = teachers[MULTI] = res.model
        if "ft-multi" in paradigms:
            models["ft-multi"] = {MULTI: res.model}
            record("ft-multi", res)
    if "ft-mono" in paradigms:
        models["ft-mono"] = {}
        for lang in targets:
            if loaded_teachers is None:
                models["ft-mono"][lang] = teachers[lang]
            else:
                res = train(train_mono[lang])
                models["ft-mono"][lang] = res.model
                record("ft-mono", res)
    if "kd-mono" in paradigms:
        models["kd-mono"] = {}
        for lang in targets:
            res = train(train_mono[lang], "kd", [ft_multi])
            models["kd-mono"][lang] = res.model
            record("kd-mono", res)
    if "mtkd-mono" in paradigms:
        models["mtkd-mono"] = {}
        summaries["mtkd-mono"] = {}
        for lang in targets:
            res = train(train_mono[lang], "mtkd", teacher_list)
            models["mtkd-mono"][lang] = res.model
            record("mtkd-mono", res)
            summaries["mtkd-mono"].update(weight_summary(res, all_langs))
    if "mtkd-multi" in paradigms:
        res = train(train_multi, "mtkd", teacher_list)
        models["mtkd-multi"] = {MULTI: res.model}
        record("mtkd-multi", res)
        summaries["mtkd-multi"] = weight_summary(res, all_langs)

    for paradigm in ("mtkd-mono", "mtkd-multi"):
        if paradigm in models:
            for key, student in models[paradigm].items():
                probe = test_sets[key] if key in test_sets else select_split(dataset, split, "test")
                for name, ok in check_reductions(student, teacher_list, probe, dcfg).items():
                    checks[f"{paradigm}/{key}/{name}"] = ok

    reports: list[MetricReport] = []
    confusions: dict[str, dict[str, ConfusionMatrix]] = {}
    for paradigm in paradigms:
        for lang in targets:
            model = models[paradigm].get(lang) or models[paradigm].get(MULTI)
            test = test_sets[lang]
            if len(test) == 0:
                raise DataError(f"split {split}: no test samples for {lang!r}")
            report, cm = evaluate(predict(model, test.features), test.labels, manifest.n_classes,
                                  cfg.n_resamples, derive_seed(seeds["bootstrap"], lang, split), cfg.confidence,
                                  manifest.class_names, paradigm=paradigm, language=lang, split=split)
            reports.append(report)
            confusions.setdefault(paradigm, {})[lang] = cm
    trained = teachers if loaded_teachers is None else {}
    return SplitResult(split, reports, confusions, diag_records, models, trained, summaries, checks)


@dataclass
class RunRecord:
    config_digest: str
    reports: list[MetricReport]
    checkpoints: dict[str, str] = field(default_factory=dict)
    duration_s: float = 0.0
    version: str = __version__
    weight_summaries: dict = field(default_factory=dict)
    reduction_checks: dict[str, bool] = field(default_factory=dict)
    splits: list[SplitResult] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {"config_digest": self.config_digest, "version": self.version, "duration_s": self.duration_s,
                "checkpoints": self.checkpoints, "weight_summaries": self.weight_summaries,
                "reduction_checks": self.reduction_checks, "reports": [r.to_json() for r in self.reports]}


def resolve_splits(cfg: ExperimentConfig, dataset: Dataset) -> list[int]:
    targets = list(cfg.languages) or list(dataset.manifest.languages)
    langs = dataset.manifest.languages if any(p.startswith(("mtkd", "ft-multi", "kd")) for p in cfg.paradigms) \
        else targets
    available = n_splits(dataset.manifest, langs)
    splits = list(cfg.splits) or list(range(available))
    bad = [s for s in splits if s < 0 or s >= available]
    if bad:
        raise DataError(f"split id(s) {bad} out of range; {available} split(s) available")
    return splits


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None,
                   loaded_teachers: dict[int, dict[str, Classifier]] | None = None) -> RunRecord:
    """Train and evaluate every configured paradigm on every configured split.

    ``loaded_teachers`` maps split id to the teachers passed to :func:`run_split`.
    """
    start = time.perf_counter()
    dataset = build_dataset(cfg) if dataset is None else dataset
    splits = resolve_splits(cfg, dataset)

    def one(split: int) -> SplitResult:
        teachers = None if loaded_teachers is None else loaded_teachers.get(split, {})
        return run_split(cfg, dataset, split, teachers)

    if cfg.workers > 1 and len(splits) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one, splits))
    else:
        results = [one(s) for s in splits]
    reports = [r for res in results for r in res.reports]
    summaries = {f"{p}/split{res.split}": v for res in results for p, v in res.weight_summaries.items()}
    checks = {f"split{res.split}/{k}": v for res in results for k, v in res.reduction_checks.items()}
    return RunRecord(cfg.digest(), reports, duration_s=time.perf_counter() - start, weight_summaries=summaries,
                     reduction_checks=checks, splits=results)


def write_outputs(record: RunRecord, cfg: ExperimentConfig, out_dir, save_models: bool = True) -> Path:
    """Write report.csv, report.txt, run.json, confusion/, diag/ and checkpoints/."""
    out = Path(out_dir)
    for sub in ("confusion", "diag", "checkpoints"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    csv_text, table = render_report(record.reports)
    (out / "report.csv").write_text(csv_text)
    (out / "report.txt").write_text(table)
    seeds = component_seeds(cfg.seed)
    for res in record.splits:
        for paradigm, per_lang in res.confusions.items():
            (out / "confusion" / f"{paradigm}-{res.split}.json").write_text(confusion_json(per_lang))
        for paradigm in cfg.paradigms:
            with open(out / "diag" / f"{paradigm}-{res.split}.jsonl", "w") as fh:
                for rec in res.diagnostics.get(paradigm, []):
                    fh.write(json.dumps(rec) + "\n")
        if save_models:
            for lang, model in res.teachers.items():
                path = out / "checkpoints" / f"teacher-{lang}-{res.split}.ckpt"
                save_checkpoint(model, path, lang, seeds["init"], record.config_digest)
                record.checkpoints[f"teacher/{lang}/{res.split}"] = str(path)
            for paradigm, per_key in res.models.items():
                for key, model in per_key.items():
                    path = out / "checkpoints" / f"{paradigm}-{key}-{res.split}.ckpt"
                    save_checkpoint(model, path, key, seeds["init"], record.config_digest)
                    record.checkpoints[f"{paradigm}/{key}/{res.split}"] = str(path)
    (out / "run.json").write_text(json.dumps(record.to_json(), indent=2, sort_keys=True) + "\n")
    return out


def paradigm_means(reports: Sequence[MetricReport], metric: str = "UR") -> dict[str, float]:
    """Arithmetic mean of ``metric`` over every (language, split) row of a paradigm."""
    groups: dict[str, list[float]] = {}
    for r in reports:
        groups.setdefault(r.paradigm, []).append(r.value(metric))
    return {p: float(np.mean(v)) for p, v in groups.items()}
