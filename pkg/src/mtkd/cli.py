"""Command-line entry point: ``mtkd <command> [options]``.

Commands
--------
gen-data        write the configured dataset as JSONL plus manifest
train-teacher   train cross-entropy teachers and save checkpoints
distill         train one paradigm's students from saved teacher checkpoints
compare         run every configured paradigm in one go and write the report
report          re-render report.csv / report.txt from a run directory

Every option is an override of a config key; ``--set section.key=value``
reaches keys without a dedicated flag.  Exit codes: 0 success, 2 config
error, 3 data error, 4 training failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import PARADIGM_NAMES, PRESET_OVERRIDES, ExperimentConfig, load_config
from .data import n_splits, select_split, write_jsonl
from .errors import CheckpointError, ConfigError, DataError, InvalidArgument, TrainingError
from .experiment import (MULTI, build_dataset, component_seeds, predict, resolve_splits, run_experiment,
                         train_classifier, write_outputs)
from .metrics import compute_metrics, confusion, render_report, report_from_json
from .model import load_checkpoint, save_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4

log = logging.getLogger("mtkd")


def teacher_path(directory, language: str, split: int) -> Path:
    return Path(directory) / f"teacher-{language}-{split}.ckpt"


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config file")
    common.add_argument("--seed", type=int, help="master seed (experiment.seed)")
    common.add_argument("--out", help="output directory (output.out)")
    common.add_argument("--preset", choices=sorted(PRESET_OVERRIDES), help="named bundle of overrides")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key; may be repeated")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="mtkd", description="Language-aware multi-teacher distillation "
                                     "experiments on synthetic or JSONL embeddings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write the dataset as JSONL + manifest")
    p.add_argument("--data-out", type=Path, help="JSONL path (default: <out>/data.jsonl)")

    p = sub.add_parser("train-teacher", parents=[common], help="train cross-entropy teacher(s)")
    p.add_argument("--language", required=True,
                   help=f"language tag, 'all' for every language, or '{MULTI}' for the multilingual teacher")

    p = sub.add_parser("distill", parents=[common], help="train students of one paradigm from saved teachers")
    p.add_argument("--paradigm", required=True, choices=PARADIGM_NAMES)
    p.add_argument("--teachers", type=Path, help="checkpoint directory (default: <out>/checkpoints)")

    sub.add_parser("compare", parents=[common], help="run all configured paradigms and write the report")

    p = sub.add_parser("report", parents=[common], help="re-render the report of a finished run")
    p.add_argument("--run", type=Path, help="run directory holding run.json (default: <out>)")
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    if args.preset:
        overrides.update(PRESET_OVERRIDES[args.preset])
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.out is not None:
        overrides["output.out"] = args.out
    if args.config is not None and not args.config.is_file():
        raise ConfigError(f"config file {args.config} not found")
    return load_config(args.config, overrides)


def cmd_gen_data(cfg: ExperimentConfig, args) -> int:
    dataset = build_dataset(cfg)
    path = args.data_out or Path(cfg.out) / "data.jsonl"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(dataset, path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None
    m = dataset.manifest
    print(f"wrote {len(dataset)} samples to {path}")
    for lang in m.languages:
        counts = ", ".join(f"split {k}: {v}" for k, v in sorted(m.counts.get(lang, {}).items(), key=lambda kv:
                                                                 int(kv[0])))
        print(f"  {lang} ({m.splits_per_language[lang]} split(s)): {counts}")
    return EXIT_OK


def _ur(model, data) -> float:
    cm = confusion(predict(model, data.features), data.labels, data.manifest.n_classes)
    return compute_metrics(cm.counts).UR


def cmd_train_teacher(cfg: ExperimentConfig, args) -> int:
    dataset = build_dataset(cfg)
    known = list(dataset.manifest.languages)
    if args.language == "all":
        languages = known
    elif args.language == MULTI or args.language in known:
        languages = [args.language]
    else:
        raise DataError(f"unknown language {args.language!r}; dataset has {known}")
    seeds = component_seeds(cfg.seed)
    m = dataset.manifest
    dims = (m.dim, *cfg.hidden, m.n_classes)
    out = Path(cfg.out) / "checkpoints"
    out.mkdir(parents=True, exist_ok=True)
    scope = known if MULTI in languages else languages
    available = n_splits(m, scope)
    splits = list(cfg.splits) or list(range(available))
    if any(s >= available for s in splits):
        raise DataError(f"split ids {splits} out of range; {available} split(s) available")
    for split in splits:
        for lang in languages:
            which = None if lang == MULTI else lang
            train_set = select_split(dataset, split, "train", which)
            test_set = select_split(dataset, split, "test", which)
            result = train_classifier(train_set, dims, cfg.train, seeds["init"], seeds["shuffle"])
            path = save_checkpoint(result.model, teacher_path(out, lang, split), lang, seeds["init"], cfg.digest())
            print(f"teacher {lang} split {split}: train UR {_ur(result.model, train_set):.2f}, "
                  f"test UR {_ur(result.model, test_set):.2f} -> {path}")
    return EXIT_OK


def cmd_distill(cfg: ExperimentConfig, args) -> int:
    cfg = replace(cfg, paradigms=(args.paradigm,))
    dataset = build_dataset(cfg)
    directory = args.teachers or Path(cfg.out) / "checkpoints"
    needed = []
    if args.paradigm.startswith("mtkd"):
        needed = list(dataset.manifest.languages)
    elif args.paradigm == "kd-mono":
        needed = [MULTI]
    loaded = {}
    for split in resolve_splits(cfg, dataset):
        loaded[split] = {}
        for key in needed:
            path = teacher_path(directory, key, split)
            if not path.is_file():
                raise DataError(f"missing teacher checkpoint {path}; run train-teacher --language {key} first")
            ckpt = load_checkpoint(path)
            if ckpt.language != key:
                raise DataError(f"{path} is tagged {ckpt.language!r}, expected {key!r}")
            loaded[split][key] = ckpt.model
    record = run_experiment(cfg, dataset, loaded)
    out = write_outputs(record, cfg, cfg.out)
    _print_summary(record, out)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    if len(cfg.paradigms) < 2:
        raise ConfigError("compare needs at least two paradigms")
    record = run_experiment(cfg)
    out = write_outputs(record, cfg, cfg.out)
    _print_summary(record, out)
    failed = [k for k, ok in record.reduction_checks.items() if not ok]
    if failed:
        print(f"reduction identities violated: {failed}", file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig, args) -> int:
    run_dir = args.run or Path(cfg.out)
    path = run_dir / "run.json"
    if not path.is_file():
        raise DataError(f"no run.json in {run_dir}")
    try:
        reports = [report_from_json(r) for r in json.loads(path.read_text())["reports"]]
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed {path}: {exc}") from None
    csv_text, table = render_report(reports)
    (run_dir / "report.csv").write_text(csv_text)
    (run_dir / "report.txt").write_text(table)
    print(table)
    return EXIT_OK


def _print_summary(record, out: Path) -> None:
    print((out / "report.txt").read_text())
    for key, weights in sorted(record.weight_summaries.items()):
        for lang, per_teacher in weights.items():
            cells = ", ".join(f"{t}={w:.3f}" for t, w in per_teacher.items())
            print(f"{key} weights on {lang} samples: {cells}")
    print(f"wrote {out} in {record.duration_s:.1f} s")


COMMANDS = {"gen-data": cmd_gen_data, "train-teacher": cmd_train_teacher, "distill": cmd_distill,
            "compare": cmd_compare, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InvalidArgument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
