"""Command-line entry points: prepare, train, evaluate, predict,
zero-shot, transfer, ablate, sweep.

Every command resolves a flat key=value config (file < --set overrides),
freezes the resolved copy before doing work, and stages its outputs in a
temp subdirectory that is promoted into --out only on success.

Environment:
    LLMPROP_CACHE_DIR       fallback directory for tokenizer/encoder assets
    LLMPROP_DETERMINISTIC   "1" forces deterministic torch kernels
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
import uuid
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import trainer as trainer_mod
from .config import ConfigError, RunConfig
from .corpus import DataError, DatasetSplit
from .labelscale import METHODS as SCALER_METHODS
from .textprep import PreprocessConfig, default_stopwords, load_stopwords, preprocess
from .tokenizer import stock_vocab, train_vocab
from .trainer import NumericError, OneCycleConfig, TrainConfig, get_task

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

ABLATION_TOGGLES = (
    "modified_tokenizer",
    "label_scaling",
    "cls_token",
    "num_token",
    "ang_token",
    "stopwords",
)

SWEEP_DIMENSIONS = ("train_size", "max_length", "scaler")


# --------------------------------------------------------------------------
# shared plumbing
# --------------------------------------------------------------------------


def _apply_env() -> None:
    if os.environ.get("LLMPROP_DETERMINISTIC", "").lower() in ("1", "true"):
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


def _resolve_asset(path_str: str) -> Path:
    """Resolve a path, falling back to LLMPROP_CACHE_DIR when set."""
    path = Path(path_str)
    if path.exists():
        return path
    cache = os.environ.get("LLMPROP_CACHE_DIR")
    if cache and (Path(cache) / path_str).exists():
        return Path(cache) / path_str
    return path


@contextmanager
def _staged_output(out_dir):
    """Stage outputs in a temp subdirectory; promote on success only."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = out / f".staging-{uuid.uuid4().hex[:8]}"
    stage.mkdir()
    yield stage
    for child in sorted(stage.iterdir()):
        target = out / child.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        shutil.move(str(child), str(target))
    stage.rmdir()


def _resolve_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = RunConfig()
    return cfg.apply_overrides(args.set or [])


def _schema_from_config(cfg: RunConfig) -> Dict[str, str]:
    schema = {}
    for field in corpus_mod.REQUIRED_FIELDS:
        key = f"corpus.schema.{field}"
        if cfg.has(key):
            schema[field] = cfg.get(key)
    return schema


def _load_records(cfg: RunConfig, verbose: bool = True):
    path = _resolve_asset(cfg.get("corpus.path"))
    records, report = corpus_mod.load_dataset(
        path, schema=_schema_from_config(cfg), fmt=cfg.get("corpus.format", "auto")
    )
    if verbose:
        print(f"ingested {report.summary()} from {path}")
        for row_no, reason in report.errors[:10]:
            print(f"  row {row_no}: {reason}")
        if len(report.errors) > 10:
            print(f"  ... {len(report.errors) - 10} more")
    if not records:
        raise DataError(f"no valid records in {path}")
    return records, report


def _fractions(cfg: RunConfig) -> Tuple[float, float, float]:
    parts = cfg.get_list("split.fractions", "0.8,0.1,0.1")
    if len(parts) != 3:
        raise ConfigError(f"split.fractions needs 3 values, got {parts}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _get_split(cfg: RunConfig, records) -> DatasetSplit:
    if cfg.has("split.manifest"):
        split = corpus_mod.apply_split_manifest(records, _resolve_asset(cfg.get("split.manifest")))
    else:
        split = corpus_mod.split_dataset(records, _fractions(cfg), cfg.get_int("split.seed", 42))
    if cfg.has("train.subsample"):
        split = corpus_mod.subsample_train(
            split, cfg.get_int("train.subsample"), cfg.get_int("train.seed", 0)
        )
    return split


def _preprocess_config(cfg: RunConfig) -> PreprocessConfig:
    if cfg.has("preprocess.stopwords_path"):
        stopwords = load_stopwords(_resolve_asset(cfg.get("preprocess.stopwords_path")))
    else:
        stopwords = default_stopwords()
    return PreprocessConfig(
        replace_num=cfg.get_bool("preprocess.replace_num", True),
        replace_ang=cfg.get_bool("preprocess.replace_ang", True),
        remove_stopwords=cfg.get_bool("preprocess.remove_stopwords", True),
        prepend_cls=cfg.get_bool("preprocess.prepend_cls", True),
        stopword_list=stopwords,
    )


def _train_config(cfg: RunConfig, preprocess_config: Optional[PreprocessConfig] = None) -> TrainConfig:
    task = cfg.get("train.task", "band_gap")
    get_task(task)  # validate early
    scaler_method = cfg.get("train.scaler_method", "z_score")
    if scaler_method not in SCALER_METHODS:
        raise ConfigError(f"train.scaler_method must be one of {SCALER_METHODS}")
    seed = cfg.get_int("train.seed", 0)
    return TrainConfig(
        task=task,
        batch_size=cfg.get_int("train.batch_size", 64),
        lr_max=cfg.get_float("train.lr_max", 1e-3),
        epochs=cfg.get_int("train.epochs", 200),
        max_length=cfg.get_int("train.max_length", 888),
        scaler_method=scaler_method,
        seed=seed,
        onecycle=OneCycleConfig(
            pct_warmup=cfg.get_float("train.pct_warmup", 0.3),
            final_fraction=cfg.get_float("train.final_fraction", 0.04),
        ),
        preprocess=preprocess_config or _preprocess_config(cfg),
        vocab_size=cfg.get_int("tokenizer.vocab_size", 2000),
        retrain_tokenizer=cfg.get_bool("tokenizer.retrain", True),
        hidden_size=cfg.get_int("encoder.hidden_size", 64),
        num_layers=cfg.get_int("encoder.num_layers", 2),
        num_heads=cfg.get_int("encoder.num_heads", 2),
        dropout=cfg.get_float("encoder.dropout", 0.2),
        max_positions=cfg.get_int("encoder.max_positions", 1024),
        encoder_source=cfg.get("encoder.source", f"toy-random:{seed}"),
        grad_clip_norm=1.0 if cfg.get_bool("train.grad_clip", False) else None,
        keep_every_epoch=cfg.get_bool("train.keep_every_epoch", False),
        device=cfg.get("train.device", "cpu"),
    )


def _write_table(path: Path, header: List[str], rows: List[List[str]]) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(row) for row in rows]
    text = "\n".join(lines) + "\n"
    path.write_text(text, encoding="utf-8")
    print(text, end="")


def _fmt(value: float) -> str:
    return "N/A" if value is None or (isinstance(value, float) and math.isnan(value)) else repr(value)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_prepare(args) -> int:
    cfg = _resolve_config(args)
    records, report = _load_records(cfg)
    split = _get_split(cfg, records)
    preprocess_config = _preprocess_config(cfg)

    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        corpus_mod.write_split_manifest(split, stage / "split_manifest.tsv")

        totals = {"num": 0, "ang": 0, "stopwords": 0}
        train_texts: List[str] = []
        with open(stage / "preprocessed.jsonl", "w", encoding="utf-8") as f:
            for name in ("train", "validation", "test"):
                for record in split.part(name):
                    processed = preprocess(record.description, preprocess_config)
                    totals["num"] += processed.num_substitutions
                    totals["ang"] += processed.ang_substitutions
                    totals["stopwords"] += processed.stopwords_removed
                    if name == "train":
                        train_texts.append(processed.text)
                    f.write(
                        json.dumps(
                            {"id": record.id, "split": name, "text": processed.text},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )

        if cfg.get_bool("tokenizer.retrain", True):
            bundle = train_vocab(
                train_texts,
                cfg.get_int("tokenizer.vocab_size", 2000),
                max_length=cfg.get_int("train.max_length", 888),
            )
        else:
            bundle = stock_vocab(max_length=cfg.get_int("train.max_length", 888))
        bundle.save(stage / "vocab.txt")

        lengths = [bundle.encode(text).original_length for text in train_texts]
        stats = [
            f"records_ingested = {report.n_valid}",
            f"records_rejected = {report.n_rejected}",
            f"split_sizes = {split.sizes[0]},{split.sizes[1]},{split.sizes[2]}",
            f"vocab_size = {len(bundle)}",
            f"mean_train_token_length = {float(np.mean(lengths)) if lengths else 0.0!r}",
            f"num_substitutions = {totals['num']}",
            f"ang_substitutions = {totals['ang']}",
            f"stopwords_removed = {totals['stopwords']}",
        ]
        (stage / "stats.txt").write_text("\n".join(stats) + "\n", encoding="utf-8")
        print("\n".join(stats))
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    records, _ = _load_records(cfg)
    split = _get_split(cfg, records)
    config = _train_config(cfg)
    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        corpus_mod.write_split_manifest(split, stage / "split_manifest.tsv")
        best_dir, state = trainer_mod.train(split, config, stage)
        print(
            f"best epoch {state.best_epoch}: "
            f"val {get_task(config.task).metric_name} = {_fmt(state.best_val_metric)}"
        )
    print(f"checkpoints under {Path(args.out) / 'checkpoints'}")
    return 0


def _evaluation_records(cfg: RunConfig, split: DatasetSplit, part_key: str):
    part = cfg.get(part_key, "test")
    if part == "all":
        return list(split.train) + list(split.validation) + list(split.test)
    return list(split.part(part))


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    records, _ = _load_records(cfg)
    split = _get_split(cfg, records)
    checkpoint = _resolve_asset(cfg.get("evaluate.checkpoint"))
    task = cfg.get("evaluate.task", "") or None
    report = trainer_mod.evaluate(
        checkpoint,
        _evaluation_records(cfg, split, "evaluate.split"),
        task=task,
        batch_size=cfg.get_int("train.batch_size", 64),
        device=cfg.get("train.device", "cpu"),
    )
    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        metrics_mod.write_report(
            report,
            stage / "report.txt",
            checkpoint_hash=metrics_mod.file_sha256(Path(checkpoint) / "weights.pt"),
            manifest_hash=(
                metrics_mod.file_sha256(_resolve_asset(cfg.get("split.manifest")))
                if cfg.has("split.manifest")
                else ""
            ),
        )
    print(report.summary())
    return 0


def cmd_zero_shot(args) -> int:
    cfg = _resolve_config(args)
    records, _ = _load_records(cfg)
    split = _get_split(cfg, records)
    task = cfg.get("train.task", "band_gap")
    eval_records = _evaluation_records(cfg, split, "evaluate.split")
    if cfg.has("zero_shot.checkpoint"):
        source = _resolve_asset(cfg.get("zero_shot.checkpoint"))
        report = trainer_mod.zero_shot(source, eval_records, task)
    else:
        report = trainer_mod.zero_shot(None, eval_records, task, config=_train_config(cfg))
    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        metrics_mod.write_report(report, stage / "report.txt")
    print(report.summary())
    return 0


def cmd_transfer(args) -> int:
    cfg = _resolve_config(args)
    records, _ = _load_records(cfg)
    split = _get_split(cfg, records)
    source = _resolve_asset(cfg.get("transfer.source"))
    config = _train_config(cfg)
    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        corpus_mod.write_split_manifest(split, stage / "split_manifest.tsv")
        _, state = trainer_mod.transfer_train(source, split, config, stage)
        print(
            f"best epoch {state.best_epoch}: "
            f"val {get_task(config.task).metric_name} = {_fmt(state.best_val_metric)}"
        )
    return 0


def cmd_predict(args) -> int:
    cfg = _resolve_config(args)
    checkpoint = trainer_mod.load_checkpoint(_resolve_asset(cfg.get("predict.checkpoint")))
    input_path = _resolve_asset(cfg.get("predict.input"))
    if not input_path.exists():
        raise DataError(f"input file not found: {input_path}")
    lines = input_path.read_text(encoding="utf-8").splitlines()
    predictions: List[float] = []
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            raise DataError(f"blank description at line {line_no}")
    examples = [
        checkpoint.bundle.encode(
            preprocess(line, checkpoint.preprocess_config).text,
            max_length=checkpoint.max_length,
        )
        for line in lines
    ]
    raw = trainer_mod.predict_batched(
        checkpoint.model, examples, batch_size=cfg.get_int("train.batch_size", 64)
    )
    if checkpoint.task.kind == trainer_mod.REGRESSION:
        predictions = list(checkpoint.scaler.inverse_transform(raw))
    else:
        predictions = list(raw)
    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        (stage / "predictions.txt").write_text(
            "\n".join(repr(float(p)) for p in predictions) + "\n", encoding="utf-8"
        )
    print(f"wrote {len(predictions)} predictions to {Path(args.out) / 'predictions.txt'}")
    return 0


def _ablation_config(base: TrainConfig, cfg: RunConfig, active: List[str]) -> TrainConfig:
    """Build a run config with only the named strategies switched on."""
    stopword_list = base.preprocess.stopword_list or default_stopwords()
    preprocess_config = PreprocessConfig(
        replace_num="num_token" in active,
        replace_ang="ang_token" in active,
        remove_stopwords="stopwords" in active,
        prepend_cls="cls_token" in active,
        stopword_list=stopword_list,
    )
    return replace(
        base,
        preprocess=preprocess_config,
        retrain_tokenizer="modified_tokenizer" in active,
        scaler_method=(
            cfg.get("train.scaler_method", "z_score") if "label_scaling" in active else "identity"
        ),
    )


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    toggles = cfg.get_list("ablate.toggles", ",".join(ABLATION_TOGGLES))
    for toggle in toggles:
        if toggle not in ABLATION_TOGGLES:
            raise ConfigError(f"unknown ablation toggle {toggle!r}; expected {ABLATION_TOGGLES}")
    records, _ = _load_records(cfg)
    split = _get_split(cfg, records)
    base = _train_config(cfg)
    task = get_task(base.task)

    rows: List[Tuple[str, List[str]]] = [("baseline", [])]
    for toggle in toggles:
        label = f"-{toggle}" if toggle == "stopwords" else f"+{toggle}"
        rows.append((label, [toggle]))
    if toggles:
        rows.append(("all", list(toggles)))

    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        table: List[List[str]] = []
        for label, active in rows:
            if task.kind == trainer_mod.CLASSIFICATION and active == ["label_scaling"]:
                # label scaling has no meaning for a binary target
                table.append([label, task.metric_name, "N/A", "0"])
                continue
            run_config = _ablation_config(base, cfg, active)
            run_dir = stage / f"run-{label.replace('+', 'plus-').replace('-', 'minus-', 1)}"
            best_dir, _ = trainer_mod.train(split, run_config, run_dir)
            report = trainer_mod.evaluate(
                best_dir, list(split.validation), batch_size=base.batch_size, device=base.device
            )
            table.append([label, report.metric_name, repr(report.value), str(report.n)])
        _write_table(stage / "ablation.tsv", ["variant", "metric", "value", "n"], table)
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    dimension = cfg.get("sweep.dimension")
    if dimension not in SWEEP_DIMENSIONS:
        raise ConfigError(f"sweep.dimension must be one of {SWEEP_DIMENSIONS}")
    values = cfg.get_list("sweep.values")
    if not values:
        raise ConfigError("sweep.values must be a non-empty comma-separated list")
    records, _ = _load_records(cfg)
    split = _get_split(cfg, records)
    base = _train_config(cfg)
    task = get_task(base.task)

    with _staged_output(args.out) as stage:
        cfg.freeze(stage / "config.resolved")
        table: List[List[str]] = []
        plot_lines: List[str] = []
        for value in values:
            if dimension == "train_size":
                n = int(value)
                run_split = corpus_mod.subsample_train(split, n, base.seed)
                run_config = base
            elif dimension == "max_length":
                run_split = split
                run_config = replace(base, max_length=int(value))
            else:
                if task.kind != trainer_mod.REGRESSION:
                    raise ConfigError("scaler sweep requires a regression task")
                if value not in SCALER_METHODS:
                    raise ConfigError(f"unknown scaler {value!r}")
                run_split = split
                run_config = replace(base, scaler_method=value)
            run_dir = stage / f"run-{dimension}-{value}"
            best_dir, _ = trainer_mod.train(run_split, run_config, run_dir)
            report = trainer_mod.evaluate(
                best_dir, list(run_split.validation), batch_size=base.batch_size, device=base.device
            )
            table.append([dimension, value, report.metric_name, repr(report.value), str(report.n)])
            plot_lines.append(f"{value}\t{report.value!r}")
        _write_table(
            stage / "sweep.tsv", ["dimension", "value", "metric", "metric_value", "n"], table
        )
        (stage / "sweep_data.tsv").write_text("\n".join(plot_lines) + "\n", encoding="utf-8")
    return 0


# --------------------------------------------------------------------------
# argument parsing and dispatch
# --------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config value (repeatable; wins over the file)",
    )
    parser.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmprop",
        description="Crystal property prediction from text descriptions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "prepare": (cmd_prepare, "ingest, split, preprocess and train the tokenizer"),
        "train": (cmd_train, "finetune the encoder on one property"),
        "evaluate": (cmd_evaluate, "score a checkpoint on a data split"),
        "predict": (cmd_predict, "predict properties for raw descriptions, one per line"),
        "zero-shot": (cmd_zero_shot, "evaluate with no updates on the target task"),
        "transfer": (cmd_transfer, "finetune starting from another property's checkpoint"),
        "ablate": (cmd_ablate, "toggle preprocessing strategies one at a time"),
        "sweep": (cmd_sweep, "sweep train size, input length or label scaling"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    _apply_env()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
