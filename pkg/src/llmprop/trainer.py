"""Finetuning loop: MAE/BCE losses, Adam with a onecycle schedule,
per-epoch checkpointing and best-on-validation selection, plus the
zero-shot and transfer entry points.

A checkpoint directory is self-contained: weights, vocabulary, scaler
state and preprocessing toggles, so restored models reproduce the exact
train-time text pipeline.
"""

from __future__ import annotations

import copy
import json
import math
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from . import metrics as metrics_mod
from .corpus import DatasetSplit, CrystalRecord, records_with_label
from .labelscale import LabelScaler
from .model import (
    CLASSIFICATION,
    POOL_CLS,
    POOL_MEAN,
    REGRESSION,
    CrystalTextEncoder,
    EncoderConfig,
    PropertyModel,
    PredictionHead,
    build_model,
)
from .textprep import PreprocessConfig, preprocess
from .tokenizer import (
    MAX_LENGTH_DEFAULT,
    TokenizedExample,
    TokenizerBundle,
    pad_batch,
    stock_vocab,
    train_vocab,
)


class NumericError(RuntimeError):
    """Non-finite loss or similar numeric failure during training."""


@dataclass(frozen=True)
class TaskSpec:
    """A prediction target: label field, task kind and reporting units."""

    name: str
    kind: str  # REGRESSION or CLASSIFICATION
    units: str

    @property
    def metric_name(self) -> str:
        return "MAE" if self.kind == REGRESSION else "AUC"

    @property
    def higher_is_better(self) -> bool:
        return self.kind == CLASSIFICATION


TASKS = {
    "band_gap": TaskSpec("band_gap", REGRESSION, "eV"),
    "volume": TaskSpec("volume", REGRESSION, "Å³/cell"),
    "is_gap_direct": TaskSpec("is_gap_direct", CLASSIFICATION, "dimensionless"),
}


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; expected one of {sorted(TASKS)}") from None


# --------------------------------------------------------------------------
# losses and schedule
# --------------------------------------------------------------------------


def mae_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error; the regression training loss."""
    if pred.numel() == 0:
        raise ValueError("mae_loss is undefined on an empty batch")
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return torch.mean(torch.abs(pred - target))


def bce_loss(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Binary cross entropy on probabilities strictly inside (0, 1).

    The training loop computes the same quantity from logits
    (binary_cross_entropy_with_logits) for numerical stability.
    """
    if probs.numel() == 0:
        raise ValueError("bce_loss is undefined on an empty batch")
    return -torch.mean(targets * torch.log(probs) + (1 - targets) * torch.log(1 - probs))


def onecycle_lr(
    step: float,
    total_steps: int,
    lr_max: float,
    pct_warmup: float = 0.3,
    final_fraction: float = 0.04,
) -> float:
    """Onecycle schedule value at a given step.

    Linear ramp from lr_max*final_fraction up to lr_max over the first
    pct_warmup*total_steps steps, then cosine anneal back down to
    lr_max*final_fraction; continuous at the peak.
    """
    if not 0 < pct_warmup < 1:
        raise ValueError("pct_warmup must lie in (0, 1)")
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    floor = lr_max * final_fraction
    warm = pct_warmup * total_steps
    if step <= warm:
        return floor + (lr_max - floor) * (step / warm)
    progress = (step - warm) / (total_steps - warm)
    return floor + (lr_max - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


# --------------------------------------------------------------------------
# configuration and state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OneCycleConfig:
    pct_warmup: float = 0.3
    final_fraction: float = 0.04


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to reproduce a finetuning run."""

    task: str
    batch_size: int = 64
    lr_max: float = 1e-3
    epochs: int = 200
    max_length: int = MAX_LENGTH_DEFAULT
    scaler_method: str = "z_score"
    seed: int = 0
    init_from: Optional[str] = None
    onecycle: OneCycleConfig = field(default_factory=OneCycleConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    vocab_size: int = 2000
    retrain_tokenizer: bool = True
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 2
    dropout: float = 0.2
    max_positions: int = 1024
    encoder_source: str = "toy-random:0"
    grad_clip_norm: Optional[float] = None  # off by default
    keep_every_epoch: bool = False
    device: str = "cpu"

    @property
    def pooling(self) -> str:
        return POOL_CLS if self.preprocess.prepend_cls else POOL_MEAN


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    lr: float


@dataclass
class TrainState:
    """Progress and history of one training run."""

    epoch: int = 0
    step: int = 0
    current_lr: float = 0.0
    best_val_metric: float = math.nan
    best_epoch: int = 0
    history: List[EpochRecord] = field(default_factory=list)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


@dataclass
class LoadedCheckpoint:
    """A checkpoint pulled back into memory, text pipeline included."""

    model: PropertyModel
    bundle: TokenizerBundle
    scaler: LabelScaler
    preprocess_config: PreprocessConfig
    task: TaskSpec
    max_length: int
    metadata: dict
    path: Optional[Path] = None


def save_checkpoint(
    directory,
    model: PropertyModel,
    bundle: TokenizerBundle,
    scaler: LabelScaler,
    preprocess_config: PreprocessConfig,
    task: TaskSpec,
    max_length: int,
    metadata: Optional[dict] = None,
) -> Path:
    directory = Path(directory)
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    torch.save(model.state_dict(), directory / "weights.pt")
    bundle.save(directory / "vocab.txt")
    scaler.save(directory / "scaler.txt")
    (directory / "preprocess.json").write_text(
        json.dumps(preprocess_config.to_dict(), indent=1), encoding="utf-8"
    )
    meta = {
        "task": task.name,
        "task_kind": task.kind,
        "units": task.units,
        "pooling": model.pooling,
        "encoder": model.encoder.config.to_dict(),
        "max_length": max_length,
        "head_init": f"uniform(±{PredictionHead.INIT_SCALE}), zero bias",
        "vocab_sha256": metrics_mod.file_sha256(directory / "vocab.txt"),
    }
    meta.update(metadata or {})
    (directory / "metadata.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    return directory


def load_checkpoint(directory) -> LoadedCheckpoint:
    directory = Path(directory)
    meta = json.loads((directory / "metadata.json").read_text(encoding="utf-8"))
    bundle = TokenizerBundle.load(directory / "vocab.txt")
    scaler = LabelScaler.load(directory / "scaler.txt")
    preprocess_config = PreprocessConfig.from_dict(
        json.loads((directory / "preprocess.json").read_text(encoding="utf-8"))
    )
    task = TaskSpec(meta["task"], meta["task_kind"], meta["units"])
    encoder_config = EncoderConfig.from_dict(meta["encoder"])
    with torch.random.fork_rng():
        torch.manual_seed(0)
        model = PropertyModel(
            CrystalTextEncoder(encoder_config),
            PredictionHead(encoder_config.hidden_size, task.kind),
            pooling=meta["pooling"],
        )
    state = torch.load(directory / "weights.pt", map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return LoadedCheckpoint(
        model=model,
        bundle=bundle,
        scaler=scaler,
        preprocess_config=preprocess_config,
        task=task,
        max_length=meta["max_length"],
        metadata=meta,
        path=directory,
    )


# --------------------------------------------------------------------------
# data plumbing
# --------------------------------------------------------------------------


def encode_records(
    records: Sequence[CrystalRecord],
    task: TaskSpec,
    preprocess_config: PreprocessConfig,
    bundle: TokenizerBundle,
    max_length: int,
) -> Tuple[List[TokenizedExample], np.ndarray, int]:
    """Preprocess + encode records carrying the task label.

    Returns (examples, raw labels, skipped-for-missing-label count).
    """
    usable = records_with_label(records, task.name)
    skipped = len(records) - len(usable)
    examples = [
        bundle.encode(preprocess(r.description, preprocess_config).text, max_length=max_length)
        for r in usable
    ]
    labels = np.array([float(getattr(r, task.name)) for r in usable], dtype=np.float64)
    return examples, labels, skipped


def _batch_tensors(examples: Sequence[TokenizedExample], device: str):
    width = max((len(ex.ids) for ex in examples), default=1)
    ids, masks = pad_batch(examples, max(width, 1))
    return (
        torch.from_numpy(ids).to(device),
        torch.from_numpy(masks).to(device),
    )


def predict_batched(
    model: PropertyModel,
    examples: Sequence[TokenizedExample],
    batch_size: int = 64,
    device: str = "cpu",
) -> np.ndarray:
    """Deterministic eval-mode predictions (scaled space / probabilities)."""
    model.eval()
    outputs: List[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            ids, masks = _batch_tensors(examples[start : start + batch_size], device)
            outputs.append(model.predict(ids, masks).cpu().numpy())
    if not outputs:
        return np.zeros(0, dtype=np.float64)
    return np.concatenate(outputs).astype(np.float64)


def _validation_metric(
    model: PropertyModel,
    task: TaskSpec,
    scaler: LabelScaler,
    examples: Sequence[TokenizedExample],
    labels: np.ndarray,
    batch_size: int,
    device: str,
) -> float:
    preds = predict_batched(model, examples, batch_size=batch_size, device=device)
    if task.kind == REGRESSION:
        return metrics_mod.mae(scaler.inverse_transform(preds), labels)
    return metrics_mod.roc_auc(preds, labels.astype(np.int64))


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def _build_pipeline(split: DatasetSplit, config: TrainConfig, task: TaskSpec):
    """Resolve tokenizer, preprocessing, scaler and model for a run."""
    train_records = records_with_label(split.train, task.name)
    if not train_records:
        raise ValueError(f"no training records carry label {task.name!r}")

    if config.init_from:
        source = load_checkpoint(config.init_from)
        bundle = source.bundle
        preprocess_config = source.preprocess_config
        model = copy.deepcopy(source.model)
        if source.task.kind != task.kind or source.task.name != task.name:
            # label spaces differ: fresh head, encoder carried over
            with torch.random.fork_rng():
                torch.manual_seed(config.seed)
                head = PredictionHead(model.encoder.config.hidden_size, task.kind)
            model = PropertyModel(model.encoder, head, pooling=model.pooling)
    else:
        preprocess_config = config.preprocess
        train_texts = [
            preprocess(r.description, preprocess_config).text for r in train_records
        ]
        if config.retrain_tokenizer:
            bundle = train_vocab(train_texts, config.vocab_size, max_length=config.max_length)
        else:
            bundle = stock_vocab(max_length=config.max_length)
        encoder_config = EncoderConfig(
            vocab_size=len(bundle),
            hidden_size=config.hidden_size,
            num_layers=config.num_layers,
            num_heads=config.num_heads,
            dropout=config.dropout,
            max_positions=config.max_positions,
            source=config.encoder_source,
        )
        model = build_model(encoder_config, task.kind, pooling=config.pooling)

    if task.kind == REGRESSION:
        scaler = LabelScaler(method=config.scaler_method)
    else:
        scaler = LabelScaler(method="identity")
    scaler.fit([float(getattr(r, task.name)) for r in train_records])
    return model, bundle, preprocess_config, scaler


def train(
    split: DatasetSplit,
    config: TrainConfig,
    run_dir,
) -> Tuple[Path, TrainState]:
    """Run the finetuning loop; returns (best checkpoint dir, state).

    Writes `history` (one line per epoch) and `checkpoints/{best,last}`
    under run_dir; `checkpoints/epoch-N` as well when keep_every_epoch.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    task = get_task(config.task)
    torch.manual_seed(config.seed)

    model, bundle, preprocess_config, scaler = _build_pipeline(split, config, task)
    device = config.device
    model.to(device)

    train_examples, train_labels_raw, _ = encode_records(
        split.train, task, preprocess_config, bundle, config.max_length
    )
    val_examples, val_labels_raw, _ = encode_records(
        split.validation, task, preprocess_config, bundle, config.max_length
    )
    if task.kind == REGRESSION:
        train_targets = scaler.transform(train_labels_raw)
    else:
        train_targets = train_labels_raw

    n_train = len(train_examples)
    steps_per_epoch = max(1, math.ceil(n_train / config.batch_size))
    total_steps = max(1, config.epochs * steps_per_epoch)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_max)
    state = TrainState()
    checkpoints_dir = run_dir / "checkpoints"

    def _save(name: str, epoch: int, val_metric: float) -> Path:
        return save_checkpoint(
            checkpoints_dir / name,
            model,
            bundle,
            scaler,
            preprocess_config,
            task,
            config.max_length,
            metadata={
                "epoch": epoch,
                "val_metric": None if math.isnan(val_metric) else val_metric,
                "seed": config.seed,
                "scaler_method": scaler.method,
            },
        )

    if config.epochs == 0:
        best_dir = _save("best", 0, math.nan)
        _save("last", 0, math.nan)
        _write_history(run_dir, state.history)
        return best_dir, state

    better = (lambda a, b: a > b) if task.higher_is_better else (lambda a, b: a < b)

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = np.random.default_rng([config.seed, epoch]).permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            ids, masks = _batch_tensors([train_examples[i] for i in batch_idx], device)
            targets = torch.as_tensor(
                train_targets[batch_idx], dtype=torch.float32, device=device
            )
            lr = onecycle_lr(
                state.step,
                total_steps,
                config.lr_max,
                config.onecycle.pct_warmup,
                config.onecycle.final_fraction,
            )
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            raw = model(ids, masks)
            if task.kind == REGRESSION:
                loss = mae_loss(raw, targets)
            else:
                loss = torch.nn.functional.binary_cross_entropy_with_logits(raw, targets)
            if not torch.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, step {state.step}: {loss.item()}"
                )
            loss.backward()
            if config.grad_clip_norm is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
            optimizer.step()
            state.step += 1
            state.current_lr = lr
            epoch_loss += float(loss.item())
            n_batches += 1

        val_metric = _validation_metric(
            model, task, scaler, val_examples, val_labels_raw, config.batch_size, device
        )
        state.epoch = epoch
        record = EpochRecord(epoch, epoch_loss / n_batches, val_metric, state.current_lr)
        state.history.append(record)

        _save("last", epoch, val_metric)
        if config.keep_every_epoch:
            _save(f"epoch-{epoch}", epoch, val_metric)
        if math.isnan(state.best_val_metric) or better(val_metric, state.best_val_metric):
            state.best_val_metric = val_metric
            state.best_epoch = epoch
            _save("best", epoch, val_metric)

    _write_history(run_dir, state.history)
    return checkpoints_dir / "best", state


def _write_history(run_dir: Path, history: List[EpochRecord]) -> None:
    lines = ["epoch\ttrain_loss\tval_metric\tlr"]
    for rec in history:
        lines.append(f"{rec.epoch}\t{rec.train_loss!r}\t{rec.val_metric!r}\t{rec.lr!r}")
    (run_dir / "history").write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# evaluation entry points
# --------------------------------------------------------------------------


def evaluate(
    checkpoint: Union[LoadedCheckpoint, str, Path],
    records: Sequence[CrystalRecord],
    task: Optional[str] = None,
    batch_size: int = 64,
    device: str = "cpu",
) -> metrics_mod.MetricsReport:
    """Score a checkpoint on records; regression errors in original units."""
    loaded = checkpoint if isinstance(checkpoint, LoadedCheckpoint) else load_checkpoint(checkpoint)
    eval_task = get_task(task) if task else loaded.task
    if eval_task.kind != loaded.task.kind:
        raise ValueError(
            f"checkpoint head is {loaded.task.kind}, cannot evaluate {eval_task.kind} task"
        )
    examples, labels, skipped = encode_records(
        records, eval_task, loaded.preprocess_config, loaded.bundle, loaded.max_length
    )
    if not examples:
        raise ValueError(f"no records carry label {eval_task.name!r}")
    loaded.model.to(device)
    preds = predict_batched(loaded.model, examples, batch_size=batch_size, device=device)
    if eval_task.kind == REGRESSION:
        denorm = loaded.scaler.inverse_transform(preds)
        value = metrics_mod.mae(denorm, labels)
        mean_pred = float(np.mean(denorm))
    else:
        value = metrics_mod.roc_auc(preds, labels.astype(np.int64))
        mean_pred = float(np.mean(preds))
    return metrics_mod.MetricsReport(
        task=eval_task.name,
        metric_name=eval_task.metric_name,
        value=value,
        n=len(examples),
        units=eval_task.units,
        mean_prediction=mean_pred,
        skipped=skipped,
        metadata={
            "checkpoint_task": loaded.task.name,
            "checkpoint_epoch": loaded.metadata.get("epoch", "n/a"),
        },
    )


def zero_shot(
    source: Union[LoadedCheckpoint, str, Path, None],
    records: Sequence[CrystalRecord],
    task: str,
    config: Optional[TrainConfig] = None,
    batch_size: int = 64,
    device: str = "cpu",
) -> metrics_mod.MetricsReport:
    """Evaluate with no gradient updates on the target task's training data.

    With a checkpoint source the model is applied as-is. With source=None a
    fresh randomly-initialized model (random head; identity scaler) is
    built from `config`, using the records' own texts for the vocabulary.
    """
    if source is not None:
        loaded = source if isinstance(source, LoadedCheckpoint) else load_checkpoint(source)
        report = evaluate(loaded, records, task=task, batch_size=batch_size, device=device)
        report.metadata["zero_shot_head"] = "from-checkpoint"
        return report
    if config is None:
        raise ValueError("zero_shot without a source checkpoint needs a TrainConfig")
    eval_task = get_task(task)
    usable = records_with_label(records, eval_task.name)
    if not usable:
        raise ValueError(f"no records carry label {eval_task.name!r}")
    preprocess_config = config.preprocess
    texts = [preprocess(r.description, preprocess_config).text for r in usable]
    if config.retrain_tokenizer:
        bundle = train_vocab(texts, config.vocab_size, max_length=config.max_length)
    else:
        bundle = stock_vocab(max_length=config.max_length)
    encoder_config = EncoderConfig(
        vocab_size=len(bundle),
        hidden_size=config.hidden_size,
        num_layers=config.num_layers,
        num_heads=config.num_heads,
        dropout=config.dropout,
        max_positions=config.max_positions,
        source=config.encoder_source,
    )
    model = build_model(encoder_config, eval_task.kind, pooling=config.pooling)
    scaler = LabelScaler(method="identity")
    scaler.fit([0.0, 1.0])
    loaded = LoadedCheckpoint(
        model=model,
        bundle=bundle,
        scaler=scaler,
        preprocess_config=preprocess_config,
        task=eval_task,
        max_length=config.max_length,
        metadata={"epoch": 0},
    )
    report = evaluate(loaded, records, task=task, batch_size=batch_size, device=device)
    report.metadata["zero_shot_head"] = "random"
    return report


def transfer_train(
    source_checkpoint: Union[str, Path],
    split: DatasetSplit,
    config: TrainConfig,
    run_dir,
) -> Tuple[Path, TrainState]:
    """Initialize from a finetuned checkpoint, re-fit the scaler, train.

    The source's tokenizer and preprocessing travel with its encoder; the
    head is re-initialized when the target task differs.
    """
    return train(split, replace(config, init_from=str(source_checkpoint)), run_dir)
