"""sklearn-style estimators over the full text-to-property pipeline.

CrystalPropertyRegressor / CrystalPropertyClassifier wrap preprocessing,
tokenizer training, label scaling and encoder finetuning behind fit/predict
so the pipeline composes with model selection tools (clone, grid search).
Defaults are sized for desk-scale data; paper-scale settings (888 tokens,
batch 64, 200 epochs) are reachable through the same parameters.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import NotFittedError

from .corpus import CrystalRecord, split_dataset
from .textprep import PreprocessConfig, default_stopwords, preprocess
from .trainer import (
    LoadedCheckpoint,
    OneCycleConfig,
    TrainConfig,
    load_checkpoint,
    predict_batched,
    save_checkpoint,
    train,
)
from .validation import check_labels, check_text_array


class _BasePropertyEstimator(BaseEstimator):
    # carrier field used to slot y into CrystalRecord for the trainer
    _carrier_task: str = "band_gap"

    def __init__(
        self,
        hidden_size: int = 32,
        num_layers: int = 2,
        num_heads: int = 2,
        dropout: float = 0.1,
        max_length: int = 256,
        vocab_size: int = 500,
        batch_size: int = 16,
        lr_max: float = 1e-3,
        epochs: int = 20,
        pct_warmup: float = 0.3,
        final_fraction: float = 0.04,
        scaler_method: str = "z_score",
        replace_num: bool = True,
        replace_ang: bool = True,
        remove_stopwords: bool = True,
        prepend_cls: bool = True,
        retrain_tokenizer: bool = True,
        validation_fraction: float = 0.15,
        seed: int = 0,
        device: str = "cpu",
    ):
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.dropout = dropout
        self.max_length = max_length
        self.vocab_size = vocab_size
        self.batch_size = batch_size
        self.lr_max = lr_max
        self.epochs = epochs
        self.pct_warmup = pct_warmup
        self.final_fraction = final_fraction
        self.scaler_method = scaler_method
        self.replace_num = replace_num
        self.replace_ang = replace_ang
        self.remove_stopwords = remove_stopwords
        self.prepend_cls = prepend_cls
        self.retrain_tokenizer = retrain_tokenizer
        self.validation_fraction = validation_fraction
        self.seed = seed
        self.device = device

    def _scaler_method(self) -> str:
        return "identity"

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            task=self._carrier_task,
            batch_size=self.batch_size,
            lr_max=self.lr_max,
            epochs=self.epochs,
            max_length=self.max_length,
            scaler_method=self._scaler_method(),
            seed=self.seed,
            onecycle=OneCycleConfig(self.pct_warmup, self.final_fraction),
            preprocess=PreprocessConfig(
                replace_num=self.replace_num,
                replace_ang=self.replace_ang,
                remove_stopwords=self.remove_stopwords,
                prepend_cls=self.prepend_cls,
                stopword_list=default_stopwords(),
            ),
            vocab_size=self.vocab_size,
            retrain_tokenizer=self.retrain_tokenizer,
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            dropout=self.dropout,
            encoder_source=f"toy-random:{self.seed}",
            device=self.device,
        )

    def _fit(self, X, y) -> "_BasePropertyEstimator":
        texts = check_text_array(X)
        labels = check_labels(
            y, len(texts), binary=self._carrier_task == "is_gap_direct"
        )
        if len(texts) < 4:
            raise ValueError("need at least 4 samples to carve out a validation set")
        binary = self._carrier_task == "is_gap_direct"
        records = [
            CrystalRecord(
                id=str(i),
                formula="",
                description=text,
                **{self._carrier_task: bool(label) if binary else float(label)},
            )
            for i, (text, label) in enumerate(zip(texts, labels))
        ]
        vf = self.validation_fraction
        split = split_dataset(records, (1.0 - vf, vf, 0.0), seed=self.seed)
        with tempfile.TemporaryDirectory(prefix="llmprop-fit-") as tmp:
            best_dir, state = train(split, self._train_config(), tmp)
            self.checkpoint_ = load_checkpoint(best_dir)
        self.train_state_ = state
        self.n_features_in_ = 1
        return self

    def _check_fitted(self) -> LoadedCheckpoint:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError(f"{type(self).__name__} must be fit before predicting")
        return self.checkpoint_

    def _raw_predictions(self, X) -> np.ndarray:
        ckpt = self._check_fitted()
        texts = check_text_array(X)
        examples = [
            ckpt.bundle.encode(
                preprocess(t, ckpt.preprocess_config).text, max_length=ckpt.max_length
            )
            for t in texts
        ]
        return predict_batched(
            ckpt.model, examples, batch_size=self.batch_size, device=self.device
        )

    def save(self, path) -> Path:
        """Persist the fitted pipeline as a checkpoint directory."""
        ckpt = self._check_fitted()
        return save_checkpoint(
            path,
            ckpt.model,
            ckpt.bundle,
            ckpt.scaler,
            ckpt.preprocess_config,
            ckpt.task,
            ckpt.max_length,
            metadata=ckpt.metadata,
        )

    def load(self, path) -> "_BasePropertyEstimator":
        """Restore a previously saved pipeline into this estimator."""
        self.checkpoint_ = load_checkpoint(path)
        self.n_features_in_ = 1
        return self


class CrystalPropertyRegressor(RegressorMixin, _BasePropertyEstimator):
    """Predict a real-valued property from description text.

    scaler_method selects the label normalization fitted on the training
    portion and inverted at prediction time.
    """

    _carrier_task = "band_gap"

    def _scaler_method(self) -> str:
        return self.scaler_method

    def fit(self, X, y):
        return self._fit(X, y)

    def predict(self, X) -> np.ndarray:
        ckpt = self._check_fitted()
        return np.asarray(ckpt.scaler.inverse_transform(self._raw_predictions(X)))


class CrystalPropertyClassifier(ClassifierMixin, _BasePropertyEstimator):
    """Predict a binary property (e.g. direct vs indirect gap) from text."""

    _carrier_task = "is_gap_direct"

    def fit(self, X, y):
        self._fit(X, y)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        p = self._raw_predictions(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self._raw_predictions(X) > 0.5).astype(int)
