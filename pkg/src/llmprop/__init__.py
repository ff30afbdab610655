"""Crystal property prediction from text descriptions.

Pipeline: preprocessed description -> subword tokens -> encoder-only
transformer -> [CLS]-pooled linear head, trained on scaled labels and
evaluated with MAE (regression, original units) or ROC-AUC (binary).
"""

from .corpus import (
    CrystalRecord,
    DatasetSplit,
    IngestionReport,
    apply_split_manifest,
    load_dataset,
    split_dataset,
    subsample_train,
    write_split_manifest,
)
from .estimator import CrystalPropertyClassifier, CrystalPropertyRegressor
from .labelscale import LabelScaler, ScalerFitError, fit_scaler
from .metrics import MetricsReport, mae, roc_auc
from .model import EncoderConfig, PropertyModel, build_model
from .textprep import (
    PreprocessConfig,
    ProcessedText,
    TextPreprocessor,
    default_stopwords,
    prepend_cls,
    preprocess,
    remove_stopwords,
    replace_bond_angles,
    replace_bond_lengths,
)
from .tokenizer import (
    SubwordTokenizer,
    TokenizedExample,
    TokenizerBundle,
    pad_batch,
    stock_vocab,
    train_vocab,
)
from .trainer import (
    OneCycleConfig,
    TrainConfig,
    TrainState,
    bce_loss,
    evaluate,
    load_checkpoint,
    mae_loss,
    onecycle_lr,
    save_checkpoint,
    train,
    transfer_train,
    zero_shot,
)

__version__ = "0.1.0"

__all__ = [
    "CrystalRecord",
    "DatasetSplit",
    "IngestionReport",
    "apply_split_manifest",
    "load_dataset",
    "split_dataset",
    "subsample_train",
    "write_split_manifest",
    "CrystalPropertyClassifier",
    "CrystalPropertyRegressor",
    "LabelScaler",
    "ScalerFitError",
    "fit_scaler",
    "MetricsReport",
    "mae",
    "roc_auc",
    "EncoderConfig",
    "PropertyModel",
    "build_model",
    "PreprocessConfig",
    "ProcessedText",
    "TextPreprocessor",
    "default_stopwords",
    "prepend_cls",
    "preprocess",
    "remove_stopwords",
    "replace_bond_angles",
    "replace_bond_lengths",
    "SubwordTokenizer",
    "TokenizedExample",
    "TokenizerBundle",
    "pad_batch",
    "stock_vocab",
    "train_vocab",
    "OneCycleConfig",
    "TrainConfig",
    "TrainState",
    "bce_loss",
    "evaluate",
    "load_checkpoint",
    "mae_loss",
    "onecycle_lr",
    "save_checkpoint",
    "train",
    "transfer_train",
    "zero_shot",
]
