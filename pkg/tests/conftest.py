import numpy as np
import pytest

from llmprop.corpus import CrystalRecord, DatasetSplit
from llmprop.trainer import OneCycleConfig, TrainConfig

from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = DATA_DIR / "golden"

BENCHMARK_NAMES = ("nacl", "acbro", "sbse3n2cl7")


@pytest.fixture(scope="session")
def benchmark_descriptions():
    """The three example descriptions shipped as golden-test fixtures."""
    return {
        name: (GOLDEN_DIR / f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")
        for name in BENCHMARK_NAMES
    }


def synthetic_description(i: int) -> str:
    kinds = ("cubic", "tetragonal", "triclinic", "hexagonal", "monoclinic")
    return (
        f"Material m{i} is type-{i % 9} structured and crystallizes in the "
        f"{kinds[i % len(kinds)]} G{i} space group. "
        f"All A-B bond lengths are {1.5 + 0.07 * (i % 23):.2f} Å. "
        f"Atom a{i} is bonded in a bent {90 + i % 60} degrees geometry to "
        f"{2 + i % 7} equivalent neighbors."
    )


def make_records(n: int, seed: int = 0, with_all_labels: bool = True):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        records.append(
            CrystalRecord(
                id=f"mp-{i}",
                formula=f"X{i}Y",
                description=synthetic_description(i),
                band_gap=float(rng.uniform(0.0, 6.0)),
                volume=float(rng.uniform(10.0, 900.0)),
                is_gap_direct=bool(rng.integers(0, 2)) if with_all_labels else None,
            )
        )
    return records


def make_split(n_train=16, n_val=4, n_test=4, seed=0) -> DatasetSplit:
    records = make_records(n_train + n_val + n_test, seed=seed)
    return DatasetSplit(
        train=tuple(records[:n_train]),
        validation=tuple(records[n_train : n_train + n_val]),
        test=tuple(records[n_train + n_val :]),
        split_seed=seed,
    )


def toy_train_config(**overrides) -> TrainConfig:
    defaults = dict(
        task="band_gap",
        batch_size=8,
        lr_max=5e-3,
        epochs=3,
        max_length=64,
        scaler_method="z_score",
        seed=1,
        onecycle=OneCycleConfig(),
        vocab_size=600,
        retrain_tokenizer=True,
        hidden_size=16,
        num_layers=2,
        num_heads=2,
        dropout=0.0,
        max_positions=256,
        encoder_source="toy-random:1",
        device="cpu",
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)
