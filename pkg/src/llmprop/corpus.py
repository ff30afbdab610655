"""Dataset ingestion, validation, splitting and subsampling.

The benchmark file is either delimited text with a header (CSV/TSV) or
one JSON record per line. A schema mapping names the five logical fields
(id, formula, description, band_gap, volume, is_gap_direct) so exports
with different column names can be ingested without rewriting them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

REQUIRED_FIELDS = ("id", "formula", "description", "band_gap", "volume", "is_gap_direct")

DEFAULT_SCHEMA: Dict[str, str] = {name: name for name in REQUIRED_FIELDS}

_TRUE_WORDS = {"yes", "true", "1"}
_FALSE_WORDS = {"no", "false", "0"}


class DataError(ValueError):
    """Dataset-level ingestion failure (missing file, missing column)."""


@dataclass(frozen=True)
class CrystalRecord:
    """One crystal: identifier, formula, description and property labels.

    A missing label is stored as None; such records stay in the dataset but
    are skipped by tasks that need the missing label.
    """

    id: str
    formula: str
    description: str
    band_gap: Optional[float] = None
    volume: Optional[float] = None
    is_gap_direct: Optional[bool] = None


@dataclass
class IngestionReport:
    """Row-level accounting for one load_dataset call."""

    n_rows: int = 0
    n_valid: int = 0
    n_rejected: int = 0
    errors: List[Tuple[int, str]] = field(default_factory=list)

    def add_error(self, row: int, reason: str) -> None:
        self.n_rejected += 1
        self.errors.append((row, reason))

    def summary(self) -> str:
        return f"{self.n_valid}/{self.n_rows} rows ingested, {self.n_rejected} rejected"


def _parse_gap_direct(raw) -> Optional[bool]:
    if raw is None:
        return None
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float)) and raw in (0, 1):
        return bool(raw)
    word = str(raw).strip().lower()
    if word == "":
        return None
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ValueError(f"unrecognized is_gap_direct value {raw!r}")


def _parse_label(raw, name: str) -> Optional[float]:
    if raw is None:
        return None
    if isinstance(raw, str) and raw.strip() == "":
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ValueError(f"unparseable {name} value {raw!r}") from None


def _row_to_record(row: dict, schema: Dict[str, str], row_no: int) -> CrystalRecord:
    values = {}
    for logical, column in schema.items():
        if column not in row:
            raise DataError(f"missing required column/key {column!r}")
        values[logical] = row[column]
    description = str(values["description"] or "").strip()
    if not description:
        raise ValueError("empty description")
    band_gap = _parse_label(values["band_gap"], "band_gap")
    volume = _parse_label(values["volume"], "volume")
    if band_gap is not None and band_gap < 0:
        raise ValueError(f"band_gap must be >= 0, got {band_gap}")
    if volume is not None and volume <= 0:
        raise ValueError(f"volume must be > 0, got {volume}")
    record_id = str(values["id"]).strip()
    if not record_id:
        raise ValueError("empty id")
    return CrystalRecord(
        id=record_id,
        formula=str(values["formula"]).strip(),
        description=description,
        band_gap=band_gap,
        volume=volume,
        is_gap_direct=_parse_gap_direct(values["is_gap_direct"]),
    )


def _iter_rows(path: Path, fmt: str):
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as f:
            for row_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                yield row_no, json.loads(line)
    else:
        delimiter = "\t" if fmt == "tsv" else ","
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f, delimiter=delimiter)
            for row_no, row in enumerate(reader, start=1):
                yield row_no, row


def _detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    if suffix == ".tsv":
        return "tsv"
    if suffix == ".csv":
        return "csv"
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    if first.lstrip().startswith("{"):
        return "jsonl"
    return "tsv" if "\t" in first else "csv"


def load_dataset(
    path,
    schema: Optional[Dict[str, str]] = None,
    fmt: str = "auto",
) -> Tuple[List[CrystalRecord], IngestionReport]:
    """Load and validate the benchmark file.

    Returns all valid records plus a report of rejected rows (row number
    and reason). Duplicate ids and rows violating label constraints are
    rejected, never silently dropped.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    unknown = set(schema) - set(REQUIRED_FIELDS)
    if unknown:
        raise DataError(f"schema maps unknown fields: {sorted(unknown)}")
    if fmt == "auto":
        fmt = _detect_format(path)

    records: List[CrystalRecord] = []
    report = IngestionReport()
    seen_ids = set()
    for row_no, row in _iter_rows(path, fmt):
        report.n_rows += 1
        try:
            record = _row_to_record(row, schema, row_no)
        except DataError:
            raise
        except (ValueError, json.JSONDecodeError) as exc:
            report.add_error(row_no, str(exc))
            continue
        if record.id in seen_ids:
            report.add_error(row_no, f"duplicate id {record.id!r}")
            continue
        seen_ids.add(record.id)
        records.append(record)
        report.n_valid += 1
    return records, report


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test partition of a record list."""

    train: Tuple[CrystalRecord, ...]
    validation: Tuple[CrystalRecord, ...]
    test: Tuple[CrystalRecord, ...]
    split_seed: int

    def __post_init__(self):
        ids = [r.id for part in (self.train, self.validation, self.test) for r in part]
        if len(ids) != len(set(ids)):
            raise ValueError("split members must be pairwise disjoint by id")

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return (len(self.train), len(self.validation), len(self.test))

    def part(self, name: str) -> Tuple[CrystalRecord, ...]:
        try:
            return {"train": self.train, "validation": self.validation, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split part {name!r}") from None


def split_dataset(
    records: Sequence[CrystalRecord],
    fractions: Tuple[float, float, float],
    seed: int,
) -> DatasetSplit:
    """Seeded random partition into train/validation/test.

    Record order is shuffled with a seeded permutation, then cut so each
    part's size matches its fraction to within one record (cumulative
    rounding). Same records + same seed => identical partition.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    if len(records) < 3:
        raise ValueError(f"need at least 3 records to split, got {len(records)}")
    n = len(records)
    perm = np.random.default_rng(seed).permutation(n)
    cut1 = int(round(n * fractions[0]))
    cut2 = int(round(n * (fractions[0] + fractions[1])))
    cut1, cut2 = min(cut1, n), min(max(cut2, cut1), n)
    shuffled = [records[i] for i in perm]
    return DatasetSplit(
        train=tuple(shuffled[:cut1]),
        validation=tuple(shuffled[cut1:cut2]),
        test=tuple(shuffled[cut2:]),
        split_seed=seed,
    )


def subsample_train(split: DatasetSplit, n: int, seed: int) -> DatasetSplit:
    """Draw n training records without replacement; val/test unchanged."""
    if not 1 <= n <= len(split.train):
        raise ValueError(f"n must be in [1, {len(split.train)}], got {n}")
    idx = np.random.default_rng(seed).choice(len(split.train), size=n, replace=False)
    return DatasetSplit(
        train=tuple(split.train[i] for i in idx),
        validation=split.validation,
        test=split.test,
        split_seed=split.split_seed,
    )


def write_split_manifest(split: DatasetSplit, path) -> None:
    """One line per record: '<id>\\t<split-name>'."""
    lines = []
    for name in ("train", "validation", "test"):
        for record in split.part(name):
            lines.append(f"{record.id}\t{name}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def apply_split_manifest(records: Sequence[CrystalRecord], path) -> DatasetSplit:
    """Rebuild an exact split from a manifest written earlier."""
    assignment: Dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record_id, _, name = line.partition("\t")
        if name not in ("train", "validation", "test"):
            raise DataError(f"manifest names unknown split {name!r}")
        assignment[record_id] = name
    parts: Dict[str, List[CrystalRecord]] = {"train": [], "validation": [], "test": []}
    for record in records:
        name = assignment.get(record.id)
        if name is None:
            raise DataError(f"record {record.id!r} missing from split manifest")
        parts[name].append(record)
    return DatasetSplit(
        train=tuple(parts["train"]),
        validation=tuple(parts["validation"]),
        test=tuple(parts["test"]),
        split_seed=-1,
    )


def records_with_label(records: Sequence[CrystalRecord], label: str) -> List[CrystalRecord]:
    """Records carrying the given label; others are excluded, not errors."""
    return [r for r in records if getattr(r, label) is not None]
