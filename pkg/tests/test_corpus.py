"""Ingestion, validation, splitting and subsampling."""

import json

import pytest

from llmprop.corpus import (
    CrystalRecord,
    DataError,
    DatasetSplit,
    apply_split_manifest,
    load_dataset,
    split_dataset,
    subsample_train,
    write_split_manifest,
)

from conftest import make_records

HEADER = "id,formula,description,band_gap,volume,is_gap_direct"


def write_csv(path, rows):
    path.write_text("\n".join([HEADER] + rows) + "\n", encoding="utf-8")
    return path


class TestLoadDataset:
    def test_benchmark_style_row(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            ['mp-22851,NaCl,"NaCl is Tetraauricupride structured...",3.97,42.96,No'],
        )
        records, report = load_dataset(path)
        assert report.n_valid == 1 and report.n_rejected == 0
        [rec] = records
        assert rec == CrystalRecord(
            id="mp-22851",
            formula="NaCl",
            description="NaCl is Tetraauricupride structured...",
            band_gap=3.97,
            volume=42.96,
            is_gap_direct=False,
        )

    def test_empty_file(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", [])
        records, report = load_dataset(path)
        assert records == [] and report.n_rejected == 0

    def test_negative_band_gap_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            ["mp-1,A,descr one,-1.0,10.0,Yes", "mp-2,B,descr two,1.0,10.0,Yes"],
        )
        records, report = load_dataset(path)
        assert [r.id for r in records] == ["mp-2"]
        assert report.n_rejected == 1
        assert "band_gap" in report.errors[0][1]

    def test_nonpositive_volume_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["mp-1,A,descr,1.0,0.0,No"])
        _, report = load_dataset(path)
        assert report.n_rejected == 1

    def test_empty_description_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["mp-1,A,   ,1.0,10.0,No"])
        _, report = load_dataset(path)
        assert report.n_rejected == 1

    def test_missing_label_kept_as_none(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["mp-1,A,descr,,10.0,No"])
        records, report = load_dataset(path)
        assert report.n_rejected == 0
        assert records[0].band_gap is None

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            ["mp-1,A,descr,1.0,10.0,No", "mp-1,B,other,2.0,20.0,Yes"],
        )
        records, report = load_dataset(path)
        assert len(records) == 1 and report.n_rejected == 1

    def test_unparseable_numeric_is_row_error(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["mp-1,A,descr,abc,10.0,No"])
        _, report = load_dataset(path)
        assert report.n_rejected == 1
        assert "band_gap" in report.errors[0][1]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "absent.csv")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,formula\nmp-1,A\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_dataset(path)

    def test_schema_mapping(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            "mid,comp,text,gap,vol,direct\nmp-1,NaCl,some text,1.0,10.0,true\n",
            encoding="utf-8",
        )
        records, _ = load_dataset(
            path,
            schema={
                "id": "mid",
                "formula": "comp",
                "description": "text",
                "band_gap": "gap",
                "volume": "vol",
                "is_gap_direct": "direct",
            },
        )
        assert records[0].id == "mp-1" and records[0].is_gap_direct is True

    def test_jsonl_format(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rows = [
            {"id": "mp-1", "formula": "A", "description": "x y", "band_gap": 1.0,
             "volume": 2.0, "is_gap_direct": 1},
            {"id": "mp-2", "formula": "B", "description": "z", "band_gap": 0.0,
             "volume": 3.0, "is_gap_direct": False},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        records, report = load_dataset(path)
        assert report.n_valid == 2
        assert records[0].is_gap_direct is True and records[1].is_gap_direct is False

    def test_tsv_format(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text(
            HEADER.replace(",", "\t") + "\nmp-1\tA\tsome, text\t1.0\t10.0\tYES\n",
            encoding="utf-8",
        )
        records, _ = load_dataset(path)
        assert records[0].description == "some, text"
        assert records[0].is_gap_direct is True

    @pytest.mark.parametrize("raw,expected", [
        ("Yes", True), ("no", False), ("TRUE", True), ("false", False),
        ("1", True), ("0", False),
    ])
    def test_gap_direct_spellings(self, tmp_path, raw, expected):
        path = write_csv(tmp_path / "d.csv", [f"mp-1,A,descr,1.0,10.0,{raw}"])
        records, _ = load_dataset(path)
        assert records[0].is_gap_direct is expected

    def test_idempotent_load(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            [f"mp-{i},A,descr {i},1.0,10.0,No" for i in range(20)],
        )
        first, _ = load_dataset(path)
        second, _ = load_dataset(path)
        assert first == second


class TestSplitDataset:
    def test_fraction_sum_validated(self):
        with pytest.raises(ValueError):
            split_dataset(make_records(10), (0.8, 0.1, 0.2), seed=0)

    def test_too_few_records(self):
        with pytest.raises(ValueError):
            split_dataset(make_records(2), (0.8, 0.1, 0.1), seed=0)

    def test_exact_fractions_ten_records(self):
        split = split_dataset(make_records(10), (0.8, 0.1, 0.1), seed=0)
        assert split.sizes == (8, 1, 1)

    def test_benchmark_proportions(self):
        n = 144931
        records = [
            CrystalRecord(id=str(i), formula="", description="d", band_gap=0.0)
            for i in range(n)
        ]
        fractions = (125098 / n, 9945 / n, 9888 / n)
        split = split_dataset(records, fractions, seed=3)
        assert split.sizes == (125098, 9945, 9888)

    def test_deterministic_under_seed(self):
        records = make_records(10)
        a = split_dataset(records, (0.8, 0.1, 0.1), seed=7)
        b = split_dataset(records, (0.8, 0.1, 0.1), seed=7)
        for name in ("train", "validation", "test"):
            assert [r.id for r in a.part(name)] == [r.id for r in b.part(name)]

    def test_different_seed_differs(self):
        records = make_records(200)
        a = split_dataset(records, (0.8, 0.1, 0.1), seed=1)
        b = split_dataset(records, (0.8, 0.1, 0.1), seed=2)
        assert {r.id for r in a.train} != {r.id for r in b.train}

    def test_partition_is_exhaustive_and_disjoint(self):
        records = make_records(53)
        split = split_dataset(records, (0.6, 0.2, 0.2), seed=11)
        train = {r.id for r in split.train}
        val = {r.id for r in split.validation}
        test = {r.id for r in split.test}
        assert train | val | test == {r.id for r in records}
        assert not (train & val) and not (train & test) and not (val & test)

    def test_disjointness_enforced_at_construction(self):
        records = make_records(4)
        with pytest.raises(ValueError):
            DatasetSplit(
                train=tuple(records[:2]),
                validation=tuple(records[1:3]),
                test=(records[3],),
                split_seed=0,
            )


class TestSubsampleTrain:
    def test_full_sample_is_identity_as_set(self):
        split = split_dataset(make_records(20), (0.8, 0.1, 0.1), seed=0)
        sub = subsample_train(split, len(split.train), seed=1)
        assert {r.id for r in sub.train} == {r.id for r in split.train}

    def test_exact_size_and_untouched_val_test(self):
        split = split_dataset(make_records(40), (0.8, 0.1, 0.1), seed=0)
        sub = subsample_train(split, 5, seed=2)
        assert len(sub.train) == 5
        assert len({r.id for r in sub.train}) == 5
        assert sub.validation == split.validation
        assert sub.test == split.test

    def test_deterministic(self):
        split = split_dataset(make_records(13), (0.8, 0.1, 0.1), seed=0)
        a = subsample_train(split, 3, seed=9)
        b = subsample_train(split, 3, seed=9)
        assert [r.id for r in a.train] == [r.id for r in b.train]

    def test_out_of_range(self):
        split = split_dataset(make_records(10), (0.8, 0.1, 0.1), seed=0)
        with pytest.raises(ValueError):
            subsample_train(split, 0, seed=0)
        with pytest.raises(ValueError):
            subsample_train(split, 9, seed=0)


class TestSplitManifest:
    def test_roundtrip(self, tmp_path):
        records = make_records(12)
        split = split_dataset(records, (0.5, 0.25, 0.25), seed=4)
        path = tmp_path / "manifest.tsv"
        write_split_manifest(split, path)
        restored = apply_split_manifest(records, path)
        for name in ("train", "validation", "test"):
            assert [r.id for r in restored.part(name)] == sorted(
                (r.id for r in split.part(name)),
                key=[r.id for r in records].index,
            )

    def test_format(self, tmp_path):
        split = split_dataset(make_records(4), (0.5, 0.25, 0.25), seed=0)
        path = tmp_path / "manifest.tsv"
        write_split_manifest(split, path)
        for line in path.read_text(encoding="utf-8").splitlines():
            record_id, name = line.split("\t")
            assert name in ("train", "validation", "test")
            assert record_id.startswith("mp-")

    def test_unknown_record_raises(self, tmp_path):
        records = make_records(4)
        split = split_dataset(records, (0.5, 0.25, 0.25), seed=0)
        path = tmp_path / "manifest.tsv"
        write_split_manifest(split, path)
        stranger = make_records(6)[5]
        with pytest.raises(DataError):
            apply_split_manifest(records + [stranger], path)
