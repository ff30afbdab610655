"""Vocabulary training, atomic special tokens, truncation and persistence."""

import numpy as np
import pytest

from llmprop.textprep import PreprocessConfig, preprocess
from llmprop.tokenizer import (
    MAX_LENGTH_SHORT,
    SPECIAL_TOKEN_IDS,
    SubwordTokenizer,
    TokenizedExample,
    TokenizerBundle,
    pad_batch,
    stock_vocab,
    train_vocab,
)

from conftest import BENCHMARK_NAMES


@pytest.fixture(scope="module")
def benchmark_bundle(benchmark_descriptions):
    texts = [
        preprocess(t, PreprocessConfig()).text for t in benchmark_descriptions.values()
    ]
    return train_vocab(texts, 400), texts


class TestTrainVocab:
    def test_deterministic(self, benchmark_descriptions):
        corpus = list(benchmark_descriptions.values())
        a = train_vocab(corpus, 300)
        b = train_vocab(corpus, 300)
        assert a.vocab == b.vocab

    def test_target_size_reached_on_rich_corpus(self):
        corpus = [f"token{i} piece{i % 17} word{i % 29}" for i in range(400)]
        bundle = train_vocab(corpus, 200)
        assert len(bundle) == 200

    def test_degenerate_corpus_minimum(self):
        bundle = train_vocab(["a"], 7)
        assert "a" in bundle.vocab
        for token, token_id in SPECIAL_TOKEN_IDS.items():
            assert bundle.vocab[token] == token_id

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            train_vocab([], 100)
        with pytest.raises(ValueError):
            train_vocab(["   "], 100)

    def test_vocab_size_too_small(self):
        with pytest.raises(ValueError):
            train_vocab(["abc"], 8)

    def test_ids_contiguous(self, benchmark_bundle):
        bundle, _ = benchmark_bundle
        assert sorted(bundle.vocab.values()) == list(range(len(bundle)))


class TestEncode:
    def test_special_tokens_atomic(self, benchmark_bundle):
        bundle, _ = benchmark_bundle
        ex = bundle.encode("[CLS] [NUM] [ANG]")
        assert ex.ids == (0, 1, 2)

    def test_truncation_keeps_front(self):
        corpus = ["[CLS] " + " ".join(f"w{i}" for i in range(50))]
        bundle = train_vocab(corpus, 200)
        long_text = corpus[0]
        full = bundle.encode(long_text)
        cut = bundle.encode(long_text, max_length=10)
        assert len(cut.ids) == 10
        assert cut.original_length == full.original_length > 10
        assert cut.ids[0] == SPECIAL_TOKEN_IDS["[CLS]"]

    def test_empty_text(self, benchmark_bundle):
        bundle, _ = benchmark_bundle
        ex = bundle.encode("")
        assert ex.ids == () and ex.attention_mask == () and ex.original_length == 0

    def test_unknown_characters_map_to_unk(self, benchmark_bundle):
        bundle, _ = benchmark_bundle
        ex = bundle.encode("☃")  # snowman is not in any description
        assert SPECIAL_TOKEN_IDS["<unk>"] in ex.ids

    @pytest.mark.parametrize("name", BENCHMARK_NAMES)
    def test_truncation_prefix_property(self, benchmark_bundle, benchmark_descriptions, name):
        bundle, _ = benchmark_bundle
        text = preprocess(benchmark_descriptions[name], PreprocessConfig()).text
        short = bundle.encode(text, max_length=MAX_LENGTH_SHORT)
        long = bundle.encode(text, max_length=888)
        assert long.ids[: len(short.ids)] == short.ids
        assert len(short.ids) <= MAX_LENGTH_SHORT
        assert len(long.ids) <= 888

    def test_mask_is_all_ones_before_padding(self, benchmark_bundle):
        bundle, texts = benchmark_bundle
        ex = bundle.encode(texts[0])
        assert set(ex.attention_mask) == {1}
        assert len(ex.ids) == len(ex.attention_mask)

    @pytest.mark.parametrize("name", BENCHMARK_NAMES)
    def test_decode_recovers_words(self, benchmark_bundle, benchmark_descriptions, name):
        bundle, _ = benchmark_bundle
        text = preprocess(benchmark_descriptions[name], PreprocessConfig()).text
        decoded = bundle.decode(bundle.encode(text).ids)
        # specials verbatim; words recovered up to subword join artifacts
        assert "[CLS]" in decoded
        assert "".join(decoded.split()) == "".join(text.split())

    @pytest.mark.parametrize("name", BENCHMARK_NAMES)
    def test_decode_recovers_raw_descriptions(self, benchmark_descriptions, name):
        # vocabulary trained on the raw texts (units and charges included)
        raw_texts = list(benchmark_descriptions.values())
        bundle = train_vocab(raw_texts, 500)
        text = benchmark_descriptions[name]
        decoded = bundle.decode(bundle.encode(text).ids)
        assert "".join(decoded.split()) == "".join(text.split())

    def test_no_pad_id_under_active_mask(self, benchmark_bundle):
        bundle, texts = benchmark_bundle
        examples = [bundle.encode(t) for t in texts]
        ids, masks = pad_batch(examples, max(len(e.ids) for e in examples))
        pad_id = SPECIAL_TOKEN_IDS["<pad>"]
        assert not np.any((ids == pad_id) & (masks == 1))


class TestPadBatch:
    def test_rectangular_shapes(self):
        a = TokenizedExample(ids=(5, 6, 7), attention_mask=(1, 1, 1), original_length=3)
        b = TokenizedExample(ids=(5, 6, 7, 8, 9), attention_mask=(1,) * 5, original_length=5)
        ids, masks = pad_batch([a, b], 5)
        assert ids.shape == (2, 5) and masks.shape == (2, 5)
        assert list(masks[0]) == [1, 1, 1, 0, 0]
        assert list(ids[0][3:]) == [SPECIAL_TOKEN_IDS["<pad>"]] * 2

    def test_noop_padding(self):
        a = TokenizedExample(ids=(5, 6), attention_mask=(1, 1), original_length=2)
        ids, masks = pad_batch([a], 2)
        assert list(ids[0]) == [5, 6] and list(masks[0]) == [1, 1]

    def test_empty_batch(self):
        ids, masks = pad_batch([], 4)
        assert ids.shape == (0, 4) and masks.shape == (0, 4)

    def test_overlong_example_rejected(self):
        a = TokenizedExample(ids=(1, 2, 3), attention_mask=(1, 1, 1), original_length=3)
        with pytest.raises(ValueError):
            pad_batch([a], 2)


class TestPersistence:
    def test_vocab_file_roundtrip(self, benchmark_bundle, tmp_path):
        bundle, texts = benchmark_bundle
        path = tmp_path / "vocab.txt"
        bundle.save(path)
        restored = TokenizerBundle.load(path)
        assert restored.vocab == bundle.vocab
        assert restored.max_length == bundle.max_length
        for text in texts:
            assert restored.encode(text).ids == bundle.encode(text).ids

    def test_file_format(self, benchmark_bundle, tmp_path):
        bundle, _ = benchmark_bundle
        path = tmp_path / "vocab.txt"
        bundle.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        header = [l for l in lines if l.startswith("#")]
        assert any("[CLS]\t0" in l for l in header)
        body = [l for l in lines if not l.startswith("#")]
        token, token_id = body[0].rsplit("\t", 1)
        assert token == "[CLS]" and token_id == "0"


class TestStockVocab:
    def test_roundtrip_with_hash_token(self, tmp_path):
        # the '#' character token must survive the commented header format
        bundle = stock_vocab()
        path = tmp_path / "vocab.txt"
        bundle.save(path)
        restored = TokenizerBundle.load(path)
        assert restored.vocab == bundle.vocab
        assert restored.encode("# note").ids == bundle.encode("# note").ids

    def test_covers_ascii_descriptions(self, benchmark_descriptions):
        bundle = stock_vocab()
        text = preprocess(benchmark_descriptions["nacl"], PreprocessConfig()).text
        ex = bundle.encode(text)
        assert SPECIAL_TOKEN_IDS["<unk>"] not in ex.ids
        assert "".join(bundle.decode(ex.ids).split()) == "".join(text.split())

    def test_deterministic_without_corpus(self):
        assert stock_vocab().vocab == stock_vocab().vocab


class TestSubwordTokenizerEstimator:
    def test_fit_transform(self, benchmark_descriptions):
        texts = list(benchmark_descriptions.values())
        tok = SubwordTokenizer(vocab_size=300, max_length=64)
        examples = tok.fit(texts).transform(texts)
        assert all(isinstance(e, TokenizedExample) for e in examples)
        assert all(len(e.ids) <= 64 for e in examples)

    def test_not_fitted(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            SubwordTokenizer().transform(["x"])

    def test_get_params(self):
        tok = SubwordTokenizer(vocab_size=123)
        assert tok.get_params()["vocab_size"] == 123
