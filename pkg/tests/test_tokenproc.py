import io

import numpy as np
import pytest

from dsu.errors import FormatError, ValidationError
from dsu.tokenproc import (
    BpeModel,
    UnitSequence,
    bitrate,
    bpe_decode,
    bpe_encode,
    bpe_train,
    dedup,
    load_bpe,
    read_units,
    save_bpe,
    write_units,
)


def random_stream(rng, max_len=30, vocab=6):
    return [int(x) for x in rng.integers(0, vocab, size=int(rng.integers(0, max_len)))]


class TestDedup:
    def test_collapses_runs(self):
        assert dedup([5, 5, 3, 3, 3, 7]) == [5, 3, 7]

    def test_empty(self):
        assert dedup([]) == []

    def test_no_adjacent_repeats_unchanged(self):
        assert dedup([1, 2, 1]) == [1, 2, 1]

    def test_idempotent_and_no_adjacent_pairs(self, rng):
        for _ in range(200):
            stream = random_stream(rng)
            once = dedup(stream)
            assert dedup(once) == once
            assert all(a != b for a, b in zip(once, once[1:]))

    def test_lossy_by_design(self):
        # two distinct inputs with the same dedup output: durations are gone
        assert dedup([1, 1]) == dedup([1]) == [1]


class TestBpeTrain:
    def test_hand_example(self):
        model = bpe_train([[1, 2, 1, 2, 3]], 1, base_vocab_size=4)
        assert model.merges == ((1, 2),)
        assert model.vocab_size == 5
        assert bpe_encode([1, 2, 1, 2, 3], model) == [4, 4, 3]

    def test_no_repeating_pair_stops_early(self):
        model = bpe_train([[1, 2, 3, 4]], 10, base_vocab_size=5)
        assert model.merges == ()

    def test_zero_merges_is_identity(self, rng):
        model = bpe_train([[1, 2, 1, 2]], 0, base_vocab_size=3)
        assert model.merges == ()
        for _ in range(10):
            stream = random_stream(rng, vocab=3)
            assert bpe_encode(stream, model) == stream

    def test_tie_breaks_on_smallest_pair(self):
        # (1,2) and (2,1) both occur twice; lexicographic order wins
        model = bpe_train([[2, 1, 2, 1, 2]], 1, base_vocab_size=3)
        assert model.merges == ((1, 2),)

    def test_merge_ids_consecutive(self, rng):
        corpus = [random_stream(rng, vocab=4) for _ in range(20)]
        model = bpe_train(corpus, 10, base_vocab_size=4)
        for i, (left, right) in enumerate(model.merges):
            assert left < 4 + i and right < 4 + i

    def test_merged_tokens_can_remerge(self):
        # after (1,2)->4, the pair (4,4) repeats and merges next
        model = bpe_train([[1, 2, 1, 2, 1, 2, 1, 2]], 2, base_vocab_size=4)
        assert model.merges == ((1, 2), (4, 4))
        assert bpe_encode([1, 2, 1, 2, 1, 2, 1, 2], model) == [5, 5]

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            bpe_train([], 5)

    def test_base_vocab_inferred(self):
        model = bpe_train([[0, 7, 0, 7]], 1)
        assert model.base_vocab_size == 8
        assert model.merges == ((0, 7),)

    def test_unit_outside_base_rejected(self):
        with pytest.raises(ValueError):
            bpe_train([[5]], 1, base_vocab_size=3)


class TestBpeCodec:
    def test_decode_example(self):
        model = BpeModel(4, ((1, 2),))
        assert bpe_decode([4, 3], model) == [1, 2, 3]

    def test_identity_on_base_tokens(self):
        model = BpeModel(4, ((1, 2),))
        assert bpe_decode([0, 1, 2, 3], model) == [0, 1, 2, 3]

    def test_nested_merge_decoding(self):
        model = BpeModel(3, ((0, 1), (3, 2), (4, 4)))
        assert bpe_decode([5], model) == [0, 1, 2, 0, 1, 2]

    def test_roundtrip_thousand_random_cases(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            vocab = int(rng.integers(2, 8))
            corpus = [random_stream(rng, vocab=vocab) for _ in range(int(rng.integers(1, 6)))]
            model = bpe_train(corpus, int(rng.integers(0, 8)), base_vocab_size=vocab)
            stream = random_stream(rng, vocab=vocab)
            assert bpe_decode(bpe_encode(stream, model), model) == stream

    def test_token_count_non_increasing_in_merges(self, rng):
        corpus = [random_stream(rng, max_len=40, vocab=4) for _ in range(10)]
        stream = random_stream(rng, max_len=40, vocab=4)
        previous = len(stream)
        for merges in range(8):
            model = bpe_train(corpus, merges, base_vocab_size=4)
            count = len(bpe_encode(stream, model))
            assert count <= previous
            previous = count

    def test_out_of_range_rejected(self):
        model = BpeModel(4, ((1, 2),))
        with pytest.raises(ValueError):
            bpe_encode([4], model)  # merged id is not a base unit
        with pytest.raises(ValueError):
            bpe_decode([5], model)

    def test_invalid_model_rejected(self):
        with pytest.raises(ValidationError):
            BpeModel(3, ((1, 5),))  # right token not yet defined


class TestBitrate:
    def test_arithmetic(self):
        # 100 tokens, vocab 1024 -> 10 bits each, over 10 s
        assert bitrate([[0] * 100], 1024, 10.0) == pytest.approx(100.0)

    def test_empty_corpus(self):
        assert bitrate([], 16, 5.0) == 0.0

    def test_three_fold_reduction_from_dedup(self, rng):
        # streams built as exact 3x repeats: dedup divides the count exactly by 3
        for _ in range(50):
            base = dedup(random_stream(rng, vocab=5))
            repeated = [unit for unit in base for _ in range(3)]
            if not base:
                continue
            raw = bitrate([repeated], 32, 7.5)
            deduped = bitrate([dedup(repeated)], 32, 7.5)
            assert dedup(repeated) == base
            assert raw == pytest.approx(3.0 * deduped)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            bitrate([[1]], 1, 1.0)
        with pytest.raises(ValueError):
            bitrate([[1]], 4, 0.0)


class TestUnitsIO:
    def test_roundtrip(self, tmp_path):
        seqs = [UnitSequence("a", (1, 2, 3)), UnitSequence("b", ()), UnitSequence("c", (9,))]
        path = tmp_path / "units.tsv"
        write_units(seqs, path)
        assert read_units(path) == seqs

    def test_stream_roundtrip(self):
        seqs = [UnitSequence("x", (4, 4, 0))]
        buf = io.StringIO()
        write_units(seqs, buf)
        buf.seek(0)
        assert read_units(buf) == seqs

    def test_duplicate_id_rejected(self):
        with pytest.raises(FormatError):
            read_units(io.StringIO("a\t1\na\t2\n"))

    def test_bad_tokens_rejected(self):
        with pytest.raises(FormatError):
            read_units(io.StringIO("a\t1 x 2\n"))


class TestBpeModelIO:
    def test_roundtrip(self, tmp_path, rng):
        corpus = [random_stream(rng, vocab=5) for _ in range(10)]
        model = bpe_train(corpus, 6, base_vocab_size=5)
        path = tmp_path / "merges.model"
        save_bpe(model, path)
        back = load_bpe(path)
        assert back == model

    def test_bad_header_rejected(self):
        with pytest.raises(FormatError):
            load_bpe(io.StringIO("not-a-model\n"))

    def test_non_consecutive_ids_rejected(self):
        with pytest.raises(FormatError):
            load_bpe(io.StringIO("dsu-bpe v1 4\n1 2 9\n"))
