import itertools

import numpy as np
import pytest

from conftest import brute_force_ctc_loss, central_difference_grad, relative_error
from dsu.ctc import LabelVocab, ctc_grad, ctc_loss, greedy_decode, min_frames
from dsu.errors import InfeasibleTargetError, ValidationError


class TestCtcLoss:
    def test_single_frame_uniform(self):
        loss = ctc_loss(np.zeros((1, 2)), [1])
        assert loss == pytest.approx(-np.log(0.5), abs=1e-12)
        assert loss == pytest.approx(0.693147, abs=1e-6)

    def test_two_frames_uniform(self):
        # valid paths: aa, a-, -a out of 4 -> P = 3/4
        loss = ctc_loss(np.zeros((2, 2)), [1])
        assert loss == pytest.approx(-np.log(0.75), abs=1e-12)
        assert loss == pytest.approx(0.287682, abs=1e-6)

    def test_repeated_label_needs_three_frames(self):
        with pytest.raises(InfeasibleTargetError):
            ctc_loss(np.zeros((1, 2)), [1, 1])
        with pytest.raises(InfeasibleTargetError):
            ctc_loss(np.zeros((2, 2)), [1, 1])
        ctc_loss(np.zeros((3, 2)), [1, 1])  # feasible

    def test_empty_target_is_all_blank_probability(self):
        logits = np.log(np.array([[0.25, 0.75], [0.5, 0.5]]))
        loss = ctc_loss(logits, [])
        assert loss == pytest.approx(-np.log(0.25 * 0.5), abs=1e-12)

    def test_matches_brute_force_exhaustively(self):
        # every target up to length 2, every vocab size up to 3, every T up to 4
        rng = np.random.default_rng(99)
        for vocab_size in (2, 3):
            labels = range(1, vocab_size)
            targets = [[]]
            targets += [[a] for a in labels]
            targets += [[a, b] for a in labels for b in labels]
            for num_frames in range(1, 5):
                for target in targets:
                    logits = rng.standard_normal((num_frames, vocab_size)) * 2.0
                    if num_frames < min_frames(target):
                        with pytest.raises(InfeasibleTargetError):
                            ctc_loss(logits, target)
                        continue
                    expected = brute_force_ctc_loss(logits, target)
                    assert ctc_loss(logits, target) == pytest.approx(expected, abs=1e-9)

    def test_loss_nonnegative(self, rng):
        for _ in range(50):
            num_frames = int(rng.integers(1, 8))
            vocab_size = int(rng.integers(2, 5))
            length = int(rng.integers(0, 3))
            target = list(rng.integers(1, vocab_size, size=length))
            if num_frames < min_frames(target):
                continue
            assert ctc_loss(rng.standard_normal((num_frames, vocab_size)), target) >= 0.0

    def test_long_sequence_stays_finite(self, rng):
        # log-space DP must survive hundreds of frames without underflow
        logits = rng.standard_normal((500, 5)) * 3.0
        target = list(rng.integers(1, 5, size=40))
        assert np.isfinite(ctc_loss(logits, target))

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError):
            ctc_loss(np.zeros((2, 2)), [0])
        with pytest.raises(ValueError):
            ctc_loss(np.zeros((2, 2)), [2])
        with pytest.raises(ValueError):
            ctc_loss(np.full((2, 2), np.nan), [1])


class TestCtcGrad:
    def test_row_sums_zero(self, rng):
        logits = rng.standard_normal((6, 4))
        grad = ctc_grad(logits, [1, 3, 2])
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-10)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            num_frames = int(rng.integers(2, 6))
            vocab_size = int(rng.integers(2, 5))
            length = int(rng.integers(0, 3))
            target = list(rng.integers(1, vocab_size, size=length))
            if num_frames < min_frames(target):
                continue
            logits = rng.standard_normal((num_frames, vocab_size))
            analytic = ctc_grad(logits, target)
            numeric = central_difference_grad(
                lambda x: ctc_loss(x, target), logits, step=1e-5
            )
            assert relative_error(analytic, numeric) < 1e-5

    def test_specified_instance_t5_v4(self):
        rng = np.random.default_rng(41)
        logits = rng.standard_normal((5, 4))
        target = [2, 1]
        analytic = ctc_grad(logits, target)
        numeric = central_difference_grad(lambda x: ctc_loss(x, target), logits, step=1e-5)
        assert relative_error(analytic, numeric) < 1e-5

    def test_peaked_correct_logits_plateau(self):
        # a confident model already consistent with the target sits on a plateau
        logits = np.full((4, 3), -50.0)
        for t, label in enumerate([1, 0, 2, 0]):
            logits[t, label] = 50.0
        loss = ctc_loss(logits, [1, 2])
        assert loss < 1e-6
        grad = ctc_grad(logits, [1, 2])
        assert np.linalg.norm(grad) < 1e-3

    def test_infeasible_raises(self):
        with pytest.raises(InfeasibleTargetError):
            ctc_grad(np.zeros((1, 3)), [1, 1])


class TestGreedyDecode:
    def test_collapse_repeats_and_blanks(self):
        # frame argmaxes: a a blank b
        logits = np.array(
            [[0.0, 5.0, 0.0], [0.0, 5.0, 0.0], [5.0, 0.0, 0.0], [0.0, 0.0, 5.0]]
        )
        assert greedy_decode(logits) == [1, 2]

    def test_all_blank_decodes_empty(self):
        logits = np.tile([5.0, 0.0, 0.0], (4, 1))
        assert greedy_decode(logits) == []

    def test_blank_separates_repeats(self):
        logits = np.array([[0.0, 5.0], [5.0, 0.0], [0.0, 5.0]])
        assert greedy_decode(logits) == [1, 1]

    def test_ties_go_to_lowest_index(self):
        assert greedy_decode(np.zeros((3, 4))) == []  # blank wins every tie
        logits = np.array([[0.0, 1.0, 1.0]])
        assert greedy_decode(logits) == [1]

    def test_deterministic_and_collapse_idempotent(self, rng):
        for _ in range(20):
            logits = rng.standard_normal((int(rng.integers(1, 10)), 4))
            once = greedy_decode(logits)
            assert greedy_decode(logits) == once
            # feeding a blank-separated one-hot rendering of the labels back
            # through the decoder reproduces them exactly
            if once:
                rebuilt = np.full((2 * len(once), 4), -5.0)
                for t, label in enumerate(once):
                    rebuilt[2 * t, label] = 5.0
                    rebuilt[2 * t + 1, 0] = 5.0
                assert greedy_decode(rebuilt) == once


class TestLabelVocab:
    def test_from_transcripts_sorted_unique(self):
        vocab = LabelVocab.from_transcripts(["cab", "abc"])
        assert vocab.symbols == ("a", "b", "c")
        assert vocab.size == 4

    def test_encode_decode_roundtrip(self):
        vocab = LabelVocab(("a", "b", "c"))
        assert vocab.decode(vocab.encode("cabba")) == "cabba"

    def test_unknown_char_rejected(self):
        vocab = LabelVocab(("a",))
        with pytest.raises(ValueError):
            vocab.encode("ab")

    def test_duplicate_symbols_rejected(self):
        with pytest.raises(ValidationError):
            LabelVocab(("a", "a"))

    def test_min_frames(self):
        assert min_frames([]) == 0
        assert min_frames([1, 2, 3]) == 3
        assert min_frames([1, 1]) == 3
        assert min_frames([1, 1, 2, 2, 2]) == 8
