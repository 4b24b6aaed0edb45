import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpsca import attack
from kpsca.attack import (
    KeyCandidate,
    Polarity,
    brute_force_complete,
    correctness,
    expand_candidate,
    extract_candidates,
    mean_slot,
    recover_scalar,
    verify_candidate,
    welch_t,
    worst_case_checks,
)
from kpsca.curve import Scalar, kp_point
from kpsca.leaksim import differing_cycles
from kpsca.traces import CompressionMethod, SlotMatrix, compress, segment

from helpers import flip_bits


def matrix_of(rows):
    arr = np.asarray(rows, dtype=float)
    return SlotMatrix(arr, arr.shape[1], 0)


def segment_trace(trace, num_slots, offset=0, method=CompressionMethod.MEAN):
    ct = compress(trace, method)
    return segment(ct, ct.cycle0_offset + offset, 54, num_slots)


class TestMeanSlot:
    def test_identical_slots(self):
        m = matrix_of([[1, 2, 3]] * 4)
        assert list(mean_slot(m)) == [1, 2, 3]

    def test_two_slots(self):
        m = matrix_of([[0, 0, 0], [2, 2, 2]])
        assert list(mean_slot(m)) == [1, 1, 1]

    def test_needs_two_slots(self):
        with pytest.raises(ValueError):
            mean_slot(matrix_of([[1, 2]]))

    def test_mean_between_classes_on_leaky_trace(self, b233_run, b233_leaky_trace):
        _, k, _, _, schedule = b233_run
        m = segment_trace(b233_leaky_trace, schedule.num_slots)
        mean = mean_slot(m)
        bits = np.array(k.main_loop_bits)
        for j in differing_cycles():
            v1 = m.slots[bits == 1, j][0]
            v0 = m.slots[bits == 0, j][0]
            assert min(v0, v1) < mean[j] < max(v0, v1)


class TestExtractCandidates:
    def test_count_and_order(self):
        m = matrix_of([[1, 2], [3, 4], [5, 6]])
        cands = extract_candidates(m)
        assert len(cands) == 4  # 2 * slot_len
        assert [c.polarity for c in cands[:2]] == [Polarity.SMALLER_IS_ONE] * 2
        assert [c.sample_index for c in cands] == [0, 1, 0, 1]

    def test_hand_example(self):
        # column j=0: values (1, 3, 1), mean 5/3 -> smaller-is-one bits (1, 0, 1)
        m = matrix_of([[1], [3], [1]])
        cands = extract_candidates(m)
        assert cands[0].bits == (1, 0, 1)
        assert cands[1].bits == (0, 1, 0)

    def test_tie_rule_all_identical(self):
        m = matrix_of([[7, 7], [7, 7], [7, 7]])
        cands = extract_candidates(m)
        by = {(c.sample_index, c.polarity): c for c in cands}
        # nothing is smaller than the mean: "not smaller" branch everywhere
        assert by[(0, Polarity.SMALLER_IS_ONE)].bits == (0, 0, 0)
        assert by[(0, Polarity.SMALLER_IS_ZERO)].bits == (1, 1, 1)

    def test_polarity_duality_tie_free(self):
        rng = np.random.default_rng(3)
        m = matrix_of(rng.normal(size=(16, 6)))  # continuous: ties have measure zero
        cands = extract_candidates(m)
        half = len(cands) // 2
        for c1, c0 in zip(cands[:half], cands[half:]):
            assert c0.bits == c1.complement().bits

    def test_polarity_disagreement_exactly_at_ties(self):
        m = matrix_of([[1, 5], [1, 3], [4, 1]])  # column 0: mean 2, tie at rows 0,1? no: 1<2,1<2,4>2
        # craft a real tie: column values (2, 2, 2) -> mean 2 -> all ties
        m = matrix_of([[2, 5], [2, 3], [2, 1]])
        cands = extract_candidates(m)
        by = {(c.sample_index, c.polarity): c for c in cands}
        one = by[(0, Polarity.SMALLER_IS_ONE)].bits
        zero = by[(0, Polarity.SMALLER_IS_ZERO)].bits
        # ties (all of column 0) resolve to 0 and 1 respectively: equal, not complementary
        assert one == (0, 0, 0) and zero == (1, 1, 1)


class TestCorrectness:
    def test_exact_match(self):
        c = KeyCandidate((1, 0, 1, 1), 0, Polarity.SMALLER_IS_ONE)
        delta, wrong = correctness(c, (1, 0, 1, 1))
        assert delta == 1.0 and wrong == []

    def test_complement_is_zero(self):
        c = KeyCandidate((1, 0, 1, 1), 0, Polarity.SMALLER_IS_ONE)
        delta, wrong = correctness(c.complement(), (1, 0, 1, 1))
        assert delta == 0.0 and wrong == [0, 1, 2, 3]

    def test_17_wrong_of_230(self):
        rng = random.Random(4)
        truth = tuple(rng.randint(0, 1) for _ in range(230))
        wrong_positions = sorted(rng.sample(range(230), 17))
        cand = KeyCandidate(flip_bits(truth, wrong_positions), 0, Polarity.SMALLER_IS_ONE)
        delta, wrong = correctness(cand, truth)
        assert delta == 213 / 230
        assert delta == pytest.approx(0.926, abs=5e-4)
        assert wrong == wrong_positions

    def test_length_mismatch(self):
        c = KeyCandidate((1, 0), 0, Polarity.SMALLER_IS_ONE)
        with pytest.raises(ValueError):
            correctness(c, (1, 0, 1))


class TestWelch:
    def test_zero_for_identical_constant_data(self):
        m = matrix_of([[5.0, 1.0]] * 10)
        t = welch_t(m, [0, 1] * 5)
        assert list(t) == [0.0, 0.0]

    def test_frozen_formula_case(self):
        # class means 0 and 1, each unit sample variance, n = 100 each:
        # t = (0 - 1) / sqrt(1/100 + 1/100) = -1/sqrt(0.02)
        rows = []
        labels = []
        for i in range(100):
            v = 1.0 if i % 2 == 0 else -1.0  # mean 0, sample variance ~1
            rows.append([v])
            labels.append(0)
        for i in range(100):
            v = 2.0 if i % 2 == 0 else 0.0  # mean 1, sample variance ~1
            rows.append([v])
            labels.append(1)
        m = matrix_of(rows)
        t = welch_t(m, labels)
        var = np.var([1.0, -1.0] * 50, ddof=1)  # 50/49ths of 1
        expect = -1.0 / math.sqrt(2 * var / 100)
        assert t[0] == pytest.approx(expect)
        assert t[0] == pytest.approx(-1 / math.sqrt(2 / 100), rel=0.03)

    def test_zero_variance_unequal_means_gives_infinity(self):
        m = matrix_of([[0.0], [0.0], [1.0], [1.0]])
        t = welch_t(m, [0, 0, 1, 1])
        assert t[0] == -math.inf

    def test_class_size_validation(self):
        m = matrix_of([[1.0], [2.0], [3.0]])
        with pytest.raises(ValueError):
            welch_t(m, [0, 0, 1])

    def test_leaky_trace_flags_only_differing_cycles(self, b233_run, b233_leaky_trace):
        _, k, _, _, schedule = b233_run
        m = segment_trace(b233_leaky_trace, schedule.num_slots)
        t = welch_t(m, k.main_loop_bits)
        flagged = {j for j in range(54) if abs(t[j]) > 4.5}
        assert flagged == set(differing_cycles())
        for j in range(54):
            if j in flagged:
                assert math.isinf(t[j])  # zero within-class variance, unequal means
            else:
                assert t[j] == 0.0  # noiseless and key-independent


class TestVerifyAndRecover:
    def test_ground_truth_candidate_verifies(self, test16):
        rng = random.Random(5)
        k = Scalar.random(rng, 14)
        pub = kp_point(k, test16.g, test16)
        cand = KeyCandidate(k.main_loop_bits, 0, Polarity.SMALLER_IS_ONE)
        assert verify_candidate(cand, test16.g, pub, test16)
        assert recover_scalar(cand, test16.g, pub, test16) == k

    def test_single_flip_fails(self, test16):
        rng = random.Random(6)
        k = Scalar.random(rng, 14)
        pub = kp_point(k, test16.g, test16)
        cand = KeyCandidate(flip_bits(k.main_loop_bits, [3]), 0, Polarity.SMALLER_IS_ONE)
        assert not verify_candidate(cand, test16.g, pub, test16)

    def test_random_candidate_vs_random_pub(self, test16):
        rng = random.Random(7)
        hits = 0
        for _ in range(30):
            k1, k2 = Scalar.random(rng, 14), Scalar.random(rng, 14)
            pub = kp_point(k2, test16.g, test16)
            cand = KeyCandidate(k1.main_loop_bits, 0, Polarity.SMALLER_IS_ONE)
            hits += verify_candidate(cand, test16.g, pub, test16) and k1 != k2
        assert hits == 0

    def test_expansion_convention(self):
        assert expand_candidate((1, 0, 1), 0).bits == (1, 0, 1, 0, 1)
        assert expand_candidate((1, 0, 1), 1).bits == (1, 1, 1, 0, 1)


class TestBruteForce:
    def test_zero_suspects_one_check(self, test16):
        rng = random.Random(8)
        k = Scalar.random(rng, 14)
        pub = kp_point(k, test16.g, test16)
        cand = KeyCandidate(k.main_loop_bits, 0, Polarity.SMALLER_IS_ONE)
        res = brute_force_complete(cand, [], test16.g, pub, test16,
                                   preloop_bits=(k.bits[1],))
        assert res.key == k and res.checks == 1

    def test_three_wrong_among_five_suspects(self, test16):
        rng = random.Random(9)
        k = Scalar.random(rng, 14)
        pub = kp_point(k, test16.g, test16)
        wrong = [1, 4, 7]
        suspects = [1, 3, 4, 7, 9]
        cand = KeyCandidate(flip_bits(k.main_loop_bits, wrong), 0, Polarity.SMALLER_IS_ONE)
        res = brute_force_complete(cand, suspects, test16.g, pub, test16,
                                   preloop_bits=(k.bits[1],))
        assert res.key == k
        # at most C(5,0)+C(5,1)+C(5,2)+C(5,3) = 26 point multiplications
        assert res.checks <= 26

    def test_budget_exhaustion_reported(self, test16):
        rng = random.Random(10)
        k = Scalar.random(rng, 14)
        pub = kp_point(k, test16.g, test16)
        cand = KeyCandidate(flip_bits(k.main_loop_bits, [0, 2, 5, 8]), 0,
                            Polarity.SMALLER_IS_ONE)
        res = brute_force_complete(cand, [0, 2], test16.g, pub, test16,
                                   budget=3, preloop_bits=(k.bits[1],))
        assert res.key is None and res.budget_exhausted and res.checks == 3

    def test_enumeration_order_is_increasing_weight(self, test16):
        rng = random.Random(11)
        k = Scalar.random(rng, 14)
        pub = kp_point(k, test16.g, test16)
        # plant 1 wrong bit; with suspects covering it, weight-1 pass finds it
        cand = KeyCandidate(flip_bits(k.main_loop_bits, [5]), 0, Polarity.SMALLER_IS_ONE)
        res = brute_force_complete(cand, list(range(12)), test16.g, pub, test16,
                                   preloop_bits=(k.bits[1],))
        assert res.key == k
        assert res.checks <= 1 + 12

    def test_suspect_limit(self, test16):
        cand = KeyCandidate((0,) * 30, 0, Polarity.SMALLER_IS_ONE)
        with pytest.raises(ValueError):
            brute_force_complete(cand, list(range(25)), test16.g, test16.g, test16)

    def test_worst_case_formula(self):
        assert worst_case_checks(17) == 1 << 17


class TestEndToEndExtraction:
    def test_noiseless_leaky_trace_yields_exact_key(self, b233_run, b233_leaky_trace):
        params, k, _, _, schedule = b233_run
        m = segment_trace(b233_leaky_trace, schedule.num_slots)
        report = attack.evaluate(m, truth_bits=k.main_loop_bits)
        assert report.best_delta == 1.0
        pub = kp_point(k, params.g, params)
        assert verify_candidate(report.best_candidate, params.g, pub, params)
        assert recover_scalar(report.best_candidate, params.g, pub, params) == k

    def test_both_polarities_win_somewhere(self, b233_run, b233_leaky_trace):
        _, k, _, _, schedule = b233_run
        m = segment_trace(b233_leaky_trace, schedule.num_slots)
        report = attack.evaluate(m, truth_bits=k.main_loop_bits)
        perfect = [c for c, d in zip(report.candidates, report.deltas) if d == 1.0]
        assert {c.polarity for c in perfect} == {Polarity.SMALLER_IS_ONE,
                                                 Polarity.SMALLER_IS_ZERO}
        assert {c.sample_index for c in perfect} == set(differing_cycles())

    def test_rescaling_leaves_bits_unchanged(self, b233_run, b233_leaky_trace):
        _, _, _, _, schedule = b233_run
        m = segment_trace(b233_leaky_trace, schedule.num_slots)
        before = [c.bits for c in extract_candidates(m)]
        m2 = SlotMatrix(2.0 * m.slots + 1.0, m.slot_len, m.start_cycle)
        after = [c.bits for c in extract_candidates(m2)]
        assert before == after

    def test_offset_does_not_improve_attack(self, b233_run, b233_leaky_trace):
        _, k, _, _, schedule = b233_run
        best = {}
        for off in (-1, 0, 1):
            m = segment_trace(b233_leaky_trace, schedule.num_slots, offset=off)
            rep = attack.evaluate(m, truth_bits=k.main_loop_bits)
            best[off] = rep.best_delta
        assert best[0] >= best[-1]
        assert best[0] >= best[1]

    def test_report_csv(self, tmp_path, b233_run, b233_leaky_trace):
        _, k, _, _, schedule = b233_run
        m = segment_trace(b233_leaky_trace, schedule.num_slots)
        report = attack.evaluate(m, truth_bits=k.main_loop_bits)
        path = tmp_path / "report.csv"
        attack.report_to_csv(report, path, config_lines=["curve=b233"])
        lines = path.read_text().splitlines()
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "sample_index,polarity,delta,verified"
        rows = [l for l in lines if not l.startswith("#")][1:]
        assert len(rows) == 108  # 2 * 54 candidates
        assert any("1.000000" in r for r in rows)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=4, max_size=4),
                min_size=3, max_size=12))
def test_property_delta_complement(rows):
    m = matrix_of(rows)
    truth = (1, 0, 1) + (0,) * (m.num_slots - 3) if m.num_slots >= 3 else None
    truth = truth[: m.num_slots]
    for cand in extract_candidates(m):
        d1, w1 = correctness(cand, truth)
        d0, w0 = correctness(cand.complement(), truth)
        assert len(w1) + len(w0) == m.num_slots
        assert d1 + d0 == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**20))
def test_property_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    m = matrix_of(rng.normal(size=(8, 5)))
    scaled = SlotMatrix(m.slots * 3.0 + 7.0, m.slot_len, m.start_cycle)
    assert [c.bits for c in extract_candidates(m)] == \
        [c.bits for c in extract_candidates(scaled)]
