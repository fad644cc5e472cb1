from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semsim.sampling import (
    Decision,
    SemanticMap,
    VoISampler,
    aoi,
    change_degree,
    resize_map,
    voi,
)


def mask_of(rows) -> SemanticMap:
    return SemanticMap(np.array(rows, dtype=np.uint8), timestamp=0)


masks_6x6 = arrays(np.uint8, (6, 6), elements=st.integers(0, 1))


class TestSemanticMap:
    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            SemanticMap(np.array([[0, 2]], dtype=np.uint8), timestamp=0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            SemanticMap(np.zeros((0, 4), dtype=np.uint8), timestamp=0)

    def test_rejects_negative_timestamp(self):
        with pytest.raises(ValueError):
            SemanticMap(np.zeros((2, 2), dtype=np.uint8), timestamp=-1)

    def test_pixel_count(self):
        m = mask_of([[1, 0], [1, 1]])
        assert m.pixel_count == 3 and m.width == 2 and m.height == 2


class TestAoi:
    def test_examples(self):
        assert aoi(10, 7) == 3
        assert aoi(5, 5) == 0
        assert aoi(7, 10) == 3


class TestChangeDegree:
    def test_identical_nonempty_is_zero(self):
        m = mask_of([[1, 1], [0, 1]])
        assert change_degree(m, m) == 0.0

    def test_disjoint_is_one(self):
        a = mask_of([[1, 1], [0, 0]])
        b = mask_of([[0, 0], [1, 1]])
        assert change_degree(a, b) == 1.0

    def test_half_overlap(self):
        # n_a = n_b = 4, n_ab = 2 on an explicit 4x4 pair.
        a = mask_of([[1, 1, 0, 0]] * 2 + [[0, 0, 0, 0]] * 2)
        b = mask_of([[0, 1, 1, 0]] * 2 + [[0, 0, 0, 0]] * 2)
        assert change_degree(a, b) == 0.5

    def test_both_empty_is_zero(self):
        e = mask_of([[0, 0], [0, 0]])
        assert change_degree(e, e) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            change_degree(mask_of([[1]]), mask_of([[1, 0]]))

    @given(masks_6x6, masks_6x6)
    @settings(max_examples=200, deadline=None)
    def test_properties(self, a_mask, b_mask):
        a = SemanticMap(a_mask, timestamp=0)
        b = SemanticMap(b_mask, timestamp=0)
        d = change_degree(a, b)
        assert 0.0 <= d <= 1.0
        assert d == change_degree(b, a)
        assert change_degree(a, a) == 0.0
        # Exact 1 - Dice identity via independent rational arithmetic.
        n_a = int(np.count_nonzero(a_mask))
        n_b = int(np.count_nonzero(b_mask))
        n_ab = int(np.count_nonzero(np.logical_and(a_mask, b_mask)))
        expected = 0.0 if n_a + n_b == 0 else float(1 - Fraction(2 * n_ab, n_a + n_b))
        assert d == expected


class TestVoi:
    def test_change_only(self):
        assert voi(3.0, 0.25, 0.0, 1.0) == 0.25

    def test_age_only(self):
        assert voi(3.0, 0.9, 1.0, 0.0) == 3.0

    def test_weighted(self):
        assert voi(2.0, 0.25, 0.5, 2.0) == 1.5

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            voi(-1.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            voi(float("inf"), 0.0, 1.0, 1.0)


class TestResizeMap:
    def test_identity_factor(self):
        m = mask_of([[1, 0], [0, 1]])
        out = resize_map(m, 1)
        assert np.array_equal(out.mask, m.mask)

    def test_constant_field(self):
        m = SemanticMap(np.ones((8, 8), dtype=np.uint8), timestamp=4)
        out = resize_map(m, 2)
        assert out.mask.shape == (4, 4)
        assert np.all(out.mask == 1)
        assert out.timestamp == 4

    def test_checkerboard_keeps_top_left_phase(self):
        checker = np.indices((4, 4)).sum(axis=0) % 2
        out = resize_map(SemanticMap(checker.astype(np.uint8), 0), 2)
        assert np.array_equal(out.mask, checker[::2, ::2])
        assert np.all(out.mask == 0)

    def test_output_stays_binary(self, rng):
        m = SemanticMap((rng.random((12, 8)) < 0.5).astype(np.uint8), 0)
        out = resize_map(m, 4)
        assert set(np.unique(out.mask)) <= {0, 1}

    def test_non_divisor_rejected(self):
        with pytest.raises(ValueError):
            resize_map(SemanticMap(np.ones((6, 6), dtype=np.uint8), 0), 4)


def walk_stream(length: int, seed: int) -> list[SemanticMap]:
    """A drifting blob stream for gate behavior tests."""
    rng = np.random.default_rng(seed)
    pos = 2
    out = []
    for t in range(length):
        mask = np.zeros((8, 16), dtype=np.uint8)
        pos = int(np.clip(pos + rng.integers(-1, 2), 0, 12))
        mask[2:6, pos : pos + 4] = 1
        out.append(SemanticMap(mask, timestamp=t))
    return out


class TestVoISampler:
    def make(self, threshold, tau=(0.0, 1.0), cache=None):
        cached = cache or mask_of([[1, 0], [0, 0]])
        return VoISampler(cached_map=cached, threshold=threshold,
                          tau_aoi=tau[0], tau_change=tau[1])

    def test_zero_threshold_always_transmits(self):
        stream = walk_stream(30, 1)
        sampler = VoISampler(stream[0], threshold=0.0, tau_aoi=0.0, tau_change=1.0)
        assert all(sampler.offer(m).transmitted for m in stream[1:])

    def test_unreachable_threshold_never_transmits(self):
        stream = walk_stream(30, 2)
        sampler = VoISampler(stream[0], threshold=1.01, tau_aoi=0.0, tau_change=1.0)
        for m in stream[1:]:
            assert not sampler.offer(m).transmitted
        assert sampler.cached_time == stream[0].timestamp

    def test_identical_map_discarded_cache_unchanged(self):
        base = np.zeros((4, 4), dtype=np.uint8)
        base[1:3, 1:3] = 1
        sampler = VoISampler(SemanticMap(base, 0), threshold=0.1,
                             tau_aoi=0.0, tau_change=1.0)
        outcome = sampler.offer(SemanticMap(base.copy(), 5))
        assert isinstance(outcome, Decision)
        assert not outcome.transmitted and outcome.gamma_change == 0.0
        assert sampler.cached_time == 0

    def test_tie_at_threshold_transmits(self):
        a = mask_of([[1, 1, 0, 0]] * 2 + [[0, 0, 0, 0]] * 2)
        b = SemanticMap(
            np.array([[0, 1, 1, 0]] * 2 + [[0, 0, 0, 0]] * 2, dtype=np.uint8), 1
        )
        sampler = VoISampler(a, threshold=0.5, tau_aoi=0.0, tau_change=1.0)
        outcome = sampler.offer(b)
        assert outcome.voi == 0.5 and outcome.transmitted

    def test_transmit_replaces_cache(self):
        stream = walk_stream(10, 3)
        sampler = VoISampler(stream[0], threshold=0.0, tau_aoi=0.0, tau_change=1.0)
        sampler.offer(stream[1])
        assert sampler.cached_time == 1
        assert np.array_equal(sampler.cached_map.mask, stream[1].mask)

    def test_out_of_order_rejected(self):
        stream = walk_stream(5, 4)
        sampler = VoISampler(stream[3], threshold=0.0, tau_aoi=0.0, tau_change=1.0)
        with pytest.raises(ValueError):
            sampler.offer(stream[1])

    def test_aoi_term_accumulates(self):
        # Pure-age gating transmits periodically regardless of content.
        base = mask_of([[1, 1], [0, 0]])
        sampler = VoISampler(base, threshold=3.0, tau_aoi=1.0, tau_change=0.0)
        decisions = [
            sampler.offer(SemanticMap(base.mask.copy(), t)).transmitted
            for t in range(1, 10)
        ]
        assert decisions == [False, False, True] * 3

    def test_single_offer_threshold_monotonicity(self):
        # One candidate against one cache: transmitting at a higher threshold
        # implies transmitting at any lower one.
        stream = walk_stream(40, 5)
        for t in range(1, 40):
            lo = VoISampler(stream[t - 1], threshold=0.2, tau_aoi=0.0, tau_change=1.0)
            hi = VoISampler(stream[t - 1], threshold=0.6, tau_aoi=0.0, tau_change=1.0)
            if hi.offer(stream[t]).transmitted:
                assert lo.offer(stream[t]).transmitted

    def test_stream_count_non_increasing_in_threshold(self):
        stream = walk_stream(300, 6)
        counts = []
        for g in (0.0, 0.2, 0.4, 0.8):
            sampler = VoISampler(stream[0], threshold=g, tau_aoi=0.0, tau_change=1.0)
            counts.append(sum(sampler.offer(m).transmitted for m in stream[1:]))
        assert counts == sorted(counts, reverse=True)
        assert counts[0] > counts[-1]

    def test_tau_validation(self):
        with pytest.raises(ValueError):
            self.make(0.1, tau=(0.0, 0.0))
        with pytest.raises(ValueError):
            self.make(0.1, tau=(-1.0, 1.0))
        with pytest.raises(ValueError):
            self.make(-0.5)
