import numpy as np
import pytest

from recyclebloom import (
    FilterParams,
    FilterState,
    HashAssignment,
    HashVariant,
    InvalidParameterError,
    NBounded,
    Phases,
    Retention,
    SigmaBounded,
    hash_indices,
    insert,
    query,
)


def make(M=8, k=2, sigma=None, N=None, **kw):
    recycle = NBounded(N) if N is not None else SigmaBounded(M - 1 if sigma is None else sigma)
    params = FilterParams(M, k, recycle=recycle, **kw)
    return params, FilterState(params)


def assign(mid, *idx):
    return HashAssignment(mid, tuple(idx))


class TestFilterParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(M=0, k=1),
            dict(M=4, k=0),
            dict(M=4, k=5),
            dict(M=4, k=1, recycle=SigmaBounded(4)),
            dict(M=4, k=1, recycle=SigmaBounded(-1)),
            dict(M=4, k=1, recycle=NBounded(0)),
            dict(M=1, k=1, phases=Phases.TWO),
            dict(M=5, k=3, phases=Phases.TWO),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            FilterParams(**kwargs)

    def test_two_phase_array_size_floors(self):
        p = FilterParams(1001, 3, recycle=SigmaBounded(10), phases=Phases.TWO)
        assert p.array_bits == 500

    def test_sigma_checked_against_array(self):
        with pytest.raises(InvalidParameterError, match="sigma"):
            FilterParams(100, 2, recycle=SigmaBounded(50), phases=Phases.TWO)


class TestHashIndices:
    def test_single_bit(self):
        p = FilterParams(1, 1)
        for mid in range(20):
            assert hash_indices(mid, p, seed=3).indices == (0,)

    def test_deterministic(self):
        p = FilterParams(1000, 7)
        assert hash_indices(42, p, seed=9) == hash_indices(42, p, seed=9)
        assert hash_indices(42, p, seed=9) != hash_indices(42, p, seed=10)

    def test_noncolliding_full_range(self):
        p = FilterParams(16, 16, hash_variant=HashVariant.NONCOLLIDING)
        for mid in range(10):
            assert sorted(hash_indices(mid, p).indices) == list(range(16))

    def test_noncolliding_distinct(self):
        p = FilterParams(20, 7, hash_variant=HashVariant.NONCOLLIDING)
        for mid in range(500):
            idx = hash_indices(mid, p).indices
            assert len(set(idx)) == 7
            assert all(0 <= i < 20 for i in idx)

    def test_colliding_can_repeat(self):
        p = FilterParams(4, 4)
        assert any(len(set(hash_indices(m, p).indices)) < 4 for m in range(200))


class TestInsertQuery:
    def test_fresh_insert(self):
        params, st = make(M=8, k=2)
        out = insert(st, assign(1, 1, 3), params)
        assert out.bits_after == 2
        assert out.new_bits_set == 2
        assert not out.classified_repeat
        assert not out.is_false_positive

    def test_known_repeat(self):
        params, st = make(M=8, k=2)
        insert(st, assign(1, 1, 3), params)
        out = insert(st, assign(1, 1, 3), params)
        assert out.new_bits_set == 0
        assert out.classified_repeat
        assert not out.is_false_positive

    def test_false_positive(self):
        params, st = make(M=8, k=2)
        insert(st, assign(1, 1, 3), params)
        out = insert(st, assign(2, 3, 1), params)
        assert out.classified_repeat and out.is_false_positive

    def test_overflow_nonretaining(self):
        params, st = make(M=8, k=1, sigma=2)
        insert(st, assign(1, 0), params)
        insert(st, assign(2, 1), params)
        out = insert(st, assign(3, 2), params)
        assert out.triggered_recycle
        assert out.bits_after == 0
        assert st.bits_set == 0
        assert not st.knows(1)
        assert not st.knows(3)

    def test_overflow_retaining(self):
        params, st = make(M=8, k=2, sigma=2, retention=Retention.RETAINING)
        insert(st, assign(1, 0, 1), params)
        out = insert(st, assign(2, 4, 5), params)
        assert out.triggered_recycle
        assert out.bits_after == 2
        assert st.bits.sum() == 2
        assert st.knows(2) and not st.knows(1)

    def test_state_sigma_is_legal(self):
        params, st = make(M=8, k=1, sigma=2)
        insert(st, assign(1, 0), params)
        out = insert(st, assign(2, 1), params)
        assert not out.triggered_recycle
        assert st.bits_set == 2

    def test_query_empty(self):
        params, st = make()
        assert not query(st, assign(1, 0, 1))

    def test_query_partial(self):
        params, st = make(M=8, k=2)
        insert(st, assign(1, 0, 1), params)
        assert not query(st, assign(2, 0, 2))
        assert query(st, assign(3, 1, 0))

    def test_query_does_not_mutate(self):
        params, st = make(M=8, k=2)
        insert(st, assign(1, 0, 1), params)
        before = st.bits.copy()
        query(st, assign(2, 5, 6))
        assert np.array_equal(before, st.bits)

    def test_n_bounded_counts_bit_setting_only(self):
        params, st = make(M=8, k=1, N=2)
        insert(st, assign(1, 0), params)
        insert(st, assign(2, 0), params)  # false positive, not counted
        assert st.cycle_count == 0
        out = insert(st, assign(3, 1), params)
        assert out.triggered_recycle
        assert st.bits_set == 0

    def test_n_bounded_oracle_counts_every_new_message(self):
        params = FilterParams(8, 1, recycle=NBounded(2, oracle=True))
        st = FilterState(params)
        insert(st, assign(1, 0), params)
        out = insert(st, assign(2, 0), params)
        assert out.is_false_positive and out.triggered_recycle


class TestTwoPhase:
    def params(self, **kw):
        return FilterParams(16, 1, recycle=SigmaBounded(2), phases=Phases.TWO, **kw)

    def test_frozen_match_is_positive(self):
        params = self.params()
        st = FilterState(params)
        for mid, bit in ((1, 0), (2, 1), (3, 2)):  # third overflows and swaps
            insert(st, assign(mid, bit), params)
        assert st.active_index == 1
        assert st.bits[0].sum() == 2
        assert query(st, assign(1, 0))
        out = insert(st, assign(1, 0), params)
        assert out.classified_repeat and not out.is_false_positive
        assert st.bits[1].sum() == 0

    def test_second_overflow_clears_frozen(self):
        params = self.params()
        st = FilterState(params)
        for mid, bit in ((1, 0), (2, 1), (3, 2), (4, 3), (5, 4), (6, 5)):
            insert(st, assign(mid, bit), params)
        assert st.cycle_count == 2
        assert st.active_index == 0
        assert not st.knows(1)
        assert st.knows(4)

    def test_insert_on_frozen_match_option(self):
        params = self.params(insert_on_frozen_match=True)
        st = FilterState(params)
        for mid, bit in ((1, 0), (2, 1), (3, 2)):
            insert(st, assign(mid, bit), params)
        out = insert(st, assign(7, 1), params)  # new id, hits the frozen bit
        assert out.is_false_positive
        assert out.new_bits_set == 1
        assert st.bits[1, 1] == 1
