from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from coxf.blocks import DataMatrix, partition
from coxf.codes import (CodeSpec, CodingMatrix, encode, make_cross, make_one_diagonal,
                        make_p_bernoulli, make_s_diagonal, regenerate_until_valid)
from coxf.decoder import (DecodeError, ReceivedSet, diagonal_decode, hybrid_decode,
                          inverse_decode, rooting_vector)
from coxf.exact import rank_exact


def received_for(code, a, x, subset):
    part = partition(a, code.n)
    asg = encode(part, code)
    results = tuple(asg[i - 1].coded_block.matvec(x) for i in subset)
    return ReceivedSet(code=code, subset=tuple(subset), results=results,
                       pad_rows=part.pad_rows), a.matvec(np.asarray(x, dtype=float))


def int_data(rows, cols, seed=0):
    rng = np.random.default_rng(seed)
    return DataMatrix(rng.integers(-5, 6, size=(rows, cols)).astype(float))


class TestRootingVector:
    def test_identity_gives_unit_vector(self):
        u = rooting_vector(np.eye(4, dtype=int).tolist(), 2)
        assert u == [0, 1, 0, 0]

    def test_unit_band_missing_first_worker(self):
        code = make_one_diagonal(4)
        msub = code.submatrix((2, 3, 4, 5))
        u = rooting_vector(msub, 1)
        # residual oracle: Msub^T u must equal e_1 exactly
        for col in range(4):
            acc = sum(Fraction(msub[row][col]) * u[row] for row in range(4))
            assert acc == (1 if col == 0 else 0)
        assert u == [1, -1, 1, -1]

    def test_random_full_rank_residual_is_exactly_zero(self):
        rng = np.random.default_rng(5)
        tried = 0
        while tried < 10:
            mat = rng.integers(-9, 10, size=(6, 6)).tolist()
            if rank_exact(mat) < 6:
                continue
            tried += 1
            k0 = int(rng.integers(1, 7))
            u = rooting_vector(mat, k0)
            for col in range(6):
                acc = sum(Fraction(mat[row][col]) * u[row] for row in range(6))
                assert acc == (1 if col + 1 == k0 else 0)

    def test_singular_raises(self):
        with pytest.raises(DecodeError, match="not decodable"):
            rooting_vector([[1, 1], [2, 2]], 1)

    def test_bad_index(self):
        with pytest.raises(ValueError):
            rooting_vector([[1]], 2)


class TestHybrid:
    def test_unit_band_without_first_worker_is_exact(self):
        code = make_one_diagonal(4)
        rs, direct = received_for(code, int_data(8, 3), [1.0, 2.0, -1.0], (2, 3, 4, 5))
        rep = hybrid_decode(rs)
        assert np.array_equal(rep.output, direct)  # unit coefficients: float path exact
        assert rep.rooting_steps <= 1
        assert rep.rooting_steps + rep.peeling_steps == 4
        assert rep.residual == 0.0

    def test_identity_pure_peeling(self):
        code = CodingMatrix(4, 4, [(i, i, 1) for i in range(1, 5)])
        rs, direct = received_for(code, int_data(8, 2), [3.0, -2.0], (1, 2, 3, 4))
        rep = hybrid_decode(rs)
        assert rep.rooting_steps == 0
        assert rep.peeling_steps == 4
        assert rep.scalar_ops == 0
        assert np.array_equal(rep.output, direct)

    def test_matches_inverse_on_random_code(self):
        code = make_p_bernoulli(10, 12, 0.4, coeff_set_size=50, seed=3)
        a = int_data(20, 4, seed=3)
        x = [1.0, 0.5, -2.0, 3.0]
        subset = next(
            sub for sub in combinations(range(1, 13), 10)
            if rank_exact(code.submatrix(sub)) == 10)
        rs, direct = received_for(code, a, x, subset)
        hy = hybrid_decode(rs)
        inv = inverse_decode(rs)
        scale = 1 + np.max(np.abs(direct))
        assert np.max(np.abs(hy.output - inv.output)) / scale < 1e-10
        assert np.max(np.abs(hy.output - direct)) / scale < 1e-10

    def test_random_root_choice_still_decodes(self):
        code = make_p_bernoulli(8, 10, 0.5, coeff_set_size=9, seed=8)
        subset = next(
            sub for sub in combinations(range(1, 11), 8)
            if rank_exact(code.submatrix(sub)) == 8)
        rs, direct = received_for(code, int_data(16, 3, seed=2), [1.0, -1.0, 2.0], subset)
        rep = hybrid_decode(rs, root_choice="random", seed=77)
        scale = 1 + np.max(np.abs(direct))
        assert np.max(np.abs(rep.output - direct)) / scale < 1e-10

    def test_singular_reports_partial_progress(self):
        code = CodingMatrix(2, 2, [(1, 1, 1), (2, 1, 1)])
        rs = ReceivedSet(code=code, subset=(1, 2),
                         results=(np.array([2.0]), np.array([2.0])))
        with pytest.raises(DecodeError) as err:
            hybrid_decode(rs)
        assert err.value.peeling_steps == 1
        assert list(err.value.recovered) == [1]

    def test_exact_mode_on_integer_data(self):
        code = make_s_diagonal(5, 7, 2, coeff_set_size=9, seed=4)
        rs, direct = received_for(code, int_data(10, 2, seed=9), [2, -3], (2, 3, 5, 6, 7))
        rep = hybrid_decode(rs, exact=True)
        assert rep.residual == 0.0
        assert all(Fraction(int(d)) == v for d, v in zip(direct, rep.output))


class TestDiagonalSchedule:
    def test_missing_first_worker_roots_block_one(self):
        code = make_one_diagonal(4)
        rs, direct = received_for(code, int_data(8, 3), [1.0, 2.0, -1.0], (2, 3, 4, 5))
        rep = diagonal_decode(rs)
        assert rep.rooting_steps == 1
        assert rep.peeling_steps == 3
        assert np.array_equal(rep.output, direct)

    def test_no_stragglers_means_no_rooting(self):
        code = make_one_diagonal(6)
        rs, direct = received_for(code, int_data(12, 2), [1.0, 4.0], tuple(range(1, 7)))
        rep = diagonal_decode(rs)
        assert rep.rooting_steps == 0
        assert rep.peeling_steps == 6
        assert np.array_equal(rep.output, direct)

    def test_all_subsets_respect_rooting_budget(self):
        spec = CodeSpec(family="s-diagonal", n=8, m=11, s=3, seed=21)
        code, _ = regenerate_until_valid(spec)
        a = int_data(16, 2, seed=1)
        x = [1.0, -2.0]
        part = partition(a, 8)
        asg = encode(part, code)
        direct = a.matvec(np.array(x))
        scale = 1 + np.max(np.abs(direct))
        subsets = list(combinations(range(1, 12), 8))
        assert len(subsets) == 165
        for sub in subsets:
            rs = ReceivedSet(code=code, subset=sub,
                             results=tuple(asg[i - 1].coded_block.matvec(x) for i in sub),
                             pad_rows=part.pad_rows)
            rep = diagonal_decode(rs)
            assert rep.rooting_steps <= 3
            assert np.max(np.abs(rep.output - direct)) / scale < 1e-8

    def test_requires_band_family(self):
        code = make_p_bernoulli(4, 5, 0.9, seed=1)
        rs = ReceivedSet(code=code, subset=(1, 2, 3, 4),
                         results=tuple(np.zeros(2) for _ in range(4)))
        with pytest.raises(ValueError, match="diagonal"):
            diagonal_decode(rs)

    def test_s_argument_checked(self):
        code = make_one_diagonal(3)
        rs, _ = received_for(code, int_data(6, 2), [1.0, 1.0], (1, 2, 3))
        with pytest.raises(ValueError):
            diagonal_decode(rs, s=2)


class TestInverse:
    def test_unit_band_inverse_is_the_alternating_matrix(self):
        code = make_one_diagonal(4)
        from coxf.exact import invert_exact
        inv = invert_exact(code.submatrix((2, 3, 4, 5)))
        assert inv == [[Fraction(v) for v in row] for row in
                       [[1, -1, 1, -1], [0, 1, -1, 1], [0, 0, 1, -1], [0, 0, 0, 1]]]

    def test_identity_returns_stacked_results(self):
        code = CodingMatrix(3, 3, [(i, i, 1) for i in range(1, 4)])
        results = (np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0]))
        rs = ReceivedSet(code=code, subset=(1, 2, 3), results=results)
        rep = inverse_decode(rs)
        assert np.array_equal(rep.output, np.concatenate(results))
        assert rep.scalar_ops == 3 * 3 * 2

    def test_agrees_with_hybrid(self):
        code = make_s_diagonal(6, 8, 2, coeff_set_size=13, seed=6)
        rs, direct = received_for(code, int_data(12, 3, seed=4), [0.5, 2.0, -1.0],
                                  (1, 3, 4, 6, 7, 8))
        hy = hybrid_decode(rs)
        inv = inverse_decode(rs)
        scale = 1 + np.max(np.abs(direct))
        assert np.max(np.abs(hy.output - inv.output)) / scale < 1e-10

    def test_singular_raises(self):
        code = CodingMatrix(2, 2, [(1, 1, 1), (2, 1, 1)])
        rs = ReceivedSet(code=code, subset=(1, 2),
                         results=(np.array([1.0]), np.array([1.0])))
        with pytest.raises(DecodeError):
            inverse_decode(rs)


class TestAccounting:
    def test_report_counts_sum_to_n(self):
        code = make_s_diagonal(7, 9, 2, coeff_set_size=11, seed=13)
        rs, _ = received_for(code, int_data(14, 2, seed=5), [1.0, 2.0], (2, 3, 4, 6, 7, 8, 9))
        for rep in (hybrid_decode(rs), diagonal_decode(rs), inverse_decode(rs)):
            assert rep.rooting_steps + rep.peeling_steps == code.n

    def test_hybrid_beats_dense_inverse_on_sparse_codes(self):
        for n, s, seed in ((6, 1, 0), (8, 2, 1), (10, 3, 2)):
            spec = CodeSpec(family="s-diagonal", n=n, m=n + s, s=s, seed=seed)
            code, _ = regenerate_until_valid(spec)
            a = int_data(2 * n, 2, seed=seed)
            part = partition(a, n)
            asg = encode(part, code)
            x = [1.0, -1.0]
            for sub in combinations(range(1, n + s + 1), n):
                rs = ReceivedSet(code=code, subset=sub,
                                 results=tuple(asg[i - 1].coded_block.matvec(x) for i in sub),
                                 pad_rows=part.pad_rows)
                assert hybrid_decode(rs).scalar_ops < inverse_decode(rs).scalar_ops

    def test_peeling_soundness_in_exact_mode(self):
        code = make_s_diagonal(5, 7, 2, coeff_set_size=7, seed=10)
        part = partition(int_data(10, 2, seed=11), 5)
        asg = encode(part, code)
        x = [3, -1]
        subset = (1, 2, 4, 6, 7)
        results = tuple(
            np.array([Fraction(int(v)) for v in asg[i - 1].coded_block.matvec(np.array(x, float))],
                     dtype=object)
            for i in subset)
        rs = ReceivedSet(code=code, subset=subset, results=results, pad_rows=part.pad_rows)
        for rep in (hybrid_decode(rs, exact=True), diagonal_decode(rs, exact=True),
                    inverse_decode(rs, exact=True)):
            assert rep.residual == 0.0  # re-encoding reproduces the inputs exactly


from hypothesis import given, settings
from hypothesis import strategies as st


@pytest.mark.filterwarnings("ignore::coxf.codes.EmptySupportWarning")
@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["s-diagonal", "one-diagonal", "p-bernoulli", "cross"]),
       st.integers(2, 6), st.integers(0, 10_000), st.data())
def test_every_family_decodes_exactly_from_any_full_rank_subset(family, n, seed, data):
    if family == "s-diagonal":
        s = data.draw(st.integers(0, 2))
        code = make_s_diagonal(n, n + s, s, coeff_set_size=40, seed=seed)
    elif family == "one-diagonal":
        code = make_one_diagonal(n)
    elif family == "p-bernoulli":
        code = make_p_bernoulli(n, n + 2, 0.6, coeff_set_size=40, seed=seed)
    else:
        code = make_cross(n, n + 2, min(2, n), 2, coeff_set_size=40, seed=seed)
    subset = next((sub for sub in combinations(range(1, code.m + 1), n)
                   if rank_exact(code.submatrix(sub)) == n), None)
    if subset is None:
        return  # rank-deficient draw; nothing to decode
    a = int_data(2 * n, 2, seed=seed)
    rs, direct = received_for(code, a, [2.0, -3.0], subset)
    exact_direct = [Fraction(int(v)) for v in direct]
    decoders = [lambda r: hybrid_decode(r, exact=True),
                lambda r: inverse_decode(r, exact=True)]
    if code.family in ("s-diagonal", "one-diagonal"):
        decoders.append(lambda r: diagonal_decode(r, exact=True))
    for decode in decoders:
        rep = decode(rs)
        assert list(rep.output) == exact_direct
        assert rep.residual == 0.0


class TestReceivedSet:
    def test_subset_validation(self):
        code = make_one_diagonal(3)
        with pytest.raises(ValueError, match="sorted distinct"):
            ReceivedSet(code=code, subset=(2, 1, 3), results=tuple(np.zeros(1) for _ in range(3)))
        with pytest.raises(ValueError, match="exactly n"):
            ReceivedSet(code=code, subset=(1, 2), results=(np.zeros(1), np.zeros(1)))
        with pytest.raises(ValueError, match="out of range"):
            ReceivedSet(code=code, subset=(1, 2, 5),
                        results=tuple(np.zeros(1) for _ in range(3)))
        with pytest.raises(ValueError, match="equal-length"):
            ReceivedSet(code=code, subset=(1, 2, 3),
                        results=(np.zeros(1), np.zeros(2), np.zeros(1)))

    def test_padding_is_stripped(self):
        code = make_one_diagonal(2)
        a = int_data(5, 2, seed=6)  # 5 rows over 2 blocks: one pad row
        rs, direct = received_for(code, a, [1.0, 2.0], (1, 3))
        rep = hybrid_decode(rs)
        assert rep.output.shape == (5,)
        assert np.array_equal(rep.output, direct)
