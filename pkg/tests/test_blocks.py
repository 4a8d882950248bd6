import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from coxf.blocks import (DataMatrix, block_multiply, load_matrix, load_vector,
                         partition, partition_dims, save_matrix, save_vector)


def test_partition_exact_division():
    a = DataMatrix(np.arange(12.0).reshape(4, 3))
    part = partition(a, 4)
    assert part.block_count == 4
    assert part.pad_rows == 0
    assert all(b.rows == 1 for b in part.blocks)


def test_partition_with_padding_reassembles():
    a = DataMatrix(np.arange(15.0).reshape(5, 3))
    part = partition(a, 2)
    assert part.block_rows == 3
    assert part.pad_rows == 1
    assert part.blocks[1].toarray()[-1].tolist() == [0.0, 0.0, 0.0]
    assert part.concat().equals(a)


def test_partition_dims_large():
    # ceil arithmetic at realistic scale, no allocation
    assert partition_dims(1048576, 12) == (87382, 8)


def test_sparse_partition_pads_and_reassembles():
    rng = np.random.default_rng(4)
    dense = rng.integers(-3, 4, size=(7, 3)).astype(float)
    dense[rng.random((7, 3)) < 0.5] = 0.0
    a = DataMatrix(sp.csr_array(dense))
    part = partition(a, 3)
    assert part.pad_rows == 2
    assert all(b.is_sparse for b in part.blocks)
    assert all(b.rows == 3 for b in part.blocks)
    assert part.concat().equals(a)


def test_partition_errors():
    a = DataMatrix(np.ones((3, 2)))
    with pytest.raises(ValueError, match="more blocks than rows"):
        partition(a, 4)
    with pytest.raises(ValueError):
        partition(a, 0)


def test_block_multiply_identity_and_zero():
    ident = DataMatrix(np.eye(3))
    x = np.array([1.0, 2.0, 3.0])
    assert block_multiply(ident, x).tolist() == [1.0, 2.0, 3.0]
    zero = DataMatrix(np.zeros((2, 3)))
    assert block_multiply(zero, x).tolist() == [0.0, 0.0]


def test_block_multiply_dimension_mismatch():
    with pytest.raises(ValueError):
        block_multiply(DataMatrix(np.eye(3)), np.ones(4))


def test_sparse_and_dense_agree_exactly():
    rng = np.random.default_rng(0)
    dense = rng.integers(-5, 6, size=(10, 10)).astype(float)
    dense[rng.random((10, 10)) < 0.6] = 0.0
    x = rng.integers(-3, 4, size=10).astype(float)
    d = DataMatrix(dense)
    s = DataMatrix(sp.csr_array(dense))
    assert s.is_sparse and not d.is_sparse
    # integer-valued data, so the two storage paths must agree bit for bit
    assert np.array_equal(d.matvec(x), s.matvec(x))


def test_matvec_ops_counts_stored_entries():
    dense = DataMatrix(np.zeros((4, 5)))
    assert dense.matvec_ops == 20
    sparse = DataMatrix(sp.csr_array(np.diag([1.0, 2.0, 0.0])))
    assert sparse.matvec_ops == 2


def test_immutability():
    arr = np.ones((2, 2))
    d = DataMatrix(arr)
    arr[0, 0] = 7.0  # constructor copies
    assert d.toarray()[0, 0] == 1.0
    with pytest.raises(ValueError):
        d.raw[0, 0] = 9.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 4), st.data())
def test_partition_concat_identity_all_n(rows, cols, data):
    values = data.draw(
        st.lists(st.integers(-9, 9), min_size=rows * cols, max_size=rows * cols))
    a = DataMatrix(np.array(values, dtype=float).reshape(rows, cols))
    n = data.draw(st.integers(1, rows))
    assert partition(a, n).concat().equals(a)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 4), st.data())
def test_blockwise_multiply_distributes(rows, cols, data):
    values = data.draw(
        st.lists(st.integers(-9, 9), min_size=rows * cols, max_size=rows * cols))
    xs = data.draw(st.lists(st.integers(-9, 9), min_size=cols, max_size=cols))
    a = DataMatrix(np.array(values, dtype=float).reshape(rows, cols))
    x = np.array(xs, dtype=float)
    n = data.draw(st.integers(1, rows))
    part = partition(a, n)
    stacked = np.concatenate([block_multiply(b, x) for b in part.blocks])
    trimmed = stacked[: rows] if part.pad_rows else stacked
    # integer-valued input: exact equality
    assert np.array_equal(trimmed, a.matvec(x))


def test_blockwise_multiply_distributes_float_data():
    rng = np.random.default_rng(11)
    a = DataMatrix(rng.standard_normal((17, 5)))
    x = rng.standard_normal(5)
    full = a.matvec(x)
    for n in (1, 2, 3, 5, 17):
        part = partition(a, n)
        stacked = np.concatenate([block_multiply(b, x) for b in part.blocks])
        trimmed = stacked[:17]
        assert np.allclose(trimmed, full, rtol=1e-12, atol=1e-14)


def test_matrix_market_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    dense = rng.integers(-4, 5, size=(6, 4)).astype(float)
    dense[rng.random((6, 4)) < 0.5] = 0.0
    a = DataMatrix(sp.csr_array(dense))
    path = tmp_path / "a.mtx"
    save_matrix(path, a)
    back = load_matrix(path)
    assert back.is_sparse
    assert back.equals(a)
    assert load_matrix(path, sparse=False).is_sparse is False


def test_csv_matrix_and_vector_roundtrip(tmp_path):
    a = DataMatrix(np.array([[1.5, -2.0], [0.25, 4.0]]))
    mpath = tmp_path / "a.csv"
    save_matrix(mpath, a)
    assert load_matrix(mpath).equals(a)

    v = np.array([1.0, -0.125, 3.5e-7])
    vpath = tmp_path / "v.csv"
    save_vector(vpath, v)
    assert np.array_equal(load_vector(vpath), v)
