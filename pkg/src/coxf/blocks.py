"""Row-block partitioning and the shared matrix/vector kernels.

Data matrices are dense numpy arrays or scipy CSR; the data path is 64-bit
float throughout, while code coefficients elsewhere stay exact integers.
Everything here is immutable after construction, so partitions and blocks
can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class DataMatrix:
    """Immutable 2-D real matrix with dense or CSR storage."""

    __slots__ = ("_mat", "is_sparse")

    def __init__(self, mat):
        if sp.issparse(mat):
            csr = sp.csr_array(mat).astype(np.float64)
            csr.sum_duplicates()
            csr.sort_indices()
            _freeze(csr.data)
            _freeze(csr.indices)
            _freeze(csr.indptr)
            self._mat = csr
            self.is_sparse = True
        else:
            arr = np.array(mat, dtype=np.float64, copy=True)
            if arr.ndim != 2:
                raise ValueError("expected a 2-D matrix")
            self._mat = _freeze(arr)
            self.is_sparse = False
        if self.rows < 1 or self.cols < 1:
            raise ValueError("matrix needs at least one row and one column")

    @property
    def rows(self) -> int:
        return int(self._mat.shape[0])

    @property
    def cols(self) -> int:
        return int(self._mat.shape[1])

    @property
    def raw(self):
        """Underlying ndarray or csr_array (read-only buffers)."""
        return self._mat

    @property
    def matvec_ops(self) -> int:
        """Multiply-add count of one matvec with this storage."""
        return int(self._mat.nnz) if self.is_sparse else int(self._mat.size)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.cols:
            raise ValueError(f"vector of length {x.size} does not match {self.cols} columns")
        return self._mat @ x

    def toarray(self) -> np.ndarray:
        return self._mat.toarray() if self.is_sparse else np.array(self._mat)

    def equals(self, other: "DataMatrix") -> bool:
        """Exact elementwise equality (desk-scale; densifies sparse operands)."""
        if (self.rows, self.cols) != (other.rows, other.cols):
            return False
        return bool(np.array_equal(self.toarray(), other.toarray()))

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"DataMatrix({self.rows}x{self.cols}, {kind})"


def partition_dims(rows: int, n: int) -> tuple[int, int]:
    """(rows per block, zero rows appended) for an n-way row split."""
    if n < 1:
        raise ValueError("block count must be positive")
    if n > rows:
        raise ValueError("more blocks than rows")
    block_rows = -(-rows // n)
    return block_rows, block_rows * n - rows


@dataclass(frozen=True)
class BlockPartition:
    """A matrix split into n equal-height row blocks, zero-padded if needed."""

    source_rows: int
    block_count: int
    blocks: tuple[DataMatrix, ...]
    pad_rows: int

    @property
    def block_rows(self) -> int:
        return self.blocks[0].rows

    @property
    def cols(self) -> int:
        return self.blocks[0].cols

    def concat(self) -> DataMatrix:
        """Reassemble the source matrix, stripping the padding rows."""
        if self.blocks[0].is_sparse:
            stacked = sp.vstack([b.raw for b in self.blocks], format="csr")
        else:
            stacked = np.vstack([b.raw for b in self.blocks])
        return DataMatrix(stacked[: self.source_rows])


def partition(a: DataMatrix, n: int) -> BlockPartition:
    """Split ``a`` into n row blocks of equal height.

    When n does not divide the row count the last block is padded with zero
    rows and ``pad_rows`` records how many, so concat() is an exact inverse.
    """
    block_rows, pad = partition_dims(a.rows, n)
    mat = a.raw
    blocks = []
    for b in range(n):
        lo = b * block_rows
        hi = min(lo + block_rows, a.rows)
        piece = mat[lo:hi]
        if hi - lo < block_rows:
            if a.is_sparse:
                filler = sp.csr_array((block_rows - (hi - lo), a.cols), dtype=np.float64)
                piece = sp.vstack([piece, filler], format="csr")
            else:
                piece = np.vstack([piece, np.zeros((block_rows - (hi - lo), a.cols))])
        blocks.append(DataMatrix(piece))
    return BlockPartition(
        source_rows=a.rows, block_count=n, blocks=tuple(blocks), pad_rows=pad
    )


def block_multiply(block: DataMatrix, x) -> np.ndarray:
    """Partial transform: one block times the input vector."""
    return block.matvec(x)


def load_matrix(path, *, sparse: bool | None = None) -> DataMatrix:
    """Read a matrix from Matrix Market (.mtx/.mm) or CSV.

    ``sparse`` forces the storage kind; None keeps whatever the file
    implies (coordinate files stay CSR, array/CSV files stay dense).
    """
    p = Path(path)
    if p.suffix.lower() in (".mtx", ".mm"):
        mat = scipy.io.mmread(p)
        was_sparse = sp.issparse(mat)
    else:
        mat = np.loadtxt(p, delimiter=",", dtype=np.float64, ndmin=2)
        was_sparse = False
    want_sparse = was_sparse if sparse is None else sparse
    if want_sparse:
        return DataMatrix(sp.csr_array(mat))
    return DataMatrix(mat.toarray() if sp.issparse(mat) else mat)


def save_matrix(path, a: DataMatrix) -> None:
    """Write Matrix Market for .mtx/.mm paths, CSV otherwise."""
    p = Path(path)
    if p.suffix.lower() in (".mtx", ".mm"):
        scipy.io.mmwrite(p, sp.coo_array(a.raw) if a.is_sparse else a.toarray())
    else:
        np.savetxt(p, a.toarray(), delimiter=",", fmt="%.17g")


def save_vector(path, vec) -> None:
    """One value per line, full float precision."""
    arr = np.asarray(vec, dtype=np.float64).ravel()
    Path(path).write_text("".join(f"{v:.17g}\n" for v in arr), encoding="ascii")


def load_vector(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", dtype=np.float64, ndmin=1)
