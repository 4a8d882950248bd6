"""Coding-matrix construction, block encoding, and load accounting.

A coding matrix M is m x n: row i says which data blocks worker i combines
and with what integer weight. Coefficients are drawn uniformly from
{1..coeff_set_size} (zero is excluded so the support of M is exactly the
bipartite structure the rank analysis works on). Supported families:

* ``s-diagonal``    banded, m = n + s; worker i combines blocks
                    max(1, i-s)..min(i, n). Load is exactly n*(s+1).
* ``one-diagonal``  the unit-coefficient s = 1 band (m = n + 1, load 2n).
* ``p-bernoulli``   every cell nonzero independently with probability p.
* ``cross``         union of per-row picks (d1 columns each) and per-column
                    picks (d2 rows each). Fractional d mixes floor(d) and
                    ceil(d) picks so the mean pick count equals d.

Every constructor is a pure function of its arguments including ``seed``:
same inputs give the same matrix, byte for byte in the canonical JSON form.
Worker ids run 1..m and block ids 1..n throughout.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .blocks import BlockPartition, DataMatrix
from .seeding import derive_seed, rng_from, sample_without_replacement

DEFAULT_COEFF_SET_SIZE = 2**31 - 1

FAMILIES = ("s-diagonal", "one-diagonal", "p-bernoulli", "cross")


class EmptySupportWarning(UserWarning):
    """A coding-matrix row has no nonzero entries: that worker is useless."""


class CodeGenerationError(RuntimeError):
    """Raised when no valid matrix was found within the trial budget."""

    def __init__(self, message: str, *, witness=None, trials: int = 0):
        super().__init__(message)
        self.witness = tuple(witness) if witness is not None else None
        self.trials = trials


@dataclass(frozen=True)
class CodeSpec:
    """Parameters identifying one coding matrix (family, sizes, seed)."""

    family: str
    n: int
    m: int
    s: int | None = None
    p: float | None = None
    d1: float | None = None
    d2: float | None = None
    coeff_set_size: int = DEFAULT_COEFF_SET_SIZE
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.coeff_set_size < 1:
            raise ValueError("coefficient set must be non-empty")
        if self.family == "s-diagonal":
            if self.s is None or self.s < 0:
                raise ValueError("s-diagonal needs s >= 0")
            if self.m != self.n + self.s:
                raise ValueError(f"s-diagonal needs m = n + s, got m={self.m}, n+s={self.n + self.s}")
        elif self.family == "one-diagonal":
            if self.m != self.n + 1:
                raise ValueError("one-diagonal needs m = n + 1")
        elif self.family == "p-bernoulli":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ValueError("p-bernoulli needs p in (0, 1]")
        elif self.family == "cross":
            if self.d1 is None or self.d2 is None:
                raise ValueError("cross needs d1 and d2")
            if not 1 <= self.d1 <= self.n:
                raise ValueError("cross needs 1 <= d1 <= n")
            if not 1 <= self.d2 <= self.m:
                raise ValueError("cross needs 1 <= d2 <= m")

    def params_dict(self) -> dict:
        out: dict = {"family": self.family, "n": self.n, "m": self.m,
                     "coeff_set_size": self.coeff_set_size, "seed": self.seed}
        for name in ("s", "p", "d1", "d2"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


class CodingMatrix:
    """Sparse m x n integer matrix; entry (i, j) weights block j for worker i."""

    __slots__ = ("m", "n", "family", "seed", "_rows")

    def __init__(self, m: int, n: int, entries, *, family: str | None = None,
                 seed: int | None = None):
        if m < 1 or n < 1:
            raise ValueError("m and n must be positive")
        per_row: list[dict[int, int]] = [dict() for _ in range(m)]
        for i, j, coef in entries:
            if not 1 <= i <= m or not 1 <= j <= n:
                raise ValueError(f"entry ({i}, {j}) outside 1..{m} x 1..{n}")
            coef = int(coef)
            if coef == 0:
                raise ValueError(f"zero coefficient stored at ({i}, {j})")
            if j in per_row[i - 1]:
                raise ValueError(f"duplicate entry at ({i}, {j})")
            per_row[i - 1][j] = coef
        self.m = m
        self.n = n
        self.family = family
        self.seed = seed
        self._rows = tuple(tuple(sorted(row.items())) for row in per_row)

    # -- structure ---------------------------------------------------------

    def row(self, i: int) -> tuple[tuple[int, int], ...]:
        """Sorted (block id, coefficient) pairs of worker i."""
        return self._rows[i - 1]

    def support(self, i: int) -> tuple[int, ...]:
        return tuple(j for j, _ in self._rows[i - 1])

    def coef(self, i: int, j: int) -> int:
        return dict(self._rows[i - 1]).get(j, 0)

    @property
    def nnz(self) -> int:
        return sum(len(row) for row in self._rows)

    def entries(self):
        for i, row in enumerate(self._rows, start=1):
            for j, coef in row:
                yield i, j, coef

    def column_degrees(self) -> list[int]:
        deg = [0] * self.n
        for _, j, _ in self.entries():
            deg[j - 1] += 1
        return deg

    def submatrix(self, subset) -> list[list[int]]:
        """Dense integer rows for the workers in ``subset`` (given order)."""
        out = []
        for i in subset:
            dense = [0] * self.n
            for j, coef in self._rows[i - 1]:
                dense[j - 1] = coef
            out.append(dense)
        return out

    def to_dense(self) -> np.ndarray:
        return np.array(self.submatrix(range(1, self.m + 1)), dtype=np.int64)

    # -- identity ------------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, CodingMatrix):
            return NotImplemented
        return (self.m, self.n, self.family, self.seed, self._rows) == (
            other.m, other.n, other.family, other.seed, other._rows)

    def __hash__(self):
        return hash((self.m, self.n, self._rows))

    def __repr__(self) -> str:
        fam = self.family or "custom"
        return f"CodingMatrix({fam}, m={self.m}, n={self.n}, nnz={self.nnz})"

    def __reduce__(self):
        return (_rebuild_coding_matrix,
                (self.m, self.n, list(self.entries()), self.family, self.seed))

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        """Canonical byte-exact form: entries sorted by (i, j)."""
        doc = {
            "family": self.family,
            "m": self.m,
            "n": self.n,
            "seed": self.seed,
            "entries": [[i, j, coef] for i, j, coef in self.entries()],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "CodingMatrix":
        doc = json.loads(text)
        try:
            return cls(doc["m"], doc["n"], doc["entries"],
                       family=doc.get("family"), seed=doc.get("seed"))
        except (KeyError, TypeError) as err:
            raise ValueError(f"invalid coding matrix document: {err!r}") from None


def _rebuild_coding_matrix(m, n, entries, family, seed):
    return CodingMatrix(m, n, entries, family=family, seed=seed)


# -- constructors -------------------------------------------------------------


def _draw_coef(rng: np.random.Generator, size: int) -> int:
    return int(rng.integers(1, size + 1))


def make_s_diagonal(n: int, m: int, s: int, coeff_set_size: int = DEFAULT_COEFF_SET_SIZE,
                    seed: int = 0) -> CodingMatrix:
    """Banded code: worker i combines blocks max(1, i-s)..min(i, n).

    Requires m = n + s; every column then has degree exactly s + 1 and the
    load is n*(s+1). Coefficients are drawn row-major along the band.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    if m != n + s:
        raise ValueError(f"s-diagonal needs m = n + s, got m={m}, n+s={n + s}")
    if coeff_set_size < 1:
        raise ValueError("coefficient set must be non-empty")
    rng = rng_from(seed)
    entries = []
    for i in range(1, m + 1):
        for j in range(max(1, i - s), min(i, n) + 1):
            entries.append((i, j, _draw_coef(rng, coeff_set_size)))
    return CodingMatrix(m, n, entries, family="s-diagonal", seed=seed)


def make_one_diagonal(n: int) -> CodingMatrix:
    """Unit-coefficient band with m = n + 1: {1}, {1,2}, ..., {n-1,n}, {n}."""
    if n < 1:
        raise ValueError("n must be positive")
    entries = [(1, 1, 1), (n + 1, n, 1)]
    for i in range(2, n + 1):
        entries.append((i, i - 1, 1))
        entries.append((i, i, 1))
    return CodingMatrix(n + 1, n, entries, family="one-diagonal", seed=None)


def make_p_bernoulli(n: int, m: int, p: float, coeff_set_size: int = DEFAULT_COEFF_SET_SIZE,
                     seed: int = 0) -> CodingMatrix:
    """Every cell nonzero independently with probability p.

    Draw order is fixed: one row-major uniform per cell decides the support,
    then coefficients for the surviving cells in row-major order.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    rng = rng_from(seed)
    mask = rng.random((m, n)) < p
    coefs = rng.integers(1, coeff_set_size + 1, size=int(mask.sum()), dtype=np.int64)
    entries = []
    k = 0
    for i in range(m):
        for j in range(n):
            if mask[i, j]:
                entries.append((i + 1, j + 1, int(coefs[k])))
                k += 1
    return CodingMatrix(m, n, entries, family="p-bernoulli", seed=seed)


def _pick_count(rng: np.random.Generator, d: float) -> int:
    """floor(d) or ceil(d), mixed so the mean equals d."""
    lo = math.floor(d)
    frac = d - lo
    if frac == 0.0:
        return lo
    return lo + (1 if rng.random() < frac else 0)


def make_cross(n: int, m: int, d1: float, d2: float,
               coeff_set_size: int = DEFAULT_COEFF_SET_SIZE, seed: int = 0) -> CodingMatrix:
    """Union of row picks (d1 columns per row) and column picks (d2 rows
    per column); a position picked by both sides yields a single entry.

    Draw order: rows 1..m (pick count, then a partial Fisher-Yates sample),
    then columns 1..n likewise, then coefficients over the union sorted by
    (row, column).
    """
    if not 1 <= d1 <= n:
        raise ValueError("need 1 <= d1 <= n")
    if not 1 <= d2 <= m:
        raise ValueError("need 1 <= d2 <= m")
    rng = rng_from(seed)
    positions: set[tuple[int, int]] = set()
    for i in range(1, m + 1):
        k = _pick_count(rng, d1)
        for j0 in sample_without_replacement(rng, n, k):
            positions.add((i, j0 + 1))
    for j in range(1, n + 1):
        k = _pick_count(rng, d2)
        for i0 in sample_without_replacement(rng, m, k):
            positions.add((i0 + 1, j))
    entries = [(i, j, _draw_coef(rng, coeff_set_size)) for i, j in sorted(positions)]
    return CodingMatrix(m, n, entries, family="cross", seed=seed)


def build_code(spec: CodeSpec) -> CodingMatrix:
    """Construct the matrix a CodeSpec describes."""
    if spec.family == "s-diagonal":
        return make_s_diagonal(spec.n, spec.m, spec.s, spec.coeff_set_size, spec.seed)
    if spec.family == "one-diagonal":
        return make_one_diagonal(spec.n)
    if spec.family == "p-bernoulli":
        return make_p_bernoulli(spec.n, spec.m, spec.p, spec.coeff_set_size, spec.seed)
    if spec.family == "cross":
        return make_cross(spec.n, spec.m, spec.d1, spec.d2, spec.coeff_set_size, spec.seed)
    raise ValueError(f"unknown family {spec.family!r}")


# -- encoding ------------------------------------------------------------------


@dataclass(frozen=True)
class EncodedAssignment:
    """One worker's coded block and the block ids it mixes."""

    worker_id: int
    coded_block: DataMatrix
    support: tuple[int, ...]


def encode(part: BlockPartition, code: CodingMatrix) -> list[EncodedAssignment]:
    """Per-worker coded blocks: integer-weighted sums of the partition blocks.

    A row with empty support produces an all-zero coded block and raises an
    EmptySupportWarning; random families can generate such useless workers.
    """
    if part.block_count != code.n:
        raise ValueError(f"partition has {part.block_count} blocks, code expects {code.n}")
    sparse = part.blocks[0].is_sparse
    out = []
    for i in range(1, code.m + 1):
        row = code.row(i)
        if not row:
            warnings.warn(f"worker {i} has empty support and contributes nothing",
                          EmptySupportWarning, stacklevel=2)
        if sparse:
            acc = None
            for j, coef in row:
                term = part.blocks[j - 1].raw * float(coef)
                acc = term if acc is None else acc + term
            if acc is None:
                acc = sp.csr_array((part.block_rows, part.cols), dtype=np.float64)
            block = DataMatrix(acc)
        else:
            acc = np.zeros((part.block_rows, part.cols))
            for j, coef in row:
                acc += coef * part.blocks[j - 1].raw
            block = DataMatrix(acc)
        out.append(EncodedAssignment(worker_id=i, coded_block=block,
                                     support=tuple(j for j, _ in row)))
    return out


def computation_load(code: CodingMatrix) -> int:
    """Number of nonzero coefficients: total partial transforms performed."""
    return code.nnz


def regenerate_until_valid(spec: CodeSpec, max_trials: int = 8):
    """Redraw coefficients until every n x n submatrix is full rank.

    Only the s-diagonal family carries the all-subsets guarantee worth
    certifying; each trial redraws with a seed derived from (spec.seed,
    trial) and runs the exhaustive rank oracle. Returns (matrix,
    trials_used). Raises CodeGenerationError with the last failing subset
    if the budget runs out, e.g. for degenerate coefficient sets.
    """
    from .analysis import find_deficient_subset

    if spec.family != "s-diagonal":
        raise ValueError("regeneration guarantee only applies to the s-diagonal family")
    if max_trials < 1:
        raise ValueError("max_trials must be positive")
    witness = None
    for trial in range(max_trials):
        code = make_s_diagonal(spec.n, spec.m, spec.s, spec.coeff_set_size,
                               seed=derive_seed(spec.seed, trial))
        witness = find_deficient_subset(code)
        if witness is None:
            return code, trial + 1
    raise CodeGenerationError(
        f"no valid matrix in {max_trials} trials (last bad subset: {witness})",
        witness=witness, trials=max_trials)
