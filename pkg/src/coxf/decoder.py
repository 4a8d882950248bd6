"""Decoders recovering y = Ax from any sufficient subset of worker results.

Three routes:

* ``inverse_decode``   invert the n x n coefficient submatrix exactly over
  the rationals and apply it as one dense matrix product. Reference
  implementation; always costs n * n coefficient applications.
* ``hybrid_decode``    peel singleton rows while any exist; when the ripple
  dries up, recover one chosen block by a rooting step (solve
  Msub^T u = e_k over the rationals and combine the originally received
  results with weights u), then keep peeling.
* ``diagonal_decode``  the banded-code schedule: with U sorted and k the
  number of received workers with id <= n, root exactly the blocks
  [1..n] minus those ids first; peeling then finishes on its own, so at
  most m - n blocks are ever rooted.

Structural math (singularity, rooting weights, inverses) is exact rational.
Block data stays 64-bit float unless ``exact=True``, which runs the data
path on Fractions too and makes integer-data decodes exactly reproducing.

Operation accounting (``scalar_ops``), one unit per multiply-add pair on a
block entry: peeling charges block_len per applied nonzero coefficient,
a singleton normalization charges block_len when its coefficient is not 1,
rooting charges block_len per nonzero weight, and the inverse route charges
the dense n*n application it actually performs. The closing re-encode
residual check is verification, not decoding, and is not charged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .codes import CodingMatrix
from .exact import invert_exact, solve_exact
from .seeding import rng_from


class DecodeError(RuntimeError):
    """The received subset cannot determine every block."""

    def __init__(self, message: str, *, recovered=None, rooting_steps: int = 0,
                 peeling_steps: int = 0):
        super().__init__(message)
        self.recovered = dict(recovered or {})
        self.rooting_steps = rooting_steps
        self.peeling_steps = peeling_steps


@dataclass(frozen=True)
class ReceivedSet:
    """Results from n distinct workers, tied to the code that produced them."""

    code: CodingMatrix
    subset: tuple[int, ...]
    results: tuple[np.ndarray, ...]
    pad_rows: int = 0

    def __post_init__(self):
        subset = tuple(int(i) for i in self.subset)
        if list(subset) != sorted(set(subset)):
            raise ValueError("subset must be sorted distinct worker ids")
        if subset and not 1 <= subset[0] <= subset[-1] <= self.code.m:
            raise ValueError(f"subset out of range 1..{self.code.m}")
        if len(subset) != self.code.n:
            raise ValueError(f"need exactly n={self.code.n} results, got {len(subset)}")
        results = tuple(np.asarray(r) for r in self.results)
        lengths = {r.shape for r in results}
        if len(lengths) > 1 or results[0].ndim != 1:
            raise ValueError("results must be equal-length vectors")
        object.__setattr__(self, "subset", subset)
        object.__setattr__(self, "results", results)

    @property
    def block_len(self) -> int:
        return int(self.results[0].shape[0])

    def submatrix(self) -> list[list[int]]:
        return self.code.submatrix(self.subset)


@dataclass(frozen=True)
class DecodeReport:
    """Decode outcome plus the step and operation tallies."""

    output: np.ndarray
    rooting_steps: int
    peeling_steps: int
    scalar_ops: int
    method: str
    residual: float

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "rooting_steps": self.rooting_steps,
            "peeling_steps": self.peeling_steps,
            "scalar_ops": self.scalar_ops,
            "residual": self.residual,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def rooting_vector(msub, k0: int) -> list[Fraction]:
    """Weights u with Msub^T u = e_k0, exact over the rationals.

    Combining the received results with these weights isolates the block in
    column k0. Raises DecodeError when Msub is singular.
    """
    n = len(msub)
    if not 1 <= k0 <= n:
        raise ValueError(f"block index {k0} outside 1..{n}")
    transposed = [[int(msub[i][j]) for i in range(n)] for j in range(n)]
    rhs = [1 if j + 1 == k0 else 0 for j in range(n)]
    u = solve_exact(transposed, rhs)
    if u is None:
        raise DecodeError("not decodable from this subset")
    return u


def _to_exact(vec: np.ndarray) -> np.ndarray:
    out = np.empty(vec.shape, dtype=object)
    for idx, v in enumerate(vec):
        out[idx] = v if isinstance(v, Fraction) else Fraction(v)
    return out


class _PeelState:
    """Mutable residual system for the peeling/rooting loop."""

    def __init__(self, received: ReceivedSet, exact: bool):
        self.n = received.code.n
        self.block_len = received.block_len
        self.exact = exact
        self.msub = received.submatrix()
        if exact:
            self.orig = [_to_exact(r) for r in received.results]
        else:
            self.orig = [np.asarray(r, dtype=np.float64) for r in received.results]
        self.work = [v.copy() for v in self.orig]
        self.rows: list[dict[int, int]] = [
            {j + 1: c for j, c in enumerate(mrow) if c} for mrow in self.msub
        ]
        self.col_rows: dict[int, set[int]] = {j: set() for j in range(1, self.n + 1)}
        for pos, row in enumerate(self.rows):
            for j in row:
                self.col_rows[j].add(pos)
        self.recovered: dict[int, np.ndarray] = {}
        self.ops = 0
        self.peels = 0
        self.roots = 0

    @property
    def pending(self) -> list[int]:
        return sorted(j for j in range(1, self.n + 1) if j not in self.recovered)

    def singleton_row(self) -> int | None:
        for pos, row in enumerate(self.rows):
            if len(row) == 1:
                return pos
        return None

    def _settle(self, j: int, vec: np.ndarray, consumed_pos: int | None) -> None:
        self.recovered[j] = vec
        for pos in sorted(self.col_rows.pop(j)):
            coef = self.rows[pos].pop(j)
            if pos == consumed_pos:
                continue
            self.work[pos] = self.work[pos] - coef * vec
            self.ops += self.block_len

    def peel(self, pos: int) -> None:
        ((j, coef),) = self.rows[pos].items()
        vec = self.work[pos]
        if coef != 1:
            vec = vec * Fraction(1, coef) if self.exact else vec / coef
            self.ops += self.block_len
        self._settle(j, vec, consumed_pos=pos)
        self.peels += 1

    def root(self, j: int) -> None:
        try:
            u = rooting_vector(self.msub, j)
        except DecodeError as err:
            raise DecodeError(str(err), recovered=self.recovered,
                              rooting_steps=self.roots, peeling_steps=self.peels) from None
        terms = [(k, w) for k, w in enumerate(u) if w != 0]
        if self.exact:
            vec = sum((w * self.orig[k] for k, w in terms),
                      start=np.full(self.block_len, Fraction(0), dtype=object))
        else:
            vec = np.zeros(self.block_len)
            for k, w in terms:
                vec = vec + float(w) * self.orig[k]
        self.ops += len(terms) * self.block_len
        self._settle(j, vec, consumed_pos=None)
        self.roots += 1


def _assemble(recovered: dict[int, np.ndarray], received: ReceivedSet) -> np.ndarray:
    parts = [recovered[j] for j in range(1, received.code.n + 1)]
    stacked = np.concatenate(parts)
    if received.pad_rows:
        stacked = stacked[: len(stacked) - received.pad_rows]
    return stacked


def _residual(recovered: dict[int, np.ndarray], received: ReceivedSet, exact: bool) -> float:
    """Max relative re-encoding mismatch against the received results."""
    worst = 0.0
    msub = received.submatrix()
    for pos, mrow in enumerate(msub):
        if exact:
            acc = np.full(received.block_len, Fraction(0), dtype=object)
        else:
            acc = np.zeros(received.block_len)
        for j, coef in enumerate(mrow, start=1):
            if coef:
                acc = acc + coef * recovered[j]
        if exact:
            diff = max((abs(d) for d in acc - _to_exact(received.results[pos])), default=Fraction(0))
            scale = 1 + max((abs(Fraction(v)) for v in received.results[pos]), default=Fraction(0))
            worst = max(worst, float(diff / scale))
        else:
            ref = np.asarray(received.results[pos], dtype=np.float64)
            diff = float(np.max(np.abs(acc - ref), initial=0.0))
            scale = 1.0 + float(np.max(np.abs(ref), initial=0.0))
            worst = max(worst, diff / scale)
    return worst


def _finish(state: _PeelState, received: ReceivedSet, method: str) -> DecodeReport:
    output = _assemble(state.recovered, received)
    return DecodeReport(
        output=output,
        rooting_steps=state.roots,
        peeling_steps=state.peels,
        scalar_ops=state.ops,
        method=method,
        residual=_residual(state.recovered, received, state.exact),
    )


def hybrid_decode(received: ReceivedSet, *, exact: bool = False,
                  root_choice: str = "lowest", seed: int = 0) -> DecodeReport:
    """Peel singletons; when none remain, root one unrecovered block.

    ``root_choice`` picks the rooted block: "lowest" (default, deterministic)
    or "random" (seeded). Raises DecodeError with partial progress when the
    coefficient submatrix is singular.
    """
    if root_choice not in ("lowest", "random"):
        raise ValueError("root_choice must be 'lowest' or 'random'")
    rng = rng_from(seed, 0x0DEC) if root_choice == "random" else None
    state = _PeelState(received, exact)
    while len(state.recovered) < state.n:
        pos = state.singleton_row()
        if pos is not None:
            state.peel(pos)
            continue
        pending = state.pending
        j = pending[int(rng.integers(len(pending)))] if rng is not None else pending[0]
        state.root(j)
    return _finish(state, received, "hybrid")


def diagonal_decode(received: ReceivedSet, s: int | None = None, *,
                    exact: bool = False) -> DecodeReport:
    """Banded-code schedule: root [1..n] minus the received ids <= n, then peel.

    Rooting work is bounded by the band width: at most m - n = s blocks are
    rooted whatever the subset. Only meaningful for the diagonal families.
    """
    code = received.code
    if code.family not in ("s-diagonal", "one-diagonal"):
        raise ValueError("diagonal schedule requires an s-diagonal or one-diagonal code")
    band_s = code.m - code.n
    if s is not None and s != band_s:
        raise ValueError(f"code has m - n = {band_s}, not s = {s}")
    low_ids = {i for i in received.subset if i <= code.n}
    to_root = sorted(set(range(1, code.n + 1)) - low_ids)
    state = _PeelState(received, exact)
    for j in to_root:
        state.root(j)
    while len(state.recovered) < state.n:
        pos = state.singleton_row()
        if pos is None:
            raise DecodeError("peeling stalled after the scheduled rooting steps",
                              recovered=state.recovered, rooting_steps=state.roots,
                              peeling_steps=state.peels)
        state.peel(pos)
    return _finish(state, received, "diagonal-schedule")


def inverse_decode(received: ReceivedSet, *, exact: bool = False) -> DecodeReport:
    """Invert the coefficient submatrix exactly and apply it densely."""
    n = received.code.n
    inv = invert_exact(received.submatrix())
    if inv is None:
        raise DecodeError("not decodable from this subset")
    block_len = received.block_len
    if exact:
        orig = [_to_exact(r) for r in received.results]
        recovered = {}
        for j in range(1, n + 1):
            acc = np.full(block_len, Fraction(0), dtype=object)
            for k in range(n):
                w = inv[j - 1][k]
                if w:
                    acc = acc + w * orig[k]
            recovered[j] = acc
    else:
        invf = np.array([[float(w) for w in row] for row in inv])
        stacked = np.stack([np.asarray(r, dtype=np.float64) for r in received.results])
        out_blocks = invf @ stacked
        recovered = {j: out_blocks[j - 1] for j in range(1, n + 1)}
    output = _assemble(recovered, received)
    return DecodeReport(
        output=output,
        rooting_steps=n,
        peeling_steps=0,
        scalar_ops=n * n * block_len,
        method="inverse",
        residual=_residual(recovered, received, exact),
    )
