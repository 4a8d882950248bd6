"""Exact integer and rational linear algebra.

Rank, determinant, solves and inverses of the integer coding matrices must
be exact: the structural claims checked elsewhere (recovery thresholds,
straggler resistance, leave-one-out determinants) are all-or-nothing, and
float elimination misclassifies near-singular integer matrices once the
coefficients get large. Determinant and rank use fraction-free Bareiss
elimination on Python ints (intermediates are minors, so the divisions are
exact); solves and inverses use Fraction Gauss-Jordan, which is plenty fast
at the matrix sizes that occur here (n up to a few dozen).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

IntMatrix = Sequence[Sequence[int]]


def det_exact(rows: IntMatrix) -> int:
    """Exact determinant of a square integer matrix."""
    a = [[int(v) for v in row] for row in rows]
    n = len(a)
    if n == 0 or any(len(row) != n for row in a):
        raise ValueError("determinant requires a non-empty square matrix")
    sign = 1
    prev = 1
    for k in range(n - 1):
        piv = next((i for i in range(k, n) if a[i][k] != 0), None)
        if piv is None:
            return 0
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            sign = -sign
        pk = a[k][k]
        ak = a[k]
        for i in range(k + 1, n):
            ai = a[i]
            f = ai[k]
            for j in range(k + 1, n):
                # exact by the Bareiss minor identity
                ai[j] = (pk * ai[j] - f * ak[j]) // prev
            ai[k] = 0
        prev = pk
    return sign * a[n - 1][n - 1]


def rank_exact(rows: IntMatrix, stop_at: int | None = None) -> int:
    """Exact rank of an integer matrix.

    Fraction-free elimination with full pivoting (first nonzero scanning
    columns left to right). ``stop_at`` allows an early exit as soon as the
    rank is known to reach that value, which is all the full-rank checks
    need.
    """
    a = [[int(v) for v in row] for row in rows]
    m = len(a)
    n = len(a[0]) if m else 0
    if any(len(row) != n for row in a):
        raise ValueError("ragged matrix")
    r = 0
    prev = 1
    limit = min(m, n)
    while r < limit:
        if stop_at is not None and r >= stop_at:
            return r
        piv = None
        for j in range(r, n):
            for i in range(r, m):
                if a[i][j]:
                    piv = (i, j)
                    break
            if piv:
                break
        if piv is None:
            break
        pi, pj = piv
        if pi != r:
            a[r], a[pi] = a[pi], a[r]
        if pj != r:
            for row in a:
                row[r], row[pj] = row[pj], row[r]
        p = a[r][r]
        ar = a[r]
        for i in range(r + 1, m):
            ai = a[i]
            f = ai[r]
            for j in range(r + 1, n):
                ai[j] = (p * ai[j] - f * ar[j]) // prev
            ai[r] = 0
        prev = p
        r += 1
    return r


def is_full_column_rank(rows: IntMatrix, n: int) -> bool:
    """True iff the matrix has rank n (its full column count)."""
    return rank_exact(rows) == n


def solve_exact(rows: IntMatrix, rhs: Sequence[int]) -> list[Fraction] | None:
    """Solve A x = rhs exactly over the rationals; None if A is singular."""
    n = len(rows)
    if n == 0 or any(len(row) != n for row in rows) or len(rhs) != n:
        raise ValueError("solve requires a square system")
    a = [[Fraction(v) for v in row] + [Fraction(rhs[i])] for i, row in enumerate(rows)]
    for col in range(n):
        piv = next((i for i in range(col, n) if a[i][col] != 0), None)
        if piv is None:
            return None
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
        pv = a[col][col]
        arow = a[col]
        for i in range(n):
            if i == col:
                continue
            f = a[i][col]
            if f:
                ratio = f / pv
                ai = a[i]
                for j in range(col, n + 1):
                    ai[j] -= ratio * arow[j]
    return [a[i][n] / a[i][i] for i in range(n)]


def invert_exact(rows: IntMatrix) -> list[list[Fraction]] | None:
    """Exact rational inverse of a square integer matrix; None if singular."""
    n = len(rows)
    if n == 0 or any(len(row) != n for row in rows):
        raise ValueError("inverse requires a non-empty square matrix")
    a = [
        [Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)]
        for i, row in enumerate(rows)
    ]
    for col in range(n):
        piv = next((i for i in range(col, n) if a[i][col] != 0), None)
        if piv is None:
            return None
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
        pv = a[col][col]
        arow = a[col]
        for j in range(col, 2 * n):
            arow[j] /= pv
        for i in range(n):
            if i == col:
                continue
            f = a[i][col]
            if f:
                ai = a[i]
                for j in range(col, 2 * n):
                    ai[j] -= f * arow[j]
    return [row[n:] for row in a]
