"""Linear algebra over the prime field GF(p).

Deterministic row reduction (leftmost-pivot, first-nonzero-row order) so
that coset representatives and transversals derived from it are stable
across runs.
"""

from __future__ import annotations

import numpy as np


def _inv_mod(a: int, p: int) -> int:
    return pow(int(a), p - 2, p)


def rref(mat, p: int):
    """Reduced row echelon form over GF(p).

    Returns (R, pivots) with R the reduced matrix (int64, entries in
    [0, p)) and pivots the list of pivot column indices in order.
    """
    R = np.array(mat, dtype=np.int64) % p
    if R.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        sel = None
        for i in range(r, rows):
            if R[i, c] % p:
                sel = i
                break
        if sel is None:
            continue
        if sel != r:
            R[[r, sel]] = R[[sel, r]]
        R[r] = (R[r] * _inv_mod(R[r, c], p)) % p
        for i in range(rows):
            if i != r and R[i, c]:
                R[i] = (R[i] - R[i, c] * R[r]) % p
        pivots.append(c)
        r += 1
    return R, pivots


def rank(mat, p: int) -> int:
    return len(rref(mat, p)[1])


def solve(mat, rhs, p: int):
    """One solution of mat @ v = rhs over GF(p), or None if inconsistent.

    Free variables are set to zero, so the solution is deterministic.
    """
    A = np.array(mat, dtype=np.int64) % p
    b = np.array(rhs, dtype=np.int64) % p
    if A.shape[0] != len(b):
        raise ValueError("matrix and rhs row counts differ")
    aug = np.concatenate([A, b[:, None]], axis=1)
    R, pivots = rref(aug, p)
    cols = A.shape[1]
    if cols in pivots:
        return None
    v = np.zeros(cols, dtype=np.int64)
    for i, c in enumerate(pivots):
        v[c] = R[i, cols]
    return v


def nullspace(mat, p: int):
    """Basis of the right nullspace of mat over GF(p).

    Returns an array of shape (dim, cols); empty (0, cols) if trivial.
    One basis vector per free column, unit in that column.
    """
    A = np.array(mat, dtype=np.int64) % p
    R, pivots = rref(A, p)
    cols = A.shape[1]
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((len(free), cols), dtype=np.int64)
    for j, fc in enumerate(free):
        basis[j, fc] = 1
        for i, pc in enumerate(pivots):
            basis[j, pc] = (-R[i, fc]) % p
    return basis


def row_space_contains(mat, vec, p: int) -> bool:
    """True if vec lies in the row space of mat over GF(p)."""
    A = np.array(mat, dtype=np.int64) % p
    v = np.array(vec, dtype=np.int64) % p
    if A.shape[0] == 0:
        return not v.any()
    return rank(A, p) == rank(np.vstack([A, v]), p)


def row_basis(mat, p: int):
    """Rows of the reduced echelon form that are non-zero (a canonical
    basis of the row space)."""
    R, pivots = rref(mat, p)
    return R[: len(pivots)]
