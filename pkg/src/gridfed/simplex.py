"""Dense tableau simplex for small problems of the form

    maximise  c @ x   subject to  A @ x <= b,  x >= 0,  with b >= 0.

With a non-negative right-hand side the slack basis is feasible, so a single
phase suffices. Bland's rule picks entering and leaving variables, which
rules out cycling on the (frequent) degenerate pivots of dispatch problems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnboundedError(Exception):
    """The objective can grow without limit."""


class SimplexError(Exception):
    """Iteration limit hit or the problem is outside the supported form."""


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    value: float
    basis: tuple[int, ...]
    iterations: int


def simplex_max(c, A, b, tol: float = 1e-11, max_iter: int = 50_000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise SimplexError("shape mismatch between c, A and b")
    if np.any(b < 0):
        raise SimplexError("right-hand side must be non-negative")

    # columns: n structural, m slacks, rhs
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -c
    basis = list(range(n, n + m))

    it = 0
    while True:
        reduced = tab[m, :-1]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            break
        if it >= max_iter:
            raise SimplexError(f"no convergence after {max_iter} pivots")
        col = int(candidates[0])
        column = tab[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            raise UnboundedError(f"variable {col} can increase without bound")
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(tied, key=lambda r: basis[r]))
        tab[row] /= tab[row, col]
        others = np.arange(m + 1) != row
        tab[others] -= np.outer(tab[others, col], tab[row])
        basis[row] = col
        it += 1

    # recompute basic values from the original data to shed pivot round-off
    full = np.hstack([A, np.eye(m)])
    B = full[:, basis]
    try:
        xb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        xb = tab[:m, -1]
    z = np.zeros(n + m)
    z[basis] = np.maximum(xb, 0.0)
    x = z[:n]
    return SimplexResult(x=x, value=float(c @ x), basis=tuple(basis), iterations=it)
