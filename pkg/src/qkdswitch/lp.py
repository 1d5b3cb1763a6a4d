"""Dense tableau simplex for small LPs of the form max c'x, Ax <= b, x >= 0, b >= 0.

Because ``b >= 0`` the slack basis is feasible from the start, so no phase one
is needed. Pivoting follows Bland's rule, which cannot cycle on degenerate
problems (the max-min LP has a zero right-hand side on all but one row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPError", "LPResult", "simplex_max"]


class LPError(RuntimeError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    pivots: int
    basis: tuple[int, ...]


def simplex_max(c, A, b, *, max_pivots: int | None = None, tol: float = 1e-9) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("dimension mismatch between c, A and b")
    if np.any(b < 0):
        raise ValueError("simplex_max requires b >= 0")
    if max_pivots is None:
        max_pivots = 50 * (m + n)

    # tableau columns: x (n), slacks (m), rhs; last row holds -c (reduced costs)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))

    pivots = 0
    while True:
        reduced = T[m, :-1]
        entering = next((j for j in range(n + m) if reduced[j] < -tol), None)
        if entering is None:
            break
        if pivots >= max_pivots:
            raise LPError(f"simplex did not converge within {max_pivots} pivots")
        col = T[:m, entering]
        best_ratio = np.inf
        leaving = None
        for i in range(m):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if ratio < best_ratio - tol or (
                        abs(ratio - best_ratio) <= tol and leaving is not None
                        and basis[i] < basis[leaving]):
                    best_ratio = ratio
                    leaving = i
        if leaving is None:
            raise LPError("LP is unbounded")
        T[leaving] /= T[leaving, entering]
        for i in range(m + 1):
            if i != leaving and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering
        pivots += 1

    x = np.zeros(n + m)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    return LPResult(x[:n].copy(), float(T[m, -1]), pivots, tuple(basis))
