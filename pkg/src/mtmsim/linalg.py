"""Dense LU with partial pivoting (LAPACK getrf/getrs via scipy)."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

PIVOT_FLOOR = 1e-13


class SingularMatrix(np.linalg.LinAlgError):
    """A pivot fell below the floor; usually a structurally singular circuit."""


class LU:
    """Factorization of a square, possibly nonsymmetric matrix."""

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("LU needs a square matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        self.n = a.shape[0]
        if self.n == 0:
            self._lu = None
            return
        with warnings.catch_warnings():
            # an exact zero pivot is reported below as SingularMatrix
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu = scipy.linalg.lu_factor(a, check_finite=False)
        pivots = np.abs(np.diag(self._lu[0]))
        worst = int(np.argmin(pivots))
        if pivots[worst] <= PIVOT_FLOOR:
            raise SingularMatrix(f"pivot {pivots[worst]:.3g} at position {worst}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return np.zeros(0)
        return scipy.linalg.lu_solve(self._lu, b, check_finite=False)


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return LU(a).solve(b)
