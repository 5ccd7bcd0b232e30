"""Continuous Lyapunov equations A^T P + P A = -S for small dense matrices."""

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import lu_factor, lu_solve

from .errors import InvalidParametersError, NotHurwitzError, SingularSystemError


def spectral_abscissa(a: ArrayLike) -> float:
    """Largest real part among the eigenvalues of a."""
    return float(np.max(np.linalg.eigvals(np.asarray(a, dtype=np.float64)).real))


def check_hurwitz(a: ArrayLike, error: type[NotHurwitzError] = NotHurwitzError) -> float:
    """Return the spectral abscissa of a, raising when it is not negative."""
    abscissa = spectral_abscissa(a)
    if not abscissa < 0:
        raise error(f"matrix is not Hurwitz (max real eigenvalue part {abscissa:.3e})")
    return abscissa


class LyapunovOperator:
    """
    The map P -> A^T P + P A restricted to symmetric P.

    The operator acts on the n(n+1)/2 upper-triangle unknowns of P and is
    LU-factored once, so repeated solves against the same A are cheap.
    """

    def __init__(self, a: ArrayLike):
        self.a = np.asarray(a, dtype=np.float64)
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise InvalidParametersError(f"expected a square matrix, got {self.a.shape}")
        check_hurwitz(self.a, SingularSystemError)
        self.n = n
        self._rows, self._cols = np.triu_indices(n)
        columns = []
        for i, j in zip(self._rows, self._cols, strict=True):
            basis = np.zeros((n, n))
            basis[i, j] = basis[j, i] = 1.0
            image = self.a.T @ basis + basis @ self.a
            columns.append(image[self._rows, self._cols])
        self._lu = lu_factor(np.column_stack(columns))

    def solve(self, s_rhs: ArrayLike) -> NDArray[np.float64]:
        s = np.asarray(s_rhs, dtype=np.float64)
        sym = 0.5 * (s + s.T)
        unknowns = lu_solve(self._lu, -sym[self._rows, self._cols])
        p = np.zeros((self.n, self.n))
        p[self._rows, self._cols] = unknowns
        p[self._cols, self._rows] = unknowns
        return p

    def residual(self, p: ArrayLike, s_rhs: ArrayLike) -> float:
        """Infinity norm of A^T P + P A + S."""
        pm = np.asarray(p, dtype=np.float64)
        return float(np.max(np.abs(self.a.T @ pm + pm @ self.a + np.asarray(s_rhs))))


def lyapunov_solve(a_bar: ArrayLike, s_rhs: ArrayLike) -> NDArray[np.float64]:
    """Solve A^T P + P A = -S for symmetric P; P is positive definite when S is."""
    return LyapunovOperator(a_bar).solve(s_rhs)
