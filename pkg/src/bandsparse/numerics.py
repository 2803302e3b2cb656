"""Small complex linear-algebra kernel shared by the rest of the package.

Matrices and vectors are plain ``numpy`` ``complex128`` arrays; the helpers
here add the shape checks and failure reporting the solvers rely on.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

MAX_ELEMENTS = 2_000_000


class NumericsError(ValueError):
    """Raised on dimension mismatches or failed factorizations."""


def as_cvector(y) -> np.ndarray:
    v = np.asarray(y, dtype=np.complex128).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise NumericsError("vector has non-finite entries")
    return v


def as_cmatrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise NumericsError(f"expected a 2-D matrix, got {m.ndim}-D")
    if not np.all(np.isfinite(m)):
        raise NumericsError("matrix has non-finite entries")
    return m


def hermitian_product(A, y) -> np.ndarray:
    """Return ``A^H y``."""
    A = np.asarray(A, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != y.shape[0]:
        raise NumericsError(
            f"dimension mismatch: A has {A.shape[0]} rows, y has {y.shape[0]}"
        )
    return A.conj().T @ y


class HpdFactor:
    """Cholesky factor of a Hermitian positive-definite matrix.

    Build once, then call :meth:`solve` as often as needed.
    """

    def __init__(self, G):
        G = as_cmatrix(G)
        if G.shape[0] != G.shape[1]:
            raise NumericsError(f"matrix must be square, got {G.shape}")
        try:
            self._cho = linalg.cho_factor(G, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericsError(f"matrix is not Hermitian positive definite: {exc}") from exc
        self.n = G.shape[0]

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.complex128)
        if b.shape[0] != self.n:
            raise NumericsError(f"dimension mismatch: factor is {self.n}, rhs is {b.shape[0]}")
        return linalg.cho_solve(self._cho, b, check_finite=False)


def hpd_solve(G, b) -> np.ndarray:
    """Solve ``G x = b`` for Hermitian positive-definite ``G``."""
    return HpdFactor(G).solve(b)


def kronecker(A, B, max_elements: int = MAX_ELEMENTS) -> np.ndarray:
    """Kronecker product with a guard on the output size."""
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    A = A.reshape(A.shape[0], -1) if A.ndim else A.reshape(1, 1)
    B = B.reshape(B.shape[0], -1) if B.ndim else B.reshape(1, 1)
    size = A.shape[0] * B.shape[0] * A.shape[1] * B.shape[1]
    if size > max_elements:
        raise NumericsError(f"Kronecker product of {size} entries exceeds limit {max_elements}")
    return np.kron(A, B)


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    """Counter-style per-trial seeds; trial ``i`` gets the same stream
    regardless of how many trials run or in which order."""
    return [np.random.SeedSequence(seed, spawn_key=(i,)) for i in range(n)]
