"""Sparse non-symmetric linear algebra: triplet assembly, compressed-row
storage, and a robust direct solve.

The storage and the factorization are delegated to scipy (CSR + SuperLU with
partial pivoting); the module owns the contracts: canonical sorted storage,
duplicate summation, pivot diagnostics, and a verified relative residual.
An optional stabilized bi-CG iteration with diagonal preconditioning is
available for large systems.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SparseMatrix", "SingularMatrixError", "from_triplets", "solve"]


class SingularMatrixError(ValueError):
    """Raised when the factorization hits a (near-)zero pivot."""

    def __init__(self, message, pivot_index=None, pivot=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot = pivot


class SparseMatrix:
    """Square sparse matrix in canonical compressed-row form."""

    def __init__(self, csr: sp.csr_matrix):
        if csr.shape[0] != csr.shape[1]:
            raise ValueError("matrix must be square")
        csr = csr.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr

    @property
    def n(self) -> int:
        return self._csr.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def values(self) -> np.ndarray:
        return self._csr.data

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ np.asarray(x, dtype=float)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def scipy_csr(self) -> sp.csr_matrix:
        return self._csr


def from_triplets(n: int, entries, cols=None, vals=None) -> SparseMatrix:
    """Build an n-by-n matrix from (row, col, value) triplets; duplicates are
    summed.  Accepts either a list of triples or three parallel arrays."""
    if cols is None:
        entries = list(entries)
        if entries:
            rows, cols, vals = map(np.asarray, zip(*entries))
        else:
            rows = cols = vals = np.zeros(0)
    else:
        rows = np.asarray(entries)
        cols = np.asarray(cols)
        vals = np.asarray(vals)
    rows = rows.astype(np.int64, copy=False)
    cols = cols.astype(np.int64, copy=False)
    if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise ValueError(f"triplet index out of range for dimension {n}")
    coo = sp.coo_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=(n, n))
    return SparseMatrix(coo.tocsr())


def _solve_direct(matrix: SparseMatrix, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = spla.splu(matrix.scipy_csr().tocsc())
    except RuntimeError as exc:  # SuperLU signals exact singularity this way
        raise SingularMatrixError(f"sparse factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    scale = np.abs(matrix.values).max(initial=0.0)
    cutoff = 1e-14 * scale
    if np.any(diag <= cutoff):
        idx = int(np.argmin(diag))
        raise SingularMatrixError(
            f"numerically singular matrix: pivot {diag[idx]:.3e} at index {idx} "
            f"(cutoff {cutoff:.3e})",
            pivot_index=idx,
            pivot=float(diag[idx]),
        )
    return lu.solve(rhs)


def _solve_iterative(matrix: SparseMatrix, rhs: np.ndarray, tol: float) -> np.ndarray:
    csr = matrix.scipy_csr()
    diag = csr.diagonal()
    safe = np.where(np.abs(diag) > 1e-300, diag, 1.0)
    precond = spla.LinearOperator(csr.shape, matvec=lambda x: x / safe)
    x, info = spla.bicgstab(csr, rhs, rtol=0.1 * tol, atol=0.0, M=precond, maxiter=20 * csr.shape[0])
    if info != 0:
        raise SingularMatrixError(f"iterative solve did not converge (info={info})")
    return x


def solve(matrix: SparseMatrix, rhs, tol: float = 1e-10, method: str = "direct") -> np.ndarray:
    """Solve M x = rhs to the requested relative residual.

    method "direct" (default): sparse LU with partial pivoting;
    method "iterative": stabilized bi-CG with diagonal preconditioning.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (matrix.n,):
        raise ValueError(f"rhs length {rhs.shape} does not match dimension {matrix.n}")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("non-finite right-hand side")
    if matrix.n == 0:
        return np.zeros(0)
    if method == "direct":
        x = _solve_direct(matrix, rhs)
    elif method == "iterative":
        x = _solve_iterative(matrix, rhs, tol)
    else:
        raise ValueError(f"unknown solve method {method!r}")
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0:
        residual = np.linalg.norm(matrix.matvec(x) - rhs) / rhs_norm
        if not residual <= tol:
            raise SingularMatrixError(
                f"solve residual {residual:.3e} exceeds tolerance {tol:.1e}"
            )
    return x
