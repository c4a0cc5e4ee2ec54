"""Complex Hermitian linear algebra for the spatial model.

All functions accept leading batch axes (typically frequency) and operate on
the trailing ``M x M`` matrices independently.
"""
import numpy as np

from .exceptions import ShapeError, SingularMatrixError

RIDGE = 1e-10


def hermitian_part(H):
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def add_ridge(H, ridge=RIDGE):
    """H + ridge * trace(H)/M * I."""
    M = H.shape[-1]
    tr = np.real(np.trace(H, axis1=-2, axis2=-1))
    return H + (ridge * tr / M)[..., None, None] * np.eye(M)


def cholesky(H, ridge=RIDGE):
    """Lower Cholesky factor of a (ridged) Hermitian PSD matrix."""
    H = np.asarray(H)
    if H.shape[-1] != H.shape[-2]:
        raise ShapeError(f"expected square matrices, got {H.shape}")
    try:
        return np.linalg.cholesky(add_ridge(hermitian_part(H), ridge))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite after ridge") from exc


def solve_hermitian(H, B, ridge=RIDGE):
    """Solve H X = B through the Cholesky factor of H.

    ``B`` may be a matrix (..., M, K) or a vector (..., M).
    """
    B = np.asarray(B)
    vec = B.ndim == np.ndim(H) - 1
    if vec:
        B = B[..., None]
    L = cholesky(H, ridge)
    Y = np.linalg.solve(L, B)
    X = np.linalg.solve(np.conj(np.swapaxes(L, -1, -2)), Y)
    return X[..., 0] if vec else X


def logdet_qqh(Q):
    """log|det(Q Q^H)| = 2 log|det Q| via pivoted LU."""
    sign, logabs = np.linalg.slogdet(np.asarray(Q))
    if np.any(sign == 0):
        raise SingularMatrixError("diagonalizer is singular")
    return 2.0 * logabs


def weighted_scm(x, weights):
    """Weighted spatial covariance (1/T) sum_t w_t x_t x_t^H.

    Parameters
    ----------
    x : ndarray, complex, shape (..., T, M)
    weights : ndarray, real, shape (..., T), broadcastable against ``x[..., 0]``

    Returns
    -------
    ndarray, shape (..., M, M)
    """
    x = np.asarray(x)
    weights = np.asarray(weights, dtype=np.float64)
    n_t = x.shape[-2]
    if n_t == 0:
        raise ShapeError("cannot build a covariance from zero frames")
    return np.einsum("...t,...ti,...tj->...ij", weights, x, np.conj(x), optimize=True) / n_t
