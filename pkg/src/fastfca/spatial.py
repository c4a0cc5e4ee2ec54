"""Jointly-diagonalizable (JD) spatial model.

Shapes used throughout:

* ``X``   mixture spectrogram, complex (F, T, M)
* ``Q``   diagonalizer, complex (F, M, M); row ``m`` of ``Q_f`` is ``q_fm^H``
* ``U``   auxiliary covariances, complex (F, M, M, M); ``U[f, m]`` is ``U_fm``
* ``g``   source gains, real (N, M), frequency-shared
* ``lam`` source PSDs, real (N, F, T)
"""
import numpy as np

from .autodiff.checkpoint import load_arrays, save_arrays
from .exceptions import ISSFailure, ShapeError, SingularMatrixError
from .linalg import RIDGE, add_ridge, cholesky, logdet_qqh

EPS = 1e-12
DET_FLOOR = 1e-12


def iss_sweep(Q, U, eps=EPS, skip_degenerate=False):
    """One ISS sweep over rows m = 1..M of every ``Q_f``.

    For row m, every row m' receives ``q_m'^H <- q_m'^H - v_m' q_m^H`` with
    ``v_m' = (q_m'^H U_m' q_m) / (q_m^H U_m' q_m)`` for m' != m and
    ``v_m = 1 - (q_m^H U_m q_m)^(-1/2)``.

    With ``skip_degenerate=True``, rows whose Hermitian form is <= ``eps``
    are left untouched instead of raising :class:`ISSFailure`.
    """
    Q = np.array(Q, dtype=np.complex128)
    U = np.asarray(U)
    n_f, M, _ = Q.shape
    if U.shape != (n_f, M, M, M):
        raise ShapeError(f"U must have shape {(n_f, M, M, M)}, got {U.shape}")
    for m in range(M):
        r = Q[:, m, :]
        Ur = np.einsum("fkij,fj->fki", U, np.conj(r))
        num = np.einsum("fki,fki->fk", Q, Ur)
        den = np.real(np.einsum("fi,fki->fk", r, Ur))
        bad = den <= eps
        if bad.any() and not skip_degenerate:
            f, k = np.argwhere(bad)[0]
            raise ISSFailure(int(f), m, float(den[f, k]))
        safe = np.where(bad, 1.0, den)
        v = num / safe
        v[:, m] = 1.0 - safe[:, m] ** -0.5
        v[bad] = 0.0
        Q -= v[:, :, None] * r[:, None, :]
    check_nonsingular(Q)
    return Q


def check_nonsingular(Q, floor=DET_FLOOR):
    det = np.abs(np.linalg.det(Q))
    if np.any(det <= floor) or not np.all(np.isfinite(det)):
        f = int(np.argmin(np.nan_to_num(det, nan=0.0)))
        raise SingularMatrixError(f"diagonalizer at frequency {f} is singular (|det|={det[f]:.3e})")


def iss_surrogate(Q, U):
    """Per-frequency sum_m q_m^H U_m q_m - log|Q Q^H|."""
    quad = np.real(np.einsum("fmi,fmij,fmj->f", Q, U, np.conj(Q)))
    return quad - logdet_qqh(Q)


def jd_scm(Q, g):
    """H_nf = Q_f^-1 diag(g_n) Q_f^-H, shape (N, F, M, M)."""
    Q = np.asarray(Q)
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    try:
        Qinv = np.linalg.inv(Q)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("diagonalizer is singular") from exc
    return np.einsum("...im,nm,...jm->n...ij", Qinv, g, np.conj(Qinv), optimize=True)


def diagonalize(X, Q):
    """x~_ft = Q_f x_ft, shape (F, T, M)."""
    X, Q = np.asarray(X), np.asarray(Q)
    if X.ndim != 3 or Q.shape != (X.shape[0], X.shape[2], X.shape[2]):
        raise ShapeError(f"incompatible shapes X{X.shape} Q{Q.shape}")
    return np.einsum("fij,ftj->fti", Q, X, optimize=True)


def mixture_psd(lam, g):
    """y~_ftm = sum_n g_nm lam_nft, shape (F, T, M)."""
    return np.einsum("nft,nm->ftm", lam, g, optimize=True)


def lgm_constant(n_freq, n_frames, n_chan):
    """The M log(pi) per-bin constant summed over (f, t)."""
    return n_freq * n_frames * n_chan * np.log(np.pi)


def lgm_nll(X, lam, H, ridge=RIDGE):
    """Negative log-likelihood of the local Gaussian model, constants included.

    ``-sum_{f,t} log N_c(x_ft; 0, sum_n lam_nft H_nf)``.
    """
    X = np.asarray(X)
    cov = np.einsum("nft,nfij->ftij", lam, H, optimize=True)
    L = cholesky(cov, ridge)
    logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)
    w = np.linalg.solve(L, X[..., None])[..., 0]
    quad = np.sum(np.abs(w) ** 2, axis=-1)
    n_f, n_t, M = X.shape
    return float(np.sum(logdet + quad) + lgm_constant(n_f, n_t, M))


def jd_nll(Xt, Y, Q):
    """JD fast-path NLL without the M log(pi) constant.

    ``sum_{f,t,m} (log y~ + |x~|^2 / y~) - T sum_f log|Q_f Q_f^H|``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if np.any(Y <= 0):
        raise ValueError("mixture PSD must be positive")
    n_t = Y.shape[1]
    return float(np.sum(np.log(Y) + np.abs(Xt) ** 2 / Y) - n_t * np.sum(logdet_qqh(Q)))


def wiener_separate(X, lam, Q, g, ref_channel=0, return_images=False, eps=EPS):
    """Multichannel Wiener filter u^T Y_nft Y_ft^-1 x_ft in JD form.

    With ``Y_nft = lam_nft Q^-1 diag(g_n) Q^-H`` the filter reduces to
    ``Q^-1 diag(lam g_n / y~) Q``.  A floor ``eps`` is split evenly over the
    sources so the per-source gains always sum to exactly one.

    Returns
    -------
    ndarray (N, F, T) of reference-channel estimates, or (N, F, T, M) source
    images when ``return_images`` is True.
    """
    X, lam, g = np.asarray(X), np.asarray(lam, dtype=np.float64), np.asarray(g, dtype=np.float64)
    n_src = lam.shape[0]
    M = X.shape[2]
    if not 0 <= ref_channel < M:
        raise ValueError(f"reference channel {ref_channel} outside [0, {M})")
    if lam.shape[1:] != X.shape[:2] or g.shape != (n_src, M):
        raise ShapeError(f"inconsistent shapes X{X.shape} lam{lam.shape} g{g.shape}")
    Xt = diagonalize(X, Q)
    Yn = np.einsum("nft,nm->nftm", lam, g, optimize=True) + eps / n_src
    gain = Yn / Yn.sum(axis=0)
    Qinv = np.linalg.inv(Q)
    if return_images:
        return np.einsum("fij,nftj->nfti", Qinv, gain * Xt, optimize=True)
    return np.einsum("fj,nftj->nft", Qinv[:, ref_channel, :], gain * Xt, optimize=True)


def dense_wiener_separate(X, lam, H, ref_channel=0, ridge=RIDGE):
    """Wiener filter with arbitrary SCMs ``H`` (N, F, M, M); used for cross-checks."""
    Yn = np.einsum("nft,nfij->nftij", lam, H, optimize=True)
    Y = add_ridge(Yn.sum(axis=0), ridge)
    sol = np.linalg.solve(Y, X[..., None])[..., 0]
    return np.einsum("nftj,ftj->nft", Yn[..., ref_channel, :], sol, optimize=True)


def save_model_params(path, Q, g, lam, metadata=""):
    """Dump (Q, g, lam) to the shared binary parameter container."""
    save_arrays(path, {"Q": np.asarray(Q), "g": np.asarray(g), "lam": np.asarray(lam)}, metadata)


def load_model_params(path):
    """Inverse of :func:`save_model_params`; returns (Q, g, lam)."""
    arrays, _ = load_arrays(path)
    return arrays["Q"], arrays["g"], arrays["lam"]
