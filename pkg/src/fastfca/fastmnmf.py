"""FastMNMF: NMF source model + jointly-diagonalizable spatial model.

Model: ``x_ft ~ N_c(0, Q_f^-1 diag(y~_ft) Q_f^-H)`` with
``y~_ftm = sum_n g_nm lam_nft`` and ``lam_nft = sum_k W_nfk H_nkt``.

One iteration applies, in order,

1. ``W_nfk *= sqrt(sum_t H_nkt sum_m g_nm |x~_ftm|^2 / y~_ftm^2
                  / sum_t H_nkt sum_m g_nm / y~_ftm)``
2. the same rule for ``H_nkt`` (summing over f), with y~ refreshed,
3. ``g_nm *= sqrt(sum_ft lam_nft |x~_ftm|^2 / y~_ftm^2 / sum_ft lam_nft / y~_ftm)``,
4. one ISS sweep of ``Q_f`` with ``U_fm = (1/T) sum_t x_ft x_ft^H / y~_ftm``,
5. normalisation: ``g_n`` to unit mean (scale moved into ``W_n``), then the
   columns of ``W_n`` to unit l1 norm over f (scale moved into ``H_n``).

Each step is a majorisation-minimisation step of the negative
log-likelihood, so the NLL never increases (up to the ``eps`` floors).
"""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_random_state, check_spectrogram
from .exceptions import NonFiniteError, ShapeError
from .linalg import weighted_scm
from .spatial import diagonalize, iss_sweep, jd_nll, lgm_constant, wiener_separate

EPS = 1e-12


@dataclass
class NmfParams:
    W: np.ndarray  # (N, F, K)
    H: np.ndarray  # (N, K, T)
    g: np.ndarray  # (N, M)
    Q: np.ndarray  # (F, M, M)

    @property
    def lam(self):
        return self.W @ self.H + EPS

    def mixture_psd(self):
        return np.einsum("nft,nm->ftm", self.lam, self.g, optimize=True)


def fastmnmf_init(X, n_sources, n_basis, seed=None):
    """Identity diagonalizer, uniform [0.1, 1) NMF factors, near one-hot gains.

    ``g_nm`` is 1 where ``m == n mod M`` and uniform in [0.01, 0.02) elsewhere,
    then scaled to unit mean per source.
    """
    X = check_spectrogram(X)
    if n_sources < 1 or n_basis < 1:
        raise ValueError("n_sources and n_basis must be >= 1")
    rng = check_random_state(seed)
    n_f, n_t, M = X.shape
    W = rng.uniform(0.1, 1.0, size=(n_sources, n_f, n_basis))
    H = rng.uniform(0.1, 1.0, size=(n_sources, n_basis, n_t))
    g = rng.uniform(0.01, 0.02, size=(n_sources, M))
    g[np.arange(n_sources), np.arange(n_sources) % M] = 1.0
    g /= g.mean(axis=1, keepdims=True)
    Q = np.tile(np.eye(M, dtype=np.complex128), (n_f, 1, 1))
    return NmfParams(W=W, H=H, g=g, Q=Q)


def fastmnmf_nll(params, X):
    """Negative log-likelihood including the M log(pi) constant."""
    Xt = diagonalize(X, params.Q)
    n_f, n_t, M = X.shape
    return jd_nll(Xt, params.mixture_psd(), params.Q) + lgm_constant(n_f, n_t, M)


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"FastMNMF update of {name}")
    return arr


def fastmnmf_iterate(params, X, XX=None):
    """One full FastMNMF iteration; returns new :class:`NmfParams`."""
    X = np.asarray(X)
    W, H, g = params.W.copy(), params.H.copy(), params.g.copy()
    Q = params.Q
    n_t = X.shape[1]
    Xp = np.abs(diagonalize(X, Q)) ** 2

    def psd():
        lam = W @ H + EPS
        return lam, np.einsum("nft,nm->ftm", lam, g, optimize=True)

    lam, Y = psd()
    a = np.einsum("nm,ftm->nft", g, Xp / Y**2, optimize=True)
    b = np.einsum("nm,ftm->nft", g, 1.0 / Y, optimize=True)
    W *= np.sqrt((a @ H.transpose(0, 2, 1)) / (b @ H.transpose(0, 2, 1)))
    W = np.maximum(_finite("W", W), EPS)

    lam, Y = psd()
    a = np.einsum("nm,ftm->nft", g, Xp / Y**2, optimize=True)
    b = np.einsum("nm,ftm->nft", g, 1.0 / Y, optimize=True)
    H *= np.sqrt((W.transpose(0, 2, 1) @ a) / (W.transpose(0, 2, 1) @ b))
    H = np.maximum(_finite("H", H), EPS)

    lam, Y = psd()
    num = np.einsum("nft,ftm->nm", lam, Xp / Y**2, optimize=True)
    den = np.einsum("nft,ftm->nm", lam, 1.0 / Y, optimize=True)
    g *= np.sqrt(num / den)
    g = np.maximum(_finite("g", g), EPS)

    lam, Y = psd()
    if XX is None:
        U = weighted_scm(X[:, None], 1.0 / Y.transpose(0, 2, 1))
    else:
        U = np.einsum("ftij,fmt->fmij", XX, 1.0 / Y.transpose(0, 2, 1), optimize=True) / n_t
    Q = _finite("Q", iss_sweep(Q, U, skip_degenerate=True))

    mu = g.mean(axis=1)
    g /= mu[:, None]
    W *= mu[:, None, None]
    nu = W.sum(axis=1)
    W /= nu[:, None, :]
    H *= nu[:, :, None]
    return NmfParams(W=np.maximum(W, EPS), H=np.maximum(H, EPS), g=np.maximum(g, EPS), Q=Q)


def fastmnmf_separate(params, X, ref_channel=0, return_images=False):
    """Wiener-filter the mixture with the fitted FastMNMF model; (N, F, T)."""
    return wiener_separate(X, params.lam, params.Q, params.g, ref_channel, return_images)


class FastMNMF(TransformerMixin, BaseEstimator):
    """FastMNMF blind source separation of one multichannel mixture.

    Parameters
    ----------
    n_sources : int
        Number of sources N (including any noise slot).
    n_basis : int
        NMF bases K per source.
    n_iter : int
        Number of full iterations.
    ref_channel : int
        Zero-based reference microphone for the Wiener output.
    random_state : int, Generator or None
        Seeds the NMF initialisation.
    track_nll : bool
        Record the NLL after every iteration in ``nll_``.

    Attributes
    ----------
    params_ : NmfParams
    nll_ : list of float
    """

    def __init__(self, n_sources=3, n_basis=4, n_iter=100, ref_channel=0, random_state=None,
                 track_nll=False):
        self.n_sources = n_sources
        self.n_basis = n_basis
        self.n_iter = n_iter
        self.ref_channel = ref_channel
        self.random_state = random_state
        self.track_nll = track_nll

    def fit(self, X, y=None):
        X = check_spectrogram(X)
        params = fastmnmf_init(X, self.n_sources, self.n_basis, self.random_state)
        XX = np.einsum("fti,ftj->ftij", X, np.conj(X), optimize=True)
        self.nll_ = [fastmnmf_nll(params, X)] if self.track_nll else []
        for _ in range(self.n_iter):
            params = fastmnmf_iterate(params, X, XX)
            if self.track_nll:
                self.nll_.append(fastmnmf_nll(params, X))
        self.params_ = params
        self.shape_ = X.shape
        return self

    def transform(self, X):
        """Reference-channel source estimates (N, F, T) for the fitted mixture."""
        check_is_fitted(self, "params_")
        X = check_spectrogram(X)
        if X.shape != self.shape_:
            raise ShapeError(f"FastMNMF was fitted on shape {self.shape_}, got {X.shape}")
        return fastmnmf_separate(self.params_, X, self.ref_channel)
