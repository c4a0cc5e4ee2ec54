"""Neural FastFCA: deep spectral decoder, ISS-unrolled inference network, ELBO.

Array layout conventions (``Bt`` = batch of clips):

* mixture ``X``          complex (Bt, F, T, M)
* diagonalizer ``Q``     CTensor (Bt, F, M, M)
* masks                  Tensor (Bt, F, T, M), one per ISS block
* posterior ``mu, var``  Tensor (Bt, N, D, T)
* gains ``g``            Tensor (Bt, N, M)
* PSDs ``lam``           Tensor (Bt, N, F, T)
"""
import json
from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import CTensor, ceinsum
from ..exceptions import NonFiniteError, ShapeError
from .layers import Conv1d, Module, PReLU

EPS = ad.EPS
FEATURE_FLOOR = 1e-6
SCM_RIDGE = 1e-10
SCM_FLOOR = 1e-9
VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    n_freq: int
    n_chan: int
    n_sources: int = 3
    latent_dim: int = 8
    n_blocks: int = 4
    width: int = 32
    n_layers: int = 5
    kernel_size: int = 5

    @classmethod
    def paper(cls, n_freq=257, n_chan=6):
        return cls(n_freq, n_chan, n_sources=5, latent_dim=50, n_blocks=8, width=256)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


# -- pieces of the forward pass ---------------------------------------------------
def normalize_mixture(X):
    """Scale each clip to unit mean power; returns (scaled X, scales)."""
    X = np.asarray(X, dtype=np.complex128)
    power = np.mean(np.abs(X) ** 2, axis=(1, 2, 3))
    scale = np.sqrt(np.maximum(power, EPS))
    return X / scale[:, None, None, None], scale


def input_features(X):
    """Log-power of every channel plus (cos, sin) phase differences to channel 0.

    Returns an array (Bt, F*M + 2*F*(M-1), T); log-powers are mean-removed per clip.
    """
    Bt, F, T, M = X.shape
    logp = np.log(np.abs(X) ** 2 + FEATURE_FLOOR)
    logp -= logp.mean(axis=(1, 2, 3), keepdims=True)
    feats = [logp.transpose(0, 1, 3, 2).reshape(Bt, F * M, T)]
    if M > 1:
        cross = X[..., 1:] * np.conj(X[..., :1])
        mag = np.abs(cross)
        unit = np.where(mag > 0, cross / np.where(mag > 0, mag, 1.0), 1.0)
        feats.append(unit.real.transpose(0, 1, 3, 2).reshape(Bt, F * (M - 1), T))
        feats.append(unit.imag.transpose(0, 1, 3, 2).reshape(Bt, F * (M - 1), T))
    return np.concatenate(feats, axis=1)


def outer_products(X):
    """x_ft x_ft^H as a constant CTensor (Bt, F, T, M, M)."""
    return CTensor.constant(np.einsum("bfti,bftj->bftij", X, np.conj(X), optimize=True))


def weighted_scm(mask, XX):
    """U_fm = (1/T) sum_t mask_ftm x_ft x_ft^H (+ a small ridge), CTensor (Bt, F, M, M, M)."""
    n_t = mask.shape[2]
    U = ceinsum("bftm,bftij->bfmij", mask, XX) * (1.0 / n_t)
    M = U.shape[-1]
    eye = np.eye(M)
    trace = ad.tsum(U.re * eye, axis=(-2, -1), keepdims=True)
    ridge = trace * (SCM_RIDGE / M) + SCM_FLOOR
    return CTensor(U.re + ridge * eye, U.im)


def iss_sweep(Q, U):
    """Differentiable ISS sweep (rows m = 0..M-1), see :func:`fastfca.spatial.iss_sweep`."""
    M = Q.shape[-1]
    eye = np.eye(M)
    for m in range(M):
        r = Q[:, :, m, :]
        Ur = ceinsum("bfkij,bfj->bfki", U, r.conj())
        num = ceinsum("bfki,bfki->bfk", Q, Ur)
        den = ad.einsum("bfi,bfki->bfk", r.re, Ur.re) - ad.einsum("bfi,bfki->bfk", r.im, Ur.im)
        inv = ad.reciprocal(den)
        diag = 1.0 - ad.power(den[:, :, m], -0.5)
        off = 1.0 - eye[m]
        v = CTensor(num.re * inv * off + ad.reshape(diag, diag.shape + (1,)) * eye[m],
                    num.im * inv * off)
        Q = Q - ceinsum("bfk,bfj->bfkj", v, r)
    return Q


def diagonalize(Q, X):
    """x~ = Q x with constant X: CTensor (Bt, F, T, M)."""
    return ceinsum("bfij,bftj->bfti", Q, X)


def identity_diagonalizer(Bt, F, M):
    eye = np.broadcast_to(np.eye(M), (Bt, F, M, M)).copy()
    return CTensor(ad.Tensor(eye), ad.Tensor(np.zeros_like(eye)))


# -- networks ---------------------------------------------------------------------------
class DNNBlock(Module):
    """1x1 input projection followed by residual conv layers with PReLU."""

    def __init__(self, c_in, width, n_layers, kernel_size, rng):
        self.proj = Conv1d(c_in, width, 1, rng)
        self.proj_act = PReLU(width)
        self.convs = [Conv1d(width, width, kernel_size, rng) for _ in range(n_layers)]
        self.acts = [PReLU(width) for _ in range(n_layers)]

    def __call__(self, x):
        h = self.proj_act(self.proj(x))
        for conv, act in zip(self.convs, self.acts):
            h = h + act(conv(h))
        return h


@dataclass
class InferenceResult:
    Q: CTensor
    Xt: CTensor
    g: ad.Tensor
    mu: ad.Tensor
    var: ad.Tensor
    masks: list
    scale: np.ndarray

    def numpy(self):
        return {
            "Q": self.Q.numpy(), "g": self.g.data, "mu": self.mu.data, "var": self.var.data,
            "masks": [m.data for m in self.masks],
        }


class InferenceNet(Module):
    """B+1 DNN blocks interleaved with B ISS blocks, plus posterior and gain heads."""

    def __init__(self, cfg, rng):
        F, M, W, N, D = cfg.n_freq, cfg.n_chan, cfg.width, cfg.n_sources, cfg.latent_dim
        self.cfg = cfg
        c0 = F * M + 2 * F * (M - 1)
        self.blocks = [DNNBlock(c0 if b == 0 else 2 * W, W, cfg.n_layers, cfg.kernel_size, rng)
                       for b in range(cfg.n_blocks + 1)]
        self.embeds = [Conv1d(F * M, W, 1, rng) for _ in range(cfg.n_blocks)]
        self.mask_heads = [Conv1d(W, F * M, 1, rng) for _ in range(cfg.n_blocks)]
        self.mu_head = Conv1d(W, N * D, 1, rng)
        self.var_head = Conv1d(W, N * D, 1, rng)
        self.omega_head = Conv1d(W, N * F * M, 1, rng)

    def __call__(self, X):
        cfg = self.cfg
        X = np.asarray(X)
        if X.ndim == 3:
            X = X[None]
        Bt, F, T, M = X.shape
        if (F, M) != (cfg.n_freq, cfg.n_chan):
            raise ShapeError(f"network built for F={cfg.n_freq}, M={cfg.n_chan}; got F={F}, M={M}")
        Xn, scale = normalize_mixture(X)
        Xc = CTensor.constant(Xn)
        XX = outer_products(Xn)

        Q = identity_diagonalizer(Bt, F, M)
        Xt = Xc
        masks = []
        h = self._run(0, lambda: self.blocks[0](ad.Tensor(input_features(Xn))))
        for b in range(1, cfg.n_blocks + 1):
            def step(h=h, Q=Q, b=b):
                mask = self._mask(self.mask_heads[b - 1](h), Bt, F, T, M)
                Qb = iss_sweep(Q, weighted_scm(mask, XX))
                Xtb = diagonalize(Qb, Xc)
                lp = ad.log(Xtb.abs2() + FEATURE_FLOOR)
                lp = lp - ad.mean(lp, axis=(1, 2, 3), keepdims=True)
                lp = lp.transpose(0, 1, 3, 2).reshape(Bt, F * M, T)
                hb = self.blocks[b](ad.concat([h, self.embeds[b - 1](lp)], axis=1))
                return mask, Qb, Xtb, hb

            mask, Q, Xt, h = self._run(b, step)
            masks.append(mask)

        def heads():
            N, D = cfg.n_sources, cfg.latent_dim
            mu = self.mu_head(h).reshape(Bt, N, D, T)
            var = ad.softplus(self.var_head(h)).reshape(Bt, N, D, T) + VAR_FLOOR
            omega = ad.sigmoid(self.omega_head(h)).reshape(Bt, N, F, M, T)
            w = ad.einsum("bnfmt,bftm->bnfm", omega, Xt.abs2()) + EPS
            g = ad.mean(w / ad.mean(w, axis=-1, keepdims=True), axis=2)
            return mu, var, g

        mu, var, g = self._run("heads", heads)
        return InferenceResult(Q=Q, Xt=Xt, g=g, mu=mu, var=var, masks=masks, scale=scale)

    @staticmethod
    def _mask(logits, Bt, F, T, M):
        return ad.sigmoid(logits).reshape(Bt, F, M, T).transpose(0, 1, 3, 2)

    @staticmethod
    def _run(block, fn):
        try:
            return fn()
        except NonFiniteError as exc:
            raise NonFiniteError(f"inference block {block}", exc.where) from exc


class Decoder(Module):
    """Frame-wise latent-to-PSD map: three 1x1 conv layers, PReLU, softplus output."""

    def __init__(self, cfg, rng):
        W = cfg.width
        self.cfg = cfg
        self.l1 = Conv1d(cfg.latent_dim, W, 1, rng)
        self.a1 = PReLU(W)
        self.l2 = Conv1d(W, W, 1, rng)
        self.a2 = PReLU(W)
        self.l3 = Conv1d(W, cfg.n_freq, 1, rng)

    def __call__(self, z):
        z = ad.as_tensor(z)
        Bt, N, D, T = z.shape
        h = z.reshape(Bt * N, D, T)
        h = self.a1(self.l1(h))
        h = self.a2(self.l2(h))
        lam = ad.softplus(self.l3(h)) + EPS
        return lam.reshape(Bt, N, self.cfg.n_freq, T)


class NeuralFastFCAModel(Module):
    """Encoder (inference network) and decoder (source model) pair."""

    def __init__(self, cfg, seed=0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.encoder = InferenceNet(cfg, rng)
        self.decoder = Decoder(cfg, rng)

    def save(self, path):
        ad.save_arrays(path, self.state_dict(), metadata=self.cfg.to_json())

    @classmethod
    def load(cls, path):
        arrays, meta = ad.load_arrays(path)
        model = cls(ModelConfig.from_json(meta))
        model.load_state_dict(arrays)
        return model


# -- objective --------------------------------------------------------------------------
@dataclass
class ElboTerms:
    elbo: ad.Tensor
    loglik: ad.Tensor
    kl: ad.Tensor


def kl_divergence(mu, var):
    """KL(N(mu, var) || N(0, 1)) summed over all elements."""
    return 0.5 * ad.tsum(mu * mu + var - ad.log(var) - 1.0)


def loglik_term(Q, Xt, g, lam):
    """T sum_f log|Q Q^H| - sum_{f,t,m} (log y~ + |x~|^2 / y~), summed over the batch."""
    n_t = Xt.shape[2]
    Y = ad.einsum("bnm,bnft->bftm", g, lam)
    logdet = ad.tsum(ad.logdet_qqh(Q)) * float(n_t)
    return logdet - ad.tsum(ad.log(Y) + Xt.abs2() / Y)


def elbo(model, X, noise, inference=None):
    """ELBO with one reparameterised sample ``z = mu + sqrt(var) * noise``.

    ``X`` is the raw mixture (Bt, F, T, M); the likelihood is evaluated on the
    unit-power-normalised mixture the encoder sees.
    """
    inf = model.encoder(X) if inference is None else inference
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != inf.mu.shape:
        raise ShapeError(f"noise shape {noise.shape} != posterior shape {inf.mu.shape}")
    z = inf.mu + ad.sqrt(inf.var) * noise
    lam = model.decoder(z)
    ll = loglik_term(inf.Q, inf.Xt, inf.g, lam)
    kl = kl_divergence(inf.mu, inf.var)
    return ElboTerms(elbo=ll - kl, loglik=ll, kl=kl)
