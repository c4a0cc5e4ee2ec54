"""Neural FastFCA separation path and a scikit-learn style estimator."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .. import autodiff as ad
from .. import dsp
from .._validation import check_spectrogram, check_spectrograms
from ..exceptions import ShapeError
from ..spatial import wiener_separate
from .model import NeuralFastFCAModel, elbo
from .train import TrainConfig, train


def infer(model, X):
    """Run the inference network on one spectrogram (F, T, M) without recording a tape.

    Returns a dict with ``Q`` (F, M, M), ``g`` (N, M), ``mu``/``var`` (N, D, T)
    and ``masks`` (list of (F, T, M)).
    """
    X = check_spectrogram(X)
    with ad.no_grad():
        out = model.encoder(X[None]).numpy()
    return {
        "Q": out["Q"][0], "g": out["g"][0], "mu": out["mu"][0], "var": out["var"][0],
        "masks": [m[0] for m in out["masks"]],
    }


def neural_separate(model, X, ref_channel=0, return_images=False):
    """Wiener-filter estimates (N, F, T) with latents fixed at the posterior mean."""
    X = check_spectrogram(X)
    if X.shape[0] != model.cfg.n_freq:
        raise ShapeError(f"model expects F={model.cfg.n_freq}, spectrogram has F={X.shape[0]}")
    with ad.no_grad():
        inf = model.encoder(X[None])
        lam = model.decoder(inf.mu).data[0]
    return wiener_separate(X, lam, inf.Q.numpy()[0], inf.g.data[0], ref_channel, return_images)


def separate_wave(model, wave, window_length=dsp.DEFAULT_WINDOW, hop_length=dsp.DEFAULT_HOP,
                  ref_channel=0):
    """Separate a time-domain mixture (M, L); returns (N, L) waveforms."""
    samples = dsp._as_samples(wave)
    X = dsp.stft(samples, window_length, hop_length, pad=True)
    S = neural_separate(model, X, ref_channel)
    return np.stack([dsp.istft(s[:, :, None], window_length, hop_length, pad=True,
                               length=samples.shape[1])[0] for s in S])


class NeuralFastFCA(TransformerMixin, BaseEstimator):
    """Amortised blind separation: train on unlabelled mixtures, separate in one pass.

    Parameters
    ----------
    n_sources, latent_dim, n_blocks, width : int
        Architecture (N, D, B and channel width).
    epochs, learning_rate, lr_decay, batch_size, clip_frames, kl_cycles, grad_clip :
        Training settings, see :class:`fastfca.neural.TrainConfig`.
    ref_channel : int
        Zero-based reference microphone for the Wiener output.
    random_state : int
        Seeds initialisation, cropping and reparameterisation noise.

    Attributes
    ----------
    model_ : NeuralFastFCAModel
    history_ : list of dict
    """

    def __init__(self, n_sources=3, latent_dim=8, n_blocks=4, width=32, epochs=60,
                 learning_rate=1e-3, lr_decay=0.1, batch_size=4, clip_frames=64, kl_cycles=4,
                 grad_clip=10.0, ref_channel=0, random_state=0):
        self.n_sources = n_sources
        self.latent_dim = latent_dim
        self.n_blocks = n_blocks
        self.width = width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.clip_frames = clip_frames
        self.kl_cycles = kl_cycles
        self.grad_clip = grad_clip
        self.ref_channel = ref_channel
        self.random_state = random_state

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate, lr_decay=self.lr_decay,
            batch_size=self.batch_size,
            clip_frames=self.clip_frames, latent_dim=self.latent_dim, n_sources=self.n_sources,
            n_blocks=self.n_blocks, width=self.width, kl_cycles=self.kl_cycles,
            grad_clip=self.grad_clip, seed=int(self.random_state),
        )

    def fit(self, X, y=None, log_path=None):
        """Train on a list of mixture spectrograms (each (F, T, M))."""
        specs = check_spectrograms(X)
        self.model_, self.history_ = train(specs, self.train_config(), log_path=log_path)
        return self

    def init_untrained(self, n_freq, n_chan):
        """Freshly initialised network, as :meth:`fit` would start from."""
        cfg = self.train_config()
        self.model_ = NeuralFastFCAModel(cfg.model_config(n_freq, n_chan), seed=cfg.seed)
        self.history_ = []
        return self

    def transform(self, X):
        """Reference-channel estimates (N, F, T) for one spectrogram."""
        check_is_fitted(self, "model_")
        return neural_separate(self.model_, X, self.ref_channel)

    def infer(self, X):
        check_is_fitted(self, "model_")
        return infer(self.model_, X)

    def score(self, X, y=None):
        """Mean per-bin ELBO at the posterior mean (higher is better)."""
        check_is_fitted(self, "model_")
        specs = check_spectrograms(X if isinstance(X, list) else [X])
        total = 0.0
        for S in specs:
            with ad.no_grad():
                inf = self.model_.encoder(S[None])
                terms = _elbo_at_mean(self.model_, S[None], inf)
            total += terms / S.size
        return total / len(specs)

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)

    @classmethod
    def load(cls, path, **kwargs):
        model = NeuralFastFCAModel.load(path)
        c = model.cfg
        est = cls(n_sources=c.n_sources, latent_dim=c.latent_dim, n_blocks=c.n_blocks,
                  width=c.width, **kwargs)
        est.model_ = model
        est.history_ = []
        return est


def _elbo_at_mean(model, X, inf):
    return elbo(model, X, np.zeros(inf.mu.shape), inference=inf).elbo.item()
