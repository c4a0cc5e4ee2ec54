"""Unsupervised ELBO training of the neural FastFCA model with Adam."""
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from .._validation import check_positive, check_spectrograms
from ..exceptions import ConfigError, DivergenceError
from .model import ModelConfig, NeuralFastFCAModel, elbo

DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters (desk scale by default).

    ``clip_frames`` frames are cropped at random from every training item;
    ``kl_cycles`` cyclic annealing periods span the whole run; ``kl_scale``
    multiplies the annealed weight (0 disables the KL term in the loss).
    The learning rate is constant except over the full-weight half of the last
    cycle, where it falls linearly to ``learning_rate * lr_decay``.
    """

    epochs: int = 60
    learning_rate: float = 1e-3
    batch_size: int = 4
    clip_frames: int = 64
    latent_dim: int = 8
    n_sources: int = 3
    n_blocks: int = 4
    width: int = 32
    kl_cycles: int = 4
    kl_scale: float = 1.0
    lr_decay: float = 0.1
    grad_clip: float = 10.0
    ma_window: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "clip_frames", "latent_dim", "n_sources", "width",
                     "kl_cycles", "ma_window"):
            try:
                check_positive(name, getattr(self, name), integer=True)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.n_blocks < 0:
            raise ConfigError("n_blocks must be >= 0")
        if not self.learning_rate > 0 or not self.grad_clip > 0:
            raise ConfigError("learning_rate and grad_clip must be positive")
        if not self.kl_scale >= 0:
            raise ConfigError("kl_scale must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")

    def model_config(self, n_freq, n_chan):
        return ModelConfig(n_freq, n_chan, n_sources=self.n_sources, latent_dim=self.latent_dim,
                           n_blocks=self.n_blocks, width=self.width)

    def to_dict(self):
        return asdict(self)


def kl_weight(step, total_steps, cycles):
    """Cyclic annealing: 0 -> 1 linearly over the first half of each cycle, then 1."""
    period = max(total_steps / cycles, 1.0)
    phase = (step % period) / period
    return min(1.0, 2.0 * phase)


def learning_rate(step, total_steps, cfg):
    """Constant rate, then a linear decay over the last half-cycle."""
    start = total_steps - total_steps / (2 * cfg.kl_cycles)
    frac = min(max((step - start) / max(total_steps - start, 1.0), 0.0), 1.0)
    return cfg.learning_rate * (1.0 - frac * (1.0 - cfg.lr_decay))


def moving_average(values, window):
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return np.array([])
    c = np.cumsum(np.concatenate([[0.0], values]))
    return (c[window:] - c[:-window]) / window


class DivergenceMonitor:
    """Abort when the ELBO moving average falls 10x the peak magnitude below the peak."""

    def __init__(self, window, factor=DIVERGENCE_FACTOR):
        self.window = window
        self.factor = factor
        self.values = []
        self.peak = -np.inf

    def update(self, value):
        self.values.append(value)
        if len(self.values) < self.window:
            return
        ma = float(np.mean(self.values[-self.window:]))
        self.peak = max(self.peak, ma)
        if ma < self.peak - self.factor * max(abs(self.peak), 1.0):
            raise DivergenceError(
                f"ELBO moving average {ma:.4g} fell far below its peak {self.peak:.4g}")


def _crop_batches(specs, cfg, rng):
    order = rng.permutation(len(specs))
    for start in range(0, len(order), cfg.batch_size):
        batch = []
        for i in order[start:start + cfg.batch_size]:
            X = specs[i]
            t0 = rng.integers(0, X.shape[1] - cfg.clip_frames + 1)
            batch.append(X[:, t0:t0 + cfg.clip_frames])
        yield np.stack(batch)


def train(specs, config=None, model=None, log_path=None, timing_path=None, callback=None):
    """Maximise the ELBO over a list of mixture spectrograms (F, T, M).

    Parameters
    ----------
    specs : list of ndarray
        Training mixtures; no reference signals are used.
    config : TrainConfig
    model : NeuralFastFCAModel, optional
        Starting point; built from ``config`` and seeded with ``config.seed`` if omitted.
    log_path, timing_path : path, optional
        Newline-delimited JSON records per step.  The metric log holds only
        seed-determined values; wall-times go to the separate timing log.
    callback : callable, optional
        Called with each metric record.

    Returns
    -------
    model : NeuralFastFCAModel
    history : list of dict
        Per-step records with ``elbo``, ``loglik`` and ``kl`` per time-frequency-channel bin.
    """
    cfg = config or TrainConfig()
    specs = check_spectrograms(specs)
    n_freq, _, n_chan = specs[0].shape
    shortest = min(X.shape[1] for X in specs)
    if cfg.clip_frames > shortest:
        raise ConfigError(f"clip_frames={cfg.clip_frames} exceeds shortest item ({shortest} frames)")
    if model is None:
        model = NeuralFastFCAModel(cfg.model_config(n_freq, n_chan), seed=cfg.seed)
    params = model.parameters()
    opt = ad.Adam(params, lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed + 1)
    steps_per_epoch = -(-len(specs) // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    monitor = DivergenceMonitor(cfg.ma_window)
    history = []
    log = open(log_path, "w") if log_path else None
    timing = open(timing_path, "w") if timing_path else None
    t_start = time.perf_counter()
    try:
        step = 0
        for epoch in range(cfg.epochs):
            for X in _crop_batches(specs, cfg, rng):
                beta = cfg.kl_scale * kl_weight(step, total, cfg.kl_cycles)
                opt.state.lr = learning_rate(step, total, cfg)
                noise = rng.standard_normal((X.shape[0], cfg.n_sources, cfg.latent_dim,
                                             cfg.clip_frames))
                terms = elbo(model, X, noise)
                n_bins = float(X.size)
                loss = (terms.kl * beta - terms.loglik) * (1.0 / n_bins)
                grads = ad.gradients(loss, params)
                gnorm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
                if gnorm > cfg.grad_clip:
                    grads = [g * (cfg.grad_clip / gnorm) for g in grads]
                opt.step(grads)
                rec = {
                    "step": step, "epoch": epoch,
                    "elbo": terms.elbo.item() / n_bins,
                    "loglik": terms.loglik.item() / n_bins,
                    "kl": terms.kl.item() / n_bins,
                    "kl_weight": beta, "lr": opt.state.lr, "grad_norm": gnorm,
                }
                history.append(rec)
                if log:
                    log.write(json.dumps(rec) + "\n")
                if timing:
                    timing.write(json.dumps({"step": step,
                                             "wall_time": time.perf_counter() - t_start}) + "\n")
                if callback:
                    callback(rec)
                monitor.update(rec["elbo"])
                step += 1
    finally:
        if log:
            log.close()
        if timing:
            timing.close()
    return model, history
