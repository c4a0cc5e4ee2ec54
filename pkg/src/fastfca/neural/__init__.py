"""Neural FastFCA: deep source model with an ISS-unrolled amortised inference network."""
from .estimator import NeuralFastFCA, infer, neural_separate, separate_wave
from .layers import Conv1d, Module, PReLU
from .model import (
    Decoder,
    ElboTerms,
    InferenceNet,
    ModelConfig,
    NeuralFastFCAModel,
    elbo,
    kl_divergence,
    loglik_term,
)
from .train import DivergenceMonitor, TrainConfig, kl_weight, learning_rate, moving_average, train

__all__ = [
    "Conv1d", "Decoder", "DivergenceMonitor", "ElboTerms", "InferenceNet", "Module",
    "ModelConfig", "NeuralFastFCA", "NeuralFastFCAModel", "PReLU", "TrainConfig", "elbo",
    "infer", "kl_divergence", "kl_weight", "learning_rate", "loglik_term", "moving_average",
    "neural_separate", "separate_wave", "train",
]
