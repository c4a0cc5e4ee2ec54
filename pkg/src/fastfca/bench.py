"""Wall-clock benchmarks of separation pipelines."""
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .exceptions import ConfigError, EmptyInputError, PipelineError
from .fastmnmf import fastmnmf_init, fastmnmf_iterate
from .neural.estimator import neural_separate
from .neural.model import NeuralFastFCAModel
from .pipeline import scene_seed
from .scenesim import simulate_scene

MIN_REPEATS = 5


@dataclass
class BenchRow:
    pipeline: str
    scene_id: str
    samples: list = field(default_factory=list)

    @property
    def median(self):
        return float(np.median(self.samples))


def machine_fingerprint():
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
    }


def bench(pipelines, scenes, repeats=MIN_REPEATS, clock=time.perf_counter):
    """Time every pipeline on every scene ``repeats`` times.

    Parameters
    ----------
    pipelines : dict
        Stage name -> callable taking one scene input.
    scenes : list of (scene_id, input)
    repeats : int
        At least 5; the median is reported.

    Returns
    -------
    list of BenchRow, ordered by pipeline then scene.
    """
    if not scenes:
        raise EmptyInputError("bench needs at least one scene")
    if repeats < MIN_REPEATS:
        raise ConfigError(f"bench repeats must be >= {MIN_REPEATS}, got {repeats}")
    rows = []
    for name, fn in pipelines.items():
        for sid, item in scenes:
            row = BenchRow(name, sid)
            for _ in range(repeats):
                t0 = clock()
                try:
                    fn(item)
                except Exception as exc:
                    raise PipelineError(name, exc) from exc
                row.samples.append(clock() - t0)
            rows.append(row)
    return rows


def speed_ratio(rows, slow, fast):
    """Median time of ``slow`` over median time of ``fast``, averaged over scenes."""
    med = {}
    for r in rows:
        med.setdefault(r.pipeline, {})[r.scene_id] = r.median
    ratios = [med[slow][s] / med[fast][s] for s in med[fast] if s in med[slow]]
    return float(np.mean(ratios))


def neural_vs_fastmnmf(cfg, model=None, n_iter=None, repeats=None):
    """Time neural separation (one inference pass, decode, Wiener filter) against
    ``n_iter`` FastMNMF iterations.

    Scenes are simulated from ``cfg.scene``; both methods use the same
    (F, T, M, N).  Returns (rows, ratio) with ratio = FastMNMF / neural.
    """
    n_iter = cfg.bench.fastmnmf_iter if n_iter is None else n_iter
    repeats = cfg.bench.repeats if repeats is None else repeats
    scenes = []
    for i in range(cfg.bench.n_scenes):
        sc = simulate_scene(cfg.scene, seed=scene_seed(cfg.scene.seed, 10_000 + i))
        scenes.append((f"bench_{i:02d}", dsp.stft(sc.mixture, cfg.stft.window, cfg.stft.hop,
                                                  pad=True)))
    if not scenes:
        raise EmptyInputError("bench.n_scenes is 0")
    F, _, M = scenes[0][1].shape
    if model is None:
        model = NeuralFastFCAModel(cfg.train.model_config(F, M), seed=cfg.train.seed)
    n_src = model.cfg.n_sources

    def neural(X):
        neural_separate(model, X)

    def fastmnmf(X):
        params = fastmnmf_init(X, n_src, cfg.fastmnmf.n_basis, seed=0)
        for _ in range(n_iter):
            params = fastmnmf_iterate(params, X)

    rows = bench({"neural_infer": neural, f"fastmnmf_{n_iter}it": fastmnmf}, scenes, repeats)
    return rows, speed_ratio(rows, f"fastmnmf_{n_iter}it", "neural_infer")


def write_bench(path, rows, ratio=None):
    with open(path, "w") as fh:
        fh.write("pipeline\tscene_id\tmedian_s\trepeats\tsamples_s\n")
        for r in rows:
            samples = ",".join(f"{s:.6f}" for s in r.samples)
            fh.write(f"{r.pipeline}\t{r.scene_id}\t{r.median:.6f}\t{len(r.samples)}\t{samples}\n")
        if ratio is not None:
            fh.write(f"# speed ratio (fastmnmf / neural): {ratio:.3f}\n")
