"""Dataset, training, separation and evaluation pipelines behind the CLI.

Dataset manifest (``manifest.jsonl``): one JSON object per line, sorted by id::

    {"id": "scene_0003", "seed": 123, "split": "train",
     "mixture": "scenes/scene_0003/mixture.wav",
     "references": ["scenes/scene_0003/image0.wav", ...],
     "metadata": {"room_dim": [...], "rt60": ..., "absorption": ...,
                  "source_positions": [...], "mic_positions": [...], "gains_db": [...]}}

Paths are relative to the manifest's directory.  Mixtures and references are
M-channel float32 WAVs; each reference is one source image at every microphone.

Estimates manifest (``estimates.jsonl``): ``{"id", "method", "estimates": [paths]}``
with one mono WAV per separated source.

Evaluation report (``report.tsv``): tab-separated, one row per (scene, reference)
with the assigned estimate and SI-SDR values, then ``MEAN`` rows.  Wall-times
never enter the report; they go to ``timing.tsv`` so that reports of repeated
runs are byte-identical.
"""
import json
import os
import time

import numpy as np

from . import dsp
from .exceptions import ConfigError, EmptyInputError, PipelineError
from .fastmnmf import FastMNMF
from .metrics import permute_align, select_loudest, si_sdr
from .neural.estimator import neural_separate
from .neural.model import NeuralFastFCAModel
from .neural.train import train
from .scenesim import simulate_scene

MANIFEST = "manifest.jsonl"
ESTIMATES = "estimates.jsonl"


def scene_seed(base_seed, index):
    """Independent per-scene seed derived from the run seed."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def _write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    try:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineError("read", f"{path}: {exc}") from exc


def simulate_dataset(cfg, out_dir):
    """Render ``cfg.data.n_scenes`` scenes to WAVs and write the manifest; returns its path."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(cfg.data.n_scenes):
        sid = f"scene_{i:04d}"
        seed = scene_seed(cfg.scene.seed, i)
        try:
            scene = simulate_scene(cfg.scene, seed=seed)
        except Exception as exc:
            raise PipelineError("simulate", f"{sid}: {exc}") from exc
        rel = os.path.join("scenes", sid)
        os.makedirs(os.path.join(out_dir, rel), exist_ok=True)
        mix = os.path.join(rel, "mixture.wav")
        dsp.wav_write(os.path.join(out_dir, mix), scene.mixture, scene.sample_rate)
        refs = []
        for n, image in enumerate(scene.images):
            path = os.path.join(rel, f"image{n}.wav")
            dsp.wav_write(os.path.join(out_dir, path), image, scene.sample_rate)
            refs.append(path)
        records.append({
            "id": sid, "seed": seed, "split": "train" if i < cfg.data.n_train else "test",
            "mixture": mix, "references": refs, "metadata": scene.geometry.metadata(),
        })
    path = os.path.join(out_dir, MANIFEST)
    _write_jsonl(path, records)
    return path


def load_manifest(path, split=None):
    """Records of a dataset manifest (optionally one split) with absolute paths."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    for rec in read_jsonl(path):
        if split is not None and rec.get("split") != split:
            continue
        rec = dict(rec)
        rec["mixture"] = os.path.join(base, rec["mixture"])
        rec["references"] = [os.path.join(base, p) for p in rec["references"]]
        records.append(rec)
    return sorted(records, key=lambda r: r["id"])


def mixture_spec(rec, stft_cfg):
    wave = dsp.wav_read(rec["mixture"])
    return dsp.stft(wave, stft_cfg.window, stft_cfg.hop, pad=True), wave


def train_from_manifest(cfg, manifest, out_dir):
    """Train on the manifest's training split; writes checkpoint and metric logs."""
    records = load_manifest(manifest, split="train")
    if not records:
        raise EmptyInputError(f"{manifest} has no training scenes")
    os.makedirs(out_dir, exist_ok=True)
    specs = [mixture_spec(r, cfg.stft)[0] for r in records]
    try:
        model, history = train(specs, cfg.train,
                               log_path=os.path.join(out_dir, "metrics.ndjson"),
                               timing_path=os.path.join(out_dir, "train_timing.ndjson"))
    except ConfigError:
        raise
    except Exception as exc:
        raise PipelineError("train", exc) from exc
    ckpt = os.path.join(out_dir, "model.ffca")
    model.save(ckpt)
    return ckpt, history


def _separator(cfg, checkpoint=None, baseline=None):
    if checkpoint is not None:
        model = NeuralFastFCAModel.load(checkpoint)
        return "neural", lambda X: neural_separate(model, X, cfg.evaluate.ref_channel)
    if baseline == "fastmnmf":
        def run(X):
            est = FastMNMF(n_sources=cfg.train.n_sources, n_basis=cfg.fastmnmf.n_basis,
                           n_iter=cfg.fastmnmf.n_iter, ref_channel=cfg.evaluate.ref_channel,
                           random_state=cfg.train.seed)
            return est.fit(X).transform(X)
        return "fastmnmf", run
    raise ConfigError("separate needs a checkpoint or --baseline fastmnmf")


def separate_manifest(cfg, manifest, out_dir, checkpoint=None, baseline=None, split="test"):
    """Separate every scene of ``split``; writes mono estimate WAVs and their manifest."""
    method, run = _separator(cfg, checkpoint, baseline)
    records = load_manifest(manifest, split=split)
    if not records:
        raise EmptyInputError(f"{manifest} has no '{split}' scenes")
    os.makedirs(out_dir, exist_ok=True)
    out, timing = [], []
    for rec in records:
        X, wave = mixture_spec(rec, cfg.stft)
        t0 = time.perf_counter()
        try:
            S = run(X)
        except Exception as exc:
            raise PipelineError(f"separate[{rec['id']}]", exc) from exc
        elapsed = time.perf_counter() - t0
        rel = os.path.join("estimates", rec["id"])
        os.makedirs(os.path.join(out_dir, rel), exist_ok=True)
        paths = []
        for n, s in enumerate(S):
            y = dsp.istft(s[:, :, None], cfg.stft.window, cfg.stft.hop, pad=True,
                          length=len(wave))
            path = os.path.join(rel, f"est{n}.wav")
            dsp.wav_write(os.path.join(out_dir, path), y, wave.sample_rate)
            paths.append(path)
        out.append({"id": rec["id"], "method": method, "estimates": paths})
        timing.append((rec["id"], "separate", elapsed))
    _write_jsonl(os.path.join(out_dir, ESTIMATES), out)
    write_timing(os.path.join(out_dir, "timing.tsv"), timing)
    return os.path.join(out_dir, ESTIMATES)


def write_timing(path, rows):
    with open(path, "w") as fh:
        fh.write("scene_id\tstage\tseconds\n")
        for sid, stage, sec in rows:
            fh.write(f"{sid}\t{stage}\t{sec:.6f}\n")


def evaluate_scene(estimates, references, mixture):
    """Align the loudest K estimates to K references by SI-SDR.

    Returns a dict with ``perm`` (estimate index per reference), ``si_sdr``,
    ``mixture_si_sdr`` and ``improvement`` arrays of length K.
    """
    idx = select_loudest(estimates, len(references))
    perm, scores = permute_align([estimates[i] for i in idx], references)
    base = np.array([si_sdr(mixture, r) for r in references])
    return {"perm": idx[perm], "si_sdr": scores, "mixture_si_sdr": base,
            "improvement": scores - base}


def evaluate_estimates(cfg, manifest, estimates_path, out_dir):
    """Score an estimates manifest against the dataset manifest; writes ``report.tsv``."""
    ref_ch = cfg.evaluate.ref_channel
    scenes = {r["id"]: r for r in load_manifest(manifest)}
    ests = sorted(read_jsonl(estimates_path), key=lambda r: r["id"])
    if not ests:
        raise EmptyInputError(f"{estimates_path} lists no estimates")
    base = os.path.dirname(os.path.abspath(estimates_path))
    os.makedirs(out_dir, exist_ok=True)
    rows, timing = [], []
    for rec in ests:
        if rec["id"] not in scenes:
            raise PipelineError("evaluate", f"scene {rec['id']} not in {manifest}")
        scene = scenes[rec["id"]]
        t0 = time.perf_counter()
        mix = dsp.wav_read(scene["mixture"]).samples[ref_ch]
        refs = [dsp.wav_read(p).samples[ref_ch] for p in scene["references"]]
        est = [dsp.wav_read(os.path.join(base, p)).samples[0] for p in rec["estimates"]]
        try:
            res = evaluate_scene(est, refs, mix)
        except Exception as exc:
            raise PipelineError(f"evaluate[{rec['id']}]", exc) from exc
        timing.append((rec["id"], "evaluate", time.perf_counter() - t0))
        for j in range(len(refs)):
            rows.append((rec["id"], rec.get("method", ""), j, int(res["perm"][j]),
                         res["si_sdr"][j], res["mixture_si_sdr"][j], res["improvement"][j]))
    path = os.path.join(out_dir, "report.tsv")
    write_report(path, rows)
    write_timing(os.path.join(out_dir, "timing.tsv"), timing)
    return path, rows


def write_report(path, rows):
    with open(path, "w") as fh:
        fh.write("scene_id\tmethod\treference\testimate\tsi_sdr_db\tmixture_si_sdr_db"
                 "\tsi_sdr_improvement_db\n")
        for sid, method, j, e, s, b, imp in rows:
            fh.write(f"{sid}\t{method}\t{j}\t{e}\t{s:.4f}\t{b:.4f}\t{imp:.4f}\n")
        if rows:
            arr = np.array([r[4:] for r in rows], dtype=np.float64)
            mean = arr.mean(axis=0)
            fh.write(f"MEAN\t{rows[0][1]}\t-\t-\t{mean[0]:.4f}\t{mean[1]:.4f}\t{mean[2]:.4f}\n")
