"""Ground-truthed multichannel mixtures from simulated shoebox rooms.

Room impulse responses use the image method with a uniform wall absorption
obtained from the target RT60 through Sabine's formula, and windowed-sinc
fractional delays.  Dry sources are synthetic speech-like signals unless the
caller provides waveforms.
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import fftconvolve, lfilter

from ._validation import check_random_state
from .exceptions import InfeasibleSceneError, ShapeError

SPEED_OF_SOUND = 343.0
MAX_ATTEMPTS = 1000


@dataclass
class SceneConfig:
    """Sampling ranges for random scenes (lengths in metres, times in seconds)."""

    room_min: tuple = (5.0, 5.0, 3.0)
    room_max: tuple = (10.0, 10.0, 5.0)
    rt60_range: tuple = (0.2, 0.6)
    n_mics: int = 6
    array_radius: float = 0.1
    array_jitter: float = 0.5
    n_sources_range: tuple = (2, 4)
    min_source_distance: float = 1.0
    min_array_distance: float = 0.5
    wall_margin: float = 0.5
    gain_db_range: tuple = (-2.5, 2.5)
    snr_db: float = 30.0
    sample_rate: int = 8000
    duration: float = 3.0
    max_order: int = 6
    max_images: int = 200_000
    seed: int = 0

    def __post_init__(self):
        lo, hi = np.asarray(self.room_min, float), np.asarray(self.room_max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo <= 0) or np.any(hi < lo):
            raise ValueError("room ranges must be positive 3-vectors with min <= max")
        for name in ("rt60_range", "n_sources_range", "gain_db_range"):
            a, b = getattr(self, name)
            if b < a:
                raise ValueError(f"{name} is empty")
        if self.rt60_range[0] <= 0 or self.n_sources_range[0] < 1 or self.n_mics < 1:
            raise ValueError("rt60, source count and mic count must be positive")
        if self.sample_rate <= 0 or self.duration <= 0 or self.max_order < 0:
            raise ValueError("sample_rate, duration must be positive and max_order >= 0")


@dataclass
class SceneGeometry:
    room_dim: np.ndarray
    rt60: float
    source_positions: np.ndarray  # (N, 3)
    mic_positions: np.ndarray  # (M, 3)
    gains_db: np.ndarray  # (N,)

    def metadata(self):
        return {
            "room_dim": [float(v) for v in self.room_dim],
            "rt60": float(self.rt60),
            "absorption": float(sabine_absorption(self.room_dim, self.rt60)),
            "source_positions": self.source_positions.tolist(),
            "mic_positions": self.mic_positions.tolist(),
            "gains_db": self.gains_db.tolist(),
        }


@dataclass
class Scene:
    geometry: SceneGeometry
    rirs: np.ndarray  # (N, M, L_rir)
    images: np.ndarray  # (N, M, L)
    noise: np.ndarray  # (M, L)
    mixture: np.ndarray  # (M, L)
    sample_rate: int
    dry: list = field(default_factory=list)

    @property
    def n_sources(self):
        return self.images.shape[0]


# -- geometry -------------------------------------------------------------------
def sample_scene(config, rng=None):
    """Draw room, RT60, microphone array, source positions and gains."""
    rng = check_random_state(config.seed if rng is None else rng)
    lo, hi = np.asarray(config.room_min, float), np.asarray(config.room_max, float)
    room = rng.uniform(lo, hi)
    rt60 = rng.uniform(*config.rt60_range)
    n_src = int(rng.integers(config.n_sources_range[0], config.n_sources_range[1] + 1))

    margin = config.wall_margin
    if config.min_source_distance > np.linalg.norm(lo - 2 * margin) and n_src > 1:
        raise InfeasibleSceneError(
            f"min source spacing {config.min_source_distance} m exceeds the usable room diagonal")
    center = room / 2 + rng.uniform(-1, 1, size=3) * np.array(
        [config.array_jitter, config.array_jitter, config.array_jitter / 2])
    mics = center + _ball(rng, config.n_mics, config.array_radius)

    for _ in range(MAX_ATTEMPTS):
        src = rng.uniform(margin, room - margin, size=(n_src, 3))
        if np.any(np.linalg.norm(src - center, axis=1) < config.min_array_distance):
            continue
        if n_src > 1:
            d = np.linalg.norm(src[:, None] - src[None], axis=-1)
            if d[np.triu_indices(n_src, 1)].min() < config.min_source_distance:
                continue
        break
    else:
        raise InfeasibleSceneError(
            f"could not place {n_src} sources {config.min_source_distance} m apart "
            f"after {MAX_ATTEMPTS} attempts")
    gains = rng.uniform(*config.gain_db_range, size=n_src)
    return SceneGeometry(room, float(rt60), src, mics, gains)


def _ball(rng, n, radius):
    """Uniform points in a ball of the given radius."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n, 1)) ** (1 / 3)
    return v * r


# -- room impulse responses -----------------------------------------------------------
def sabine_absorption(room_dim, rt60):
    """Uniform absorption coefficient alpha = 0.161 V / (S RT60), clipped to [0, 1]."""
    lx, ly, lz = room_dim
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    return float(np.clip(0.161 * volume / (surface * rt60), 0.0, 1.0))


def _image_sources(room, src, max_order, max_images):
    axes = []
    for dim in range(3):
        pos, refl = [], []
        for p in (0, 1):
            n = np.arange(int(np.ceil((p - max_order) / 2)), int(np.floor((p + max_order) / 2)) + 1)
            pos.append((1 - 2 * p) * src[dim] + 2 * n * room[dim])
            refl.append(np.abs(2 * n - p))
        axes.append((np.concatenate(pos), np.concatenate(refl)))
    (px, rx), (py, ry), (pz, rz) = axes
    order = rx[:, None, None] + ry[None, :, None] + rz[None, None, :]
    keep = order <= max_order
    ix, iy, iz = np.nonzero(keep)
    refl = order[keep]
    if refl.size > max_images:
        sel = np.argsort(refl, kind="stable")[:max_images]
        ix, iy, iz, refl = ix[sel], iy[sel], iz[sel], refl[sel]
    return np.stack([px[ix], py[iy], pz[iz]], axis=1), refl


def image_method_rir(room, src, mic, rt60, max_order=6, sample_rate=8000,
                     sinc_half_width=16, max_images=200_000, c=SPEED_OF_SOUND):
    """Shoebox RIR from ``src`` to ``mic`` by the image method.

    Each image contributes ``beta**reflections / (4 pi d)`` at delay
    ``fs d / c`` samples, where ``beta = sqrt(1 - alpha)`` and alpha comes from
    :func:`sabine_absorption`.  Fractional delays use a Hann-windowed sinc of
    ``2 * sinc_half_width`` taps.
    """
    room, src, mic = (np.asarray(v, dtype=np.float64) for v in (room, src, mic))
    for name, p in (("source", src), ("microphone", mic)):
        if np.any(p <= 0) or np.any(p >= room):
            raise ValueError(f"{name} position {p} lies outside the room {room}")
    if rt60 <= 0:
        raise ValueError("rt60 must be positive")
    beta = np.sqrt(1.0 - sabine_absorption(room, rt60))
    images, refl = _image_sources(room, src, max_order, max_images)
    dist = np.linalg.norm(images - mic, axis=1)
    amp = beta ** refl / (4 * np.pi * dist)
    delay = sample_rate * dist / c

    W = sinc_half_width
    length = int(np.ceil(delay.max())) + W + 1
    base = np.floor(delay).astype(int)
    offs = np.arange(-W + 1, W + 1)
    taps = base[:, None] + offs[None, :]
    x = taps - delay[:, None]
    vals = np.sinc(x) * 0.5 * (1 + np.cos(np.pi * x / W)) * amp[:, None]
    valid = taps >= 0
    return np.bincount(taps[valid], weights=vals[valid], minlength=length)[:length]


def scene_rirs(geometry, max_order=6, sample_rate=8000, max_images=200_000):
    """RIRs for every (source, mic) pair, zero-padded to a common length: (N, M, L)."""
    rirs = [[image_method_rir(geometry.room_dim, s, m, geometry.rt60, max_order, sample_rate,
                              max_images=max_images)
             for m in geometry.mic_positions] for s in geometry.source_positions]
    length = max(len(h) for row in rirs for h in row)
    out = np.zeros((len(rirs), len(rirs[0]), length))
    for i, row in enumerate(rirs):
        for j, h in enumerate(row):
            out[i, j, :len(h)] = h
    return out


# -- dry sources -------------------------------------------------------------------------
def synth_speech_like(n_samples, sample_rate=8000, rng=None):
    """Speech-like test signal: formant-filtered harmonic syllables with pauses.

    Each syllable has a gliding pitch (harmonics with 1/k roll-off up to
    Nyquist), a two-pole-pair formant filter and a Hann envelope; about one in
    five syllables is unvoiced noise.  Output has unit RMS.
    """
    rng = check_random_state(rng)
    fs = sample_rate
    out = np.zeros(n_samples)
    f0_base = rng.uniform(90.0, 250.0)
    pos = int(rng.uniform(0.0, 0.3) * fs)
    while pos < n_samples:
        seg = int(rng.uniform(0.12, 0.35) * fs)
        n = min(seg, n_samples - pos)
        t = np.arange(n) / fs
        if rng.random() < 0.8:
            f0 = f0_base * np.exp(rng.normal(0, 0.12)) * (1 + rng.uniform(-0.2, 0.2) * t / max(t[-1], 1e-3))
            phase = 2 * np.pi * np.cumsum(f0) / fs
            n_harm = int(0.5 * fs / f0.max())
            k = np.arange(1, n_harm + 1)
            exc = (np.sin(np.outer(phase, k)) / k).sum(axis=1) + 0.05 * rng.normal(size=n)
        else:
            exc = rng.normal(size=n)
        a = np.array([1.0])
        for lo, hi in ((300.0, 900.0), (900.0, min(2500.0, 0.45 * fs))):
            freq, bw = rng.uniform(lo, hi), rng.uniform(80.0, 200.0)
            r = np.exp(-np.pi * bw / fs)
            a = np.convolve(a, [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r])
        voiced = lfilter([1.0], a, exc)
        env = np.hanning(seg)[:n]
        out[pos:pos + n] += rng.uniform(0.5, 1.0) * env * voiced / (np.std(voiced) + 1e-12)
        pos += seg + int(rng.uniform(0.02, 0.25) * fs)
    out -= out.mean()
    return out / (np.sqrt(np.mean(out**2)) + 1e-12)


# -- mixing ---------------------------------------------------------------------------------
def render_mixture(geometry, dry_sources, config, rng=None, rirs=None):
    """Convolve dry sources with RIRs, apply gains and add white noise at the set SNR.

    Each source image is scaled so that its power at microphone 0 equals
    ``10 ** (gain_db / 10)``.  Noise is white Gaussian, independent per channel,
    scaled so that ``10 log10(sum_n ||image_n||^2 / ||noise||^2) = snr_db``;
    ``snr_db=None`` disables it.
    """
    rng = check_random_state(rng)
    n_src = len(geometry.source_positions)
    if len(dry_sources) != n_src:
        raise ShapeError(f"{n_src} sources in the scene but {len(dry_sources)} waveforms")
    length = min(len(s) for s in dry_sources)
    if rirs is None:
        rirs = scene_rirs(geometry, config.max_order, config.sample_rate, config.max_images)
    images = np.zeros((n_src, len(geometry.mic_positions), length))
    for n, dry in enumerate(dry_sources):
        dry = np.asarray(dry, dtype=np.float64)[:length]
        if not np.any(dry):
            raise ValueError(f"dry source {n} is silent")
        img = fftconvolve(dry[None, :], rirs[n], axes=-1)[:, :length]
        power = np.mean(img[0] ** 2)
        if power <= 0:
            raise ValueError(f"source {n} produces a silent image at the reference microphone")
        images[n] = img * np.sqrt(10 ** (geometry.gains_db[n] / 10) / power)
    clean = images.sum(axis=0)
    noise = np.zeros_like(clean)
    if config.snr_db is not None and np.isfinite(config.snr_db):
        noise = rng.normal(size=clean.shape)
        noise *= np.sqrt(np.sum(images**2) / np.sum(noise**2) / 10 ** (config.snr_db / 10))
    mixture = clean + noise
    return Scene(geometry, rirs, images, noise, mixture, config.sample_rate,
                 [np.asarray(d, dtype=np.float64)[:length] for d in dry_sources])


def simulate_scene(config, seed=None):
    """Full scene (geometry, synthetic sources, rendering) from one seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    geometry = sample_scene(config, rng)
    n_samples = int(round(config.duration * config.sample_rate))
    dry = [synth_speech_like(n_samples, config.sample_rate, rng)
           for _ in range(len(geometry.source_positions))]
    return render_mixture(geometry, dry, config, rng)


def config_dict(config):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()}
