"""Run configuration: INI files layered over named profiles.

A config file has one section per component; every key is optional and
overrides the selected profile.  Tuples are written comma-separated::

    [scene]
    n_mics = 3
    rt60_range = 0.15, 0.3

    [train]
    epochs = 40

Sections: ``scene`` (:class:`fastfca.scenesim.SceneConfig`), ``train``
(:class:`fastfca.neural.TrainConfig`), ``stft``, ``data``, ``fastmnmf``,
``evaluate`` and ``bench`` (dataclasses below).  Every CLI run writes the fully
resolved configuration next to its outputs.
"""
import configparser
from dataclasses import dataclass, fields, replace

from .exceptions import ConfigError
from .neural.train import TrainConfig
from .scenesim import SceneConfig


@dataclass(frozen=True)
class StftConfig:
    window: int = 512
    hop: int = 128


@dataclass(frozen=True)
class DataConfig:
    n_scenes: int = 220
    n_train: int = 200


@dataclass(frozen=True)
class BaselineConfig:
    n_basis: int = 4
    n_iter: int = 100


@dataclass(frozen=True)
class EvalConfig:
    ref_channel: int = 0


@dataclass(frozen=True)
class BenchConfig:
    repeats: int = 5
    n_scenes: int = 2
    fastmnmf_iter: int = 100


SECTIONS = {
    "scene": SceneConfig,
    "train": TrainConfig,
    "stft": StftConfig,
    "data": DataConfig,
    "fastmnmf": BaselineConfig,
    "evaluate": EvalConfig,
    "bench": BenchConfig,
}

PROFILES = {
    "desk": {
        "scene": {"n_mics": 3, "n_sources_range": (2, 2), "rt60_range": (0.15, 0.3),
                  "duration": 2.0},
        "train": {},
    },
    "paper": {
        "scene": {"n_mics": 6, "n_sources_range": (2, 4), "rt60_range": (0.2, 0.6),
                  "duration": 8.0},
        "train": {"n_sources": 5, "latent_dim": 50, "n_blocks": 8, "width": 256,
                  "clip_frames": 500, "batch_size": 4, "epochs": 100},
        "data": {"n_scenes": 1100, "n_train": 1000},
        "fastmnmf": {"n_basis": 16},
    },
}


@dataclass(frozen=True)
class RunConfig:
    profile: str
    scene: SceneConfig
    train: TrainConfig
    stft: StftConfig
    data: DataConfig
    fastmnmf: BaselineConfig
    evaluate: EvalConfig
    bench: BenchConfig

    def to_ini(self):
        """Fully resolved configuration as INI text (profile recorded in a comment)."""
        lines = [f"# resolved from profile '{self.profile}'"]
        for section in SECTIONS:
            lines.append(f"[{section}]")
            obj = getattr(self, section)
            for f in fields(obj):
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_ini())


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse(raw, default, where):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} values")
            return tuple(_parse(p, d, where) for p, d in zip(parts, default))
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from None
    return raw


def _build(section, overrides):
    cls = SECTIONS[section]
    try:
        return cls(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def load_config(path=None, profile="desk", seed=None):
    """Resolve a :class:`RunConfig` from a profile, an optional INI file and a seed.

    ``seed`` (if given) overrides both ``scene.seed`` and ``train.seed``.

    Raises
    ------
    ConfigError
        Unknown profile, section or key; unparsable or invalid values; unreadable file.
    """
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    values = {s: dict(PROFILES[profile].get(s, {})) for s in SECTIONS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}] in {path}")
            defaults = {f.name: f.default for f in fields(SECTIONS[section])}
            base = {**defaults, **values[section]}
            for key, raw in parser.items(section):
                if key not in defaults:
                    raise ConfigError(f"unknown key '{key}' in [{section}]")
                values[section][key] = _parse(raw, base[key], f"[{section}] {key}")
    built = {s: _build(s, values[s]) for s in SECTIONS}
    if seed is not None:
        built["scene"] = replace(built["scene"], seed=int(seed))
        built["train"] = replace(built["train"], seed=int(seed))
    data = built["data"]
    if not 0 <= data.n_train <= data.n_scenes:
        raise ConfigError("data.n_train must lie in [0, n_scenes]")
    if built["stft"].window % built["stft"].hop:
        raise ConfigError("stft.hop must divide stft.window")
    return RunConfig(profile=profile, **built)
