import numpy as np
import pytest

from fastfca import dsp
from fastfca.scenesim import SceneConfig, simulate_scene

SMALL_WINDOW, SMALL_HOP = 256, 64


def desk_scene_config(**kw):
    base = dict(n_mics=3, n_sources_range=(2, 2), rt60_range=(0.15, 0.3), duration=1.5)
    base.update(kw)
    return SceneConfig(**base)


@pytest.fixture(scope="session")
def two_source_scenes():
    """Five reverberant 2-source 3-mic scenes with their small-profile spectrograms."""
    cfg = desk_scene_config()
    out = []
    for seed in range(5):
        scene = simulate_scene(cfg, seed=100 + seed)
        out.append((scene, dsp.stft(scene.mixture, SMALL_WINDOW, SMALL_HOP, pad=True)))
    return out


@pytest.fixture(scope="session")
def anechoic_scene():
    scene = simulate_scene(desk_scene_config(max_order=0, duration=3.0), seed=7)
    return scene, dsp.stft(scene.mixture, SMALL_WINDOW, SMALL_HOP, pad=True)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
