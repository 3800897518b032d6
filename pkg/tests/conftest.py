"""Trained models shared across test modules."""

import numpy as np
import pytest

from filterlearn import decoder, iqa, synthdata, texture

# Desk-scale texture recipe: 40 dead-leaves training images, 5000 patches per
# layer and 150 L-BFGS iterations keep training near two minutes.
DESK_TEXTURE_CONFIG = texture.TextureTrainingConfig(
    color_patches=5000, p2_patches=5000, decoder=decoder.TrainingConfig(max_iterations=150))


def desk_training_images(seed=0, count=40, size=128):
    rng = np.random.default_rng(seed)
    return [synthdata.dead_leaves_image(size, rng) for _ in range(count)]


@pytest.fixture(scope="session")
def small_unique():
    patches = synthdata.natural_like_patches(2000, 8, 0)
    cfg = decoder.TrainingConfig(max_iterations=40)
    return iqa.train_unique(patches, h=40, cfg=cfg, rng=0)


@pytest.fixture(scope="session")
def small_texture_model():
    imgs = desk_training_images(0, 8, 96)
    cfg = texture.TextureTrainingConfig(h2=16, h3=12, h_final=32, pool_size=8, color_patches=1000,
                                        p2_patches=1000, p3_samples=1000, crops=1000,
                                        decoder=decoder.TrainingConfig(max_iterations=15))
    return texture.train_texture_model(imgs, cfg, 0)


@pytest.fixture(scope="session")
def desk_texture_model():
    return texture.train_texture_model(desk_training_images(), DESK_TEXTURE_CONFIG, 0)


_REPORT = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` records one acceptance line for the terminal summary."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def add(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
