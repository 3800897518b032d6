import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filterlearn import synthdata as sd
from filterlearn.imageio import load_image


def _adjacent_corr(img):
    g = img.mean(axis=2)
    return np.corrcoef(g[:, :-1].ravel(), g[:, 1:].ravel())[0, 1]


def test_natural_like_images_are_smooth_and_bounded():
    for make in (sd.natural_like_image, sd.dead_leaves_image):
        img = make(64, np.random.default_rng(3))
        assert img.shape == (64, 64, 3)
        assert img.min() >= 0 and img.max() <= 1
        assert _adjacent_corr(img) > 0.5


def test_fixed_seed_is_reproducible():
    a = sd.natural_like_patches(300, 8, 11)
    b = sd.natural_like_patches(300, 8, 11)
    assert a.shape == (192, 300)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sd.natural_like_patches(300, 8, 12))


def test_zero_contrast_gives_constant_image():
    spec = sd.TextureSpec("grating", contrast=0.0, base_color=(0.2, 0.4, 0.6))
    img = sd.render_texture(spec, 32)
    assert np.all(img == img[0, 0])
    assert np.allclose(img[0, 0], [0.2, 0.4, 0.6])


@pytest.mark.parametrize("kind", sd.TEXTURE_KINDS)
def test_render_is_deterministic_and_samples_differ(kind):
    spec = sd.TextureSpec(kind, orientation=0.4, frequency=0.1, class_id=5)
    a = sd.render_texture(spec, 64, 0, 7)
    assert np.array_equal(a, sd.render_texture(spec, 64, 0, 7))
    assert not np.array_equal(a, sd.render_texture(spec, 64, 1, 7))


def test_grating_orientation():
    # 0 rad varies along x only, pi/2 along y only
    g0 = sd.render_texture(sd.TextureSpec("grating", 0.0, 0.1), 32)
    g90 = sd.render_texture(sd.TextureSpec("grating", np.pi / 2, 0.1), 32)
    assert np.allclose(g0, g0[:1])
    assert np.allclose(g90, g90[:, :1])


def test_bad_specs_rejected():
    with pytest.raises(ValueError):
        sd.TextureSpec("plaid")
    with pytest.raises(ValueError):
        sd.TextureSpec("grating", frequency=0.9)
    with pytest.raises(ValueError):
        sd.TextureSpec("grating", contrast=2)


def test_desk_corpus_shape_and_labels():
    corpus = sd.texture_corpus(12, 3, 32, 0)
    assert len(corpus) == 36
    labels = [lab for _, _, lab in corpus]
    assert sorted(set(labels)) == list(range(12))
    assert all(labels.count(c) == 3 for c in range(12))
    assert len({i for i, _, _ in corpus}) == 36


def test_shared_palettes():
    specs = sd.desk_texture_specs(6, 0, per_palette=2)
    assert specs[0].base_color == specs[1].base_color
    assert specs[1].base_color != specs[2].base_color
    assert len({s.base_color for s in sd.desk_texture_specs(6, 0)}) == 6
    with pytest.raises(ValueError):
        sd.desk_texture_specs(6, 0, per_palette=0)


def test_distorted_pair_level_zero_identical():
    img = sd.natural_like_image(32, 0)
    for kind in sd.DISTORTIONS:
        ref, dist = sd.make_distorted_pair(img, kind, 0)
        assert np.array_equal(ref, dist)


def test_blur_removes_high_frequencies():
    img = sd.render_texture(sd.TextureSpec("checkerboard", 0.3, 0.2), 64)
    e = [sd.high_frequency_energy(sd.make_distorted_pair(img, "blur", lv)[1]) for lv in (1, 4)]
    assert e[1] < e[0]


def test_distortion_errors_and_determinism():
    img = sd.natural_like_image(32, 0)
    with pytest.raises(ValueError):
        sd.make_distorted_pair(img, "jpeg", 1)
    with pytest.raises(ValueError):
        sd.make_distorted_pair(img, "blur", -1)
    a = sd.make_distorted_pair(img, "noise", 20, 5)[1]
    assert np.array_equal(a, sd.make_distorted_pair(img, "noise", 20, 5)[1])


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0))
def test_contrast_shift_keeps_channel_means(level):
    img = 0.25 + 0.5 * sd.natural_like_image(16, 1)
    _, out = sd.make_distorted_pair(img, "contrast", level)
    assert np.allclose(out.mean(axis=(0, 1)), img.mean(axis=(0, 1)))


def test_writers_emit_manifests(tmp_path):
    manifest = sd.write_texture_corpus(tmp_path / "t", n_classes=3, samples=2, size=32)
    rows = [line.split("\t") for line in manifest.read_text().splitlines()]
    assert len(rows) == 6
    img = load_image(manifest.parent / rows[0][0])
    assert np.allclose(img, sd.texture_corpus(3, 2, 32)[0][1], atol=1 / 255)

    iqa = sd.write_iqa_corpus(tmp_path / "q", n_images=2, levels=(1, 2), size=32)
    assert len(iqa.read_text().splitlines()) == 4
    nat = sd.write_natural_images(tmp_path / "n", count=2, size=32)
    assert len(list(nat.glob("*.ppm"))) == 2
