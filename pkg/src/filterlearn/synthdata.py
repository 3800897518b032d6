"""Deterministic desk-scale corpora.

* natural-like images: colored noise with a ``1/f^2`` power spectrum, so
  neighbouring pixels are strongly correlated the way natural scenes are,
  and dead-leaves images (occluding disks) that add sharp edges on top;
* procedural texture classes, several samples per class;
* reference/distorted image pairs for quality estimation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imageio import add_gaussian_noise, as_rng, check_image, sample_random_patches, save_image

TEXTURE_KINDS = ("grating", "checkerboard", "noise", "blend")
DISTORTIONS = ("blur", "noise", "contrast")

# Luminance-heavy mixing keeps channels correlated, like RGB photographs.
_COLOR_MIX = np.array([[1.0, 0.35, 0.10],
                       [1.0, -0.05, -0.25],
                       [1.0, -0.30, 0.35]])


def _pink_field(shape, rng, exponent=1.0):
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    amp = f ** -exponent
    amp[0, 0] = 0.0
    spec = amp * (rng.normal(size=amp.shape) + 1j * rng.normal(size=amp.shape))
    field = np.fft.irfft2(spec, s=(h, w))
    return field / field.std()


def natural_like_image(size: int, rng=None) -> np.ndarray:
    """One ``size x size`` RGB image with ``1/f^2`` power spectrum in ``[0, 1]``."""
    rng = as_rng(rng)
    fields = np.stack([_pink_field((size, size), rng) for _ in range(3)], axis=-1)
    rgb = fields @ _COLOR_MIX.T
    rgb = 0.5 + 0.12 * rgb + rng.uniform(-0.15, 0.15, size=3)
    return np.clip(rgb, 0.0, 1.0)


def dead_leaves_image(size: int, rng=None, n_leaves: int | None = None) -> np.ndarray:
    """Occluding colored disks with power-law radii plus a little ``1/f`` noise.

    Radii drawn from ``p(r) ~ r^-3`` give an approximately ``1/f^2`` power
    spectrum while adding the sharp edges that Gaussian noise lacks.
    """
    rng = as_rng(rng)
    n_leaves = n_leaves or 6 * size
    rmin, rmax = 1.0, size / 3.0
    u = rng.uniform(size=n_leaves)
    radii = 1.0 / np.sqrt(u / rmax ** 2 + (1 - u) / rmin ** 2)
    centers = rng.uniform(-rmax, size + rmax, size=(n_leaves, 2))
    colors = np.clip(0.5 + 0.18 * rng.normal(size=(n_leaves, 3)) @ _COLOR_MIX.T, 0, 1)
    img = np.empty((size, size, 3))
    filled = np.zeros((size, size), dtype=bool)
    yy, xx = np.mgrid[0:size, 0:size]
    # Front-to-back: the first leaf drawn at a pixel occludes later ones.
    for (cy, cx), r, col in zip(centers, radii, colors):
        y0, y1 = max(int(cy - r), 0), min(int(cy + r) + 2, size)
        x0, x1 = max(int(cx - r), 0), min(int(cx + r) + 2, size)
        if y0 >= y1 or x0 >= x1:
            continue
        sub = (yy[y0:y1, x0:x1] - cy) ** 2 + (xx[y0:y1, x0:x1] - cx) ** 2 <= r * r
        sub &= ~filled[y0:y1, x0:x1]
        img[y0:y1, x0:x1][sub] = col
        filled[y0:y1, x0:x1] |= sub
        if filled.all():
            break
    img[~filled] = 0.5
    grain = np.stack([_pink_field((size, size), rng) for _ in range(3)], axis=-1)
    return np.clip(img + 0.03 * grain, 0.0, 1.0)


def natural_like_images(count: int, size: int = 64, rng=None) -> list[np.ndarray]:
    rng = as_rng(rng)
    return [natural_like_image(size, rng) for _ in range(count)]


def natural_like_patches(count: int, side: int = 8, rng=None, per_image: int = 50,
                         image_size: int = 64) -> np.ndarray:
    """``(side*side*3, count)`` patches sampled from fresh natural-like images."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = as_rng(rng)
    image_size = max(image_size, side)
    cols = []
    remaining = count
    while remaining > 0:
        take = min(per_image, remaining)
        img = natural_like_image(image_size, rng)
        cols.append(sample_random_patches(img, take, side, rng))
        remaining -= take
    return np.concatenate(cols, axis=1)


@dataclass(frozen=True)
class TextureSpec:
    kind: str
    orientation: float = 0.0  # radians
    frequency: float = 0.1  # cycles per pixel
    base_color: tuple = (0.5, 0.5, 0.5)
    contrast: float = 0.3
    class_id: int = 0
    accent: tuple = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise ValueError(f"unknown texture kind {self.kind!r}")
        if not 0 < self.frequency <= 0.5:
            raise ValueError("frequency must lie in (0, 0.5] cycles/pixel")
        if not 0 <= self.contrast <= 1:
            raise ValueError("contrast must lie in [0, 1]")
        if len(self.base_color) != 3 or not all(0 <= c <= 1 for c in self.base_color):
            raise ValueError("base_color must be three values in [0, 1]")


def _sample_rng(spec: TextureSpec, sample_index: int, rng):
    if isinstance(rng, np.random.Generator):
        return rng
    seed = 0 if rng is None else int(rng)
    return np.random.default_rng([seed, spec.class_id, sample_index])


def _class_rng(spec: TextureSpec, rng):
    seed = 0 if rng is None or isinstance(rng, np.random.Generator) else int(rng)
    return np.random.default_rng([seed, spec.class_id, 1_000_003])


def render_texture(spec: TextureSpec, size: int = 128, sample_index: int = 0, rng=None) -> np.ndarray:
    """Render one sample of a texture class.

    Samples of one class share every parameter and differ only in spatial
    offset (phase), i.e. they are different crops of the same texture.
    """
    if size < 16:
        raise ValueError("size must be >= 16")
    srng = _sample_rng(spec, sample_index, rng)
    oy, ox = srng.uniform(0, 4 * size, size=2)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    yy += oy
    xx += ox
    c, s = np.cos(spec.orientation), np.sin(spec.orientation)
    u = xx * c + yy * s
    v = -xx * s + yy * c
    f = spec.frequency
    if spec.kind == "grating":
        wave = np.sin(2 * np.pi * f * u)
    elif spec.kind == "checkerboard":
        wave = np.sign(np.sin(2 * np.pi * f * u) * np.sin(2 * np.pi * f * v))
    elif spec.kind == "blend":
        t = (f * u) % 1.0
        wave = 2.0 * np.abs(2.0 * t - 1.0) - 1.0
    else:
        # Oriented band-pass noise, fixed per class; samples are offset crops.
        crng = _class_rng(spec, rng)
        canvas = 8 * size
        spec_y = np.fft.fftfreq(canvas)[:, None]
        spec_x = np.fft.fftfreq(canvas)[None, :]
        fu = spec_x * c + spec_y * s
        fv = -spec_x * s + spec_y * c
        bw = 0.25 * f
        gain = (np.exp(-((fu - f) ** 2 + (fv / 2.0) ** 2) / (2 * bw * bw))
                + np.exp(-((fu + f) ** 2 + (fv / 2.0) ** 2) / (2 * bw * bw)))
        white = crng.normal(size=(canvas, canvas))
        fld = np.real(np.fft.ifft2(np.fft.fft2(white) * gain))
        fld /= fld.std()
        y0, x0 = (int(a) % (canvas - size) for a in (oy, ox))
        wave = np.clip(fld[y0:y0 + size, x0:x0 + size] / 2.0, -1.0, 1.0)
    base = np.asarray(spec.base_color, dtype=np.float64)
    accent = np.asarray(spec.accent, dtype=np.float64)
    img = base + spec.contrast * wave[..., None] * accent
    return np.clip(img, 0.0, 1.0)


def desk_texture_specs(n_classes: int = 12, seed: int = 0, per_palette: int = 1) -> list[TextureSpec]:
    """A varied, deterministic list of texture classes.

    By default every class gets its own hue. With ``per_palette > 1``,
    consecutive groups of classes share base and accent colors, so color
    alone cannot tell them apart (a harder, structure-only variant).
    """
    if per_palette < 1:
        raise ValueError("per_palette must be >= 1")
    rng = np.random.default_rng([seed, 7])
    specs = []
    n_pal = -(-n_classes // per_palette)
    hues = rng.permutation(n_pal) / n_pal
    for i in range(n_classes):
        kind = TEXTURE_KINDS[i % len(TEXTURE_KINDS)]
        hue = hues[i // per_palette]
        angle = 2 * np.pi * np.array([0.0, 1 / 3, 2 / 3]) + 2 * np.pi * hue
        base = tuple(float(x) for x in 0.5 + 0.25 * np.cos(angle))
        accent = tuple(float(x) for x in 0.7 + 0.3 * np.cos(angle + np.pi / 2))
        specs.append(TextureSpec(
            kind=kind,
            orientation=float(rng.uniform(0, np.pi)),
            frequency=float(rng.uniform(0.04, 0.16)),
            base_color=base,
            contrast=float(rng.uniform(0.2, 0.35)),
            class_id=i,
            accent=accent,
        ))
    return specs


def texture_corpus(n_classes: int = 12, samples: int = 3, size: int = 128, seed: int = 0):
    """Default desk corpus: list of ``(image_id, image, class_label)``."""
    corpus = []
    for spec in desk_texture_specs(n_classes, seed):
        for j in range(samples):
            img = render_texture(spec, size, j, seed)
            corpus.append((f"c{spec.class_id:02d}_s{j}", img, spec.class_id))
    return corpus


def make_distorted_pair(img, distortion: str, level: float, rng=None):
    """Return ``(reference, distorted)``; ``level = 0`` gives an identical pair.

    ``blur`` level is the Gaussian sigma in pixels, ``noise`` level is sigma on
    the 0-255 scale, ``contrast`` divides the deviation from the mean by
    ``1 + level``.
    """
    img = check_image(img)
    if distortion not in DISTORTIONS:
        raise ValueError(f"unknown distortion {distortion!r}")
    if level < 0:
        raise ValueError("level must be >= 0")
    if level == 0:
        return img.copy(), img.copy()
    if distortion == "blur":
        out = gaussian_filter(img, sigma=(level, level, 0), mode="reflect")
    elif distortion == "noise":
        out = add_gaussian_noise(img, level, rng)
    else:
        m = img.mean(axis=(0, 1))
        out = m + (img - m) / (1.0 + level)
    return img.copy(), np.clip(out, 0.0, 1.0)


def high_frequency_energy(img, cutoff: float = 0.25) -> float:
    """Spectral energy above ``cutoff`` cycles/pixel, averaged over channels."""
    img = check_image(img)
    fy = np.fft.fftfreq(img.shape[0])[:, None]
    fx = np.fft.fftfreq(img.shape[1])[None, :]
    mask = np.sqrt(fx * fx + fy * fy) > cutoff
    total = 0.0
    for ch in range(3):
        spec = np.abs(np.fft.fft2(img[..., ch] - img[..., ch].mean())) ** 2
        total += spec[mask].sum()
    return float(total / 3)


def write_texture_corpus(out_dir, n_classes=12, samples=3, size=128, seed=0) -> Path:
    """Write P6 images and a ``image_path<TAB>class_label`` manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "textures.tsv"
    with open(manifest, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for image_id, img, label in texture_corpus(n_classes, samples, size, seed):
            name = f"{image_id}.ppm"
            save_image(out_dir / name, img)
            wr.writerow([name, label])
    return manifest


def write_natural_images(out_dir, count=20, size=128, seed=0) -> Path:
    """Dead-leaves training images, a stand-in for a photo collection."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        save_image(out_dir / f"natural_{i:04d}.ppm", dead_leaves_image(size, rng))
    return out_dir


def write_iqa_corpus(out_dir, n_images=6, levels=(1, 2, 4), size=64, seed=0) -> Path:
    """Blur-distorted pairs of texture images plus a quality manifest.

    The ``subjective`` column is a synthetic stand-in (``1 / (1 + level)``)
    so the manifest round-trips through the evaluation command.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = desk_texture_specs(n_images, seed)
    manifest = out_dir / "iqa.tsv"
    with open(manifest, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for spec in specs:
            ref = render_texture(spec, size, 0, seed)
            ref_name = f"ref_{spec.class_id:02d}.ppm"
            save_image(out_dir / ref_name, ref)
            for lv in levels:
                _, dist = make_distorted_pair(ref, "blur", lv)
                name = f"dist_{spec.class_id:02d}_blur{lv}.ppm"
                save_image(out_dir / name, dist)
                wr.writerow([ref_name, name, f"{1.0 / (1.0 + lv):.6f}"])
    return manifest
