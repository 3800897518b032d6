"""Hierarchical texture features and two-stage retrieval.

Color stage: the image is box-resized to 8x8 (its mean-color layout) and
filtered by a set trained on unwhitened patches.

Structure stage, on a 72x72 resize::

    81 grid patches (8x8x3) --whiten--> P2 filters (h2 each)
    24x24 windows: concat 9 P2 responses (9*h2) --> P3 filters (h3)
    pool to ``pool_size`` values per tile, concat 9 (9*pool_size)
    --> final filters (h_final)

Two pooling readings are available. ``order`` (default) evaluates P3 once
per tile and keeps the ``pool_size`` largest responses in descending order.
``spatial`` evaluates P3 at every 24x24 window on the 8-pixel grid and keeps,
for each of the ``h3 == pool_size`` units, its maximum over the windows
centred in each of the nine tiles, which tolerates small shifts.

Retrieval ranks the corpus by Spearman correlation of color features, keeps
the closest fraction, and re-ranks those by structure features.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import decoder, metrics, whitening
from .decoder import FilterSet, TrainingConfig
from .imageio import (add_gaussian_noise, as_rng, check_image, crop_to_multiple, extract_grid_patches,
                      load_image, resize_box, sample_random_patches, save_image)
from .metrics import RankedResult

SIDE = 8
COLOR_H = 400
STRUCTURE_SIZE = 72
GRID = STRUCTURE_SIZE // SIDE  # 9 patches per row
TILE = 3  # P2 patches per P3 tile side
STRUCTURE_MODES = ("refit", "none")
POOLING_MODES = ("spatial", "order")


@dataclass(frozen=True)
class TextureTrainingConfig:
    h2: int = 64
    h3: int = 192
    h_final: int = 400
    pool_size: int = 64
    color_patches: int = 10000
    p2_patches: int = 10000
    p3_samples: int = 3000
    crops: int = 1000
    k_color: int = 0
    k_structure: int = 1
    epsilon: float = whitening.EPSILON_STANDARD
    pooling: str = "order"
    decoder: TrainingConfig = TrainingConfig()


@dataclass(frozen=True)
class TextureModel:
    color_filters: FilterSet
    p2_filters: FilterSet
    p3_filters: FilterSet
    final_filters: FilterSet
    color_mean: np.ndarray
    p3_mean: np.ndarray
    final_mean: np.ndarray
    pool_size: int = 64
    structure_whitening: str = "refit"
    k_structure: int = 1
    epsilon: float = whitening.EPSILON_STANDARD
    pooling: str = "order"
    # P3 and final inputs are divided by these after centering
    p3_scale: float = 1.0
    final_scale: float = 1.0

    def __post_init__(self):
        d = SIDE * SIDE * 3
        if self.color_filters.d != d or self.p2_filters.d != d:
            raise ValueError(f"color and P2 filters must take {d}-d patches")
        if self.p3_filters.d != 9 * self.p2_filters.h:
            raise ValueError("P3 filters must take nine concatenated P2 responses")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")
        if self.pooling == "spatial" and self.p3_filters.h != self.pool_size:
            raise ValueError("spatial pooling needs exactly pool_size P3 filters")
        if self.p3_filters.h < self.pool_size:
            raise ValueError("P3 width must be at least the pool size")
        if self.final_filters.d != 9 * self.pool_size:
            raise ValueError("final filters must take nine pooled P3 responses")
        if self.color_mean.shape != (d,) or self.p3_mean.shape != (self.p3_filters.d,) \
                or self.final_mean.shape != (self.final_filters.d,):
            raise ValueError("layer means do not match layer dimensions")
        if not (self.p3_scale > 0 and self.final_scale > 0):
            raise ValueError("layer scales must be positive")
        if self.structure_whitening not in STRUCTURE_MODES:
            raise ValueError(f"structure_whitening must be one of {STRUCTURE_MODES}")

    @property
    def dims(self) -> tuple:
        return (self.p2_filters.h, self.p3_filters.h, self.final_filters.h)


@dataclass(frozen=True)
class IndexEntry:
    image_id: str
    label: object
    color: np.ndarray
    structure: np.ndarray


@dataclass(frozen=True)
class RetrievalIndex:
    entries: tuple

    def __post_init__(self):
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in index")
        if len({e.structure.shape for e in self.entries}) > 1:
            raise ValueError("structure features differ in length")

    @property
    def ids(self) -> list:
        return [e.image_id for e in self.entries]

    def position(self, image_id) -> int:
        for i, e in enumerate(self.entries):
            if e.image_id == image_id:
                return i
        raise ValueError(f"image id {image_id!r} is not in the index")


def top_k_pool(v, k: int = 64) -> np.ndarray:
    """The ``k`` largest entries of ``v`` in descending order."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < k:
        raise ValueError(f"vector of length {v.size} is shorter than k={k}")
    return np.sort(v)[::-1][:k].copy()


# Column indices of the nine P2 patches of each P3 tile, tile-major and
# row-major inside a tile, into the 9x9 row-major patch grid.
_TILE_INDEX = np.array([[(TILE * ty + a) * GRID + TILE * tx + b
                         for a in range(TILE) for b in range(TILE)]
                        for ty in range(TILE) for tx in range(TILE)])


def _structure_patches(img, mode: str, k: int, epsilon: float, chain=None) -> np.ndarray:
    small = resize_box(check_image(img), STRUCTURE_SIZE, STRUCTURE_SIZE)
    p = extract_grid_patches(small, SIDE)
    if chain is not None:
        return whitening.apply_chain(chain, p)
    if mode == "none":
        return p - p.mean(axis=1, keepdims=True)
    u, _ = whitening.iterated_whiten(p, k, epsilon)
    return u


# Every 3x3 window of the patch grid at stride one (7x7 windows), and the
# windows pooled into each tile: those whose centre falls in the tile.
_N_WIN = GRID - TILE + 1
_WINDOW_INDEX = np.array([[(wy + a) * GRID + wx + b for a in range(TILE) for b in range(TILE)]
                          for wy in range(_N_WIN) for wx in range(_N_WIN)])
_WINDOW_TILE = [(w + TILE // 2) // TILE for w in range(_N_WIN)]
_POOL_GROUPS = [np.array([wy * _N_WIN + wx for wy in range(_N_WIN) for wx in range(_N_WIN)
                          if _WINDOW_TILE[wy] == ty and _WINDOW_TILE[wx] == tx])
                for ty in range(TILE) for tx in range(TILE)]


def _p3_inputs(p2_resp: np.ndarray, pooling: str = "order") -> np.ndarray:
    # (h2, 81) -> (9*h2, 9 tiles) or (9*h2, 49 windows)
    index = _TILE_INDEX if pooling == "order" else _WINDOW_INDEX
    return np.stack([p2_resp[:, idx].ravel(order="F") for idx in index], axis=1)


def _pooled(m: TextureModel, p2_resp: np.ndarray) -> np.ndarray:
    x = (_p3_inputs(p2_resp, m.pooling) - m.p3_mean[:, None]) / m.p3_scale
    s3 = decoder.forward(m.p3_filters, x)
    if m.pooling == "spatial":
        return np.concatenate([s3[:, g].max(axis=1) for g in _POOL_GROUPS])
    return np.concatenate([top_k_pool(s3[:, t], m.pool_size) for t in range(9)])


def color_feature(img, m: TextureModel) -> np.ndarray:
    """Color-filter responses of the 8x8 mean-color thumbnail."""
    thumb = resize_box(check_image(img), SIDE, SIDE)
    x = thumb.transpose(2, 0, 1).ravel() - m.color_mean
    return decoder.forward(m.color_filters, x)[:, 0]


def structure_feature(img, m: TextureModel, chain=None) -> np.ndarray:
    """Final-layer responses of the hierarchical structure pipeline."""
    u = _structure_patches(img, m.structure_whitening, m.k_structure, m.epsilon, chain)
    pooled = _pooled(m, decoder.forward(m.p2_filters, u))
    return decoder.forward(m.final_filters, (pooled - m.final_mean) / m.final_scale)[:, 0]


def pixel_feature(img, m=None) -> np.ndarray:
    """Raw 72x72 pixels; the baseline that structure features are compared to."""
    return resize_box(check_image(img), STRUCTURE_SIZE, STRUCTURE_SIZE).ravel()


def _training_crops(images, count, rng):
    crops = []
    images = [check_image(im) for im in images]
    for i in range(count):
        img = images[i % len(images)]
        h, w, _ = img.shape
        if h < STRUCTURE_SIZE or w < STRUCTURE_SIZE:
            img = resize_box(img, max(w, STRUCTURE_SIZE), max(h, STRUCTURE_SIZE))
            h, w, _ = img.shape
        y = rng.integers(0, h - STRUCTURE_SIZE + 1)
        x = rng.integers(0, w - STRUCTURE_SIZE + 1)
        crops.append(img[y:y + STRUCTURE_SIZE, x:x + STRUCTURE_SIZE])
    return crops


def _unit_scale(x: np.ndarray) -> float:
    """RMS deviation of ``x`` from its row means.

    Sigmoid codes vary far less than whitened pixels; without rescaling, the
    weight-decay term dominates and the layer shrinks to a constant map.
    """
    s = float(np.sqrt(x.var(axis=1).mean()))
    if not s > 0:
        raise FloatingPointError("layer inputs are constant")
    return s


def _subsample(x: np.ndarray, count: int, rng) -> np.ndarray:
    if x.shape[1] <= count:
        return x
    return x[:, np.sort(rng.choice(x.shape[1], count, replace=False))]


def train_texture_model(training_images, cfg: TextureTrainingConfig = TextureTrainingConfig(),
                        rng=None, structure_whitening: str = "refit") -> TextureModel:
    """Greedy layer-wise training: color, P2, P3, final; earlier layers frozen."""
    training_images = list(training_images)
    if not training_images:
        raise ValueError("no training images")
    if cfg.crops < 1000 or min(cfg.color_patches, cfg.p2_patches, cfg.p3_samples) < 1000:
        raise ValueError("each layer needs at least 1000 training samples")
    if cfg.pooling not in POOLING_MODES:
        raise ValueError(f"pooling must be one of {POOLING_MODES}")
    if cfg.pooling == "spatial" and cfg.h3 != cfg.pool_size:
        raise ValueError("spatial pooling needs h3 == pool_size")
    seed = 0 if rng is None else int(rng)
    rngs = [np.random.default_rng([seed, i]) for i in range(6)]
    dcfg = cfg.decoder

    per_image = math.ceil(cfg.color_patches / len(training_images))
    raw = np.concatenate([sample_random_patches(im, per_image, SIDE, rngs[0]) for im in training_images], axis=1)
    raw = _subsample(raw, cfg.color_patches, rngs[0])
    color_in, color_chain = whitening.iterated_whiten(raw, cfg.k_color)
    color = decoder.train(color_in, COLOR_H, dcfg, rngs[1], provenance={"layer": "color", "k": cfg.k_color})

    crops = _training_crops(training_images, cfg.crops, rngs[2])
    whitened = [_structure_patches(c, structure_whitening, cfg.k_structure, cfg.epsilon) for c in crops]
    p2_in = _subsample(np.concatenate(whitened, axis=1), cfg.p2_patches, rngs[3])
    p2 = decoder.train(p2_in, cfg.h2, dcfg, rngs[3], provenance={"layer": "p2", "k": cfg.k_structure})

    p3_in = np.concatenate([_p3_inputs(decoder.forward(p2, u), cfg.pooling) for u in whitened], axis=1)
    p3_mean = p3_in.mean(axis=1)
    p3_scale = _unit_scale(p3_in)
    p3_in = _subsample((p3_in - p3_mean[:, None]) / p3_scale, cfg.p3_samples, rngs[4])
    p3 = decoder.train(p3_in, cfg.h3, dcfg, rngs[4], provenance={"layer": "p3"})

    partial = TextureModel(color, p2, p3, decoder.from_flat(
        decoder.initial_parameters(9 * cfg.pool_size, cfg.h_final, 0), 9 * cfg.pool_size, cfg.h_final),
        color_chain.base_mean, p3_mean, np.zeros(9 * cfg.pool_size), cfg.pool_size,
        structure_whitening, cfg.k_structure, cfg.epsilon, cfg.pooling, p3_scale)
    fin_in = np.stack([_pooled(partial, decoder.forward(p2, u)) for u in whitened], axis=1)
    final_mean = fin_in.mean(axis=1)
    final_scale = _unit_scale(fin_in)
    final = decoder.train((fin_in - final_mean[:, None]) / final_scale, cfg.h_final, dcfg, rngs[5],
                          provenance={"layer": "final"})
    return replace(partial, final_filters=final, final_mean=final_mean, final_scale=final_scale)


def fit_corpus_chain(images, m: TextureModel) -> whitening.WhiteningChain:
    """One whitening chain over the grid patches of a whole corpus."""
    p = np.concatenate([extract_grid_patches(resize_box(check_image(im), STRUCTURE_SIZE, STRUCTURE_SIZE), SIDE)
                        for im in images], axis=1)
    return whitening.iterated_whiten(p, m.k_structure, m.epsilon)[1]


def build_index(corpus, m: TextureModel, structure_fn: Callable | None = None,
                shared_chain=None) -> RetrievalIndex:
    """Index ``(image_id, image, label)`` triples.

    ``structure_fn(img, m)`` overrides the structure feature (e.g. with
    :func:`pixel_feature` for a baseline).
    """
    corpus = list(corpus)
    if len(corpus) < 2:
        raise ValueError("need at least two images")
    if len({lab for _, _, lab in corpus}) < 2:
        raise ValueError("need at least two classes")
    ids = [i for i, _, _ in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in corpus")
    entries = []
    for image_id, img, label in corpus:
        if structure_fn is not None:
            st = structure_fn(img, m)
        else:
            st = structure_feature(img, m, shared_chain)
        entries.append(IndexEntry(image_id, label, color_feature(img, m), np.asarray(st, dtype=np.float64)))
    return RetrievalIndex(tuple(entries))


def _corr(a, b) -> float:
    try:
        return metrics.spearman(a, b)
    except metrics.DegenerateInputError:
        return 0.0


def query(index: RetrievalIndex, query_id, prefilter_fraction: float = 0.5, return_ids: bool = False):
    """Two-stage ranking of every other index entry for ``query_id``.

    Entries dropped by the color prefilter follow the survivors in color
    order, so every item appears exactly once.
    """
    if not 0 < prefilter_fraction <= 1:
        raise ValueError("prefilter_fraction must lie in (0, 1]")
    qi = index.position(query_id)
    q = index.entries[qi]
    others = [i for i in range(len(index.entries)) if i != qi]
    color = np.array([_corr(q.color, index.entries[i].color) for i in others])
    by_color = [others[j] for j in np.argsort(-color, kind="stable")]
    labels = [e.label for e in index.entries]
    per_class = max(labels.count(lab) for lab in set(labels))
    keep = max(math.ceil(prefilter_fraction * len(others)), 2 * per_class)
    keep = min(keep, len(others))
    survivors, rest = by_color[:keep], by_color[keep:]
    struct = np.array([_corr(q.structure, index.entries[i].structure) for i in survivors])
    order = [survivors[j] for j in np.argsort(-struct, kind="stable")] + rest
    result = RankedResult(q.label, tuple(labels[i] for i in order))
    if return_ids:
        return result, [index.entries[i].image_id for i in order]
    return result


def evaluate_index(index: RetrievalIndex, prefilter_fraction: float = 0.5) -> dict:
    results = [query(index, e.image_id, prefilter_fraction) for e in index.entries]
    return metrics.retrieval_summary(results)


def noisy_corpus(corpus, sigma: float, seed: int = 0):
    out = []
    for n, (image_id, img, label) in enumerate(corpus):
        rng = np.random.default_rng([seed, int(round(sigma * 1000)), n])
        out.append((image_id, add_gaussian_noise(img, sigma, rng), label))
    return out


def robustness_sweep(corpus, m: TextureModel, sigmas: Sequence[float] = (0, 5, 25, 50, 75, 100),
                     seed: int = 0, prefilter_fraction: float = 0.5,
                     structure_fn: Callable | None = None) -> list[dict]:
    """Retrieval metrics after corrupting the corpus with Gaussian noise of each sigma."""
    corpus = list(corpus)
    rows = []
    for sigma in sigmas:
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        idx = build_index(noisy_corpus(corpus, sigma, seed), m, structure_fn)
        rows.append({"sigma": sigma, **evaluate_index(idx, prefilter_fraction)})
    return rows


def load_corpus(manifest) -> list:
    """Read ``image_path<TAB>class_label`` lines; ids are the paths as written."""
    manifest = Path(manifest)
    corpus = []
    with open(manifest, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not rec or rec[0].startswith("#"):
                continue
            if len(rec) != 2:
                raise ValueError(f"{manifest}:{lineno}: expected image_path<TAB>class_label")
            corpus.append((rec[0], load_image(manifest.parent / rec[0]), rec[1]))
    return corpus


_CURET_NAME = re.compile(r"^(\d+)-(\d+)\.\w+$")


def prepare_curet(in_dir, out_dir, condition: int = 55, size: int = 128, samples: int = 3) -> Path:
    """Cut non-overlapping ``size x size`` patches from one viewing condition.

    Expects the usual layout ``in_dir/sampleNN/NN-CCC.<ext>``; each sample
    folder is one class. Patches are taken in row-major order from a centered
    grid, ``samples`` per class. Writes P6 files and ``curet.tsv``.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    found = sorted(p for p in in_dir.rglob("*")
                   if p.is_file() and (mt := _CURET_NAME.match(p.name)) and int(mt.group(2)) == condition)
    if not found:
        raise FileNotFoundError(f"no images with viewing condition {condition} under {in_dir}")
    manifest = out_dir / "curet.tsv"
    with open(manifest, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for path in found:
            label = path.parent.name if path.parent != in_dir else _CURET_NAME.match(path.name).group(1)
            img = load_image(path)
            h, w, _ = img.shape
            oy, ox = (h % size) // 2, (w % size) // 2
            grid = crop_to_multiple(img[oy:, ox:], size)
            rows, cols = grid.shape[0] // size, grid.shape[1] // size
            if rows * cols < samples:
                raise ValueError(f"{path}: only {rows * cols} patches of size {size}")
            for n in range(samples):
                r, c = divmod(n, cols)
                name = f"{label}_{n}.ppm"
                save_image(out_dir / name, grid[r * size:(r + 1) * size, c * size:(c + 1) * size])
                wr.writerow([name, label])
    return manifest
