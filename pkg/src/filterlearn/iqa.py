"""UNIQUE and MS-UNIQUE full-reference quality estimators.

Both estimators filter the non-overlapping 8x8 patches of the reference and
the distorted image with filter sets learned from whitened natural patches,
then compare the two response vectors with Spearman correlation. MS-UNIQUE
averages that comparison over several hidden widths and up-weights filters
classified as edge detectors.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import decoder, metrics, whitening
from .decoder import FilterSet, TrainingConfig
from .imageio import check_image, crop_to_multiple, extract_grid_patches, load_image
from .whitening import EPSILON_STANDARD, WhiteningChain

PATCH_SIDE = 8
PATCH_DIM = PATCH_SIDE * PATCH_SIDE * 3
UNIQUE_H = 400
MSUNIQUE_H = (81, 121, 169, 400, 625)
PROTOCOLS = ("refit", "reuse")


class DegenerateScoreWarning(UserWarning):
    """A feature vector was constant, so the score was set to 0."""


@dataclass(frozen=True)
class UniqueModel:
    filter_set: FilterSet
    whitening: str = "refit"
    activation_threshold: float | None = None
    k: int = 1
    epsilon: float = EPSILON_STANDARD
    training_chain: WhiteningChain | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.filter_set.d != PATCH_DIM:
            raise ValueError(f"UNIQUE filters must have d={PATCH_DIM}, got {self.filter_set.d}")
        if self.whitening not in PROTOCOLS:
            raise ValueError(f"whitening protocol must be one of {PROTOCOLS}")
        if self.whitening == "reuse" and self.training_chain is None:
            raise ValueError("'reuse' protocol needs the training whitening chain")
        if self.activation_threshold is not None and not 0 <= self.activation_threshold < 1:
            raise ValueError("activation_threshold must lie in [0, 1)")


@dataclass(frozen=True)
class MsUniqueModel:
    filter_sets: tuple
    edge_masks: tuple  # one boolean array per filter set, True = edge filter
    edge_weight: float = 2.0
    whitening: str = "refit"
    k: int = 1
    epsilon: float = EPSILON_STANDARD
    training_chain: WhiteningChain | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.filter_sets) != 5 or len(self.edge_masks) != 5:
            raise ValueError("MS-UNIQUE uses exactly five filter sets")
        for fs, mask in zip(self.filter_sets, self.edge_masks):
            if fs.d != PATCH_DIM:
                raise ValueError(f"filter sets must have d={PATCH_DIM}")
            if np.shape(mask) != (fs.h,):
                raise ValueError("edge mask length must equal the filter count")
        if self.edge_weight < 1:
            raise ValueError("edge_weight must be >= 1")
        if self.whitening not in PROTOCOLS:
            raise ValueError(f"whitening protocol must be one of {PROTOCOLS}")

    @property
    def h_values(self) -> tuple:
        return tuple(fs.h for fs in self.filter_sets)


def preprocess(img, k: int = 1, epsilon: float = whitening.EPSILON_STANDARD,
               protocol: str = "refit", training_chain=None) -> np.ndarray:
    """Whitened non-overlapping 8x8 patches of ``img``, shape ``(192, n)``.

    ``refit`` fits a fresh chain on this image's patches. With a single patch
    there is nothing to fit, so the training chain is used if available.
    """
    img = check_image(img)
    if img.shape[0] < PATCH_SIDE or img.shape[1] < PATCH_SIDE:
        raise ValueError("image must be at least 8x8")
    p = extract_grid_patches(crop_to_multiple(img, PATCH_SIDE), PATCH_SIDE)
    if protocol == "reuse" or p.shape[1] < 2:
        if training_chain is None:
            raise ValueError("a single patch cannot be whitened without a training chain")
        return whitening.apply_chain(training_chain, p)
    u, _ = whitening.iterated_whiten(p, k, epsilon)
    return u


def _model_preprocess(img, m) -> np.ndarray:
    return preprocess(img, m.k, m.epsilon, m.whitening, m.training_chain)


def unique_features(img, m: UniqueModel) -> np.ndarray:
    """Filter responses of every patch, concatenated patch by patch."""
    s = decoder.forward(m.filter_set, _model_preprocess(img, m))
    if m.activation_threshold is not None:
        s = np.where(s < m.activation_threshold, 0.0, s)
    return s.ravel(order="F")


def _safe_spearman(a, b) -> float:
    try:
        return metrics.spearman(a, b)
    except metrics.DegenerateInputError:
        warnings.warn("constant feature vector; score set to 0", DegenerateScoreWarning, stacklevel=3)
        return 0.0


def _check_pair(ref, dist):
    ref, dist = check_image(ref), check_image(dist)
    if ref.shape != dist.shape:
        raise ValueError(f"reference {ref.shape} and distorted {dist.shape} differ in size")
    return ref, dist


def unique_score(ref, dist, m: UniqueModel) -> float:
    """Spearman correlation of UNIQUE features; 1 means identical responses."""
    ref, dist = _check_pair(ref, dist)
    return _safe_spearman(unique_features(ref, m), unique_features(dist, m))


def classify_filter_sharpness(filter_column) -> str:
    """Label a 192-d filter ``"edge"`` or ``"color"``.

    ``C`` is the energy of the filter's flat part (each channel replaced by
    its mean), ``E`` the energy of the rest. The filter is an edge filter when
    ``E / (E + C) > 0.5``, i.e. when most of its energy is spatial variation.
    """
    col = np.asarray(filter_column, dtype=np.float64)
    if col.shape != (PATCH_DIM,):
        raise ValueError(f"filter must have {PATCH_DIM} entries")
    chans = col.reshape(3, PATCH_SIDE * PATCH_SIDE)
    flat = chans.mean(axis=1, keepdims=True)
    c = float(np.sum(flat ** 2) * chans.shape[1])
    e = float(np.sum((chans - flat) ** 2))
    if e + c == 0:
        return "color"
    return "edge" if e / (e + c) > 0.5 else "color"


def edge_mask(fs: FilterSet) -> np.ndarray:
    return np.array([classify_filter_sharpness(fs.w1[:, j]) == "edge" for j in range(fs.h)])


def _weighted(s: np.ndarray, mask: np.ndarray, weight: float) -> np.ndarray:
    if weight != 1:
        s = s * np.where(mask, weight, 1.0)[:, None]
    return s.ravel(order="F")


def msunique_score(ref, dist, m: MsUniqueModel) -> float:
    """Mean over the five filter sets of the edge-weighted Spearman score."""
    ref, dist = _check_pair(ref, dist)
    pr, pd = _model_preprocess(ref, m), _model_preprocess(dist, m)
    scores = []
    for fs, mask in zip(m.filter_sets, m.edge_masks):
        a = _weighted(decoder.forward(fs, pr), mask, m.edge_weight)
        b = _weighted(decoder.forward(fs, pd), mask, m.edge_weight)
        scores.append(_safe_spearman(a, b))
    return float(np.mean(scores))


def train_unique(patches, h: int = UNIQUE_H, k: int = 1, epsilon: float | None = None,
                 cfg: TrainingConfig = TrainingConfig(), rng=None, **model_kw) -> UniqueModel:
    """Whiten ``patches`` ``k`` times and train an ``h``-filter UNIQUE model."""
    eps = whitening.default_epsilon(k) if epsilon is None else epsilon
    u, chain = whitening.iterated_whiten(patches, k, eps)
    fs = decoder.train(u, h, cfg, rng, provenance={"k": k, "epsilon": eps})
    return UniqueModel(fs, k=k, epsilon=eps, training_chain=chain, **model_kw)


def train_msunique(patches, h_values: Sequence[int] = MSUNIQUE_H, edge_weight: float = 2.0,
                   k: int = 1, epsilon: float | None = None,
                   cfg: TrainingConfig = TrainingConfig(), rng=None) -> MsUniqueModel:
    h_values = tuple(h_values)
    if len(h_values) != 5:
        raise ValueError("MS-UNIQUE needs five hidden widths")
    if not (min(h_values) < PATCH_DIM < max(h_values)):
        raise ValueError("h values must include both under- and overcomplete widths")
    eps = whitening.default_epsilon(k) if epsilon is None else epsilon
    u, chain = whitening.iterated_whiten(patches, k, eps)
    seed = 0 if rng is None else int(rng)
    sets = tuple(decoder.train(u, h, cfg, np.random.default_rng([seed, h]),
                               provenance={"k": k, "epsilon": eps, "seed": [seed, h]})
                 for h in h_values)
    return MsUniqueModel(sets, tuple(edge_mask(fs) for fs in sets), edge_weight,
                         k=k, epsilon=eps, training_chain=chain)


def score(ref, dist, model) -> float:
    if isinstance(model, UniqueModel):
        return unique_score(ref, dist, model)
    if isinstance(model, MsUniqueModel):
        return msunique_score(ref, dist, model)
    return float(model(ref, dist))


def evaluate(dataset, model) -> dict:
    """RMSE, outlier ratio, Pearson and Spearman of estimates vs subjective scores.

    ``dataset`` holds ``(ref, dist, subjective, std_or_None)`` tuples; ``model``
    is a UNIQUE/MS-UNIQUE model or any ``f(ref, dist) -> score`` callable.
    """
    dataset = list(dataset)
    if len(dataset) < 2:
        raise ValueError("need at least two entries")
    est = np.array([score(ref, dist, model) for ref, dist, _, _ in dataset])
    subj = np.array([float(row[2]) for row in dataset])
    stds = [row[3] for row in dataset]
    std = None if any(s is None for s in stds) else np.array(stds, dtype=np.float64)
    return metrics.iqa_summary(est, subj, std)


def load_manifest(path) -> list:
    """Read ``ref<TAB>dist<TAB>subjective[<TAB>std]`` lines; paths relative to the manifest."""
    path = Path(path)
    root = path.parent
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not rec or rec[0].startswith("#"):
                continue
            if len(rec) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields")
            std = float(rec[3]) if len(rec) == 4 and rec[3] != "" else None
            rows.append((load_image(root / rec[0]), load_image(root / rec[1]), float(rec[2]), std))
    return rows
