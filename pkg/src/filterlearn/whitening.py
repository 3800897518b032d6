"""Standard and iterated ZCA whitening of patch matrices.

A fitted transform maps a ``(d, n)`` patch matrix ``u`` to ``w @ (u - mean)``
with ``w = sqrt(n - 1) * V (L + eps)^(-1/2) V^T``, where ``V L V^T`` is the
eigendecomposition of the centered outer product ``u u^T``. The ``sqrt(n-1)``
factor makes the output satisfy ``P P^T = (n - 1) I`` when ``eps = 0``.

Iterating the fit/apply step ``k`` times with a fixed regularizer shrinks the
bias that ``eps`` introduces, pushing the sample covariance towards identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Default regularizers, relative to the mean eigenvalue of the raw input's u u^T.
EPSILON_STANDARD = 0.01
EPSILON_ITERATED = 0.1


def default_epsilon(k: int) -> float:
    return EPSILON_STANDARD if k <= 1 else EPSILON_ITERATED


@dataclass(frozen=True)
class WhiteningTransform:
    w: np.ndarray
    epsilon: float  # absolute value actually added to the eigenvalues
    mean: np.ndarray
    eigvals: np.ndarray  # descending
    eigvecs: np.ndarray

    @property
    def d(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class WhiteningChain:
    base_mean: np.ndarray
    stages: tuple = field(default_factory=tuple)

    @property
    def k(self) -> int:
        return len(self.stages)


def _as_patches(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"patch matrix must be 2-d, got shape {p.shape}")
    return p


def covariance(p) -> np.ndarray:
    """Outer product ``P P^T`` of already-centered patches."""
    p = _as_patches(p)
    if p.shape[1] < 2:
        raise ValueError("need at least two patches")
    c = p @ p.T
    return 0.5 * (c + c.T)


def _eigh_desc(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not np.all(np.isfinite(c)):
        raise FloatingPointError("non-finite values in covariance")
    vals, vecs = np.linalg.eigh(0.5 * (c + c.T))
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def compute_whitener(p, epsilon: float = EPSILON_STANDARD, relative: bool = True) -> WhiteningTransform:
    """Fit a ZCA transform on the columns of ``p``.

    With ``relative=True`` the regularizer added to the eigenvalues is
    ``epsilon * mean(eigvals)``; otherwise ``epsilon`` is used as is.
    """
    p = _as_patches(p)
    n = p.shape[1]
    if n < 2:
        raise ValueError("need at least two patches")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    mean = p.mean(axis=1)
    vals, vecs = _eigh_desc(covariance(p - mean[:, None]))
    # Eigenvalues of a PSD matrix can come out slightly negative from round-off.
    vals = np.clip(vals, 0.0, None)
    eps = epsilon * vals.mean() if relative else epsilon
    if np.any(vals + eps <= 1e-12):
        if not np.any(vals > 1e-12):
            raise FloatingPointError("covariance is all-zero; cannot whiten constant data")
        raise ValueError("covariance is singular; a positive epsilon is required")
    scale = np.sqrt(n - 1) / np.sqrt(vals + eps)
    w = (vecs * scale) @ vecs.T
    w = 0.5 * (w + w.T)
    return WhiteningTransform(w=w, epsilon=float(eps), mean=mean, eigvals=vals, eigvecs=vecs)


def apply(t: WhiteningTransform, p) -> np.ndarray:
    p = _as_patches(p)
    if p.shape[0] != t.d:
        raise ValueError(f"patch dimension {p.shape[0]} does not match transform ({t.d})")
    return t.w @ (p - t.mean[:, None])


def iterated_whiten(p, k: int, epsilon: float | None = None, relative: bool = True):
    """Fit and apply ZCA ``k`` times; returns ``(u_k, chain)``.

    The regularizer is resolved once, from the raw input, and then held fixed
    for every stage. Since each stage brings the data to unit scale, the fixed
    ``eps`` becomes negligible after the first pass. ``k = 0`` only centers.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    p = _as_patches(p)
    if epsilon is None:
        epsilon = default_epsilon(k)
    base_mean = p.mean(axis=1)
    u = p - base_mean[:, None]
    stages = []
    eps_abs = epsilon
    for i in range(k):
        t = compute_whitener(u if i else p, eps_abs, relative=relative and i == 0)
        eps_abs = t.epsilon
        u = apply(t, u if i else p)
        stages.append(t)
    return u, WhiteningChain(base_mean=base_mean, stages=tuple(stages))


def apply_chain(c: WhiteningChain, p) -> np.ndarray:
    p = _as_patches(p)
    if p.shape[0] != c.base_mean.shape[0]:
        raise ValueError(f"patch dimension {p.shape[0]} does not match chain ({c.base_mean.shape[0]})")
    if not c.stages:
        return p - c.base_mean[:, None]
    u = p
    for t in c.stages:
        u = apply(t, u)
    return u


def identity_transform(d: int, mean=None) -> WhiteningTransform:
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=np.float64)
    return WhiteningTransform(w=np.eye(d), epsilon=0.0, mean=mean, eigvals=np.ones(d), eigvecs=np.eye(d))


def whitening_error(p) -> tuple[float, float]:
    """Max-abs and Frobenius distance of ``cov / (n - 1)`` from identity."""
    p = _as_patches(p)
    c = covariance(p) / (p.shape[1] - 1)
    diff = c - np.eye(c.shape[0])
    return float(np.abs(diff).max()), float(np.linalg.norm(diff))
