"""Sparse linear decoder: sigmoid hidden layer, linear reconstruction.

Objective for a ``(d, n)`` patch matrix ``P``::

    J = (1/n) ||W2^T s + b2 - P||_F^2
        + beta * sum_j KL(rho || rho_hat_j)
        + lambda * (||W1||_F^2 + ||W2||_F^2)

with ``s = sigmoid(W1^T P + b1)`` and ``rho_hat_j`` the mean activation of
hidden unit ``j`` over the ``n`` patches. Biases are not decayed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .imageio import as_rng
from .lbfgs import lbfgs

RHO_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    rho: float = 0.035
    beta: float = 5.0
    lam: float = 3e-3
    max_iterations: int = 400
    tolerance: float = 1e-7
    memory: int = 20

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.beta < 0 or self.lam < 0:
            raise ValueError("beta and lambda must be non-negative")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FilterSet:
    w1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, d)
    b2: np.ndarray  # (d,)
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d, h = self.w1.shape
        if h < 1:
            raise ValueError("filter set needs at least one hidden unit")
        if self.b1.shape != (h,) or self.w2.shape != (h, d) or self.b2.shape != (d,):
            raise ValueError("inconsistent filter set dimensions")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("filter set has non-finite entries")

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def h(self) -> int:
        return self.w1.shape[1]

    def flat(self) -> np.ndarray:
        return pack(self.w1, self.b1, self.w2, self.b2)

    def __eq__(self, other):
        if not isinstance(other, FilterSet):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in
                   zip((self.w1, self.b1, self.w2, self.b2), (other.w1, other.b1, other.w2, other.b2)))


def pack(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([w1.ravel(), b1.ravel(), w2.ravel(), b2.ravel()])


def unpack(theta, d: int, h: int):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != 2 * d * h + d + h:
        raise ValueError(f"parameter vector has {theta.size} entries, expected {2 * d * h + d + h}")
    i = 0
    w1 = theta[i:i + d * h].reshape(d, h); i += d * h
    b1 = theta[i:i + h]; i += h
    w2 = theta[i:i + h * d].reshape(h, d); i += h * d
    b2 = theta[i:i + d]
    return w1, b1, w2, b2


def from_flat(theta, d: int, h: int, provenance=None) -> FilterSet:
    w1, b1, w2, b2 = (a.copy() for a in unpack(theta, d, h))
    return FilterSet(w1, b1, w2, b2, provenance=dict(provenance or {}))


def forward(f: FilterSet, p) -> np.ndarray:
    """Hidden activations ``sigmoid(W1^T P + b1)``, shape ``(h, n)``."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] != f.d:
        raise ValueError(f"input dimension {p.shape[0]} does not match filter set ({f.d})")
    return expit(f.w1.T @ p + f.b1[:, None])


def reconstruct(f: FilterSet, s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] != f.h:
        raise ValueError(f"activation rows {s.shape[0]} do not match hidden units ({f.h})")
    return f.w2.T @ s + f.b2[:, None]


def kl_divergence(rho, rho_hat):
    """Bernoulli KL divergence ``KL(rho || rho_hat)``; elementwise on arrays."""
    rho_hat = np.asarray(rho_hat, dtype=np.float64)
    if np.any(rho_hat <= 0) or np.any(rho_hat >= 1):
        raise FloatingPointError("rho_hat must lie strictly inside (0, 1)")
    out = rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat))
    return out if out.ndim else float(out)


def sparsity_stats(f: FilterSet, p) -> np.ndarray:
    """Mean activation of every hidden unit over the columns of ``p``."""
    return forward(f, p).mean(axis=1)


def objective_and_gradient(theta, p, cfg: TrainingConfig, h: int):
    p = np.asarray(p, dtype=np.float64)
    d, n = p.shape
    w1, b1, w2, b2 = unpack(theta, d, h)
    s = expit(w1.T @ p + b1[:, None])
    r = w2.T @ s + b2[:, None] - p
    rho_hat = np.clip(s.mean(axis=1), RHO_CLAMP, 1 - RHO_CLAMP)
    rho = cfg.rho
    j = (np.sum(r * r) / n
         + cfg.beta * np.sum(kl_divergence(rho, rho_hat))
         + cfg.lam * (np.sum(w1 * w1) + np.sum(w2 * w2)))

    dr = (2.0 / n) * r
    g_w2 = s @ dr.T + 2 * cfg.lam * w2
    g_b2 = dr.sum(axis=1)
    sparse = cfg.beta * (-rho / rho_hat + (1 - rho) / (1 - rho_hat)) / n
    da = (w2 @ dr + sparse[:, None]) * s * (1 - s)
    g_w1 = p @ da.T + 2 * cfg.lam * w1
    g_b1 = da.sum(axis=1)
    return float(j), pack(g_w1, g_b1, g_w2, g_b2)


def minimize(fn, x0, cfg: TrainingConfig = TrainingConfig()):
    """Run L-BFGS on ``fn(x) -> (J, grad)`` with the limits in ``cfg``."""
    return lbfgs(fn, x0, max_iterations=cfg.max_iterations,
                 tolerance=cfg.tolerance, memory=cfg.memory).x


def initial_parameters(d: int, h: int, rng=None) -> np.ndarray:
    rng = as_rng(rng)
    r = np.sqrt(6.0) / np.sqrt(d + h + 1)
    w1 = rng.uniform(-r, r, size=(d, h))
    w2 = rng.uniform(-r, r, size=(h, d))
    return pack(w1, np.zeros(h), w2, np.zeros(d))


def train(p, h: int, cfg: TrainingConfig = TrainingConfig(), rng=None, provenance=None) -> FilterSet:
    """Train a filter set on preprocessed (whitened or centered) patches."""
    p = np.asarray(p, dtype=np.float64)
    if h < 1:
        raise ValueError("h must be >= 1")
    if p.ndim != 2 or p.shape[1] < 1:
        raise ValueError("need a (d, n) patch matrix with n >= 1")
    d = p.shape[0]
    if isinstance(rng, (int, np.integer)) or rng is None:
        seed = None if rng is None else int(rng)
    else:
        seed = None
    theta0 = initial_parameters(d, h, rng)
    res = lbfgs(lambda t: objective_and_gradient(t, p, cfg, h), theta0,
                max_iterations=cfg.max_iterations, tolerance=cfg.tolerance, memory=cfg.memory)
    prov = dict(provenance or {})
    prov.update(seed=seed, config=asdict(cfg), config_digest=cfg.digest(),
                initial_objective=res.f0, final_objective=res.f, iterations=res.iterations)
    return from_flat(res.x, d, h, provenance=prov)
