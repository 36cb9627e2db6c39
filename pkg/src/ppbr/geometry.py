"""Spherical coordinates on the unit sphere and von Mises-Fisher sampling.

The chart maps ``theta in [-pi/2, pi/2]^(p-1)`` onto the closed hemisphere
``gamma_p >= 0``::

    gamma_1 = sin(theta_1)
    gamma_l = sin(theta_l) * prod_{j<l} cos(theta_j),   l = 2..p-1
    gamma_p = prod_{j<p} cos(theta_j)
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError

HALF_PI = 0.5 * np.pi


def to_cartesian(theta) -> np.ndarray:
    """Map spherical coordinates to a unit vector of length ``len(theta) + 1``."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise DimensionError("theta must be a non-empty 1-d array (p >= 2)")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if np.any(np.abs(theta) > HALF_PI + 1e-12):
        raise ValueError("theta entries must lie in [-pi/2, pi/2]")
    theta = np.clip(theta, -HALF_PI, HALF_PI)
    cos_prefix = np.concatenate(([1.0], np.cumprod(np.cos(theta))))
    gamma = np.empty(theta.size + 1)
    gamma[:-1] = np.sin(theta) * cos_prefix[:-1]
    gamma[-1] = cos_prefix[-1]
    return gamma


def to_spherical(gamma, tol: float = 1e-8) -> np.ndarray:
    """Inverse of :func:`to_cartesian` after folding ``gamma`` onto ``gamma_p >= 0``.

    ``to_cartesian(to_spherical(g))`` equals ``sign(g_p) * g``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size < 2:
        raise DimensionError("gamma must be a 1-d array of length >= 2")
    norm = np.linalg.norm(gamma)
    if not abs(norm - 1.0) <= tol:
        raise ValueError(f"gamma must be unit norm (got norm {norm!r})")
    g = gamma / norm
    if g[-1] < 0:
        g = -g
    p = g.size
    # tail[l] = ||g[l:]||, the product of cosines preceding coordinate l
    tail = np.sqrt(np.cumsum((g * g)[::-1])[::-1])
    theta = np.empty(p - 1)
    for l in range(p - 2):
        theta[l] = np.arctan2(g[l], tail[l + 1])
    # last angle: atan2 keeps gamma_p >= 0 on the right half-plane
    theta[p - 2] = np.arctan2(g[p - 2], g[p - 1])
    return theta


def log_jacobian(theta) -> float:
    """Log of ``prod_{j=1}^{p-2} cos(theta_j)^(p-1-j)``, the surface-area element."""
    theta = np.asarray(theta, dtype=float)
    p = theta.size + 1
    if p < 3:
        return 0.0
    powers = np.arange(p - 2, 0, -1, dtype=float)
    cos = np.abs(np.cos(theta[: p - 2]))
    with np.errstate(divide="ignore"):
        logs = np.log(cos)
    # cos == 0 with power > 0 sends the product to zero
    return float(np.sum(powers * logs))


def _sample_vmf_cosine(rng: np.random.Generator, lam: float, p: int) -> float:
    """Draw ``w = x^T mean_dir`` by Wood's rejection scheme."""
    d = p - 1.0
    # b = (-2 lam + sqrt(4 lam^2 + d^2)) / d, written to avoid cancellation
    b = d / (np.sqrt(4.0 * lam * lam + d * d) + 2.0 * lam)
    x0 = (1.0 - b) / (1.0 + b)
    c = lam * x0 + d * np.log1p(-x0 * x0) if x0 < 1.0 else lam * x0
    while True:
        z = rng.beta(0.5 * d, 0.5 * d)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random()
        if lam * w + d * np.log1p(-x0 * w) - c >= np.log(u):
            return float(w)


def sample_vmf(rng: np.random.Generator, lam: float, mean_dir) -> np.ndarray:
    """Draw one unit vector from vMF(lam, mean_dir) on S^(p-1).

    The cosine to ``mean_dir`` comes from Wood's (1994) envelope; the
    tangent part is an isotropic Gaussian projected off ``mean_dir``.
    """
    mu = np.asarray(mean_dir, dtype=float)
    norm = np.linalg.norm(mu)
    if mu.ndim != 1 or mu.size < 2:
        raise DimensionError("mean_dir must be a 1-d array of length >= 2")
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("mean_dir must be a non-zero finite vector")
    if lam < 0:
        raise ValueError("concentration must be non-negative")
    mu = mu / norm
    p = mu.size
    w = _sample_vmf_cosine(rng, float(lam), p)
    while True:
        v = rng.standard_normal(p)
        v -= (v @ mu) * mu
        vn = np.linalg.norm(v)
        if vn > 1e-12:
            break
    x = w * mu + np.sqrt(max(0.0, 1.0 - w * w)) * (v / vn)
    return x / np.linalg.norm(x)


def canonicalize(gamma) -> np.ndarray:
    """Normalize ``gamma`` and fold it onto the hemisphere ``gamma_p >= 0``."""
    g = np.asarray(gamma, dtype=float)
    norm = np.linalg.norm(g)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("cannot canonicalize a zero or non-finite vector")
    # skip a no-op rescale so repeated calls are bit-stable
    if abs(norm - 1.0) > 4 * np.finfo(float).eps:
        g = g / norm
    return -g if g[-1] < 0 else g
