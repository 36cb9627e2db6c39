"""Spike-and-slab Lasso prior on spherical coordinates, and its Gibbs updates."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .data_model import PriorSpec, SSLHyper, UniformPrior
from .geometry import log_jacobian

W_CLAMP = 1e-12


def laplace_logpdf(u, h: float):
    """Log density of the zero-mean Laplace with scale ``h``: ``-|u|/h - log(2h)``."""
    if h <= 0:
        raise ValueError("Laplace scale must be positive")
    return -np.abs(u) / h - np.log(2.0 * h)


def log_prior_gamma(theta, m, spec: PriorSpec) -> float:
    """Log prior density of the direction with coordinates ``theta``.

    The coordinate prior is divided by the surface-area Jacobian, so the
    result is a density on the sphere.  The uniform variant keeps that
    Jacobian term too.
    """
    theta = np.asarray(theta, dtype=float)
    if isinstance(spec, UniformPrior):
        base = -theta.size * np.log(np.pi)
    elif isinstance(spec, SSLHyper):
        m = np.asarray(m)
        if m.shape != theta.shape:
            raise ValueError("allocation vector and theta must have equal length")
        spike = laplace_logpdf(theta, spec.h0)
        slab = laplace_logpdf(theta, spec.h1)
        base = float(np.sum(np.where(m == 1, spike, slab)))
    else:
        raise TypeError(f"unknown prior spec {spec!r}")
    return base - log_jacobian(theta)


def spike_probability(theta, w: float, ssl: SSLHyper) -> np.ndarray:
    """Conditional probability that each coordinate sits in the spike.

    Computed as ``expit(log-odds)`` so that the density ratio never underflows.
    """
    theta = np.asarray(theta, dtype=float)
    log_odds = (
        np.log(w)
        - np.log1p(-w)
        + laplace_logpdf(theta, ssl.h0)
        - laplace_logpdf(theta, ssl.h1)
    )
    return expit(log_odds)


def gibbs_update_m(rng: np.random.Generator, theta, w: float, ssl: SSLHyper) -> np.ndarray:
    """Independent Bernoulli draws of the spike/slab allocations."""
    if not 0 < w < 1:
        raise ValueError("w must lie in (0, 1)")
    prob = spike_probability(theta, w, ssl)
    return (rng.random(prob.size) < prob).astype(np.int8)


def gibbs_update_w(rng: np.random.Generator, m, alpha_w: float, beta_w: float) -> float:
    """Beta(sum(m) + alpha_w, sum(1 - m) + beta_w) draw, clamped away from 0 and 1."""
    if alpha_w <= 0 or beta_w <= 0:
        raise ValueError("Beta parameters must be positive")
    m = np.asarray(m)
    ones = float(np.sum(m))
    w = rng.beta(ones + alpha_w, m.size - ones + beta_w)
    return float(np.clip(w, W_CLAMP, 1.0 - W_CLAMP))
