"""Bayesian backfitting over K single-index components.

Each iteration sweeps the components in order 1..K against their partial
residuals, recentres every sampled ridge so it sums to zero over the
training indices, then draws the noise variance and the intercept from
their conjugate conditionals and tunes each component's vMF concentration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Callable, Iterator, Sequence

import numpy as np

from .data_model import (
    Chain,
    ComponentState,
    Dataset,
    Direction,
    FitConfig,
    ModelState,
    SymMatrix,
    pack_upper,
    packed_size,
    unpack_upper,
    zero_ridge,
)
from .exceptions import ChainDivergedError, DimensionError
from .sim_sampler import mh_sweep

log = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12
LAMBDA_FACTOR = 1.1
LOW_RATE = 0.2
HIGH_RATE = 0.4


def component_values(dataset: Dataset, component: ComponentState) -> np.ndarray:
    """Centred ridge values ``g_k(gamma_k^T M_i gamma_k)`` on the dataset."""
    return component.ridge(dataset.indices(component.direction.gamma))


def fitted_matrix(dataset: Dataset, state: ModelState) -> np.ndarray:
    """(K, n) array of every component's contribution."""
    if not state.components:
        return np.zeros((0, dataset.n))
    return np.vstack([component_values(dataset, c) for c in state.components])


def partial_residuals(dataset: Dataset, state: ModelState, k: int,
                      fitted: np.ndarray | None = None) -> np.ndarray:
    """``Y - mu - sum_{l != k} g_l``, with ``k`` zero-based."""
    K = len(state.components)
    if not 0 <= k < K:
        raise IndexError(f"component index {k} out of range for K={K}")
    if fitted is None:
        fitted = fitted_matrix(dataset, state)
    others = fitted.sum(axis=0) - fitted[k]
    return dataset.responses - state.mu - others


def center_ridge(component: ComponentState, dataset: Dataset,
                 values: np.ndarray | None = None) -> ComponentState:
    """Shift the ridge so its mean over the training indices is zero.

    ``values`` may carry the ridge's current values on the training indices
    to skip re-evaluating the basis.
    """
    if values is None:
        values = component_values(dataset, component)
    ridge = replace(component.ridge, center_offset=component.ridge.center_offset + float(np.mean(values)))
    return replace(component, ridge=ridge)


def draw_sigma2(rng: np.random.Generator, resid: np.ndarray, alpha: float, beta: float) -> float:
    """IG(alpha + n/2, beta + sum(resid^2)/2); an empty residual vector gives the prior."""
    resid = np.asarray(resid, dtype=float)
    shape = alpha + 0.5 * resid.size
    scale = beta + 0.5 * float(resid @ resid)
    return scale / rng.gamma(shape)


def mu_conditional(e: np.ndarray, sigma2: float, a: float, b2: float) -> tuple[float, float]:
    """Mean and variance of the Normal full conditional of the intercept."""
    e = np.asarray(e, dtype=float)
    var = 1.0 / (1.0 / b2 + e.size / sigma2)
    return var * (a / b2 + float(np.sum(e)) / sigma2), var


def draw_mu(rng: np.random.Generator, e: np.ndarray, sigma2: float, a: float, b2: float) -> float:
    mean, var = mu_conditional(e, sigma2, a, b2)
    return mean + math.sqrt(var) * rng.standard_normal()


def update_sigma2(rng, dataset: Dataset, state: ModelState, alpha: float, beta: float,
                  fitted: np.ndarray | None = None) -> float:
    if fitted is None:
        fitted = fitted_matrix(dataset, state)
    resid = dataset.responses - state.mu - fitted.sum(axis=0)
    return draw_sigma2(rng, resid, alpha, beta)


def update_mu(rng, dataset: Dataset, state: ModelState, a: float, b2: float,
              fitted: np.ndarray | None = None) -> float:
    if fitted is None:
        fitted = fitted_matrix(dataset, state)
    e = dataset.responses - fitted.sum(axis=0)
    return draw_mu(rng, e, state.sigma2, a, b2)


def adapt_lambda(component: ComponentState, window: int = 100) -> ComponentState:
    """Rescale the vMF concentration once a full window of MH outcomes is in.

    Acceptance below 20% multiplies lambda by 1.1 (smaller steps); above 40%
    divides it by 1.1.  The window then restarts.
    """
    history = component.accept_history
    if len(history) < window:
        return component
    rate = sum(history) / len(history)
    lam = component.lam
    if rate < LOW_RATE:
        lam = lam * LAMBDA_FACTOR
    elif rate > HIGH_RATE:
        lam = lam / LAMBDA_FACTOR
    return replace(component, lam=lam, accept_history=())


def initial_directions(dataset: Dataset, K: int, ridge_scale: float = 1e-3) -> list[Direction]:
    """Sequential linear fits on the vectorized upper triangle.

    Each ridge-regression coefficient vector is reassembled into a symmetric
    matrix (off-diagonal coefficients halved, since those entries appear
    twice in the Frobenius product); its eigenvector with the largest
    absolute eigenvalue seeds the direction.  The least-squares linear fit
    on that index is removed before the next component.
    """
    X = dataset.packed - dataset.packed.mean(axis=0)
    resid = dataset.responses - dataset.responses.mean()
    p = dataset.p
    gram = X.T @ X
    P = gram.shape[0]
    penalty = ridge_scale * np.trace(gram) / P
    chol = np.linalg.cholesky(gram + penalty * np.eye(P))
    rows, cols = np.triu_indices(p)
    off = rows != cols
    dirs = []
    for _ in range(K):
        coef = np.linalg.solve(chol.T, np.linalg.solve(chol, X.T @ resid))
        coef[off] *= 0.5
        evals, evecs = np.linalg.eigh(unpack_upper(coef, p))
        gamma = evecs[:, int(np.argmax(np.abs(evals)))]
        direction = Direction.from_gamma(gamma)
        dirs.append(direction)
        u = dataset.indices(direction.gamma)
        design = np.column_stack([np.ones_like(u), u])
        beta_ls, *_ = np.linalg.lstsq(design, resid, rcond=None)
        resid = resid - design @ beta_ls
    return dirs


def initialize(dataset: Dataset, config: FitConfig,
               directions: Sequence[Direction] | None = None) -> ModelState:
    """Starting state: sample mean and variance, zero ridges, linear-fit directions."""
    if dataset.n < 2:
        raise ValueError("need at least two observations to initialize")
    if dataset.p < 2:
        raise DimensionError("matrix predictors must be at least 2 x 2")
    y = dataset.responses
    mu0 = float(np.mean(y))
    sigma0 = max(float(np.var(y, ddof=1)), SIGMA2_FLOOR)
    if directions is None:
        directions = initial_directions(dataset, config.K)
    if len(directions) != config.K:
        raise ValueError("need exactly K initial directions")
    comps = tuple(
        ComponentState(
            direction=d,
            ridge=zero_ridge(),
            m=np.zeros(dataset.p - 1, dtype=np.int8),
            w=0.5,
            lam=config.lambda_init,
        )
        for d in directions
    )
    return ModelState(mu0, sigma0, comps)


def loglik_vector(dataset: Dataset, state: ModelState, fitted: np.ndarray) -> np.ndarray:
    mean = state.mu + fitted.sum(axis=0)
    z = dataset.responses - mean
    return -0.5 * (math.log(2.0 * math.pi * state.sigma2) + z * z / state.sigma2)


def iterate_chain(rng: np.random.Generator, dataset: Dataset, config: FitConfig,
                  state: ModelState) -> Iterator[tuple[ModelState, np.ndarray]]:
    """Yield ``(state, per-observation log-likelihood)`` after every iteration."""
    alpha, beta = config.sigma2_prior
    a, b2 = config.mu_prior
    fitted = fitted_matrix(dataset, state)
    K = len(state.components)
    while True:
        comps = list(state.components)
        for k in range(K):
            r = partial_residuals(dataset, state, k, fitted)
            result = mh_sweep(rng, comps[k], r, dataset, config)
            comp = center_ridge(result.component, dataset, values=result.fitted)
            comps[k] = comp
            fitted[k] = result.fitted - comp.ridge.center_offset
            state = replace(state, components=tuple(comps))
        sigma2 = update_sigma2(rng, dataset, state, alpha, beta, fitted)
        state = replace(state, sigma2=sigma2)
        mu = update_mu(rng, dataset, state, a, b2, fitted)
        comps = [adapt_lambda(c, config.adapt_window) for c in comps]
        state = ModelState(mu, sigma2, tuple(comps))
        yield state, loglik_vector(dataset, state, fitted)


def run_chain(rng: np.random.Generator, dataset: Dataset, config: FitConfig,
              state: ModelState | None = None,
              progress: Callable[[int, ModelState], None] | None = None) -> Chain:
    """Run ``config.T`` iterations and keep the last ``T - T_warmup``.

    Passing ``state`` resumes from that state (for example a stored draw)
    instead of initializing.
    """
    if state is None:
        state = initialize(dataset, config)
    draws: list[ModelState] = []
    loglik = np.empty((dataset.n, config.n_draws))
    for t, (state, ll) in enumerate(iterate_chain(rng, dataset, config, state), start=1):
        if not np.all(np.isfinite(ll)):
            bad = int(np.flatnonzero(~np.isfinite(ll))[0])
            raise ChainDivergedError(
                f"non-finite log-likelihood at iteration {t}, observation {bad}: "
                f"mu={state.mu!r}, sigma2={state.sigma2!r}"
            )
        if t > config.T_warmup:
            j = t - config.T_warmup - 1
            draws.append(state)
            loglik[:, j] = ll
        if progress is not None:
            progress(t, state)
        if t >= config.T:
            break
    return Chain(draws, loglik, dataset.p, config)


def _as_packed(new_matrices, p: int) -> np.ndarray:
    if isinstance(new_matrices, Dataset):
        packed = new_matrices.packed
    elif len(new_matrices) and isinstance(new_matrices[0], SymMatrix):
        if any(m.dim != p for m in new_matrices):
            raise DimensionError("matrix dimension does not match the chain")
        packed = np.stack([m.upper for m in new_matrices])
    else:
        arr = np.asarray(new_matrices, dtype=float)
        packed = pack_upper(arr) if arr.ndim == 3 else np.atleast_2d(arr)
    if packed.shape[1] != packed_size(p):
        raise DimensionError("matrix dimension does not match the chain")
    return packed


def predict(chain: Chain, new_matrices) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean predictions and the (n_draws, n_new) per-draw predictions."""
    packed = _as_packed(new_matrices, chain.p)
    data = Dataset(packed, np.zeros(packed.shape[0]), chain.p)
    per_draw = np.empty((chain.n_draws, data.n))
    for t, draw in enumerate(chain.draws):
        total = np.full(data.n, draw.mu)
        for comp in draw.components:
            total += component_values(data, comp)
        per_draw[t] = total
    return per_draw.mean(axis=0), per_draw
