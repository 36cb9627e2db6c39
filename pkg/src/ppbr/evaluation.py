"""Prediction error, direction alignment, interval coverage, ridge summaries and WAIC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .data_model import Chain, Dataset, Direction
from .exceptions import DimensionError

CI_LEVEL = 0.8
GRID_POINTS = 100


@dataclass(frozen=True)
class AlignmentMap:
    """Which sampled component stands for each reference component, per draw.

    ``permutation[k]`` is the sampled component matched to reference ``k``
    (fixed over draws for truth-based alignment).  ``draw_permutations`` has
    shape (n_draws, K); ``sign_flips`` has the same shape with entries +-1.
    """

    permutation: tuple[int, ...]
    sign_flips: np.ndarray
    draw_permutations: np.ndarray


def mspe(predictions, truths) -> float:
    pred = np.asarray(predictions, dtype=float).reshape(-1)
    obs = np.asarray(truths, dtype=float).reshape(-1)
    if pred.size == 0:
        raise ValueError("MSPE of an empty set is undefined")
    if pred.shape != obs.shape:
        raise DimensionError("predictions and truths differ in length")
    return float(np.mean((pred - obs) ** 2))


def acs(u, v) -> float:
    """Absolute cosine similarity ``|u^T v|`` after normalizing both vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("ACS is undefined for a zero vector")
    return float(min(1.0, abs(u @ v) / (nu * nv)))


def _as_gamma_array(chain_or_gammas) -> np.ndarray:
    if isinstance(chain_or_gammas, Chain):
        return chain_or_gammas.gammas()
    return np.asarray(chain_or_gammas, dtype=float)


def align(chain_or_gammas, truth_directions: Sequence[Direction | np.ndarray]) -> AlignmentMap:
    """Greedy order-and-sign alignment of sampled directions to reference ones.

    For reference ``k = 1..K`` in turn, the not-yet-used sampled component
    with the largest summed ACS over draws is matched.  Each matched draw is
    flipped when its sign at the reference's largest-magnitude coordinate
    disagrees with the reference.
    """
    G = _as_gamma_array(chain_or_gammas)  # (S, K, p)
    truth = np.array([d.gamma if isinstance(d, Direction) else np.asarray(d, float)
                      for d in truth_directions])
    S, K, _ = G.shape
    if truth.shape[0] != K:
        raise DimensionError(f"chain has {K} components but {truth.shape[0]} references were given")
    unit = G / np.linalg.norm(G, axis=2, keepdims=True)
    ref = truth / np.linalg.norm(truth, axis=1, keepdims=True)
    score = np.abs(np.einsum("skp,jp->jk", unit, ref))  # summed ACS, (reference, sampled)
    remaining = list(range(K))
    perm = []
    for k in range(K):
        best = max(remaining, key=lambda kk: score[k, kk])
        perm.append(best)
        remaining.remove(best)
    flips = np.ones((S, K))
    for k, b in enumerate(perm):
        l_star = int(np.argmax(np.abs(ref[k])))
        disagree = np.sign(G[:, b, l_star]) * np.sign(ref[k, l_star]) < 0
        flips[disagree, k] = -1.0
    draw_perm = np.tile(np.asarray(perm), (S, 1))
    return AlignmentMap(tuple(perm), flips, draw_perm)


def align_by_monotonicity(chain: Chain, dataset: Dataset) -> AlignmentMap:
    """Truth-free alignment: order components in each draw by corr(u, g(u)).

    The most decreasing ridge becomes reference 1, and so on; with K=2 this
    puts the negatively correlated component first.
    """
    S, K = chain.n_draws, chain.K
    draw_perm = np.empty((S, K), dtype=int)
    for t, draw in enumerate(chain.draws):
        corr = []
        for comp in draw.components:
            u = dataset.indices(comp.direction.gamma)
            g = comp.ridge(u)
            c = np.corrcoef(u, g)[0, 1] if np.std(g) > 0 else 0.0
            corr.append(c)
        draw_perm[t] = np.argsort(corr, kind="stable")
    counts: dict[tuple[int, ...], int] = {}
    for row in draw_perm:
        key = tuple(int(i) for i in row)
        counts[key] = counts.get(key, 0) + 1
    modal = max(counts, key=counts.get)
    return AlignmentMap(modal, np.ones((S, K)), draw_perm)


def aligned_gammas(chain_or_gammas, alignment: AlignmentMap) -> np.ndarray:
    """Directions reordered to reference order with sign flips applied, (S, K, p)."""
    G = _as_gamma_array(chain_or_gammas)
    rows = np.arange(G.shape[0])[:, None]
    return G[rows, alignment.draw_permutations] * alignment.sign_flips[:, :, None]


def acs_samples(chain_or_gammas, alignment: AlignmentMap, truth_directions) -> np.ndarray:
    """ACS of every aligned draw with its reference, (S, K)."""
    G = aligned_gammas(chain_or_gammas, alignment)
    ref = np.array([d.gamma if isinstance(d, Direction) else np.asarray(d, float)
                    for d in truth_directions])
    ref = ref / np.linalg.norm(ref, axis=1, keepdims=True)
    unit = G / np.linalg.norm(G, axis=2, keepdims=True)
    return np.abs(np.einsum("skp,kp->sk", unit, ref))


def credible_interval(samples, level: float = CI_LEVEL) -> tuple[float, float]:
    """Equal-tailed interval from linearly interpolated order statistics."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if x.size < 2:
        raise ValueError("need at least two samples for an interval")
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(x, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def coverage_report(chain_or_gammas, alignment: AlignmentMap, truth_directions,
                    level: float = CI_LEVEL) -> list[dict]:
    """CoverCI and LenCI for every direction coordinate, ordered k-major."""
    G = aligned_gammas(chain_or_gammas, alignment)
    ref = [d.gamma if isinstance(d, Direction) else np.asarray(d, float) for d in truth_directions]
    out = []
    for k, gamma in enumerate(ref):
        for l, true_val in enumerate(gamma):
            lo, hi = credible_interval(G[:, k, l], level)
            out.append({
                "k": k + 1,
                "l": l + 1,
                "truth": float(true_val),
                "lo": lo,
                "hi": hi,
                "cover": int(lo <= true_val <= hi),
                "length": hi - lo,
            })
    return out


def grid_from_range(lo: float, hi: float, n: int = GRID_POINTS) -> np.ndarray:
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("grid range must be finite")
    return np.linspace(lo, hi, n)


def truth_grids(dataset: Dataset, truth_directions, n: int = GRID_POINTS) -> list[np.ndarray]:
    """Per-component grids spanning the indices built from the true directions."""
    grids = []
    for d in truth_directions:
        gamma = d.gamma if isinstance(d, Direction) else np.asarray(d, float)
        u = dataset.indices(gamma)
        grids.append(grid_from_range(u.min(), u.max(), n))
    return grids


def posterior_index_bounds(chain: Chain, dataset: Dataset, alignment: AlignmentMap) -> np.ndarray:
    """(K, 2) min/max over draws and subjects of each aligned component's indices."""
    bounds = np.empty((chain.K, 2))
    bounds[:, 0] = np.inf
    bounds[:, 1] = -np.inf
    for t, draw in enumerate(chain.draws):
        for k, b in enumerate(alignment.draw_permutations[t]):
            u = dataset.indices(draw.components[b].direction.gamma)
            bounds[k, 0] = min(bounds[k, 0], u.min())
            bounds[k, 1] = max(bounds[k, 1], u.max())
    return bounds


def pooled_grids(bounds_per_run: Sequence[np.ndarray], n: int = GRID_POINTS) -> list[np.ndarray]:
    """Grids from the median of per-run lower and upper index bounds."""
    med = np.median(np.stack(bounds_per_run), axis=0)
    return [grid_from_range(lo, hi, n) for lo, hi in med]


def ridge_summary(chain: Chain, alignment: AlignmentMap, grids: Sequence[np.ndarray],
                  level: float = CI_LEVEL) -> list[dict]:
    """Median and equal-tailed band of each aligned ridge function on its grid."""
    tail = 0.5 * (1.0 - level)
    out = []
    for k, grid in enumerate(grids):
        grid = np.asarray(grid, dtype=float)
        curves = np.empty((chain.n_draws, grid.size))
        for t, draw in enumerate(chain.draws):
            curves[t] = draw.components[alignment.draw_permutations[t, k]].ridge(grid)
        lo, med, hi = np.quantile(curves, [tail, 0.5, 1.0 - tail], axis=0, method="linear")
        out.append({"k": k + 1, "grid": grid, "median": med, "lo": lo, "hi": hi})
    return out


def waic(loglik) -> float:
    """WAIC on the deviance scale from an (n, S) pointwise log-likelihood matrix.

    ``-2 * sum_i [log mean_t exp(l_it) - var_t(l_it)]`` with the (S-1)
    variance denominator; lower is better.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2 or ll.shape[1] < 2:
        raise ValueError("need an (n, S) matrix with S >= 2 draws")
    if not np.all(np.isfinite(ll)):
        raise ValueError("log-likelihood matrix contains non-finite entries")
    S = ll.shape[1]
    lppd = logsumexp(ll, axis=1) - np.log(S)
    p_waic = np.var(ll, axis=1, ddof=1)
    return float(-2.0 * np.sum(lppd - p_waic))
