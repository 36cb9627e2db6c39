"""One Metropolis-within-Gibbs sweep for a sparse single-index component.

Order within a sweep: allocations ``m``, mixing weight ``w``, a folded vMF
proposal for the direction with a Metropolis accept step on the
coefficient- and variance-marginalized posterior, then the spline
coefficients are set to their conditional prior mean at the kept direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data_model import ComponentState, Dataset, Direction, FitConfig, PriorSpec, RidgeFunction, SSLHyper
from .exceptions import DegenerateIndexError, SingularDesignError
from .geometry import sample_vmf
from .splines import BasisMatrix, eval_basis, make_knots, misfit_and_coeffs, score_from_misfit
from .ssl_prior import gibbs_update_m, gibbs_update_w, log_prior_gamma


@dataclass(frozen=True)
class SweepResult:
    component: ComponentState
    accepted: bool
    log_post_current: float
    # uncentered ridge values B @ c0 at the training indices of the kept direction
    fitted: np.ndarray | None = None


@dataclass(frozen=True)
class _Evaluation:
    log_post: float
    basis: BasisMatrix | None
    coeffs: np.ndarray | None = None


def _evaluate(direction: Direction, m, residuals, dataset: Dataset, J, rho, alpha, beta,
              spec: PriorSpec) -> _Evaluation:
    log_prior = log_prior_gamma(direction.theta, m, spec)
    if not np.isfinite(log_prior):
        return _Evaluation(-math.inf, None)
    indices = dataset.indices(direction.gamma)
    try:
        basis = eval_basis(indices, make_knots(indices, J))
        s, c0 = misfit_and_coeffs(basis, residuals, rho)
        score = score_from_misfit(s, residuals.size, alpha, beta)
    except (DegenerateIndexError, SingularDesignError):
        return _Evaluation(-math.inf, None)
    return _Evaluation(log_prior + score, basis, c0)


def log_posterior_gamma(gamma, m, residuals, dataset: Dataset, J: int, rho: float,
                        alpha: float, beta: float, spec: PriorSpec) -> float:
    """Unnormalized log posterior of a direction given partial residuals.

    Knots are placed at quantiles of this direction's own indices.  A
    direction whose indices are all equal scores ``-inf``.
    """
    direction = gamma if isinstance(gamma, Direction) else Direction.from_gamma(gamma)
    residuals = np.asarray(residuals, dtype=float)
    return _evaluate(direction, m, residuals, dataset, J, rho, alpha, beta, spec).log_post


def mh_sweep(rng: np.random.Generator, component: ComponentState, residuals, dataset: Dataset,
             config: FitConfig, update_allocations: bool = True) -> SweepResult:
    """Advance one component by one Metropolis-within-Gibbs step.

    ``update_allocations=False`` freezes ``m`` and ``w`` (used for targeted
    stationarity checks).  Under the uniform prior they are never sampled.
    """
    residuals = np.asarray(residuals, dtype=float)
    alpha, beta = config.sigma2_prior
    spec = config.prior
    m, w = component.m, component.w
    if update_allocations and isinstance(spec, SSLHyper):
        m = gibbs_update_m(rng, component.direction.theta, w, spec)
        w = gibbs_update_w(rng, m, spec.alpha_w, spec.beta_w)

    current = _evaluate(component.direction, m, residuals, dataset, config.J, config.rho,
                        alpha, beta, spec)
    proposal_dir = Direction.from_gamma(sample_vmf(rng, component.lam, component.direction.gamma))
    proposal = _evaluate(proposal_dir, m, residuals, dataset, config.J, config.rho, alpha, beta, spec)

    log_u = math.log(rng.random())
    if proposal.log_post == -math.inf:
        accepted = False
    elif current.log_post == -math.inf:
        accepted = True
    else:
        accepted = log_u < proposal.log_post - current.log_post

    kept_dir, kept = (proposal_dir, proposal) if accepted else (component.direction, current)
    if kept.basis is None:
        raise DegenerateIndexError("current direction yields a degenerate spline design")
    c0 = kept.coeffs
    interior, bounds = kept.basis.knots
    ridge = RidgeFunction(c0, interior, bounds, 0.0)
    history = (component.accept_history + (bool(accepted),))[-config.adapt_window:]
    updated = replace(component, direction=kept_dir, ridge=ridge, m=m, w=w, accept_history=history)
    return SweepResult(updated, bool(accepted), kept.log_post, kept.basis.values @ c0)
