"""Core value types: symmetric matrices, datasets, model state and chains."""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from . import geometry
from .exceptions import DimensionError


def packed_size(p: int) -> int:
    return p * (p + 1) // 2


def dim_from_packed(size: int) -> int:
    p = int(round((math.sqrt(8 * size + 1) - 1) / 2))
    if packed_size(p) != size:
        raise DimensionError(f"{size} is not a triangular number p(p+1)/2")
    return p


@lru_cache(maxsize=64)
def _triu(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-major upper-triangle indices and the off-diagonal mask (read-only)."""
    rows, cols = np.triu_indices(p)
    off = rows != cols
    for a in (rows, cols, off):
        a.setflags(write=False)
    return rows, cols, off


def pack_upper(dense: np.ndarray) -> np.ndarray:
    """Row-major upper triangle (diagonal included) of one or many p x p matrices."""
    dense = np.asarray(dense, dtype=float)
    rows, cols, _ = _triu(dense.shape[-1])
    return dense[..., rows, cols]


def unpack_upper(upper: np.ndarray, p: int | None = None) -> np.ndarray:
    upper = np.asarray(upper, dtype=float)
    if p is None:
        p = dim_from_packed(upper.shape[-1])
    rows, cols, _ = _triu(p)
    out = np.zeros(upper.shape[:-1] + (p, p))
    out[..., rows, cols] = upper
    out[..., cols, rows] = upper
    return out


def quadratic_weights(gamma: np.ndarray) -> np.ndarray:
    """Packed weights ``w`` with ``packed(M) @ w == gamma^T M gamma``.

    Off-diagonal entries appear once in the packed layout, so they are
    counted twice here.
    """
    gamma = np.asarray(gamma, dtype=float)
    rows, cols, off = _triu(gamma.shape[0])
    w = gamma[rows] * gamma[cols]
    w[off] *= 2.0
    return w


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric p x p matrix stored as its packed upper triangle."""

    dim: int
    upper: np.ndarray

    def __post_init__(self):
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if upper.size != packed_size(self.dim):
            raise DimensionError(
                f"expected {packed_size(self.dim)} packed entries for p={self.dim}, got {upper.size}"
            )
        if not np.all(np.isfinite(upper)):
            raise ValueError("matrix entries must be finite")
        upper.setflags(write=False)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_dense(cls, dense, atol: float = 1e-10) -> "SymMatrix":
        dense = np.asarray(dense, dtype=float)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionError("expected a square matrix")
        if not np.allclose(dense, dense.T, atol=atol, rtol=0):
            raise ValueError("matrix is not symmetric")
        return cls(dense.shape[0], pack_upper(dense))

    def to_dense(self) -> np.ndarray:
        return unpack_upper(self.upper, self.dim)


@dataclass(frozen=True)
class Dataset:
    """Paired matrix predictors and scalar responses.

    ``packed`` is an ``(n, p(p+1)/2)`` array, one packed matrix per row.
    """

    packed: np.ndarray
    responses: np.ndarray
    p: int

    def __post_init__(self):
        packed = np.atleast_2d(np.asarray(self.packed, dtype=float))
        y = np.asarray(self.responses, dtype=float).reshape(-1)
        if packed.shape[1] != packed_size(self.p):
            raise DimensionError("packed width does not match p")
        if packed.shape[0] != y.size:
            raise DimensionError("number of matrices and responses differ")
        if y.size < 1:
            raise ValueError("a dataset needs at least one observation")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(packed))):
            raise ValueError("dataset contains non-finite values")
        packed.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "packed", packed)
        object.__setattr__(self, "responses", y)

    @classmethod
    def from_matrices(cls, matrices: Sequence[SymMatrix], responses) -> "Dataset":
        if not matrices:
            raise ValueError("a dataset needs at least one observation")
        dims = {m.dim for m in matrices}
        if len(dims) != 1:
            raise DimensionError(f"matrices have unequal dimensions {sorted(dims)}")
        return cls(np.stack([m.upper for m in matrices]), responses, dims.pop())

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def matrices(self) -> list[SymMatrix]:
        return [SymMatrix(self.p, row) for row in self.packed]

    def dense(self) -> np.ndarray:
        return unpack_upper(self.packed, self.p)

    def indices(self, gamma) -> np.ndarray:
        """``gamma^T M_i gamma`` for every observation."""
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.p,):
            raise DimensionError(f"direction has length {gamma.shape}, expected {self.p}")
        return self.packed @ quadratic_weights(gamma)


@dataclass(frozen=True)
class Direction:
    """Unit projection direction on the canonical hemisphere ``gamma_p >= 0``."""

    gamma: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_gamma(cls, gamma) -> "Direction":
        g = geometry.canonicalize(gamma)
        theta = geometry.to_spherical(g)
        return cls(_frozen(g), _frozen(theta))

    @classmethod
    def from_theta(cls, theta) -> "Direction":
        theta = np.asarray(theta, dtype=float)
        return cls(_frozen(geometry.to_cartesian(theta)), _frozen(theta))

    @property
    def p(self) -> int:
        return self.gamma.size


@dataclass(frozen=True)
class RidgeFunction:
    """Natural cubic spline ``g(u) = B(u) @ coeffs - center_offset``."""

    coeffs: np.ndarray
    interior_knots: np.ndarray
    boundary_knots: tuple[float, float]
    center_offset: float = 0.0

    def __post_init__(self):
        lo, hi = self.boundary_knots
        if not lo < hi:
            raise ValueError("boundary knots must satisfy lo < hi")
        ik = np.asarray(self.interior_knots, dtype=float)
        if ik.size and (ik.min() <= lo or ik.max() >= hi or np.any(np.diff(ik) <= 0)):
            raise ValueError("interior knots must be strictly increasing inside (lo, hi)")
        c = np.asarray(self.coeffs, dtype=float)
        if c.size != ik.size + 2:
            raise DimensionError("need #interior knots + 2 coefficients")
        object.__setattr__(self, "coeffs", _frozen(c))
        object.__setattr__(self, "interior_knots", _frozen(ik))
        object.__setattr__(self, "boundary_knots", (float(lo), float(hi)))

    @property
    def knots(self) -> tuple[np.ndarray, tuple[float, float]]:
        return self.interior_knots, self.boundary_knots

    def __call__(self, u) -> np.ndarray:
        from .splines import eval_basis

        return eval_basis(u, self.knots).values @ self.coeffs - self.center_offset


def zero_ridge() -> RidgeFunction:
    """The identically-zero ridge used at initialization."""
    return RidgeFunction(np.zeros(2), np.empty(0), (-1.0, 1.0), 0.0)


@dataclass(frozen=True)
class SSLHyper:
    """Spike-and-slab Lasso hyperparameters (spike scale h0 < slab scale h1)."""

    h0: float = 0.05
    h1: float = 1.0
    alpha_w: float = 1.0
    beta_w: float = 1.0

    def __post_init__(self):
        if min(self.h0, self.h1, self.alpha_w, self.beta_w) <= 0:
            raise ValueError("SSL hyperparameters must be positive")
        if not self.h0 < self.h1:
            raise ValueError("spike scale h0 must be smaller than slab scale h1")


@dataclass(frozen=True)
class UniformPrior:
    """Independent U(-pi/2, pi/2) prior on every spherical coordinate."""


PriorSpec = Union[SSLHyper, UniformPrior]


@dataclass(frozen=True)
class FitConfig:
    K: int = 2
    J: int = 4
    rho: float = 0.1
    prior: PriorSpec = field(default_factory=SSLHyper)
    mu_prior: tuple[float, float] = (0.0, 9.0)  # (a, b^2)
    sigma2_prior: tuple[float, float] = (1.0, 1.0)  # (alpha, beta)
    T: int = 13000
    T_warmup: int = 10000
    seed: int = 0
    lambda_init: float = 1e4
    adapt_window: int = 100

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be non-negative")
        if self.J < 2:
            raise ValueError("J must be at least 2")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if not 0 <= self.T_warmup < self.T:
            raise ValueError("need 0 <= T_warmup < T")
        if self.mu_prior[1] <= 0 or min(self.sigma2_prior) <= 0:
            raise ValueError("prior scales must be positive")
        if self.lambda_init <= 0:
            raise ValueError("lambda_init must be positive")

    @property
    def n_draws(self) -> int:
        return self.T - self.T_warmup

    @property
    def uses_ssl(self) -> bool:
        return isinstance(self.prior, SSLHyper)

    def with_(self, **changes) -> "FitConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ComponentState:
    """One additive term of the model."""

    direction: Direction
    ridge: RidgeFunction
    m: np.ndarray
    w: float
    lam: float
    accept_history: tuple[bool, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.int8)
        if m.size != self.direction.p - 1:
            raise DimensionError("allocation vector must have length p - 1")
        if np.any((m != 0) & (m != 1)):
            raise ValueError("allocations must be 0 or 1")
        if not 0 < self.w < 1:
            raise ValueError("mixing proportion must lie in (0, 1)")
        if not self.lam > 0:
            raise ValueError("vMF concentration must be positive")
        object.__setattr__(self, "m", _frozen(m))


@dataclass(frozen=True)
class ModelState:
    mu: float
    sigma2: float
    components: tuple[ComponentState, ...]

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass
class Chain:
    """Post-warm-up draws plus the per-observation log-likelihood matrix."""

    draws: list[ModelState]
    loglik: np.ndarray  # shape (n, n_draws)
    p: int
    config: FitConfig | None = None

    @property
    def n_draws(self) -> int:
        return len(self.draws)

    @property
    def K(self) -> int:
        return len(self.draws[0].components) if self.draws else 0

    def gammas(self) -> np.ndarray:
        """Directions as an array of shape (n_draws, K, p)."""
        return np.array([[c.direction.gamma for c in d.components] for d in self.draws]).reshape(
            self.n_draws, self.K, self.p
        )


@dataclass(frozen=True)
class IdentifiabilityReport:
    rank_ok: bool
    hadamard_rank_ok: bool
    min_pairwise_angle: float
    rank: int
    hadamard_rank: int


def frobenius_index(M: SymMatrix, d: Direction | np.ndarray) -> float:
    """``<M, gamma gamma^T> = gamma^T M gamma`` evaluated on the packed triangle."""
    gamma = d.gamma if isinstance(d, Direction) else np.asarray(d, dtype=float)
    if gamma.shape != (M.dim,):
        raise DimensionError(f"direction length {gamma.size} does not match p={M.dim}")
    return float(M.upper @ quadratic_weights(gamma))


def numerical_rank(A: np.ndarray, rtol: float = 1e-8) -> int:
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def check_identifiability(dirs: Sequence[Direction | np.ndarray]) -> IdentifiabilityReport:
    """Column-rank checks of the direction matrix and its Hadamard square.

    Never raises on degenerate input; the report carries the numerical ranks.
    """
    gammas = [d.gamma if isinstance(d, Direction) else np.asarray(d, dtype=float) for d in dirs]
    K = len(gammas)
    if K == 0:
        return IdentifiabilityReport(True, True, float("nan"), 0, 0)
    G = np.column_stack(gammas)
    r1 = numerical_rank(G)
    r2 = numerical_rank(G * G)
    angle = float("nan")
    if K > 1:
        unit = G / np.linalg.norm(G, axis=0)
        cos = np.abs(unit.T @ unit)[np.triu_indices(K, 1)]
        angle = float(np.min(np.arccos(np.clip(cos, 0.0, 1.0))))
    return IdentifiabilityReport(r1 == K, r2 == K, angle, r1, r2)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a
