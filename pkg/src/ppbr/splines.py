"""Natural cubic B-spline basis and the conjugate spline-coefficient algebra.

The basis follows the classical construction: a clamped cubic B-spline
basis on ``(lo, lo, lo, lo, interior..., hi, hi, hi, hi)`` is projected onto
the null space of the second-derivative functionals at both boundary knots.
That leaves ``#interior + 2`` columns, spanning the affine functions when
there are no interior knots.  Outside ``[lo, hi]`` each column continues
linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import linalg

from .exceptions import DegenerateIndexError, SingularDesignError

Knots = tuple[np.ndarray, tuple[float, float]]

KNOT_NUDGE = 1e-9
JITTER_TRIGGER = 1e-12
JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class BasisMatrix:
    values: np.ndarray  # (n, J)
    knots: Knots

    @property
    def J(self) -> int:
        return self.values.shape[1]


def _quantiles_type7(sorted_u: np.ndarray, probs: np.ndarray) -> np.ndarray:
    h = (sorted_u.size - 1) * probs
    lo = np.floor(h).astype(int)
    hi = np.minimum(lo + 1, sorted_u.size - 1)
    return sorted_u[lo] + (h - lo) * (sorted_u[hi] - sorted_u[lo])


def make_knots(indices, J: int) -> Knots:
    """Interior knots at the k/(J-1) sample quantiles, boundary knots at min/max."""
    u = np.sort(np.asarray(indices, dtype=float).reshape(-1))
    if J < 2:
        raise ValueError("J must be at least 2")
    if u.size < J:
        raise ValueError(f"need at least J={J} indices, got {u.size}")
    lo, hi = float(u[0]), float(u[-1])
    if not hi > lo:
        raise DegenerateIndexError("all indices are equal")
    interior = _quantiles_type7(u, np.arange(1, J - 1) / (J - 1))
    if interior.size:
        interior = _separate(interior, lo, hi)
    return interior, (lo, hi)


def _separate(knots: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Push tied knots apart by a tiny multiple of the index range."""
    eps = KNOT_NUDGE * (hi - lo)
    k = knots.copy()
    prev = lo
    for i in range(k.size):
        if k[i] <= prev:
            k[i] = prev + eps
        prev = k[i]
    nxt = hi
    for i in range(k.size - 1, -1, -1):
        if k[i] >= nxt:
            k[i] = nxt - eps
        nxt = k[i]
    return k


def _clamped_knots(interior: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.concatenate(([lo] * 4, interior, [hi] * 4))


@numba.njit(cache=True)
def _nonzero_bsplines(xi, t, s, N, left, right):
    """Cox-de Boor triangle: the 4 cubic B-splines non-zero on span ``s``."""
    N[0] = 1.0
    for j in range(1, 4):
        left[j] = xi - t[s + 1 - j]
        right[j] = t[s + j] - xi
        saved = 0.0
        for r in range(j):
            temp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[j] = saved


@numba.njit(cache=True)
def _span(xi, t, nb):
    s = np.searchsorted(t, xi, side="right") - 1
    return min(max(s, 3), nb - 1)


@numba.njit(cache=True)
def _de_boor_rows(x, t, out):
    nb = t.size - 4
    left = np.empty(4)
    right = np.empty(4)
    N = np.empty(4)
    for i in range(x.size):
        s = _span(x[i], t, nb)
        _nonzero_bsplines(x[i], t, s, N, left, right)
        for r in range(4):
            out[i, s - 3 + r] = N[r]


def bspline_design(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Clamped cubic B-spline basis at points ``x`` inside ``[t[3], t[-4]]``.

    Cox-de Boor triangle per point; each row has 4 non-zero entries.
    """
    x = np.ascontiguousarray(x, dtype=float)
    out = np.zeros((x.size, t.size - 4))
    _de_boor_rows(x, np.ascontiguousarray(t, dtype=float), out)
    return out


def _boundary_functionals(t: np.ndarray) -> dict[str, np.ndarray]:
    """Value, slope and curvature at both ends as linear maps on coefficients."""
    nb = t.size - 4
    m = nb - 1

    def slope(i):  # coefficient row of the derivative's i-th B-spline coefficient
        row = np.zeros(nb)
        scale = 3.0 / (t[i + 4] - t[i + 1])
        row[i + 1] += scale
        row[i] -= scale
        return row

    val_lo = np.zeros(nb)
    val_lo[0] = 1.0
    val_hi = np.zeros(nb)
    val_hi[m] = 1.0
    curv_lo = 2.0 * (slope(1) - slope(0)) / (t[4] - t[2])
    curv_hi = 2.0 * (slope(m - 1) - slope(m - 2)) / (t[m + 2] - t[m])
    return {
        "value": np.vstack([val_lo, val_hi]),
        "slope": np.vstack([slope(0), slope(m - 1)]),
        "curvature": np.vstack([curv_lo, curv_hi]),
    }


@numba.njit(cache=True)
def _null_space(A):
    """Orthonormal complement of the columns of ``A`` (P x 2) by two Householder steps."""
    P, k = A.shape
    A = A.copy()
    Q = np.eye(P)
    for c in range(k):
        norm = 0.0
        for i in range(c, P):
            norm += A[i, c] * A[i, c]
        norm = np.sqrt(norm)
        if norm == 0.0:
            continue
        v = np.zeros(P)
        for i in range(c, P):
            v[i] = A[i, c]
        v[c] += norm if v[c] >= 0 else -norm
        vn = 0.0
        for i in range(c, P):
            vn += v[i] * v[i]
        # apply H = I - 2 v v^T / (v^T v) to A from the left and to Q from the right
        for j in range(k):
            dot = 0.0
            for i in range(c, P):
                dot += v[i] * A[i, j]
            f = 2.0 * dot / vn
            for i in range(c, P):
                A[i, j] -= f * v[i]
        for i in range(P):
            dot = 0.0
            for l in range(c, P):
                dot += Q[i, l] * v[l]
            f = 2.0 * dot / vn
            for l in range(c, P):
                Q[i, l] -= f * v[l]
    return Q[:, k:].copy()


@numba.njit(cache=True)
def _natural_basis(u, interior, lo, hi):
    ni = interior.size
    nb = ni + 4
    t = np.empty(nb + 4)
    for i in range(4):
        t[i] = lo
        t[nb + i] = hi
    for i in range(ni):
        t[4 + i] = interior[i]
    m = nb - 1

    # derivative-coefficient rows at both ends (only a few entries non-zero)
    s_lo0 = 3.0 / (t[4] - t[1])
    s_lo1 = 3.0 / (t[5] - t[2])
    s_hi0 = 3.0 / (t[m + 3] - t[m])
    s_hi1 = 3.0 / (t[m + 2] - t[m - 1])
    curv = np.zeros((nb, 2))
    c_lo = 2.0 / (t[4] - t[2])
    curv[0, 0] = c_lo * s_lo0
    curv[1, 0] = c_lo * (-s_lo1 - s_lo0)
    curv[2, 0] = c_lo * s_lo1
    c_hi = 2.0 / (t[m + 2] - t[m])
    curv[m, 1] = c_hi * s_hi0
    curv[m - 1, 1] = c_hi * (-s_hi0 - s_hi1)
    curv[m - 2, 1] = c_hi * s_hi1
    proj = _null_space(curv)
    J = proj.shape[1]

    out = np.zeros((u.size, J))
    left = np.empty(4)
    right = np.empty(4)
    N = np.empty(4)
    for i in range(u.size):
        x = u[i]
        if x < lo:
            d = x - lo
            for j in range(J):
                out[i, j] = proj[0, j] + d * s_lo0 * (proj[1, j] - proj[0, j])
        elif x > hi:
            d = x - hi
            for j in range(J):
                out[i, j] = proj[m, j] + d * s_hi0 * (proj[m, j] - proj[m - 1, j])
        else:
            s = _span(x, t, nb)
            _nonzero_bsplines(x, t, s, N, left, right)
            for r in range(4):
                row = s - 3 + r
                for j in range(J):
                    out[i, j] += N[r] * proj[row, j]
    return out


def eval_basis(indices, knots: Knots) -> BasisMatrix:
    """Evaluate the natural cubic basis at ``indices`` (linear beyond the boundary)."""
    u = np.ascontiguousarray(indices, dtype=float).reshape(-1)
    interior, (lo, hi) = knots
    interior = np.ascontiguousarray(interior, dtype=float)
    values = _natural_basis(u, interior, float(lo), float(hi))
    return BasisMatrix(values, (interior, (float(lo), float(hi))))


def _gram(B: np.ndarray) -> np.ndarray:
    """``B^T B`` with a ridge of 1e-10 * mean eigenvalue when nearly singular."""
    G = B.T @ B
    ev = np.linalg.eigvalsh(G)
    if ev[-1] <= 0 or not np.all(np.isfinite(ev)):
        raise SingularDesignError("basis Gram matrix is zero or non-finite")
    if ev[0] < JITTER_TRIGGER * ev[-1]:
        J = G.shape[0]
        G = G + JITTER_SCALE * np.trace(G) / J * np.eye(J)
    return G


def _cho(A: np.ndarray):
    try:
        return linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularDesignError("spline design is rank deficient") from exc


def posterior_coeffs(B, r, rho: float):
    """Prior-mean coefficients and the two covariance factors.

    Returns ``(c0, Sigma_rho, Sigma0)`` with ``Sigma_rho = (B^T B + rho I)^-1``,
    ``Sigma0 = (B^T B)^-1`` and ``c0 = Sigma_rho B^T r``.
    """
    B = B.values if isinstance(B, BasisMatrix) else np.asarray(B, dtype=float)
    r = np.asarray(r, dtype=float)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    G = _gram(B)
    J = G.shape[0]
    eye = np.eye(J)
    cf0 = _cho(G)
    cfr = _cho(G + rho * eye)
    sigma0 = linalg.cho_solve(cf0, eye, check_finite=False)
    sigma_rho = linalg.cho_solve(cfr, eye, check_finite=False)
    sigma0 = 0.5 * (sigma0 + sigma0.T)
    sigma_rho = 0.5 * (sigma_rho + sigma_rho.T)
    c0 = linalg.cho_solve(cfr, B.T @ r, check_finite=False)
    return c0, sigma_rho, sigma0


def ridge_coeffs(B, r, rho: float) -> np.ndarray:
    """Only ``c0``; skips forming the covariance matrices."""
    return misfit_and_coeffs(B, r, rho)[1]


@numba.njit(cache=True)
def _chol_solve(L, b):
    n = b.size
    y = np.empty(n)
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * y[k]
        y[i] = acc / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return x


@numba.njit(cache=True)
def _misfit_kernel(B, r, rho, trigger, scale):
    n, J = B.shape
    G = np.zeros((J, J))
    b = np.zeros(J)
    rr = 0.0
    for i in range(n):
        rr += r[i] * r[i]
        for j in range(J):
            b[j] += B[i, j] * r[i]
            for k in range(j, J):
                G[j, k] += B[i, j] * B[i, k]
    for j in range(J):
        for k in range(j):
            G[j, k] = G[k, j]
    ev = np.linalg.eigvalsh(G)
    if not (ev[-1] > 0 and np.isfinite(ev[-1]) and np.isfinite(ev[0])):
        return np.nan, b, False
    if ev[0] < trigger * ev[-1]:
        bump = scale * np.trace(G) / J
        for j in range(J):
            G[j, j] += bump
    # both Cholesky factors; a non-positive pivot means the design is singular
    Gr = G.copy()
    for j in range(J):
        Gr[j, j] += rho
    L0 = np.zeros((J, J))
    Lr = np.zeros((J, J))
    for L, M in ((L0, G), (Lr, Gr)):
        for j in range(J):
            d = M[j, j]
            for k in range(j):
                d -= L[j, k] * L[j, k]
            if not d > 0:
                return np.nan, b, False
            L[j, j] = np.sqrt(d)
            for i in range(j + 1, J):
                acc = M[i, j]
                for k in range(j):
                    acc -= L[i, k] * L[j, k]
                L[i, j] = acc / L[j, j]
    a = _chol_solve(Lr, b)
    z = _chol_solve(L0, b)
    aGa = 0.0
    for j in range(J):
        for k in range(J):
            aGa += a[j] * G[j, k] * a[k]
    s = rr - b @ a - 0.5 * (b @ z) + 0.5 * aGa
    return s, a, True


def misfit_and_coeffs(B, r, rho: float) -> tuple[float, np.ndarray]:
    """``(S, c0)`` from one pass over the design.

    ``S = r'r - b'(Sigma_rho + Sigma0/2 - Sigma_rho Sigma0^-1 Sigma_rho / 2) b``
    with ``b = B'r``; at ``rho = 0`` this is the least-squares RSS.  ``c0`` is
    ``Sigma_rho b``.
    """
    B = B.values if isinstance(B, BasisMatrix) else np.asarray(B, dtype=float)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    s, c0, ok = _misfit_kernel(np.ascontiguousarray(B, dtype=float),
                               np.ascontiguousarray(r, dtype=float), float(rho),
                               JITTER_TRIGGER, JITTER_SCALE)
    if not ok:
        raise SingularDesignError("spline design is rank deficient, zero or non-finite")
    return float(s), c0


def misfit(B, r, rho: float) -> float:
    """Data misfit ``S`` left after integrating out the coefficients."""
    return misfit_and_coeffs(B, r, rho)[0]


def score_from_misfit(s: float, n: int, alpha: float, beta: float) -> float:
    total = s + 2.0 * beta
    if not total > 0 or not np.isfinite(total):
        raise SingularDesignError(f"S + 2*beta = {total!r} is not positive; broken design matrix")
    return -(alpha + 0.5 * n) * np.log(total)


def marginal_score(B, r, rho: float, alpha: float, beta: float) -> float:
    """``-(alpha + n/2) * log(S + 2 beta)``, the log data factor of the direction posterior."""
    r = np.asarray(r, dtype=float)
    return score_from_misfit(misfit(B, r, rho), r.size, alpha, beta)
