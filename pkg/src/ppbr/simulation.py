"""Synthetic data: Haar-rotated symmetric predictors and two response scenarios.

* ``correct``: ``Y = mu + sum_k g_k(gamma_k^T M gamma_k) + eps`` with sparse
  directions (4 non-zero entries each) and links ``g_1..g_4`` centred on
  the training sample.
* ``misspec``: ``Y = 2u + 2u^2 + eps`` with ``u = <M, U U^T>`` for a sparse
  ``p x r`` matrix ``U``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .data_model import Dataset, Direction, SymMatrix, pack_upper, quadratic_weights
from .streams import stream

EIGEN_RANGE = 10.0
NONZEROS_CORRECT = 4
NONZEROS_MISSPEC = 8


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "correct"  # "correct" | "misspec"
    p: int = 15
    K: int = 2
    r: int = 2
    n_train: int = 400
    n_test: int = 1000
    sigma2: float = 1.0
    seed: int = 0
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("correct", "misspec"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "correct":
            if self.p < 5:
                raise ValueError("correctly specified scenario needs p >= 5")
            if not 1 <= self.K <= 4:
                raise ValueError("K must be between 1 and 4 (one link function each)")
        else:
            if self.p < 9:
                raise ValueError("misspecified scenario needs p >= 9")
            if self.r < 1:
                raise ValueError("r must be positive")
        if self.n_train < 1 or self.n_test < 0:
            raise ValueError("invalid sample sizes")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def sample_orthonormal(rng: np.random.Generator, p: int, r: int | None = None) -> np.ndarray:
    """Haar-distributed p x r matrix with orthonormal columns (r defaults to p).

    QR of a standard Gaussian matrix with the signs of R's diagonal moved
    into Q, which makes the distribution exactly uniform.
    """
    r = p if r is None else r
    z = rng.standard_normal((p, r))
    q, rr = np.linalg.qr(z)
    d = np.sign(np.diag(rr))
    d[d == 0] = 1.0
    return q * d


def _haar_batch(rng: np.random.Generator, p: int, N: int) -> np.ndarray:
    z = rng.standard_normal((N, p, p))
    q, rr = np.linalg.qr(z)
    d = np.sign(np.diagonal(rr, axis1=1, axis2=2))
    d[d == 0] = 1.0
    return q * d[:, None, :]


def gen_predictor_array(rng: np.random.Generator, p: int, N: int) -> np.ndarray:
    """Packed ``A_i diag(e_i) A_i^T`` with Haar ``A_i`` and ``e_ij ~ U(-10, 10)``."""
    A = _haar_batch(rng, p, N)
    e = rng.uniform(-EIGEN_RANGE, EIGEN_RANGE, size=(N, p))
    dense = np.einsum("nij,nj,nkj->nik", A, e, A)
    dense = 0.5 * (dense + np.swapaxes(dense, 1, 2))
    return pack_upper(dense)


def gen_predictors(rng: np.random.Generator, p: int, N: int) -> list[SymMatrix]:
    return [SymMatrix(p, row) for row in gen_predictor_array(rng, p, N)]


def gen_directions(rng: np.random.Generator, p: int, K: int) -> list[Direction]:
    """Sparse unit directions: ``V q_k`` with all but 4 random entries zeroed."""
    if p < NONZEROS_CORRECT + 1:
        raise ValueError("need p >= 5")
    V = sample_orthonormal(rng, p)
    dirs = []
    for _ in range(K):
        while True:
            alpha = V @ rng.uniform(0.0, 1.0, size=p)
            zero = rng.choice(p, size=p - NONZEROS_CORRECT, replace=False)
            alpha[zero] = 0.0
            norm = np.linalg.norm(alpha)
            if norm > 0:
                break
        dirs.append(Direction.from_gamma(alpha / norm))
    return dirs


def link_function(which: int, u):
    """Raw (uncentred) link ``g_1..g_4``."""
    u = np.asarray(u, dtype=float)
    if which == 1:
        return -u
    if which == 2:
        return -(u**2) / 4.0
    if which == 3:
        return 2.0 * np.exp(-u / 5.0)
    if which == 4:
        return u**2 / 4.0
    raise ValueError(f"link id must be 1..4, got {which!r}")


def additive_index_signal(packed: np.ndarray, directions: Sequence[Direction | np.ndarray],
                          links: Sequence[Callable], n_center: int, mu: float = 0.0):
    """Noise-free response ``mu + sum_k (g_k(u_k) - c_k)`` and the constants ``c_k``.

    ``c_k`` is the mean of the raw link over the first ``n_center`` rows.
    """
    signal = np.full(packed.shape[0], float(mu))
    consts = []
    for d, link in zip(directions, links):
        gamma = d.gamma if isinstance(d, Direction) else np.asarray(d, dtype=float)
        raw = link(packed @ quadratic_weights(gamma))
        c = float(np.mean(raw[:n_center]))
        consts.append(c)
        signal += raw - c
    return signal, consts


def bilinear_signal(packed: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``2u + 2u^2`` with ``u = <M, C>``."""
    u = packed @ _frobenius_weights(C)
    return 2.0 * u + 2.0 * u**2


def _frobenius_weights(C: np.ndarray) -> np.ndarray:
    return pack_upper(C + C.T - np.diag(np.diag(C)))


def sparse_loadings(rng: np.random.Generator, p: int, r: int) -> np.ndarray:
    """Haar p x r columns with p - 8 random entries per column set to zero."""
    U = sample_orthonormal(rng, p, r)
    for j in range(r):
        zero = rng.choice(p, size=p - NONZEROS_MISSPEC, replace=False)
        U[zero, j] = 0.0
    return U


def gen_scenario(spec: ScenarioSpec, noiseless: bool = False,
                 directions: Sequence[Direction] | None = None,
                 links: Sequence[Callable] | None = None):
    """Generate ``(train, test, truth)`` for one replication.

    Predictors, coefficients and noise come from separate named sub-streams
    of ``spec.seed``, so two scenarios with the same seed share predictors
    and noise.  ``directions``/``links`` override the correctly specified
    generator's truth (links may be arbitrary callables then).
    """
    N = spec.n_train + spec.n_test
    packed = gen_predictor_array(stream(spec.seed, "predictors"), spec.p, N)
    noise_sd = 0.0 if noiseless else np.sqrt(spec.sigma2)
    noise = noise_sd * stream(spec.seed, "noise").standard_normal(N)
    coef_rng = stream(spec.seed, "coefficients")

    if spec.kind == "correct":
        if directions is None:
            directions = gen_directions(coef_rng, spec.p, spec.K)
        link_ids = list(range(1, len(directions) + 1))
        if links is None:
            links = [lambda u, k=k: link_function(k, u) for k in link_ids]
            link_names = link_ids
        else:
            link_names = [getattr(f, "__name__", "custom") for f in links]
        signal, consts = additive_index_signal(packed, directions, links, spec.n_train, spec.mu)
        truth = {
            "kind": "correct",
            "p": spec.p,
            "K": len(directions),
            "mu": spec.mu,
            "sigma2": 0.0 if noiseless else spec.sigma2,
            "directions": [d.gamma.tolist() for d in directions],
            "links": link_names,
            "centering": consts,
        }
    else:
        U = sparse_loadings(coef_rng, spec.p, spec.r)
        C = U @ U.T
        signal = bilinear_signal(packed, C)
        truth = {
            "kind": "misspec",
            "p": spec.p,
            "r": spec.r,
            "mu": 0.0,
            "sigma2": 0.0 if noiseless else spec.sigma2,
            "U": U.tolist(),
            "C": C.tolist(),
        }
    y = signal + noise
    train = Dataset(packed[: spec.n_train], y[: spec.n_train], spec.p)
    test = Dataset(packed[spec.n_train:], y[spec.n_train:], spec.p) if spec.n_test else None
    return train, test, truth


def truth_signal(truth: dict, packed: np.ndarray) -> np.ndarray:
    """Recompute the noise-free response from a truth record."""
    if truth["kind"] == "correct":
        out = np.full(packed.shape[0], float(truth["mu"]))
        for gamma, link, c in zip(truth["directions"], truth["links"], truth["centering"]):
            out += link_function(int(link), packed @ quadratic_weights(np.asarray(gamma))) - c
        return out
    return bilinear_signal(packed, np.asarray(truth["C"]))
