"""
Stochastic signal model
=======================

Snapshots follow ``r(t) = A(beta) k(t) + j(t)`` with ``k(t) ~ CN(0, O)`` and
``j(t) ~ CN(0, diag(delta))`` independent of each other and across time.
CN denotes the circular complex Gaussian: ``E[z z^H] = Sigma``, ``E[z z^T] = 0``.
"""

from dataclasses import dataclass

import numpy as np

from .array import check_angles, manifold
from .exceptions import DomainError, SingularModelError

PSD_RTOL = 1e-10


def hermitian_part(X):
    return 0.5 * (X + X.conj().T)


def check_source_cov(O, V=None, psd=True):
    O = np.atleast_2d(np.asarray(O, dtype=complex))
    if O.ndim != 2 or O.shape[0] != O.shape[1]:
        raise DomainError(f"source covariance must be square, got shape {O.shape}")
    if V is not None and O.shape[0] != V:
        raise DomainError(f"source covariance must be {V}x{V}, got {O.shape}")
    scale = np.linalg.norm(O, 2) if O.size else 0.0
    if np.max(np.abs(O - O.conj().T), initial=0.0) > 1e-12 * (1.0 + scale):
        raise DomainError("source covariance is not Hermitian")
    O = hermitian_part(O)
    if psd and O.size and np.linalg.eigvalsh(O)[0] < -PSD_RTOL * scale:
        raise DomainError("source covariance is not positive semi-definite")
    return O


def check_noise(delta, W=None):
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.ndim != 1:
        raise DomainError("noise variances must be a vector")
    if W is not None and delta.size != W:
        raise DomainError(f"expected {W} noise variances, got {delta.size}")
    if not np.all(np.isfinite(delta)) or np.any(delta <= 0.0):
        raise DomainError(f"noise variances must be strictly positive, got {delta}")
    return delta


@dataclass(frozen=True)
class Scenario:
    """Ground truth for simulation: array size, directions, and covariances."""

    W: int
    betas: np.ndarray
    source_cov: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        betas = check_angles(self.betas)
        if int(self.W) != self.W or self.W < 1:
            raise DomainError(f"W must be a positive integer, got {self.W}")
        if betas.size >= self.W:
            raise DomainError(f"need fewer sources than sensors (V={betas.size}, W={self.W})")
        object.__setattr__(self, "W", int(self.W))
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "source_cov", check_source_cov(self.source_cov, betas.size))
        object.__setattr__(self, "noise", check_noise(self.noise, self.W))

    @property
    def V(self):
        return self.betas.size

    def covariance(self):
        return model_covariance(self.betas, self.source_cov, self.noise)


@dataclass(frozen=True)
class SnapshotMatrix:
    """W x L complex data, column t holding snapshot r(t)."""

    data: np.ndarray
    seed: object = None

    @property
    def W(self):
        return self.data.shape[0]

    @property
    def L(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class SampleCovariance:
    """Sample covariance ``(1/L) sum_t r(t) r(t)^H`` with its snapshot count."""

    matrix: np.ndarray
    L: int

    @property
    def W(self):
        return self.matrix.shape[0]


def psd_sqrt(O):
    """Factor ``S`` with ``S @ S^H == O`` for a PSD (possibly singular) matrix.

    Eigenvalues slightly below zero (above ``-1e-10 * ||O||``) are clipped, so
    rank-deficient covariances of coherent sources factor without error.
    """
    O = np.atleast_2d(np.asarray(O, dtype=complex))
    O = hermitian_part(O)
    lam, U = np.linalg.eigh(O)
    scale = np.max(np.abs(lam), initial=0.0)
    if lam.size and lam[0] < -PSD_RTOL * scale:
        raise DomainError(f"matrix is not PSD (smallest eigenvalue {lam[0]:.3g})")
    return U * np.sqrt(np.clip(lam, 0.0, None))


def _rng(seed):
    # PCG64 seeded through SeedSequence; tuples such as (base_seed, l_index, trial)
    # give independent streams.
    if isinstance(seed, (tuple, list)):
        seed = [int(s) for s in seed]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_snapshots(scenario, L, seed):
    """Draw ``L`` independent snapshots of ``scenario``.

    ``seed`` is an integer or a tuple of integers (e.g. ``(base_seed, trial)``);
    the same seed always yields the same data.
    """
    if int(L) != L or L < 1:
        raise DomainError(f"snapshot count must be >= 1, got {L}")
    L = int(L)
    rng = _rng(seed)
    A = manifold(scenario.betas, scenario.W)
    S = psd_sqrt(scenario.source_cov)
    z_src = _cn(rng, (scenario.V, L))
    z_noise = _cn(rng, (scenario.W, L))
    data = A @ (S @ z_src) + np.sqrt(scenario.noise)[:, None] * z_noise
    return SnapshotMatrix(data=data, seed=seed)


def sample_covariance(snapshots):
    """Sample covariance of a :class:`SnapshotMatrix` (or a raw W x L array)."""
    X = snapshots.data if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots)
    X = np.atleast_2d(X)
    L = X.shape[1]
    if L < 1:
        raise DomainError("need at least one snapshot")
    return SampleCovariance(matrix=hermitian_part(X @ X.conj().T / L), L=L)


def model_covariance(betas, O, delta):
    """Population covariance ``G = A O A^H + diag(delta)``."""
    betas = check_angles(betas)
    delta = check_noise(delta)
    A = manifold(betas, delta.size)
    G = hermitian_part(A @ np.asarray(O, dtype=complex) @ A.conj().T + np.diag(delta))
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularModelError("model covariance is not positive definite") from None
    return G
