"""
Log-likelihood of the stochastic model and its concentrated forms
================================================================

``J(beta, rho, delta) = -L*W*log(pi) - L*(log|G| + trace(G^{-1} R_hat))`` with
``G = A(beta) O A(beta)^H + diag(delta)``. The additive constant is the one
implied by the circular complex Gaussian density, so ``J`` equals the sum of
per-snapshot log densities.
"""

from dataclasses import InitVar, dataclass

import numpy as np

from .array import check_angles, manifold, manifold_derivative
from .exceptions import DomainError, SingularModelError
from .model import SampleCovariance, check_noise, check_source_cov, hermitian_part

# Beyond this condition number a matrix that must be inverted is treated as singular.
COND_MAX = 1e12


@dataclass(frozen=True)
class ModelParams:
    """One iterate ``(beta, O, delta)`` of the full parameter set.

    ``psd=False`` admits an indefinite Hermitian ``O`` (such as the
    concentrated estimate) for likelihood evaluation.
    """

    betas: np.ndarray
    source_cov: np.ndarray
    noise: np.ndarray
    psd: InitVar[bool] = True

    def __post_init__(self, psd):
        betas = check_angles(self.betas)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "source_cov", check_source_cov(self.source_cov, betas.size, psd=psd))
        object.__setattr__(self, "noise", check_noise(self.noise))

    @property
    def V(self):
        return self.betas.size

    @property
    def W(self):
        return self.noise.size

    def manifold(self):
        return manifold(self.betas, self.W)

    def covariance(self):
        A = self.manifold()
        return hermitian_part(A @ self.source_cov @ A.conj().T + np.diag(self.noise))


@dataclass(frozen=True)
class WhitenedModel:
    A_tilde: np.ndarray
    R_tilde: np.ndarray


def as_matrix(R_hat):
    if isinstance(R_hat, SampleCovariance):
        return R_hat.matrix
    return np.asarray(R_hat, dtype=complex)


def resolve_L(R_hat, L):
    if L is None:
        if isinstance(R_hat, SampleCovariance):
            return R_hat.L
        raise DomainError("snapshot count L is required when R_hat is a bare matrix")
    if L < 1:
        raise DomainError(f"snapshot count must be >= 1, got {L}")
    return L


def cholesky(G, what="model covariance"):
    """Cholesky factor of a matrix that must be PD and reasonably conditioned.

    ``(max diag / min diag)^2`` of the factor is a cheap lower bound on the
    condition number and is used as the singularity test.
    """
    try:
        C = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularModelError(f"{what} is not positive definite") from None
    d = np.abs(np.diag(C))
    if d.min() == 0.0 or (d.max() / d.min()) ** 2 > COND_MAX:
        raise SingularModelError(f"{what} is numerically singular")
    return C


def _llf_terms(A, O, delta, R):
    """``(log|G|, trace(G^{-1} R))`` without argument validation."""
    G = A @ O @ A.conj().T
    G[np.diag_indices_from(G)] += delta
    C = cholesky(G)
    logdet = 2.0 * np.sum(np.log(np.diag(C).real))
    Y = np.linalg.solve(C, R)
    Z = np.linalg.solve(C.conj().T, Y)
    return logdet, np.trace(Z).real


def _llf(A, O, delta, R, L):
    logdet, tr = _llf_terms(A, O, delta, R)
    W = delta.size
    return -L * W * np.log(np.pi) - L * (logdet + tr)


def log_likelihood(R_hat, params, L=None):
    """Exact log-likelihood ``J`` of ``L`` snapshots summarized by ``R_hat``.

    Parameters
    ----------
    R_hat : ndarray or SampleCovariance
        W x W sample covariance.
    params : ModelParams
    L : int, optional
        Snapshot count; taken from ``R_hat`` when it is a SampleCovariance.
    """
    L = resolve_L(R_hat, L)
    R = as_matrix(R_hat)
    return _llf(params.manifold(), params.source_cov, params.noise, R, L)


def whiten(betas, R_hat, delta):
    """Noise-whitened manifold ``Q^{-1/2} A`` and covariance ``Q^{-1/2} R_hat Q^{-1/2}``."""
    delta = check_noise(delta)
    R = as_matrix(R_hat)
    s = 1.0 / np.sqrt(delta)
    A = manifold(betas, delta.size)
    return WhitenedModel(A_tilde=s[:, None] * A, R_tilde=hermitian_part(s[:, None] * R * s[None, :]))


def _pinv_left(A, what="A^H A"):
    """``(A^H A)^{-1} A^H``, raising if the Gram matrix is singular."""
    gram = A.conj().T @ A
    if np.linalg.cond(gram) > COND_MAX:
        raise SingularModelError(f"{what} is singular (coincident or degenerate angles?)")
    return np.linalg.solve(gram, A.conj().T)


def concentrated_source_cov(betas, delta, R_hat):
    """Source covariance maximizing ``J`` for fixed ``beta`` and ``delta``.

    This is the unconstrained maximizer over Hermitian matrices and may be
    indefinite; it is intended for concentration and diagnostics, not as an
    ECME update.
    """
    wm = whiten(betas, R_hat, delta)
    P = _pinv_left(wm.A_tilde)
    W = wm.R_tilde.shape[0]
    return hermitian_part(P @ (wm.R_tilde - np.eye(W)) @ P.conj().T)


def _projector(A):
    return hermitian_part(A @ _pinv_left(A))


def concentrated_objective(betas, delta, R_hat):
    """Concentrated criterion ``H(beta, delta)``; minimizing it maximizes ``J``.

    With ``M = Pi R~ Pi + Pi_perp`` (``Pi`` the projector onto the whitened
    manifold), ``H = log|Q^{1/2} M Q^{1/2}| + trace(M^{-1} R~)``.
    """
    delta = check_noise(delta)
    wm = whiten(betas, R_hat, delta)
    W = delta.size
    Pi = _projector(wm.A_tilde)
    M = hermitian_part(Pi @ wm.R_tilde @ Pi + np.eye(W) - Pi)
    C = cholesky(M, "concentrated covariance")
    logdet = 2.0 * np.sum(np.log(np.diag(C).real)) + np.sum(np.log(delta))
    Z = np.linalg.solve(C.conj().T, np.linalg.solve(C, wm.R_tilde))
    return logdet + np.trace(Z).real


def uniform_concentrated_objective(betas, R_hat):
    """Concentrated criterion under uniform noise.

    Returns
    -------
    G_value : float
        ``|A O_hat A^H + delta_hat I|``.
    delta_hat : float
        ``trace(Pi_perp R_hat) / (W - V)``.
    O_hat : ndarray
        ``(A^H A)^{-1} A^H (R_hat - delta_hat I) A (A^H A)^{-1}``.
    """
    betas = check_angles(betas)
    R = as_matrix(R_hat)
    W = R.shape[0]
    V = betas.size
    if W <= V:
        raise DomainError(f"need W > V, got W={W}, V={V}")
    A = manifold(betas, W)
    P = _pinv_left(A)
    Pi = hermitian_part(A @ P)
    delta_hat = np.trace(R - Pi @ R).real / (W - V)
    if delta_hat <= 0.0:
        raise SingularModelError(f"noise power estimate is not positive ({delta_hat:.3g})")
    O_hat = hermitian_part(P @ (R - delta_hat * np.eye(W)) @ P.conj().T)
    G_value = np.linalg.det(A @ O_hat @ A.conj().T + delta_hat * np.eye(W)).real
    return G_value, delta_hat, O_hat


def _gain_core(At, O):
    """``(O At^H At + I_V)^{-1} O``: the kernel of the fast inverse."""
    V = O.shape[0]
    K = O @ (At.conj().T @ At) + np.eye(V)
    if np.linalg.cond(K) > COND_MAX:
        raise SingularModelError("O A~^H A~ + I is singular")
    return np.linalg.solve(K, O)


def _fast_inverse(A, O, delta):
    s = 1.0 / np.sqrt(delta)
    At = s[:, None] * A
    core = _gain_core(At, O)
    inner = np.eye(delta.size) - At @ core @ At.conj().T
    return hermitian_part(s[:, None] * inner * s[None, :])


def fast_inverse(betas, O, delta):
    """``G^{-1}`` through the V x V matrix inversion identity.

    ``G^{-1} = Q^{-1/2} [I - A~ (O A~^H A~ + I)^{-1} O A~^H] Q^{-1/2}``; only a
    V x V system is solved, and singular ``O`` is handled without special cases.
    """
    betas = check_angles(betas)
    delta = check_noise(delta)
    O = check_source_cov(O, betas.size)
    return _fast_inverse(manifold(betas, delta.size), O, delta)


def _gradient(A, dA, O, delta, R, L):
    Gi = _fast_inverse(A, O, delta)
    M = Gi - Gi @ R @ Gi
    # trace(M (D + D^H)) = 2 Re[(O A^H M dA)_vv] with D = dA_v e_v^T O A^H
    T = O @ A.conj().T @ M @ dA
    return -2.0 * L * np.diag(T).real


def llf_gradient_beta(betas, O, delta, R_hat, L=None):
    """Gradient of :func:`log_likelihood` with respect to the angles, O and delta fixed."""
    L = resolve_L(R_hat, L)
    betas = check_angles(betas)
    delta = check_noise(delta)
    O = check_source_cov(O, betas.size)
    W = delta.size
    return _gradient(manifold(betas, W), manifold_derivative(betas, W), O, delta, as_matrix(R_hat), L)
