"""
Stochastic Cramer-Rao bound
===========================

Fisher information of ``L`` i.i.d. ``CN(0, G(theta))`` snapshots, via the
Slepian-Bangs formula::

    FIM_ij = L * trace(G^{-1} dG/dtheta_i G^{-1} dG/dtheta_j)

The default parameter vector is ``(beta, rho, delta)`` where ``rho`` lists the
diagonal of ``O`` followed by ``Re``/``Im`` of its strict upper triangle.
Passing ``source_rank=r`` instead parameterizes ``O = S S^H`` through the real
and imaginary parts of a V x r factor ``S``, which is the appropriate model
when the true ``O`` is rank deficient (coherent sources). That factor carries
``r^2`` unidentifiable rotation directions; they are eliminated with a
pseudo-inverse when marginalizing onto ``beta``.
"""

from dataclasses import dataclass

import numpy as np

from .array import manifold_derivative
from .exceptions import DomainError, SingularModelError
from .likelihood import _fast_inverse
from .model import hermitian_part


@dataclass(frozen=True)
class FisherInformation:
    matrix: np.ndarray
    names: list

    @property
    def n(self):
        return len(self.names)


def _factor(O, r):
    lam, U = np.linalg.eigh(O)
    idx = np.argsort(lam)[::-1][:r]
    return U[:, idx] * np.sqrt(np.clip(lam[idx], 0.0, None))


def _coordinates(params, source_rank=None):
    """Names and dG/dtheta matrices for every real coordinate, in index order."""
    A = params.manifold()
    dA = manifold_derivative(params.betas, params.W)
    O = params.source_cov
    V, W = params.V, params.W
    names, mats = [], []

    OAH = O @ A.conj().T
    for v in range(V):
        D = np.outer(dA[:, v], OAH[v])
        names.append(f"beta_{v + 1}")
        mats.append(D + D.conj().T)

    if source_rank is None:
        for p in range(V):
            names.append(f"O_{p + 1}{p + 1}")
            mats.append(np.outer(A[:, p], A[:, p].conj()))
        for p in range(V):
            for q in range(p + 1, V):
                X = np.outer(A[:, p], A[:, q].conj())
                names.append(f"ReO_{p + 1}{q + 1}")
                mats.append(X + X.conj().T)
                names.append(f"ImO_{p + 1}{q + 1}")
                mats.append(1j * (X - X.conj().T))
    else:
        r = int(source_rank)
        if not 1 <= r <= V:
            raise DomainError(f"source_rank must lie in [1, {V}], got {source_rank}")
        S = _factor(O, r)
        for p in range(V):
            for k in range(r):
                X = np.outer(A[:, p], (A @ S[:, k]).conj())
                names.append(f"ReS_{p + 1}{k + 1}")
                mats.append(X + X.conj().T)
                names.append(f"ImS_{p + 1}{k + 1}")
                mats.append(1j * (X - X.conj().T))

    for w in range(W):
        E = np.zeros((W, W), dtype=complex)
        E[w, w] = 1.0
        names.append(f"delta_{w + 1}")
        mats.append(E)
    return names, [hermitian_part(M) for M in mats]


def dG_dtheta(params, i, source_rank=None):
    """Derivative of the model covariance with respect to real coordinate ``i``."""
    names, mats = _coordinates(params, source_rank)
    if not 0 <= i < len(mats):
        raise DomainError(f"coordinate index {i} out of range [0, {len(mats)})")
    return mats[i]


def coordinate_names(params, source_rank=None):
    return _coordinates(params, source_rank)[0]


def fisher_information(params, L, source_rank=None):
    """Fisher information matrix of ``L`` snapshots at ``params``."""
    if L < 1:
        raise DomainError(f"snapshot count must be >= 1, got {L}")
    names, mats = _coordinates(params, source_rank)
    Gi = _fast_inverse(params.manifold(), params.source_cov, params.noise)
    X = np.stack([Gi @ M for M in mats])  # n x W x W
    # trace(X_i X_j) = sum_ab X_i[a, b] X_j[b, a]
    F = np.einsum("iab,jba->ij", X, X).real * L
    return FisherInformation(matrix=0.5 * (F + F.T), names=names)


def crlb_beta(params, L, source_rank=None):
    """Lower bounds (rad^2) on the variance of each angle estimate.

    The nuisance coordinates are marginalized out through the Schur
    complement ``F_bb - F_bn F_nn^+ F_nb``.
    """
    fim = fisher_information(params, L, source_rank).matrix
    V = params.V
    Fbb, Fbn, Fnn = fim[:V, :V], fim[:V, V:], fim[V:, V:]
    if source_rank is None:
        try:
            sol = np.linalg.solve(Fnn, Fbn.T)
        except np.linalg.LinAlgError:
            raise SingularModelError("Fisher information is singular") from None
        if np.linalg.cond(Fnn) > 1e14:
            raise SingularModelError("Fisher information is singular")
    else:
        sol = np.linalg.pinv(Fnn, rcond=1e-10, hermitian=True) @ Fbn.T
    schur = Fbb - Fbn @ sol
    schur = 0.5 * (schur + schur.T)
    if np.linalg.cond(schur) > 1e14:
        raise SingularModelError("angle block of the Fisher information is singular")
    bounds = np.diag(np.linalg.inv(schur)).copy()
    if np.any(bounds <= 0):
        raise SingularModelError("non-positive Cramer-Rao bound")
    return bounds


def sqrt_crlb_deg(params, L, source_rank=None):
    """Per-source root CRLB in degrees, for overlay on RMSE curves."""
    return np.rad2deg(np.sqrt(crlb_beta(params, L, source_rank)))


def numerical_rank(O, rtol=1e-8):
    lam = np.linalg.eigvalsh(np.asarray(O))
    return int(np.sum(lam > rtol * max(lam.max(), 0.0))) if lam.size else 0
