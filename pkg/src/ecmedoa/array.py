"""
Uniform linear array geometry
=============================

Half-wavelength ULA whose first sensor is the phase reference. Directions are
measured from the array axis, in radians, on the open interval (0, pi).
"""

import numpy as np

from .exceptions import DomainError


def check_angles(betas):
    """Return ``betas`` as a 1-D float array, raising on values outside (0, pi)."""
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if betas.ndim != 1 or betas.size < 1:
        raise DomainError("expected a non-empty 1-D vector of angles")
    if not np.all(np.isfinite(betas)) or np.any(betas <= 0.0) or np.any(betas >= np.pi):
        raise DomainError(f"angles must lie strictly inside (0, pi), got {betas}")
    return betas


def _check_sensors(W):
    if int(W) != W or W < 1:
        raise DomainError(f"sensor count must be a positive integer, got {W}")
    return int(W)


def steering_vector(beta, W):
    """Steering vector ``a(beta)`` of a W-sensor half-wavelength ULA.

    Element ``w`` is ``exp(-1j * pi * w * cos(beta))``, so element 0 is 1.
    """
    (beta,) = check_angles([beta])
    W = _check_sensors(W)
    return np.exp(-1j * np.pi * np.arange(W) * np.cos(beta))


def steering_derivative(beta, W):
    """Derivative of :func:`steering_vector` with respect to ``beta``."""
    (beta,) = check_angles([beta])
    W = _check_sensors(W)
    w = np.arange(W)
    return 1j * np.pi * w * np.sin(beta) * np.exp(-1j * np.pi * w * np.cos(beta))


def manifold(betas, W):
    """W x V array manifold whose v-th column is ``steering_vector(betas[v], W)``.

    Repeated angles are allowed here; the resulting rank deficiency is
    reported by whichever routine needs ``A^H A`` to be invertible.
    """
    betas = check_angles(betas)
    W = _check_sensors(W)
    return np.exp(-1j * np.pi * np.outer(np.arange(W), np.cos(betas)))


def manifold_derivative(betas, W):
    """W x V matrix whose v-th column is ``steering_derivative(betas[v], W)``."""
    betas = check_angles(betas)
    W = _check_sensors(W)
    w = np.arange(W)[:, None]
    return 1j * np.pi * w * np.sin(betas) * np.exp(-1j * np.pi * w * np.cos(betas))
