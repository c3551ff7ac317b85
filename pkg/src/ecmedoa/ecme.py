"""
ECME iteration for stochastic ML direction finding
==================================================

Each iteration runs

1. an E-step giving the conditional second moments of the latent source and
   noise sequences,
2. an M-step that sets ``O`` and ``delta`` to those moments in closed form, and
3. a CM-step that increases the observed-data likelihood in ``beta`` by
   steepest descent with Armijo backtracking on ``f = -J / L``.

The E- and M-steps keep ``O`` PSD and ``delta`` positive, and preserve the
null space of ``O``; the likelihood is non-decreasing across iterations.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .array import check_angles, manifold, manifold_derivative
from .exceptions import DomainError, SingularModelError
from .likelihood import (
    COND_MAX,
    ModelParams,
    _fast_inverse,
    _gain_core,
    _gradient,
    _llf,
    _llf_terms,
    as_matrix,
)
from .model import hermitian_part

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConditionalMoments:
    """E-step output: conditional second moments of sources (V x V) and noise (W x W)."""

    N_k: np.ndarray
    N_j: np.ndarray


@dataclass(frozen=True)
class EcmeOptions:
    """Solver settings. Angles and angular tolerances are in radians.

    ``grad_tol``, ``armijo_c``, ``backtrack_factor`` and ``boundary_fraction``
    parameterize the steepest-descent CM-step; ``max_descent_steps`` and
    ``max_halvings`` bound its loops.
    """

    max_iters: int = 1000
    beta_tol: float = np.deg2rad(0.001)
    grad_tol: float = 1e-3
    armijo_c: float = 0.3
    backtrack_factor: float = 0.5
    boundary_fraction: float = 0.1
    llf_trace: bool = True
    max_descent_steps: int = 10_000
    max_halvings: int = 60
    cond_max: float = COND_MAX

    def __post_init__(self):
        if not 0.0 < self.armijo_c < 1.0:
            raise DomainError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise DomainError("backtrack_factor must lie in (0, 1)")
        if not 0.0 < self.boundary_fraction <= 1.0:
            raise DomainError("boundary_fraction must lie in (0, 1]")
        if self.beta_tol <= 0 or self.grad_tol <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_iters < 1 or self.max_descent_steps < 1 or self.max_halvings < 1:
            raise DomainError("iteration caps must be >= 1")


@dataclass
class EcmeResult:
    params: ModelParams
    llf_trace: list
    iterations: int
    converged: bool
    stop_reason: str  # "beta_tol" or "max_iters"
    cm_cap_hits: int = 0
    delta_halvings: int = 0
    extra: dict = field(default_factory=dict)


def e_step(prev, R_hat, cond_max=COND_MAX):
    """Conditional moments of the augmented data given the current iterate.

    With gain ``H = G^{-1} A O``::

        N_k = H^H R H + O - H^H G H
        N_j = Q G^{-1} R G^{-1} Q + Q - Q G^{-1} Q

    The posterior covariance terms are evaluated in their factored forms
    ``(O A~^H A~ + I)^{-1} O`` and ``A (O A~^H A~ + I)^{-1} O A^H``, which are
    algebraically identical but keep null spaces and PSD-ness exact.
    """
    R = as_matrix(R_hat)
    A = prev.manifold()
    O = prev.source_cov
    delta = prev.noise
    G = prev.covariance()
    if np.linalg.cond(G) > cond_max:
        raise SingularModelError("model covariance conditioning exceeds limit in E-step")
    Gi = _fast_inverse(A, O, delta)
    s = 1.0 / np.sqrt(delta)
    core = _gain_core(s[:, None] * A, O)
    H = Gi @ A @ O
    N_k = hermitian_part(H.conj().T @ R @ H + core)
    QGi = delta[:, None] * Gi
    N_j = hermitian_part(QGi @ R @ QGi.conj().T + A @ core @ A.conj().T)
    return ConditionalMoments(N_k=N_k, N_j=N_j)


def m_step(moments, prev_delta):
    """Closed-form maximization of the expected augmented-data likelihood.

    ``O`` becomes ``N_k`` and ``delta_w`` becomes ``[N_j]_{ww}``; a diagonal
    entry that is not positive halves the previous variance instead.

    Returns
    -------
    (O, delta)
    """
    O = np.array(moments.N_k, dtype=complex)
    prev_delta = np.asarray(prev_delta, dtype=float)
    diag = np.real(np.diag(moments.N_j)).copy()
    bad = diag <= 0.0
    if np.any(bad):
        logger.info("non-positive noise moment at sensors %s; halving", np.flatnonzero(bad))
        diag[bad] = prev_delta[bad] / 2.0
    return O, diag


def cm_step(prev_betas, O, delta, R_hat, opts=None):
    """Steepest-descent CM-step on ``f(beta) = -J(beta, O, delta) / L``.

    Stops when ``||grad f|| <= opts.grad_tol``. Each step starts at
    ``boundary_fraction`` times the largest step that keeps every angle
    inside (0, pi) and backtracks until the Armijo condition holds, so the
    likelihood never decreases.

    Returns
    -------
    betas : ndarray
    capped : bool
        True if the descent-step or backtracking cap stopped the search early;
        ``betas`` is then the best iterate found.
    """
    opts = opts or EcmeOptions()
    beta = check_angles(prev_betas).copy()
    R = as_matrix(R_hat)
    O = np.asarray(O, dtype=complex)
    delta = np.asarray(delta, dtype=float)
    W = delta.size

    def f(b):
        logdet, tr = _llf_terms(manifold(b, W), O, delta, R)
        return logdet + tr

    def grad(b):
        # gradient of f = -J/L
        return -_gradient(manifold(b, W), manifold_derivative(b, W), O, delta, R, 1.0)

    fval = f(beta)
    g = grad(beta)
    steps = 0
    while np.linalg.norm(g) > opts.grad_tol:
        if steps >= opts.max_descent_steps:
            logger.warning("CM-step hit the %d-step cap", opts.max_descent_steps)
            return beta, True
        with np.errstate(divide="ignore"):
            caps = np.where(g > 0, beta / g, np.where(g < 0, -(np.pi - beta) / g, np.inf))
        t = opts.boundary_fraction * np.min(caps)
        gg = g @ g
        for _ in range(opts.max_halvings):
            cand = beta - t * g
            fc = f(cand)
            if fc <= fval - opts.armijo_c * t * gg:
                break
            t *= opts.backtrack_factor
        else:
            logger.debug("CM-step backtracking exhausted at |grad|=%.3g", np.sqrt(gg))
            return beta, True
        beta, fval = cand, fc
        g = grad(beta)
        steps += 1
    return beta, False


def _canonical(params):
    order = np.argsort(params.betas, kind="stable")
    O = params.source_cov[np.ix_(order, order)]
    return ModelParams(params.betas[order], O, params.noise)


def run_ecme(R_hat, L, init, opts=None, callback=None):
    """Run ECME from ``init`` until the angle update falls below ``opts.beta_tol``.

    Parameters
    ----------
    R_hat : ndarray or SampleCovariance
    L : int
        Snapshot count behind ``R_hat``.
    init : ModelParams
        Starting point; needs ``delta > 0`` and ``O`` PSD.
    opts : EcmeOptions, optional
    callback : callable, optional
        Called as ``callback(d, params)`` after iteration ``d`` (1-based).

    Returns
    -------
    EcmeResult
        Final angles sorted ascending with ``O`` permuted to match.
    """
    opts = opts or EcmeOptions()
    R = as_matrix(R_hat)
    if R.shape != (init.W, init.W):
        raise DomainError(f"R_hat shape {R.shape} does not match W={init.W}")
    params = init
    trace = []
    if opts.llf_trace:
        trace.append(_llf(params.manifold(), params.source_cov, params.noise, R, L))
    cap_hits = 0
    halvings = 0
    stop_reason = "max_iters"
    d = 0
    for d in range(1, opts.max_iters + 1):
        try:
            moments = e_step(params, R, cond_max=opts.cond_max)
            O, delta = m_step(moments, params.noise)
            halvings += int(np.sum(np.real(np.diag(moments.N_j)) <= 0.0))
            betas, capped = cm_step(params.betas, O, delta, R, opts)
        except SingularModelError as exc:
            raise SingularModelError(str(exc), iteration=d) from exc
        cap_hits += capped
        step = np.linalg.norm(betas - params.betas)
        params = ModelParams(betas, O, delta)
        if opts.llf_trace:
            trace.append(_llf(params.manifold(), params.source_cov, params.noise, R, L))
        if callback is not None:
            callback(d, params)
        if step <= opts.beta_tol:
            stop_reason = "beta_tol"
            break
    return EcmeResult(
        params=_canonical(params),
        llf_trace=trace,
        iterations=d,
        converged=stop_reason == "beta_tol",
        stop_reason=stop_reason,
        cm_cap_hits=cap_hits,
        delta_halvings=halvings,
    )


def _grid_values(R, combos, W):
    """Log of the uniform-noise criterion for a batch of angle vectors (N x V)."""
    N, V = combos.shape
    w = np.arange(W)[None, :, None]
    A = np.exp(-1j * np.pi * w * np.cos(combos)[:, None, :])  # N x W x V
    AH = np.conj(np.swapaxes(A, 1, 2))
    gram = AH @ A
    ok = np.linalg.cond(gram) <= COND_MAX
    gram[~ok] = np.eye(V)
    Pi = A @ np.linalg.solve(gram, AH)
    I = np.eye(W)
    RPi = R[None] @ Pi
    delta_hat = (np.trace(R).real - np.trace(RPi, axis1=1, axis2=2).real) / (W - V)
    ok &= delta_hat > 0.0
    dh = np.where(ok, delta_hat, 1.0)[:, None, None]
    G = Pi @ RPi + dh * (I - Pi)
    sign, logdet = np.linalg.slogdet(G)
    ok &= sign.real > 0
    return np.where(ok, logdet, np.inf)


def grid_initializer(R_hat, V, grid_step, batch=4096):
    """Coarse-grid starting angles from the uniform-noise concentrated criterion.

    Evaluates ``|A O_hat A^H + delta_hat I|`` on all strictly increasing
    V-tuples of grid angles ``k * grid_step`` inside (0, pi) and returns the
    minimizer, the lexicographically smallest one on ties.
    """
    R = as_matrix(R_hat)
    W = R.shape[0]
    if V < 1 or W <= V:
        raise DomainError(f"need 1 <= V < W, got V={V}, W={W}")
    if grid_step <= 0:
        raise DomainError("grid_step must be positive")
    n = int(np.ceil(np.pi / grid_step)) - 1
    grid = grid_step * np.arange(1, n + 1)
    grid = grid[(grid > 0) & (grid < np.pi)]
    if grid.size < V:
        raise DomainError("grid too coarse for the number of sources")
    best_val, best = np.inf, None
    it = itertools.combinations(range(grid.size), V)
    while True:
        chunk = list(itertools.islice(it, batch))
        if not chunk:
            break
        combos = grid[np.array(chunk)]
        vals = _grid_values(R, combos, W)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best = vals[k], combos[k]
    if best is None:
        raise SingularModelError("no grid point gives a positive noise power estimate")
    return np.array(best, dtype=float)
