"""Stochastic maximum-likelihood DOA estimation in nonuniform noise via ECME."""

from .array import manifold, steering_derivative, steering_vector
from .crlb import crlb_beta, dG_dtheta, fisher_information
from .ecme import (
    ConditionalMoments,
    EcmeOptions,
    EcmeResult,
    cm_step,
    e_step,
    grid_initializer,
    m_step,
    run_ecme,
)
from .exceptions import DomainError, SingularModelError
from .likelihood import (
    ModelParams,
    concentrated_objective,
    concentrated_source_cov,
    fast_inverse,
    llf_gradient_beta,
    log_likelihood,
    uniform_concentrated_objective,
    whiten,
)
from .model import (
    SampleCovariance,
    Scenario,
    SnapshotMatrix,
    model_covariance,
    psd_sqrt,
    sample_covariance,
    sample_snapshots,
)

__version__ = "0.1.0"
