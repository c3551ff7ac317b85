class DomainError(ValueError):
    """An argument lies outside the domain of the model (bad angle, size, variance)."""


class SingularModelError(ValueError):
    """A covariance matrix that must be positive definite is numerically singular.

    ``iteration`` is set when the failure happens inside an ECME run.
    """

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration
