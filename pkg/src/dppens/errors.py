"""Exception types shared across the package.

The CLI maps these onto its exit codes, so every failure that can reach a
user is one of the classes below.
"""

import numpy as np


class DataError(ValueError):
    """Malformed or non-finite input data."""


class PositiveDefinitenessError(np.linalg.LinAlgError):
    """Raised when a kernel matrix is not numerically positive definite."""

    def __init__(self, lambda_min, tolerance):
        self.lambda_min = float(lambda_min)
        self.tolerance = float(tolerance)
        super().__init__(
            f"smallest eigenvalue {self.lambda_min:.3e} is not above the "
            f"positive-definiteness tolerance {self.tolerance:.3e}; "
            "pass a jitter to regularize explicitly"
        )


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization of a landmark block failed."""

    def __init__(self, size, pivot):
        self.size = int(size)
        self.pivot = int(pivot)
        super().__init__(
            f"Cholesky factorization of a {self.size}x{self.size} block failed "
            f"at pivot {self.pivot}"
        )


class SamplingError(RuntimeError):
    """A sampler hit a numerically degenerate state."""
