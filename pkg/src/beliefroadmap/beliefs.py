"""Gaussian state distributions used as roadmap node payloads."""

from dataclasses import dataclass, field

import numpy as np

from .mathutil import assert_psd, symmetrize

__all__ = ["GaussianBelief"]


@dataclass(frozen=True)
class GaussianBelief:
    """Mean vector plus positive-semidefinite covariance."""

    mean: np.ndarray
    cov: np.ndarray
    psd_tol: float = field(default=1e-8, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = symmetrize(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean of size {mean.size}"
            )
        assert_psd(cov, tol=self.psd_tol, name="belief covariance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    def lambda_max(self):
        """Largest covariance eigenvalue (spectral radius of the belief)."""
        return float(np.linalg.eigvalsh(self.cov)[-1])

    def lambda_min(self):
        return float(np.linalg.eigvalsh(self.cov)[0])
