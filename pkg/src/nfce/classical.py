"""Least-squares and linear-MMSE baseline estimators.

LS is the identity on the power-normalized observation. The MMSE filter
applies R (R + sigma^2 I)^{-1} to the observation, with R an empirical
channel covariance accumulated from clean calibration draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .observation import Observation


def ls_estimate(obs: Observation) -> np.ndarray:
    """Least-squares channel estimate: the observation itself."""
    return obs.x_noisy.copy()


@dataclass
class MmseFilter:
    """Empirical second-order statistics backing the linear-MMSE estimator."""

    covariance: np.ndarray
    num_samples: int

    def __post_init__(self):
        cov = np.asarray(self.covariance)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got shape {cov.shape}")
        self.covariance = cov

    @property
    def num_antennas(self) -> int:
        return self.covariance.shape[0]

    def estimate_batch(self, x: np.ndarray, noise_var: float) -> np.ndarray:
        """Filter rows of x (shape (N, M)) at one shared noise variance.

        Solves (R + sigma^2 I) w = x^T once for all rows; no explicit
        inverse. A singular system (possible only at noise_var == 0 with a
        rank-deficient R) propagates as numpy.linalg.LinAlgError.
        """
        x = np.atleast_2d(x)
        if x.shape[1] != self.num_antennas:
            raise ValueError(
                f"observation length {x.shape[1]} does not match "
                f"filter size {self.num_antennas}"
            )
        if noise_var < 0:
            raise ValueError(f"noise_var must be >= 0, got {noise_var}")
        system = self.covariance + noise_var * np.eye(self.num_antennas)
        return (self.covariance @ np.linalg.solve(system, x.T)).T


def fit_mmse(calibration) -> MmseFilter:
    """Accumulate R = (1/N) sum h h^H from clean calibration channels.

    Accepts ChannelRealization objects or plain length-M vectors. The
    result is symmetrized so R is Hermitian to machine precision.
    """
    vecs = [
        c.h if isinstance(c, ChannelRealization) else np.asarray(c)
        for c in calibration
    ]
    if not vecs:
        raise ValueError("calibration set must not be empty")
    stacked = np.stack(vecs)
    cov = stacked.T @ stacked.conj() / stacked.shape[0]
    cov = 0.5 * (cov + cov.conj().T)
    return MmseFilter(covariance=cov, num_samples=stacked.shape[0])


def mmse_estimate(filt: MmseFilter, obs: Observation) -> np.ndarray:
    """Linear-MMSE channel estimate R (R + sigma^2 I)^{-1} x_noisy."""
    return filt.estimate_batch(obs.x_noisy[None, :], obs.noise_var)[0]
