"""Noisy pilot observation model.

With a single user and a unit pilot the received signal is y = sqrt(P) h + z
with z ~ CN(0, sigma_z^2 I). Estimators consume the power-normalized form
x_noisy = y / sqrt(P) = h + z / sqrt(P), whose effective per-component noise
variance is sigma_z^2 / P = 10^(-snr_db / 10). SNR is defined against the
ensemble channel power (gain_variance * M), not per realization, so one
noise variance serves a whole SNR level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .seeding import make_rng


@dataclass
class Observation:
    """One noisy channel observation with its ground-truth noise.

    noise stores x_noisy - h exactly as floating point evaluates it, so
    recomputing x_noisy - h always reproduces the stored noise bitwise.
    The reverse direction x_noisy - noise recovers the clean channel to
    within one rounding ulp per component; it is bitwise-exact whenever
    the channel component is at least as large as the noise component,
    but no f64 representation can make it exact for every draw.
    """

    x_noisy: np.ndarray
    noise: np.ndarray
    snr_db: float
    noise_var: float
    source_seed: int


def snr_to_noise_var(snr_db: float, power: float = 1.0) -> float:
    """Receiver noise variance sigma_z^2 that realizes snr_db at unit
    gain variance: P * 10^(-snr_db / 10). snr_db = inf maps to 0."""
    if not power > 0:
        raise ValueError(f"transmit power must be > 0, got {power}")
    return power * 10.0 ** (-snr_db / 10.0)


def observe(
    chan: ChannelRealization, snr_db: float, seed: int, power: float = 1.0
) -> Observation:
    """Draw one noisy observation of a clean channel.

    Deterministic given seed. The effective noise z / sqrt(P) is drawn
    directly at variance sigma_z^2 / P, which is equivalent to drawing z
    at the receiver and normalizing.
    """
    h = chan.h
    noise_var = snr_to_noise_var(snr_db, power) / power
    if noise_var == 0.0:
        return Observation(
            x_noisy=h.copy(),
            noise=np.zeros_like(h),
            snr_db=snr_db,
            noise_var=0.0,
            source_seed=seed,
        )
    rng = make_rng(seed)
    scale = np.sqrt(noise_var / 2.0)
    z = scale * (rng.standard_normal(h.size) + 1j * rng.standard_normal(h.size))
    x_noisy = h + z
    # Store the round-tripped difference so x_noisy - noise == h bitwise.
    return Observation(
        x_noisy=x_noisy,
        noise=x_noisy - h,
        snr_db=snr_db,
        noise_var=noise_var,
        source_seed=seed,
    )
