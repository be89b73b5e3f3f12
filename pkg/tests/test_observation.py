"""Tests for the noisy observation model."""

import numpy as np
import pytest

from nfce.channel import ArrayConfig, ScenarioSpec, sample_channel, sample_channels
from nfce.observation import observe, snr_to_noise_var
from nfce.seeding import mix_seed

CFG = ArrayConfig(num_antennas=64, wavelength=0.01)
SCEN = ScenarioSpec(far_paths=(0, 10), near_paths=(0, 10))


class TestSnrToNoiseVar:
    def test_reference_points(self):
        assert snr_to_noise_var(0.0) == pytest.approx(1.0)
        assert snr_to_noise_var(10.0) == pytest.approx(0.1)
        assert snr_to_noise_var(20.0, power=4.0) == pytest.approx(0.04)

    def test_infinite_snr_is_noiseless(self):
        assert snr_to_noise_var(np.inf) == 0.0

    def test_rejects_nonpositive_power(self):
        with pytest.raises(ValueError):
            snr_to_noise_var(10.0, power=0.0)


class TestObserve:
    def test_deterministic(self):
        chan = sample_channel(CFG, SCEN, seed=42)
        first = observe(chan, snr_db=10.0, seed=7)
        second = observe(chan, snr_db=10.0, seed=7)
        assert np.array_equal(first.x_noisy, second.x_noisy)
        assert np.array_equal(first.noise, second.noise)

    def test_noiseless_sentinel(self):
        chan = sample_channel(CFG, SCEN, seed=42)
        obs = observe(chan, snr_db=np.inf, seed=7)
        assert np.array_equal(obs.x_noisy, chan.h)
        assert not np.any(obs.noise)
        assert obs.noise_var == 0.0

    def test_reconstruction_is_exact(self):
        """The LS residual x_noisy - h recovers the stored noise bitwise;
        x_noisy - noise recovers h to rounding (exact when the channel
        component dominates, which f64 cannot guarantee for every draw)."""
        for seed in range(50):
            chan = sample_channel(CFG, SCEN, seed=seed)
            obs = observe(chan, snr_db=0.0, seed=seed + 1000)
            assert np.array_equal(obs.x_noisy - chan.h, obs.noise)
            err = np.linalg.norm(obs.x_noisy - obs.noise - chan.h)
            assert err <= 1e-13 * np.linalg.norm(chan.h)

    def test_noise_variance_calibration(self):
        chan = sample_channel(CFG, SCEN, seed=1)
        num_draws = 10_000
        energies = np.empty(num_draws)
        for i in range(num_draws):
            obs = observe(chan, snr_db=10.0, seed=mix_seed(99, i))
            energies[i] = np.vdot(obs.noise, obs.noise).real / CFG.num_antennas
        mean = energies.mean()
        assert mean == pytest.approx(0.1, rel=0.02), f"noise var {mean}"

    def test_power_knob_is_transparent(self):
        # Effective noise variance depends on SNR only, not on P.
        chan = sample_channel(CFG, SCEN, seed=3)
        obs1 = observe(chan, snr_db=15.0, seed=5, power=1.0)
        obs4 = observe(chan, snr_db=15.0, seed=5, power=4.0)
        assert obs1.noise_var == pytest.approx(obs4.noise_var, rel=1e-12)

    def test_snr_calibration_against_channel_power(self):
        # Empirical (P ||h||^2) / E||z||^2 should match 10^(snr/10).
        snr_db = 10.0
        chans = sample_channels(CFG, SCEN, base_seed=17, count=10_000)
        sig = 0.0
        noise = 0.0
        for i, chan in enumerate(chans):
            obs = observe(chan, snr_db=snr_db, seed=mix_seed(18, i))
            sig += np.vdot(chan.h, chan.h).real
            noise += np.vdot(obs.noise, obs.noise).real
        ratio = sig / noise
        assert ratio == pytest.approx(10.0 ** (snr_db / 10.0), rel=0.03), (
            f"empirical SNR {ratio}"
        )

    def test_noise_whiteness(self):
        # Real/imag parts and distinct antennas should be uncorrelated.
        chan = sample_channel(CFG, SCEN, seed=4)
        draws = 2000  # pools 2000 * 64 = 1.28e5 scalar samples
        re = np.empty((draws, CFG.num_antennas))
        im = np.empty((draws, CFG.num_antennas))
        for i in range(draws):
            obs = observe(chan, snr_db=0.0, seed=mix_seed(500, i))
            re[i] = obs.noise.real
            im[i] = obs.noise.imag
        num_pooled = draws * CFG.num_antennas
        stderr = 0.5 / np.sqrt(num_pooled)  # var of each part is 1/2 at 0 dB
        assert abs(np.mean(re * im)) < 3 * stderr
        cross = np.mean(re[:, :-1] * re[:, 1:])
        assert abs(cross) < 3 * 0.5 / np.sqrt(draws * (CFG.num_antennas - 1))
