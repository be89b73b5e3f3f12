"""Tests for the LS and linear-MMSE baseline estimators."""

import numpy as np
import pytest

from nfce.channel import ArrayConfig, ScenarioSpec, sample_channel, sample_channels
from nfce.classical import fit_mmse, ls_estimate, mmse_estimate
from nfce.observation import Observation, observe
from nfce.seeding import mix_seed

CFG = ArrayConfig(num_antennas=64, wavelength=0.01)
SCEN = ScenarioSpec(far_paths=(0, 10), near_paths=(0, 10))


def nmse_ratio(clean, estimates):
    num = sum(np.vdot(e - h, e - h).real for h, e in zip(clean, estimates))
    den = sum(np.vdot(h, h).real for h in clean)
    return num / den


class TestLsEstimate:
    def test_noiseless_recovers_channel(self):
        chan = sample_channel(CFG, SCEN, seed=1)
        obs = observe(chan, snr_db=np.inf, seed=2)
        assert np.array_equal(ls_estimate(obs), chan.h)

    def test_residual_equals_noise(self):
        chan = sample_channel(CFG, SCEN, seed=3)
        obs = observe(chan, snr_db=5.0, seed=4)
        assert np.array_equal(ls_estimate(obs) - chan.h, obs.noise)

    def test_returns_copy(self):
        chan = sample_channel(CFG, SCEN, seed=5)
        obs = observe(chan, snr_db=5.0, seed=6)
        est = ls_estimate(obs)
        est[0] = 0
        assert obs.x_noisy[0] != 0

    @pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
    def test_nmse_matches_inverse_snr(self, snr_db):
        chans = sample_channels(CFG, SCEN, base_seed=100, count=10_000)
        ests = [
            ls_estimate(observe(c, snr_db=snr_db, seed=mix_seed(101, i)))
            for i, c in enumerate(chans)
        ]
        got = nmse_ratio([c.h for c in chans], ests)
        expected = 10.0 ** (-snr_db / 10.0)
        assert got == pytest.approx(expected, rel=0.02), (
            f"LS NMSE at {snr_db} dB: {got}, expected {expected}"
        )


class TestFitMmse:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            fit_mmse([])

    def test_rank_one(self):
        basis = np.zeros(4, dtype=complex)
        basis[0] = 2.0 - 1.0j
        filt = fit_mmse([basis, basis, basis])
        expected = np.zeros((4, 4), dtype=complex)
        expected[0, 0] = abs(basis[0]) ** 2
        np.testing.assert_allclose(filt.covariance, expected, atol=1e-14)

    def test_hermitian(self):
        chans = sample_channels(CFG, SCEN, base_seed=7, count=200)
        filt = fit_mmse(chans)
        asym = np.linalg.norm(filt.covariance - filt.covariance.conj().T)
        assert asym < 1e-12

    def test_trace_matches_channel_energy(self):
        scen = ScenarioSpec(far_paths=3)
        chans = sample_channels(CFG, scen, base_seed=8, count=20_000)
        filt = fit_mmse(chans)
        trace = np.trace(filt.covariance).real
        assert trace == pytest.approx(64.0, rel=0.02), f"trace {trace}"


@pytest.fixture(scope="module")
def far_filter():
    scen = ScenarioSpec(far_paths=3)
    return scen, fit_mmse(sample_channels(CFG, scen, base_seed=11, count=10_000))


class TestMmseEstimate:
    def test_zero_noise_full_rank_is_identity(self, far_filter):
        scen, filt = far_filter
        chan = sample_channel(CFG, scen, seed=12)
        obs = observe(chan, snr_db=np.inf, seed=13)
        np.testing.assert_allclose(mmse_estimate(filt, obs), obs.x_noisy, rtol=1e-8)

    def test_huge_noise_shrinks_to_zero(self, far_filter):
        scen, filt = far_filter
        chan = sample_channel(CFG, scen, seed=14)
        obs = observe(chan, snr_db=5.0, seed=15)
        obs = Observation(
            x_noisy=obs.x_noisy,
            noise=obs.noise,
            snr_db=obs.snr_db,
            noise_var=1e12,
            source_seed=obs.source_seed,
        )
        est = mmse_estimate(filt, obs)
        assert np.linalg.norm(est) < 1e-9 * np.linalg.norm(obs.x_noisy)

    def test_linearity(self, far_filter):
        scen, filt = far_filter
        rng = np.random.default_rng(21)
        x1 = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        x2 = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        alpha, beta = 1.7 - 0.3j, -0.6 + 2.1j

        def est(x):
            return filt.estimate_batch(x[None, :], 0.1)[0]

        lhs = est(alpha * x1 + beta * x2)
        rhs = alpha * est(x1) + beta * est(x2)
        assert np.linalg.norm(lhs - rhs) < 1e-9 * np.linalg.norm(rhs)

    def test_batch_matches_single(self, far_filter):
        scen, filt = far_filter
        chans = sample_channels(CFG, scen, base_seed=30, count=8)
        obs = [observe(c, snr_db=10.0, seed=mix_seed(31, i)) for i, c in enumerate(chans)]
        batch = filt.estimate_batch(np.stack([o.x_noisy for o in obs]), obs[0].noise_var)
        for row, o in zip(batch, obs):
            np.testing.assert_allclose(row, mmse_estimate(filt, o), rtol=1e-12)

    def test_beats_ls_at_matched_scenario(self, far_filter):
        """On in-distribution data at 10 dB, MMSE must strictly beat LS."""
        scen, filt = far_filter
        chans = sample_channels(CFG, scen, base_seed=40, count=10_000)
        x = np.stack(
            [observe(c, snr_db=10.0, seed=mix_seed(41, i)).x_noisy for i, c in enumerate(chans)]
        )
        clean = [c.h for c in chans]
        noise_var = 10.0 ** (-1.0)
        mmse_nmse = nmse_ratio(clean, filt.estimate_batch(x, noise_var))
        ls_nmse = nmse_ratio(clean, x)
        assert mmse_nmse < ls_nmse, f"MMSE {mmse_nmse} vs LS {ls_nmse}"
