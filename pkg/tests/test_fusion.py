import math

import numpy as np
import pytest

from wsnfusion.errors import ConfigurationError
from wsnfusion.fusion import (
    FusionInput,
    amplitude_log_scores,
    coherent_log_scores,
    decide,
    fuse_coherent_psk,
    fuse_noncoherent_amplitude_fsk,
    fuse_noncoherent_statistics_fsk,
    statistics_log_scores,
)
from wsnfusion.phy import (
    AMPLITUDE_ONLY,
    COHERENT_FULL,
    FSK,
    PSK,
    STATISTICS_ONLY,
    ChannelEstimate,
    modulate_psk,
)

SN2 = 1e-3


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _random_confusions(rng, n, m):
    raw = rng.uniform(0.05, 1.0, (n, m, m)) + 3 * np.eye(m) * rng.uniform(0, 1, (n, 1, 1))
    return raw / raw.sum(axis=1, keepdims=True)


def _coherent_batch(rng, t, n, m):
    """Random transmissions with MMSE-like estimates; returns kernel arguments."""
    conf = _random_confusions(rng, n, m)
    p_d = rng.uniform(0.1, 3.0, n)
    err = rng.uniform(0, 2e-3, n)
    h_hat = _cn(rng, (t, n))
    hyp = rng.integers(0, m, (t, n))
    sym = np.exp(2j * np.pi * hyp / m)
    y = np.sqrt(p_d) * (h_hat + _cn(rng, (t, n), err)) * sym + _cn(rng, (t, n), SN2)
    priors = rng.dirichlet(np.ones(m))
    return y, h_hat, err, conf, p_d, priors


# Independent binary-form oracles (1-based algebra written out by hand).

def _binary_coherent(y, h_hat, err, conf, p_d, priors):
    sigma_w2 = p_d * err + SN2
    z = 4 * np.sqrt(p_d) * np.real(y * np.conj(h_hat)) / sigma_w2
    p11, p21, p12, p22 = conf[:, 0, 0], conf[:, 1, 0], conf[:, 0, 1], conf[:, 1, 1]
    llr = np.sum(np.logaddexp(np.log(p22), np.log(p12) + z)
                 - np.logaddexp(np.log(p21), np.log(p11) + z), axis=-1)
    return (llr > math.log(priors[0] / priors[1])).astype(int)


def _binary_noncoherent(log_f1, log_f2, conf, priors):
    # Theta_2 / Theta_1 with F-weighted mixtures over the two tones
    p11, p22 = conf[:, 0, 0], conf[:, 1, 1]
    num = np.logaddexp(np.log(1 - p22) + log_f1, np.log(p22) + log_f2)
    den = np.logaddexp(np.log(p11) + log_f1, np.log(1 - p11) + log_f2)
    return (np.sum(num - den, axis=-1) > math.log(priors[0] / priors[1])).astype(int)


def _log_i0(x):
    from scipy.special import i0e
    return np.log(i0e(x)) + x


class TestCoherent:
    def test_noiseless_perfect_chain(self):
        y = np.array([math.sqrt(1.0) * 1.0 * modulate_psk(1, 2)])
        inp = FusionInput(y, ChannelEstimate(COHERENT_FULL, np.array([1.0 + 0j]), np.zeros(1)),
                          np.eye(2)[None], [1.0], [0.5, 0.5], 1e-9, PSK)
        d, scores = fuse_coherent_psk(inp)
        assert d == 1 and scores.shape == (2,)

    def test_binary_form_agreement(self):
        rng = np.random.default_rng(1)
        for n in (1, 3, 7):
            y, h_hat, err, conf, p_d, priors = _coherent_batch(rng, 10_000 // 3, n, 2)
            got = decide(coherent_log_scores(y, h_hat, err, conf, p_d, SN2, priors))
            np.testing.assert_array_equal(got, _binary_coherent(y, h_hat, err, conf, p_d, priors))

    def test_noninformative_picks_prior(self):
        rng = np.random.default_rng(2)
        y, h_hat, err, _, p_d, _ = _coherent_batch(rng, 500, 4, 4)
        conf = np.full((4, 4, 4), 0.25)
        priors = np.array([0.2, 0.1, 0.4, 0.3])
        np.testing.assert_array_equal(decide(coherent_log_scores(y, h_hat, err, conf, p_d, SN2, priors)), 2)

    def test_no_overflow_at_high_snr(self):
        rng = np.random.default_rng(3)
        y, h_hat, err, conf, p_d, priors = _coherent_batch(rng, 100, 5, 4)
        scores = coherent_log_scores(1e6 * y, 1e3 * h_hat, err, conf, p_d, 1e-12, priors)
        assert np.all(np.isfinite(scores))

    def test_majority_weighted_noiseless(self):
        # perfect CSI, identity sensors, 2 of 3 send symbol 2
        h = np.array([1.0, 0.5, 2.0]) + 0j
        y = h * np.array([modulate_psk(2, 4), modulate_psk(2, 4), modulate_psk(0, 4)])
        scores = coherent_log_scores(y[None], h, 0.0, np.tile(np.eye(4) * 0.97 + 0.0075, (3, 1, 1)),
                                     np.ones(3), 1e-6, np.full(4, 0.25))
        assert decide(scores)[0] == 2


class TestAmplitude:
    @staticmethod
    def _batch(rng, t, n, m):
        conf = _random_confusions(rng, n, m)
        p_d = rng.uniform(0.1, 3.0, n)
        err = rng.uniform(0, 0.2, n)
        alpha_hat = np.abs(_cn(rng, (t, n)))
        hyp = rng.integers(0, m, (t, n))
        h = _cn(rng, (t, n))
        y = (np.sqrt(p_d) * h)[..., None] * np.eye(m)[hyp] + _cn(rng, (t, n, m), 0.05)
        priors = rng.dirichlet(np.ones(m))
        return y, alpha_hat, err, conf, p_d, priors

    def test_binary_form_agreement(self):
        rng = np.random.default_rng(4)
        y, a, err, conf, p_d, priors = self._batch(rng, 10_000, 4, 2)
        nv = 0.05
        sigma_w2 = p_d * err + nv

        def log_f(mag):
            return p_d * err * mag**2 / (nv * sigma_w2) + _log_i0(2 * np.sqrt(p_d) * a * mag / sigma_w2)

        want = _binary_noncoherent(log_f(np.abs(y[..., 0])), log_f(np.abs(y[..., 1])), conf, priors)
        got = decide(amplitude_log_scores(y, a, err, conf, p_d, nv, priors))
        np.testing.assert_array_equal(got, want)

    def test_phase_invariance(self):
        rng = np.random.default_rng(5)
        y, a, err, conf, p_d, priors = self._batch(rng, 1000, 3, 4)
        base = amplitude_log_scores(y, a, err, conf, p_d, 0.05, priors)
        rot = y * np.exp(1j * rng.uniform(0, 2 * np.pi, y.shape))
        again = amplitude_log_scores(rot, a, err, conf, p_d, 0.05, priors)
        np.testing.assert_allclose(again, base, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(decide(again), decide(base))

    def test_single_sensor_strongest_tone(self):
        rng = np.random.default_rng(6)
        t, m = 10_000, 4
        h = _cn(rng, (t, 1))
        hyp = rng.integers(0, m, (t, 1))
        y = (100.0 * h)[..., None] * np.eye(m)[hyp] + _cn(rng, (t, 1, m), SN2)
        got = decide(amplitude_log_scores(y, np.abs(h), 1e-4, np.eye(m)[None], 1e4, SN2, np.full(m, 0.25)))
        strongest = np.argmax(np.abs(y[:, 0, :]), axis=-1)
        assert np.mean(got == strongest) >= 0.99


class TestStatistics:
    @staticmethod
    def _batch(rng, t, n, m):
        conf = _random_confusions(rng, n, m)
        p_d = rng.uniform(0.5, 3.0, n)
        s2 = rng.uniform(1e-3, 4e-3, n)
        hyp = rng.integers(0, m, (t, n))
        y = (np.sqrt(p_d) * _cn(rng, (t, n)) * np.sqrt(s2))[..., None] * np.eye(m)[hyp]
        y = y + _cn(rng, (t, n, m), SN2)
        return y, s2, conf, p_d, rng.dirichlet(np.ones(m))

    def test_binary_form_agreement(self):
        rng = np.random.default_rng(7)
        y, s2, conf, p_d, priors = self._batch(rng, 10_000, 5, 2)
        coef = p_d * s2 / (SN2 * (SN2 + p_d * s2))
        want = _binary_noncoherent(coef * np.abs(y[..., 0]) ** 2, coef * np.abs(y[..., 1]) ** 2, conf, priors)
        got = decide(statistics_log_scores(y, s2, conf, p_d, SN2, priors))
        np.testing.assert_array_equal(got, want)

    def test_zero_power_picks_prior(self):
        rng = np.random.default_rng(8)
        y, s2, conf, _, _ = self._batch(rng, 200, 3, 4)
        priors = np.array([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_array_equal(decide(statistics_log_scores(y, s2, conf, np.zeros(3), SN2, priors)), 3)

    def test_increasing_in_magnitude(self):
        # one sensor, identity: score of tone 0 grows with |y_0|
        mags = np.linspace(0, 1, 20)
        y = np.zeros((20, 1, 2), complex)
        y[:, 0, 0] = mags
        s = statistics_log_scores(y, [1e-3], np.eye(2)[None], [1.0], SN2, [0.5, 0.5])
        assert np.all(np.diff(s[:, 0]) > 0)

    def test_training_rejected(self):
        inp = FusionInput(np.zeros((2, 2)), ChannelEstimate(STATISTICS_ONLY), np.tile(np.eye(2), (2, 1, 1)),
                          [1.0, 1.0], [0.5, 0.5], SN2, FSK, channel_variances=[1e-3, 1e-3],
                          training_powers=[0.0, 0.1])
        with pytest.raises(ConfigurationError):
            fuse_noncoherent_statistics_fsk(inp)


class TestInvariants:
    def _inputs(self, rng):
        n, m = 6, 4
        y, h_hat, err, conf, p_d, priors = _coherent_batch(rng, 1, n, m)
        return y[0], h_hat[0], err, conf, p_d, priors

    def test_prior_scaling(self):
        rng = np.random.default_rng(9)
        y, h_hat, err, conf, p_d, priors = _coherent_batch(rng, 2000, 5, 4)
        a = decide(coherent_log_scores(y, h_hat, err, conf, p_d, SN2, priors))
        for c in (0.01, 7.0, 1e5):
            b = decide(coherent_log_scores(y, h_hat, err, conf, p_d, SN2, priors * c))
            np.testing.assert_array_equal(a, b)

    def test_permutation_bit_exact(self):
        rng = np.random.default_rng(10)
        y, h_hat, err, conf, p_d, priors = _coherent_batch(rng, 300, 8, 4)
        base = coherent_log_scores(y, h_hat, err, conf, p_d, SN2, priors)
        for _ in range(10):
            perm = rng.permutation(8)
            again = coherent_log_scores(y[:, perm], h_hat[:, perm], err[perm], conf[perm], p_d[perm], SN2, priors)
            assert np.array_equal(base, again)

    def test_permutation_noncoherent(self):
        rng = np.random.default_rng(11)
        y, a, err, conf, p_d, priors = TestAmplitude._batch(rng, 300, 6, 3)
        base = amplitude_log_scores(y, a, err, conf, p_d, 0.05, priors)
        perm = rng.permutation(6)
        again = amplitude_log_scores(y[:, perm], a[:, perm], err[perm], conf[perm], p_d[perm], 0.05, priors)
        assert np.array_equal(base, again)

    def test_decision_matches_scores(self):
        rng = np.random.default_rng(12)
        y, h_hat, err, conf, p_d, priors = self._inputs(rng)
        inp = FusionInput(y, ChannelEstimate(COHERENT_FULL, h_hat, err), conf, p_d, priors, SN2, PSK)
        d, scores = fuse_coherent_psk(inp)
        assert d == int(np.argmax(scores))

    def test_ties_to_lowest(self):
        assert decide(np.array([1.0, 3.0, 3.0])) == 1
        assert decide(np.zeros(4)) == 0

    def test_empty_sensor_list(self):
        with pytest.raises(ConfigurationError):
            FusionInput(np.zeros(0, complex), ChannelEstimate(COHERENT_FULL, np.zeros(0), np.zeros(0)),
                        np.zeros((0, 2, 2)), np.zeros(0), [0.5, 0.5], SN2, PSK)

    def test_kind_mismatch(self):
        inp = FusionInput(np.zeros((1, 2)), ChannelEstimate(STATISTICS_ONLY), np.eye(2)[None],
                          [1.0], [0.5, 0.5], SN2, FSK, channel_variances=[1e-3])
        with pytest.raises(ConfigurationError):
            fuse_coherent_psk(inp)
        with pytest.raises(ConfigurationError):
            fuse_noncoherent_amplitude_fsk(inp)
        d, _ = fuse_noncoherent_statistics_fsk(inp)
        assert d == 0
