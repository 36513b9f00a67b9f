"""J-divergence objectives for power allocation.

Conditional on the estimated gains, the fusion-center observation under each
hypothesis is approximated by a Gaussian with diagonal covariance, and the
weighted pairwise J-divergence

    J = 1/2 sum_i sum_j pi_i pi_j J_ij

serves as the detection-performance surrogate. Every objective here is a sum
of independent per-sensor terms; the ``*_sensor_j`` helpers return those terms
batched over leading axes so the allocation solvers can evaluate many
candidate plans at once.
"""

from dataclasses import dataclass
import logging

import numpy as np

from .errors import ConfigurationError, DomainError
from .phy import FSK, PSK, amplitude_error_variance
from .specfun import d_func, one_minus_d

__all__ = [
    "HypothesisMoments",
    "DivergenceReport",
    "CONDITIONAL_COHERENT",
    "CONDITIONAL_NONCOHERENT",
    "AVERAGE_COHERENT",
    "TOTAL_STATISTICS",
    "gaussian_j",
    "psk_moments",
    "fsk_moments",
    "conditional_j",
    "conditional_j_from_powers",
    "average_j_coherent",
    "total_j_statistics",
    "psk_symbol_stats",
    "psk_pair_j",
    "psk_sensor_j",
    "fsk_pair_j",
    "fsk_sensor_j",
    "average_pair_j",
    "average_sensor_j",
    "statistics_pair_j",
    "statistics_sensor_j",
    "x_parameter",
]

log = logging.getLogger(__name__)

CONDITIONAL_COHERENT = "conditional_coherent"
CONDITIONAL_NONCOHERENT = "conditional_noncoherent"
AVERAGE_COHERENT = "average_coherent"
TOTAL_STATISTICS = "total_statistics"

# Relative agreement demanded between the closed-form and trace-form paths.
CLOSED_FORM_TOL = 1e-8


@dataclass(frozen=True)
class HypothesisMoments:
    """Mean vector and diagonal covariance under one hypothesis."""

    mean: np.ndarray
    covariance_diag: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=complex))
        cov = np.atleast_1d(np.asarray(self.covariance_diag, dtype=float))
        if mean.shape != cov.shape or mean.ndim != 1:
            raise ConfigurationError("mean and covariance lengths differ")
        if np.any(~(cov > 0)):
            raise ConfigurationError("covariance entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance_diag", cov)


@dataclass(frozen=True)
class DivergenceReport:
    total: float
    pairwise: np.ndarray
    kind: str


def gaussian_j(m1, m2):
    """J-divergence between two Gaussians with diagonal covariances."""
    if m1.mean.shape != m2.mean.shape:
        raise ConfigurationError("moment vectors differ in length")
    v1, v2 = m1.covariance_diag, m2.covariance_diag
    d2 = np.abs(m1.mean - m2.mean) ** 2
    return float(0.5 * np.sum(v1 / v2 + v2 / v1 + (1.0 / v1 + 1.0 / v2) * d2) - v1.size)


def _weighted_total(pairwise, priors):
    pi = np.asarray(priors, dtype=float)
    return 0.5 * np.einsum("i,j,...ij->...", pi, pi, pairwise)


def _confusions(confusions):
    conf = np.asarray(confusions, dtype=float)
    if conf.ndim == 2:
        conf = conf[None]
    if conf.ndim != 3 or conf.shape[1] != conf.shape[2]:
        raise ConfigurationError("confusions must be an (N, M, M) stack")
    return conf


# ---------------------------------------------------------------------------
# Coherent PSK

def psk_symbol_stats(confusions):
    """``beta[k, i]`` and ``B[k, i]`` of each sensor's transmitted symbol.

    ``beta`` is the mean symbol under hypothesis ``i`` and ``B = 1 - |beta|^2``
    its variance (unit-modulus constellation).
    """
    conf = _confusions(confusions)
    m = conf.shape[1]
    sym = np.exp(2j * np.pi * np.arange(m) / m)
    beta = np.einsum("l,kli->ki", sym, conf)
    b = np.clip(1.0 - np.abs(beta) ** 2, 0.0, None)
    return beta, b


def psk_moments(confusions, hypothesis, g_hat, p_d, sigma_w2):
    beta, b = psk_symbol_stats(confusions)
    gp = np.asarray(g_hat, dtype=float) * np.asarray(p_d, dtype=float)
    return HypothesisMoments(np.sqrt(gp) * beta[:, hypothesis],
                             np.asarray(sigma_w2, dtype=float) + gp * b[:, hypothesis])


def _psk_gammas(confusions):
    beta, b = psk_symbol_stats(confusions)
    d2 = np.abs(beta[:, :, None] - beta[:, None, :]) ** 2
    # gamma[k, i, j] = B_i(k) + |beta_i(k) - beta_j(k)|^2
    return b[:, :, None] + d2, b


def psk_pair_j(confusions, q):
    """Closed-form ``J_ij`` per sensor, shape ``(..., N, M, M)``.

    ``q = g_hat * P_d / sigma_w2`` is the effective per-sensor SNR, shape
    ``(..., N)``.
    """
    gam, b = _psk_gammas(confusions)
    q = np.asarray(q, dtype=float)[..., None, None]
    fwd = (q * gam + 1.0) / (q * b[:, None, :] + 1.0)
    return 0.5 * (fwd + np.swapaxes(fwd, -1, -2)) - 1.0


def psk_sensor_j(confusions, q, priors):
    """Per-sensor contributions to the weighted conditional J, ``(..., N)``."""
    return _weighted_total(psk_pair_j(confusions, q), priors)


# ---------------------------------------------------------------------------
# Non-coherent FSK

def fsk_moments(confusions, hypothesis, g_hat, p_d, amp_error_variance, noise_variance):
    """Sensor-major, tone-minor moments of the FSK outputs.

    Tone ``l`` of sensor ``k`` carries the symbol with probability
    ``p = p_k[l, i]``, so its mean is ``sqrt(g P) p`` and its variance
    ``noise + p P var_err + g P p (1 - p)``, the exact mixture moments given the
    estimated amplitude. The common channel phase is dropped.
    """
    conf = _confusions(confusions)
    p = conf[:, :, hypothesis]
    gp = (np.asarray(g_hat, dtype=float) * np.asarray(p_d, dtype=float))[:, None]
    pe = (np.asarray(p_d, dtype=float) * np.asarray(amp_error_variance, dtype=float))[:, None]
    mean = np.sqrt(gp) * p
    var = noise_variance + p * pe + gp * p * (1.0 - p)
    return HypothesisMoments(mean.ravel(), var.ravel())


def fsk_pair_j(confusions, gp, pe, noise_variance):
    """Per-sensor ``J_ij`` for FSK, shape ``(..., N, M, M)``.

    ``gp = g_hat * P_d`` and ``pe = P_d * var_err`` are ``(..., N)``.
    """
    conf = _confusions(confusions)
    p = np.swapaxes(conf, 1, 2)  # p[k, i, l] = P(tone l | hypothesis i)
    gp = np.asarray(gp, dtype=float)[..., None, None]
    pe = np.asarray(pe, dtype=float)[..., None, None]
    v = noise_variance + p * pe + gp * p * (1.0 - p)  # (..., N, M, L)
    vi, vj = v[..., :, None, :], v[..., None, :, :]
    d2 = gp[..., None] * (p[:, :, None, :] - p[:, None, :, :]) ** 2
    terms = 0.5 * ((vi + d2) / vj + (vj + d2) / vi) - 1.0
    return terms.sum(axis=-1)


def fsk_sensor_j(confusions, gp, pe, noise_variance, priors):
    return _weighted_total(fsk_pair_j(confusions, gp, pe, noise_variance), priors)


# ---------------------------------------------------------------------------
# Conditional J (given the estimated gains)

def _report(pair_per_sensor, priors, kind):
    pairwise = pair_per_sensor.sum(axis=0)
    np.fill_diagonal(pairwise, 0.0)
    return DivergenceReport(float(_weighted_total(pairwise, priors)), pairwise, kind)


def conditional_j(confusions, g_hat, plan, error_variances, priors, modulation,
                  noise_variance):
    """Weighted J given the gains ``g_hat`` (``|h_hat|^2`` or ``alpha_hat^2``).

    Parameters
    ----------
    confusions : array_like, (N, M, M)
    g_hat : array_like, (N,)
    plan : PowerPlan
        Only the data powers enter directly; training enters through
        ``error_variances``.
    error_variances : array_like, (N,)
        Channel-estimate error variance for PSK, amplitude error variance
        for FSK.
    priors : array_like, (M,)
    modulation : {"psk", "fsk"}
    noise_variance : float
    """
    conf = _confusions(confusions)
    n, m = conf.shape[:2]
    g_hat = np.asarray(g_hat, dtype=float)
    err = np.asarray(error_variances, dtype=float)
    p_d = plan.data_powers
    if g_hat.shape != (n,) or err.shape != (n,) or p_d.shape != (n,):
        raise ConfigurationError("per-sensor inputs must all have length N")
    if np.any(g_hat < 0):
        raise DomainError("estimated gains must be nonnegative")
    if modulation == PSK:
        sigma_w2 = p_d * err + noise_variance
        pair = psk_pair_j(conf, g_hat * p_d / sigma_w2)
        report = _report(pair, priors, CONDITIONAL_COHERENT)
        _check_trace_form(report.pairwise, conf, g_hat, p_d, sigma_w2)
        return report
    if modulation == FSK:
        pair = fsk_pair_j(conf, g_hat * p_d, p_d * err, noise_variance)
        return _report(pair, priors, CONDITIONAL_NONCOHERENT)
    raise ConfigurationError(f"unknown modulation {modulation!r}")


def _check_trace_form(pairwise, conf, g_hat, p_d, sigma_w2):
    m = conf.shape[1]
    moments = [psk_moments(conf, i, g_hat, p_d, sigma_w2) for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            ref = gaussian_j(moments[i], moments[j])
            if abs(ref - pairwise[i, j]) > CLOSED_FORM_TOL * max(1.0, abs(ref)):
                raise ArithmeticError(
                    f"closed-form J_{i}{j}={pairwise[i, j]!r} disagrees with trace form {ref!r}")


def conditional_j_from_powers(scenario, confusions, g_hat, plan, modulation):
    """:func:`conditional_j` with error variances implied by the training powers."""
    s2 = scenario.channel_variances
    nv = scenario.noise_variance
    p_t = plan.training_powers
    if modulation == PSK:
        err = s2 / (1.0 + s2 * p_t / nv)
    else:
        err = np.array([amplitude_error_variance(pt / nv, sigma_h2=sk) for pt, sk in zip(p_t, s2)])
    return conditional_j(confusions, g_hat, plan, err, scenario.priors, modulation, nv)


# ---------------------------------------------------------------------------
# Average J over the estimated gains (coherent)

def x_parameter(channel_variances, powers, r, noise_variance):
    """``x_k = (1/s + 1/s^2) / (r (1 - r))`` with ``s = var_h P / noise``.

    Equals ``sigma_w2 / (E[g_hat] P_d)``; the estimated gain divided by its
    mean is Exp(1), so ``q = t / x`` with ``t ~ Exp(1)``.
    """
    s = np.asarray(channel_variances, dtype=float) * np.asarray(powers, dtype=float) / noise_variance
    r = np.asarray(r, dtype=float)
    return (1.0 / s + 1.0 / s ** 2) / (r * (1.0 - r))


def _expected_ratio(gam, b, x):
    """E[(q gam + 1) / (q b + 1)] for ``q = t / x``, ``t ~ Exp(1)``.

    Written as ``D(y) + (gam / x) y (1 - D(y))`` with ``y = x / b``; the
    ``b = 0`` limit is ``1 + gam / x``.
    """
    with np.errstate(divide="ignore"):
        y = np.where(b > 0, x / np.where(b > 0, b, 1.0), np.inf)
    finite = np.isfinite(y)
    ysafe = np.where(finite, y, 1.0)
    d = np.where(finite, d_func(ysafe), 1.0)
    g = np.where(finite, ysafe * one_minus_d(ysafe), 1.0)
    return d + gam / x * g


def average_pair_j(confusions, x):
    """Per-sensor averaged ``J_ij``, shape ``(..., N, M, M)``; ``x`` is ``(..., N)``."""
    gam, b = _psk_gammas(confusions)
    x = np.asarray(x, dtype=float)[..., None, None]
    # fwd[..., k, i, j] = E[(q gamma_ij + 1) / (q B_j + 1)]
    fwd = _expected_ratio(gam, np.broadcast_to(b[:, None, :], gam.shape), x)
    out = 0.5 * (fwd + np.swapaxes(fwd, -1, -2)) - 1.0
    idx = np.arange(out.shape[-1])
    out[..., idx, idx] = 0.0
    return out


def average_sensor_j(confusions, x, priors):
    return _weighted_total(average_pair_j(confusions, x), priors)


def _check_negative_slope(confusions):
    gam, b = _psk_gammas(confusions)
    bj = np.broadcast_to(b[:, None, :], gam.shape)
    off = ~np.eye(gam.shape[1], dtype=bool)
    bad = off & (bj > 0) & (gam < bj)
    if np.any(bad):
        log.debug("1 - gamma/B < 0 fails for %d sensor-pair terms", int(bad.sum()))


def average_j_coherent(scenario, plan, confusions, priors=None):
    """Weighted J averaged over the exponential estimated gains (closed form)."""
    conf = _confusions(confusions)
    priors = scenario.priors if priors is None else priors
    p = plan.sensor_powers
    if p.shape != (conf.shape[0],):
        raise ConfigurationError("plan and confusions differ in sensor count")
    active = p > 0
    r = plan.data_fractions
    if np.any(active & ((r <= 0) | (r >= 1))):
        raise DomainError("average J needs 0 < r_k < 1 for every powered sensor")
    _check_negative_slope(conf[active])
    pair = np.zeros(conf.shape)
    if np.any(active):
        x = x_parameter(scenario.channel_variances[active], p[active], r[active],
                        scenario.noise_variance)
        pair[active] = average_pair_j(conf[active], x)
    return _report(pair, priors, AVERAGE_COHERENT)


# ---------------------------------------------------------------------------
# Total J with channel statistics only (no training)

def statistics_pair_j(confusions, snr):
    """Per-sensor ``J_ij`` with zero-mean tones; ``snr = P_d var_h / noise``."""
    conf = _confusions(confusions)
    p = np.swapaxes(conf, 1, 2)  # [k, i, l]
    snr = np.asarray(snr, dtype=float)[..., None, None]
    v = 1.0 + p * snr
    vi, vj = v[..., :, None, :], v[..., None, :, :]
    return (0.5 * (vi / vj + vj / vi) - 1.0).sum(axis=-1)


def statistics_sensor_j(confusions, snr, priors):
    return _weighted_total(statistics_pair_j(confusions, snr), priors)


def total_j_statistics(scenario, data_powers, confusions, priors=None, training_powers=None):
    if training_powers is not None and np.any(np.asarray(training_powers) != 0):
        raise ConfigurationError("statistics-only objective assumes zero training power")
    priors = scenario.priors if priors is None else priors
    snr = np.asarray(data_powers, dtype=float) * scenario.channel_variances / scenario.noise_variance
    return _report(statistics_pair_j(confusions, snr), priors, TOTAL_STATISTICS)
