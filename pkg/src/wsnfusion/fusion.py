"""Bayesian MAP fusion of the sensors' channel outputs.

Each rule scores hypothesis ``m`` as

    log pi_m + sum_k log sum_i p_k[i, m] exp(L_k[i])

where ``L_k[i]`` is the rule's log-likelihood that sensor ``k`` sent the
symbol of decision ``i`` (terms common to all ``i`` dropped). Everything is
evaluated in the log domain. Per-sensor contributions are sorted before they
are summed, which makes the scores bit-identical under any reordering of the
sensors. Ties in the argmax go to the lowest hypothesis index.

The ``*_log_scores`` functions are the batched kernels: observations carry a
leading trial axis ``(T, N)`` or ``(T, N, M)`` and the other per-sensor
arguments broadcast against ``(T, N)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError
from .phy import AMPLITUDE_ONLY, COHERENT_FULL, FSK, PSK, STATISTICS_ONLY, ChannelEstimate
from .specfun import log_bessel_i0

__all__ = [
    "FusionInput",
    "fuse_coherent_psk",
    "fuse_noncoherent_amplitude_fsk",
    "fuse_noncoherent_statistics_fsk",
    "coherent_log_scores",
    "amplitude_log_scores",
    "statistics_log_scores",
    "decide",
    "require_zero_training",
]


@dataclass(frozen=True)
class FusionInput:
    """Everything the fusion center sees for one trial.

    Attributes
    ----------
    data : ndarray
        Data-symbol channel outputs, ``(N,)`` for PSK or ``(N, M)`` for FSK.
    estimate : ChannelEstimate
        Channel knowledge with per-sensor ``value`` / ``error_variance``
        arrays of length N.
    confusions : ndarray
        ``(N, M, M)`` local confusion matrices, ``[k, i, m]`` = P(i | m).
    data_powers : ndarray
        ``P_dk``.
    priors : ndarray
    noise_variance : float
    modulation : {"psk", "fsk"}
    channel_variances : ndarray, optional
        Needed by the statistics rule only.
    training_powers : ndarray, optional
        Checked by the statistics rule, which assumes no training.
    """

    data: np.ndarray
    estimate: ChannelEstimate
    confusions: np.ndarray
    data_powers: np.ndarray
    priors: np.ndarray
    noise_variance: float
    modulation: str
    channel_variances: np.ndarray = None
    training_powers: np.ndarray = None

    def __post_init__(self):
        conf = np.asarray(self.confusions, dtype=float)
        data = np.asarray(self.data, dtype=complex)
        n = conf.shape[0] if conf.ndim == 3 else 0
        if n == 0 or data.shape[:1] != (n,):
            raise ConfigurationError("fusion needs a nonempty, equal-length sensor list")
        m = conf.shape[1]
        if self.modulation == FSK and data.shape != (n, m):
            raise ConfigurationError("FSK data must be shaped (N, M)")
        if self.modulation == PSK and data.shape != (n,):
            raise ConfigurationError("PSK data must be shaped (N,)")
        if np.shape(self.data_powers) != (n,) or np.shape(self.priors) != (m,):
            raise ConfigurationError("power or prior vector has the wrong length")
        object.__setattr__(self, "confusions", conf)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "data_powers", np.asarray(self.data_powers, dtype=float))
        object.__setattr__(self, "priors", np.asarray(self.priors, dtype=float))


def _combine(loglik, confusions, priors):
    """Fold per-symbol log-likelihoods ``(T, N, M)`` into ``(T, M)`` scores."""
    conf = np.asarray(confusions, dtype=float)
    if conf.ndim != 3 or conf.shape[0] == 0:
        raise ConfigurationError("confusions must be a nonempty (N, M, M) stack")
    with np.errstate(divide="ignore"):
        log_p = np.log(conf)
        log_pi = np.log(np.asarray(priors, dtype=float))
    # per_sensor[t, k, m] = log sum_i p_k[i, m] exp(L[t, k, i])
    per_sensor = logsumexp(log_p[None] + loglik[..., None], axis=2)
    return log_pi + np.sort(per_sensor, axis=1).sum(axis=1)


def decide(scores):
    """Argmax over the last axis; the first maximum wins."""
    out = np.argmax(scores, axis=-1)
    return int(out) if out.ndim == 0 else out


def _at_least_2d(x):
    x = np.asarray(x)
    return x[None] if x.ndim == 1 else x


def coherent_log_scores(y, h_hat, error_variance, confusions, data_powers, noise_variance, priors):
    """PSK with a full MMSE channel estimate; ``y`` and ``h_hat`` are ``(T, N)``."""
    y = _at_least_2d(np.asarray(y, dtype=complex))
    m = np.shape(confusions)[-1]
    p_d = np.asarray(data_powers, dtype=float)
    sigma_w2 = p_d * error_variance + noise_variance
    z = y * np.conj(h_hat) * (2.0 * np.sqrt(p_d) / sigma_w2)
    rot = np.exp(-2j * np.pi * np.arange(m) / m)
    loglik = np.real(z[..., None] * rot)
    return _combine(loglik, confusions, priors)


def amplitude_log_scores(y, alpha_hat, error_variance, confusions, data_powers, noise_variance,
                         priors):
    """FSK with an amplitude estimate; ``y`` is ``(T, N, M)``. Only ``|y|`` is read."""
    mag = np.abs(np.asarray(y))
    if mag.ndim == 2:
        mag = mag[None]
    p_d = np.asarray(data_powers, dtype=float)
    sigma_w2 = p_d * error_variance + noise_variance
    quad = (p_d * error_variance / (noise_variance * sigma_w2))[..., None] * mag ** 2
    bess = log_bessel_i0((2.0 * np.sqrt(p_d) * alpha_hat / sigma_w2)[..., None] * mag)
    return _combine(quad + bess, confusions, priors)


def statistics_log_scores(y, channel_variances, confusions, data_powers, noise_variance, priors):
    """FSK knowing only the channel variances; ``y`` is ``(T, N, M)``."""
    mag2 = np.abs(np.asarray(y)) ** 2
    if mag2.ndim == 2:
        mag2 = mag2[None]
    snr = np.asarray(data_powers, dtype=float) * channel_variances
    coef = snr / (noise_variance * (noise_variance + snr))
    return _combine(coef[..., None] * mag2, confusions, priors)


def _expect(inp, kind, modulation):
    if inp.estimate.kind != kind:
        raise ConfigurationError(f"rule needs a {kind} estimate, got {inp.estimate.kind}")
    if inp.modulation != modulation:
        raise ConfigurationError(f"rule needs {modulation} outputs, got {inp.modulation}")


def _single(scores):
    scores = scores[0]
    return decide(scores), scores


def require_zero_training(training_powers):
    """Raise unless no power is spent on training (the statistics rule's premise)."""
    if training_powers is not None and np.any(np.asarray(training_powers) != 0):
        raise ConfigurationError("statistics-only fusion assumes zero training power")


def fuse_coherent_psk(inp):
    """Coherent PSK rule. Returns ``(decision, log_scores)``."""
    _expect(inp, COHERENT_FULL, PSK)
    return _single(coherent_log_scores(
        inp.data, inp.estimate.value, inp.estimate.error_variance, inp.confusions,
        inp.data_powers, inp.noise_variance, inp.priors))


def fuse_noncoherent_amplitude_fsk(inp):
    """Non-coherent FSK rule with amplitude estimates."""
    _expect(inp, AMPLITUDE_ONLY, FSK)
    return _single(amplitude_log_scores(
        inp.data, inp.estimate.value, inp.estimate.error_variance, inp.confusions,
        inp.data_powers, inp.noise_variance, inp.priors))


def fuse_noncoherent_statistics_fsk(inp):
    """Non-coherent FSK rule using channel statistics only (no training)."""
    _expect(inp, STATISTICS_ONLY, FSK)
    require_zero_training(inp.training_powers)
    if inp.channel_variances is None:
        raise ConfigurationError("statistics-only fusion needs the channel variances")
    return _single(statistics_log_scores(
        inp.data, inp.channel_variances, inp.confusions, inp.data_powers,
        inp.noise_variance, inp.priors))
