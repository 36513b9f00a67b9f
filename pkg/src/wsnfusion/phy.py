"""Modulation, Rayleigh block-fading transmission and the two MMSE estimators.

Complex Gaussians follow the CN(0, s2) convention: total variance ``s2``,
``s2 / 2`` per real dimension. All functions are pure given their random
draws and broadcast over leading array dimensions.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DomainError
from .specfun import kummer_f1_half

__all__ = [
    "PSK",
    "FSK",
    "COHERENT_FULL",
    "AMPLITUDE_ONLY",
    "STATISTICS_ONLY",
    "ChannelDraw",
    "ReceivedBlock",
    "ChannelEstimate",
    "modulate_psk",
    "modulate_fsk",
    "draw_channel",
    "transmit",
    "mmse_channel_estimate",
    "mmse_amplitude_estimate",
    "amplitude_error_variance",
    "estimated_gain_mean",
]

PSK = "psk"
FSK = "fsk"
COHERENT_FULL = "coherent_full"
AMPLITUDE_ONLY = "amplitude_only"
STATISTICS_ONLY = "statistics_only"

DEFAULT_MC_SAMPLES = 200_000
DEFAULT_MC_SEED = 20_200_901


@dataclass(frozen=True)
class ChannelDraw:
    """Fading coefficient ``h = amplitude * exp(j phase)``."""

    coefficient: complex
    amplitude: float
    phase: float

    @classmethod
    def from_coefficient(cls, h):
        h = np.asarray(h, dtype=complex)
        amp = np.abs(h)
        phase = np.mod(np.angle(h), 2 * np.pi)
        if h.ndim == 0:
            return cls(complex(h), float(amp), float(phase))
        return cls(h, amp, phase)


@dataclass(frozen=True)
class ReceivedBlock:
    """Training and data channel outputs of one sensor.

    PSK outputs are complex scalars, FSK outputs complex M-vectors (the last
    axis indexes the tone).
    """

    training: np.ndarray
    data: np.ndarray
    modulation: str

    def __post_init__(self):
        if self.modulation not in (PSK, FSK):
            raise ConfigurationError(f"unknown modulation {self.modulation!r}")
        t, d = np.shape(self.training), np.shape(self.data)
        if t != d:
            raise ConfigurationError("training and data outputs differ in shape")
        if self.modulation == FSK and len(d) == 0:
            raise ConfigurationError("FSK outputs need a tone axis")


@dataclass(frozen=True)
class ChannelEstimate:
    """Receiver-side channel knowledge for one sensor (or a batch)."""

    kind: str
    value: object = None
    error_variance: object = None

    def __post_init__(self):
        if self.kind not in (COHERENT_FULL, AMPLITUDE_ONLY, STATISTICS_ONLY):
            raise ConfigurationError(f"unknown estimate kind {self.kind!r}")
        if (self.value is None) != (self.kind == STATISTICS_ONLY):
            raise ConfigurationError("estimate value must be present unless statistics_only")
        if self.error_variance is not None and np.any(np.asarray(self.error_variance) < 0):
            raise ConfigurationError("error variance must be nonnegative")


def _check_index(i, m):
    if m < 2 or not 0 <= i < m:
        raise DomainError(f"hypothesis index {i} out of range for M={m}")


def modulate_psk(i, m):
    """Unit PSK symbol for hypothesis ``i`` (0-based)."""
    _check_index(i, m)
    if 4 * i % m == 0:
        # exact quarter rotations keep symbols like 1j free of rounding
        return complex(1j ** (4 * i // m))
    return complex(np.exp(2j * np.pi * i / m))


def modulate_fsk(i, m):
    """Canonical M-vector with a one in position ``i``."""
    _check_index(i, m)
    e = np.zeros(m, dtype=complex)
    e[i] = 1.0
    return e


def draw_channel(sigma_h2, g1, g2):
    """Rayleigh coefficient from two standard-normal reals."""
    if not np.all(np.asarray(sigma_h2) > 0):
        raise DomainError("channel variance must be positive")
    scale = np.sqrt(np.asarray(sigma_h2, dtype=float) / 2.0)
    return ChannelDraw.from_coefficient(scale * (np.asarray(g1) + 1j * np.asarray(g2)))


def transmit(p_t, p_d, channel, symbol, modulation, sigma_n2, noise_t, noise_d):
    """Pass one training and one data symbol through the same channel.

    Parameters
    ----------
    p_t, p_d : float or array
        Training and data powers.
    channel : ChannelDraw or complex array
        Held fixed over both symbol intervals.
    symbol : complex or array
        Output of :func:`modulate_psk` / :func:`modulate_fsk`; FSK carries a
        trailing tone axis.
    modulation : {"psk", "fsk"}
    sigma_n2 : float
        Noise variance.
    noise_t, noise_d : complex arrays
        Unit CN(0, 1) draws shaped like the corresponding outputs.
    """
    h = channel.coefficient if isinstance(channel, ChannelDraw) else channel
    h = np.asarray(h, dtype=complex)
    p_t = np.asarray(p_t, dtype=float)
    p_d = np.asarray(p_d, dtype=float)
    if np.any(p_t < 0) or np.any(p_d < 0):
        raise ConfigurationError("powers must be nonnegative")
    symbol = np.asarray(symbol, dtype=complex)
    sn = np.sqrt(sigma_n2)
    if modulation == PSK:
        training = np.sqrt(p_t) * h + sn * np.asarray(noise_t)
        data = np.sqrt(p_d) * h * symbol + sn * np.asarray(noise_d)
    elif modulation == FSK:
        m = symbol.shape[-1]
        u_t = np.zeros(m)
        u_t[0] = 1.0  # training rides on the first tone
        gain_t = (np.sqrt(p_t) * h)[..., None]
        gain_d = (np.sqrt(p_d) * h)[..., None]
        training = gain_t * u_t + sn * np.asarray(noise_t)
        data = gain_d * symbol + sn * np.asarray(noise_d)
    else:
        raise ConfigurationError(f"unknown modulation {modulation!r}")
    return ReceivedBlock(training, data, modulation)


def mmse_channel_estimate(y_t, p_t, sigma_h2, sigma_n2):
    """Linear MMSE estimate of ``h`` from one training output."""
    if not (np.all(np.asarray(sigma_h2) > 0) and np.all(np.asarray(sigma_n2) > 0)):
        raise DomainError("variances must be positive")
    p_t = np.asarray(p_t, dtype=float)
    gain = sigma_h2 * np.sqrt(p_t) / (sigma_h2 * p_t + sigma_n2)
    err = sigma_h2 / (1.0 + sigma_h2 * p_t / sigma_n2)
    value = gain * np.asarray(y_t, dtype=complex)
    if np.ndim(value) == 0 and np.ndim(err) == 0:
        return ChannelEstimate(COHERENT_FULL, complex(value), float(err))
    return ChannelEstimate(COHERENT_FULL, value, np.broadcast_to(err, np.shape(value)).copy())


def estimated_gain_mean(sigma_h2, p_t, sigma_n2):
    """Mean of ``|h_hat|^2``, which is exponentially distributed."""
    g = np.asarray(p_t, dtype=float) / sigma_n2
    return sigma_h2 ** 2 * g / (1.0 + sigma_h2 * g)


def mmse_amplitude_estimate(v_t, gamma_t, sigma_n2, sigma_h2=1.0):
    """Posterior mean of ``|h|`` given the training energy ``v_t = |y_t|^2``.

    The Rice posterior is written for a unit-variance channel, so the channel
    is normalized by ``sqrt(sigma_h2)`` first and the estimate rescaled after.
    ``gamma_t`` is the training power over the noise variance.
    """
    v_t = np.asarray(v_t, dtype=float)
    if np.any(v_t < 0) or np.any(np.asarray(gamma_t) < 0):
        raise DomainError("v_t and gamma_t must be nonnegative")
    g = sigma_h2 * np.asarray(gamma_t, dtype=float)
    s2 = 1.0 / (g + 1.0)
    arg = g * v_t / (sigma_n2 * (g + 1.0))
    amp = np.sqrt(sigma_h2) * np.sqrt(np.pi * s2) / 2.0 * kummer_f1_half(-arg)
    value = float(amp) if np.ndim(amp) == 0 else amp
    err = amplitude_error_variance(gamma_t, sigma_h2=sigma_h2) if np.ndim(gamma_t) == 0 else None
    return ChannelEstimate(AMPLITUDE_ONLY, value, err)


@lru_cache(maxsize=4096)
def _normalized_amp_error(g, mc_samples, seed):
    rng = np.random.default_rng(seed)
    # Stratified uniforms -> Exp(1) draws of the normalized training energy.
    u = (np.arange(mc_samples) + rng.random(mc_samples)) / mc_samples
    e = -np.log1p(-u)
    x = g * e
    # F(-x)^2 grows like 4x/pi; subtracting that control variate (whose mean
    # 4g/pi is exact) keeps the estimate accurate under strong training.
    resid = kummer_f1_half(-x) ** 2 - 4.0 / np.pi * x
    val = (1.0 - np.pi / 4.0 * resid.mean()) / (g + 1.0)
    return float(min(max(val, 0.0), 1.0))


def amplitude_error_variance(gamma_t, mc_samples=DEFAULT_MC_SAMPLES, seed=DEFAULT_MC_SEED,
                             sigma_h2=1.0):
    """Mean-square error of :func:`mmse_amplitude_estimate`.

    The expectation over the training energy is a seeded Monte Carlo average,
    so equal arguments give identical results and a common seed across
    ``gamma_t`` values gives common random numbers.
    """
    if gamma_t < 0:
        raise DomainError("gamma_t must be nonnegative")
    if mc_samples < 10_000:
        raise ConfigurationError("mc_samples must be at least 10^4")
    g = float(sigma_h2) * float(gamma_t)
    return float(sigma_h2) * _normalized_amp_error(g, int(mc_samples), int(seed))
