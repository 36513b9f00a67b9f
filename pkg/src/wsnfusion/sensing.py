"""Gaussian-source observations, nearest-mean local detectors and their
confusion matrices.

Hypothesis indices are 0-based throughout: hypothesis ``m`` selects column
``m`` of the source means.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError
from .specfun import q_function

__all__ = [
    "SourceModel",
    "ConfusionMatrix",
    "observe",
    "local_decide",
    "confusion_matrix",
    "confusion_matrices",
    "sensor_error_prob",
    "calibrate_means",
    "sources_for_errors",
    "stack_confusions",
]

# Smallest mean spacing (in units of sigma) used for a target error of (M-1)/M.
MIN_SPACING = 1e-6


@dataclass(frozen=True)
class SourceModel:
    """Per-sensor source means ``means[k, m]`` plus the two noise variances."""

    means: np.ndarray
    sigma_z2: float
    sigma_nu2: float = 0.0

    def __post_init__(self):
        means = np.array(self.means, dtype=float, ndmin=2)
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        if self.sigma_z2 < 0 or self.sigma_nu2 < 0:
            raise ConfigurationError("source variances must be nonnegative")
        if means.shape[1] < 2:
            raise ConfigurationError("need at least two source means per sensor")

    @property
    def n_sensors(self):
        return self.means.shape[0]

    @property
    def m_hypotheses(self):
        return self.means.shape[1]

    @property
    def sigma(self):
        """Standard deviation of an observation about its mean."""
        return float(np.sqrt(self.sigma_z2 + self.sigma_nu2))


@dataclass(frozen=True)
class ConfusionMatrix:
    """``p[i, m]`` = P(sensor decides i | hypothesis m); columns sum to one."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ConfigurationError("confusion matrix must be square")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-12):
            raise ConfigurationError("confusion entries must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=0) - 1.0) > 1e-9):
            raise ConfigurationError("confusion matrix columns must sum to one")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def m(self):
        return self.p.shape[0]


def stack_confusions(confusions):
    """Stack ConfusionMatrix objects (or arrays) into an ``(N, M, M)`` array."""
    if isinstance(confusions, np.ndarray):
        arr = np.asarray(confusions, dtype=float)
        return arr[None] if arr.ndim == 2 else arr
    return np.stack([c.p if isinstance(c, ConfusionMatrix) else np.asarray(c, float)
                     for c in confusions])


def observe(source, sensor, hypothesis, g1, g2):
    """Observation of ``sensor`` under ``hypothesis`` from two standard-normal draws."""
    return (source.means[sensor, hypothesis]
            + np.sqrt(source.sigma_z2) * g1
            + np.sqrt(source.sigma_nu2) * g2)


def local_decide(source, sensor, x):
    """Index of the nearest source mean; exact midpoints go to the lower index."""
    x = np.asarray(x, dtype=float)
    dist = np.abs(x[..., None] - source.means[sensor])
    out = np.argmin(dist, axis=-1)
    return int(out) if out.ndim == 0 else out


def _region_probs(means, sigma):
    """Decision-region probabilities of the nearest-mean detector."""
    means = np.asarray(means, dtype=float)
    if np.any(np.diff(means) <= 0):
        raise ConfigurationError("source means must be strictly increasing")
    m = means.size
    if sigma == 0:
        return np.eye(m)
    # a[i, m]: standardized lower edge of region i under hypothesis m
    edges = np.concatenate([[-np.inf], (means[1:] + means[:-1]) / 2.0, [np.inf]])
    z = (edges[:, None] - means[None, :]) / sigma
    lo, hi = z[:-1], z[1:]
    fin_lo = np.where(np.isfinite(lo), lo, 0.0)
    fin_hi = np.where(np.isfinite(hi), hi, 0.0)
    q_lo = np.where(np.isneginf(lo), 1.0, q_function(fin_lo))
    q_hi = np.where(np.isposinf(hi), 0.0, q_function(fin_hi))
    # Upper-tail differences lose precision deep in the lower tail; flip there.
    phi_lo = np.where(np.isneginf(lo), 0.0, q_function(-fin_lo))
    phi_hi = np.where(np.isposinf(hi), 1.0, q_function(-fin_hi))
    p = np.where(fin_lo > 0, q_lo - q_hi, phi_hi - phi_lo)
    return np.clip(p, 0.0, 1.0)


def confusion_matrix(source, sensor):
    return ConfusionMatrix(_region_probs(source.means[sensor], source.sigma))


def confusion_matrices(source):
    """``(N, M, M)`` array of all sensors' confusion matrices."""
    return np.stack([_region_probs(row, source.sigma) for row in source.means])


def sensor_error_prob(cm, priors):
    p = cm.p if isinstance(cm, ConfusionMatrix) else np.asarray(cm, dtype=float)
    priors = np.asarray(priors, dtype=float)
    return float(np.sum(priors * (1.0 - np.diag(p))))


def _equally_spaced(spacing, m):
    return (np.arange(m) - (m - 1) / 2.0) * spacing


def calibrate_means(target_error, m, sigma):
    """Symmetric, equally spaced means whose detector has the target error.

    Uniform priors are assumed.  A target of exactly ``(M-1)/M`` (a useless
    sensor) returns the minimal spacing ``MIN_SPACING * sigma``.
    """
    chance = (m - 1) / m
    if not (0 < target_error <= chance) or sigma <= 0 or m < 2:
        raise ConfigurationError(
            f"target error must lie in (0, {chance:g}] with positive sigma, got {target_error!r}")
    uniform = np.full(m, 1.0 / m)

    def excess(spacing):
        return sensor_error_prob(_region_probs(_equally_spaced(spacing, m), sigma), uniform) - target_error

    lo = MIN_SPACING * sigma
    if excess(lo) <= 1e-7:
        return _equally_spaced(lo, m)
    hi = 80.0 * sigma
    spacing = brentq(excess, lo, hi, xtol=1e-15 * sigma, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _equally_spaced(spacing, m)


def sources_for_errors(errors, m, sigma_z2=0.5, sigma_nu2=0.5):
    """Source model whose sensor k has local error ``errors[k]``."""
    sigma = np.sqrt(sigma_z2 + sigma_nu2)
    means = np.stack([calibrate_means(e, m, sigma) for e in np.asarray(errors, dtype=float)])
    return SourceModel(means, sigma_z2, sigma_nu2)
