"""Network geometry, path loss, power budget and the named experiment cases."""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "NetworkScenario",
    "PowerPlan",
    "path_loss_db",
    "channel_variance_from_distance",
    "network_snr_db",
    "solve_p_total_for_snr",
    "build_case",
    "CASE_IDS",
    "DEFAULT_NOISE_VARIANCE",
]

# Motley-Keenan without wall/floor terms.
PL0_DB = 55.0
PATH_LOSS_EXPONENT = 2.0
REFERENCE_DISTANCE = 1.0

# -30 dBm expressed in milliwatts; powers throughout are in mW.
DEFAULT_NOISE_VARIANCE = 10.0 ** (-30.0 / 10.0)

CASE_IDS = ("V-A1", "V-A2", "V-A3", "V-A4")

_ERROR_VECTORS = {
    (5, 2): (0.5, 0.5, 0.4, 0.3, 0.1),
    (5, 4): (0.5, 0.5, 0.4, 0.3, 0.1),
    (10, 2): (0.5, 0.5, 0.48, 0.46, 0.4, 0.35, 0.3, 0.2, 0.15, 0.1),
    (10, 4): (0.75, 0.74, 0.7, 0.68, 0.6, 0.55, 0.45, 0.3, 0.2, 0.1),
}


def _vector(values, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NetworkScenario:
    """Sensors-to-fusion-center network: priors, channels, noise and budget."""

    priors: np.ndarray
    distances: np.ndarray
    channel_variances: np.ndarray
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    p_total: float = 1.0

    def __post_init__(self):
        priors = _vector(self.priors, "priors")
        distances = _vector(self.distances, "distances")
        variances = _vector(self.channel_variances, "channel_variances")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "channel_variances", variances)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "p_total", float(self.p_total))
        if priors.size < 2:
            raise ConfigurationError("need at least two hypotheses")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ConfigurationError("priors must be a probability vector")
        if distances.size == 0 or distances.shape != variances.shape:
            raise ConfigurationError("distances and channel_variances must have equal nonzero length")
        if np.any(distances <= 0) or np.any(variances <= 0):
            raise ConfigurationError("distances and channel variances must be positive")
        if not self.noise_variance > 0 or not self.p_total > 0:
            raise ConfigurationError("noise_variance and p_total must be positive")

    @property
    def n_sensors(self):
        return self.distances.size

    @property
    def m_hypotheses(self):
        return self.priors.size

    def with_p_total(self, p_total):
        return NetworkScenario(self.priors, self.distances, self.channel_variances,
                               self.noise_variance, p_total)

    @classmethod
    def from_distances(cls, distances, m, noise_variance=DEFAULT_NOISE_VARIANCE,
                       p_total=1.0, priors=None):
        distances = np.asarray(distances, dtype=float)
        if priors is None:
            priors = np.full(m, 1.0 / m)
        return cls(priors, distances, channel_variance_from_distance(distances),
                   noise_variance, p_total)

    def to_dict(self):
        return {
            "priors": self.priors.tolist(),
            "distances": self.distances.tolist(),
            "channel_variances": self.channel_variances.tolist(),
            "noise_variance": self.noise_variance,
            "p_total": self.p_total,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class PowerPlan:
    """Per-sensor data and training powers."""

    data_powers: np.ndarray
    training_powers: np.ndarray
    p_total: float = field(default=None)

    def __post_init__(self):
        pd = _vector(self.data_powers, "data_powers")
        pt = _vector(self.training_powers, "training_powers")
        if pd.shape != pt.shape:
            raise ConfigurationError("data and training power vectors differ in length")
        if np.any(pd < 0) or np.any(pt < 0):
            raise ConfigurationError("powers must be nonnegative")
        total = float(pd.sum() + pt.sum()) if self.p_total is None else float(self.p_total)
        if pd.sum() + pt.sum() > total + 1e-9 * max(1.0, total):
            raise ConfigurationError("plan exceeds the power budget")
        object.__setattr__(self, "data_powers", pd)
        object.__setattr__(self, "training_powers", pt)
        object.__setattr__(self, "p_total", total)

    @property
    def sensor_powers(self):
        return self.data_powers + self.training_powers

    @property
    def data_fractions(self):
        """``r_k``; NaN where a sensor has no power."""
        p = self.sensor_powers
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(p > 0, self.data_powers / np.where(p > 0, p, 1.0), np.nan)

    @property
    def data_fraction(self):
        """``r``, the share of the whole budget spent on data symbols."""
        return float(self.data_powers.sum() / self.p_total) if self.p_total > 0 else math.nan


def path_loss_db(d):
    """Path loss in dB at distance ``d`` metres."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive")
    pl = PL0_DB + 10.0 * PATH_LOSS_EXPONENT * np.log10(d / REFERENCE_DISTANCE)
    return float(pl) if pl.ndim == 0 else pl


def channel_variance_from_distance(d):
    """Linear channel variance: the path loss read as a negative dB gain."""
    v = 10.0 ** (-np.asarray(path_loss_db(d)) / 10.0)
    return float(v) if v.ndim == 0 else v


def network_snr_db(scenario):
    n = scenario.n_sensors
    ratio = scenario.p_total * scenario.channel_variances.sum() / (n * n * scenario.noise_variance)
    return 10.0 * math.log10(ratio)


def solve_p_total_for_snr(scenario, snr_db):
    """Total power that makes :func:`network_snr_db` equal ``snr_db``."""
    n = scenario.n_sensors
    return 10.0 ** (snr_db / 10.0) * n * n * scenario.noise_variance / scenario.channel_variances.sum()


def _case_distances(n):
    if n == 5:
        return 2.0 + 2.0 * np.arange(5)
    return np.arange(1, n + 1, dtype=float)


def build_case(case_id, n, m, snr_db=10.0, noise_variance=DEFAULT_NOISE_VARIANCE):
    """Scenario and per-sensor target error vector for a named case.

    The returned error vector is aligned with ``scenario.distances``: entry k
    is the local error probability of the sensor at distance ``d_k``.
    """
    if case_id not in CASE_IDS or (n, m) not in _ERROR_VECTORS:
        raise ConfigurationError(f"unsupported case {case_id!r} with n={n}, m={m}")
    errors = np.array(_ERROR_VECTORS[(n, m)])
    distances = _case_distances(n)
    if case_id == "V-A1":
        errors = np.sort(errors)
    elif case_id == "V-A2":
        errors = np.sort(errors)[::-1]
    elif case_id == "V-A3":
        distances = np.full(n, 2.0)
    else:
        errors = np.full(n, errors.mean())
    scenario = NetworkScenario.from_distances(distances, m, noise_variance=noise_variance)
    scenario = scenario.with_p_total(solve_p_total_for_snr(scenario, snr_db))
    return scenario, errors.copy()
