"""Experiment specification and its flat ``key = value`` text format.

Example::

    case_id = V-A1
    n = 5
    m = 2
    receiver = coherent
    allocation = uniform
    sweep = snr
    grid = -10, -5, 0, 5, 10, 15

Lines starting with ``#`` and blank lines are ignored. Lists are comma
separated.
"""

from dataclasses import dataclass, fields, replace

from ..allocation import (
    AVERAGE_J_SEARCH,
    NONCOHERENT_STATISTICS,
    RECEIVERS,
    STRATEGIES,
    _COMPATIBLE,
)
from ..errors import ConfigParseError
from ..scenario import _ERROR_VECTORS, CASE_IDS

__all__ = [
    "ExperimentSpec",
    "SWEEPS",
    "MIN_TRIALS",
    "DEFAULT_SNR_GRID",
    "DEFAULT_R_GRID",
    "parse_config",
    "serialize_config",
    "load_config",
    "validate",
    "preset",
]

SWEEPS = ("snr", "r")
MIN_TRIALS = 1000
DEFAULT_SNR_GRID = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
DEFAULT_R_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

REQUIRED = ("case_id", "n", "m", "receiver", "allocation", "sweep", "grid")


@dataclass(frozen=True)
class ExperimentSpec:
    """One Pe curve: a case, a receiver, an allocation strategy and a sweep.

    ``snr_db`` is the operating point of an r sweep and ``r`` the data share
    of an SNR sweep. The statistics receiver always uses ``r = 1``.
    """

    case_id: str
    n: int
    m: int
    receiver: str
    allocation: str
    sweep: str
    grid: tuple
    trials: int = 10_000
    seed: int = 1
    output: str = None
    snr_db: float = 10.0
    r: float = None

    @property
    def data_fraction(self):
        if self.receiver == NONCOHERENT_STATISTICS:
            return 1.0
        return 0.5 if self.r is None else self.r


def _fail(msg, key, lines):
    raise ConfigParseError(msg, key=key, line=lines.get(key))


def validate(spec, lines=None):
    """Check the spec invariants; raises :class:`ConfigParseError`."""
    lines = lines or {}
    if spec.case_id not in CASE_IDS:
        _fail(f"unknown case {spec.case_id!r}", "case_id", lines)
    if (spec.n, spec.m) not in _ERROR_VECTORS:
        _fail(f"no preset error vector for n={spec.n}, m={spec.m}", "n", lines)
    if spec.receiver not in RECEIVERS:
        _fail(f"receiver must be one of {', '.join(RECEIVERS)}", "receiver", lines)
    if spec.allocation not in STRATEGIES:
        _fail(f"allocation must be one of {', '.join(STRATEGIES)}", "allocation", lines)
    if spec.allocation not in _COMPATIBLE[spec.receiver]:
        _fail(f"allocation {spec.allocation!r} does not apply to receiver {spec.receiver!r}",
              "allocation", lines)
    if spec.sweep not in SWEEPS:
        _fail("sweep must be 'snr' or 'r'", "sweep", lines)
    grid = spec.grid
    if len(grid) == 0:
        _fail("grid must not be empty", "grid", lines)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        _fail("grid must be strictly increasing", "grid", lines)
    if spec.trials < MIN_TRIALS:
        _fail(f"trials must be at least {MIN_TRIALS}", "trials", lines)
    if spec.seed < 0:
        _fail("seed must be nonnegative", "seed", lines)
    stats = spec.receiver == NONCOHERENT_STATISTICS
    if stats and spec.r is not None and spec.r != 1.0:
        _fail("the statistics receiver uses no training, so r must be 1", "r", lines)
    if not stats and spec.r is not None and not 0.0 < spec.r < 1.0:
        _fail("r must lie strictly between 0 and 1", "r", lines)
    if spec.allocation == AVERAGE_J_SEARCH and spec.r is not None and spec.r != 0.5:
        _fail("average_j_search fixes the data share at 1/2", "r", lines)
    if spec.sweep == "r":
        if stats and tuple(grid) != (1.0,):
            _fail("the statistics receiver only admits the r grid '1'", "grid", lines)
        if not stats and not all(0.0 < v < 1.0 for v in grid):
            _fail("r grid values must lie strictly between 0 and 1", "grid", lines)
        if spec.allocation == AVERAGE_J_SEARCH:
            _fail("average_j_search fixes the data share at 1/2; sweep snr instead",
                  "allocation", lines)
    return spec


_TYPES = {f.name: f.type for f in fields(ExperimentSpec)}


def _convert(key, raw, line):
    try:
        if key in ("n", "m", "trials", "seed"):
            return int(raw)
        if key in ("snr_db", "r"):
            return float(raw)
        if key == "grid":
            return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigParseError(f"cannot parse value {raw!r}", key=key, line=line) from None
    return raw


def parse_config(text):
    """Parse config text into a validated :class:`ExperimentSpec`."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _TYPES:
            raise ConfigParseError(f"unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigParseError(f"duplicate key {key!r}", key=key, line=lineno)
        values[key] = _convert(key, value, lineno)
        lines[key] = lineno
    for key in REQUIRED:
        if key not in values:
            raise ConfigParseError(f"missing required key {key!r}", key=key)
    if values.get("output") == "":
        values["output"] = None
    return validate(ExperimentSpec(**values), lines)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def serialize_config(spec):
    """Inverse of :func:`parse_config`; unset optional keys are omitted."""
    out = []
    for f in fields(ExperimentSpec):
        value = getattr(spec, f.name)
        if value is None:
            continue
        out.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(out) + "\n"


def load_config(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        spec = parse_config(fh.read())
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return validate(replace(spec, **overrides)) if overrides else spec


def preset(case_id, n, m, receiver, allocation="uniform", sweep="snr", **kwargs):
    """Spec for one of the published curves with the default grids."""
    if sweep == "snr":
        grid = DEFAULT_SNR_GRID
    elif receiver == NONCOHERENT_STATISTICS:
        grid = (1.0,)
    else:
        grid = DEFAULT_R_GRID
    spec = ExperimentSpec(case_id, n, m, receiver, allocation, sweep, tuple(kwargs.pop("grid", grid)),
                          **kwargs)
    return validate(spec)
