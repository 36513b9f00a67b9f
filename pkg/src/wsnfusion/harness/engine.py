"""Monte Carlo probability-of-error engine.

Trials are grouped in fixed-size blocks. Block ``b`` of sweep point ``i``
draws from its own Philox stream keyed by ``(seed, i, b)``, so results do
not depend on how blocks are scheduled across threads. Each block draws
all its randomness up front in a fixed order and the per-point error count
is a plain sum, which keeps the CSV output byte-identical across runs.
"""

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from functools import lru_cache

import numpy as np

from ..allocation import (
    AVERAGE_J_SEARCH,
    COHERENT,
    CONDITIONAL_J_GRADIENT,
    NONCOHERENT_AMPLITUDE,
    NONCOHERENT_STATISTICS,
    STATISTICS_EXTREME_POINT,
    UNIFORM,
    allocate_average_j,
    allocate_data_conditional_j_batch,
    allocate_statistics_extreme_point,
    training_error_variances,
    uniform_plan,
)
from ..errors import ConfigurationError
from ..fusion import (
    amplitude_log_scores,
    coherent_log_scores,
    decide,
    require_zero_training,
    statistics_log_scores,
)
from ..phy import FSK, PSK, mmse_amplitude_estimate, mmse_channel_estimate, modulate_psk, transmit
from ..scenario import build_case
from ..sensing import confusion_matrices, local_decide, observe, sources_for_errors

__all__ = [
    "BLOCK_SIZE",
    "PePoint",
    "PointContext",
    "make_context",
    "point_context",
    "simulate_block",
    "count_errors",
    "run_trial",
    "run_sweep",
    "write_csv",
    "format_csv",
    "CSV_COLUMNS",
]

BLOCK_SIZE = 1000


@dataclass(frozen=True)
class PePoint:
    """One row of the output CSV; field order is the column order."""

    sweep_name: str
    sweep_value: float
    pe: float
    ci95: float
    trials: int
    receiver: str
    allocation: str
    case_id: str
    n: int
    m: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.pe <= 1.0:
            raise ValueError("pe must lie in [0, 1]")

    @staticmethod
    def half_width(pe, trials):
        return 1.96 * math.sqrt(pe * (1.0 - pe) / trials)


CSV_COLUMNS = tuple(f.name for f in fields(PePoint))


@dataclass(frozen=True, eq=False)
class PointContext:
    """Everything fixed at one sweep point.

    ``plan`` is ``None`` for conditional-J allocation, where data powers are
    re-solved per trial from that trial's estimates; ``training_powers`` and
    ``data_budget`` then describe the fixed side. ``perfect_csi`` hands the
    coherent receiver the true channel with zero error variance.
    """

    scenario: object
    source: object
    confusions: np.ndarray
    receiver: str
    training_powers: np.ndarray
    plan: object = None
    data_budget: float = None
    perfect_csi: bool = False

    @property
    def n(self):
        return self.scenario.n_sensors

    @property
    def m(self):
        return self.confusions.shape[-1]


def _modulation(receiver):
    return PSK if receiver == COHERENT else FSK


def make_context(scenario, source, receiver, allocation, r, perfect_csi=False):
    """Build a :class:`PointContext`, solving point-level allocations once."""
    conf = confusion_matrices(source)
    if receiver == NONCOHERENT_STATISTICS:
        r = 1.0
    if allocation == UNIFORM:
        plan = uniform_plan(scenario, r)
    elif allocation == AVERAGE_J_SEARCH:
        plan = allocate_average_j(scenario, conf).plan
    elif allocation == STATISTICS_EXTREME_POINT:
        plan = allocate_statistics_extreme_point(scenario, conf).plan
    elif allocation == CONDITIONAL_J_GRADIENT:
        n = scenario.n_sensors
        training = np.full(n, (1.0 - r) * scenario.p_total / n)
        return PointContext(scenario, source, conf, receiver, training, None,
                            r * scenario.p_total, perfect_csi)
    else:
        raise ConfigurationError(f"unknown allocation {allocation!r}")
    if receiver == NONCOHERENT_STATISTICS:
        require_zero_training(plan.training_powers)
    return PointContext(scenario, source, conf, receiver, plan.training_powers, plan, None,
                        perfect_csi)


@lru_cache(maxsize=64)
def point_context(spec, value_index):
    """Context for grid point ``value_index`` of ``spec`` (cached)."""
    value = spec.grid[value_index]
    if spec.sweep == "snr":
        snr_db, r = value, spec.data_fraction
    else:
        snr_db, r = spec.snr_db, value
    scenario, errors = build_case(spec.case_id, spec.n, spec.m, snr_db)
    source = sources_for_errors(errors, spec.m)
    return make_context(scenario, source, spec.receiver, spec.allocation, r)


def _rng(seed, point_index, block_index):
    ss = np.random.SeedSequence(seed, spawn_key=(point_index, block_index))
    return np.random.Generator(np.random.Philox(ss))


def simulate_block(ctx, seed, point_index, block_index, size=BLOCK_SIZE):
    """Correctness flags for one block of trials, shape ``(size,)``."""
    rng = _rng(seed, point_index, block_index)
    sc = ctx.scenario
    n, m = ctx.n, ctx.m
    nv = sc.noise_variance
    s2 = sc.channel_variances
    # Fixed draw order: hypotheses, sensing, channel, training noise, data noise.
    hyp = np.searchsorted(np.cumsum(sc.priors), rng.random(size), side="right")
    hyp = np.minimum(hyp, m - 1)
    sense = rng.standard_normal((2, size, n))
    chan = rng.standard_normal((2, size, n))
    cn = np.sqrt(0.5)
    noise_t = cn * (rng.standard_normal((size, n, m)) + 1j * rng.standard_normal((size, n, m)))
    noise_d = cn * (rng.standard_normal((size, n, m)) + 1j * rng.standard_normal((size, n, m)))

    sensors = np.arange(n)
    x = observe(ctx.source, sensors, hyp[:, None], sense[0], sense[1])
    u = local_decide(ctx.source, sensors, x)
    h = np.sqrt(s2 / 2.0) * (chan[0] + 1j * chan[1])
    mod = _modulation(ctx.receiver)
    if mod == PSK:
        symbols = np.array([modulate_psk(i, m) for i in range(m)])[u]
        noise_t, noise_d = noise_t[..., 0], noise_d[..., 0]
    else:
        symbols = np.eye(m)[u]

    p_t = ctx.training_powers
    y_t = transmit(p_t, 0.0, h, symbols, mod, nv, noise_t, noise_d).training
    if ctx.receiver == COHERENT:
        if ctx.perfect_csi:
            est, err = h, np.zeros(n)
        else:
            e = mmse_channel_estimate(y_t, p_t, s2, nv)
            est, err = e.value, e.error_variance[0]
        g_hat = np.abs(est) ** 2
    elif ctx.receiver == NONCOHERENT_AMPLITUDE:
        est = mmse_amplitude_estimate(np.abs(y_t[..., 0]) ** 2, p_t / nv, nv, s2).value
        err = training_error_variances(sc, p_t, FSK)
        g_hat = est ** 2
    else:
        require_zero_training(p_t)

    if ctx.plan is None:
        p_d, _, _ = allocate_data_conditional_j_batch(g_hat, ctx.confusions, sc, ctx.data_budget,
                                                      p_t, mod)
    else:
        p_d = ctx.plan.data_powers
    y_d = transmit(p_t, p_d, h, symbols, mod, nv, noise_t, noise_d).data

    if ctx.receiver == COHERENT:
        scores = coherent_log_scores(y_d, est, err, ctx.confusions, p_d, nv, sc.priors)
    elif ctx.receiver == NONCOHERENT_AMPLITUDE:
        scores = amplitude_log_scores(y_d, est, err, ctx.confusions, p_d, nv, sc.priors)
    else:
        scores = statistics_log_scores(y_d, s2, ctx.confusions, p_d, nv, sc.priors)
    return decide(scores) == hyp


def count_errors(ctx, seed, point_index, trials, workers=None):
    """Number of wrong fusion decisions among the first ``trials`` trials."""
    n_blocks = -(-trials // BLOCK_SIZE)

    def one(b):
        keep = min(BLOCK_SIZE, trials - b * BLOCK_SIZE)
        ok = simulate_block(ctx, seed, point_index, b)
        return int(keep - np.count_nonzero(ok[:keep]))

    workers = workers or min(n_blocks, os.cpu_count() or 1)
    if workers <= 1:
        return sum(map(one, range(n_blocks)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(one, range(n_blocks)))


def run_trial(spec, value_index, trial_index):
    """Whether trial ``trial_index`` at grid point ``value_index`` decides correctly.

    The result depends only on the seed, the point and the trial index.
    """
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    ctx = point_context(spec, value_index)
    block, row = divmod(trial_index, BLOCK_SIZE)
    return bool(simulate_block(ctx, spec.seed, value_index, block)[row])


def run_sweep(spec, workers=None):
    """Empirical Pe at each grid value, in grid order."""
    points = []
    for i, value in enumerate(spec.grid):
        ctx = point_context(spec, i)
        errors = count_errors(ctx, spec.seed, i, spec.trials, workers)
        pe = errors / spec.trials
        points.append(PePoint(spec.sweep, float(value), pe, PePoint.half_width(pe, spec.trials),
                              spec.trials, spec.receiver, spec.allocation, spec.case_id,
                              spec.n, spec.m, spec.seed))
    return points


def format_csv(points):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in points:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in astuple(p)])
    return buf.getvalue()


def write_csv(points, path):
    """Write ``points`` with the fixed column set; ``path`` may be a file object."""
    text = format_csv(points)
    if hasattr(path, "write"):
        path.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
