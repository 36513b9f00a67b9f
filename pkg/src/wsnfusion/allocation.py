"""Power allocation maximizing the divergence objectives.

All objectives are sums of per-sensor terms, so a solver only needs a
vectorized per-sensor objective ``phi(P) -> (..., N)``. Gradients are central
differences taken coordinate-wise (forward differences at the boundary) and
the ascent runs on budget fractions, many problems at once.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .divergence import (
    average_j_coherent,
    average_sensor_j,
    conditional_j,
    fsk_sensor_j,
    psk_sensor_j,
    statistics_sensor_j,
    total_j_statistics,
    x_parameter,
)
from .errors import ConfigurationError
from .phy import FSK, PSK, amplitude_error_variance
from .scenario import PowerPlan

__all__ = [
    "AllocationResult",
    "UNIFORM",
    "CONDITIONAL_J_GRADIENT",
    "AVERAGE_J_SEARCH",
    "STATISTICS_EXTREME_POINT",
    "STRATEGIES",
    "COHERENT",
    "NONCOHERENT_AMPLITUDE",
    "NONCOHERENT_STATISTICS",
    "RECEIVERS",
    "uniform_plan",
    "project_simplex",
    "maximize_separable",
    "training_error_variances",
    "allocate_data_conditional_j",
    "allocate_data_conditional_j_batch",
    "allocate_average_j",
    "allocate_statistics_extreme_point",
    "allocate",
]

log = logging.getLogger(__name__)

UNIFORM = "uniform"
CONDITIONAL_J_GRADIENT = "conditional_j_gradient"
AVERAGE_J_SEARCH = "average_j_search"
STATISTICS_EXTREME_POINT = "statistics_extreme_point"
STRATEGIES = (UNIFORM, CONDITIONAL_J_GRADIENT, AVERAGE_J_SEARCH, STATISTICS_EXTREME_POINT)

COHERENT = "coherent"
NONCOHERENT_AMPLITUDE = "noncoherent_amplitude"
NONCOHERENT_STATISTICS = "noncoherent_statistics"
RECEIVERS = (COHERENT, NONCOHERENT_AMPLITUDE, NONCOHERENT_STATISTICS)

_COMPATIBLE = {
    COHERENT: (UNIFORM, CONDITIONAL_J_GRADIENT, AVERAGE_J_SEARCH),
    NONCOHERENT_AMPLITUDE: (UNIFORM, CONDITIONAL_J_GRADIENT),
    NONCOHERENT_STATISTICS: (UNIFORM, STATISTICS_EXTREME_POINT),
}

GRAD_TOL = 1e-8
MAX_ITER = 10_000
STALL_ITERS = 50
MULTISTART_MAX_MOVE = 0.1
MIN_STARTS = 8
MULTISTART_SEED = 7


@dataclass(frozen=True)
class AllocationResult:
    plan: PowerPlan
    objective: float
    solver: str
    diagnostics: dict = field(default_factory=dict)


def uniform_plan(scenario, r):
    """Equal split across sensors, fraction ``r`` of each share on data."""
    if not 0.0 <= r <= 1.0:
        raise ConfigurationError(f"r must lie in [0, 1], got {r!r}")
    n = scenario.n_sensors
    each = scenario.p_total / n
    return PowerPlan(np.full(n, r * each), np.full(n, (1.0 - r) * each), scenario.p_total)


def project_simplex(v):
    """Euclidean projection of each row onto the unit simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def _separable_gradient(phi, p, rows):
    """d phi_k / d P_k for every row and sensor, with a central step where room allows."""
    h = np.maximum(1e-6, 1e-6 * p)
    central = p >= h
    lo = np.where(central, p - h, p)
    hi = p + h
    width = np.where(central, 2.0 * h, h)
    return (phi(hi, rows) - phi(lo, rows)) / width


def maximize_separable(phi, budget, starts, tol=GRAD_TOL, max_iter=MAX_ITER, max_move=None):
    """Projected-gradient ascent of ``sum_k phi(P)_k`` over ``{P >= 0, sum P = budget}``.

    Parameters
    ----------
    phi : callable
        ``phi(P, rows)`` maps powers ``(R, N)`` for problems ``rows`` (an
        index array into the batch) to per-sensor values ``(R, N)``.
    budget : float or array (B,)
    starts : array (B, N)
        Initial budget fractions, one problem per row.
    max_move : float, optional
        Largest change of any fraction accepted in one iteration. Keeps each
        start of a multistart search near its own basin.

    Returns
    -------
    fractions : ndarray (B, N)
    value : ndarray (B,)
    info : dict of per-row arrays ``iterations``, ``grad_norm``, ``converged``
        and ``stalled``.

    Notes
    -----
    Convergence is declared when the gradient mapping
    ``w - proj(w + g / max(1, |g|_inf))`` has Euclidean norm at most ``tol``.
    Rows whose Armijo search stops making progress for ``STALL_ITERS``
    iterations are stopped and flagged as stalled.
    """
    w = project_simplex(np.atleast_2d(np.asarray(starts, dtype=float)))
    rows = w.shape[0]
    budget = np.broadcast_to(np.asarray(budget, dtype=float), (rows,))[:, None]

    def total(frac, idx):
        return phi(frac * budget[idx], idx).sum(axis=-1)

    f = total(w, np.arange(rows))
    step = np.full(rows, 1.0 if max_move is None else max_move)
    prev_w = np.full_like(w, np.nan)
    prev_g = np.full_like(w, np.nan)
    iters = np.zeros(rows, dtype=int)
    resid = np.full(rows, np.inf)
    stall = np.zeros(rows, dtype=int)
    active = np.ones(rows, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        a = np.flatnonzero(active)
        wa, fa = w[a], f[a]
        g = budget[a] * _separable_gradient(phi, wa * budget[a], a)
        scale = np.maximum(1.0, np.abs(g).max(axis=-1, keepdims=True))
        resid[a] = np.linalg.norm(wa - project_simplex(wa + g / scale), axis=-1)
        done = resid[a] <= tol
        # Barzilai-Borwein trial step (curvature is negative for an ascent
        # problem), falling back to an enlarged previous step.
        s_ = wa - prev_w[a]
        y_ = g - prev_g[a]
        sy = np.einsum("ij,ij->i", s_, y_)
        ss = np.einsum("ij,ij->i", s_, s_)
        with np.errstate(invalid="ignore", divide="ignore"):
            bb = -ss / sy
        t = np.where(np.isfinite(bb) & (bb > 0), bb, 4.0 * step[a] / scale[:, 0])
        t = np.clip(t, 1e-12 / scale[:, 0], 1e12 / scale[:, 0])
        prev_w[a], prev_g[a] = wa, g
        # Armijo backtracking on the projection arc
        accepted = np.zeros(a.size, dtype=bool)
        w_new, f_new = wa.copy(), fa.copy()
        for _ in range(60):
            todo = ~accepted & ~done
            if not todo.any():
                break
            cand = project_simplex(wa[todo] + t[todo, None] * g[todo])
            fc = total(cand, a[todo])
            gain = np.einsum("ij,ij->i", g[todo], cand - wa[todo])
            ok = fc >= fa[todo] + 1e-4 * gain
            if max_move is not None:
                ok &= np.abs(cand - wa[todo]).max(axis=-1) <= max_move
            idx = np.flatnonzero(todo)
            w_new[idx[ok]] = cand[ok]
            f_new[idx[ok]] = fc[ok]
            accepted[idx[ok]] = True
            t[idx[~ok]] *= 0.5
        progressed = accepted & (f_new > fa + 1e-15 * np.maximum(1.0, np.abs(fa)))
        w[a], f[a] = w_new, f_new
        step[a] = t * scale[:, 0]
        iters[a] += ~done
        stall[a] = np.where(progressed | done, 0, stall[a] + 1)
        active[a] = ~done & (stall[a] < STALL_ITERS)
    converged = resid <= tol
    stalled = ~converged & (stall >= STALL_ITERS)
    return w, f, {"iterations": iters, "grad_norm": resid, "converged": converged,
                  "stalled": stalled}


def training_error_variances(scenario, training_powers, modulation):
    """Estimation error variance implied by each sensor's training power."""
    s2 = scenario.channel_variances
    nv = scenario.noise_variance
    p_t = np.asarray(training_powers, dtype=float)
    if modulation == PSK:
        return s2 / (1.0 + s2 * p_t / nv)
    return np.array([amplitude_error_variance(pt / nv, sigma_h2=sk) for pt, sk in zip(p_t, s2)])


def _conditional_phi(g_hat, confusions, err, priors, modulation, nv):
    g_hat = np.asarray(g_hat, dtype=float)

    def phi(p, rows):
        g = g_hat[rows]
        if modulation == PSK:
            return psk_sensor_j(confusions, g * p / (p * err + nv), priors)
        return fsk_sensor_j(confusions, g * p, p * err, nv, priors)

    return phi


def allocate_data_conditional_j_batch(g_hat, confusions, scenario, p_d_budget, training_powers,
                                      modulation=PSK):
    """Data powers maximizing conditional J for each row of ``g_hat``.

    Returns ``(data_powers, objective, info)`` with one row per realization.
    The ascent starts from the uniform split, so each objective is at least
    the uniform-split value.
    """
    g_hat = np.atleast_2d(np.asarray(g_hat, dtype=float))
    rows, n = g_hat.shape
    err = training_error_variances(scenario, training_powers, modulation)
    phi = _conditional_phi(g_hat, confusions, err, scenario.priors, modulation,
                           scenario.noise_variance)
    if p_d_budget <= 0:
        raise ConfigurationError("data budget must be positive")
    w, f, info = maximize_separable(phi, p_d_budget, np.full((rows, n), 1.0 / n))
    return w * p_d_budget, f, info


def allocate_data_conditional_j(g_hat, confusions, scenario, p_d_budget, training_powers,
                                modulation=PSK):
    """Single-realization wrapper of :func:`allocate_data_conditional_j_batch`."""
    training_powers = np.asarray(training_powers, dtype=float)
    p_d, _, info = allocate_data_conditional_j_batch(
        g_hat, confusions, scenario, p_d_budget, training_powers, modulation)
    plan = PowerPlan(p_d[0], training_powers, scenario.p_total)
    err = training_error_variances(scenario, training_powers, modulation)
    value = conditional_j(confusions, g_hat, plan, err, scenario.priors, modulation,
                          scenario.noise_variance).total
    diag = {k: v[0].item() for k, v in info.items()}
    if not diag["converged"]:
        log.info("conditional-J ascent stopped at gradient norm %.3g", diag["grad_norm"])
    return AllocationResult(plan, value, CONDITIONAL_J_GRADIENT, diag)


def _average_phi(scenario, confusions, priors):
    s2 = scenario.channel_variances
    nv = scenario.noise_variance

    def phi(p, rows):
        pos = p > 0
        x = x_parameter(s2, np.where(pos, p, 1.0), 0.5, nv)
        return np.where(pos, average_sensor_j(confusions, x, priors), 0.0)

    return phi


def _multistarts(scenario):
    n = scenario.n_sensors
    starts = [np.full(n, 1.0 / n), scenario.channel_variances / scenario.channel_variances.sum()]
    if n > 1:
        for k in range(n):
            lean = np.full(n, 0.3 / (n - 1))
            lean[k] = 0.7
            starts.append(lean)
    rng = np.random.default_rng(MULTISTART_SEED)
    while len(starts) < MIN_STARTS:
        starts.append(rng.dirichlet(np.ones(n)))
    return np.array(starts)


def allocate_average_j(scenario, confusions, priors=None):
    """Half of each sensor's power on training, total power spread by multistart ascent."""
    priors = scenario.priors if priors is None else priors
    phi = _average_phi(scenario, confusions, priors)
    starts = _multistarts(scenario)
    w, f, info = maximize_separable(phi, scenario.p_total, starts, max_move=MULTISTART_MAX_MOVE)
    best = int(np.argmax(f))
    p = w[best] * scenario.p_total
    plan = PowerPlan(p / 2.0, p / 2.0, scenario.p_total)
    value = average_j_coherent(scenario, plan, confusions, priors).total
    diag = {k: v[best].item() for k, v in info.items()}
    diag["starts"] = len(starts)
    return AllocationResult(plan, value, AVERAGE_J_SEARCH, diag)


def allocate_statistics_extreme_point(scenario, confusions, priors=None, p_d_budget=None):
    """Best vertex of ``{P >= 0, sum P <= budget}``: the origin or one sensor at full power."""
    priors = scenario.priors if priors is None else priors
    budget = scenario.p_total if p_d_budget is None else p_d_budget
    n = scenario.n_sensors
    candidates = np.vstack([np.zeros(n), budget * np.eye(n)])
    snr = candidates * scenario.channel_variances / scenario.noise_variance
    values = statistics_sensor_j(confusions, snr, priors).sum(axis=-1)
    best = int(np.argmax(values))
    plan = PowerPlan(candidates[best], np.zeros(n), scenario.p_total)
    value = total_j_statistics(scenario, plan.data_powers, confusions, priors).total
    return AllocationResult(plan, value, STATISTICS_EXTREME_POINT,
                            {"candidates": len(candidates), "vertex": best})


def _modulation(receiver):
    return PSK if receiver == COHERENT else FSK


def allocate(strategy, receiver, scenario, confusions, g_hat=None, r=0.5):
    """Dispatch to the solver for ``(strategy, receiver)``.

    For conditional J the training side is the uniform ``(1 - r) P_tot / N``
    and the data budget ``r P_tot``. The statistics receiver always uses
    ``r = 1``.
    """
    if receiver not in RECEIVERS:
        raise ConfigurationError(f"unknown receiver {receiver!r}")
    if strategy not in _COMPATIBLE[receiver]:
        raise ConfigurationError(f"strategy {strategy!r} does not apply to receiver {receiver!r}")
    if receiver == NONCOHERENT_STATISTICS:
        r = 1.0
    if strategy == UNIFORM:
        plan = uniform_plan(scenario, r)
        return AllocationResult(plan, _uniform_objective(receiver, scenario, plan, confusions, g_hat),
                                UNIFORM, {})
    if strategy == CONDITIONAL_J_GRADIENT:
        if g_hat is None:
            raise ConfigurationError("conditional-J allocation needs an estimate realization")
        if not 0.0 < r < 1.0:
            raise ConfigurationError("conditional-J allocation needs 0 < r < 1")
        n = scenario.n_sensors
        training = np.full(n, (1.0 - r) * scenario.p_total / n)
        return allocate_data_conditional_j(g_hat, confusions, scenario, r * scenario.p_total,
                                           training, _modulation(receiver))
    if strategy == AVERAGE_J_SEARCH:
        return allocate_average_j(scenario, confusions)
    return allocate_statistics_extreme_point(scenario, confusions)


def _uniform_objective(receiver, scenario, plan, confusions, g_hat):
    if receiver == NONCOHERENT_STATISTICS:
        return total_j_statistics(scenario, plan.data_powers, confusions).total
    mod = _modulation(receiver)
    if g_hat is not None:
        err = training_error_variances(scenario, plan.training_powers, mod)
        return conditional_j(confusions, g_hat, plan, err, scenario.priors, mod,
                             scenario.noise_variance).total
    if receiver == COHERENT and 0.0 < plan.data_fraction < 1.0:
        return average_j_coherent(scenario, plan, confusions).total
    return float("nan")
