"""Scalar special functions used by the estimators and divergence formulas.

All functions accept scalars or array_like input and broadcast elementwise;
a scalar argument returns a Python ``float``.  The Bessel and exponential
integral kernels come from :mod:`scipy.special`; the combinations below add
the domain checks and the overflow-free evaluation paths the rest of the
package depends on.
"""

import numpy as np
from scipy import special

from .errors import DomainError, RangeError

__all__ = [
    "q_function",
    "exp_integral_e1",
    "bessel_i0",
    "bessel_i1",
    "log_bessel_i0",
    "kummer_f1_half",
    "d_func",
    "one_minus_d",
]

_BESSEL_LIMIT = 700.0
_CF_SWITCH = 30.0
_CF_TERMS = 40


def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: argument must be finite")
    return arr


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)`` for standard normal Z."""
    x = _as_float_array(x, "q_function")
    return _ret(special.ndtr(-x))


def exp_integral_e1(x):
    """Exponential integral ``E1(x) = int_x^inf exp(-t)/t dt`` for x > 0."""
    x = _as_float_array(x, "exp_integral_e1")
    if np.any(x <= 0):
        raise DomainError("exp_integral_e1: x must be positive")
    return _ret(special.exp1(x))


def _check_bessel(x, name):
    x = _as_float_array(x, name)
    if np.any(np.abs(x) > _BESSEL_LIMIT):
        raise RangeError(f"{name}: |x| > {_BESSEL_LIMIT:g} overflows")
    return x


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero."""
    return _ret(special.i0(_check_bessel(x, "bessel_i0")))


def bessel_i1(x):
    """Modified Bessel function of the first kind, order one."""
    return _ret(special.i1(_check_bessel(x, "bessel_i1")))


def log_bessel_i0(x):
    """``log I0(x)`` without overflow, for any finite x."""
    x = np.abs(_as_float_array(x, "log_bessel_i0"))
    return _ret(np.log(special.i0e(x)) + x)


def kummer_f1_half(x):
    """Confluent hypergeometric ``1F1(-1/2; 1; x)``.

    Evaluated through the Bessel identity
    ``exp(x/2) * (x I1(x/2) - (x - 1) I0(x/2))`` using exponentially
    scaled Bessel functions, so large negative arguments stay finite.
    """
    x = _as_float_array(x, "kummer_f1_half")
    a = np.abs(x) / 2.0
    i0e = special.i0e(a)
    i1e = special.i1e(a)
    neg = (1.0 - x) * i0e - x * i1e
    with np.errstate(over="ignore", invalid="ignore"):
        pos = np.exp(x) * (x * i1e - (x - 1.0) * i0e)
    return _ret(np.where(x <= 0, neg, pos))


def _cf_remainder(x):
    """Return ``c`` with ``1 / (exp(x) E1(x)) = x + c`` for large x.

    Backward evaluation of the continued fraction
    ``exp(x) E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))``; ``c`` is formed
    without cancellation so ``1 - D(x) = c / (x + c)`` keeps full precision.
    """
    t = x + (2 * _CF_TERMS + 1)
    for n in range(_CF_TERMS - 1, 0, -1):
        t = x + (2 * n + 1) - (n + 1) ** 2 / t
    return 1.0 - 1.0 / t


def _d_and_complement(x):
    small = x <= _CF_SWITCH
    xs = np.where(small, x, 1.0)
    xl = np.where(small, _CF_SWITCH + 1.0, x)
    d_small = xs * np.exp(xs) * special.exp1(xs)
    c = _cf_remainder(xl)
    d_large = xl / (xl + c)
    d = np.where(small, d_small, d_large)
    comp = np.where(small, 1.0 - d_small, c / (xl + c))
    return d, comp


def d_func(x):
    """``D(x) = x exp(x) E1(x)`` for x > 0; increases from 0 towards 1.

    For x > 30 the product is taken from a continued fraction for
    ``exp(x) E1(x)`` so ``exp(x)`` is never formed.  ``+inf`` maps to 1.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x <= 0):
        raise DomainError("d_func: x must be positive")
    d, _ = _d_and_complement(np.where(np.isinf(x), 1.0, x))
    return _ret(np.where(np.isinf(x), 1.0, d))


def one_minus_d(x):
    """``1 - D(x)`` evaluated without cancellation for large x."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x <= 0):
        raise DomainError("one_minus_d: x must be positive")
    _, comp = _d_and_complement(np.where(np.isinf(x), 1.0, x))
    return _ret(np.where(np.isinf(x), 0.0, comp))
