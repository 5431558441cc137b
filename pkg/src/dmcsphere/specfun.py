"""Spherical Bessel functions of the first kind and associated Legendre functions.

Only the functions that are regular on the closed ball are provided: the
second-kind companions (y_n, Q_n^m) blow up at r = 0 / theta in {0, pi} and
never enter the concentration series.

Sign convention for P_n^m: NO Condon-Shortley phase, i.e.
P_n^m(x) = (1-x^2)^{m/2} d^m/dx^m P_n(x).
The concentration series only uses products P_n^m(cos th_tx) * P_n^m(cos th),
so a global phase would cancel anyway; fixing one keeps tests deterministic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

MAX_DEGREE = 128

# Miller downward recurrence headroom and rescale guard
_MILLER_OFFSET = 40
_BIG = 1e250


class SpecFunDomainError(ValueError):
    """Argument outside the supported domain (x < 0, m > n, |x| > 1, n too large)."""


class ConditionFlag(enum.Enum):
    OK = "ok"
    UNDERFLOW_TO_ZERO = "underflow_to_zero"
    LOSS_OF_PRECISION = "loss_of_precision"


@dataclass(frozen=True)
class SpecFunResult:
    value: float
    condition_flag: ConditionFlag = ConditionFlag.OK


def _check_degree(n: int) -> None:
    if n < 0:
        raise SpecFunDomainError(f"degree must be nonnegative, got {n}")
    if n > MAX_DEGREE:
        raise SpecFunDomainError(f"degree {n} exceeds max degree {MAX_DEGREE}")


def sph_bessel_j_result(n: int, x: float) -> SpecFunResult:
    """j_n(x) with an explicit condition flag instead of silent under/overflow."""
    _check_degree(n)
    if x < 0 or not math.isfinite(x):
        raise SpecFunDomainError(f"argument must be finite and >= 0, got {x}")
    if x == 0.0:
        return SpecFunResult(1.0 if n == 0 else 0.0)
    if n == 0:
        return SpecFunResult(math.sin(x) / x)

    # leading order x^n / (2n+1)!!: if that underflows, so does j_n
    log_lead = n * math.log(x) - _log_double_factorial(2 * n + 1)
    if log_lead < -745.0:
        return SpecFunResult(0.0, ConditionFlag.UNDERFLOW_TO_ZERO)

    if x > n:
        # upward recurrence is stable when x exceeds the order
        jm, j = math.sin(x) / x, math.sin(x) / (x * x) - math.cos(x) / x
        for k in range(1, n):
            jm, j = j, (2 * k + 1) / x * j - jm
        return SpecFunResult(j)

    # Miller downward recurrence with normalization against j_0 or j_1
    top = n + _MILLER_OFFSET + int(x)
    fp = 0.0  # f_{k+1}
    f = 1e-30  # f_k
    target = 0.0
    f0 = f1 = 0.0
    for k in range(top, 0, -1):
        fm = (2 * k + 1) / x * f - fp  # f_{k-1}
        fp, f = f, fm
        if abs(f) > _BIG:
            f /= _BIG
            fp /= _BIG
            target /= _BIG
        if k - 1 == n:
            target = f
        if k - 1 == 1:
            f1 = f
        if k - 1 == 0:
            f0 = f
    j0 = math.sin(x) / x
    j1 = math.sin(x) / (x * x) - math.cos(x) / x
    # normalize by whichever reference value is better conditioned
    if abs(j0) >= abs(j1):
        value = target * (j0 / f0)
    else:
        value = target * (j1 / f1)
    if value == 0.0:
        return SpecFunResult(0.0, ConditionFlag.UNDERFLOW_TO_ZERO)
    return SpecFunResult(value)


def sph_bessel_j(n: int, x: float) -> float:
    """Spherical Bessel function of the first kind, j_n(x)."""
    return sph_bessel_j_result(n, x).value


def sph_bessel_j_prime(n: int, x: float) -> float:
    """d j_n / dx via j_n'(x) = j_{n-1}(x) - ((n+1)/x) j_n(x); j_0' = -j_1."""
    _check_degree(n)
    if x < 0 or not math.isfinite(x):
        raise SpecFunDomainError(f"argument must be finite and >= 0, got {x}")
    if n == 0:
        return -sph_bessel_j(1, x)
    if x == 0.0:
        return 1.0 / 3.0 if n == 1 else 0.0
    return sph_bessel_j(n - 1, x) - (n + 1) / x * sph_bessel_j(n, x)


def sph_jn_all(n_max: int, x: np.ndarray) -> np.ndarray:
    """j_n(x) for all orders 0..n_max at each point of `x`, shape (n_max+1, len(x)).

    Vectorized fast path for the series evaluation; delegates to scipy.
    Agreement with sph_bessel_j is pinned by tests.
    """
    _check_degree(n_max)
    x = np.asarray(x, dtype=float)
    orders = np.arange(n_max + 1)
    return _sp.spherical_jn(orders[:, None], x[None, :])


def _log_double_factorial(m: int) -> float:
    # (2k+1)!! = (2k+1)! / (2^k k!)
    k = (m - 1) // 2
    return math.lgamma(m + 1) - k * math.log(2.0) - math.lgamma(k + 1)


def assoc_legendre_p(n: int, m: int, x: float) -> float:
    """Associated Legendre function P_n^m(x) without the Condon-Shortley phase."""
    _check_degree(n)
    if m < 0 or m > n:
        raise SpecFunDomainError(f"order must satisfy 0 <= m <= n, got m={m}, n={n}")
    if abs(x) > 1.0:
        raise SpecFunDomainError(f"argument must lie in [-1, 1], got {x}")
    # P_m^m = (2m-1)!! (1-x^2)^{m/2}
    s2 = (1.0 - x) * (1.0 + x)
    pmm = 1.0
    if m > 0:
        fact = 1.0
        sroot = math.sqrt(s2)
        for _ in range(m):
            pmm *= fact * sroot
            fact += 2.0
    if n == m:
        return pmm
    pmmp1 = x * (2 * m + 1) * pmm
    if n == m + 1:
        return pmmp1
    for nn in range(m + 2, n + 1):
        pmm, pmmp1 = pmmp1, (x * (2 * nn - 1) * pmmp1 - (nn + m - 1) * pmm) / (nn - m)
    return pmmp1


def legendre_norm_ratio(n: int, m: int) -> float:
    """(n-m)!/(n+m)! as a running product of reciprocals (no large factorials)."""
    _check_degree(n)
    if m < 0 or m > n:
        raise SpecFunDomainError(f"order must satisfy 0 <= m <= n, got m={m}, n={n}")
    out = 1.0
    for i in range(n - m + 1, n + m + 1):
        out /= i
    return out


def assoc_legendre_seminorm_all(n_max: int, x: float) -> np.ndarray:
    """sqrt((n-m)!/(n+m)!) * P_n^m(x) for all 0 <= m <= n <= n_max.

    The semi-normalized functions obey an overflow-free recurrence, so the
    series coefficients stay representable even at degrees where the plain
    P_n^m and the factorial ratio individually over/underflow.
    Returns shape (n_max+1, n_max+1); entries with m > n are zero.
    """
    _check_degree(n_max)
    if abs(x) > 1.0:
        raise SpecFunDomainError(f"argument must lie in [-1, 1], got {x}")
    out = np.zeros((n_max + 1, n_max + 1))
    s = math.sqrt((1.0 - x) * (1.0 + x))
    # ~P_m^m = s^m * sqrt(prod_{k=1..m} (2k-1)/(2k))
    pmm = 1.0
    out[0, 0] = 1.0
    for m in range(1, n_max + 1):
        pmm *= s * math.sqrt((2 * m - 1) / (2.0 * m))
        out[m, m] = pmm
    for m in range(0, n_max + 1):
        if m + 1 <= n_max:
            out[m + 1, m] = x * math.sqrt(2 * m + 1.0) * out[m, m]
        for n in range(m + 2, n_max + 1):
            a = (2 * n - 1) * x / math.sqrt((n - m) * (n + m))
            b = math.sqrt((n - m - 1.0) * (n + m - 1.0) / ((n - m) * (n + m)))
            out[n, m] = a * out[n - 1, m] - b * out[n - 2, m]
    return out
