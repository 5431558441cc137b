"""Concentration Green's function inside the bounded sphere.

The response to a unit point release at (r_tx, th_tx, ph_tx), time t0, is the
triple series

  C = sum_n sum_{m<=n} sum_k H_mnk cos(m(ph - ph_tx)) P_n^m(cos th)
        j_n(lam_nk r) exp(-(D lam_nk^2 + k_d)(t - t0))

with H_mnk = L_m (2n+1)/2 (n-m)!/(n+m)! P_n^m(cos th_tx) j_n(lam_nk r_tx)/N_nk,
L_0 = 1/(2 pi), L_m = 1/pi. N_nk is the radial orthogonality norm
(r_s^3/2)(j_n^2 - j_{n-1} j_{n+1}); unit mass at release pins this choice.

Degradation enters only through the global factor exp(-k_d (t - t0)), which the
evaluation keeps as a literal final multiplication so the factorization holds
to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .eigen import Environment, EigenvalueTable, build_table, find_roots, mode_norm
from .specfun import (
    assoc_legendre_p,
    assoc_legendre_seminorm_all,
    legendre_norm_ratio,
    sph_bessel_j,
    sph_jn_all,
)


@dataclass(frozen=True)
class SphericalPoint:
    r: float  # m
    theta: float  # rad, [0, pi]
    phi: float  # rad, [0, 2 pi)

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"radius must be >= 0, got {self.r}")
        if not 0.0 <= self.theta <= math.pi + 1e-12:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")

    def to_cartesian(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array(
            [
                self.r * st * math.cos(self.phi),
                self.r * st * math.sin(self.phi),
                self.r * math.cos(self.theta),
            ]
        )

    @staticmethod
    def from_cartesian(xyz) -> "SphericalPoint":
        x, y, z = float(xyz[0]), float(xyz[1]), float(xyz[2])
        r = math.sqrt(x * x + y * y + z * z)
        if r == 0.0:
            return SphericalPoint(0.0, 0.0, 0.0)
        theta = math.acos(max(-1.0, min(1.0, z / r)))
        phi = math.atan2(y, x) % (2.0 * math.pi)
        return SphericalPoint(r, theta, phi)


@dataclass(frozen=True)
class TruncationPolicy:
    n_max: int = 40
    k_max: int = 80
    rel_tol: float = 1e-8
    t_min_guard: float | None = None  # s; None -> r_s^2/D * 1e-4
    # exp(-x) tail margin on top of ln(1/rel_tol) for the per-degree root cutoff
    margin: float = 5.0

    def __post_init__(self):
        if self.rel_tol <= 0 or self.n_max < 0 or self.k_max < 1:
            raise ValueError("invalid truncation policy")

    def guard(self, env: Environment) -> float:
        if self.t_min_guard is not None:
            return self.t_min_guard
        # 1e-5 s at r_s = 5 um, D = 1e-9 m^2/s; the default k_max (80 roots)
        # covers the root cutoff down to exactly this time scale
        return env.r_s**2 / env.D * 4e-4


@dataclass(frozen=True)
class Concentration:
    value: float  # 1/m^3 per released molecule
    converged: bool
    est_tail: float


def coefficient_H(m: int, n: int, k: int, tx: SphericalPoint, table: EigenvalueTable) -> float:
    """Series coefficient H_mnk; k is 1-based into the table rows."""
    if m > n:
        raise ValueError("order m must not exceed degree n")
    lam = table.lam[n, k - 1]
    norm = table.norm[n, k - 1]
    lm = 1.0 / (2.0 * math.pi) if m == 0 else 1.0 / math.pi
    return (
        lm
        * (2 * n + 1)
        / 2.0
        * legendre_norm_ratio(n, m)
        * assoc_legendre_p(n, m, math.cos(tx.theta))
        * sph_bessel_j(n, lam * tx.r)
        / norm
    )


def _zero_mode_value(env: Environment) -> float:
    return 3.0 / (4.0 * math.pi * env.r_s**3)


@lru_cache(maxsize=64)
def _tx_factors(table: EigenvalueTable, tx: SphericalPoint, n_max: int, k_max: int):
    """Source-side factors j_n(lam_nk r_tx)/N_nk and seminormalized Legendre row."""
    from scipy import special as _sp

    lam = table.lam[: n_max + 1, :k_max]
    orders = np.arange(n_max + 1)[:, None]
    jtx = _sp.spherical_jn(orders, lam * tx.r)
    b = jtx / table.norm[: n_max + 1, :k_max]
    leg_tx = assoc_legendre_seminorm_all(n_max, math.cos(tx.theta))
    return b, leg_tx


def cgf_eval(
    obs: SphericalPoint,
    t: float,
    tx: SphericalPoint,
    t0: float,
    env: Environment,
    table: EigenvalueTable,
    trunc: TruncationPolicy = TruncationPolicy(),
    ball_radius: float = 0.0,
) -> Concentration:
    """Evaluate the truncated series at one space-time point.

    With ball_radius > 0 the result is the exact average of the concentration
    over the ball of that radius centered at obs: each eigenmode satisfies the
    Helmholtz equation, so its ball average is 3 j_1(lam R)/(lam R) times its
    center value (mean-value property); the constant zero mode is unchanged.
    """
    if t < t0:
        raise ValueError(f"t={t} precedes release time t0={t0}")
    if obs.r > env.r_s * (1 + 1e-12) or tx.r > env.r_s * (1 + 1e-12):
        raise ValueError("observation and source points must lie inside the sphere")
    from scipy import special as _sp

    tau = t - t0
    guard_ok = tau >= trunc.guard(env)

    n_max = min(trunc.n_max, table.n_max)
    k_max = min(trunc.k_max, table.k_max)
    b, leg_tx = _tx_factors(table, tx, n_max, k_max)
    leg_obs = assoc_legendre_seminorm_all(n_max, math.cos(obs.theta))
    dphi = obs.phi - tx.phi

    lam = table.lam[: n_max + 1, :k_max]
    orders = np.arange(n_max + 1)
    jr = _sp.spherical_jn(orders[:, None], lam * obs.r)
    if ball_radius > 0.0:
        if obs.r + ball_radius > env.r_s * (1 + 1e-12):
            raise ValueError("averaging ball must lie inside the sphere")
        x = lam * ball_radius
        jr = jr * (3.0 * _sp.spherical_jn(1, x) / x)
    with np.errstate(under="ignore"):
        decay = np.exp(-env.D * lam * lam * tau)
    radial = np.sum(jr * b * decay, axis=1)  # per-degree radial sum

    # seminormalized Legendre folds sqrt((n-m)!/(n+m)!) into each factor, so
    # the product carries the full factorial ratio
    lm = np.full(n_max + 1, 1.0 / math.pi)
    lm[0] = 1.0 / (2.0 * math.pi)
    weights = lm * np.cos(orders * dphi)
    angular = (leg_obs * leg_tx) @ weights * (2 * orders + 1) / 2.0

    terms = angular * radial
    floor = _zero_mode_value(env)

    # adaptive degree cut: stop once two consecutive degrees fall below tol
    acc = terms[0]
    degrees_done = n_max + 1
    small = 0
    for n in range(1, n_max + 1):
        acc += terms[n]
        tn = max(abs(terms[n]), abs(terms[n - 1]))
        if tn < trunc.rel_tol * max(abs(acc), floor):
            small += 1
            if small >= 2:
                degrees_done = n + 1
                break
        else:
            small = 0
    est_tail = float(max(abs(terms[degrees_done - 1]), abs(terms[degrees_done - 2])))

    # more roots would still contribute if the last n=0 root is not yet damped
    log_cut = math.log(1.0 / trunc.rel_tol) + trunc.margin
    k_truncated = env.D * float(lam[0, -1]) ** 2 * tau < log_cut
    degree_converged = (
        degrees_done <= n_max or est_tail <= trunc.rel_tol * max(abs(acc), floor)
    )
    converged = guard_ok and degree_converged and not k_truncated

    value = float(acc)
    if table.zero_mode_included:
        value += _zero_mode_value(env)
    value *= math.exp(-env.k_d * tau)
    return Concentration(value=value, converged=converged, est_tail=est_tail)


@lru_cache(maxsize=32)
def _origin_modes(env: Environment, k_max: int):
    lam = find_roots(0, env, k_max)
    norm = np.array([mode_norm(0, lv, env) for lv in lam])
    return lam, norm


def cgf_origin(
    r_other: float,
    t: float,
    t0: float,
    env: Environment,
    trunc: TruncationPolicy = TruncationPolicy(),
) -> Concentration:
    """Fast path with one endpoint at the origin: only the n = 0 modes survive.

    By reciprocity the result is the same whether the origin point is the
    source or the observer.
    """
    if t < t0:
        raise ValueError(f"t={t} precedes release time t0={t0}")
    tau = t - t0
    lam, norm = _origin_modes(env, trunc.k_max)
    if tau > 0:
        lam_cut2 = (math.log(1.0 / trunc.rel_tol) + trunc.margin) / (env.D * tau)
        kk = int(np.searchsorted(lam * lam, lam_cut2, side="right"))
        k_truncated = kk >= len(lam)
        kk = min(max(kk, 1), len(lam))
    else:
        kk, k_truncated = len(lam), True
    lamk, normk = lam[:kk], norm[:kk]
    j_obs = sph_jn_all(0, lamk * r_other)[0]
    acc = float(
        np.sum(j_obs / normk * np.exp(-env.D * lamk * lamk * tau))
    ) / (4.0 * math.pi)
    if env.reflective:
        acc += _zero_mode_value(env)
    value = acc * math.exp(-env.k_d * tau)
    guard_ok = tau >= trunc.guard(env)
    return Concentration(value=value, converged=guard_ok and not k_truncated, est_tail=0.0)


def cgf_unbounded(distance: float, t: float, t0: float, D: float, k_d: float = 0.0) -> Concentration:
    """Free-space Gaussian kernel with degradation, the r_s = inf baseline."""
    if t <= t0:
        raise ValueError(f"t={t} must exceed release time t0={t0}")
    if distance < 0:
        raise ValueError("distance must be >= 0")
    tau = t - t0
    value = (4.0 * math.pi * D * tau) ** -1.5 * math.exp(
        -(distance * distance) / (4.0 * D * tau)
    ) * math.exp(-k_d * tau)
    return Concentration(value=value, converged=True, est_tail=0.0)


def mass_in_sphere(
    t: float,
    tx: SphericalPoint,
    t0: float,
    env: Environment,
    trunc: TruncationPolicy = TruncationPolicy(),
    k_max: int | None = None,
) -> float:
    """Total molecule mass remaining inside the sphere at time t.

    The angular integrals of every m >= 1 or n >= 1 term vanish exactly
    (Fourier and Legendre orthogonality), so the volume integral reduces to the
    n = 0 radial series with int_0^R j_0(lam r) r^2 dr = R^2 j_1(lam R)/lam.
    """
    if t < t0:
        raise ValueError(f"t={t} precedes release time t0={t0}")
    tau = t - t0
    kk = k_max if k_max is not None else trunc.k_max
    lam, norm = _origin_modes(env, kk)
    x = lam * env.r_s
    radial_int = env.r_s**2 * sph_jn_all(1, x)[1] / lam
    j_tx = sph_jn_all(0, lam * tx.r)[0]
    mass = float(
        np.sum(j_tx / norm * radial_int * np.exp(-env.D * lam * lam * tau))
    )
    if env.reflective:
        mass += 1.0  # zero mode carries exactly unit mass
    return mass * math.exp(-env.k_d * tau)


def with_k_max(trunc: TruncationPolicy, k_max: int) -> TruncationPolicy:
    return replace(trunc, k_max=k_max)
