"""Channel characterization: observation probability, peak sampling time, ISI mean.

p_obs(t) is the probability that a molecule released at the transmitter is
inside the transparent receiver ball at time t. The quantity is dimensionless
(a probability of presence sampled at decision instants), even though the
literature usually refers to it as the observation-time PDF.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cgf import (
    Concentration,
    SphericalPoint,
    TruncationPolicy,
    cgf_eval,
    cgf_unbounded,
)
from .eigen import Environment, EigenvalueTable


class FlatObjectiveWarning(UserWarning):
    """The observation probability barely varies over the search window."""


class ReceiverOverlapWarning(UserWarning):
    """Receiver ball contains the transmitter; the point approximation degrades."""


@dataclass(frozen=True)
class ReceiverSpec:
    center: SphericalPoint
    radius: float  # m

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"receiver radius must be positive, got {self.radius}")

    def validate_inside(self, env: Environment) -> None:
        if self.center.r + self.radius > env.r_s * (1 + 1e-12):
            raise ValueError("receiver ball must lie inside the environment sphere")

    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3


def _check_overlap(rx: ReceiverSpec, tx: SphericalPoint) -> None:
    d = np.linalg.norm(rx.center.to_cartesian() - tx.to_cartesian())
    if d < rx.radius:
        warnings.warn(
            "transmitter lies inside the receiver ball; the small-receiver "
            "approximation degrades here",
            ReceiverOverlapWarning,
            stacklevel=3,
        )


def p_obs_approx(
    t: float,
    rx: ReceiverSpec,
    tx: SphericalPoint,
    env: Environment,
    table: EigenvalueTable,
    trunc: TruncationPolicy = TruncationPolicy(),
    t0: float = 0.0,
) -> float:
    """Small-receiver approximation: receiver volume times center concentration."""
    rx.validate_inside(env)
    c = cgf_eval(rx.center, t, tx, t0, env, table, trunc)
    return rx.volume() * c.value


def p_obs_unbounded(
    t: float,
    rx: ReceiverSpec,
    tx: SphericalPoint,
    D: float,
    k_d: float = 0.0,
    t0: float = 0.0,
) -> float:
    """Small-receiver observation probability in free space (r_s = inf)."""
    d = float(np.linalg.norm(rx.center.to_cartesian() - tx.to_cartesian()))
    return rx.volume() * cgf_unbounded(d, t, t0, D, k_d).value


def p_obs_exact(
    t: float,
    rx: ReceiverSpec,
    tx: SphericalPoint,
    env: Environment,
    table: EigenvalueTable,
    trunc: TruncationPolicy = TruncationPolicy(),
    t0: float = 0.0,
) -> float:
    """Exact volume integral of the concentration over the receiver ball.

    Mode-wise mean-value identity: every eigenmode solves the Helmholtz
    equation, so its average over the receiver ball is 3 j_1(lam R)/(lam R)
    times its value at the center. The series with those factors folded in is
    the receiver integral evaluated analytically (no quadrature error); the
    tensor quadrature version p_obs_quadrature cross-validates it in tests.
    """
    rx.validate_inside(env)
    c = cgf_eval(rx.center, t, tx, t0, env, table, trunc, ball_radius=rx.radius)
    return rx.volume() * c.value


def p_obs_quadrature(
    t: float,
    rx: ReceiverSpec,
    tx: SphericalPoint,
    env: Environment,
    table: EigenvalueTable,
    trunc: TruncationPolicy = TruncationPolicy(),
    t0: float = 0.0,
    rel_tol: float = 1e-6,
) -> float:
    """Volume integral of the concentration over the receiver ball.

    Tensor Gauss-Legendre rule in receiver-local spherical coordinates,
    order-doubled until two successive orders agree to rel_tol.
    """
    rx.validate_inside(env)
    center = rx.center.to_cartesian()

    def integral(order: int) -> float:
        rho_x, rho_w = np.polynomial.legendre.leggauss(order)
        rho = 0.5 * rx.radius * (rho_x + 1.0)
        rho_w = 0.5 * rx.radius * rho_w
        u_x, u_w = np.polynomial.legendre.leggauss(order)  # u = cos(alpha)
        n_beta = max(order, 4)
        beta = 2.0 * math.pi * np.arange(n_beta) / n_beta
        beta_w = 2.0 * math.pi / n_beta
        total = 0.0
        for i, rv in enumerate(rho):
            for j, uv in enumerate(u_x):
                s = math.sqrt(1.0 - uv * uv)
                for bv in beta:
                    p = center + rv * np.array([s * math.cos(bv), s * math.sin(bv), uv])
                    pt = SphericalPoint.from_cartesian(p)
                    c = cgf_eval(pt, t, tx, t0, env, table, trunc)
                    total += rho_w[i] * u_w[j] * beta_w * rv * rv * c.value
        return total

    prev = integral(8)
    for order in (12, 16, 24, 32):
        cur = integral(order)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    return prev


def find_peak_time(
    rx: ReceiverSpec,
    tx: SphericalPoint,
    env: Environment,
    table: EigenvalueTable | None,
    trunc: TruncationPolicy,
    window: tuple[float, float],
    n_grid: int = 64,
) -> tuple[float, float]:
    """Sampling time maximizing p_obs_approx on the window, and the peak value.

    Coarse log-spaced grid, then golden-section refinement to 1e-4 relative.
    An EigenvalueTable of None dispatches to the unbounded baseline.
    """
    t_lo, t_hi = window
    if not (0 < t_lo < t_hi):
        raise ValueError(f"window must be positive and ordered, got {window}")

    if table is None:
        def f(t):
            return p_obs_unbounded(t, rx, tx, env.D, env.k_d)
    else:
        def f(t):
            return p_obs_approx(t, rx, tx, env, table, trunc)

    grid = np.geomspace(t_lo, t_hi, n_grid)
    vals = np.array([f(t) for t in grid])
    if vals.max() < 1.01 * max(vals.min(), 1e-300):
        warnings.warn(
            "observation probability is nearly flat over the search window",
            FlatObjectiveWarning,
            stacklevel=2,
        )
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_grid - 1)]
    if a == b:
        return float(grid[i]), float(vals[i])
    # golden-section search for the maximum on [a, b]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > 1e-4 * b:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    t_peak = (a + b) / 2.0
    return float(t_peak), float(f(t_peak))


@dataclass(frozen=True)
class ObservationPdf:
    """Tabulated observation probability over a strictly increasing time grid."""

    times: np.ndarray
    values: np.ndarray
    peak_time: float
    peak_value: float

    @staticmethod
    def build(
        rx: ReceiverSpec,
        tx: SphericalPoint,
        env: Environment,
        table: EigenvalueTable | None,
        trunc: TruncationPolicy,
        window: tuple[float, float],
        n_points: int = 256,
    ) -> "ObservationPdf":
        if table is None:
            f = lambda t: p_obs_unbounded(t, rx, tx, env.D, env.k_d)
        else:
            f = lambda t: p_obs_approx(t, rx, tx, env, table, trunc)
        times = np.geomspace(window[0], window[1], n_points)
        values = np.array([f(t) for t in times])
        i = int(np.argmax(values))
        return ObservationPdf(times, values, float(times[i]), float(values[i]))

    def to_csv(self, path, scenario_hash: str = "") -> None:
        with open(path, "w", newline="\n") as fh:
            if scenario_hash:
                fh.write(f"# scenario_hash={scenario_hash}\n")
            fh.write("t_s,p_obs\n")
            for t, v in zip(self.times, self.values):
                fh.write(f"{t:.17g},{v:.17g}\n")


def mean_received(
    bits,
    n_molecules: float,
    t_s: float,
    t0_slot: float,
    p_obs_fn,
) -> float:
    """Poisson mean of the receive count: sum_i b_i N p_obs(i T0 + t_s).

    bits[0] is the current slot, bits[i] the bit transmitted i slots earlier.
    """
    total = 0.0
    for i, b in enumerate(bits):
        if b:
            total += n_molecules * p_obs_fn(i * t0_slot + t_s)
    return total


def scenario_hash(parts: dict) -> str:
    blob = ",".join(f"{k}={parts[k]!r}" for k in sorted(parts))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
