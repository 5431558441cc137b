"""Particle-based Brownian simulator: the independent oracle for the series.

Rules per time step, for every alive particle:
  1. Gaussian displacement N(0, 2 D dt) per Cartesian axis.
  2. Degradation: removed with probability k_d dt.
  3. Boundary: if the proposed point leaves the sphere, the molecule binds with
     probability k_f sqrt(pi dt / D) (removed permanently), otherwise it is
     reflected specularly about the tangent plane at the crossing point
     (at most 8 iterations, then clamped to the crossing point).
  4. Absorbing limit only (binding probability 1): a particle whose step starts
     and ends inside may still have touched the wall mid-step. It is absorbed
     with the Brownian-bridge first-passage probability exp(-d0 d1 / (D dt)),
     where d0, d1 are the wall distances of the two endpoints. Without this,
     endpoint-only absorption is biased by O(sqrt(D dt)): the survivor
     population decays visibly too slowly at the reference step size. The
     finite-k_f binding probability needs no such term because its sqrt(pi)
     constant is calibrated for endpoint-crossing detection.

Randomness is a counter-based splitmix64 stream per particle, derived from
(seed, particle index), so results are reproducible and independent of how the
particle loop is scheduled. The hot kernel is numba-compiled; setting
DMCSPHERE_NO_NUMBA=1 selects the pure-numpy path (same streams, same rules).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .cgf import SphericalPoint
from .eigen import Environment

_USE_NUMBA = not os.environ.get("DMCSPHERE_NO_NUMBA")


class ValidityConditionError(RuntimeError):
    """k_f sqrt(dt/2D) is too large for the boundary-binding probability model."""


class ValidityConditionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PbsConfig:
    dt: float  # s
    n_particles: int
    seed: int = 0
    bin_width: float = 1e-3  # s, histogram resolution
    record_window: tuple[float, float] = (1e-3, 0.2)  # s

    def __post_init__(self):
        if self.dt <= 0 or self.n_particles < 1 or self.bin_width <= 0:
            raise ValueError("invalid PBS configuration")
        lo, hi = self.record_window
        if not 0 <= lo < hi:
            raise ValueError("record window must be ordered and nonnegative")


def binding_probability(env: Environment, dt: float) -> float:
    """Per-hit binding probability k_f sqrt(pi dt / D); 1 in the absorbing limit."""
    if env.absorbing:
        return 1.0
    return min(1.0, env.k_f * math.sqrt(math.pi * dt / env.D))


def validity_ratio(env: Environment, dt: float) -> float:
    """k_f sqrt(dt/2D) relative to its smallness scale 1/sqrt(2 pi)."""
    if env.absorbing:
        return 0.0  # absorbing limit is exact, no small-probability model involved
    return env.k_f * math.sqrt(dt / (2.0 * env.D)) * math.sqrt(2.0 * math.pi)


def check_validity(env: Environment, dt: float) -> float:
    ratio = validity_ratio(env, dt)
    if ratio > 0.1:
        raise ValidityConditionError(
            f"validity ratio {ratio:.4g} exceeds 0.1; reduce dt or k_f"
        )
    if ratio > 0.01:
        warnings.warn(
            f"validity ratio {ratio:.4g} exceeds 0.01; binding probability model "
            "is only first-order accurate here",
            ValidityConditionWarning,
            stacklevel=2,
        )
    return ratio


# --- counter-based RNG shared by both kernel paths -------------------------

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0**-53


def mix64(z):
    """splitmix64 finalizer; works on numpy uint64 scalars and arrays."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def particle_states(seed: int, n: int, start: int = 0) -> np.ndarray:
    """Initial stream states for particles start..start+n-1."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    return mix64(np.uint64(seed) + idx * GAMMA)


def draw_uniform(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Advance each stream one step; uniform in (0, 1]."""
    state = state + GAMMA
    z = mix64(state)
    return state, ((z >> np.uint64(11)).astype(np.float64) + 1.0) * _U53


def draw_normal(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One standard normal per stream via Box-Muller (two uniforms each)."""
    state, u1 = draw_uniform(state)
    state, u2 = draw_uniform(state)
    return state, np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


# --- single-step reference operations (numpy path) --------------------------

ALIVE, DEGRADED, BOUND = 0, 1, 2


def reflect_specular(pos: np.ndarray, proposed: np.ndarray, r_s: float,
                     max_iter: int = 8) -> tuple[np.ndarray, bool]:
    """Reflect one displacement segment off the sphere; True if clamped."""
    p = pos.astype(float).copy()
    q = proposed.astype(float).copy()
    hit = p
    for _ in range(max_iter):
        if q @ q <= r_s * r_s:
            return q, False
        d = q - p
        a = d @ d
        b = 2.0 * (p @ d)
        c = p @ p - r_s * r_s
        disc = max(b * b - 4.0 * a * c, 0.0)
        s = (-b + math.sqrt(disc)) / (2.0 * a)
        s = min(max(s, 0.0), 1.0)
        hit = p + s * d
        nhat = hit / r_s
        q = q - 2.0 * ((q - hit) @ nhat) * nhat
        p = hit
    return hit * (1.0 - 1e-12), True


def handle_boundary(
    pos: np.ndarray,
    proposed: np.ndarray,
    env: Environment,
    dt: float,
    u_bind: float,
) -> tuple[np.ndarray, int, bool]:
    """Boundary rule for one particle: (new position, status, clamped)."""
    if proposed @ proposed <= env.r_s**2:
        return proposed, ALIVE, False
    if u_bind < binding_probability(env, dt):
        return proposed, BOUND, False
    new, clamped = reflect_specular(pos, proposed, env.r_s)
    return new, ALIVE, clamped


def step(
    positions: np.ndarray,
    status: np.ndarray,
    state: np.ndarray,
    env: Environment,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance every alive particle one step (vectorized reference path).

    Consumes, per alive particle: 6 uniforms (three Box-Muller normals), one
    degradation uniform, and one more uniform if the proposal leaves the
    sphere (binding) or, in the absorbing limit, if either endpoint is near
    the wall (Brownian-bridge first-passage check; module docstring, rule 4).
    Returns updated (positions, status, state).
    """
    positions = positions.copy()
    status = status.copy()
    state = state.copy()
    alive = status == ALIVE
    if not alive.any():
        return positions, status, state
    idx = np.nonzero(alive)[0]
    st = state[idx]
    sigma = math.sqrt(2.0 * env.D * dt)
    disp = np.empty((idx.size, 3))
    for ax in range(3):
        st, g = draw_normal(st)
        disp[:, ax] = sigma * g
    proposed = positions[idx] + disp
    st, u_deg = draw_uniform(st)
    dead = u_deg < env.k_d * dt
    qq = np.einsum("ij,ij->i", proposed, proposed)
    outside = qq > env.r_s**2
    need_bind = outside & ~dead
    p_bind = binding_probability(env, dt)
    bridge = p_bind >= 1.0
    rin2 = max(env.r_s - 5.0 * math.sqrt(2.0 * env.D * dt), 0.0) ** 2
    if bridge:
        pp = np.einsum("ij,ij->i", positions[idx], positions[idx])
        near = ~outside & ~dead & ((qq > rin2) | (pp > rin2))
    else:
        near = np.zeros(idx.size, dtype=bool)
    u_extra = np.full(idx.size, np.nan)
    extra = need_bind | near
    if extra.any():
        sub = np.nonzero(extra)[0]
        st_sub, ub = draw_uniform(st[sub])
        st[sub] = st_sub
        u_extra[sub] = ub
    for j in range(idx.size):
        i = idx[j]
        if dead[j]:
            status[i] = DEGRADED
            continue
        if outside[j]:
            if u_extra[j] < p_bind:
                status[i] = BOUND
                continue
            positions[i], _ = reflect_specular(positions[i], proposed[j], env.r_s)
        else:
            if near[j]:
                d0 = env.r_s - math.sqrt(pp[j])
                d1 = env.r_s - math.sqrt(qq[j])
                if u_extra[j] < math.exp(-d0 * d1 / (env.D * dt)):
                    status[i] = BOUND
                    continue
            positions[i] = proposed[j]
    state[idx] = st
    return positions, status, state


# --- full-run kernels --------------------------------------------------------


def _simulate_core(seed, n_particles, n_steps, steps_per_bin, first_bin_step,
                   n_bins, sigma, p_deg, p_bind, r_s, tx0, tx1, tx2,
                   rx0, rx1, rx2, rrx2):
    counts = np.zeros(n_bins, dtype=np.int64)
    alive_counts = np.zeros(n_bins, dtype=np.int64)
    n_degraded = 0
    n_bound = 0
    n_clamped = 0
    rs2 = r_s * r_s
    two_pi = 2.0 * math.pi
    u53 = 2.0**-53
    # absorbing limit: within-step wall-touch (Brownian bridge) parameters;
    # the check is skipped when both endpoints are > 5 sigma from the wall
    # (first-passage probability < e^-50 there)
    bridge = p_bind >= 1.0
    ddt = 0.5 * sigma * sigma  # = D dt
    rin = r_s - 5.0 * sigma
    if rin < 0.0:
        rin = 0.0
    rin2 = rin * rin
    gamma = np.uint64(0x9E3779B97F4A7C15)
    m1 = np.uint64(0xBF58476D1CE4E5B9)
    m2 = np.uint64(0x94D049BB133111EB)
    s30 = np.uint64(30)
    s27 = np.uint64(27)
    s31 = np.uint64(31)
    s11 = np.uint64(11)
    seed_u = np.uint64(seed)
    for i in range(n_particles):
        s = seed_u + np.uint64(i + 1) * gamma
        s = (s ^ (s >> s30)) * m1
        s = (s ^ (s >> s27)) * m2
        s = s ^ (s >> s31)
        px, py, pz = tx0, tx1, tx2
        for t in range(n_steps):
            # three Box-Muller normals, 2 uniforms each
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u1 = (float(z >> s11) + 1.0) * u53
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u2 = (float(z >> s11) + 1.0) * u53
            gx = math.sqrt(-2.0 * math.log(u1)) * math.cos(two_pi * u2)
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u1 = (float(z >> s11) + 1.0) * u53
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u2 = (float(z >> s11) + 1.0) * u53
            gy = math.sqrt(-2.0 * math.log(u1)) * math.cos(two_pi * u2)
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u1 = (float(z >> s11) + 1.0) * u53
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u2 = (float(z >> s11) + 1.0) * u53
            gz = math.sqrt(-2.0 * math.log(u1)) * math.cos(two_pi * u2)
            qx = px + sigma * gx
            qy = py + sigma * gy
            qz = pz + sigma * gz
            # degradation before boundary handling
            s = s + gamma
            z = (s ^ (s >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u_deg = (float(z >> s11) + 1.0) * u53
            if u_deg < p_deg:
                n_degraded += 1
                break
            q2 = qx * qx + qy * qy + qz * qz
            if q2 > rs2:
                s = s + gamma
                z = (s ^ (s >> s30)) * m1
                z = (z ^ (z >> s27)) * m2
                z = z ^ (z >> s31)
                u_bind = (float(z >> s11) + 1.0) * u53
                if u_bind < p_bind:
                    n_bound += 1
                    break
                # specular reflection, at most 8 bounces, then clamp
                hx, hy, hz = px, py, pz
                ok = False
                for _ in range(8):
                    if qx * qx + qy * qy + qz * qz <= rs2:
                        ok = True
                        break
                    dx = qx - px
                    dy = qy - py
                    dz = qz - pz
                    a = dx * dx + dy * dy + dz * dz
                    bq = 2.0 * (px * dx + py * dy + pz * dz)
                    c = px * px + py * py + pz * pz - rs2
                    disc = bq * bq - 4.0 * a * c
                    if disc < 0.0:
                        disc = 0.0
                    sfrac = (-bq + math.sqrt(disc)) / (2.0 * a)
                    if sfrac < 0.0:
                        sfrac = 0.0
                    elif sfrac > 1.0:
                        sfrac = 1.0
                    hx = px + sfrac * dx
                    hy = py + sfrac * dy
                    hz = pz + sfrac * dz
                    dot = ((qx - hx) * hx + (qy - hy) * hy + (qz - hz) * hz) / (r_s * r_s)
                    qx = qx - 2.0 * dot * hx
                    qy = qy - 2.0 * dot * hy
                    qz = qz - 2.0 * dot * hz
                    px, py, pz = hx, hy, hz
                if not ok:
                    n_clamped += 1
                    qx = hx * (1.0 - 1e-12)
                    qy = hy * (1.0 - 1e-12)
                    qz = hz * (1.0 - 1e-12)
            elif bridge and (q2 > rin2 or px * px + py * py + pz * pz > rin2):
                # both endpoints inside but near the wall: Brownian-bridge
                # first-passage check (module docstring, rule 4)
                d0 = r_s - math.sqrt(px * px + py * py + pz * pz)
                d1 = r_s - math.sqrt(q2)
                s = s + gamma
                z = (s ^ (s >> s30)) * m1
                z = (z ^ (z >> s27)) * m2
                z = z ^ (z >> s31)
                u_brg = (float(z >> s11) + 1.0) * u53
                if u_brg < math.exp(-d0 * d1 / ddt):
                    n_bound += 1
                    break
            px, py, pz = qx, qy, qz
            # record at bin boundaries
            rem = t + 1 - first_bin_step
            if rem >= 0 and rem % steps_per_bin == 0:
                bin_idx = rem // steps_per_bin
                if bin_idx < n_bins:
                    alive_counts[bin_idx] += 1
                    ddx = px - rx0
                    ddy = py - rx1
                    ddz = pz - rx2
                    if ddx * ddx + ddy * ddy + ddz * ddz <= rrx2:
                        counts[bin_idx] += 1
    return counts, alive_counts, n_degraded, n_bound, n_clamped


if _USE_NUMBA:
    try:
        from numba import njit

        _simulate_kernel = njit(cache=True)(_simulate_core)
    except ImportError:  # pragma: no cover
        _USE_NUMBA = False
        _simulate_kernel = None

if not _USE_NUMBA:
    _simulate_kernel = None


def _simulate_numpy(seed, n_particles, n_steps, steps_per_bin, first_bin_step,
                    n_bins, sigma, p_deg, p_bind, r_s, tx, rxc, rrx2):
    """Vectorized fallback; identical streams and rules as the numba kernel."""
    counts = np.zeros(n_bins, dtype=np.int64)
    alive_counts = np.zeros(n_bins, dtype=np.int64)
    n_degraded = n_bound = n_clamped = 0
    rs2 = r_s * r_s
    bridge = p_bind >= 1.0
    ddt = 0.5 * sigma * sigma
    rin2 = max(r_s - 5.0 * sigma, 0.0) ** 2

    pos = np.tile(np.asarray(tx, dtype=float), (n_particles, 1))
    state = particle_states(seed, n_particles)
    active = np.arange(n_particles)

    for t in range(n_steps):
        if active.size == 0:
            break
        st = state[active]
        disp = np.empty((active.size, 3))
        for ax in range(3):
            st, g = draw_normal(st)
            disp[:, ax] = sigma * g
        proposed = pos[active] + disp
        st, u_deg = draw_uniform(st)
        dead = u_deg < p_deg
        qq = np.einsum("ij,ij->i", proposed, proposed)
        outside = qq > rs2
        need_bind = outside & ~dead
        bound = np.zeros(active.size, dtype=bool)
        if bridge:
            pp = np.einsum("ij,ij->i", pos[active], pos[active])
            near = ~outside & ~dead & ((qq > rin2) | (pp > rin2))
        else:
            near = np.zeros(active.size, dtype=bool)
        extra = need_bind | near
        if extra.any():
            sub = np.nonzero(extra)[0]
            st_sub, ub = draw_uniform(st[sub])
            st[sub] = st_sub
            u = np.empty(active.size)
            u[sub] = ub
            bound[need_bind] = u[need_bind] < p_bind
            if near.any():
                d0 = r_s - np.sqrt(pp[near])
                d1 = r_s - np.sqrt(qq[near])
                bound[near] = u[near] < np.exp(-d0 * d1 / ddt)
        n_degraded += int(dead.sum())
        n_bound += int(bound.sum())
        reflect = outside & ~dead & ~bound
        for j in np.nonzero(reflect)[0]:
            proposed[j], clamped = reflect_specular(pos[active[j]], proposed[j], r_s)
            n_clamped += int(clamped)
        state[active] = st
        survive = ~dead & ~bound
        pos[active[survive]] = proposed[survive]
        active = active[survive]

        rem = t + 1 - first_bin_step
        if rem >= 0 and rem % steps_per_bin == 0:
            bin_idx = rem // steps_per_bin
            if bin_idx < n_bins:
                alive_counts[bin_idx] = active.size
                d = pos[active] - np.asarray(rxc)
                counts[bin_idx] = int(
                    np.count_nonzero(np.einsum("ij,ij->i", d, d) <= rrx2)
                )
    return counts, alive_counts, n_degraded, n_bound, n_clamped


@dataclass(frozen=True)
class PbsHistogram:
    times: np.ndarray
    p_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_alive: np.ndarray
    n_particles: int
    n_degraded: int
    n_bound: int
    n_clamped: int
    validity_ratio: float

    @property
    def peak_time(self) -> float:
        return float(self.times[int(np.argmax(self.p_hat))])

    @property
    def peak_value(self) -> float:
        return float(self.p_hat.max())

    def to_csv(self, path, header_extra: str = "") -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(
                f"# n_particles={self.n_particles} validity_ratio={self.validity_ratio:.6g} "
                f"n_degraded={self.n_degraded} n_bound={self.n_bound} "
                f"n_clamped={self.n_clamped}\n"
            )
            if header_extra:
                fh.write(f"# {header_extra}\n")
            fh.write("t_s,p_hat,ci_lo,ci_hi,n_alive\n")
            for row in zip(self.times, self.p_hat, self.ci_lo, self.ci_hi, self.n_alive):
                fh.write(
                    f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{int(row[4])}\n"
                )


def _wilson_interval(k: np.ndarray, n: int, z: float = 1.959963984540054):
    """Wilson score interval; well behaved at zero counts."""
    phat = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return np.maximum(center - half, 0.0), np.minimum(center + half, 1.0)


def estimate_p_obs(
    tx: SphericalPoint,
    rx_center: SphericalPoint,
    rx_radius: float,
    env: Environment,
    cfg: PbsConfig,
) -> PbsHistogram:
    """Release cfg.n_particles at tx and histogram receiver occupancy over time."""
    if tx.r > env.r_s or rx_center.r + rx_radius > env.r_s * (1 + 1e-12):
        raise ValueError("transmitter and receiver must lie inside the sphere")
    ratio = check_validity(env, cfg.dt)
    spb = cfg.bin_width / cfg.dt
    if abs(spb - round(spb)) > 1e-9:
        raise ValueError("bin_width must be an integer multiple of dt")
    spb = int(round(spb))
    t_lo, t_hi = cfg.record_window
    first_step = int(round(t_lo / cfg.dt))
    if abs(first_step * cfg.dt - t_lo) > 1e-9 * max(t_lo, cfg.dt):
        raise ValueError("record window start must be an integer multiple of dt")
    if first_step < 1:
        raise ValueError("record window must start at or after the first step")
    n_bins = int(math.floor((t_hi - t_lo) / cfg.bin_width + 1e-9)) + 1
    n_steps = first_step + (n_bins - 1) * spb

    args = (
        cfg.seed,
        cfg.n_particles,
        n_steps,
        spb,
        first_step,
        n_bins,
        math.sqrt(2.0 * env.D * cfg.dt),
        env.k_d * cfg.dt,
        binding_probability(env, cfg.dt),
        env.r_s,
    )
    txc = tx.to_cartesian()
    rxc = rx_center.to_cartesian()
    if _simulate_kernel is not None:
        out = _simulate_kernel(
            *args, txc[0], txc[1], txc[2], rxc[0], rxc[1], rxc[2], rx_radius**2
        )
    else:
        out = _simulate_numpy(*args, txc, rxc, rx_radius**2)
    counts, alive_counts, n_degraded, n_bound, n_clamped = out
    times = t_lo + np.arange(n_bins) * cfg.bin_width
    p_hat = counts / cfg.n_particles
    ci_lo, ci_hi = _wilson_interval(counts.astype(float), cfg.n_particles)
    return PbsHistogram(
        times=times,
        p_hat=p_hat,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        n_alive=alive_counts,
        n_particles=cfg.n_particles,
        n_degraded=int(n_degraded),
        n_bound=int(n_bound),
        n_clamped=int(n_clamped),
        validity_ratio=ratio,
    )
