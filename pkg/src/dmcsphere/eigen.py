"""Eigenvalues of the radial Robin problem on the ball.

For each angular degree n, the radial factor j_n(lambda r) must satisfy
D lambda j_n'(lambda r_s) = -k_f j_n(lambda r_s); the positive roots
lambda_nk (k = 1, 2, ...) together with their orthogonality norms
N_nk = (r_s^3/2)(j_n^2 - j_{n-1} j_{n+1}) at x = lambda r_s form the
spectral skeleton of the concentration series.

k_f = inf is handled symbolically via the Dirichlet condition
j_n(lambda r_s) = 0 rather than a huge finite k_f.

In the reflective, n = 0 case (k_f = 0) the constant eigenfunction with
lambda = 0 is a genuine mode (norm r_s^3/3) and is required for mass
conservation; it is tracked separately from the positive roots.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .specfun import sph_bessel_j, sph_bessel_j_prime

TOL_ROOT = 1e-12  # relative tolerance on lambda


class RootFindingError(RuntimeError):
    """A bracket could not be located or refined for some (n, k)."""


@dataclass(frozen=True)
class Environment:
    """Physical constants of the bounded sphere, strict SI units."""

    r_s: float  # sphere radius, m
    D: float  # diffusion coefficient, m^2/s
    k_d: float = 0.0  # degradation rate, 1/s
    k_f: float = 0.0  # boundary forward reaction rate, m/s; math.inf = absorbing

    def __post_init__(self):
        if not (self.r_s > 0 and math.isfinite(self.r_s)):
            raise ValueError(f"r_s must be positive and finite, got {self.r_s}")
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ValueError(f"D must be positive and finite, got {self.D}")
        if self.k_d < 0 or not math.isfinite(self.k_d):
            raise ValueError(f"k_d must be >= 0, got {self.k_d}")
        if self.k_f < 0:
            raise ValueError(f"k_f must be >= 0 (inf allowed), got {self.k_f}")

    @property
    def absorbing(self) -> bool:
        return math.isinf(self.k_f)

    @property
    def reflective(self) -> bool:
        return self.k_f == 0.0


def _boundary_fn(n: int, env: Environment):
    """Boundary condition as a function of x = lambda * r_s."""
    if env.absorbing:
        return lambda x: sph_bessel_j(n, x)
    c = env.D / env.r_s
    kf = env.k_f
    return lambda x: c * x * sph_bessel_j_prime(n, x) + kf * sph_bessel_j(n, x)


def find_roots(n: int, env: Environment, k_max: int) -> np.ndarray:
    """First k_max positive roots lambda_nk (1/m), strictly increasing.

    Scans x = lambda r_s in steps of pi/8 (asymptotic spacing is pi), collects
    sign changes, refines each bracket with Brent's method. Raises rather than
    returning a partial list.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    f = _boundary_fn(n, env)
    step = math.pi / 8.0
    # j_n underflows for x << n; nothing happens before x ~ n
    x = max(1e-9, 0.5 * n)
    x_stop = n + math.pi * (k_max + 8) + 20.0
    roots: list[float] = []
    f_prev = f(x)
    while len(roots) < k_max and x < x_stop:
        x_next = x + step
        f_next = f(x_next)
        if f_prev == 0.0:
            # landed exactly on a root or in the underflow region; nudge on
            f_prev = f_next
            x = x_next
            continue
        if f_next != 0.0 and (f_prev < 0) != (f_next < 0):
            try:
                r = optimize.brentq(f, x, x_next, xtol=1e-300, rtol=8.9e-16)
            except Exception as exc:  # pragma: no cover - defensive
                raise RootFindingError(
                    f"failed to refine root k={len(roots) + 1} for degree n={n}"
                ) from exc
            roots.append(r)
        f_prev = f_next
        x = x_next
    if len(roots) < k_max:
        raise RootFindingError(
            f"found only {len(roots)}/{k_max} roots for degree n={n}; scan exhausted"
        )
    return np.array(roots) / env.r_s


def mode_norm(n: int, lam: float, env: Environment) -> float:
    """Orthogonality norm N_nk = (r_s^3/2)(j_n^2(x) - j_{n-1}(x) j_{n+1}(x)), x = lam r_s.

    For n = 0 the j_{-1} term is cos(x)/x. The zero mode (n=0, lam=0) has the
    constant eigenfunction, norm r_s^3/3.
    """
    if lam == 0.0:
        return env.r_s**3 / 3.0
    x = lam * env.r_s
    jn = sph_bessel_j(n, x)
    jp = sph_bessel_j(n + 1, x)
    jm = math.cos(x) / x if n == 0 else sph_bessel_j(n - 1, x)
    return env.r_s**3 / 2.0 * (jn * jn - jm * jp)


@dataclass(frozen=True, eq=False)  # identity hash: ndarray fields
class EigenvalueTable:
    """Precomputed roots and norms for degrees 0..n_max, immutable and shareable."""

    env: Environment
    n_max: int
    k_max: int
    lam: np.ndarray  # (n_max+1, k_max), 1/m
    norm: np.ndarray  # (n_max+1, k_max), m^3
    zero_mode_included: bool = False
    zero_mode_norm: float = field(default=0.0)

    def residual(self, n: int, k: int) -> float:
        """Boundary-condition residual at the stored root (k is 1-based)."""
        f = _boundary_fn(n, self.env)
        return f(self.lam[n, k - 1] * self.env.r_s)

    def to_csv(self, path) -> None:
        env = self.env
        key = f"{env.r_s!r},{env.D!r},{env.k_d!r},{env.k_f!r},{self.n_max},{self.k_max}"
        digest = hashlib.sha256(key.encode()).hexdigest()[:16]
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# environment_hash={digest}\n")
            fh.write("n,k,lambda_per_m,norm_m3\n")
            if self.zero_mode_included:
                fh.write(f"0,0,{0.0:.17g},{self.zero_mode_norm:.17g}\n")
            for n in range(self.n_max + 1):
                for k in range(1, self.k_max + 1):
                    fh.write(
                        f"{n},{k},{self.lam[n, k - 1]:.17g},{self.norm[n, k - 1]:.17g}\n"
                    )


def build_table(env: Environment, n_max: int, k_max: int) -> EigenvalueTable:
    """Populate roots and norms for all degrees n <= n_max; deterministic."""
    lam = np.empty((n_max + 1, k_max))
    norm = np.empty((n_max + 1, k_max))
    for n in range(n_max + 1):
        r = find_roots(n, env, k_max)
        lam[n] = r
        norm[n] = [mode_norm(n, rv, env) for rv in r]
    zero = env.reflective
    return EigenvalueTable(
        env=env,
        n_max=n_max,
        k_max=k_max,
        lam=lam,
        norm=norm,
        zero_mode_included=zero,
        zero_mode_norm=env.r_s**3 / 3.0 if zero else 0.0,
    )
