"""On-off keying over the diffusive channel: MAP threshold, analytic and Monte
Carlo bit error rates.

Bit 1 releases N molecules, bit 0 none. The receive count in a slot is Poisson
with mean N sum_i b_i p_obs(i T0 + t_s). The genie-aided detector knows the
previously transmitted bits when forming the ISI term of the threshold; the
decision-feedback variant substitutes its own prior decisions (an extension
beyond the genie analysis, flagged as such in outputs).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

_ENUM_LIMIT = 24  # max memory for exact pattern enumeration


class DegenerateSignalError(ValueError):
    """N * p_obs(t_s) = 0: the two hypotheses are indistinguishable."""


class EnumerationTooLargeError(ValueError):
    """Pattern enumeration requested beyond 2^25 patterns; use Monte Carlo."""


class DetectorMode(enum.Enum):
    GENIE = "genie"
    DECISION_FEEDBACK = "decision_feedback"


@dataclass(frozen=True)
class LinkConfig:
    n_molecules: float  # molecules per '1'
    t0_slot: float  # slot duration T0, s
    memory: int  # ISI memory M, slots
    t_sample: float  # sampling time t_s within the slot, s
    detector_mode: DetectorMode = DetectorMode.GENIE

    def __post_init__(self):
        if self.n_molecules < 0:
            raise ValueError("molecules per bit must be >= 0")
        if self.t0_slot <= 0:
            raise ValueError("slot duration must be positive")
        if self.memory < 0:
            raise ValueError("memory must be >= 0")
        if not 0 < self.t_sample <= self.t0_slot:
            raise ValueError("sampling time must satisfy 0 < t_s <= T0")


@dataclass(frozen=True)
class BerResult:
    ber: float
    per_pattern: dict = field(repr=False)
    n_patterns: int


def memory_slots(memory_duration: float, t0_slot: float) -> int:
    """Channel memory M = ceil(memory_duration / T0)."""
    return max(0, math.ceil(memory_duration / t0_slot - 1e-12))


def threshold(n_molecules: float, p0: float, isi_means) -> float:
    """MAP decision threshold N p0 / ln(1 + N p0 / S), S the total ISI mean.

    S = 0 degenerates to Thr = 0 (decide '1' iff y >= 1).
    """
    np0 = n_molecules * p0
    if np0 <= 0.0:
        raise DegenerateSignalError("N * p_obs(t_s) must be positive")
    s = float(np.sum(isi_means))
    if s <= 0.0:
        return 0.0
    return np0 / math.log1p(np0 / s)


def poisson_cdf(k: float, mu: float) -> float:
    """Pr(Y <= floor(k)) for Y ~ Poisson(mu), stable for small and large mu."""
    if k < 0:
        return 0.0
    kf = math.floor(k)
    if mu == 0.0:
        return 1.0
    if mu > 700.0 or kf > 10000:
        # regularized upper incomplete gamma Q(k+1, mu) = Pr(Y <= k)
        return float(_sp.gammaincc(kf + 1.0, mu))
    # direct stable summation: p_0 = e^-mu, p_{y+1} = p_y mu/(y+1)
    p = math.exp(-mu)
    total = p
    for y in range(int(kf)):
        p *= mu / (y + 1)
        total += p
    return min(total, 1.0)


def _isi_weights(link: LinkConfig, p_obs_fn) -> np.ndarray:
    """N p_obs(i T0 + t_s) for i = 1..M."""
    return np.array(
        [
            link.n_molecules * p_obs_fn(i * link.t0_slot + link.t_sample)
            for i in range(1, link.memory + 1)
        ]
    )


def conditional_error(bits, link: LinkConfig, p_obs_fn) -> float:
    """Pr(error | b_0..b_M) for the genie-aided threshold detector."""
    bits = list(bits)
    if len(bits) != link.memory + 1:
        raise ValueError(f"expected {link.memory + 1} bits, got {len(bits)}")
    p0 = p_obs_fn(link.t_sample)
    isi = _isi_weights(link, p_obs_fn)
    s = float(np.dot(bits[1:], isi)) if link.memory else 0.0
    np0 = link.n_molecules * p0
    if np0 <= 0.0:
        # no usable signal: with Thr = 0 the detector decides 1 iff y >= 1
        thr = 0.0
    else:
        thr = np0 / math.log1p(np0 / s) if s > 0 else 0.0
    if bits[0]:
        return poisson_cdf(thr, np0 + s)
    return 1.0 - poisson_cdf(thr, s)


def analytic_ber(link: LinkConfig, p_obs_fn) -> BerResult:
    """Exact error probability by enumeration over all 2^(M+1) bit patterns."""
    m = link.memory
    if m > _ENUM_LIMIT:
        raise EnumerationTooLargeError(
            f"memory {m} exceeds enumeration bound {_ENUM_LIMIT}; use monte_carlo_ber"
        )
    p0 = p_obs_fn(link.t_sample)
    isi = _isi_weights(link, p_obs_fn)
    np0 = link.n_molecules * p0

    per_pattern: dict[tuple, float] = {}
    total = 0.0
    cache: dict[tuple, tuple[float, float]] = {}
    for code in range(1 << m):
        isi_bits = tuple((code >> i) & 1 for i in range(m))
        s = float(np.dot(isi_bits, isi)) if m else 0.0
        key = s  # conditional errors depend on the pattern only through S
        if key in cache:
            e1, e0 = cache[key]
        else:
            if np0 <= 0.0:
                thr = 0.0
                e1 = poisson_cdf(thr, s)  # mean unchanged by b0 when N = 0
                e0 = 1.0 - poisson_cdf(thr, s)
            else:
                thr = np0 / math.log1p(np0 / s) if s > 0 else 0.0
                e1 = poisson_cdf(thr, np0 + s)
                e0 = 1.0 - poisson_cdf(thr, s)
            cache[key] = (e1, e0)
        per_pattern[(1, *isi_bits)] = e1
        per_pattern[(0, *isi_bits)] = e0
        total += e1 + e0
    n_patterns = 2 << m
    return BerResult(ber=total / n_patterns, per_pattern=per_pattern, n_patterns=n_patterns)


def _df_decisions(y, true_bits, np0, isi, use_feedback):
    """Threshold decisions over a slot stream; numba-accelerated when available."""
    return _df_impl(
        np.asarray(y, dtype=np.float64),
        np.asarray(true_bits, dtype=np.int64),
        float(np0),
        np.asarray(isi, dtype=np.float64),
        bool(use_feedback),
    )


def _df_core(y, true_bits, np0, isi, use_feedback):
    n = y.shape[0]
    m = isi.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for t in range(n):
        s = 0.0
        for i in range(m):
            j = t - 1 - i
            if j >= 0:
                if use_feedback:
                    s += out[j] * isi[i]
                else:
                    s += true_bits[j] * isi[i]
        if s > 0.0:
            thr = np0 / math.log(1.0 + np0 / s)
        else:
            thr = 0.0
        if y[t] > thr:
            out[t] = 1
    return out


try:  # pragma: no cover - exercised via the public API
    import os as _os

    if _os.environ.get("DMCSPHERE_NO_NUMBA"):
        raise ImportError
    from numba import njit as _njit

    _df_impl = _njit(cache=True)(_df_core)
except ImportError:  # pure-python fallback
    _df_impl = _df_core


def monte_carlo_ber(
    link: LinkConfig,
    p_obs_fn,
    n_bits: int = 10_000_000,
    seed: int = 0,
) -> float:
    """Monte Carlo BER over an i.i.d. equiprobable bit stream.

    The receive count only depends on the transmitted bits, so draws are
    vectorized; only the threshold differs between genie and decision-feedback
    modes. Reproducible for a fixed seed.
    """
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    p0 = p_obs_fn(link.t_sample)
    isi = _isi_weights(link, p_obs_fn)
    np0 = link.n_molecules * p0
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=n_bits, dtype=np.int64)
    means = np.full(n_bits, 0.0)
    means += bits * np0
    for i in range(1, link.memory + 1):
        means[i:] += bits[:-i] * isi[i - 1]
    y = rng.poisson(means).astype(np.float64)
    decisions = _df_decisions(
        y, bits, np0, isi, link.detector_mode is DetectorMode.DECISION_FEEDBACK
    )
    return float(np.mean(decisions != bits))


def mc_ci95(ber: float, n_bits: int) -> float:
    """Half-width of the 95% normal-approximation CI on a Monte Carlo BER."""
    return 1.96 * math.sqrt(max(ber * (1.0 - ber), 0.0) / n_bits)
