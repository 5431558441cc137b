"""Benchmark the particle simulator's numba kernel against the numpy fallback.

Both paths consume identical per-particle random streams, so their histograms
must agree bin-for-bin; the benchmark asserts that while timing both.

Run:  python3 benchmarks/pbs_benchmark.py [n_particles]
"""

import math
import sys
import time
import warnings

import numpy as np

from dmcsphere import pbs
from dmcsphere.cgf import SphericalPoint
from dmcsphere.eigen import Environment


def run(kernel_name: str, args, txc, rxc, rrx2):
    if kernel_name == "numba":
        if pbs._simulate_kernel is None:
            return None, None
        fn = lambda: pbs._simulate_kernel(
            *args, txc[0], txc[1], txc[2], rxc[0], rxc[1], rxc[2], rrx2
        )
    else:
        fn = lambda: pbs._simulate_numpy(*args, txc, rxc, rrx2)
    fn()  # warm-up (JIT compile / cache effects)
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def main():
    n_particles = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
    env = Environment(r_s=5e-6, D=1e-9, k_d=20.0, k_f=100e-6)
    tx = SphericalPoint(3e-6, math.pi / 2, 0.0)
    rx = SphericalPoint(4e-6, math.pi / 2, 0.0)
    cfg = pbs.PbsConfig(
        dt=1e-5, n_particles=n_particles, seed=7,
        bin_width=1e-3, record_window=(1e-3, 0.05),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pbs.check_validity(env, cfg.dt)

    spb = int(round(cfg.bin_width / cfg.dt))
    first_step = int(round(cfg.record_window[0] / cfg.dt))
    n_bins = int(math.floor(
        (cfg.record_window[1] - cfg.record_window[0]) / cfg.bin_width + 1e-9
    )) + 1
    n_steps = first_step + (n_bins - 1) * spb
    args = (
        cfg.seed, cfg.n_particles, n_steps, spb, first_step, n_bins,
        math.sqrt(2.0 * env.D * cfg.dt), env.k_d * cfg.dt,
        pbs.binding_probability(env, cfg.dt), env.r_s,
    )
    txc, rxc = tx.to_cartesian(), rx.to_cartesian()

    print(f"n_particles={n_particles} n_steps={n_steps} n_bins={n_bins}")
    t_np, out_np = run("numpy", args, txc, rxc, 1e-6**2)
    print(f"numpy fallback : {t_np:8.3f} s")
    t_nb, out_nb = run("numba", args, txc, rxc, 1e-6**2)
    if t_nb is None:
        print("numba kernel  : unavailable (DMCSPHERE_NO_NUMBA set or numba missing)")
        return
    print(f"numba kernel   : {t_nb:8.3f} s   speedup x{t_np / t_nb:.1f}")

    counts_nb, alive_nb, *tail_nb = out_nb
    counts_np, alive_np, *tail_np = out_np
    assert np.array_equal(counts_nb, counts_np), "receiver counts diverge"
    assert np.array_equal(alive_nb, alive_np), "alive counts diverge"
    assert tuple(tail_nb) == tuple(tail_np), "termination counters diverge"
    print("paths agree bin-for-bin (identical random streams)")


if __name__ == "__main__":
    main()
