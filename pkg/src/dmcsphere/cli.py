"""Command-line interface: eigen | pdf | ber | pbs | compare.

Scenarios come from figure presets (fig1, fig2, fig4, fig5) optionally
overridden by a flat key-value config file with unit-suffixed keys
(micrometer/millisecond-friendly), converted to strict SI on load. All outputs
are CSV with 17-significant-digit numbers, LF line endings, and a header
comment carrying a hash of the fully resolved scenario.

Exit codes: 0 success, 2 config error, 3 numeric non-convergence,
4 validity-condition failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .channel import (
    ObservationPdf,
    ReceiverSpec,
    find_peak_time,
    p_obs_approx,
    p_obs_exact,
    p_obs_unbounded,
    scenario_hash,
)
from .cgf import SphericalPoint, TruncationPolicy, cgf_eval, cgf_unbounded
from .eigen import Environment, RootFindingError, build_table
from .ook import (
    DetectorMode,
    EnumerationTooLargeError,
    LinkConfig,
    analytic_ber,
    mc_ci95,
    memory_slots,
    monte_carlo_ber,
)
from .pbs import PbsConfig, ValidityConditionError, estimate_p_obs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_VALIDITY = 4

_UM = 1e-6
_MS = 1e-3

# Resolved-scenario keys, all strict SI. Presets follow the experiment tables:
# fig1 probes the receiver in the transmitter plane; fig2/fig4/fig5 move it to
# (4 um, pi/4, 3pi/4). The source tables list the receiver radius as 1 um but
# the BER figures' text uses 0.5 um; fig5 follows the figure text and the
# discrepancy is noted here rather than silently merged.
_BASE = {
    "r_s": 5e-6,  # m; inf = unbounded baseline
    "D": 1e-9,  # m^2/s
    "k_d": 20.0,  # 1/s
    "k_f": 100e-6,  # m/s; inf = absorbing
    "tx_r": 3e-6,
    "tx_theta": math.pi / 2,
    "tx_phi": 0.0,
    "rx_r": 4e-6,
    "rx_theta": math.pi / 4,
    "rx_phi": 3 * math.pi / 4,
    "rx_radius": 1e-6,
    "n_molecules": 5e4,
    "t0_slot": 40e-3,  # s
    "memory": 0.2,  # s
    "t_sample": 0.0,  # s; 0 = pick the peak time automatically
    "detector_mode": "genie",
    "n_max": 40,
    "k_max": 80,
    "rel_tol": 1e-8,
    "seed": 0,
    "pbs_dt": 1e-5,
    "pbs_n_particles": 100000,
    "pbs_bin_width": 1e-3,
    "pbs_window_lo": 1e-3,
    "pbs_window_hi": 0.05,
    "grid_lo": 0.0,  # s; 0 = guard time
    "grid_hi": 0.0,  # s; 0 = 5 * t0_slot
    "grid_points": 256,
    "t0_sweep": "",  # comma list of slot durations, s; empty = single t0_slot
    "mc_bits": 0,  # Monte Carlo bits per BER row; 0 = analytic only
}

PRESETS = {
    "fig1": {"rx_theta": math.pi / 2, "rx_phi": 0.0},
    "fig2": {},
    "fig4": {"k_f": 0.0, "k_d": 0.0},
    "fig5": {
        "rx_radius": 0.5e-6,
        "t0_sweep": ",".join(f"{t:g}" for t in np.arange(0.02, 0.21, 0.02)),
    },
}

# config-file key -> (scenario key, scale to SI); value "inf" allowed where noted
_KEYS = {
    "r_s_um": ("r_s", _UM),
    "D_um2_per_s": ("D", 1e-12),
    "k_d_per_s": ("k_d", 1.0),
    "k_f_um_per_s": ("k_f", _UM),
    "tx_r_um": ("tx_r", _UM),
    "tx_theta_rad": ("tx_theta", 1.0),
    "tx_phi_rad": ("tx_phi", 1.0),
    "rx_r_um": ("rx_r", _UM),
    "rx_theta_rad": ("rx_theta", 1.0),
    "rx_phi_rad": ("rx_phi", 1.0),
    "rx_radius_um": ("rx_radius", _UM),
    "n_molecules": ("n_molecules", 1.0),
    "t0_slot_ms": ("t0_slot", _MS),
    "memory_ms": ("memory", _MS),
    "t_sample_ms": ("t_sample", _MS),
    "detector_mode": ("detector_mode", None),
    "n_max": ("n_max", None),
    "k_max": ("k_max", None),
    "rel_tol": ("rel_tol", 1.0),
    "seed": ("seed", None),
    "pbs_dt_ms": ("pbs_dt", _MS),
    "pbs_n_particles": ("pbs_n_particles", None),
    "pbs_bin_width_ms": ("pbs_bin_width", _MS),
    "pbs_window_lo_ms": ("pbs_window_lo", _MS),
    "pbs_window_hi_ms": ("pbs_window_hi", _MS),
    "grid_lo_ms": ("grid_lo", _MS),
    "grid_hi_ms": ("grid_hi", _MS),
    "grid_points": ("grid_points", None),
    "t0_sweep_ms": ("t0_sweep", None),
    "mc_bits": ("mc_bits", None),
}

_INT_KEYS = {"n_max", "k_max", "seed", "pbs_n_particles", "grid_points", "mc_bits"}
_STR_KEYS = {"detector_mode"}


class ConfigError(ValueError):
    pass


def parse_config(path: str) -> dict:
    """Flat `key = value` lines; `#` starts a comment; unknown keys are errors."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        name, scale = _KEYS[key]
        if name in _STR_KEYS:
            out[name] = value
        elif name == "t0_sweep":
            try:
                vals = [float(v) * _MS for v in value.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad sweep list {value!r}") from exc
            out[name] = ",".join(f"{v:.17g}" for v in vals)
        elif name in _INT_KEYS:
            try:
                out[name] = int(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: expected integer for {key}") from exc
        else:
            try:
                v = math.inf if value.lower() in ("inf", "infinity") else float(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad number {value!r}") from exc
            out[name] = v * scale if math.isfinite(v) else v
    return out


def resolve_scenario(args) -> dict:
    sc = dict(_BASE)
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        sc.update(PRESETS[args.preset])
    if args.config is not None:
        sc.update(parse_config(args.config))
    if args.seed is not None:
        sc["seed"] = args.seed
    if args.threads not in (None, 0, 1):
        # all kernels are single-threaded by contract; other values are
        # accepted but must not (and do not) change results
        pass
    if sc["detector_mode"] not in ("genie", "decision_feedback"):
        raise ConfigError(f"detector_mode must be genie|decision_feedback")
    return sc


def _unbounded(sc: dict) -> bool:
    return math.isinf(sc["r_s"])


def scenario_parts(sc: dict) -> tuple:
    """(env-or-None, tx, rx, trunc); env is None for the unbounded baseline."""
    tx = SphericalPoint(sc["tx_r"], sc["tx_theta"], sc["tx_phi"])
    rx = ReceiverSpec(
        SphericalPoint(sc["rx_r"], sc["rx_theta"], sc["rx_phi"]), sc["rx_radius"]
    )
    trunc = TruncationPolicy(
        n_max=sc["n_max"], k_max=sc["k_max"], rel_tol=sc["rel_tol"]
    )
    if _unbounded(sc):
        return None, tx, rx, trunc
    env = Environment(r_s=sc["r_s"], D=sc["D"], k_d=sc["k_d"], k_f=sc["k_f"])
    rx.validate_inside(env)
    if tx.r > env.r_s:
        raise ConfigError("transmitter lies outside the sphere")
    return env, tx, rx, trunc


def _hash(sc: dict) -> str:
    return scenario_hash(sc)


def _write_rows(path, header_comment, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {header_comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    v if isinstance(v, str) else f"{v:.17g}" for v in row
                )
                + "\n"
            )


def cmd_eigen(sc: dict, out: str) -> int:
    if _unbounded(sc):
        raise ConfigError("eigen requires a finite sphere radius")
    env, _, _, trunc = scenario_parts(sc)
    table = build_table(env, trunc.n_max, trunc.k_max)
    table.to_csv(out)
    return EXIT_OK


def _guard_time(sc: dict, trunc: TruncationPolicy) -> float:
    if _unbounded(sc):
        return 1e-5
    env = Environment(r_s=sc["r_s"], D=sc["D"], k_d=sc["k_d"], k_f=sc["k_f"])
    return trunc.guard(env)


def cmd_pdf(sc: dict, out: str, exact: bool) -> int:
    env, tx, rx, trunc = scenario_parts(sc)
    t_lo = sc["grid_lo"] or _guard_time(sc, trunc)
    t_hi = sc["grid_hi"] or 5.0 * sc["t0_slot"]
    n = max(1, int(sc["grid_points"]))
    times = np.geomspace(t_lo, t_hi, n) if n > 1 else np.array([t_lo])
    table = None if env is None else build_table(env, trunc.n_max, trunc.k_max)
    columns = ["t_s", "p_obs_analytic"] + (["p_obs_exact"] if exact else []) + ["converged"]
    rows = []
    vol = rx.volume()
    for t in times:
        if table is None:
            d = float(np.linalg.norm(rx.center.to_cartesian() - tx.to_cartesian()))
            c = cgf_unbounded(d, t, 0.0, sc["D"], sc["k_d"])
        else:
            c = cgf_eval(rx.center, t, tx, 0.0, env, table, trunc)
        row = [t, vol * c.value]
        if exact:
            if table is None:
                row.append(vol * c.value)  # point approximation is all we have
            else:
                row.append(p_obs_exact(t, rx, tx, env, table, trunc))
        row.append(1.0 if c.converged else 0.0)
        rows.append(row)
    _write_rows(out, f"scenario_hash={_hash(sc)}", columns, rows)
    return EXIT_OK


def cmd_ber(sc: dict, out: str) -> int:
    env, tx, rx, trunc = scenario_parts(sc)
    table = None if env is None else build_table(env, trunc.n_max, trunc.k_max)
    sweep = (
        [float(v) for v in sc["t0_sweep"].split(",") if v.strip()]
        if sc["t0_sweep"]
        else [sc["t0_slot"]]
    )
    guard = _guard_time(sc, trunc)

    def p_fn(t):
        if table is None:
            return p_obs_unbounded(t, rx, tx, sc["D"], sc["k_d"])
        return p_obs_approx(t, rx, tx, env, table, trunc)

    mode = DetectorMode(sc["detector_mode"])
    rows = []
    for t0 in sweep:
        m = memory_slots(sc["memory"], t0)
        if sc["t_sample"] > 0:
            t_s = min(sc["t_sample"], t0)
        else:
            t_s, _ = find_peak_time(rx, tx,
                                    env or Environment(1.0, sc["D"], sc["k_d"], 0.0),
                                    table, trunc, (guard, t0))
        link = LinkConfig(sc["n_molecules"], t0, m, t_s, mode)
        try:
            ber_a = analytic_ber(link, p_fn).ber
            note = ""
        except EnumerationTooLargeError as exc:
            ber_a, note = math.nan, str(exc)
        if sc["mc_bits"] > 0:
            ber_mc = monte_carlo_ber(link, p_fn, n_bits=sc["mc_bits"], seed=sc["seed"])
            ci = mc_ci95(ber_mc, sc["mc_bits"])
        else:
            ber_mc, ci = math.nan, math.nan
        rows.append([t0, float(m), ber_a, ber_mc, ci, note])
    extra = " detector=decision_feedback (extension beyond the genie analysis)" \
        if mode is DetectorMode.DECISION_FEEDBACK else ""
    _write_rows(
        out,
        f"scenario_hash={_hash(sc)}{extra}",
        ["T0_s", "M", "ber_analytic", "ber_mc", "mc_ci95", "note"],
        rows,
    )
    return EXIT_OK


def _run_pbs(sc: dict):
    env, tx, rx, _ = scenario_parts(sc)
    if env is None:
        raise ConfigError("pbs requires a finite sphere radius")
    cfg = PbsConfig(
        dt=sc["pbs_dt"],
        n_particles=int(sc["pbs_n_particles"]),
        seed=int(sc["seed"]),
        bin_width=sc["pbs_bin_width"],
        record_window=(sc["pbs_window_lo"], sc["pbs_window_hi"]),
    )
    return estimate_p_obs(tx, rx.center, rx.radius, env, cfg), env, tx, rx


def cmd_pbs(sc: dict, out: str) -> int:
    hist, _, _, _ = _run_pbs(sc)
    hist.to_csv(out, header_extra=f"scenario_hash={_hash(sc)}")
    return EXIT_OK


def cmd_compare(sc: dict, out: str) -> int:
    hist, env, tx, rx = _run_pbs(sc)
    _, _, _, trunc = scenario_parts(sc)
    table = build_table(env, trunc.n_max, trunc.k_max)
    analytic = np.array(
        [p_obs_exact(t, rx, tx, env, table, trunc) for t in hist.times]
    )
    inside = (analytic >= hist.ci_lo) & (analytic <= hist.ci_hi)
    i = int(np.argmax(hist.p_hat))
    peak_rel_dev = abs(analytic[i] - hist.p_hat[i]) / max(hist.p_hat[i], 1e-300)
    coverage = float(inside.mean())
    rows = [
        [t, a, p, lo, hi, 1.0 if ok else 0.0]
        for t, a, p, lo, hi, ok in zip(
            hist.times, analytic, hist.p_hat, hist.ci_lo, hist.ci_hi, inside
        )
    ]
    _write_rows(
        out,
        f"scenario_hash={_hash(sc)} peak_rel_dev={peak_rel_dev:.17g} "
        f"ci_coverage={coverage:.17g}",
        ["t_s", "p_obs_analytic", "p_hat", "ci_lo", "ci_hi", "inside_ci"],
        rows,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dmcsphere",
        description="Diffusive molecular communication in a bounded sphere",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("eigen", "write the eigenvalue/norm table"),
        ("pdf", "write the observation-probability curve"),
        ("ber", "write a BER sweep over slot durations"),
        ("pbs", "run the particle-based simulator and write its histogram"),
        ("compare", "join analytic and PBS curves with deviation statistics"),
    ]:
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--preset", choices=sorted(PRESETS), default=None)
        q.add_argument("--config", default=None, help="flat key=value file")
        q.add_argument("--out", required=True, help="output CSV path")
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--threads", type=int, default=None,
                       help="0 = auto; must not change results")
        if name == "pdf":
            q.add_argument("--exact", action="store_true",
                           help="add the volume-integrated column")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = resolve_scenario(args)
        if args.command == "eigen":
            return cmd_eigen(sc, args.out)
        if args.command == "pdf":
            return cmd_pdf(sc, args.out, args.exact)
        if args.command == "ber":
            return cmd_ber(sc, args.out)
        if args.command == "pbs":
            return cmd_pbs(sc, args.out)
        if args.command == "compare":
            return cmd_compare(sc, args.out)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RootFindingError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValidityConditionError as exc:
        print(f"validity condition violated: {exc}", file=sys.stderr)
        return EXIT_VALIDITY


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
