"""Command-line front end.

Each subcommand is a pure function of (scenario, seed): it writes JSON
results, CSV tables for plotting and a run manifest into the output
directory. Exit codes: 0 success, 2 configuration error, 3 statistical
non-identifiability, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from corrspec import __version__
from corrspec.config import ConfigError, Scenario
from corrspec.core import (ClockSpec, lifetime_contrast, lifetime_limited_instability,
                           optimal_probe_time, q_coherence, q_spectroscopic,
                           scanned_instability)
from corrspec.detection import HYPOTHESES, run_benchmark
from corrspec.estimation import (FringeFit, extrapolate_sigma1s, fit_contrast_decay,
                                 fit_fringe_mle, fit_phase_drift, phase_to_fractional_sigma,
                                 sigma1s_from_contrast, unwrap_phase_series)
from corrspec.io import (RunManifest, SchemaError, read_fringes, read_json, write_csv,
                         write_fringes, write_json)
from corrspec.protocol import coherence_scan, session_duration
from corrspec.remote import comparison_instability, simulate_remote

EXIT_OK, EXIT_CONFIG, EXIT_STATS, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("corrspec")


class NonIdentifiable(RuntimeError):
    """Raised after outputs are written when the data cannot pin down the model."""


def _result_header(command, sc: Scenario) -> dict:
    return {"command": command, "seed": sc.seed, "scenario_hash": sc.scenario_hash(),
            "tool_version": __version__}


# --------------------------------------------------------------------------
# subcommands; each returns the list of files it wrote


def cmd_simulate_fringe(sc: Scenario, args, out: Path):
    spec = sc.clock_spec()
    p = sc.protocol
    counts = [args.probes] * len(p.t_list_s) if args.probes else list(p.probe_counts)
    if any(n < p.grid_points for n in counts):
        raise ConfigError("--probes", "each Ramsey time needs at least one probe per grid point")
    data = coherence_scan(p.t_list_s, counts, spec, sc.seed, phase_grid=sc.phase_grid(),
                          y_offsets=tuple(p.y_offsets), workers=args.workers)
    csv_path = write_fringes(out / "fringes.csv", data)
    summary = _result_header("simulate-fringe", sc)
    summary["n_datasets"] = len(data)
    summary["datasets"] = [{
        "t_s": d.t,
        "n_total": d.total_probes,
        "grid_points": int(d.delta_phi_z.size),
        "expected_contrast": float(lifetime_contrast(d.t, spec) * spec.detection_contrast),
        "mean_correlated_fraction": float(d.n_correlated.sum() / d.total_probes),
    } for d in data]
    return [csv_path, write_json(out / "fringes.json", summary)]


def _nan(x):
    return np.nan if x is None else x


def _fit_row(f: FringeFit, spec):
    return (f.t, f.contrast, f.contrast_ci[0], f.contrast_ci[1], f.phase0,
            f.phase_ci[0], f.phase_ci[1], f.phase_identifiable, f.n_total,
            _nan(contrast_sigma1s(f, spec)), _nan(phase_sigma1s(f, spec)))


def contrast_sigma1s(fit: FringeFit, spec: ClockSpec):
    """1 s uncertainty implied by the fitted contrast of the session."""
    if not fit.contrast > 0:
        return None
    return sigma1s_from_contrast(fit.contrast, fit.t, fit.n_total, spec)


def phase_sigma1s(fit: FringeFit, spec: ClockSpec):
    """Fitted phase error of the session, extrapolated to 1 s."""
    if not fit.phase_identifiable:
        return None
    sigma = phase_to_fractional_sigma(fit.phase_err, fit.t, spec)
    return extrapolate_sigma1s(sigma, session_duration(fit.t, fit.n_total, spec))


def cmd_fit(sc: Scenario, args, out: Path):
    spec = sc.clock_spec()
    data = read_fringes(Path(args.input or out / "fringes.csv"))
    fits, failed = [], []
    for d in sorted(data, key=lambda d: d.t):
        try:
            f = fit_fringe_mle(d)
        except ValueError as exc:
            failed.append({"t_s": d.t, "reason": str(exc)})
            continue
        fits.append(f)
        if not f.phase_identifiable:
            failed.append({"t_s": d.t, "reason": "phase not identifiable"})
    res = _result_header("fit", sc)
    res["fits"] = []
    for f in fits:
        entry = f.to_dict()
        entry["sigma_1s"] = contrast_sigma1s(f, spec)
        entry["sigma_1s_phase"] = phase_sigma1s(f, spec)
        res["fits"].append(entry)
    res["non_identifiable"] = failed
    cols = ("t_s", "contrast", "contrast_lo", "contrast_hi", "phase0_rad", "phase_lo_rad",
            "phase_hi_rad", "phase_identifiable", "n_total", "sigma_1s", "sigma_1s_phase")
    paths = [write_json(out / "fits.json", res),
             write_csv(out / "fits.csv", "corrspec.fits.v1", cols,
                       [_fit_row(f, spec) for f in fits])]
    if failed:
        raise NonIdentifiable(paths, f"{len(failed)} fringe(s) not identifiable")
    return paths


def _load_fits(path) -> list[FringeFit]:
    d = read_json(path)
    try:
        return [FringeFit.from_dict(f) for f in d["fits"]]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: not a fit result file") from exc


def cmd_coherence(sc: Scenario, args, out: Path):
    spec = sc.clock_spec()
    e = sc.estimation
    fits = _load_fits(Path(args.input or out / "fits.json"))
    res = _result_header("coherence", sc)
    paths = []
    try:
        cf = fit_contrast_decay([(f.t, f) for f in fits], (e.prior_lower_s, e.prior_upper_s))
    except ValueError as exc:
        res["error"] = str(exc)
        paths.append(write_json(out / "coherence.json", res))
        raise NonIdentifiable(paths, str(exc))
    res["coherence"] = cf.to_dict()
    res["q_coherence"] = {"mode": q_coherence(spec, cf.t_c),
                          "ci": [q_coherence(spec, max(cf.ci_lower, 1e-300)),
                                 q_coherence(spec, cf.ci_upper)]}
    res["q_spectroscopic"] = [{"t_s": f.t, "q": q_spectroscopic(spec, f.t)} for f in fits]

    good = [f for f in fits if f.phase_identifiable]
    if len({f.t for f in good}) >= 2:
        t, ph = unwrap_phase_series([f.t for f in good], [f.phase0 for f in good])
        err = [f.phase_err for f in sorted(good, key=lambda f: f.t)]
        drift = fit_phase_drift(np.column_stack([t, ph, err]), spec)
        res["phase_drift"] = {"slope_rad_per_s": drift.slope, "slope_err_rad_per_s": drift.slope_err,
                              "fractional_shift": drift.fractional_shift,
                              "fractional_shift_err": abs(drift.fractional_shift_err),
                              "intercept_rad": drift.intercept}
        paths.append(write_csv(out / "phase_drift.csv", "corrspec.phase_drift.v1",
                               ("t_s", "phase_rad", "phase_err_rad"), list(zip(t, ph, err))))
    else:
        res["phase_drift"] = None
    paths.append(write_json(out / "coherence.json", res))
    paths.append(write_csv(out / "coherence_posterior.csv", "corrspec.tc_posterior.v1",
                           ("t_c_s", "density_per_s"), list(zip(cf.grid, cf.density))))
    pts = [(f.t, f.contrast, f.contrast_ci[0], f.contrast_ci[1],
            cf.c0 * np.exp(-f.t / cf.t_c)) for f in fits]
    paths.append(write_csv(out / "contrast_decay.csv", "corrspec.contrast_decay.v1",
                           ("t_s", "contrast", "contrast_lo", "contrast_hi", "model"), pts))
    return paths


def cmd_instability(sc: Scenario, args, out: Path):
    spec = sc.clock_spec()
    e = sc.estimation
    t_c = e.coherence_time_s
    if args.coherence:
        t_c = read_json(args.coherence)["coherence"]["t_c_s"]
    t = np.geomspace(e.t_min_s, e.t_max_s, e.t_points)
    solid = lifetime_limited_instability(spec, t, 1.0)
    dashed = scanned_instability(spec, 0.5 * np.exp(-t / t_c), t, 1.0)
    t_opt = optimal_probe_time(spec)
    res = _result_header("instability", sc)
    res["optimum"] = {"t_s": t_opt, "sigma_1s_lifetime": lifetime_limited_instability(spec, t_opt)}
    res["dashed_coherence_time_s"] = t_c
    res["dashed_overhead_s"] = spec.overhead
    k = int(np.argmin(dashed))
    res["dashed_minimum"] = {"t_s": float(t[k]), "sigma_1s": float(dashed[k])}
    paths = [write_csv(out / "instability_curves.csv", "corrspec.instability.v1",
                       ("t_s", "sigma_1s_lifetime", "sigma_1s_scanned"),
                       list(zip(t, solid, dashed)))]
    if args.fits:
        fits = _load_fits(args.fits)
        pts = [(f.t, contrast_sigma1s(f, spec), _nan(phase_sigma1s(f, spec)),
                session_duration(f.t, f.n_total, spec)) for f in fits if f.contrast > 0]
        res["measured"] = [{"t_s": a, "sigma_1s": b, "sigma_1s_phase": c, "session_s": d}
                           for a, b, c, d in pts]
        paths.append(write_csv(out / "instability_points.csv", "corrspec.instability_points.v1",
                               ("t_s", "sigma_1s", "sigma_1s_phase", "session_s"), pts))
    paths.append(write_json(out / "instability.json", res))
    return paths


def cmd_remote(sc: Scenario, args, out: Path):
    cfg = sc.remote_config()
    n = args.probes or sc.remote.n_shots
    run = simulate_remote(cfg, n, sc.seed, workers=args.workers)
    res = _result_header("remote", sc)
    res["config"] = {"n_a": cfg.n_a, "n_b": cfg.n_b, "theta_a_rad": cfg.theta_a,
                     "theta_b_rad": cfg.theta_b, "true_dphi_ab_rad": cfg.true_dphi_ab,
                     "prior_dphi_ab_rad": cfg.prior, "synchronized": cfg.synchronized,
                     "noise_kind": cfg.laser_noise.kind, "guard_epsilon": cfg.guard_epsilon}
    paths = [write_csv(out / "remote_shots.csv", "corrspec.remote_shots.v1",
                       ("shot", "p_hat_a", "p_hat_b", "dphi_ab_rad", "ambiguous"),
                       list(zip(range(n), run.p_hat_a, run.p_hat_b, run.estimates,
                                run.ambiguous)))]
    if run.accepted.size < 2:
        res["error"] = "fewer than two unambiguous shots"
        paths.append(write_json(out / "remote.json", res))
        raise NonIdentifiable(paths, res["error"])
    res["summary"] = run.summary()
    res["sigma_y_tau"] = {"tau_s": sc.remote.tau_s,
                          "projection_limit": comparison_instability(
                              cfg, sc.remote.tau_s, sc.clock_spec())}
    paths.append(write_json(out / "remote.json", res))
    return paths


def cmd_detect_bench(sc: Scenario, args, out: Path):
    model = sc.detection_model()
    n = args.probes or sc.detection.n_trials
    bench = run_benchmark(model, n, sc.seed, workers=args.workers)
    cycles, counts = bench.histogram()
    res = _result_header("detect-bench", sc)
    res["summary"] = bench.summary()
    res["histogram"] = {"cycles": cycles, "counts": counts}
    confusion = np.zeros((4, 4), dtype=np.int64)
    np.add.at(confusion, (bench.true_states, bench.declared), 1)
    res["confusion"] = {"labels": list(HYPOTHESES), "matrix": confusion}
    return [write_csv(out / "detection_histogram.csv", "corrspec.detection_hist.v1",
                      ("cycles", "count"), list(zip(cycles, counts))),
            write_json(out / "detection.json", res)]


COMMANDS = {
    "simulate-fringe": cmd_simulate_fringe,
    "fit": cmd_fit,
    "coherence": cmd_coherence,
    "instability": cmd_instability,
    "remote": cmd_remote,
    "detect-bench": cmd_detect_bench,
}


# --------------------------------------------------------------------------
# plumbing


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file")
    common.add_argument("--seed", type=_u64, help="64-bit seed (overrides the scenario)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--probes", type=_positive,
                        help="probes per Ramsey time, remote shots or detection trials")
    common.add_argument("--workers", type=_positive, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("fit", "coherence"):
            p.add_argument("--input", type=Path, help="input file (default: from --out)")
        if name == "instability":
            p.add_argument("--fits", type=Path, help="fits.json for measured points")
            p.add_argument("--coherence", type=Path,
                           help="coherence.json whose T_C sets the dashed curve")
    return parser


def load_scenario(args) -> Scenario:
    sc = Scenario.load(args.config) if args.config else Scenario()
    if args.seed is not None:
        sc.seed = args.seed
    if args.out is not None:
        sc.output.dir = str(args.out)
    return sc.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        sc = load_scenario(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    out = Path(sc.output.dir)
    manifest = RunManifest(args.command, sc.scenario_hash(), sc.seed, __version__)
    status = EXIT_OK
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = COMMANDS[args.command](sc, args, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonIdentifiable as exc:
        paths, why = exc.args
        print(f"not identifiable: {why}", file=sys.stderr)
        status = EXIT_STATS
    except (OSError, SchemaError, KeyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        for p in paths:
            manifest.add(p)
        mpath = manifest.write(out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %s", ", ".join(str(p) for p in [*paths, mpath]))
    return status


if __name__ == "__main__":
    sys.exit(main())
