"""Command-line front end.

Every option can also be given in a ``key = value`` config file passed with
``--config``; command-line flags override the file, which overrides the
built-in defaults. Exit codes: 0 ok, 1 reproduction row failed, 2 bad
configuration, 3 fit failure.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import io
from .analysis import ScanCurve, fit_dips, infer_ea, infer_ea_wings, predict_visibilities, predict_visibility_mk
from .errors import FitFailure, IllPosedFit, InsufficientWings, InvalidArgument, UnstableEstimate
from .fock import FockStateHV, FringeModel, fringe_scan
from .reproduce import Settings, default_seed, run
from .source import SourceConfig, inject_poisson_noise, scan_tv

EXIT_OK, EXIT_ROWS, EXIT_CONFIG, EXIT_FIT = 0, 1, 2, 3


class ConfigError(Exception):
    pass


# (key, type, default, help). Defaults of None mean "not set".
SOURCE_KEYS = [
    ("sigma", float, 52.0, "packet amplitude e-width sigma [um of optical path]"),
    ("jitter", float, 0.0, "per-pair timing jitter standard deviation [um]"),
    ("mu", float, 1.0, "spatial match factor in [0, 1]"),
    ("t_h", float, 0.0, "delay of the crystal-1 H photon [um]"),
    ("mc_samples", int, 20000, "Monte Carlo events per scan point"),
    ("seed", int, None, "master seed (default: $NOONPROJ_SEED or 20070101)"),
    ("mismatch", str, "cross-polarization", "Gram entries scaled by mu: cross-polarization | all"),
    ("workers", int, 1, "threads for scan points (results do not depend on it)"),
]
GRID_KEYS = [
    ("grid_min", float, -600.0, "first t_v grid point [um]"),
    ("grid_max", float, 600.0, "last t_v grid point [um]"),
    ("grid_step", float, 25.0, "t_v grid spacing [um]"),
]
NOISE_KEYS = [
    ("poisson_counts", float, None, "inject Poisson noise: expected counts at the curve maximum"),
    ("floor", float, 0.0, "flat accidental floor added before the Poisson draw, then subtracted"),
]
OUT_KEYS = [
    ("out", str, None, "output path prefix (CSV and SVG are written as PREFIX.csv, PREFIX.svg)"),
]
FRINGE_KEYS = [
    ("n", int, 3, "photon number N"),
    ("c0", complex, 1 / np.sqrt(2), "amplitude of |0>_H|N>_V (complex literal allowed)"),
    ("cn", complex, 1 / np.sqrt(2), "amplitude of |N>_H|0>_V (complex literal allowed)"),
    ("points", int, 361, "number of phase samples on [0, 2 pi)"),
]
FIT_KEYS = [
    ("input", str, None, "CSV file with a delay column and a rate column"),
    ("n_dips", int, 1, "number of dips to fit (1 or 2)"),
    ("x_column", str, None, "delay column (default: first column)"),
    ("y_column", str, None, "rate column (default: 'rate' or second column)"),
    ("shared_width", bool, False, "fit one FWHH common to both dips"),
]
PREDICT_KEYS = [
    ("beta", float, None, "spatial-mismatch reduction factor"),
    ("ea", float, None, "pair indistinguishability E/A"),
    ("m", int, None, "co-modal H photons, for the m/(N-1) rule (with --n)"),
    ("n", int, None, "photon number for the m/(N-1) rule"),
]
INFER_KEYS = [
    ("v3", float, None, "measured visibility"),
    ("beta", float, None, "spatial-mismatch reduction factor"),
    ("method", str, "v3", "inversion: v3 (overlapped dip), dip2 (second separated dip), wings (needs --input)"),
    ("input", str, None, "t_h = 0 scan CSV with 'rate' and 'r2x2' columns, for --method wings"),
]
REPRODUCE_KEYS = [
    ("out_dir", str, "reproduce_out", "directory for fig3_scan/fig4_scan CSV and SVG"),
    ("beta_overlapped", float, 0.96, "beta for the t_h = 0 scan"),
    ("beta_separated", float, 0.92, "beta for the separated-H scan"),
    ("ea_overlapped", float, 0.82, "E/A for the t_h = 0 scan"),
    ("ea_separated", float, 0.86, "E/A for the separated-H scan"),
    ("fwhh", float, 185.0, "target single-dip FWHH [um]"),
    ("t_h_separated", float, 600.0, "H-photon separation of the second scan [um]"),
    ("mc_samples", int, 20000, "Monte Carlo events per scan point"),
    ("seed", int, None, "master seed (default: $NOONPROJ_SEED or 20070101)"),
    ("mismatch", str, "cross-polarization", "Gram entries scaled by mu: cross-polarization | all"),
    ("workers", int, 1, "threads for scan points"),
]

COMMANDS = {
    "fringe": ("N-photon de Broglie fringe of a c0|0,N> + cN|N,0> state", FRINGE_KEYS + OUT_KEYS),
    "scan": ("gated four-fold scan over the V-photon delay t_v",
             SOURCE_KEYS + GRID_KEYS + NOISE_KEYS + OUT_KEYS),
    "fit": ("fit one or two Gaussian dips to a CSV scan", FIT_KEYS),
    "predict": ("closed-form three-photon visibilities", PREDICT_KEYS),
    "infer-ea": ("infer E/A from a visibility or from scan wings", INFER_KEYS),
    "reproduce": ("calibrate, scan, fit and compare with the reported values", REPRODUCE_KEYS),
}


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(kind, text):
    if kind is bool:
        return _parse_bool(text)
    if kind is complex:
        return complex(str(text).replace(" ", ""))
    return kind(text)


def read_config_file(path):
    """Flat ``key = value`` pairs; ``#`` starts a comment; dashes in keys read as underscores."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve(keys, args):
    """Merge defaults < config file < flags into a plain dict."""
    table = {k: (t, d) for k, t, d, _ in keys}
    merged = {k: d for k, (t, d) in table.items()}
    if getattr(args, "config", None):
        for key, text in read_config_file(args.config).items():
            if key not in table:
                raise ConfigError(f"unknown config key {key!r} for '{args.command}'")
            try:
                merged[key] = _convert(table[key][0], text)
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from None
    for key in table:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if "seed" in merged and merged["seed"] is None:
        merged["seed"] = default_seed()
    return merged


def build_parser():
    parser = argparse.ArgumentParser(
        prog="noonproj",
        description="NOON-state projection simulator: fringes, delay scans, dip fits, E/A inference.",
        epilog="Exit codes: 0 ok, 1 reproduction row failed, 2 configuration error, 3 fit failure.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (summary, keys) in COMMANDS.items():
        keylist = ", ".join(k for k, *_ in keys)
        p = sub.add_parser(name, help=summary, description=summary,
                           epilog=f"Config-file keys: {keylist}. Precedence: flag > file > default.")
        p.add_argument("--config", metavar="FILE", help="key = value file with any of the options below")
        for key, kind, default, text in keys:
            flag = "--" + key.replace("_", "-")
            shown = f" (default: {default})" if default is not None else ""
            if kind is bool:
                p.add_argument(flag, dest=key, type=_parse_bool, nargs="?", const=True, default=None,
                               help=text + shown)
            else:
                p.add_argument(flag, dest=key, type=kind, default=None, help=text + shown)
    return parser


def _source_config(c, t_v=0.0):
    return SourceConfig(sigma=c["sigma"], jitter_s=c["jitter"], mu_spatial=c["mu"], t_h=c["t_h"],
                        t_v=t_v, mc_samples=c["mc_samples"], seed=c["seed"], mismatch=c["mismatch"])


def _grid(c):
    lo, hi, step = c["grid_min"], c["grid_max"], c["grid_step"]
    if not step > 0:
        raise ConfigError("grid_step must be positive")
    if hi < lo:
        raise ConfigError("grid_max must not be below grid_min")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def _prefix(c, fallback):
    return c["out"] or fallback


def cmd_fringe(c, out=sys.stdout):
    n = c["n"]
    if n < 1:
        raise ConfigError("n must be positive")
    if c["points"] < 2:
        raise ConfigError("points must be at least 2")
    state_amps = np.zeros(n + 1, dtype=complex)
    state_amps[0], state_amps[-1] = c["c0"], c["cn"]
    state = FockStateHV.from_amps(state_amps)
    model = FringeModel.from_state(state)
    deltas = 2 * np.pi * np.arange(c["points"]) / c["points"]
    rate = fringe_scan(model, deltas)
    prefix = _prefix(c, "fringe")
    io.write_csv(prefix + ".csv", {"delta_rad": deltas, "rate": rate})
    io.plot_svg(prefix + ".svg", deltas, [("P_N", rate, None, "-")], "relative phase delta [rad]",
                "rate (relative)")
    print(f"fringe N={n}: period {2 * np.pi / n:.6f} rad, delta0={model.delta0:.6f}; wrote {prefix}.csv", file=out)
    return EXIT_OK


def cmd_scan(c, out=sys.stdout):
    cfg = _source_config(c)
    grid = _grid(c)
    scan = scan_tv(cfg, grid, workers=c["workers"])
    if c["poisson_counts"] is not None:
        noisy = inject_poisson_noise(scan.fourfold, c["poisson_counts"], c["floor"], seed=cfg.seed)
        scan = replace(scan, fourfold=noisy)
    prefix = _prefix(c, "scan")
    io.write_scan(prefix + ".csv", scan)
    io.plot_svg(prefix + ".svg", grid, [
        ("R_ABCD", scan.fourfold.y, scan.fourfold.yerr, "o"),
        ("R_ABCD(2x2)", scan.accidental.y, None, "d"),
    ], "c T_V [um]", "four-fold rate per pulse pair")
    print(f"scan: {grid.size} points, {cfg.mc_samples} events/point; wrote {prefix}.csv", file=out)
    return EXIT_OK


def fit_report(fit):
    return {
        "baseline": fit.baseline,
        "dips": [{"visibility": d.visibility, "center_um": d.center, "fwhh_um": d.fwhh,
                  "depth": d.depth, "center_determined": d.center_determined} for d in fit.dips],
        "residual_rms": fit.residual_rms,
        "stderr": fit.stderr,
    }


def cmd_fit(c, out=sys.stdout):
    if not c["input"]:
        raise ConfigError("fit needs --input CSV")
    curve = io.read_curve(c["input"], x=c["x_column"], y=c["y_column"])
    fit = fit_dips(curve, c["n_dips"], shared_width=c["shared_width"])
    print(json.dumps(fit_report(fit), indent=2), file=out)
    return EXIT_OK


def cmd_predict(c, out=sys.stdout):
    report = {}
    if c["beta"] is not None or c["ea"] is not None:
        if c["beta"] is None or c["ea"] is None:
            raise ConfigError("predict needs both --beta and --ea")
        p = predict_visibilities(c["beta"], c["ea"])
        report.update(v3_overlapped=p.v3_overlapped, v3_dip1=p.v3_dip1, v3_dip2=p.v3_dip2)
    if c["n"] is not None or c["m"] is not None:
        if c["n"] is None or c["m"] is None:
            raise ConfigError("the m/(N-1) rule needs both --n and --m")
        report["v_mk"] = predict_visibility_mk(c["n"], c["m"])
    if not report:
        raise ConfigError("predict needs --beta/--ea and/or --n/--m")
    print(json.dumps(report, indent=2), file=out)
    return EXIT_OK


def cmd_infer_ea(c, out=sys.stdout):
    method = c["method"]
    if method == "wings":
        if not c["input"]:
            raise ConfigError("--method wings needs --input scan CSV")
        cols = io.read_csv(c["input"])
        if "rate" not in cols or "r2x2" not in cols:
            raise ConfigError(f"{c['input']}: needs 'rate' and 'r2x2' columns")
        x = next(iter(cols.values()))
        ea = infer_ea_wings(ScanCurve(x, cols["rate"]), ScanCurve(x, cols["r2x2"]))
    else:
        if c["v3"] is None or c["beta"] is None:
            raise ConfigError(f"--method {method} needs --v3 and --beta")
        ea = infer_ea(c["v3"], c["beta"], method)
    print(json.dumps({"ea": ea, "method": method}), file=out)
    return EXIT_OK


def cmd_reproduce(c, out=sys.stdout):
    settings = Settings(
        beta_overlapped=c["beta_overlapped"], beta_separated=c["beta_separated"],
        ea_overlapped=c["ea_overlapped"], ea_separated=c["ea_separated"], fwhh=c["fwhh"],
        t_h_separated=c["t_h_separated"], mc_samples=c["mc_samples"], seed=c["seed"],
        mismatch=c["mismatch"], workers=c["workers"],
    )
    report = run(settings, out_dir=c["out_dir"])
    print(report.table(), file=out)
    print(f"\nwrote {c['out_dir']}/fig3_scan.csv, fig4_scan.csv ({report.runtime_s:.1f} s)", file=out)
    if not report.passed:
        names = ", ".join(r.name for r in report.failures())
        print(f"FAILED rows: {names}", file=out)
        return EXIT_ROWS
    return EXIT_OK


HANDLERS = {
    "fringe": cmd_fringe, "scan": cmd_scan, "fit": cmd_fit, "predict": cmd_predict,
    "infer-ea": cmd_infer_ea, "reproduce": cmd_reproduce,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    keys = COMMANDS[args.command][1]
    try:
        config = resolve(keys, args)
        return HANDLERS[args.command](config, out=out)
    except (FitFailure, IllPosedFit) as exc:
        print(f"noonproj {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, InvalidArgument, InsufficientWings, UnstableEstimate, OSError) as exc:
        print(f"noonproj {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
