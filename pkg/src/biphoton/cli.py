"""``biphoton`` command-line interface.

Each subcommand reads the run configuration (bundled defaults, then
``--config FILE``, then its own flags) and writes CSV/JSON files into the
output directory. Exit codes: 0 success, 2 no numerical solution,
64 usage or configuration error, 65 domain error such as a window inside a
resonance band.
"""

import argparse
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    build_calibration,
    build_detectors,
    build_environment,
    build_nonlinear,
    build_pump,
    build_transmittance,
    config_hash,
    load_config,
)
from .countingsim import (
    car,
    coincidence_count,
    correlation_histogram,
    g2_zero,
    peak_statistics,
    power_sweep,
    simulate_time_tags,
)
from .errors import BandError, BiphotonError, ConfigError, NoRootError
from .fibermodel import C_LIGHT, find_zdw, resonance_bands, resonance_orders, transmittance
from .io import write_csv, write_json, write_matrix_csv
from .jointspectrum import (
    SpectralFilter,
    conditional_spectrum,
    default_windows,
    filtered_rates,
    fwhm,
    jsi_grid,
    marginal,
    pump_bandwidth,
)
from .phasematch import pressure_grid, solve_tuning_point, tuning_curve, tuning_rate

EXIT_OK, EXIT_NO_SOLUTION, EXIT_USAGE, EXIT_DOMAIN = 0, 2, 64, 65
DEFAULT_ZDW_BRACKET = (335.0, 615.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Context:
    """Resolved configuration plus the helpers every command needs."""

    def __init__(self, args, overrides):
        self.config = load_config(args.config, overrides)
        self.hash = config_hash(self.config)
        out = args.output_dir or self.config.output.directory
        self.out = Path(out)
        self.quiet = args.quiet

    def csv(self, name, columns, rows):
        return write_csv(self.out / name, self.hash, columns, rows)

    def json(self, name, payload):
        return write_json(self.out / name, self.hash, payload)

    def report(self, text):
        if not self.quiet:
            print(text)


def _bands_payload(env):
    return [
        {"order": b.order, "low_nm": b.low, "high_nm": b.high}
        for b in resonance_bands(env, env.numerics.max_resonance_order)
    ]


def cmd_tuning_curve(ctx, args):
    if args.pmin > args.pmax:
        raise UsageError(f"--pmin {args.pmin} exceeds --pmax {args.pmax}")
    env, pump, params = build_environment(ctx.config), build_pump(ctx.config), build_nonlinear(ctx.config)
    curve = tuning_curve(env, pump, params, pressure_grid(args.pmin, args.pmax, args.step), args.variant)
    rows = [
        (p.pressure, p.signal, p.idler, p.residual_mismatch, p.variant, 1 + len(p.alternatives))
        for p in curve.points
    ]
    path = ctx.csv(
        f"tuning_curve_{args.variant}.csv",
        ["pressure_bar", "lambda_s_nm", "lambda_i_nm", "residual_rad_per_m", "variant", "n_roots"],
        rows,
    )
    if not curve.points:
        ctx.report(f"no phase matching between {args.pmin} and {args.pmax} bar")
        return EXIT_NO_SOLUTION
    rate = tuning_rate(curve)
    ctx.json(
        f"tuning_curve_{args.variant}.json",
        {
            "variant": args.variant,
            "pressure_range_bar": [args.pmin, args.pmax],
            "step_bar": args.step,
            "gaps_bar": curve.gaps,
            "multiple_root_pressures_bar": [p.pressure for p in curve.points if p.multiple_roots],
            "tuning_rate_thz_per_bar": rate.slope,
            "tuning_span_thz": rate.span,
            "resonance_bands_nm": _bands_payload(env.with_pressure(args.pmin)),
        },
    )
    ctx.report(f"{len(curve.points)} points, {len(curve.gaps)} gaps -> {path}")
    ctx.report(f"tuning rate {rate.slope:.1f} THz/bar, span {rate.span:.1f} THz")
    return EXIT_OK


def _jsi_setup(ctx, args):
    cfg = ctx.config
    env = build_environment(cfg).with_pressure(cfg.environment.pressure_bar)
    pump, params = build_pump(cfg), build_nonlinear(cfg)
    if args.signal_window is None:
        point = solve_tuning_point(env, pump, params)
        signal_window, idler_window = default_windows(
            point.signal, pump.center_wavelength, cfg.jsi.signal_halfwidth_nm
        )
        if args.idler_window is not None:
            idler_window = tuple(args.idler_window)
    else:
        signal_window = tuple(args.signal_window)
        idler_window = tuple(args.idler_window) if args.idler_window else None
    grid = jsi_grid(env, pump, params, signal_window, idler_window, n=cfg.jsi.n, ridge_resolution=cfg.jsi.ridge_resolution)
    return grid


def _frequency_fwhm(spectrum):
    nu = C_LIGHT / spectrum.wavelength * 1e-3  # THz
    return fwhm(nu, spectrum.values)


def cmd_jsi(ctx, args):
    grid = _jsi_setup(ctx, args)
    pump = build_pump(ctx.config)
    sig, idl = marginal(grid, "signal"), marginal(grid, "idler")
    write_matrix_csv(ctx.out / "jsi_matrix.csv", ctx.hash, grid.signal_axis, grid.idler_axis, grid.intensity)
    ctx.csv(
        "jsi_marginals.csv",
        ["signal_nm", "signal_marginal", "idler_nm", "idler_marginal"],
        zip(sig.wavelength, sig.values, idl.wavelength, idl.values),
    )
    summary = {
        "pressure_bar": grid.pressure,
        "n": len(grid.signal_axis),
        "signal_window_nm": [grid.signal_axis[0], grid.signal_axis[-1]],
        "idler_window_nm": [grid.idler_axis[0], grid.idler_axis[-1]],
        "effective_length_cm": grid.effective_length,
        "normalization": grid.normalization,
        "pump": asdict(pump),
        "pump_bandwidth_thz": pump_bandwidth(pump) * 1e-12,
        "signal_peak_nm": sig.peak,
        "idler_peak_nm": idl.peak,
        "signal_fwhm_nm": sig.fwhm,
        "idler_fwhm_nm": idl.fwhm,
        "signal_fwhm_thz": _frequency_fwhm(sig),
        "idler_fwhm_thz": _frequency_fwhm(idl),
    }
    ctx.json("jsi_summary.json", summary)
    ctx.report(
        f"signal FWHM {sig.fwhm:.2f} nm ({summary['signal_fwhm_thz']:.2f} THz), "
        f"idler FWHM {idl.fwhm:.2f} nm ({summary['idler_fwhm_thz']:.2f} THz)"
    )
    return EXIT_OK


def cmd_filtered_rates(ctx, args):
    cfg = ctx.config
    grid = _jsi_setup(ctx, args)
    sig = marginal(grid, "signal")
    center = args.signal_center or sig.peak
    filt = SpectralFilter(center, cfg.jsi.signal_filter_nm, cfg.jsi.filter_shape)
    rates = filtered_rates(grid, filt, cfg.jsi.idler_bandwidths_nm, shape=cfg.jsi.filter_shape)
    ctx.csv(
        "filtered_rates.csv",
        ["bandwidth_nm", "coincidence_norm", "singles_norm"],
        zip(rates.bandwidths, rates.coincidence, rates.singles),
    )
    cond = conditional_spectrum(grid, filt)
    ctx.json(
        "filtered_rates.json",
        {
            "pressure_bar": grid.pressure,
            "signal_filter_center_nm": center,
            "signal_filter_fwhm_nm": filt.fwhm_bandwidth,
            "filter_shape": filt.shape,
            "idler_center_nm": rates.idler_center,
            "conditional_idler_fwhm_nm": cond.fwhm,
        },
    )
    for b, c, s in zip(rates.bandwidths, rates.coincidence, rates.singles):
        ctx.report(f"{b:7.2f} nm  coincidence {c:.4f}  singles {s:.4f}")
    return EXIT_OK


def _local_minima(x, y):
    i = np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1
    return x[i]


def cmd_transmittance(ctx, args):
    cfg = ctx.config
    lmin = cfg.transmittance.lmin_nm if args.lmin is None else args.lmin
    lmax = cfg.transmittance.lmax_nm if args.lmax is None else args.lmax
    if lmin >= lmax:
        raise UsageError(f"--lmin {lmin} must be below --lmax {lmax}")
    env = build_environment(cfg).with_pressure(cfg.environment.pressure_bar)
    if args.thickness is not None:
        env = env.with_thickness(args.thickness)
    lam = np.linspace(lmin, lmax, cfg.transmittance.points)
    trans = transmittance(env, lam, build_transmittance(cfg))
    ctx.csv("transmittance.csv", ["wavelength_nm", "transmittance"], zip(lam, trans))
    t_min, t_max = env.geometry.tube_thickness_range
    expected = {
        f"{t:g}": [{"order": m, "wavelength_nm": w} for m, w in resonance_orders(env, env.numerics.max_resonance_order, t)]
        for t in sorted({t_min, env.geometry.tube_thickness, t_max})
    }
    minima = _local_minima(lam, trans)
    ctx.json(
        "transmittance.json",
        {
            "pressure_bar": env.pressure,
            "tube_thickness_nm": env.geometry.tube_thickness,
            "tube_thickness_range_nm": list(env.geometry.tube_thickness_range),
            "resonances": expected,
            "local_minima_nm": minima,
        },
    )
    ctx.report("local minima (nm): " + ", ".join(f"{m:.1f}" for m in minima))
    return EXIT_OK


def _montecarlo_pump(ctx, power):
    pump = build_pump(ctx.config)
    return replace(pump, average_power=float(power)) if power is not None else pump


def cmd_montecarlo(ctx, args):
    cfg = ctx.config
    sim = cfg.simulation
    pump = _montecarlo_pump(ctx, args.power)
    stats = build_calibration(cfg).at_power(pump.average_power)
    if args.mu is not None:
        stats = replace(stats, mean_pairs_per_pulse=args.mu)
    det_s, det_i = build_detectors(cfg)
    sig, idl = simulate_time_tags(stats, det_s, det_i, pump, sim.n_pulses, sim.seed)
    _, offband = simulate_time_tags(
        replace(stats, mean_pairs_per_pulse=0.0), det_s, det_i, pump, sim.n_pulses, sim.seed + 1
    )
    hist = correlation_histogram(sig, idl, sim.bin_width_ps, sim.span_periods * pump.period_ps)
    ctx.csv("histogram.csv", ["bin_center_ps", "counts"], zip(hist.centers, hist.counts))
    if args.time_tags:
        rows = sorted([(0, t) for t in sig.times.tolist()] + [(1, t) for t in idl.times.tolist()], key=lambda r: (r[1], r[0]))
        ctx.csv("time_tags.csv", ["channel", "time_ps"], rows)
    gate = min(det_s.gate_window, det_i.gate_window)
    g2 = g2_zero(sig, idl, pump, gate, idler_background_rate=offband.rate)
    g2_raw = g2_zero(sig, idl, pump, gate)
    peaks = peak_statistics(hist, pump.period_ps, gate)
    ctx.json(
        "montecarlo.json",
        {
            "seed": sim.seed,
            "n_pulses": sim.n_pulses,
            "duration_s": sig.duration,
            "average_power_mw": pump.average_power,
            "mean_pairs_per_pulse": stats.mean_pairs_per_pulse,
            "signal_rate_hz": sig.rate,
            "idler_rate_hz": idl.rate,
            "idler_offband_rate_hz": offband.rate,
            "coincidences": coincidence_count(sig, idl, gate),
            "g2_zero": g2,
            "g2_zero_uncorrected": g2_raw,
            "car": car(g2),
            "central_peak_counts": peaks.central,
            "side_peak_counts": list(peaks.side),
            "background_counts": peaks.background,
            "central_significance_sigma": peaks.central_significance,
            "side_significance_sigma": list(peaks.side_significance),
            "parameters": ctx.config.simulation.model_dump(mode="json"),
        },
    )
    ctx.report(f"CAR {car(g2):.4g}, central peak {peaks.central} counts, side peaks {peaks.side}")
    return EXIT_OK


def cmd_power_sweep(ctx, args):
    cfg = ctx.config
    sim = cfg.simulation
    det_s, det_i = build_detectors(cfg)
    sweep = power_sweep(
        build_calibration(cfg),
        det_s,
        det_i,
        build_pump(cfg),
        sim.powers_mw,
        sim.seed,
        n_pulses=args.pulses,
        target_coincidences=sim.target_coincidences,
    )
    ctx.csv(
        "power_sweep.csv",
        ["power_mW", "coincidence_rate_hz", "car", "n_pulses"],
        zip(sweep.powers, sweep.coincidence_rate, sweep.car, sweep.n_pulses),
    )
    ctx.json(
        "power_sweep.json",
        {
            "seed": sim.seed,
            "coincidence_exponent": sweep.coincidence_exponent,
            "car_exponent": sweep.car_exponent,
            "parameters": sim.model_dump(mode="json"),
        },
    )
    ctx.report(f"exponents: coincidences {sweep.coincidence_exponent:.3f}, CAR {sweep.car_exponent:.3f}")
    return EXIT_OK


def cmd_zdw(ctx, args):
    env = build_environment(ctx.config)
    if args.pressure is not None:
        pressures = [args.pressure]
    else:
        if args.pmin > args.pmax:
            raise UsageError(f"--pmin {args.pmin} exceeds --pmax {args.pmax}")
        pressures = pressure_grid(args.pmin, args.pmax, args.step)
    results = []
    for p in pressures:
        lam = find_zdw(env.with_pressure(p), args.bracket, args.variant)
        results.append({"pressure_bar": float(p), "lambda_zdw_nm": lam})
    payload = {"variant": args.variant, "bracket_nm": list(args.bracket), "results": results}
    if len(results) == 1:
        payload["lambda_zdw_nm"] = results[0]["lambda_zdw_nm"]
    ctx.json("zdw.json", payload)
    for r in results:
        ctx.report(f"{r['pressure_bar']:.3f} bar: ZDW {r['lambda_zdw_nm']:.2f} nm")
    return EXIT_OK


def _window(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH in nm, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"window {text!r} must be increasing")
    return (lo, hi)


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser():
    parser = _Parser(prog="biphoton", description="Biphoton source modelling for gas-filled hollow-core fibre.")
    parser.add_argument("--version", action="version", version=f"biphoton {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run configuration merged over the bundled defaults")
    common.add_argument("--output-dir", help="output directory (default: [output].directory)")
    common.add_argument("--quiet", action="store_true", help="suppress the console summary")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tuning-curve", parents=[common], help="phase-matched pair versus pressure")
    p.add_argument("--pmin", type=float, default=0.79)
    p.add_argument("--pmax", type=float, default=1.32)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--variant", choices=("resonant", "baseline"), default="resonant")
    p.set_defaults(func=cmd_tuning_curve)

    for name, func, doc in (
        ("jsi", cmd_jsi, "joint spectral intensity and marginals"),
        ("filtered-rates", cmd_filtered_rates, "coincidence and singles versus idler filter bandwidth"),
    ):
        p = sub.add_parser(name, parents=[common], help=doc)
        p.add_argument("--pressure", type=float, help="gas pressure in bar")
        p.add_argument("--n", type=int, help="grid points per axis (>= 64)")
        p.add_argument("--signal-window", type=_window, metavar="LO,HI", help="signal window in nm")
        p.add_argument("--idler-window", type=_window, metavar="LO,HI", help="idler window in nm")
        if name == "filtered-rates":
            p.add_argument("--bandwidths", type=_float_list, metavar="B1,B2,...", help="idler bandwidths in nm")
            p.add_argument("--signal-center", type=float, help="signal filter centre in nm (default: marginal peak)")
        p.set_defaults(func=func)

    p = sub.add_parser("transmittance", parents=[common], help="fibre transmittance spectrum")
    p.add_argument("--lmin", type=float)
    p.add_argument("--lmax", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--thickness", type=float, help="single tube thickness in nm (collapses the range)")
    p.set_defaults(func=cmd_transmittance)

    p = sub.add_parser("montecarlo", parents=[common], help="time-tag simulation and coincidence histogram")
    p.add_argument("--pulses", type=int)
    p.add_argument("--power", type=float, help="average pump power in mW")
    p.add_argument("--seed", type=int)
    p.add_argument("--mu", type=float, help="mean pairs per pulse, overriding the power calibration")
    p.add_argument("--time-tags", action="store_true", help="also export the time tags")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("power-sweep", parents=[common], help="coincidence rate and CAR versus pump power")
    p.add_argument("--powers", type=_float_list, metavar="P1,P2,...", help="average pump powers in mW")
    p.add_argument("--seed", type=int)
    p.add_argument("--pulses", type=int, help="pulses per power (default: adaptive)")
    p.set_defaults(func=cmd_power_sweep)

    p = sub.add_parser("zdw", parents=[common], help="zero-dispersion wavelength")
    p.add_argument("--pressure", type=float, help="single pressure in bar; otherwise scan --pmin..--pmax")
    p.add_argument("--pmin", type=float, default=0.79)
    p.add_argument("--pmax", type=float, default=1.32)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--bracket", type=_window, default=DEFAULT_ZDW_BRACKET, metavar="LO,HI")
    p.add_argument("--variant", choices=("resonant", "baseline"), default="resonant")
    p.set_defaults(func=cmd_zdw)
    return parser


def _overrides(args):
    get = lambda name: getattr(args, name, None)  # noqa: E731
    out = {
        "jsi.n": get("n"),
        "jsi.idler_bandwidths_nm": get("bandwidths"),
        "transmittance.points": get("points"),
        "simulation.n_pulses": get("pulses") if args.command == "montecarlo" else None,
        "simulation.seed": get("seed"),
        "simulation.powers_mw": get("powers"),
    }
    if args.command in ("jsi", "filtered-rates"):
        out["environment.pressure_bar"] = get("pressure")
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = Context(args, _overrides(args))
        return args.func(ctx, args)
    except (UsageError, ConfigError) as exc:
        print(f"biphoton {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoRootError as exc:
        print(f"biphoton {args.command}: no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except BandError as exc:
        detail = f" (order {exc.order}, {exc.leg})" if exc.leg else f" (order {exc.order})"
        print(f"biphoton {args.command}: resonance band: {exc}{detail}", file=sys.stderr)
        return EXIT_DOMAIN
    except (BiphotonError, ValueError) as exc:
        print(f"biphoton {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
