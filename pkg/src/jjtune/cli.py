"""Command-line interface: simulate, fit, plan, convert, sweep.

Exit codes: 0 success, 2 validation error, 3 infeasible demand,
4 junction-failure outcome.
"""

import argparse
import sys

import numpy as np

from . import fitkit, physics, planner, protocol, svgplot, twin
from .config import load_config
from .errors import InfeasibleError, JJTuneError
from .report import build_report, digest_file, write_report, write_text_atomic
from .trace import emit_trace, ingest_trace

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_FAILURE_OUTCOME = 4


def _add_common(p):
    p.add_argument("--config", help="variant config TOML (default: packaged)")
    p.add_argument("--variant", default="low_dose_1")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="output file")


def _add_physics(p):
    p.add_argument("--ec", type=float, help="charging energy [Hz]")
    p.add_argument("--gap", type=float, help="superconducting gap [eV]")
    p.add_argument("--ratio", type=float, help="R -> R_N conversion factor")
    p.add_argument("--temp", type=float, default=physics.T_COLD,
                   help="qubit operating temperature [K]")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jjtune",
        description="Josephson-junction electrical-tuning twin and planner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a pulse program on a twin")
    _add_common(p)
    p.add_argument("--amplitude", type=float, help="pulse amplitude [V]")
    p.add_argument("--duration", type=float,
                   help="active manipulation length [s] (iteration count rule)")
    p.add_argument("--target-dr", type=float,
                   help="stop active phase at this fractional increase")
    p.add_argument("--step-dr", type=float,
                   help="stepped protocol: per-step fractional increment")
    p.add_argument("--steps", type=int, default=1, help="stepped protocol steps")
    p.add_argument("--t-relax", type=float, default=1800.0)
    p.add_argument("--t-probe", type=float, default=60.0)
    p.add_argument("--noise", type=float, default=0.0,
                   help="relative measurement current noise")
    p.add_argument("--r0", type=float, help="starting resistance [ohm]")
    p.add_argument("--no-drop", action="store_true",
                   help="disable the onset drop model")
    p.add_argument("--no-hazard", action="store_true",
                   help="disable the failure hazard")
    p.add_argument("--plot", help="also write a trace SVG here")

    p = sub.add_parser("fit", help="fit a model to a trace or x,y file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--kind", default="manipulation",
                   choices=["manipulation", "exponential", "log-growth",
                            "power-law", "simmons"])
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="json", choices=["json", "csv", "svg"],
                   help="report format; svg writes the fit overlay chart")
    p.add_argument("--plot", help="write fit overlay SVG here")
    p.add_argument("--residual-plot", help="write residual SVG here")
    p.add_argument("--epsilon", type=float, default=5e-4,
                   help="model-selection RMSE window, fitted units")
    p.add_argument("--sustain", type=int, default=3,
                   help="consecutive rises ending the initial drop")
    p.add_argument("--column-map", default=None,
                   help="rename columns, e.g. time_s=t,resistance_ohm=R")

    p = sub.add_parser("plan", help="plan a stepped tuning campaign")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--target-f", type=float, required=True)
    p.add_argument("--step-dr", type=float, default=0.10)
    p.add_argument("--t-relax", type=float, default=10800.0)
    p.add_argument("--settle", type=float, default=1800.0)
    p.add_argument("--time-budget", type=float, default=300.0)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--offset-sigma", type=float,
                   default=planner.DEFAULT_OFFSET_SIGMA)
    p.add_argument("--slope-sigma", type=float, default=0.0)

    p = sub.add_parser("convert", help="resistance <-> frequency conversions")
    p.add_argument("--config", help="variant config TOML (default: packaged)")
    _add_physics(p)
    p.add_argument("--r", type=float, help="room-temperature resistance [ohm]")
    p.add_argument("--target-f", type=float, help="frequency to invert [Hz]")
    p.add_argument("--eta", type=float,
                   help="anharmonicity [Hz] for the spectrum inverse solve")
    p.add_argument("--rel-err", type=float, default=0.0019,
                   help="relative resistance error for the precision bound")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="amplitude sweep producing trace family")
    _add_common(p)
    p.add_argument("--amplitudes", required=True,
                   help="comma-separated pulse amplitudes [V]")
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out-dir", required=True, help="directory for traces")
    p.add_argument("--no-drop", action="store_true",
                   help="disable the onset drop model")
    p.add_argument("--no-hazard", action="store_true",
                   help="disable the failure hazard")
    p.add_argument("--plot", help="write alpha(V) semilog SVG here")
    return parser


def _variant(args, cfg):
    variant = cfg.variant(args.variant)
    if getattr(args, "no_drop", False):
        variant.drop = twin.DropModel()
    if getattr(args, "no_hazard", False):
        variant.hazard = twin.FailureModel()
    return variant


def _physics_args(args, cfg):
    return {
        "ec": args.ec if args.ec is not None else cfg.defaults.ec_default,
        "gap_ev": args.gap if args.gap is not None else cfg.defaults.gap_ev,
        "ratio": args.ratio if args.ratio is not None else cfg.defaults.ratio,
        "temperature": args.temp,
    }


def cmd_simulate(args):
    cfg = load_config(args.config)
    variant = _variant(args, cfg)
    rng = np.random.default_rng(args.seed)
    state = twin.new_state(variant, r0=args.r0)
    iteration = protocol.IterationSpec(
        va=args.amplitude if args.amplitude is not None else 0.85)
    measurement = protocol.MeasurementSpec(noise=args.noise)
    if args.step_dr is not None:
        program = protocol.build_stepped_program(
            args.step_dr, args.t_relax, args.steps, iteration=iteration,
            t_probe=args.t_probe, measurement=measurement)
    elif args.target_dr is not None:
        program = protocol.build_single_program(
            protocol.TargetDeltaR(args.target_dr), iteration=iteration,
            t_relax=args.t_relax, t_probe=args.t_probe,
            measurement=measurement)
    else:
        duration = args.duration if args.duration is not None else 300.0
        per_iter = iteration.duration + measurement.duration
        program = protocol.build_single_program(
            protocol.MaxIterations(max(int(round(duration / per_iter)), 1)),
            iteration=iteration, t_relax=args.t_relax, t_probe=args.t_probe,
            measurement=measurement)
    trace = protocol.run_program(state, variant, program, rng,
                                 seed_label=args.seed)
    emit_trace(trace, args.out)
    if args.plot:
        write_text_atomic(args.plot, svgplot.trace_chart(
            trace, title=f"{variant.name} trace"))
    if state.phase is twin.Phase.FAILED:
        print("junction failed during the program", file=sys.stderr)
        return EXIT_FAILURE_OUTCOME
    return EXIT_OK


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for key in sorted(obj):
            child = f"{prefix}.{key}" if prefix else str(key)
            _flatten(child, obj[key], rows)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _flatten(f"{prefix}[{i}]", item, rows)
    else:
        rows.append(f"{prefix},{obj}")


def _payload_csv(payload):
    from .report import _jsonable

    rows = ["key,value"]
    _flatten("", _jsonable(payload), rows)
    return "\n".join(rows) + "\n"


def _read_xy(path):
    import csv

    xs, ys = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if not row or len(row) < 2:
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                continue  # header row
            xs.append(x)
            ys.append(y)
    return np.asarray(xs), np.asarray(ys)


def _parse_column_map(spec):
    if not spec:
        return None
    out = {}
    for item in spec.split(","):
        canonical, _, actual = item.partition("=")
        if not actual:
            raise JJTuneError(f"bad column-map entry {item!r}")
        out[canonical.strip()] = actual.strip()
    return out


def cmd_fit(args):
    inputs = {"trace": digest_file(args.infile)}
    if args.kind == "manipulation":
        trace = ingest_trace(args.infile,
                             column_map=_parse_column_map(args.column_map))
        # restrict to the manipulation regime when phase labels carry it
        active_idx = [i for i, s in enumerate(trace.samples)
                      if s.phase in ("drop", "active")]
        if active_idx:
            trace = trace.sliced(0)
            trace.samples = trace.samples[:active_idx[-1] + 1]
        segment = fitkit.detect_drop(trace, sustain=args.sustain)
        trimmed, segment = fitkit.exclude_drop(trace, segment)
        fits = [fitkit.fit_poly_time(trimmed, order=2),
                fitkit.fit_poly_time(trimmed, order=3)]
        comparison = fitkit.compare_models(fits, epsilon=args.epsilon)
        payload = {
            "drop": segment,
            "fits": fits,
            "comparison": comparison,
        }
        t = np.asarray(trimmed.times) - trimmed.times[0]
        y = np.asarray(trimmed.resistances) / trimmed.resistances[0] - 1.0
        best = fits[0] if comparison.preferred == "poly2" else fits[1]
        model = sum(best.params[k] * t ** (i + 1)
                    for i, k in enumerate(["alpha", "beta", "gamma"]
                                          [:best.n_params]))
        if args.format == "svg":
            write_text_atomic(args.out, svgplot.fit_overlay_chart(
                t, 100 * y, 100 * model, title="manipulation fit",
                ylabel="dR [%]"))
        elif args.format == "csv":
            write_text_atomic(args.out, _payload_csv(payload))
        else:
            write_report(build_report("fit.manipulation", payload,
                                      inputs=inputs), args.out)
        if args.plot:
            write_text_atomic(args.plot, svgplot.fit_overlay_chart(
                t, 100 * y, 100 * model, title="manipulation fit",
                ylabel="dR [%]"))
        if args.residual_plot:
            write_text_atomic(args.residual_plot, svgplot.residual_chart(
                t, 100 * (y - model)))
        return EXIT_OK

    x, y = _read_xy(args.infile)
    if args.kind == "exponential":
        res = fitkit.fit_exponential_rate(x, y)
        if args.plot or args.format == "svg":
            model = res.params["alpha0"] * np.exp(x / res.params["v0"])
            chart = svgplot.rate_semilog_chart(x, y, model)
            write_text_atomic(args.plot or args.out, chart)
            if args.format == "svg":
                return EXIT_OK
    elif args.kind == "log-growth":
        res = fitkit.fit_log_growth(x, y)
    elif args.kind == "power-law":
        res = fitkit.fit_power_law(x, y)
    else:
        res = fitkit.fit_simmons(x, y)
    if args.format == "csv":
        write_text_atomic(args.out, _payload_csv({"fit": res}))
    elif args.format == "svg" and args.kind != "exponential":
        raise JJTuneError(f"no svg rendering for kind {args.kind!r}")
    else:
        write_report(build_report(f"fit.{args.kind}", {"fit": res},
                                  inputs=inputs), args.out)
    return EXIT_OK


def cmd_plan(args):
    cfg = load_config(args.config)
    variant = cfg.variant(args.variant)
    phys = _physics_args(args, cfg)
    target = planner.TuningTarget(
        f_target=args.target_f, ec=phys["ec"], gap_ev=phys["gap_ev"],
        ratio=phys["ratio"], temperature=phys["temperature"])
    budget = planner.UncertaintyBudget(offset_sigma=args.offset_sigma,
                                       slope_sigma=args.slope_sigma)
    exit_code = EXIT_OK
    try:
        plan = planner.plan_steps(
            args.r0, target, variant, step_dr=args.step_dr,
            t_relax=args.t_relax, settle_horizon=args.settle,
            time_budget=args.time_budget, margin=args.margin, budget=budget)
        flags = {"feasible": True}
    except InfeasibleError as exc:
        plan = exc.partial_plan
        flags = {"feasible": False, "reason": str(exc)}
        exit_code = EXIT_INFEASIBLE
        if plan is None:
            raise
    doc = build_report("plan", {"plan": plan}, flags=flags, seed=args.seed)
    write_report(doc, args.out)
    return exit_code


def cmd_convert(args):
    cfg = load_config(args.config)
    phys = _physics_args(args, cfg)
    payload = {
        "critical_temperature_K": physics.critical_temperature(phys["gap_ev"]),
        "thermal_voltage_V": physics.thermal_voltage(cfg.defaults.tref),
    }
    if args.r is not None:
        ej = physics.ej_from_resistance(args.r, phys["gap_ev"],
                                        phys["temperature"], phys["ratio"])
        payload["resistance_ohm"] = args.r
        payload["ej_Hz"] = ej
        payload["f01_Hz"] = physics.f01_from_energies(ej, phys["ec"])
        payload["eta_Hz"] = physics.anharmonicity_from_energies(phys["ec"], ej)
        payload["precision_bound_Hz"] = physics.frequency_precision_bound(
            args.r, args.rel_err, phys["ec"], phys["gap_ev"],
            phys["temperature"], phys["ratio"])
    if args.target_f is not None and args.eta is not None:
        sol = physics.solve_transmon_from_spectrum(
            args.target_f, args.eta, phys["gap_ev"], phys["temperature"],
            phys["ratio"])
        payload["solved"] = {"r_ohm": sol.r, "ec_Hz": sol.ec, "ej_Hz": sol.ej}
    if args.format == "csv":
        write_text_atomic(args.out, _payload_csv(payload))
    else:
        write_report(build_report("convert", payload), args.out)
    return EXIT_OK


def cmd_sweep(args):
    import os

    cfg = load_config(args.config)
    variant = _variant(args, cfg)
    amplitudes = [float(v) for v in args.amplitudes.split(",") if v.strip()]
    if not amplitudes:
        raise JJTuneError("no amplitudes given")
    rows = []
    os.makedirs(args.out_dir, exist_ok=True)
    for index, va in enumerate(amplitudes):
        rng = np.random.default_rng([args.seed, index])
        state = twin.new_state(variant)
        iteration = protocol.IterationSpec(va=va)
        measurement = protocol.MeasurementSpec(noise=args.noise)
        per_iter = iteration.duration + measurement.duration
        program = protocol.build_single_program(
            protocol.MaxIterations(max(int(round(args.duration / per_iter)), 1)),
            iteration=iteration, t_relax=0.0, measurement=measurement)
        tr = protocol.run_program(state, variant, program, rng,
                                  seed_label=f"{args.seed}:{index}")
        path = os.path.join(args.out_dir, f"trace_{int(round(va * 1000))}mV.csv")
        emit_trace(tr, path)
        row = {"va": va, "trace": path, "failed": state.phase is twin.Phase.FAILED}
        if not row["failed"] and len(tr) >= 4:
            trimmed, segment = fitkit.exclude_drop(tr)
            fit = fitkit.fit_poly_time(trimmed, order=2)
            row["alpha"] = fit.params["alpha"]
            row["beta"] = fit.params["beta"]
            row["drop_s"] = segment.duration
        rows.append(row)
    fitted = [(r["va"], r["alpha"]) for r in rows if "alpha" in r and r["alpha"] > 0]
    payload = {"rows": rows}
    if len(fitted) >= 2:
        v_arr = np.array([v for v, _ in fitted])
        a_arr = np.array([a for _, a in fitted])
        exp_fit = fitkit.fit_exponential_rate(v_arr, a_arr)
        payload["exponential_law"] = exp_fit
        if args.plot:
            model = exp_fit.params["alpha0"] * np.exp(v_arr / exp_fit.params["v0"])
            write_text_atomic(args.plot,
                              svgplot.rate_semilog_chart(v_arr, a_arr, model))
    doc = build_report("sweep", payload, seed=args.seed)
    write_report(doc, args.out)
    if any(r["failed"] for r in rows):
        print("one or more junctions failed during the sweep", file=sys.stderr)
        return EXIT_FAILURE_OUTCOME
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "plan": cmd_plan,
    "convert": cmd_convert,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (JJTuneError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
