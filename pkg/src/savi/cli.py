"""Command-line front end.

Subcommands run seeded experiments and write JSON reports (CSV for the
tabular pipelines), rendering a companion PNG figure next to the output
unless --no-plot is given.  All randomness flows from --seed; reports are
byte-stable for a fixed seed at workers=1, and means agree to 1e-12 across
worker counts.

    savi simulate --gen ber:0.3 --stop run:k=5,target=0 \\
        --pipeline "lift(mix, conf:lambda=1)" --runs 10000 --seed 42 --out report.json
    savi verify-adjusters
    savi finance --csv prices.csv --calib-start 2018-01-01 --calib-end 2018-12-31 \\
        --q 0.8 --seed 7 --out evidence.csv

The environment variable SAVI_OUT_DIR, when set, prefixes relative output
paths (the only environment override).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .adjust import (SHIPPED_ADJUSTERS, AdjusterSpec, CalibratorSpec,
                     check_adjuster_admissibility, mix_kv_crossover,
                     parse_adjuster, parse_calibrator)
from .finance import calibrate_threshold, ingest_csv, run_volatility_pipeline, to_volatility
from .forecast import compare_forecasters, MEASURE_FLAGS, read_records_csv, synthetic_drift_records
from .pipeline import NEGATIVE_CONTROL_PIPELINES, SHIPPED_F_VALID_PIPELINES, build_pipeline
from .randomized import randomized_ville_type1, rtl_violation_experiment
from .sim import (DEFAULT_HORIZON, STREAM_CONF, mean_trajectory, parse_generator,
                  parse_rule, power_study, run_rng, stopped_mean)

SPEC_HELP = f"""spec strings:
  streams     ui-exch | conf:lambda=1 | conf:jumper,eps=0.01 |
              bounded-mean:mu=0.5,lambda=1 | bounded-mean:mu=0.5,decay |
              gauss-ui | gauss-maxinv:d0=0,d1=1
  adjusters   mix | kv | sqrt | power:0.5 | zero:1 | spine:0.5 (negative control only)
  calibrators mix | power:0.5
  pipelines   combine(0.5*ui-exch, 0.5*lift(mix, conf:lambda=1)) | spine(0.5, conf:lambda=1)
  generators  ber:0.3 | markov:p01=0.5,p11=0.4 | piecewise:500x0.5,100x0.2 |
              switch:mu=0.3,delta=0.2,period=100 | gauss:mu=0,sigma=1
  stop rules  run:k=5,target=0 | fixed:t=100 | count:m=15,target=1 |
              evidence:alpha=0.1 | window:a=0.44,b=1.7
shipped anytime-valid pipelines: {'; '.join(SHIPPED_F_VALID_PIPELINES)}
negative controls: {'; '.join(NEGATIVE_CONTROL_PIPELINES)}"""


def _out_path(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get("SAVI_OUT_DIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit_json(payload: dict, out: Path | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=True)
    if out is not None:
        out.write_text(text + "\n", encoding="utf-8")


def _figure_path(out: Path | None) -> Path | None:
    if out is None:
        return None
    return out.with_suffix(".png")


def _add_common(p: argparse.ArgumentParser, *, runs: bool = True):
    p.add_argument("--seed", type=int, required=True, help="master seed (required: reports must be reproducible)")
    if runs:
        p.add_argument("--runs", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output path (JSON report unless noted)")
    p.add_argument("--no-plot", action="store_true", help="skip the companion PNG figure")


def _cmd_simulate(args) -> int:
    out = _out_path(args.out)
    want_plot = out is not None and not args.no_plot
    report = stopped_mean(args.pipeline, args.gen, args.stop, args.runs, args.seed,
                          horizon=args.horizon, workers=args.workers,
                          keep_samples=args.samples or want_plot)
    pipeline = build_pipeline(args.pipeline)
    payload = {
        "command": "simulate",
        "config": {"pipeline": args.pipeline, "generator": args.gen, "stop": args.stop,
                   "runs": args.runs, "seed": args.seed, "horizon": args.horizon,
                   "f_valid": pipeline.f_valid},
        "results": {"mean": report.mean, "se": report.se, "truncated": report.truncated,
                    "mean_stop_time": report.mean_stop_time},
    }
    if args.samples and report.samples is not None:
        payload["results"]["samples"] = report.samples
    _emit_json(payload, out)
    if want_plot:
        from .plots import plot_stopped_samples
        plot_stopped_samples(report.samples, report.mean,
                             f"{args.pipeline} | {args.gen} | {args.stop}",
                             _figure_path(out))
    flag = "" if pipeline.f_valid else "  [not anytime-valid in the data filtration]"
    print(f"stopped mean = {report.mean:.6g} +- {report.se:.3g} "
          f"({report.runs} runs, mean stop time {report.mean_stop_time:.1f}, "
          f"{report.truncated} truncated){flag}")
    return 0


def _cmd_power(args) -> int:
    out = _out_path(args.out)
    deltas = [float(d) for d in args.deltas.split(",")]
    checkpoints = tuple(int(c) for c in args.checkpoints.split(",")) if args.checkpoints else ()
    report = power_study(args.pipeline, args.family, args.mu, deltas, args.alpha,
                         args.horizon, args.runs, args.seed, period=args.period,
                         checkpoints=checkpoints, workers=args.workers)
    payload = {"command": "power",
               "config": {"pipeline": args.pipeline, "family": args.family, "mu": args.mu,
                          "period": args.period, "alpha": args.alpha, "horizon": args.horizon,
                          "runs": args.runs, "seed": args.seed},
               "results": report.to_dict()}
    _emit_json(payload, out)
    if out is not None and not args.no_plot:
        from .plots import plot_power
        plot_power(report, _figure_path(out))
    print(f"{'delta':>8} {'rate':>8} {'se':>8} {'mean time':>10}")
    for row in report.rows:
        print(f"{row.delta:8.3g} {row.rejection_rate:8.3f} {row.rate_se:8.3f} "
              f"{row.mean_rejection_time:10.1f}")
    return 0


def _cmd_trajectory(args) -> int:
    out = _out_path(args.out)
    checkpoints = tuple(int(c) for c in args.checkpoints.split(",")) if args.checkpoints else ()
    report = mean_trajectory(args.pipeline, args.gen, args.horizon, args.runs, args.seed,
                             checkpoints=checkpoints, workers=args.workers)
    payload = {"command": "trajectory",
               "config": {"pipeline": args.pipeline, "generator": args.gen,
                          "horizon": args.horizon, "runs": args.runs, "seed": args.seed},
               "results": report.to_dict()}
    _emit_json(payload, out)
    if out is not None and not args.no_plot:
        from .plots import plot_trajectory
        plot_trajectory(report, _figure_path(out))
    last = len(report.checkpoints) - 1
    print(f"mean evidence at t={report.checkpoints[last]}: {report.mean_e[last]:.6g} "
          f"(mean log evidence {report.mean_log_e[last]:.4f})")
    return 0


def _cmd_finance(args) -> int:
    out = _out_path(args.out)
    prices = ingest_csv(args.csv, args.date_column, args.close_column)
    vol = to_volatility(prices)
    from datetime import date
    start = date.fromisoformat(args.calib_start)
    end = date.fromisoformat(args.calib_end)
    window = vol.window(start, end)
    if not len(window):
        raise ValueError(f"no volatility rows in calibration window {start}..{end}")
    c = calibrate_threshold(window.vols, args.q)
    eval_series = vol.after(end)
    if not len(eval_series):
        raise ValueError(f"no rows after calibration end {end}")
    table = run_volatility_pipeline(eval_series, c, run_rng(args.seed, STREAM_CONF, 0),
                                    adjuster=parse_adjuster(args.adjuster),
                                    jumper_eps=args.eps)
    if out is None:
        raise ValueError("finance needs --out for the evidence CSV")
    table.write_csv(out)
    if not args.no_plot:
        from .plots import plot_finance
        plot_finance(table, _figure_path(out))
    n_high = sum(table.x)
    print(f"threshold c = {c:.6g} ({args.q:g} quantile of {len(window)} calibration days)")
    print(f"{len(table.dates)} evaluation days, {n_high} high-volatility; "
          f"final combined evidence = {table._lin(table.log_e_combined[-1]):.6g}")
    return 0


def _cmd_forecast(args) -> int:
    out = _out_path(args.out)
    if args.records:
        records, h_file = read_records_csv(args.records)
        h = args.h or h_file
        if h is None:
            raise ValueError("give --h or a '# h=...' header line in the records CSV")
    else:
        h = args.h or 3
        records = synthetic_drift_records(args.synthetic, h=h, gap=args.gap, seed=args.seed)
    table = compare_forecasters(records, h, adjuster=parse_adjuster(args.adjuster),
                                calibrator=parse_calibrator(args.calibrator), lam=args.lam)
    if out is None:
        raise ValueError("forecast needs --out for the measures CSV")
    table.write_csv(out)
    meta = {"command": "forecast",
            "config": {"h": h, "records": args.records or f"synthetic:{args.synthetic}",
                       "gap": args.gap if not args.records else None,
                       "combiner": args.combiner, "adjuster": args.adjuster,
                       "calibrator": args.calibrator, "lam": args.lam, "seed": args.seed},
            "measures": MEASURE_FLAGS}
    _emit_json(meta, out.with_suffix(".json"))
    if not args.no_plot:
        from .plots import plot_forecast
        plot_forecast(table, _figure_path(out))
    i = len(table.steps) - 1
    import math
    sel = {"adjusted": math.exp(min(table.e_bar[i], 709)),
           "harmonic-p": table.p_tilde[i],
           "scaled-mean": table.m_tilde[i],
           "calibrated-e": math.exp(min(table.e_tilde[i], 709)),
           "lagged-mean": table.m_bar[i]}
    if args.combiner == "all":
        for name, v in sel.items():
            print(f"{name:>14}: {v:.6g}")
    else:
        print(f"{args.combiner} at t={table.steps[i]}: {sel[args.combiner]:.6g}")
    return 0


def _cmd_randomized(args) -> int:
    out = _out_path(args.out)
    if args.procedure == "rtl":
        report = rtl_violation_experiment(args.pipeline, args.gen, args.stop, args.alpha,
                                          args.runs, args.seed, workers=args.workers)
        results = report.to_dict()
        print(f"P(e_tau >= U/alpha) = {report.phat:.5f} +- {report.se:.5f} "
              f"(bound {report.bound:.4f})")
    elif args.procedure in ("ville", "ltr"):
        # ltr: only the randomized comparison at the stopping time;
        # ville: additionally reject on the raw evidence crossing 1/alpha
        report = randomized_ville_type1(args.pipeline, args.adjuster, args.gen, args.stop,
                                        args.alpha, args.runs, args.seed,
                                        workers=args.workers,
                                        monitor_threshold=args.procedure == "ville")
        results = report.to_dict()
        print(f"rejection rate = {report.rejection_rate:.5f} +- {report.se:.5f} "
              f"({report.via_threshold} via running threshold)")
    payload = {"command": "randomized",
               "config": {"procedure": args.procedure, "pipeline": args.pipeline,
                          "adjuster": args.adjuster, "generator": args.gen,
                          "stop": args.stop, "alpha": args.alpha,
                          "runs": args.runs, "seed": args.seed},
               "results": results}
    _emit_json(payload, out)
    return 0


def _cmd_verify_adjusters(args) -> int:
    out = _out_path(args.out)
    rows = []
    for spec in SHIPPED_ADJUSTERS:
        rep = check_adjuster_admissibility(spec, args.tol)
        rows.append({"spec": spec.spec_string(), "integral": rep.integral,
                     "admissible": rep.admissible, "error_estimate": rep.error_estimate})
    crossover = mix_kv_crossover()
    payload = {"command": "verify-adjusters",
               "config": {"tol": args.tol},
               "results": {"adjusters": rows, "mix_kv_crossover": crossover}}
    _emit_json(payload, out)
    if out is not None and not args.no_plot:
        from .plots import plot_adjusters
        plot_adjusters(list(SHIPPED_ADJUSTERS), _figure_path(out))
    print(f"{'spec':<12} {'integral':>18} {'admissible':>11} {'err':>10}")
    for row in rows:
        print(f"{row['spec']:<12} {row['integral']:>18.12f} {str(row['admissible']):>11} "
              f"{row['error_estimate']:>10.2e}")
    print(f"mix/kv crossover at e = {crossover:.4f}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="savi",
        description="anytime-valid sequential evidence: e-processes, adjusters, "
                    "lifting, and seeded Monte Carlo experiments",
        epilog=SPEC_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"savi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="stopped-evidence Monte Carlo",
                       epilog=SPEC_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--pipeline", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--stop", required=True)
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    p.add_argument("--samples", action="store_true", help="include per-run samples in the report")
    _add_common(p)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("power", help="rejection rate/time across a deviation grid",
                       epilog=SPEC_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--pipeline", required=True)
    p.add_argument("--family", choices=("switch", "markov"), required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--deltas", required=True, help="comma list, e.g. 0,0.1,0.2,0.3,0.4")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--horizon", type=int, default=2000)
    p.add_argument("--period", type=int, default=100)
    p.add_argument("--checkpoints", default="", help="comma list of e-power checkpoints")
    _add_common(p)
    p.set_defaults(fn=_cmd_power)

    p = sub.add_parser("trajectory", help="mean evidence trajectory at checkpoints",
                       epilog=SPEC_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--pipeline", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--checkpoints", default="")
    _add_common(p)
    p.set_defaults(fn=_cmd_trajectory)

    p = sub.add_parser("finance", help="high-volatility-day evidence from a price CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--date-column", default="date")
    p.add_argument("--close-column", default="close")
    p.add_argument("--calib-start", required=True)
    p.add_argument("--calib-end", required=True)
    p.add_argument("--q", type=float, default=0.8)
    p.add_argument("--adjuster", default="mix")
    p.add_argument("--eps", type=float, default=0.01, help="jumper rebalance fraction")
    _add_common(p, runs=False)
    p.set_defaults(fn=_cmd_finance)

    p = sub.add_parser("forecast", help="h-step forecast comparison measures")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--records", help="CSV of t,p,q,y rows")
    src.add_argument("--synthetic", type=int, help="generate this many synthetic records")
    p.add_argument("--h", type=int)
    p.add_argument("--gap", type=float, default=0.3, help="synthetic drift size")
    p.add_argument("--combiner", default="all",
                   choices=("adjusted", "harmonic-p", "scaled-mean", "calibrated-e",
                            "lagged-mean", "all"))
    p.add_argument("--adjuster", default="mix")
    p.add_argument("--calibrator", default="mix")
    p.add_argument("--lam", type=float, default=0.5)
    _add_common(p, runs=False)
    p.set_defaults(fn=_cmd_forecast)

    p = sub.add_parser("randomized", help="externally randomized stopped tests",
                       epilog=SPEC_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--procedure", choices=("ltr", "ville", "rtl"), required=True)
    p.add_argument("--pipeline", default="conf:lambda=1")
    p.add_argument("--adjuster", default="mix")
    p.add_argument("--gen", default="ber:0.3")
    p.add_argument("--stop", default="run:k=5,target=0")
    p.add_argument("--alpha", type=float, default=0.05)
    _add_common(p)
    p.set_defaults(fn=_cmd_randomized)

    p = sub.add_parser("verify-adjusters", help="admissibility quadrature for shipped adjusters")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=_cmd_verify_adjusters)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
