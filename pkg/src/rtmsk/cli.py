"""Command-line entry point: ``rtmsk run|report|rmse|record|gaitnorm|emg``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, synth
from .model import ModelError, demo_model_path, load_model
from .pipeline import ConfigError, load_config, run, write_outputs
from .streams import SessionError
from .telemetry import build_report, format_report, read_event_csv, report_json

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2

log = logging.getLogger("rtmsk")


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.mode:
        cfg.mode = args.mode
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    if args.workers:
        cfg.so_workers = args.workers
    cfg.validate()
    result = run(cfg)
    out = write_outputs(result)
    print(format_report(result.report), end="")
    print(f"outputs written to {out}")
    return EXIT_OK


def _report_for(logdir, deadline):
    logdir = Path(logdir)
    rows = read_event_csv(logdir / "events.csv")
    n_workers = 0
    summary = logdir / "summary.json"
    if summary.is_file():
        n_workers = json.loads(summary.read_text()).get("n_workers", 0)
    emitted = [r["events"] for r in rows if r["status"] == "emitted"]
    n_discarded = sum(r["status"] != "emitted" for r in rows)
    return build_report(emitted, n_workers, deadline, n_discarded)


def _cmd_report(args):
    reports = [_report_for(d, args.deadline) for d in args.logdir]
    print(report_json(reports) if args.json else format_report(reports), end="")
    return EXIT_OK


def _cmd_rmse(args):
    scale = np.rad2deg(1.0) if args.degrees else 1.0
    values = analysis.rmse_csv(args.a, args.b, args.channels)
    for name, v in values.items():
        print(f"{name},{v * scale:.6g}")
    return EXIT_OK


def _cmd_record(args):
    model = load_model(args.model or demo_model_path())
    spec = synth.GaitSpec(kind=args.kind, duration=args.duration, rate=args.rate)
    synth.write(args.out, model, spec, seed=args.seed, noise=args.noise)
    print(f"wrote {args.kind} session ({args.duration:g} s) to {args.out}")
    return EXIT_OK


def _cmd_gaitnorm(args):
    t, channels = analysis.read_csv(args.csv)
    if args.channel not in channels:
        raise KeyError(f"channel {args.channel!r} not in {args.csv}")
    onsets = []
    with open(args.steps) as fh:
        fh.readline()
        for line in fh:
            side, on, _ = line.strip().split(",")
            if side == args.side:
                onsets.append(float(on))
    cycles, mean, sd = analysis.gait_normalize(t, channels[args.channel], onsets)
    phase = np.linspace(0.0, 100.0, len(mean))
    out = args.out or Path(args.csv).with_name(f"{args.channel}_{args.side}_gaitnorm.csv")
    with open(out, "w") as fh:
        fh.write("phase,mean,sd\n")
        for p, m, s in zip(phase, mean, sd):
            fh.write(f"{p:g},{m:.10g},{s:.10g}\n")
    print(f"{len(cycles)} cycle(s) -> {out}")
    return EXIT_OK


def _cmd_emg(args):
    t, channels = analysis.read_csv(args.csv)
    env = {name: analysis.emg_envelope(x, normalize=not args.raw_scale) for name, x in channels.items()}
    t_out = t[::10][:len(next(iter(env.values())))] if env else t[:0]
    out = args.out or Path(args.csv).with_name(Path(args.csv).stem + "_envelope.csv")
    analysis.write_csv(out, t_out, env)
    print(f"envelopes for {len(env)} channel(s) -> {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="rtmsk", description="Real-time musculoskeletal pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a session through the pipeline")
    r.add_argument("--config", required=True)
    r.add_argument("--mode", choices=("logical", "realtime"))
    r.add_argument("--output-dir")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="latency table from one or more run output directories")
    rep.add_argument("logdir", nargs="+")
    rep.add_argument("--deadline", type=float, default=0.5)
    rep.add_argument("--json", action="store_true")
    rep.set_defaults(func=_cmd_report)

    m = sub.add_parser("rmse", help="per-channel RMSE of b against a (b resampled onto a's stamps)")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--channels", nargs="+")
    m.add_argument("--degrees", action="store_true", help="report radians as degrees")
    m.set_defaults(func=_cmd_rmse)

    rec = sub.add_parser("record", help="synthesize a session file")
    rec.add_argument("--out", required=True)
    rec.add_argument("--kind", choices=("walking", "standing"), default="walking")
    rec.add_argument("--duration", type=float, default=10.0)
    rec.add_argument("--rate", type=float, default=100.0)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--noise", type=float, default=0.0)
    rec.add_argument("--model")
    rec.set_defaults(func=_cmd_record)

    g = sub.add_parser("gaitnorm", help="normalize a channel to 0-100%% gait cycle")
    g.add_argument("csv")
    g.add_argument("--steps", required=True, help="steps.csv from a run")
    g.add_argument("--channel", required=True)
    g.add_argument("--side", choices=("left", "right"), default="right")
    g.add_argument("--out")
    g.set_defaults(func=_cmd_gaitnorm)

    e = sub.add_parser("emg", help="EMG envelopes of a 1000 Hz CSV, decimated to 100 Hz")
    e.add_argument("csv")
    e.add_argument("--out")
    e.add_argument("--raw-scale", action="store_true", help="skip normalization to the session max")
    e.set_defaults(func=_cmd_emg)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelError, SessionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, KeyError, ValueError) as exc:
        if args.command == "run":
            print(f"error: stage failure: {exc}", file=sys.stderr)
            return EXIT_STAGE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any other stage failure
        print(f"error: stage failure: {exc!r}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
