"""Latency table for 4, 6 and 12 SO workers on one session, logical or realtime.

    python demos/latency_vs_workers.py [--session FILE] [--mode logical|realtime]

Logical mode uses virtual stage costs, so the table shows queueing effects
only; realtime mode measures this machine.
"""
import argparse
import tempfile
from pathlib import Path

from rtmsk import synth
from rtmsk.model import demo_model_path, load_model
from rtmsk.pipeline import config_from_dict, run
from rtmsk.telemetry import format_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--session")
    ap.add_argument("--mode", choices=("logical", "realtime"), default="logical")
    ap.add_argument("--duration", type=float, default=6.0)
    args = ap.parse_args()

    tmp = Path(tempfile.mkdtemp(prefix="rtmsk_lat_"))
    session = args.session
    if session is None:
        session = tmp / "walking.txt"
        synth.write(session, load_model(demo_model_path()), synth.GaitSpec(duration=args.duration), seed=1)
    reports = []
    for n in (4, 6, 12):
        cfg = config_from_dict({"model": "demo", "session": str(session), "output_dir": str(tmp / f"n{n}"),
                                "mode": args.mode, "so": {"workers": n}})
        reports.append(run(cfg).report)
    print(format_report(reports))


if __name__ == "__main__":
    main()
