"""Synthesize a walking session, run it through the pipeline and compare with ground truth.

    python demos/walking_end_to_end.py [--duration 10] [--workers 12] [--out demo_out]
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from rtmsk import synth
from rtmsk.analysis import rmse
from rtmsk.model import demo_model_path, load_model
from rtmsk.pipeline import config_from_dict, run_logical, write_outputs
from rtmsk.telemetry import format_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--workers", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    model = load_model(demo_model_path())
    out = Path(args.out or tempfile.mkdtemp(prefix="rtmsk_walk_"))
    out.mkdir(parents=True, exist_ok=True)
    session = out / "walking.txt"
    truth = synth.write(session, model, synth.GaitSpec(duration=args.duration), seed=args.seed)
    print(f"session: {session}")

    cfg = config_from_dict({"model": "demo", "session": str(session), "output_dir": str(out),
                            "so": {"workers": args.workers}})
    result = run_logical(cfg)
    write_outputs(result)
    print(format_report(result.report))

    tq = np.array([js.t for js in result.joint_states])
    q = np.array([js.q for js in result.joint_states])
    tt = np.array([ts.t for ts in result.torques])
    tau = np.array([ts.tau for ts in result.torques])
    print(f"{'coordinate':<16}{'q RMSE (deg)':>14}{'tau RMSE (N m/kg)':>20}")
    for c in synth.SAGITTAL:
        j = model.coordinate_index(c)
        eq = np.rad2deg(rmse(tq, q[:, j], truth["t"], truth["q"][:, j])[0])
        et = rmse(tt, tau[:, j], truth["t"], truth["tau"][:, j])[0] / model.total_mass
        print(f"{c:<16}{eq:>14.2e}{et:>20.2e}")
    acts = np.array([r.a for _, r in result.activations])
    print(f"activations: {len(acts)} samples, range [{acts.min():.3f}, {acts.max():.3f}]")
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
