"""Synthetic sessions with exact ground truth.

Joint angles follow an analytic gait-like trajectory (periodic harmonics
faded in from a standing pose by a quintic ramp), so q, qd and qdd are known
in closed form. Insole forces follow a smooth double-hump stance profile with
the centre of pressure rolling from heel to toe. Reference torques come from
inverse dynamics on the true state and the true insole wrenches.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rotations as rot
from .dynamics import build_wrench, rnea, transform_cop
from .model import ChainModel, forward_kinematics, segment_rotations
from .streams import InsoleRecord, InsoleSample, write_session

SENSORS = ("base_link", "torso_link",
           "femur_r_link", "tibia_r_link", "calcn_r_link", "toes_r_link",
           "femur_l_link", "tibia_l_link", "calcn_l_link", "toes_l_link")
FEET = {"left": "calcn_l", "right": "calcn_r"}
SAGITTAL = ("hip_flexion_r", "knee_angle_r", "ankle_angle_r",
            "hip_flexion_l", "knee_angle_l", "ankle_angle_l")

# (constant, [(harmonic, amplitude, phase), ...]) per coordinate stem, right side;
# the left side runs half a cycle later
_GAIT = {
    "pelvis_tilt": (0.0, [(2, 0.05, 0.0)]),
    "pelvis_list": (0.0, [(1, 0.04, 0.0)]),
    "pelvis_rotation": (0.0, [(1, 0.06, 0.0)]),
    "hip_flexion": (0.1, [(1, 0.35, 0.0), (2, 0.05, 0.3)]),
    "hip_adduction": (0.0, [(1, 0.05, 0.5)]),
    "hip_rotation": (0.0, [(1, 0.05, 0.0)]),
    "knee_angle": (-0.45, [(1, 0.35, 1.9), (2, 0.12, 0.6)]),
    "ankle_angle": (0.0, [(1, 0.15, 1.0), (2, 0.06, 0.2)]),
    "subtalar_angle": (0.0, [(1, 0.05, 1.0)]),
    "mtp_angle": (0.1, [(1, 0.1, 2.5)]),
    "lumbar_extension": (0.0, [(2, 0.04, 0.0)]),
    "lumbar_bending": (0.0, [(1, 0.03, 0.0)]),
    "lumbar_rotation": (0.0, [(1, 0.05, np.pi)]),
}


@dataclass(frozen=True)
class GaitSpec:
    kind: str = "walking"   # walking | standing
    duration: float = 10.0  # s
    rate: float = 100.0     # Hz, orientation and insole
    stand: float = 1.0      # s of quiet standing before the ramp
    ramp: float = 1.0       # s to fade in the gait pattern
    stride: float = 1.1     # s per gait cycle
    stance: float = 0.6     # stance fraction of the cycle
    yaw: float = 0.5        # global sensor heading, rad
    mount_seed: int = 7     # sensor mount rotations
    tick0: tuple = (5000, 7200)  # first insole tick, left / right


def _ramp(t, t0, T):
    """Quintic smoothstep 0 -> 1 on [t0, t0 + T] with its first two derivatives."""
    u = np.clip((t - t0) / T, 0.0, 1.0)
    inside = (t > t0) & (t < t0 + T)
    s = u**3 * (10 - 15 * u + 6 * u**2)
    ds = np.where(inside, 30 * u**2 * (1 - u) ** 2 / T, 0.0)
    dds = np.where(inside, 60 * u * (1 - u) * (1 - 2 * u) / T**2, 0.0)
    return s, ds, dds


def trajectory(model: ChainModel, spec: GaitSpec, t):
    """Analytic (q, qd, qdd), each of shape (len(t), n_coordinates)."""
    t = np.asarray(t, dtype=float)
    n = model.n_coordinates
    q = np.tile(model.default_q(), (len(t), 1))
    qd = np.zeros((len(t), n))
    qdd = np.zeros((len(t), n))
    if spec.kind == "standing":
        return q, qd, qdd
    w = 2 * np.pi / spec.stride
    s, ds, dds = _ramp(t, spec.stand, spec.ramp)
    for j, name in enumerate(model.coordinate_names):
        stem, side = name, ""
        if name.endswith(("_r", "_l")):
            stem, side = name[:-2], name[-1]
        if stem not in _GAIT:
            continue
        c, terms = _GAIT[stem]
        shift = np.pi if side == "l" else 0.0
        g = np.full_like(t, c)
        dg = np.zeros_like(t)
        ddg = np.zeros_like(t)
        for h, amp, ph in terms:
            arg = h * (w * t + shift) + ph
            g += amp * np.sin(arg)
            dg += amp * h * w * np.cos(arg)
            ddg -= amp * (h * w) ** 2 * np.sin(arg)
        q[:, j] += s * g
        qd[:, j] = ds * g + s * dg
        qdd[:, j] = dds * g + 2 * ds * dg + s * ddg
    return q, qd, qdd


def insole_profile(spec: GaitSpec, t, side, body_weight):
    """(normal force N, cop_x m, cop_y m) in the insole frame."""
    t = np.asarray(t, dtype=float)
    f_stand = np.full_like(t, 0.5 * body_weight)
    cx_stand = np.full_like(t, 0.08)
    cy_stand = np.zeros_like(t)
    if spec.kind == "standing":
        return f_stand, cx_stand, cy_stand
    s, _, _ = _ramp(t, spec.stand, spec.ramp)
    shift = 0.5 if side == "left" else 0.0
    phase = (t / spec.stride + shift) % 1.0
    # heel strike at phase 0.0 for the right foot (hip flexion peaks near phase 0.25)
    u = np.clip(phase / spec.stance, 0.0, 1.0)
    stance = phase < spec.stance
    f_walk = np.where(stance, body_weight * (0.75 * np.sin(np.pi * u) ** 2
                                             + 0.45 * np.sin(2 * np.pi * u) ** 2), 0.0)
    cx_walk = np.where(stance, 0.02 + 0.18 * (u - np.sin(2 * np.pi * u) / (2 * np.pi)), 0.0)
    cy_walk = np.where(stance, 0.01 * np.sin(np.pi * u), 0.0)
    # blend from standing; once walking, a foot in swing reports zero COP
    f = (1 - s) * f_stand + s * f_walk
    cx = np.where(f > 0, ((1 - s) * f_stand * cx_stand + s * f_walk * cx_walk) / np.maximum(f, 1e-12), 0.0)
    cy = np.where(f > 0, ((1 - s) * f_stand * cy_stand + s * f_walk * cy_walk) / np.maximum(f, 1e-12), 0.0)
    return f, cx, cy


def sensor_mounts(seed, frames=SENSORS):
    """Random but fixed sensor-in-segment rotations.

    Each mount is tilted arbitrarily but keeps the sensor x axis heading along
    the segment's forward axis, the wearing convention the heading
    calibration relies on.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for f in frames:
        q = rng.normal(size=4)
        m = rot.to_matrix(q / np.linalg.norm(q))
        out[f] = rot.rot_z(-rot.yaw_of(m)) @ m
    return out


def reference_torques(model, q, qd, qdd, forces, t, mounts=None, threshold=10.0):
    """Ground-truth torques from the true state and insole signals.

    ``forces``: side -> (F, cop_x, cop_y) arrays aligned with ``t``.
    """
    mounts = mounts or {}
    tau = np.zeros_like(q)
    for k in range(len(t)):
        fk = forward_kinematics(model, q[k])
        wrenches = []
        for side, body in FEET.items():
            F, cx, cy = (forces[side][i][k] for i in range(3))
            sample = InsoleSample(t[k], side, float(F), np.array([cx, cy]))
            p = transform_cop(sample, fk[body], mounts.get(side))
            wrenches.append(build_wrench(sample, p, body, threshold))
        tau[k] = rnea(model, q[k], qd[k], qdd[k], wrenches)
    return tau


def _bursts(rng, spec, forces, n):
    """Multiplexed insole records grouped into variable, jittered bursts."""
    recs = []
    for k in range(n):
        for i, side in enumerate(("left", "right")):
            F, cx, cy = (forces[side][j][k] for j in range(3))
            recs.append((k, InsoleRecord(side, spec.tick0[i] + k, float(F), float(cx), float(cy))))
    # bounded local disorder (< demux lag) and occasional duplicates
    key = np.array([k for k, _ in recs]) + rng.uniform(0, 2.5, len(recs))
    recs = [recs[i] for i in np.argsort(key, kind="stable")]
    dup = rng.random(len(recs)) < 0.02
    out = []
    for i, r in enumerate(recs):
        out.append(r)
        if dup[i]:
            out.append(r)
    bursts = []
    i = 0
    last = -np.inf
    while i < len(out):
        size = int(rng.integers(1, 9))
        chunk = out[i:i + size]
        i += size
        arrival = max(k for k, _ in chunk) / spec.rate + rng.uniform(0.01, 0.05)
        arrival = max(arrival, last)
        last = arrival
        bursts.append((round(arrival, 6), [r for _, r in chunk]))
    return bursts


def generate(model: ChainModel, spec: GaitSpec = GaitSpec(), seed=0, body_weight=None,
             noise=0.0, mounts=None):
    """Build a session: returns (records, meta, truth) with truth = dict of arrays."""
    rng = np.random.default_rng(seed)
    n = int(round(spec.duration * spec.rate))
    t = np.arange(n) / spec.rate
    bw = float(body_weight) if body_weight else model.total_mass * float(-model.gravity[2])
    q, qd, qdd = trajectory(model, spec, t)
    forces = {side: insole_profile(spec, t, side, bw) for side in ("left", "right")}
    tau = reference_torques(model, q, qd, qdd, forces, t)
    sensor_m = sensor_mounts(spec.mount_seed) if mounts is None else mounts
    H = rot.rot_z(spec.yaw)

    records = []
    for i, side in enumerate(("left", "right")):
        records.append(("sync", 0.0, (side, spec.tick0[i])))
    bursts = iter(_bursts(rng, spec, forces, n))
    pending = next(bursts, None)
    names = model.coordinate_names
    for k in range(n):
        R_seg, _, _ = segment_rotations(model, q[k])
        for f in SENSORS:
            R = H @ R_seg[model.mapping.segment_of(f)] @ sensor_m[f]
            qq = rot.from_matrix(R)
            if noise:
                qq = rot.normalize(qq + noise * rng.normal(size=4))
            records.append(("orient", round(t[k], 6), (f, qq)))
        for j, c in enumerate(names):
            records.append(("refq", round(t[k], 6), (c, float(q[k, j]))))
            records.append(("reftau", round(t[k], 6), (c, float(tau[k, j]))))
        while pending is not None and pending[0] <= t[k] + 1e-9:
            for r in pending[1]:
                records.append(("insole", pending[0], r))
            pending = next(bursts, None)
    while pending is not None:
        for r in pending[1]:
            records.append(("insole", pending[0], r))
        pending = next(bursts, None)
    records.sort(key=lambda r: r[1])  # stable: channel order kept
    meta = {"kind": spec.kind, "rate": spec.rate, "seed": seed, "body_weight": f"{bw:.6f}",
            "duration": spec.duration}
    truth = {"t": t, "q": q, "qd": qd, "qdd": qdd, "tau": tau, "forces": forces,
             "body_weight": bw, "mounts": sensor_m}
    return records, meta, truth


def write(path, model, spec=GaitSpec(), seed=0, **kw):
    records, meta, truth = generate(model, spec, seed, **kw)
    write_session(path, records, meta)
    return truth
