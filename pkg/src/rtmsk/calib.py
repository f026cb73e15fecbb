"""Static sensor-to-segment calibration.

Sensor orientations recorded in the calibration stance are averaged per
sensor (dominant eigenvector of the quaternion outer-product accumulator),
a heading correction about the global up axis is derived from a reference
sensor, and each sensor receives a fixed rotation such that

    segment_rotation = H @ sensor_rotation @ offset.T

where ``H`` is the heading correction (global mode: one yaw for every sensor;
per-sensor mode: one yaw each).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rotations as rot
from .model import ChainModel, forward_kinematics


class CalibrationError(ValueError):
    pass


class AmbiguousAverage(CalibrationError):
    pass


def average_quaternions(samples):
    """Rotation maximising sum (q . q_i)**2, scalar part >= 0."""
    Q = np.atleast_2d(np.asarray(samples, dtype=float))
    if Q.size == 0 or Q.shape[0] == 0:
        raise CalibrationError("cannot average an empty list of quaternions")
    if Q.shape[1] != 4:
        raise CalibrationError("quaternions must have 4 components")
    norms = np.linalg.norm(Q, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise CalibrationError("every sample must be unit norm (1e-6)")
    M = Q.T @ Q
    vals, vecs = np.linalg.eigh(M)
    if vals[-1] - vals[-2] <= 1e-12:
        raise AmbiguousAverage("two equal dominant eigenvalues; the average is not unique")
    return rot.canonical(vecs[:, -1] / np.linalg.norm(vecs[:, -1]))


@dataclass(frozen=True)
class CalibrationSet:
    offsets: dict          # sensor frame -> unit quaternion (wxyz), sensor frame in segment frame
    heading: float = 0.0   # yaw correction about global up, rad
    per_sensor_heading: dict = field(default_factory=dict)  # frame -> rad (per-sensor mode)
    up: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for frame, q in self.offsets.items():
            if abs(np.linalg.norm(q) - 1.0) > 1e-9:
                raise CalibrationError(f"{frame}: offset quaternion not unit norm")

    @property
    def frames(self):
        return tuple(self.offsets)

    def heading_of(self, frame):
        return self.per_sensor_heading.get(frame, self.heading)

    def segment_rotation(self, frame, sensor_quat):
        """Calibrated segment rotation (matrix) from a raw sensor quaternion."""
        if frame not in self.offsets:
            raise CalibrationError(f"no calibration for sensor {frame!r}")
        H = rot.axis_angle_matrix(np.asarray(self.up, float), self.heading_of(frame))
        return H @ rot.to_matrix(sensor_quat) @ rot.to_matrix(self.offsets[frame]).T

    def apply(self, observations):
        """{frame: sample or quat} -> {frame: calibrated rotation matrix}."""
        out = {}
        for frame, obs in observations.items():
            q = getattr(obs, "quat", obs)
            out[frame] = self.segment_rotation(frame, q)
        return out

    def to_dict(self):
        return {
            "heading": self.heading,
            "up": list(self.up),
            "sensors": {f: {"quat": [float(v) for v in q],
                            "heading": float(self.heading_of(f))}
                        for f, q in self.offsets.items()},
            "mode": "per-sensor" if self.per_sensor_heading else "global",
        }

    @classmethod
    def from_dict(cls, d):
        sensors = d["sensors"]
        offsets = {f: np.asarray(v["quat"], dtype=float) for f, v in sensors.items()}
        per = {}
        if d.get("mode") == "per-sensor":
            per = {f: float(v["heading"]) for f, v in sensors.items()}
        return cls(offsets, float(d.get("heading", 0.0)), per, tuple(d.get("up", (0.0, 0.0, 1.0))))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def calibrate(model: ChainModel, default_pose_q, frames, reference=None, mode="global",
              forward=(1.0, 0.0, 0.0)) -> CalibrationSet:
    """Calibration from per-sensor lists of stance orientations.

    ``frames`` maps external sensor frame name -> list of OrientationSample (or
    quaternions). ``reference`` names the sensor whose yaw anchors the heading
    (default: the sensor on the root segment).
    """
    if mode not in ("global", "per-sensor"):
        raise ValueError(f"unknown heading mode {mode!r}")
    if not frames:
        raise CalibrationError("no sensors to calibrate")
    g = np.asarray(model.gravity, dtype=float)
    up = -g / np.linalg.norm(g) if np.linalg.norm(g) > 0 else np.array([0.0, 0.0, 1.0])
    fk = forward_kinematics(model, default_pose_q)

    avg = {}
    seg_R = {}
    for frame, samples in frames.items():
        if not samples:
            raise CalibrationError(f"sensor {frame!r} contributed no frames")
        quats = [getattr(s, "quat", s) for s in samples]
        try:
            avg[frame] = rot.to_matrix(average_quaternions(quats))
        except AmbiguousAverage as exc:
            raise AmbiguousAverage(f"{frame}: {exc}") from None
        try:
            segment = model.mapping.segment_of(frame)
        except KeyError:
            raise CalibrationError(f"sensor {frame!r} does not map to a model segment") from None
        seg_R[frame] = fk[segment].rotation

    if reference is None:
        root = next(j.child for j in model.joints if j.parent == "ground")
        reference = next((f for f in frames if model.mapping.segment_of(f) == root), None)
        if reference is None:
            raise CalibrationError("no sensor on the root segment; name a heading reference")
    if reference not in frames:
        raise CalibrationError(f"missing heading reference sensor {reference!r}")

    def yaw_correction(frame):
        # heading the sensor adds to the model's forward axis, undone by the correction
        return -rot.yaw_of(avg[frame] @ seg_R[frame].T, forward, up)

    heading = yaw_correction(reference)
    per = {f: yaw_correction(f) for f in frames} if mode == "per-sensor" else {}
    offsets = {}
    for frame in frames:
        H = rot.axis_angle_matrix(up, per.get(frame, heading))
        # offset = segment^-1 * H * sensor (rotation of the sensor frame in the segment frame)
        offsets[frame] = rot.from_matrix(seg_R[frame].T @ H @ avg[frame])
    return CalibrationSet(offsets, heading, per, tuple(float(v) for v in up))
