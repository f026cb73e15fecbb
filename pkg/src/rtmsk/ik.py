"""Orientation-tracking inverse kinematics.

Each frame minimises ``sum_k w_k |log(R_hat_k Rot_k(q)^T)|^2`` over the
rotational coordinates with Levenberg-Marquardt steps started at the previous
solution. Translational coordinates are not observable from orientations and
stay at their previous value.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rotations as rot
from .filter import SplineFilter, SplineWindow
from .model import ChainModel, Transform, angular_jacobian, forward_kinematics, segment_rotations
from .telemetry import EventLog, record_event

log = logging.getLogger(__name__)


class MissingSensorError(ValueError):
    pass


@dataclass(frozen=True)
class JointState:
    t: float
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    events: EventLog = field(default_factory=EventLog)

    def __post_init__(self):
        n = len(self.q)
        if len(self.qd) != n or len(self.qdd) != n:
            raise ValueError("q, qd and qdd must have equal length")


@dataclass(frozen=True)
class TransformSet:
    t: float
    transforms: dict  # external frame name -> Transform (ground frame)


@dataclass(frozen=True)
class IKResult:
    q: np.ndarray
    iterations: int
    converged: bool
    residual: float  # largest per-sensor geodesic error, rad


def _dexp_inv(e):
    """Inverse right Jacobian of SO(3) at rotation vector ``e``."""
    th = np.linalg.norm(e)
    K = rot.skew(e)
    if th < 1e-6:
        return np.eye(3) + 0.5 * K + K @ K / 12.0
    c = 1.0 / th**2 - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) + 0.5 * K + c * K @ K


def _residuals(model, targets, q):
    R_seg, Rs, _ = segment_rotations(model, q)
    errs = {seg: rot.log_matrix(Rh @ R_seg[seg].T) for seg, Rh in targets.items()}
    return errs, Rs


def solve_frame(model: ChainModel, calib, obs, q_prev, weights=None,
                max_iter=50, tol=1e-8, damping=1e-6) -> IKResult:
    """Joint angles matching calibrated sensor orientations ``obs`` ({frame: sample})."""
    missing = [f for f in calib.frames if f not in obs]
    if missing:
        raise MissingSensorError(f"missing sensor(s) {', '.join(missing)}")
    targets = {}
    w = {}
    for frame, Rh in calib.apply({f: obs[f] for f in calib.frames}).items():
        seg = model.mapping.segment_of(frame)
        targets[seg] = Rh
        w[seg] = 1.0 if weights is None else float(weights.get(frame, 1.0))
    return solve_targets(model, targets, q_prev, w, max_iter, tol, damping)


def solve_targets(model, targets, q_prev, weights=None, max_iter=50, tol=1e-8, damping=1e-6):
    """LM on {segment: target rotation matrix}; translations held at ``q_prev``."""
    q = np.array(q_prev, dtype=float)
    free = np.flatnonzero(~model.translational_mask())
    w = weights or {}

    def cost(errs):
        return sum(w.get(s, 1.0) * e @ e for s, e in errs.items())

    errs, Rs = _residuals(model, targets, q)
    c = cost(errs)
    lam = damping
    converged = False
    it = 0
    while it < max_iter:
        H = np.zeros((len(free), len(free)))
        g = np.zeros(len(free))
        for seg, e in errs.items():
            J = _dexp_inv(e) @ angular_jacobian(model, seg, Rs)[:, free]
            ws = w.get(seg, 1.0)
            H += ws * J.T @ J
            g += ws * J.T @ e
        while True:
            step = np.linalg.solve(H + lam * np.eye(len(free)), g)
            if np.linalg.norm(step) < tol:
                converged = True
                break
            q_try = q.copy()
            q_try[free] += step
            errs_try, Rs_try = _residuals(model, targets, q_try)
            c_try = cost(errs_try)
            if c_try <= c:
                q, errs, Rs, c = q_try, errs_try, Rs_try, c_try
                lam = max(lam / 10.0, damping)
                it += 1
                break
            lam *= 10.0
            if lam > 1e12:
                break
        if converged or lam > 1e12:
            break
    q = _nearest_branch(model, q, np.asarray(q_prev, dtype=float), free)
    resid = max((float(np.linalg.norm(e)) for e in errs.values()), default=0.0)
    if not converged:
        log.debug("IK did not converge after %d iterations (residual %.3g rad)", it, resid)
    return IKResult(q, it, converged, resid)


def _wrap(x):
    return (x + np.pi) % (2.0 * np.pi) - np.pi


def _nearest_branch(model, q, q_prev, free):
    """Equivalent angles closest to ``q_prev``.

    Rotational coordinates are 2*pi periodic, and a Z-X-Y triple (a, b, c)
    describes the same rotation as (a + pi, pi - b, c + pi).
    """
    q = q.copy()
    q[free] = q_prev[free] + _wrap(q[free] - q_prev[free])
    for j in model.joints:
        if j.kind == "revolute":
            continue
        idx = [model.coordinate_index(c) for c in j.coordinates[-3:]]
        a, b, c = q[idx]
        alt = np.array([a + np.pi, np.pi - b, c + np.pi])
        alt = q_prev[idx] + _wrap(alt - q_prev[idx])
        if np.sum((alt - q_prev[idx]) ** 2) < np.sum((q[idx] - q_prev[idx]) ** 2):
            q[idx] = alt
    return q


def broadcast_transforms(model: ChainModel, js: JointState) -> TransformSet:
    """Ground-frame segment transforms named by their external frames."""
    fk = forward_kinematics(model, js.q)
    return TransformSet(js.t, {model.mapping.frame_of(seg): tf for seg, tf in fk.items()})


def segment_transforms(model: ChainModel, tfs: TransformSet) -> dict:
    """Inverse naming of :func:`broadcast_transforms`: segment -> Transform."""
    return {model.mapping.segment_of(f): tf for f, tf in tfs.transforms.items()}


class IKStage:
    """Stateful tracker: solve each frame, spline-filter q, emit delayed JointStates."""

    def __init__(self, model: ChainModel, calib, win: SplineWindow = SplineWindow(),
                 weights=None, clock=None, q0=None):
        self.model = model
        self.calib = calib
        self.win = win
        self.weights = weights
        self.clock = clock
        self.q = model.default_q() if q0 is None else np.array(q0, dtype=float)
        self.filter = SplineFilter(win)
        self.iterations = []
        self.unconverged = 0
        self.dropped = 0

    def push(self, t, obs):
        """Feed one frame; returns a JointState once the filter window is full."""
        try:
            res = solve_frame(self.model, self.calib, obs, self.q, self.weights)
        except MissingSensorError as exc:
            self.dropped += 1
            log.warning("dropping IK frame at t=%.3f: %s", t, exc)
            return None
        self.iterations.append(res.iterations)
        if not res.converged:
            self.unconverged += 1
        self.q = res.q
        out = self.filter.push(t, res.q)
        if out is None:
            return None
        t_eval, q, qd, qdd = out
        events = EventLog()
        if self.clock is not None:
            events = record_event(events, 0, self.clock.now())
        return JointState(t_eval, q, qd, qdd, events)


def track(model, calib, frames, win: SplineWindow = SplineWindow(), weights=None, clock=None):
    """Generator of JointStates from an iterable of ``(t, {frame: sample})``."""
    stage = IKStage(model, calib, win, weights, clock)
    for t, obs in frames:
        js = stage.push(t, obs)
        if js is not None:
            yield js


def pose_observations(model: ChainModel, q, frames, t=0.0, calib=None):
    """Synthetic sensor samples for pose ``q`` (inverse of calibration when given)."""
    from .streams import OrientationSample
    R_seg, _, _ = segment_rotations(model, np.asarray(q, dtype=float))
    out = {}
    for frame in frames:
        R = R_seg[model.mapping.segment_of(frame)]
        if calib is not None:
            H = rot.axis_angle_matrix(np.asarray(calib.up), calib.heading_of(frame))
            R = H.T @ R @ rot.to_matrix(calib.offsets[frame])
        out[frame] = OrientationSample(t, frame, rot.from_matrix(R))
    return out


__all__ = ["JointState", "TransformSet", "IKResult", "IKStage", "MissingSensorError",
           "solve_frame", "solve_targets", "track", "broadcast_transforms",
           "segment_transforms", "pose_observations", "Transform"]
