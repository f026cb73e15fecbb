"""Inverse dynamics: insole COP to ground frame, external wrenches, and a
recursive Newton-Euler pass over the model tree.

The recursion works with spatial vectors ``[angular; linear]`` expressed in
the ground frame at the ground origin. Multi-DOF joints are handled through
the model's single-axis primitive expansion, so every motion subspace is a
constant axis in its own frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChainModel, Transform, _node_poses
from .rotations import skew
from .telemetry import EventLog, record_event


@dataclass(frozen=True)
class ExternalWrench:
    t: float
    body: str
    force: np.ndarray
    point: np.ndarray
    active: bool = True


@dataclass(frozen=True)
class TorqueState:
    t: float
    tau: np.ndarray
    joint_state: object
    events: EventLog = EventLog()


def transform_cop(sample, foot_tf: Transform, insole_mount: Transform | None = None):
    """Insole-frame COP (x heel-to-toe, y mediolateral) to a ground-plane point."""
    if foot_tf is None:
        raise ValueError("missing foot transform")
    local = np.array([sample.cop[0], sample.cop[1], 0.0])
    tf = foot_tf if insole_mount is None else foot_tf @ insole_mount
    p = tf.apply(local)
    p[2] = 0.0
    return p


def build_wrench(sample, p_global, body, threshold=10.0) -> ExternalWrench:
    """Normal ground force at the projected COP; inactive below ``threshold`` newtons."""
    fn = max(float(sample.normal_force), 0.0)
    active = fn >= threshold
    force = np.array([0.0, 0.0, fn if active else 0.0])
    point = np.asarray(p_global, dtype=float).copy()
    point[2] = 0.0
    return ExternalWrench(sample.t, body, force, point, active)


def _crm(v):
    w, u = skew(v[:3]), skew(v[3:])
    out = np.zeros((6, 6))
    out[:3, :3] = w
    out[3:, :3] = u
    out[3:, 3:] = w
    return out


def _crf(v):
    return -_crm(v).T


def rnea(model: ChainModel, q, qd, qdd, wrenches=(), gravity=None):
    """Generalized forces for (q, qd, qdd) with the given external wrenches."""
    comp = model._compiled
    prims = comp["prims"]
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd, dtype=float)
    n = model.n_coordinates
    for name, arr in (("q", q), ("qd", qd), ("qdd", qdd)):
        if arr.shape != (n,):
            raise ValueError(f"{name} has shape {arr.shape}, model has {n} coordinates")
    g = model.gravity if gravity is None else np.asarray(gravity, dtype=float)

    Rs, ps = _node_poses(model, q)
    body_at = {node: seg for seg, node in comp["seg_node"].items()}
    f_ext = {}
    for w in wrenches:
        if w.body not in comp["seg_node"]:
            raise ValueError(f"wrench applied to unknown body {w.body!r}")
        if not w.active:
            continue
        node = comp["seg_node"][w.body]
        F = np.asarray(w.force, dtype=float)
        f_ext[node] = f_ext.get(node, 0.0) + np.concatenate([np.cross(w.point, F), F])

    m_nodes = len(prims)
    S = np.zeros((m_nodes, 6))
    V = np.zeros((m_nodes, 6))
    A = np.zeros((m_nodes, 6))
    a_base = np.concatenate([np.zeros(3), -g])
    for i, pr in enumerate(prims):
        axis_w = Rs[i] @ pr.axis
        if pr.kind == "R":
            S[i, :3] = axis_w
            S[i, 3:] = np.cross(ps[i], axis_w)
        else:
            S[i, 3:] = axis_w
        vp = V[pr.parent] if pr.parent >= 0 else np.zeros(6)
        ap = A[pr.parent] if pr.parent >= 0 else a_base
        vJ = S[i] * qd[pr.coord]
        V[i] = vp + vJ
        A[i] = ap + S[i] * qdd[pr.coord] + _crm(V[i]) @ vJ

    F_node = np.zeros((m_nodes, 6))
    for i in range(m_nodes):
        seg = body_at.get(i)
        if seg is not None:
            mass, com, inertia = comp["body"][seg]
            c = Rs[i] @ com + ps[i]
            Ic = Rs[i] @ inertia @ Rs[i].T
            cx = skew(c)
            I6 = np.zeros((6, 6))
            I6[:3, :3] = Ic + mass * cx @ cx.T
            I6[:3, 3:] = mass * cx
            I6[3:, :3] = mass * cx.T
            I6[3:, 3:] = mass * np.eye(3)
            F_node[i] = I6 @ A[i] + _crf(V[i]) @ (I6 @ V[i])
        if i in f_ext:
            F_node[i] -= f_ext[i]

    tau = np.zeros(n)
    for i in range(m_nodes - 1, -1, -1):
        tau[prims[i].coord] += S[i] @ F_node[i]
        if prims[i].parent >= 0:
            F_node[prims[i].parent] += F_node[i]
    return tau


def inverse_dynamics(model: ChainModel, js, wrenches=(), clock=None) -> TorqueState:
    """Joint torques for a joint state; stamps events 5 and 6 when ``clock`` is given.

    Events 1 and 3 (buffer reads) are stamped by the matching stage, which
    owns the buffers, before this is called.
    """
    events = getattr(js, "events", EventLog())
    if clock is not None:
        events = record_event(events, 5, clock.now())
    tau = rnea(model, js.q, js.qd, js.qdd, wrenches)
    if clock is not None:
        events = record_event(events, 6, clock.now())
    return TorqueState(js.t, tau, js, events)
