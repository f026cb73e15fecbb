"""Kinematic / dynamic / muscular chain model.

A model is a tree of rigid segments connected by revolute, ball (intrinsic
Z-X-Y Euler) or free joints, plus ideal muscles whose moment arms are explicit
polynomials in the generalized coordinates. Models are loaded from a JSON file
(see ``docs/model_format.md``) and are immutable once constructed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rotations as rot

GROUND = "ground"
JOINT_DOFS = {"revolute": 1, "ball": 3, "free": 6}
DEFAULT_GRAVITY = (0.0, 0.0, -9.80665)

_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


class ModelError(ValueError):
    """Invalid model content; ``entity`` names the offending item."""

    def __init__(self, message, entity=None):
        super().__init__(message if entity is None else f"{entity}: {message}")
        self.entity = entity


class ModelParseError(ModelError):
    pass


@dataclass(frozen=True)
class Transform:
    """Rigid transform ``x_parent = rotation @ x_child + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quat(cls, quat, translation=(0.0, 0.0, 0.0)):
        return cls(rot.to_matrix(quat), np.asarray(translation, dtype=float))

    def __matmul__(self, other: "Transform") -> "Transform":
        return Transform(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Transform":
        Rt = self.rotation.T
        return Transform(Rt, -Rt @ self.translation)

    def apply(self, point):
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    @property
    def quat(self):
        return rot.from_matrix(self.rotation)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


@dataclass(frozen=True)
class SegmentSpec:
    name: str
    mass: float
    com: np.ndarray
    inertia: np.ndarray


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    parent: str
    child: str
    coordinates: tuple
    axis: np.ndarray | None = None
    parent_offset: Transform = field(default_factory=Transform.identity)
    child_offset: Transform = field(default_factory=Transform.identity)

    @property
    def dof(self):
        return JOINT_DOFS[self.kind]


@dataclass(frozen=True)
class Polynomial:
    """Sum of ``coeff * prod(q[v] ** e)`` over terms; ``variables`` are coordinate names."""

    variables: tuple
    coeffs: np.ndarray
    exponents: np.ndarray  # (n_terms, n_variables), non-negative ints

    def evaluate(self, values):
        values = np.asarray(values, dtype=float)
        if len(self.coeffs) == 0:
            return 0.0
        return float(np.sum(self.coeffs * np.prod(values[None, :] ** self.exponents, axis=1)))

    def derivative(self, variable) -> "Polynomial":
        if variable not in self.variables:
            return Polynomial(self.variables, np.zeros(0), np.zeros((0, len(self.variables)), int))
        k = self.variables.index(variable)
        keep = self.exponents[:, k] > 0
        exps = self.exponents[keep].copy()
        coeffs = self.coeffs[keep] * exps[:, k]
        exps[:, k] -= 1
        return Polynomial(self.variables, coeffs, exps)


@dataclass(frozen=True)
class MuscleSpec:
    name: str
    f_max: float
    moment_arms: dict  # coordinate name -> Polynomial
    length: Polynomial | None = None


@dataclass(frozen=True)
class JointMapping:
    """External frame name <-> (segment, coordinate subset)."""

    pairs: dict  # external name -> (segment name, tuple of coordinate names)

    def segment_of(self, frame):
        try:
            return self.pairs[frame][0]
        except KeyError:
            raise KeyError(f"unmapped frame {frame!r}") from None

    def frame_of(self, segment):
        for frame, (seg, _) in self.pairs.items():
            if seg == segment:
                return frame
        raise KeyError(f"unmapped segment {segment!r}")


@dataclass(frozen=True)
class Coordinate:
    name: str
    lower: float = -np.inf
    upper: float = np.inf
    default: float = 0.0
    translational: bool = False


# Each joint is expanded into a chain of single-axis primitives
# ('R' revolute / 'P' prismatic about a fixed axis) joined by massless frames.
@dataclass(frozen=True)
class _Primitive:
    parent: int
    x_tree: Transform
    kind: str
    axis: np.ndarray
    coord: int


@dataclass(frozen=True)
class ChainModel:
    segments: tuple
    joints: tuple
    coordinates: tuple  # Coordinate records, in q order
    muscles: tuple = ()
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))
    mapping: JointMapping = field(default_factory=lambda: JointMapping({}))
    name: str = "model"

    def __post_init__(self):
        _validate(self)
        object.__setattr__(self, "_compiled", _compile(self))

    # -- lookups -----------------------------------------------------------
    @property
    def coordinate_names(self):
        return tuple(c.name for c in self.coordinates)

    @property
    def n_coordinates(self):
        return len(self.coordinates)

    @property
    def muscle_names(self):
        return tuple(m.name for m in self.muscles)

    @property
    def segment_names(self):
        return tuple(s.name for s in self.segments)

    @property
    def total_mass(self):
        return float(sum(s.mass for s in self.segments))

    def coordinate_index(self, name):
        return self._compiled["coord_index"][name]

    def segment(self, name) -> SegmentSpec:
        return self._compiled["segments"][name]

    def default_q(self):
        return np.array([c.default for c in self.coordinates], dtype=float)

    def translational_mask(self):
        return np.array([c.translational for c in self.coordinates], dtype=bool)

    def f_max(self):
        return np.array([m.f_max for m in self.muscles], dtype=float)

    def ancestors(self, segment):
        """Segments from ``segment`` up to (and including) the root."""
        parent_of = self._compiled["parent_of"]
        out = [segment]
        while parent_of[out[-1]] != GROUND:
            out.append(parent_of[out[-1]])
        return out


def _validate(model: ChainModel):
    seg_names = [s.name for s in model.segments]
    if len(set(seg_names)) != len(seg_names):
        dup = next(n for n in seg_names if seg_names.count(n) > 1)
        raise ModelError("duplicate segment name", dup)
    if GROUND in seg_names:
        raise ModelError("segment may not be named 'ground'", GROUND)
    for s in model.segments:
        if not np.isfinite(s.mass) or s.mass < 0:
            raise ModelError("mass must be finite and >= 0", s.name)
        I = np.asarray(s.inertia)
        if I.shape != (3, 3) or not np.all(np.isfinite(I)):
            raise ModelError("inertia must be a finite 3x3 tensor", s.name)
        if not np.allclose(I, I.T, atol=1e-12):
            raise ModelError("inertia not symmetric", s.name)
        if np.linalg.eigvalsh(I).min() < -1e-12:
            raise ModelError("inertia not positive semidefinite", s.name)

    coord_names = [c.name for c in model.coordinates]
    if len(set(coord_names)) != len(coord_names):
        dup = next(n for n in coord_names if coord_names.count(n) > 1)
        raise ModelError("duplicate coordinate name", dup)

    joint_names = [j.name for j in model.joints]
    if len(set(joint_names)) != len(joint_names):
        dup = next(n for n in joint_names if joint_names.count(n) > 1)
        raise ModelError("duplicate joint name", dup)

    child_of = {}
    declared = []
    for j in model.joints:
        if j.kind not in JOINT_DOFS:
            raise ModelError(f"unknown joint kind {j.kind!r}", j.name)
        if j.parent != GROUND and j.parent not in seg_names:
            raise ModelError(f"unknown parent segment {j.parent!r}", j.name)
        if j.child not in seg_names:
            raise ModelError(f"unknown child segment {j.child!r}", j.name)
        if j.child in child_of:
            raise ModelError(f"segment {j.child!r} has more than one parent joint", j.name)
        if j.parent == j.child:
            raise ModelError("joint connects a segment to itself (cycle)", j.name)
        child_of[j.child] = j
        if len(j.coordinates) != j.dof:
            raise ModelError(f"{j.kind} joint needs {j.dof} coordinates, got {len(j.coordinates)}", j.name)
        if j.kind == "revolute":
            if j.axis is None or abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError("revolute axis must be unit norm (1e-9)", j.name)
        declared.extend(j.coordinates)

    missing = [s for s in seg_names if s not in child_of]
    if missing:
        raise ModelError("segment is not the child of any joint", missing[0])

    # walk each segment to the ground; revisiting a segment means a cycle
    roots = [j for j in model.joints if j.parent == GROUND]
    for s in seg_names:
        seen = set()
        cur = s
        while cur != GROUND:
            if cur in seen:
                raise ModelError("joint graph contains a cycle", child_of[cur].name)
            seen.add(cur)
            cur = child_of[cur].parent
    if len(roots) != 1:
        raise ModelError(f"expected a single root joint attached to ground, found {len(roots)}",
                         roots[1].name if len(roots) > 1 else None)
    for j in model.joints:
        if j.kind == "free" and j.parent != GROUND:
            raise ModelError("free joint allowed only at the tree root", j.name)

    if sorted(declared) != sorted(coord_names) or len(declared) != len(coord_names):
        extra = set(declared) ^ set(coord_names)
        raise ModelError("coordinate list does not match the joint coordinates",
                         sorted(extra)[0] if extra else None)

    g = np.asarray(model.gravity, dtype=float)
    if g.shape != (3,) or not np.all(np.isfinite(g)):
        raise ModelError("gravity must be a finite 3-vector", "gravity")

    muscle_names = [m.name for m in model.muscles]
    if len(set(muscle_names)) != len(muscle_names):
        dup = next(n for n in muscle_names if muscle_names.count(n) > 1)
        raise ModelError("duplicate muscle name", dup)
    cset = set(coord_names)
    for m in model.muscles:
        if not m.f_max > 0 or not np.isfinite(m.f_max):
            raise ModelError("f_max must be > 0", m.name)
        polys = list(m.moment_arms.items())
        if m.length is not None:
            polys.append((None, m.length))
        for coord, poly in polys:
            if coord is not None and coord not in cset:
                raise ModelError(f"moment arm about undeclared coordinate {coord!r}", m.name)
            bad = [v for v in poly.variables if v not in cset]
            if bad:
                raise ModelError(f"polynomial references undeclared coordinate {bad[0]!r}", m.name)
            if not np.all(np.isfinite(poly.coeffs)):
                raise ModelError("non-finite polynomial coefficient", m.name)
            lo = [model.coordinates[coord_names.index(v)].lower for v in poly.variables]
            hi = [model.coordinates[coord_names.index(v)].upper for v in poly.variables]
            if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and len(poly.variables):
                for corner in (lo, hi):
                    if not np.isfinite(poly.evaluate(corner)):
                        raise ModelError("polynomial not finite over coordinate range", m.name)

    seen_segments = set()
    for frame, (segment, coords) in model.mapping.pairs.items():
        if segment not in seg_names:
            raise ModelError(f"mapping targets unknown segment {segment!r}", frame)
        if segment in seen_segments:
            raise ModelError(f"segment {segment!r} mapped more than once", frame)
        seen_segments.add(segment)
        for c in coords:
            if c not in cset:
                raise ModelError(f"mapping references undeclared coordinate {c!r}", frame)


def _compile(model: ChainModel):
    coord_index = {c.name: i for i, c in enumerate(model.coordinates)}
    segments = {s.name: s for s in model.segments}
    children = {}
    for j in model.joints:
        children.setdefault(j.parent, []).append(j)

    order = []  # joints in topological order
    stack = list(reversed(children.get(GROUND, [])))
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children.get(j.child, [])))

    joint_of = {j.child: j for j in model.joints}
    prims = []
    seg_node = {}  # segment -> index of its last primitive
    for j in order:
        if j.parent == GROUND:
            parent_node, pre = -1, j.parent_offset
        else:
            parent_node = seg_node[j.parent]
            pre = joint_of[j.parent].child_offset @ j.parent_offset
        idx = [coord_index[c] for c in j.coordinates]
        if j.kind == "revolute":
            axes = [("R", np.asarray(j.axis, float), idx[0])]
        elif j.kind == "ball":
            axes = [("R", _EZ, idx[0]), ("R", _EX, idx[1]), ("R", _EY, idx[2])]
        else:
            axes = [("P", _EX, idx[0]), ("P", _EY, idx[1]), ("P", _EZ, idx[2]),
                    ("R", _EZ, idx[3]), ("R", _EX, idx[4]), ("R", _EY, idx[5])]
        for k, (kind, axis, ci) in enumerate(axes):
            prims.append(_Primitive(parent_node, pre if k == 0 else Transform.identity(),
                                    kind, axis, ci))
            parent_node = len(prims) - 1
        seg_node[j.child] = parent_node

    # segment mass properties expressed in the frame of its last primitive
    body = {}
    for j in order:
        s = segments[j.child]
        C = j.child_offset
        body[j.child] = (s.mass, C.apply(s.com), C.rotation @ np.asarray(s.inertia) @ C.rotation.T)

    muscle_polys = []
    for i, m in enumerate(model.muscles):
        arms = dict(m.moment_arms)
        if m.length is not None:
            for c in model.coordinates:
                if c.name not in arms:
                    d = m.length.derivative(c.name)
                    if len(d.coeffs):
                        arms[c.name] = Polynomial(d.variables, -d.coeffs, d.exponents)
        for coord, poly in arms.items():
            var_idx = np.array([coord_index[v] for v in poly.variables], dtype=int)
            muscle_polys.append((coord_index[coord], i, var_idx, poly))

    return {
        "coord_index": coord_index,
        "segments": segments,
        "parent_of": {j.child: j.parent for j in model.joints},
        "joint_of": joint_of,
        "order": order,
        "prims": prims,
        "seg_node": seg_node,
        "body": body,
        "muscle_polys": muscle_polys,
    }


# -- kinematics --------------------------------------------------------------

def joint_motion(joint: JointSpec, qj) -> Transform:
    """Motion of the joint frame for the joint's own coordinates ``qj``."""
    qj = np.asarray(qj, dtype=float)
    if joint.kind == "revolute":
        return Transform(rot.axis_angle_matrix(joint.axis, qj[0]), np.zeros(3))
    if joint.kind == "ball":
        return Transform(rot.euler_zxy(*qj), np.zeros(3))
    return Transform(rot.euler_zxy(*qj[3:6]), qj[0:3].copy())


def _check_q(model, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_coordinates,):
        raise ValueError(f"q has shape {q.shape}, model has {model.n_coordinates} coordinates")
    if not np.all(np.isfinite(q)):
        raise ValueError("q contains non-finite values")
    return q


def _node_poses(model, q):
    prims = model._compiled["prims"]
    Rs = np.empty((len(prims), 3, 3))
    ps = np.empty((len(prims), 3))
    for n, pr in enumerate(prims):
        if pr.parent < 0:
            R, p = pr.x_tree.rotation, pr.x_tree.translation
        else:
            Rp, pp = Rs[pr.parent], ps[pr.parent]
            R = Rp @ pr.x_tree.rotation
            p = Rp @ pr.x_tree.translation + pp
        if pr.kind == "R":
            R = R @ rot.axis_angle_matrix(pr.axis, q[pr.coord])
        else:
            p = p + R @ (pr.axis * q[pr.coord])
        Rs[n], ps[n] = R, p
    return Rs, ps


def forward_kinematics(model: ChainModel, q) -> dict:
    """Ground-frame transform of every segment at configuration ``q``."""
    q = _check_q(model, q)
    Rs, ps = _node_poses(model, q)
    out = {}
    for j in model._compiled["order"]:
        n = model._compiled["seg_node"][j.child]
        out[j.child] = Transform(Rs[n], ps[n]) @ j.child_offset
    return out


def segment_rotations(model: ChainModel, q):
    """(segment -> rotation matrix), plus primitive poses for Jacobians."""
    Rs, ps = _node_poses(model, q)
    out = {}
    for j in model._compiled["order"]:
        n = model._compiled["seg_node"][j.child]
        out[j.child] = Rs[n] @ j.child_offset.rotation
    return out, Rs, ps


def angular_jacobian(model: ChainModel, segment, Rs):
    """3 x n map from qdot to the segment's world angular velocity."""
    J = np.zeros((3, model.n_coordinates))
    prims = model._compiled["prims"]
    n = model._compiled["seg_node"][segment]
    while n >= 0:
        pr = prims[n]
        if pr.kind == "R":
            J[:, pr.coord] += Rs[n] @ pr.axis
        n = pr.parent
    return J


# -- muscles -----------------------------------------------------------------

def moment_arms(model: ChainModel, q):
    """Moment-arm matrix R (coordinates x muscles), metres."""
    q = np.asarray(q, dtype=float)
    R = np.zeros((model.n_coordinates, len(model.muscles)))
    for j, i, var_idx, poly in model._compiled["muscle_polys"]:
        R[j, i] += poly.evaluate(q[var_idx])
    return R


def musculotendon_lengths(model: ChainModel, q):
    """Lengths of muscles that declare a length polynomial (NaN otherwise)."""
    q = np.asarray(q, dtype=float)
    ci = model._compiled["coord_index"]
    out = np.full(len(model.muscles), np.nan)
    for i, m in enumerate(model.muscles):
        if m.length is not None:
            out[i] = m.length.evaluate(q[[ci[v] for v in m.length.variables]])
    return out


# -- file I/O ------------------------------------------------------------------

def _transform_from(d, where):
    if d is None:
        return Transform.identity()
    try:
        quat = np.asarray(d.get("rotation", [1.0, 0.0, 0.0, 0.0]), dtype=float)
        trans = np.asarray(d.get("translation", [0.0, 0.0, 0.0]), dtype=float)
    except (TypeError, ValueError, AttributeError) as exc:
        raise ModelParseError(f"bad transform: {exc}", where) from None
    if quat.shape != (4,) or trans.shape != (3,):
        raise ModelParseError("transform needs rotation[4] (wxyz) and translation[3]", where)
    if abs(np.linalg.norm(quat) - 1.0) > 1e-9:
        raise ModelError("offset rotation quaternion must be unit norm", where)
    return Transform.from_quat(quat, trans)


def _inertia_from(v, where):
    a = np.asarray(v, dtype=float)
    if a.shape == (3, 3):
        return a
    if a.shape == (3,):
        return np.diag(a)
    if a.shape == (6,):  # Ixx Iyy Izz Ixy Ixz Iyz
        xx, yy, zz, xy, xz, yz = a
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
    raise ModelParseError("inertia must be 3x3, [Ixx,Iyy,Izz] or 6 components", where)


def _poly_from(d, default_vars, where):
    variables = tuple(d.get("variables", default_vars))
    terms = d.get("terms", [])
    coeffs = np.array([float(t["coeff"]) for t in terms], dtype=float)
    exps = np.array([list(t.get("exponents", [])) for t in terms], dtype=int).reshape(len(terms), -1)
    if len(terms) and exps.shape[1] != len(variables):
        raise ModelParseError("exponent tuple length differs from variable count", where)
    if np.any(exps < 0):
        raise ModelParseError("negative exponent", where)
    return Polynomial(variables, coeffs, exps.reshape(len(terms), len(variables)))


def model_from_dict(doc: dict) -> ChainModel:
    try:
        segments = tuple(
            SegmentSpec(s["name"], float(s.get("mass", 0.0)),
                        np.asarray(s.get("com", [0.0, 0.0, 0.0]), dtype=float),
                        _inertia_from(s.get("inertia", [0.0, 0.0, 0.0]), s["name"]))
            for s in doc["segments"])
        joints = []
        for j in doc["joints"]:
            axis = j.get("axis")
            joints.append(JointSpec(
                name=j["name"], kind=j["kind"], parent=j.get("parent", GROUND), child=j["child"],
                coordinates=tuple(j["coordinates"]),
                axis=None if axis is None else np.asarray(axis, dtype=float),
                parent_offset=_transform_from(j.get("parent_offset"), j["name"]),
                child_offset=_transform_from(j.get("child_offset"), j["name"]),
            ))
        translational = set()
        for j in joints:
            if j.kind == "free":
                translational.update(j.coordinates[:3])
        coords = []
        for c in doc["coordinates"]:
            if isinstance(c, str):
                c = {"name": c}
            lo, hi = c.get("range", [-np.inf, np.inf])
            coords.append(Coordinate(c["name"], float(lo), float(hi), float(c.get("default", 0.0)),
                                     c["name"] in translational))
        muscles = []
        for m in doc.get("muscles", []):
            arms = {}
            for entry in m.get("moment_arms", []):
                coord = entry["coordinate"]
                arms[coord] = _poly_from(entry, (coord,), m["name"])
            length = m.get("length")
            muscles.append(MuscleSpec(m["name"], float(m["f_max"]), arms,
                                      None if length is None else _poly_from(length, (), m["name"])))
        mapping = {}
        for e in doc.get("mapping", []):
            if e["frame"] in mapping:
                raise ModelError("external frame mapped twice (mapping must be bijective)", e["frame"])
            mapping[e["frame"]] = (e["segment"], tuple(e.get("coordinates", [])))
        gravity = np.asarray(doc.get("gravity", DEFAULT_GRAVITY), dtype=float)
    except KeyError as exc:
        raise ModelParseError(f"missing required key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelParseError(f"malformed model: {exc}") from None
    return ChainModel(segments, tuple(joints), tuple(coords), tuple(muscles), gravity,
                      JointMapping(mapping), doc.get("name", "model"))


def load_model(path) -> ChainModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ModelParseError(f"{path}: top level must be an object")
    return model_from_dict(doc)


def demo_model_path() -> Path:
    """Bundled 23-coordinate lower-body model."""
    return Path(__file__).parent / "data" / "lower_body.json"
