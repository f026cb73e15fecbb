import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtmsk import rotations as rot
from rtmsk.model import (
    ModelError, ModelParseError, forward_kinematics, joint_motion, load_model,
    model_from_dict, moment_arms, musculotendon_lengths,
)


def one_joint_doc(axis=(0, 0, 1), child_t=(0, 0, 0)):
    return {
        "coordinates": ["q0"],
        "segments": [{"name": "a", "mass": 1.0, "com": [0, 0, 0], "inertia": [0.1, 0.1, 0.1]}],
        "joints": [{"name": "j0", "kind": "revolute", "parent": "ground", "child": "a",
                    "coordinates": ["q0"], "axis": list(axis),
                    "child_offset": {"translation": list(child_t)}}],
    }


def test_load_minimal_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(one_joint_doc()))
    m = load_model(path)
    assert m.n_coordinates == 1
    assert m.coordinate_names == ("q0",)


def test_demo_model_has_23_coordinates(demo_model):
    assert demo_model.n_coordinates == 23
    assert demo_model.coordinate_names[:6] == (
        "pelvis_tilt", "pelvis_list", "pelvis_rotation", "pelvis_tx", "pelvis_ty", "pelvis_tz")
    assert demo_model.translational_mask().sum() == 3


def test_cycle_is_rejected():
    doc = one_joint_doc()
    doc["segments"] += [{"name": "b", "mass": 1.0}, {"name": "c", "mass": 1.0}]
    doc["coordinates"] += ["qb", "qc"]
    # b's parent is c and c's parent is b: neither reaches ground
    doc["joints"] += [
        {"name": "jb", "kind": "revolute", "parent": "c", "child": "b", "coordinates": ["qb"], "axis": [1, 0, 0]},
        {"name": "jc", "kind": "revolute", "parent": "b", "child": "c", "coordinates": ["qc"], "axis": [1, 0, 0]},
    ]
    with pytest.raises(ModelError, match="cycle") as err:
        model_from_dict(doc)
    assert err.value.entity in ("jb", "jc")


@pytest.mark.parametrize("mutate, entity", [
    (lambda d: d["segments"].append(dict(d["segments"][0])), "a"),
    (lambda d: d["joints"][0].update(axis=[0, 0, 1.001]), "j0"),
    (lambda d: d["coordinates"].append("q0"), "q0"),
    (lambda d: d["segments"][0].update(mass=-1.0), "a"),
    (lambda d: d["segments"][0].update(inertia=[[1, 0.5, 0], [0, 1, 0], [0, 0, 1]]), "a"),
    (lambda d: d["segments"][0].update(inertia=[1.0, -1.0, 1.0]), "a"),
])
def test_validation_names_offender(mutate, entity):
    doc = one_joint_doc()
    mutate(doc)
    with pytest.raises(ModelError) as err:
        model_from_dict(doc)
    assert err.value.entity == entity


def test_free_joint_only_at_root():
    doc = one_joint_doc()
    doc["segments"].append({"name": "b", "mass": 1.0})
    doc["coordinates"] += [f"f{i}" for i in range(6)]
    doc["joints"].append({"name": "jf", "kind": "free", "parent": "a", "child": "b",
                          "coordinates": [f"f{i}" for i in range(6)]})
    with pytest.raises(ModelError, match="root"):
        model_from_dict(doc)


def test_muscle_on_undeclared_coordinate():
    doc = one_joint_doc()
    doc["muscles"] = [{"name": "m", "f_max": 100.0,
                       "moment_arms": [{"coordinate": "nope", "terms": [{"coeff": 0.1, "exponents": [0]}]}]}]
    with pytest.raises(ModelError) as err:
        model_from_dict(doc)
    assert err.value.entity == "m"


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    with pytest.raises(ModelParseError):
        load_model(path)
    path.write_text(json.dumps({"segments": []}))
    with pytest.raises(ModelParseError, match="joints"):
        load_model(path)


# -- forward kinematics ---------------------------------------------------------

def test_zero_q_is_offset_composition(demo_model):
    q = np.zeros(demo_model.n_coordinates)
    fk = forward_kinematics(demo_model, q)
    for j in demo_model.joints:
        parent = np.eye(4) if j.parent == "ground" else fk[j.parent].matrix()
        expected = parent @ j.parent_offset.matrix() @ j.child_offset.matrix()
        np.testing.assert_allclose(fk[j.child].matrix(), expected, atol=1e-12)


def test_quarter_turn():
    m = model_from_dict(one_joint_doc(child_t=(1, 0, 0)))
    fk = forward_kinematics(m, [np.pi / 2])
    np.testing.assert_allclose(fk["a"].translation, [0, 1, 0], atol=1e-15)


def _homogeneous(axis, angle):
    """4x4 rotation about a unit axis built from scratch (not via the package)."""
    x, y, z = axis
    K = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    T = np.eye(4)
    T[:3, :3] = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
    return T


def _pose(quat, t):
    w, x, y, z = quat
    T = np.eye(4)
    T[:3, :3] = [[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                 [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                 [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]]
    T[:3, 3] = t
    return T


def test_random_chain_matches_homogeneous_oracle(rng):
    n = 5
    doc = {"coordinates": [], "segments": [], "joints": []}
    specs = []
    for i in range(n):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pq = rng.normal(size=4)
        pq /= np.linalg.norm(pq)
        cq = rng.normal(size=4)
        cq /= np.linalg.norm(cq)
        pt, ct = rng.normal(size=3), rng.normal(size=3)
        specs.append((axis, pq, pt, cq, ct))
        doc["coordinates"].append(f"q{i}")
        doc["segments"].append({"name": f"s{i}", "mass": 1.0})
        doc["joints"].append({
            "name": f"j{i}", "kind": "revolute", "axis": axis.tolist(),
            "parent": "ground" if i == 0 else f"s{i - 1}", "child": f"s{i}", "coordinates": [f"q{i}"],
            "parent_offset": {"rotation": pq.tolist(), "translation": pt.tolist()},
            "child_offset": {"rotation": cq.tolist(), "translation": ct.tolist()}})
    m = model_from_dict(doc)
    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, size=n)
        fk = forward_kinematics(m, q)
        T = np.eye(4)
        for i, (axis, pq, pt, cq, ct) in enumerate(specs):
            T = T @ _pose(pq, pt) @ _homogeneous(axis, q[i]) @ _pose(cq, ct)
            assert np.max(np.abs(fk[f"s{i}"].matrix() - T)) < 1e-12


def test_composition_property(demo_model, rng):
    for _ in range(10):
        q = rng.uniform(-1, 1, size=demo_model.n_coordinates)
        fk = forward_kinematics(demo_model, q)
        for j in demo_model.joints:
            qj = [q[demo_model.coordinate_index(c)] for c in j.coordinates]
            parent = np.eye(4) if j.parent == "ground" else fk[j.parent].matrix()
            expected = (parent @ j.parent_offset.matrix() @ joint_motion(j, qj).matrix()
                        @ j.child_offset.matrix())
            np.testing.assert_allclose(fk[j.child].matrix(), expected, atol=1e-12)


def test_ball_joint_is_zxy_euler():
    doc = one_joint_doc()
    doc["coordinates"] = ["a", "b", "c"]
    doc["joints"][0].update(kind="ball", coordinates=["a", "b", "c"])
    del doc["joints"][0]["axis"]
    m = model_from_dict(doc)
    R = forward_kinematics(m, [0.3, -0.2, 0.5])["a"].rotation
    np.testing.assert_allclose(R, rot.rot_z(0.3) @ rot.rot_x(-0.2) @ rot.rot_y(0.5), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=23, max_size=23),
       st.integers(0, 22), st.sampled_from([1e-3, 1e-5, 1e-7]))
def test_fk_continuity(q, k, h):
    from rtmsk.model import demo_model_path
    m = _cached_demo(demo_model_path())
    q = np.array(q)
    dq = np.zeros_like(q)
    dq[k] = h
    a, b = forward_kinematics(m, q), forward_kinematics(m, q + dq)
    # segments are within ~1.5 m of the pelvis, so a Lipschitz bound of 3 m/rad is ample
    for seg in a:
        assert np.linalg.norm(a[seg].translation - b[seg].translation) <= 3.0 * h + 1e-12


_CACHE = {}


def _cached_demo(path):
    if path not in _CACHE:
        _CACHE[path] = load_model(path)
    return _CACHE[path]


def test_fk_dimension_mismatch(demo_model):
    with pytest.raises(ValueError):
        forward_kinematics(demo_model, np.zeros(5))
    q = np.zeros(23)
    q[3] = np.nan
    with pytest.raises(ValueError):
        forward_kinematics(demo_model, q)


# -- moment arms ----------------------------------------------------------------

def _muscle_doc(entry):
    doc = one_joint_doc()
    doc["muscles"] = [dict(name="m", f_max=500.0, **entry)]
    return doc


def test_constant_moment_arm():
    m = model_from_dict(_muscle_doc({"moment_arms": [
        {"coordinate": "q0", "terms": [{"coeff": 0.05, "exponents": [0]}]}]}))
    for q in (-1.0, 0.0, 2.0):
        assert moment_arms(m, [q])[0, 0] == 0.05


def test_linear_moment_arm():
    m = model_from_dict(_muscle_doc({"moment_arms": [
        {"coordinate": "q0", "terms": [{"coeff": -0.002, "exponents": [1]}]}]}))
    for q in (-1.3, 0.0, 0.7):
        assert moment_arms(m, [q])[0, 0] == -0.002 * q


def test_moment_arm_is_negative_length_gradient(demo_model, rng):
    h = 1e-5
    has_len = [i for i, mu in enumerate(demo_model.muscles) if mu.length is not None]
    assert has_len
    for _ in range(5):
        q = rng.uniform(-1, 1, size=demo_model.n_coordinates)
        R = moment_arms(demo_model, q)
        for j in range(demo_model.n_coordinates):
            dq = np.zeros_like(q)
            dq[j] = h
            fd = -(musculotendon_lengths(demo_model, q + dq)
                   - musculotendon_lengths(demo_model, q - dq)) / (2 * h)
            for i in has_len:
                if abs(fd[i]) < 1e-12:
                    assert R[j, i] == 0.0
                else:
                    assert abs(R[j, i] - fd[i]) / abs(fd[i]) < 1e-6


def test_moment_arm_shape_and_order(demo_model):
    R = moment_arms(demo_model, demo_model.default_q())
    assert R.shape == (23, 16)
    i = demo_model.muscle_names.index("soleus_r")
    j = demo_model.coordinate_index("ankle_angle_r")
    assert R[j, i] == pytest.approx(-0.045)
    assert np.count_nonzero(R[:, i]) == 1
