import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtmsk import rotations as rot
from rtmsk.calib import AmbiguousAverage, CalibrationError, CalibrationSet, average_quaternions, calibrate
from rtmsk.model import forward_kinematics
from rtmsk.streams import OrientationSample

SENSORS = ("base_link", "torso_link", "femur_r_link", "tibia_r_link", "calcn_r_link", "toes_r_link",
           "femur_l_link", "tibia_l_link", "calcn_l_link", "toes_l_link")


def qz(deg):
    return rot.from_axis_angle([0, 0, 1], np.deg2rad(deg))


def _random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def _same_rotation(a, b, tol):
    return min(np.abs(a - b).max(), np.abs(a + b).max()) < tol


def test_identical_inputs(rng):
    q = _random_quat(rng)
    assert _same_rotation(average_quaternions([q] * 10), q, 1e-12)


def test_sign_flip_invariance(rng):
    q = _random_quat(rng)
    assert _same_rotation(average_quaternions([q, -q]), q, 1e-12)


def _grid_oracle(samples):
    best, arg = np.inf, None
    for a in np.linspace(0, np.pi / 2, 90001):
        c = qz(np.rad2deg(a))
        cost = sum(1 - (c @ s) ** 2 for s in samples)
        if cost < best:
            best, arg = cost, a
    return arg


def test_two_z_rotations_average_to_45():
    samples = [qz(0), qz(90)]
    got = average_quaternions(samples)
    oracle = _grid_oracle(samples)
    assert oracle == pytest.approx(np.pi / 4, abs=np.pi / 2 / 90000)
    assert _same_rotation(got, qz(45), 1e-9)
    assert got[0] >= 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_permutation_and_sign_invariance(seed, n):
    rng = np.random.default_rng(seed)
    base = _random_quat(rng)
    qs = [rot.normalize(base + 0.2 * rng.normal(size=4)) for _ in range(n)]
    a = average_quaternions(qs)
    flipped = [q * s for q, s in zip(rng.permutation(qs), rng.choice([-1, 1], size=n))]
    assert _same_rotation(average_quaternions(flipped), a, 1e-9)


def test_average_errors():
    with pytest.raises(CalibrationError):
        average_quaternions([])
    with pytest.raises(CalibrationError):
        average_quaternions([[2.0, 0, 0, 0]])
    # 180 deg apart about z: the accumulator has two equal dominant eigenvalues
    with pytest.raises(AmbiguousAverage):
        average_quaternions([qz(0), qz(180)])


def _stance_frames(model, disturb=lambda frame, R: R, n=10, noise=0.0, rng=None):
    fk = forward_kinematics(model, model.default_q())
    out = {}
    for f in SENSORS:
        R = disturb(f, fk[model.mapping.segment_of(f)].rotation)
        samples = []
        for k in range(n):
            q = rot.from_matrix(R)
            if noise:
                q = rot.normalize(q + noise * rng.normal(size=4))
            samples.append(OrientationSample(k * 0.01, f, q))
        out[f] = samples
    return out


def _assert_round_trip(model, cal, frames):
    fk = forward_kinematics(model, model.default_q())
    for f, samples in frames.items():
        avg = average_quaternions([s.quat for s in samples])
        R = cal.segment_rotation(f, avg)
        assert rot.geodesic_angle(R, fk[model.mapping.segment_of(f)].rotation) < 1e-9


def test_aligned_sensors_identity(demo_model):
    frames = _stance_frames(demo_model)
    cal = calibrate(demo_model, demo_model.default_q(), frames)
    assert cal.heading == pytest.approx(0.0, abs=1e-12)
    for q in cal.offsets.values():
        assert _same_rotation(q, np.array([1.0, 0, 0, 0]), 1e-12)
    _assert_round_trip(demo_model, cal, frames)


def test_global_yaw_removed(demo_model):
    Y = rot.rot_z(np.deg2rad(30))
    frames = _stance_frames(demo_model, lambda f, R: Y @ R)
    cal = calibrate(demo_model, demo_model.default_q(), frames)
    assert cal.heading == pytest.approx(np.deg2rad(-30), abs=1e-12)
    for q in cal.offsets.values():
        assert _same_rotation(q, np.array([1.0, 0, 0, 0]), 1e-9)
    _assert_round_trip(demo_model, cal, frames)


def test_mount_rotated_about_long_axis(demo_model):
    M = rot.rot_z(np.pi / 2)  # segment long axis is local z
    frames = _stance_frames(demo_model, lambda f, R: R @ M if f == "tibia_l_link" else R)
    cal = calibrate(demo_model, demo_model.default_q(), frames)
    for f, q in cal.offsets.items():
        expect = rot.from_matrix(M) if f == "tibia_l_link" else np.array([1.0, 0, 0, 0])
        assert _same_rotation(q, expect, 1e-12)


def test_round_trip_random_mounts_and_noise(demo_model, rng):
    mounts = {f: rot.to_matrix(_random_quat(rng)) for f in SENSORS}
    Y = rot.rot_z(0.7)
    frames = _stance_frames(demo_model, lambda f, R: Y @ R @ mounts[f], noise=1e-3, rng=rng)
    for mode in ("global", "per-sensor"):
        cal = calibrate(demo_model, demo_model.default_q(), frames, mode=mode)
        _assert_round_trip(demo_model, cal, frames)
        assert all(abs(np.linalg.norm(q) - 1) < 1e-9 for q in cal.offsets.values())


def test_per_sensor_headings(demo_model):
    yaws = {f: 0.1 * i for i, f in enumerate(SENSORS)}
    frames = _stance_frames(demo_model, lambda f, R: rot.rot_z(yaws[f]) @ R)
    cal = calibrate(demo_model, demo_model.default_q(), frames, mode="per-sensor")
    for f in SENSORS:
        assert cal.heading_of(f) == pytest.approx(-yaws[f], abs=1e-12)
        assert _same_rotation(cal.offsets[f], np.array([1.0, 0, 0, 0]), 1e-9)
    glob = calibrate(demo_model, demo_model.default_q(), frames, mode="global")
    assert glob.heading == pytest.approx(-yaws["base_link"], abs=1e-12)


def test_calibrate_errors(demo_model):
    frames = _stance_frames(demo_model)
    with pytest.raises(CalibrationError, match="contributed no frames"):
        calibrate(demo_model, demo_model.default_q(), {**frames, "torso_link": []})
    with pytest.raises(CalibrationError, match="heading reference"):
        calibrate(demo_model, demo_model.default_q(), frames, reference="nope_link")
    no_pelvis = {f: s for f, s in frames.items() if f != "base_link"}
    with pytest.raises(CalibrationError):
        calibrate(demo_model, demo_model.default_q(), no_pelvis)
    with pytest.raises(CalibrationError, match="does not map"):
        calibrate(demo_model, demo_model.default_q(), {**frames, "hand_link": frames["base_link"]})


def test_persistence_round_trip(demo_model, tmp_path):
    frames = _stance_frames(demo_model, lambda f, R: rot.rot_z(0.3) @ R)
    for mode in ("global", "per-sensor"):
        cal = calibrate(demo_model, demo_model.default_q(), frames, mode=mode)
        cal.save(tmp_path / "cal.json")
        back = CalibrationSet.load(tmp_path / "cal.json")
        assert back.frames == cal.frames
        for f in cal.frames:
            np.testing.assert_array_equal(back.offsets[f], cal.offsets[f])
            assert back.heading_of(f) == cal.heading_of(f)
