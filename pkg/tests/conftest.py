import numpy as np
import pytest

from rtmsk.model import demo_model_path, load_model, model_from_dict


@pytest.fixture(scope="session")
def demo_model():
    return load_model(demo_model_path())


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def planar_chain_doc(masses, lengths, coms, inertias, gravity=(0.0, -9.80665, 0.0)):
    """Planar chain of revolute-z links hanging along -y at zero angle."""
    segments, joints, coords = [], [], []
    for i, (m, c, izz) in enumerate(zip(masses, coms, inertias)):
        segments.append({"name": f"link{i}", "mass": m, "com": [0.0, -c, 0.0],
                         "inertia": [izz, izz, izz]})
        joints.append({
            "name": f"j{i}", "kind": "revolute", "axis": [0, 0, 1],
            "parent": "ground" if i == 0 else f"link{i - 1}", "child": f"link{i}",
            "coordinates": [f"th{i}"],
            "parent_offset": {"translation": [0.0, 0.0 if i == 0 else -lengths[i - 1], 0.0]},
        })
        coords.append(f"th{i}")
    return {"gravity": list(gravity), "coordinates": coords, "segments": segments, "joints": joints}


@pytest.fixture
def pendulum():
    return model_from_dict(planar_chain_doc([2.0], [0.5], [0.5], [0.0]))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
