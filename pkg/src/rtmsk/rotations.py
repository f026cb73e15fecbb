"""Small quaternion / rotation toolbox.

Quaternions are numpy arrays in ``(w, x, y, z)`` order, Hamilton convention,
representing the rotation of a frame expressed in its parent.
"""
import numpy as np


def normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero-norm quaternion")
    return q / n


def canonical(q):
    """Sign-fix so the scalar part is non-negative."""
    q = np.asarray(q, dtype=float)
    return -q if q[0] < 0 else q


def multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return np.concatenate(([np.cos(h)], np.sin(h) * axis))


def to_matrix(q):
    w, x, y, z = normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def from_matrix(R):
    """Rotation matrix to unit quaternion (Shepperd's method), scalar part >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return canonical(normalize(q))


def axis_angle_matrix(axis, angle):
    """Rodrigues formula; ``axis`` must be unit length."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def rot_x(a):
    return axis_angle_matrix((1.0, 0.0, 0.0), a)


def rot_y(a):
    return axis_angle_matrix((0.0, 1.0, 0.0), a)


def rot_z(a):
    return axis_angle_matrix((0.0, 0.0, 1.0), a)


def log_matrix(R):
    """Rotation vector (axis * angle) of a rotation matrix, angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    angle = np.arccos(cos_t)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-6:
        # first-order: R - R^T = 2 sin(t) [w]x
        return 0.5 * v
    if np.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; recover axis from R + I
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(axis, v) < 0:
            axis = -axis
        return angle * axis
    return angle / (2.0 * np.sin(angle)) * v


def geodesic_angle(Ra, Rb):
    """Angle of the relative rotation between two rotation matrices."""
    cos_t = np.clip(0.5 * (np.trace(Ra.T @ Rb) - 1.0), -1.0, 1.0)
    return float(np.arccos(cos_t))


def skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def euler_zxy(a, b, c):
    """Intrinsic Z-X-Y Euler rotation Rz(a) Rx(b) Ry(c)."""
    return rot_z(a) @ rot_x(b) @ rot_y(c)


def yaw_of(R, forward=(1.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    """Heading angle (about ``up``) that ``R`` applies to the ``forward`` axis."""
    up = np.asarray(up, dtype=float)
    f = np.asarray(forward, dtype=float)
    g = R @ f
    g = g - up * np.dot(up, g)
    side = np.cross(up, f)
    return float(np.arctan2(np.dot(g, side), np.dot(g, f)))
