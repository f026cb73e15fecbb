"""Sliding-window cubic smoothing spline with analytic derivatives.

Within a window of W samples the fit minimises

    sum_i (y_i - f(t_i))**2 + smoothing * integral f''(t)**2 dt

over cubic splines with knots at the samples and not-a-knot end conditions.
The fitted knot values are ``c = (I + smoothing * Omega)^-1 y`` where
``Omega`` is the roughness Gram matrix of the not-a-knot interpolant; with
``smoothing == 0`` the spline interpolates and reproduces cubics exactly.
Value, first and second derivative at the evaluation index are linear
functionals of ``y``, so the weights are computed once per distinct sample
spacing and reused.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class SplineWindow:
    window_size: int = 50
    smoothing: float = 1e-6
    eval_delay: int | None = None  # samples back from the newest; default W // 2

    def __post_init__(self):
        if self.window_size < 4:
            raise ValueError("window_size must be >= 4")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if not 0 <= self.delay < self.window_size:
            raise ValueError("eval_delay must lie in [0, window_size)")

    @property
    def delay(self):
        return self.window_size // 2 if self.eval_delay is None else int(self.eval_delay)

    @property
    def eval_index(self):
        return self.window_size - 1 - self.delay


def smoother_matrix(x, smoothing):
    """Map from window ordinates to fitted knot values."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if smoothing == 0.0:
        return np.eye(n)
    basis = CubicSpline(x, np.eye(n), bc_type="not-a-knot")
    D = basis(x, 2)  # f'' at knots for each unit ordinate
    h = np.diff(x)
    # f'' is piecewise linear: int (m_i, m_{i+1})^2 over [x_i, x_{i+1}] = h/3 (m_i^2 + m_i m_{i+1} + m_{i+1}^2)
    Q = np.zeros((n, n))
    idx = np.arange(n - 1)
    Q[idx, idx] += h / 3.0
    Q[idx + 1, idx + 1] += h / 3.0
    Q[idx, idx + 1] += h / 6.0
    Q[idx + 1, idx] += h / 6.0
    omega = D.T @ Q @ D
    return np.linalg.solve(np.eye(n) + smoothing * omega, np.eye(n))


@lru_cache(maxsize=64)
def _weights_cached(key, smoothing, eval_index):
    x = np.frombuffer(key, dtype=float)
    return _weights(x, smoothing, eval_index)


def _weights(x, smoothing, eval_index):
    n = len(x)
    S = smoother_matrix(x, smoothing)
    basis = CubicSpline(x, np.eye(n), bc_type="not-a-knot")
    xe = x[eval_index]
    W = np.vstack([basis(xe, d) for d in range(3)])  # (3, n) rows: value, d1, d2
    W = W @ S
    W.setflags(write=False)
    return W


def spline_weights(t, smoothing, eval_index):
    """(3, W) weights giving value, d/dt and d2/dt2 at ``t[eval_index]``."""
    t = np.asarray(t, dtype=float)
    x = np.round(t - t[0], 12)
    return _weights_cached(x.tobytes(), float(smoothing), int(eval_index))


def fit_window(t, y, smoothing):
    """The fitted spline itself (for inspection and tests)."""
    t = np.asarray(t, dtype=float)
    c = smoother_matrix(t - t[0], smoothing) @ np.asarray(y, dtype=float)
    cs = CubicSpline(t - t[0], c, bc_type="not-a-knot")
    return lambda tt, nu=0: cs(np.asarray(tt) - t[0], nu)


def smooth_and_differentiate(win: SplineWindow, t, y):
    """(t_eval, value, d1, d2) for a full window; ``y`` may be (W,) or (W, k)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) != win.window_size or len(y) != win.window_size:
        raise ValueError(f"window not full ({len(t)} of {win.window_size} samples)")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing (duplicate timestamp?)")
    W = spline_weights(t, win.smoothing, win.eval_index)
    value, d1, d2 = W @ y
    return float(t[win.eval_index]), value, d1, d2


class SplineFilter:
    """Streaming filter for a vector signal sharing one window."""

    def __init__(self, win: SplineWindow):
        self.win = win
        self._t = deque(maxlen=win.window_size)
        self._y = deque(maxlen=win.window_size)

    @property
    def full(self):
        return len(self._t) == self.win.window_size

    def push(self, t, y):
        """Add a sample; returns (t_eval, value, d1, d2) once the window is full."""
        if self._t and t <= self._t[-1]:
            raise ValueError(f"non-increasing timestamp {t} after {self._t[-1]}")
        self._t.append(float(t))
        self._y.append(np.atleast_1d(np.asarray(y, dtype=float)))
        if not self.full:
            return None
        return smooth_and_differentiate(self.win, np.array(self._t), np.array(self._y))
