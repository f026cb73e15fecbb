import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtmsk.filter import SplineFilter, SplineWindow, fit_window, smooth_and_differentiate

FS = 100.0
T = np.arange(50) / FS + 3.0


def test_constant_exact():
    win = SplineWindow(smoothing=0.0)
    t_e, v, d1, d2 = smooth_and_differentiate(win, T, np.full(50, 2.5))
    assert v == pytest.approx(2.5, abs=1e-12)
    assert abs(d1) < 1e-9 and abs(d2) < 1e-6


@pytest.mark.parametrize("smoothing", [0.0, 1e-6])
def test_linear(smoothing):
    win = SplineWindow(smoothing=smoothing)
    y = 1.5 - 0.7 * T
    t_e, v, d1, d2 = smooth_and_differentiate(win, T, y)
    assert v == pytest.approx(1.5 - 0.7 * t_e, abs=1e-9)
    assert d1 == pytest.approx(-0.7, abs=1e-9)
    assert abs(d2) < 1e-6


@pytest.mark.parametrize("smoothing", [0.0, 1e-6])
def test_quadratic_second_derivative(smoothing):
    win = SplineWindow(smoothing=smoothing)
    t = np.arange(50) / FS
    t_e, v, d1, d2 = smooth_and_differentiate(win, t, t**2)
    assert d2 == pytest.approx(2.0, abs=1e-6)
    # d1 against central differences of the smoothed fit itself
    f = fit_window(t, t**2, smoothing)
    h = 1e-4
    assert d1 == pytest.approx((f(t_e + h) - f(t_e - h)) / (2 * h), abs=1e-4)
    assert d1 == pytest.approx(2 * t_e, abs=1e-6)


def test_cubic_exact_without_smoothing():
    win = SplineWindow(smoothing=0.0)
    t = np.arange(50) / FS
    y = 0.3 * t**3 - t**2 + 2 * t - 1
    t_e, v, d1, d2 = smooth_and_differentiate(win, t, y)
    assert v == pytest.approx(0.3 * t_e**3 - t_e**2 + 2 * t_e - 1, abs=1e-10)
    assert d1 == pytest.approx(0.9 * t_e**2 - 2 * t_e + 2, abs=1e-8)
    assert d2 == pytest.approx(1.8 * t_e - 2, abs=1e-6)


def test_sinusoid_derivative_amplitude():
    A, w = 0.5, 2 * np.pi
    filt = SplineFilter(SplineWindow())
    d1s = []
    for k in range(300):
        t = k / FS
        out = filt.push(t, A * np.sin(w * t))
        if out is not None:
            d1s.append(out[2][0] - A * w * np.cos(w * out[0]))
    assert np.max(np.abs(d1s)) < 0.02 * A * w


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 10_000))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=50), rng.normal(size=50)
    win = SplineWindow()
    fx = np.array(smooth_and_differentiate(win, T, x)[1:])
    fy = np.array(smooth_and_differentiate(win, T, y)[1:])
    fxy = np.array(smooth_and_differentiate(win, T, a * x + b * y)[1:])
    np.testing.assert_allclose(fxy, a * fx + b * fy, atol=1e-7 * (1 + abs(a) + abs(b)) * np.abs(fx).max())


@pytest.mark.parametrize("freq", [0.1, 0.25])
def test_derivatives_match_dense_fit(freq):
    # t_eval sits on a knot where f''' jumps, so the FD estimate of f'' carries
    # an O(h * jump) term; slow gait-like signals keep it below 1e-6 relative
    y = 0.5 * np.sin(2 * np.pi * freq * T) + 0.1 * T**2
    win = SplineWindow()
    t_e, v, d1, d2 = smooth_and_differentiate(win, T, y)
    f = fit_window(T, y, win.smoothing)
    h = 1e-4
    assert v == pytest.approx(f(t_e), rel=1e-9)
    assert d2 == pytest.approx(f(t_e, 2), rel=1e-9)
    assert d1 == pytest.approx((f(t_e + h) - f(t_e - h)) / (2 * h), rel=1e-6)
    assert d2 == pytest.approx((f(t_e + h) - 2 * f(t_e) + f(t_e - h)) / h**2, rel=1e-6)


@pytest.mark.parametrize("delay", [None, 0, 10, 49])
def test_group_delay_contract(delay):
    win = SplineWindow(eval_delay=delay)
    filt = SplineFilter(win)
    outs = []
    for k in range(120):
        out = filt.push(k / FS, np.zeros(2))
        if out is not None:
            outs.append((k / FS, out[0]))
    assert len(outs) == 120 - 49
    lag = win.delay / FS
    for t_in, t_out in outs:
        assert t_in - t_out == pytest.approx(lag, abs=1e-12)


def test_window_not_full_and_duplicates():
    win = SplineWindow()
    with pytest.raises(ValueError, match="not full"):
        smooth_and_differentiate(win, T[:10], np.zeros(10))
    t = T.copy()
    t[5] = t[4]
    with pytest.raises(ValueError, match="duplicate"):
        smooth_and_differentiate(win, t, np.zeros(50))
    filt = SplineFilter(win)
    assert filt.push(0.0, 1.0) is None
    with pytest.raises(ValueError):
        filt.push(0.0, 1.0)


@pytest.mark.parametrize("kw", [dict(window_size=3), dict(smoothing=-1.0), dict(eval_delay=50)])
def test_window_validation(kw):
    with pytest.raises(ValueError):
        SplineWindow(**kw)
