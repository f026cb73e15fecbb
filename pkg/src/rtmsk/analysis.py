"""Offline comparison utilities: RMSE, gait-cycle normalization, EMG envelopes."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import signal


def read_csv(path):
    """``t`` column plus named channels -> (t, {name: values})."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return np.zeros(0), {h: np.zeros(0) for h in header[1:]}
    return data[:, 0], {h: data[:, i] for i, h in enumerate(header[1:], 1)}


def write_csv(path, t, channels: dict):
    names = list(channels)
    with open(path, "w") as fh:
        fh.write(",".join(["t"] + names) + "\n")
        for k in range(len(t)):
            fh.write(",".join(format(float(v), ".10g") for v in [t[k]] + [channels[n][k] for n in names]) + "\n")


def rmse(t_a, a, t_b, b):
    """Per-channel RMSE of ``b`` resampled (linearly) onto the stamps of ``a``.

    Only stamps of ``a`` inside the span of ``t_b`` are compared.
    """
    t_a = np.asarray(t_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    a = np.asarray(a, dtype=float).reshape(len(t_a), -1)
    b = np.asarray(b, dtype=float).reshape(len(t_b), -1)
    if a.shape[1] != b.shape[1]:
        raise ValueError("channel count mismatch")
    if len(t_b) == 0 or len(t_a) == 0:
        raise ValueError("series do not overlap in time")
    keep = (t_a >= t_b[0]) & (t_a <= t_b[-1])
    if not keep.any():
        raise ValueError("series do not overlap in time")
    out = np.empty(a.shape[1])
    for j in range(a.shape[1]):
        d = a[keep, j] - np.interp(t_a[keep], t_b, b[:, j])
        out[j] = np.sqrt(np.mean(d * d))
    return out


def rmse_csv(path_a, path_b, channels=None):
    """Per-channel RMSE over the channels both files share (or ``channels``)."""
    ta, a = read_csv(path_a)
    tb, b = read_csv(path_b)
    names = [n for n in a if n in b] if channels is None else list(channels)
    missing = [n for n in names if n not in a or n not in b]
    if missing:
        raise KeyError(f"channel(s) not in both files: {', '.join(missing)}")
    if not names:
        raise ValueError("no common channels")
    vals = rmse(ta, np.column_stack([a[n] for n in names]), tb, np.column_stack([b[n] for n in names]))
    return dict(zip(names, vals))


def gait_normalize(t, x, onsets, points=101):
    """Resample each onset-to-onset cycle onto ``points`` phases (0..100%).

    Returns (cycles of shape (n_cycles, points), mean, sd).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    onsets = np.sort(np.asarray(onsets, dtype=float))
    cycles = []
    for start, end in zip(onsets[:-1], onsets[1:]):
        if start < t[0] or end > t[-1]:
            continue
        cycles.append(np.interp(np.linspace(start, end, points), t, x))
    if not cycles:
        raise ValueError("no complete gait cycle")
    cycles = np.array(cycles)
    return cycles, cycles.mean(axis=0), cycles.std(axis=0)


def emg_envelope(raw, fs=1000.0, out_rate=100.0, normalize=True, order=4, notch_q=30.0):
    """Band-pass, notch, rectify and smooth a raw EMG trace, then decimate.

    Zero-phase throughout: this is an offline reference, not a causal stage.
    """
    x = np.asarray(raw, dtype=float)
    if x.size == 0:
        raise ValueError("empty EMG input")
    if fs != 1000.0:
        raise ValueError("EMG envelope expects 1000 Hz input")
    step = int(round(fs / out_rate))
    hp = signal.butter(order, 20.0, "highpass", fs=fs, output="sos")
    lp = signal.butter(order, 450.0, "lowpass", fs=fs, output="sos")
    notch = signal.tf2sos(*signal.iirnotch(50.0, notch_q, fs=fs))
    smooth = signal.butter(order, 5.0, "lowpass", fs=fs, output="sos")
    padlen = min(x.size - 1, 3 * 2 * order * 3)
    y = signal.sosfiltfilt(np.vstack([hp, lp, notch]), x, padlen=padlen)
    env = signal.sosfiltfilt(smooth, np.abs(y), padlen=padlen)
    env = np.maximum(env, 0.0)
    if normalize:
        peak = env.max()
        env = env / peak if peak > 1e-12 else np.zeros_like(env)
    return env[::step]
