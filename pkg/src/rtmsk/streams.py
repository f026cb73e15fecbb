"""Sensor streams: session files, playback, the insole demultiplexer and step
segmentation.

Session file format (one record per line, whitespace separated, ``#`` starts a
comment)::

    orient  <t> <frame> <w> <x> <y> <z>
    insole  <t> <side> <tick> <force N> <cop_x m> <cop_y m>
    sync    <t> <side> <tick>             # tick <-> pipeline time anchor
    refq    <t> <coordinate> <value>      # reference joint angle
    reftau  <t> <coordinate> <value>      # reference joint torque
    meta    <key> <value>

``t`` is the arrival time on the pipeline clock. Consecutive ``insole`` lines
with the same ``t`` form one burst.
"""
from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

log = logging.getLogger(__name__)

SIDES = ("left", "right")
_SIDE_ALIASES = {"l": "left", "left": "left", "L": "left", "r": "right", "right": "right", "R": "right"}
CHANNELS = ("orient", "insole", "sync", "refq", "reftau", "meta")


class SessionError(ValueError):
    pass


@dataclass(frozen=True)
class OrientationSample:
    t: float
    frame: str
    quat: np.ndarray  # (w, x, y, z), sensor frame in the global inertial frame

    def __post_init__(self):
        if not np.isfinite(self.t):
            raise ValueError("non-finite timestamp")
        if abs(np.linalg.norm(self.quat) - 1.0) > 1e-6:
            raise ValueError(f"{self.frame}: quaternion not unit norm")


@dataclass(frozen=True)
class InsoleRecord:
    side: str
    tick: int
    normal_force: float
    cop_x: float
    cop_y: float


@dataclass(frozen=True)
class InsoleBurst:
    arrival_t: float
    records: tuple


@dataclass(frozen=True)
class InsoleSample:
    t: float
    side: str
    normal_force: float
    cop: np.ndarray


@dataclass(frozen=True)
class SyncEvent:
    anchor_tick: dict   # side -> tick
    anchor_t: dict      # side -> time (s)
    rate: float = 100.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("sync rate must be > 0")

    def time_of(self, side, tick):
        return self.anchor_t[side] + (tick - self.anchor_tick[side]) / self.rate

    @classmethod
    def from_burst(cls, burst: InsoleBurst, rate=100.0):
        """Default anchor: the earliest tick of each side in a burst carrying both."""
        ticks = {}
        for r in burst.records:
            side = _side(r.side)
            ticks[side] = min(ticks.get(side, r.tick), r.tick)
        if set(ticks) != set(SIDES):
            raise ValueError("sync burst must contain both sides")
        return cls(ticks, {s: burst.arrival_t for s in SIDES}, rate)


def _side(side):
    try:
        return _SIDE_ALIASES[side]
    except KeyError:
        raise ValueError(f"unknown insole side {side!r}") from None


class InsoleDemux:
    """Splits multiplexed insole records per side, sorts, dedups and re-stamps.

    Records are processed one at a time and held in a per-side reorder buffer
    until a tick ``lag`` counts newer has been seen, so the output depends only
    on the record sequence and never on where burst boundaries fall. A record
    whose tick is not newer than the last emitted one is logged and dropped.
    """

    def __init__(self, sync: SyncEvent, lag=4):
        self.sync = sync
        self.lag = int(lag)
        self._heap = {s: [] for s in SIDES}
        self._pending = {s: set() for s in SIDES}
        self._newest = {s: None for s in SIDES}
        self._last = {s: None for s in SIDES}
        self.dropped = 0

    def push(self, burst: InsoleBurst):
        out = {s: [] for s in SIDES}
        for r in burst.records:
            side = _side(r.side)
            tick = int(r.tick)
            last = self._last[side]
            if (last is not None and tick <= last) or tick in self._pending[side]:
                self.dropped += 1
                log.debug("dropping stale/duplicate %s tick %d", side, tick)
                continue
            heapq.heappush(self._heap[side], (tick, r))
            self._pending[side].add(tick)
            if self._newest[side] is None or tick > self._newest[side]:
                self._newest[side] = tick
            out[side].extend(self._release(side, self._newest[side] - self.lag))
        return out

    def flush(self):
        return {s: self._release(s, None) for s in SIDES}

    def _release(self, side, upto):
        heap = self._heap[side]
        out = []
        while heap and (upto is None or heap[0][0] <= upto):
            tick, r = heapq.heappop(heap)
            self._pending[side].discard(tick)
            self._last[side] = tick
            out.append(InsoleSample(self.sync.time_of(side, tick), side,
                                    max(float(r.normal_force), 0.0),
                                    np.array([r.cop_x, r.cop_y], dtype=float)))
        return out


def demux_restamp(bursts, sync: SyncEvent, lag=4):
    """Batch form of :class:`InsoleDemux`; returns ``(left, right)`` sample lists."""
    demux = InsoleDemux(sync, lag)
    out = {s: [] for s in SIDES}
    for b in bursts:
        for side, samples in demux.push(b).items():
            out[side].extend(samples)
    for side, samples in demux.flush().items():
        out[side].extend(samples)
    return out["left"], out["right"]


# -- step segmentation -------------------------------------------------------------

def lowpass_causal(x, fs, cutoff=5.0, order=2):
    """Causal Butterworth low-pass, initial state settled on the first sample."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x
    sos = signal.butter(order, cutoff, btype="low", fs=fs, output="sos")
    zi = signal.sosfilt_zi(sos) * x[0]
    y, _ = signal.sosfilt(sos, x, zi=zi)
    return y


def threshold_intervals(t, x, threshold):
    """[t_on, t_off] for runs of ``x >= threshold``; an open run ends at the last sample."""
    intervals = []
    on = None
    for ti, xi in zip(t, x):
        if on is None and xi >= threshold:
            on = ti
        elif on is not None and xi < threshold:
            intervals.append((on, ti))
            on = None
    if on is not None:
        intervals.append((on, t[-1]))
    return intervals


def segment_steps(samples, body_weight, cutoff=5.0, fraction=0.10):
    """Stance intervals from one side's insole force stream."""
    if body_weight <= 0:
        raise ValueError("body_weight must be > 0")
    samples = list(samples)
    if not samples:
        return []
    t = np.array([s.t for s in samples])
    f = np.array([s.normal_force for s in samples])
    fs = 1.0 / np.median(np.diff(t)) if len(t) > 1 else 100.0
    return threshold_intervals(t, lowpass_causal(f, fs, cutoff), fraction * body_weight)


# -- session files -------------------------------------------------------------------

@dataclass
class Session:
    """Parsed session: records in file order as (channel, t, payload) tuples."""

    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def channel(self, name):
        return [r for r in self.records if r[0] == name]

    def syncs(self):
        return [r for r in self.records if r[0] == "sync"]

    def reference(self, channel="refq"):
        """Reference series as (times, {name: values})."""
        series = {}
        for _, t, (name, value) in self.channel(channel):
            series.setdefault(name, []).append((t, value))
        if not series:
            return np.zeros(0), {}
        names = list(series)
        times = np.array([t for t, _ in series[names[0]]])
        return times, {n: np.array([v for _, v in series[n]]) for n in names}


def parse_session(path) -> Session:
    path = Path(path)
    sess = Session()
    last_t = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            ch = parts[0]
            try:
                if ch == "meta":
                    sess.meta[parts[1]] = parts[2]
                    continue
                if ch not in CHANNELS:
                    raise SessionError(f"unknown channel {ch!r}")
                t = float(parts[1])
                if ch == "orient":
                    payload = (parts[2], np.array([float(v) for v in parts[3:7]]))
                    if len(parts) != 7:
                        raise SessionError("orient needs frame and 4 quaternion components")
                    if abs(np.linalg.norm(payload[1]) - 1.0) > 1e-6:
                        raise SessionError("orientation quaternion not unit norm")
                elif ch == "insole":
                    if len(parts) != 7:
                        raise SessionError("insole needs side tick force cop_x cop_y")
                    payload = InsoleRecord(_side(parts[2]), int(parts[3]), float(parts[4]),
                                           float(parts[5]), float(parts[6]))
                elif ch == "sync":
                    payload = (_side(parts[2]), int(parts[3]))
                else:
                    payload = (parts[2], float(parts[3]))
            except SessionError as exc:
                raise SessionError(f"{path}:{lineno}: {exc}") from None
            except (IndexError, ValueError) as exc:
                raise SessionError(f"{path}:{lineno}: malformed {ch} record ({exc})") from None
            if not np.isfinite(t):
                raise SessionError(f"{path}:{lineno}: non-finite time")
            if ch in last_t and t < last_t[ch]:
                raise SessionError(f"{path}:{lineno}: non-monotonic time in channel {ch}")
            last_t[ch] = t
            sess.records.append((ch, t, payload))
    return sess


def write_session(path, records, meta=None):
    """Write ``(channel, t, payload)`` records in the order given."""
    with open(path, "w") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"meta {k} {v}\n")
        for ch, t, payload in records:
            if ch == "orient":
                frame, q = payload
                fh.write(f"orient {t:.6f} {frame} {q[0]:.12f} {q[1]:.12f} {q[2]:.12f} {q[3]:.12f}\n")
            elif ch == "insole":
                r = payload
                fh.write(f"insole {t:.6f} {r.side} {r.tick} {r.normal_force:.6f} "
                         f"{r.cop_x:.6f} {r.cop_y:.6f}\n")
            elif ch == "sync":
                fh.write(f"sync {t:.6f} {payload[0]} {payload[1]}\n")
            else:
                fh.write(f"{ch} {t:.6f} {payload[0]} {float(payload[1])!r}\n")


def _group(records):
    """Fuse same-time orientation lines into frames and insole lines into bursts."""
    out = []
    for ch, t, payload in records:
        prev = out[-1] if out else None
        if ch == "orient":
            sample = OrientationSample(t, payload[0], payload[1])
            if prev and prev[0] == "frame" and prev[1] == t:
                prev[2].append(sample)
            else:
                out.append(("frame", t, [sample]))
        elif ch == "insole":
            if prev and prev[0] == "burst" and prev[1] == t:
                prev[2].append(payload)
            else:
                out.append(("burst", t, [payload]))
        else:
            out.append((ch, t, payload))
    result = []
    for kind, t, payload in out:
        if kind == "frame":
            result.append(("frame", t, {s.frame: s for s in payload}))
        elif kind == "burst":
            result.append(("burst", t, InsoleBurst(t, tuple(payload))))
        else:
            result.append((kind, t, payload))
    return result


def playback(session, mode="logical", clock=None, sleep=time.sleep):
    """Yield ``(kind, t, payload)`` items: ``frame`` (dict frame -> sample),
    ``burst`` (InsoleBurst), ``sync``, ``refq``, ``reftau``.

    Items are released in stamp order (stable, so each channel keeps its
    recorded order). In realtime mode each item is held until the wall clock
    reaches its stamp relative to the session start.
    """
    if mode not in ("logical", "realtime"):
        raise ValueError(f"unknown playback mode {mode!r}")
    if not isinstance(session, Session):
        session = parse_session(session)
    items = _group(session.records)
    items.sort(key=lambda it: it[1])  # stable
    if not items:
        return
    t0 = items[0][1]
    start = time.perf_counter() if clock is None else clock.now()
    for item in items:
        if mode == "realtime":
            while True:
                elapsed = (time.perf_counter() if clock is None else clock.now()) - start
                wait = (item[1] - t0) - elapsed
                if wait <= 0:
                    break
                sleep(min(wait, 0.05))
        yield item
