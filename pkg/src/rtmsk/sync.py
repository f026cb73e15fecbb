"""Temporal alignment of joint states and insole-derived forces."""
from __future__ import annotations

import bisect
import heapq
import itertools
import logging
import time
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

MATCH, DEFER, DROP = "match", "defer", "drop"


class TimedBuffer:
    """Time-ordered ``(t, payload)`` store with bounded size and age."""

    def __init__(self, capacity=512, max_age=5.0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.max_age = float(max_age)
        self._t = []
        self._items = []

    def __len__(self):
        return len(self._t)

    @property
    def newest(self):
        return self._t[-1] if self._t else None

    @property
    def times(self):
        return tuple(self._t)

    def push(self, t, payload):
        i = bisect.bisect_right(self._t, t)
        self._t.insert(i, float(t))
        self._items.insert(i, payload)
        newest = self._t[-1]
        n_old = bisect.bisect_left(self._t, newest - self.max_age)
        n_over = len(self._t) - self.capacity
        drop = max(n_old, n_over, 0)
        if drop:
            del self._t[:drop]
            del self._items[:drop]

    def nearest(self, t):
        """``(t_i, payload)`` with minimal ``|t_i - t|`` (earlier wins ties), or None."""
        if not self._t:
            return None
        i = bisect.bisect_left(self._t, t)
        cands = [k for k in (i - 1, i) if 0 <= k < len(self._t)]
        k = min(cands, key=lambda k: (abs(self._t[k] - t), self._t[k]))
        # distinct stamps can round to the same distance; keep the earliest
        while k > 0 and abs(self._t[k - 1] - t) == abs(self._t[k] - t):
            k -= 1
        return self._t[k], self._items[k]

    def discard_before(self, t):
        """Drop entries older than ``t`` (already consumed time range)."""
        n = bisect.bisect_left(self._t, t)
        del self._t[:n]
        del self._items[:n]


@dataclass(frozen=True)
class MatchResult:
    status: str          # match | defer | drop
    left: object = None  # (t, payload) or None
    right: object = None

    @property
    def matched(self):
        return self.status == MATCH


def _match_side(t_js, buf: TimedBuffer, tol, ended):
    cand = buf.nearest(t_js)
    if cand is not None and abs(cand[0] - t_js) <= tol:
        # a closer sample can still arrive only while the buffer has not reached t_js
        if ended or buf.newest >= t_js:
            return MATCH, cand
    if ended:
        return DROP, None
    if buf.newest is None or buf.newest < t_js + tol:
        return DEFER, None
    return DROP, None


def match(t_js, left: TimedBuffer, right: TimedBuffer, tol=0.015, ended=False) -> MatchResult:
    """Pair a joint state stamp with the nearest sample of each side.

    Defers while either side could still deliver a closer sample, drops when
    newer data exists but nothing lies within ``tol`` (or the streams ended).
    """
    sl, cl = _match_side(t_js, left, tol, ended)
    sr, cr = _match_side(t_js, right, tol, ended)
    if DROP in (sl, sr):
        log.info("dropping joint state at t=%.3f: no force sample within %.3f s", t_js, tol)
        return MatchResult(DROP)
    if DEFER in (sl, sr):
        return MatchResult(DEFER)
    return MatchResult(MATCH, cl, cr)


def release_time(t, d):
    """``t + d`` rounded up where needed so that ``release - t >= d`` holds in floats."""
    r = t + d
    while r - t < d:
        r = np.nextafter(r, np.inf)
    return float(r)


def delay_logical(stream, d):
    """``(arrival_t, msg)`` -> ``(arrival_t + d, msg)``, order preserved."""
    if d < 0:
        raise ValueError("delay must be >= 0")
    for t, msg in stream:
        yield release_time(t, d), msg


def delay_realtime(stream, d, clock=None, sleep=time.sleep):
    """Release each ``(arrival_t, msg)`` no earlier than ``arrival_t + d`` on ``clock``."""
    if d < 0:
        raise ValueError("delay must be >= 0")
    now = time.perf_counter if clock is None else clock.now
    for t, msg in stream:
        while (wait := t + d - now()) > 0:
            sleep(wait)
        yield now(), msg


class DelayLine:
    """Hold messages for ``d`` seconds; ``due(now)`` releases them in arrival order."""

    def __init__(self, d):
        if d < 0:
            raise ValueError("delay must be >= 0")
        self.d = float(d)
        self._heap = []
        self._seq = itertools.count()

    def __len__(self):
        return len(self._heap)

    def push(self, arrival_t, msg):
        heapq.heappush(self._heap, (release_time(arrival_t, self.d), next(self._seq), msg))

    def next_release(self):
        return self._heap[0][0] if self._heap else None

    def due(self, now):
        out = []
        while self._heap and self._heap[0][0] <= now:
            release, _, msg = heapq.heappop(self._heap)
            out.append((release, msg))
        return out
