"""Critical-path event logs and latency statistics.

Event ids along the estimation path:

    0  IK   joint angles produced
    1  ID   read joint angles from buffer
    3  ID   found wrenches in buffer
    5  ID   immediately before inverse dynamics
    6  ID   joint torques calculated
    7  SO   received synchronized joint angles and torques
    8  SO   immediately before static optimization (worker i)
    9  SO   muscle activations calculated (worker i)

Ids 2 and 4 (extra filtering of IK / wrenches) are never recorded here since
both signals are already spline-filtered upstream.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

EVENT_IDS = (0, 1, 3, 5, 6, 7, 8, 9)
EVENT_NAMES = {
    0: "Joint angles produced",
    1: "Read joint angles from buffer",
    3: "Found wrenches in buffer",
    5: "Immediately before ID",
    6: "Joint torques calculated",
    7: "Received synchronized joint angles and torques",
    8: "Immediately before SO computation",
    9: "Muscle activations calculated",
}
REPORT_PAIRS = ((0, 1), (5, 6), (6, 7), (7, 8), (8, 9))
FULL_CHAIN = EVENT_IDS


class EventOrderError(ValueError):
    pass


class MonotonicClock:
    """Process-wide monotonic clock, seconds since construction."""

    def __init__(self):
        self._t0 = time.perf_counter()

    def now(self):
        return time.perf_counter() - self._t0


class VirtualClock:
    """Manually advanced clock used by logical (deterministic) replay."""

    def __init__(self, t=0.0):
        self.t = float(t)

    def now(self):
        return self.t

    def advance_to(self, t):
        if t < self.t:
            raise ValueError(f"virtual clock cannot run backwards ({t} < {self.t})")
        self.t = float(t)


@dataclass(frozen=True)
class EventLog:
    events: tuple = ()  # ((id, t), ...) with strictly increasing ids

    def __len__(self):
        return len(self.events)

    def ids(self):
        return tuple(e for e, _ in self.events)

    def time_of(self, event_id):
        for e, t in self.events:
            if e == event_id:
                return t
        return None

    def as_dict(self):
        return dict(self.events)


def record_event(log: EventLog, event_id: int, now: float) -> EventLog:
    """Return a new log with ``(event_id, now)`` appended."""
    if event_id not in EVENT_IDS:
        raise EventOrderError(f"unknown event id {event_id}")
    if log.events and event_id <= log.events[-1][0]:
        raise EventOrderError(f"event {event_id} after event {log.events[-1][0]}")
    return EventLog(log.events + ((int(event_id), float(now)),))


def total_latency(log: EventLog):
    t0, t9 = log.time_of(0), log.time_of(9)
    if t0 is None or t9 is None:
        return None
    return t9 - t0


def summarize(logs) -> dict:
    """Mean duration in ms of each reported event pair, plus ``"All"`` (0 -> 9)."""
    logs = list(logs)
    if not logs:
        raise ValueError("no logs to summarize")
    out = {}
    for a, b in REPORT_PAIRS + ((0, 9),):
        durations = []
        for log in logs:
            ta, tb = log.time_of(a), log.time_of(b)
            if ta is not None and tb is not None:
                durations.append(tb - ta)
        if durations:
            key = "All" if (a, b) == (0, 9) else f"{a}-{b}"
            out[key] = 1000.0 * float(np.mean(durations))
    return out


def ecdf_quantile(samples, p, bins=1000):
    """Latency quantile read off a ``bins``-bin histogram over [min, max].

    Returns the lower edge of the first bin whose cumulative count reaches
    ``p * n``; this is within one bin width of the exact order statistic.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("ecdf_quantile needs at least one sample")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return lo
    width = (hi - lo) / bins
    # explicit binning: np.histogram rejects ranges narrower than ``bins`` ulps
    idx = np.minimum(((x - lo) / (hi - lo) * bins).astype(int), bins - 1)
    cum = np.cumsum(np.bincount(idx, minlength=bins))
    k = int(np.searchsorted(cum, p * x.size, side="left"))
    return float(lo + min(k, bins - 1) * width)


def on_time_rate(logs, deadline, n_discarded=0):
    """Fraction of messages whose 0 -> 9 latency is within ``deadline``.

    Logs without a complete 0 -> 9 span and the ``n_discarded`` samples that
    never produced a log count as late.
    """
    if deadline <= 0:
        raise ValueError("deadline must be > 0")
    logs = list(logs)
    n = len(logs) + int(n_discarded)
    if n == 0:
        return 0.0
    on_time = sum(1 for log in logs
                  if (lat := total_latency(log)) is not None and lat <= deadline)
    return on_time / n


@dataclass
class LatencyReport:
    means_ms: dict
    quantile_ms: float
    on_time_rate: float
    deadline_s: float
    n_workers: int
    n_samples: int
    n_discarded: int = 0
    quantiles_ms: dict = field(default_factory=dict)

    ROWS = ("0-1", "5-6", "6-7", "7-8", "8-9", "All", "95% Latency")

    def row_values(self):
        vals = {k: self.means_ms.get(k) for k in self.ROWS[:-1]}
        vals["95% Latency"] = self.quantile_ms
        return vals

    def to_dict(self):
        return {
            "n_workers": self.n_workers,
            "n_samples": self.n_samples,
            "n_discarded": self.n_discarded,
            "deadline_s": self.deadline_s,
            "on_time_rate": self.on_time_rate,
            "rows_ms": self.row_values(),
            "quantiles_ms": self.quantiles_ms,
        }


def build_report(logs, n_workers, deadline=0.5, n_discarded=0, p=0.95, bins=1000) -> LatencyReport:
    logs = list(logs)
    totals = [lat for log in logs if (lat := total_latency(log)) is not None]
    quantiles = {}
    q95 = float("nan")
    if totals:
        for pp in (0.5, 0.9, 0.95, 0.99):
            quantiles[f"p{int(round(pp * 100))}"] = 1000.0 * ecdf_quantile(totals, pp, bins)
        q95 = 1000.0 * ecdf_quantile(totals, p, bins)
    return LatencyReport(
        means_ms=summarize(logs) if logs else {},
        quantile_ms=q95,
        on_time_rate=on_time_rate(logs, deadline, n_discarded),
        deadline_s=deadline,
        n_workers=n_workers,
        n_samples=len(logs),
        n_discarded=n_discarded,
        quantiles_ms=quantiles,
    )


def format_report(reports) -> str:
    """Plain-text table, one column per report (e.g. per worker count)."""
    if isinstance(reports, LatencyReport):
        reports = [reports]
    head = f"{'Events':<14}{'End event':<50}" + "".join(f"{'N = ' + str(r.n_workers):>12}" for r in reports)
    lines = ["Mean latency (ms)", head, "-" * len(head)]
    ends = {"0-1": EVENT_NAMES[1], "5-6": EVENT_NAMES[6], "6-7": EVENT_NAMES[7],
            "7-8": EVENT_NAMES[8], "8-9": EVENT_NAMES[9], "All": "all", "95% Latency": "all"}
    for row in LatencyReport.ROWS:
        cells = []
        for r in reports:
            v = r.row_values()[row]
            cells.append(f"{'-':>12}" if v is None or not np.isfinite(v) else f"{v:>12.3f}")
        lines.append(f"{row:<14}{ends[row]:<50}" + "".join(cells))
    lines.append("-" * len(head))
    lines.append(f"{'on-time rate':<64}" + "".join(f"{r.on_time_rate:>12.4f}" for r in reports))
    lines.append(f"{'samples':<64}" + "".join(f"{r.n_samples:>12d}" for r in reports))
    lines.append(f"{'discarded':<64}" + "".join(f"{r.n_discarded:>12d}" for r in reports))
    return "\n".join(lines) + "\n"


def report_json(reports) -> str:
    if isinstance(reports, LatencyReport):
        reports = [reports]
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


# -- event log persistence ------------------------------------------------------

def write_event_csv(path, rows):
    """``rows``: iterable of (msg index, t, worker, status, EventLog)."""
    with open(path, "w") as fh:
        fh.write("index,t,worker,status," + ",".join(f"e{e}" for e in EVENT_IDS) + "\n")
        for idx, t, worker, status, log in rows:
            d = log.as_dict()
            cells = [repr(float(d[e])) if e in d else "" for e in EVENT_IDS]
            fh.write(f"{idx},{t!r},{worker},{status}," + ",".join(cells) + "\n")


def read_event_csv(path):
    """Inverse of :func:`write_event_csv`; returns a list of dicts with an ``events`` log."""
    out = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        ev_cols = [(i, int(h[1:])) for i, h in enumerate(header) if h.startswith("e")]
        for line in fh:
            cells = line.rstrip("\n").split(",")
            if len(cells) < len(header):
                continue
            events = tuple((e, float(cells[i])) for i, e in ev_cols if cells[i] != "")
            out.append({"index": int(cells[0]), "t": float(cells[1]), "worker": int(cells[2]),
                        "status": cells[3], "events": EventLog(events)})
    return out
