"""Static optimization: squared-activation QP, modulo dispatch and the output sequencer.

Per sample the activations solve

    min |a|^2 + w |r|^2   s.t.  A a + r = tau,  0 <= a <= 1,   A = R diag(f_max)

Eliminating the residual torque ``r`` leaves a box-constrained QP with
Hessian ``2 (I + w A^T A)``, solved here by a primal active-set method.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .telemetry import EventLog, record_event, total_latency

log = logging.getLogger(__name__)

KKT_TOL = 1e-8
MAX_ITER = 500


@dataclass(frozen=True)
class SOProblem:
    R: np.ndarray            # (coordinates, muscles) moment arms, m
    f_max: np.ndarray        # (muscles,) N
    tau_target: np.ndarray   # (coordinates,) N m
    residual_weight: float = 1e3

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "f_max", np.asarray(self.f_max, dtype=float))
        object.__setattr__(self, "tau_target", np.asarray(self.tau_target, dtype=float))
        if R.shape != (len(self.tau_target), len(self.f_max)):
            raise ValueError(f"R has shape {R.shape}, expected "
                             f"({len(self.tau_target)}, {len(self.f_max)})")
        if not self.residual_weight > 0:
            raise ValueError("residual_weight must be > 0")
        if np.any(self.f_max <= 0):
            raise ValueError("f_max must be > 0")

    @property
    def A(self):
        return self.R * self.f_max[None, :]

    def gradient(self, a):
        """Gradient of the reduced objective |a|^2 + w |tau - A a|^2."""
        A = self.A
        return 2.0 * a - 2.0 * self.residual_weight * A.T @ (self.tau_target - A @ a)

    def residuals(self, a):
        return self.tau_target - self.A @ a


@dataclass(frozen=True)
class ActivationResult:
    t: float
    a: np.ndarray
    residuals: np.ndarray
    converged: bool
    worker: int = 0
    events: EventLog = field(default_factory=EventLog)
    iterations: int = 0
    kkt: float = 0.0
    index: int = -1


def kkt_residual(p: SOProblem, a, scaled=True):
    """Projected-gradient norm (inf) of the box QP.

    With ``scaled`` the gradient is divided by ``1 + w |A|^2`` (the Hessian's
    largest eigenvalue bound) so the tolerance does not depend on the units
    of ``tau``.
    """
    g = p.gradient(a)
    at_lo = a <= 0.0
    at_hi = a >= 1.0
    pg = np.where(at_lo, np.minimum(g, 0.0), np.where(at_hi, np.maximum(g, 0.0), g))
    res = float(np.max(np.abs(pg))) if pg.size else 0.0
    if scaled:
        res /= 1.0 + p.residual_weight * float(np.sum(p.A ** 2))
    return res


def _active_set(p: SOProblem, warm, max_iter=MAX_ITER, tol=KKT_TOL):
    n = len(p.f_max)
    A = p.A
    w = p.residual_weight
    H = 2.0 * (np.eye(n) + w * A.T @ A)
    c = -2.0 * w * A.T @ p.tau_target
    a = np.clip(np.asarray(warm, dtype=float), 0.0, 1.0)
    lo = a <= 0.0
    hi = a >= 1.0
    a[lo], a[hi] = 0.0, 1.0
    it = 0
    while it < max_iter:
        it += 1
        F = ~(lo | hi)
        a_new = a.copy()
        if F.any():
            rhs = -(c[F] + H[np.ix_(F, ~F)] @ a[~F])
            a_new[F] = cho_solve(cho_factor(H[np.ix_(F, F)]), rhs)
        d = a_new - a
        # ratio test against the bounds of the free variables
        alpha, block = 1.0, None
        for i in np.flatnonzero(F):
            if d[i] < 0 and a_new[i] < 0.0:
                s = -a[i] / d[i]
            elif d[i] > 0 and a_new[i] > 1.0:
                s = (1.0 - a[i]) / d[i]
            else:
                continue
            if s < alpha:
                alpha, block = s, i
        if block is not None:
            a = a + alpha * d
            if d[block] < 0:
                a[block], lo[block] = 0.0, True
            else:
                a[block], hi[block] = 1.0, True
            continue
        a = a_new
        g = H @ a + c
        # multipliers of the bound constraints: release the worst violator
        viol = np.where(lo, -g, 0.0) + np.where(hi, g, 0.0)
        k = int(np.argmax(viol)) if n else 0
        if n == 0 or viol[k] <= 0.0:
            return a, it, True
        lo[k] = hi[k] = False
    return a, it, False


def solve_activation(p: SOProblem, warm=None, t=0.0, worker=0, events=None, clock=None,
                     max_iter=MAX_ITER, tol=KKT_TOL) -> ActivationResult:
    """Solve one SO problem; stamps events 8 and 9 on ``events`` when ``clock`` is given."""
    events = EventLog() if events is None else events
    if clock is not None:
        events = record_event(events, 8, clock.now())
    n = len(p.f_max)
    warm = np.full(n, 0.1) if warm is None else np.asarray(warm, dtype=float)
    if warm.shape != (n,):
        raise ValueError(f"warm start has shape {warm.shape}, expected ({n},)")
    a, it, ok = _active_set(p, warm, max_iter, tol)
    a = a + 0.0  # no negative zeros in outputs
    kkt = kkt_residual(p, a)
    converged = ok and kkt < tol
    if clock is not None:
        events = record_event(events, 9, clock.now())
    if not converged:
        log.debug("SO not converged at t=%.3f (iterations %d, kkt %.3g)", t, it, kkt)
    return ActivationResult(t, a, p.residuals(a), converged, worker, events, it, kkt)


def dispatch(msg_index: int, n_workers: int) -> int:
    """Worker for message ``msg_index``: round robin by modulo."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    return int(msg_index) % int(n_workers)


class WarmStarts:
    """Per-worker warm starts: each worker reuses its own previous solution."""

    def __init__(self, n_workers, n_muscles, initial=0.1):
        self.values = [np.full(n_muscles, float(initial)) for _ in range(n_workers)]

    def get(self, worker):
        return self.values[worker]

    def update(self, worker, result: ActivationResult):
        if result.converged:
            self.values[worker] = result.a


class Sequencer:
    """Fan-in: re-orders worker results by dispatch index and enforces the deadline.

    Every dispatched message is registered with its event-0 time. A result is
    discarded if it is not converged, if its 0 -> 9 age exceeds ``deadline``,
    or if a later message was already emitted. A missing head-of-line result
    is skipped once its age is certain to exceed the deadline, so skipping
    never drops an on-time result.
    """

    def __init__(self, deadline=0.5):
        if not deadline > 0:
            raise ValueError("deadline must be > 0")
        self.deadline = float(deadline)
        self._born = {}        # index -> event-0 time
        self._pending = {}     # index -> result
        self._registered = []  # sorted indices not yet emitted or skipped
        self.next_index = 0
        self.last_t = -np.inf
        self.emitted = []
        self.discarded = []    # (result, reason)
        self.received = 0

    def register(self, index, t0):
        self._born[index] = float(t0)
        bisect.insort(self._registered, index)

    def push(self, index, result: ActivationResult, now=None):
        """Accept a result; returns the list of results emitted as a consequence."""
        self.received += 1
        reason = None
        age = total_latency(result.events)
        if not result.converged:
            reason = "not converged"
        elif age is not None and age > self.deadline:
            reason = "deadline"
        elif index < self.next_index or result.t <= self.last_t:
            reason = "late"
        if reason is not None:
            self._discard(index, result, reason)
            return self.poll(now)
        self._pending[index] = result
        return self.poll(now)

    def _discard(self, index, result, reason):
        self.discarded.append((index, result, reason))
        self._pending.pop(index, None)
        self._forget(index)

    def _forget(self, index):
        i = bisect.bisect_left(self._registered, index)
        if i < len(self._registered) and self._registered[i] == index:
            del self._registered[i]

    def poll(self, now=None):
        """Emit whatever is now in order; skip stale gaps when ``now`` is known."""
        out = []
        while self._registered:
            head = self._registered[0]
            if head in self._pending:
                res = self._pending.pop(head)
                del self._registered[0]
                self.next_index = head + 1
                self.last_t = res.t
                self.emitted.append((head, res))
                out.append((head, res))
                continue
            if now is not None and now > self._born[head] + self.deadline:
                # the missing result can no longer arrive on time
                del self._registered[0]
                self.next_index = head + 1
                continue
            break
        return out

    def flush(self):
        """End of stream: emit everything left in index order."""
        out = []
        for index in sorted(self._pending):
            res = self._pending.pop(index)
            if index < self.next_index or res.t <= self.last_t:
                self.discarded.append((index, res, "late"))
                continue
            self.next_index = index + 1
            self.last_t = res.t
            self.emitted.append((index, res))
            out.append((index, res))
        self._registered.clear()
        return out

    @property
    def n_discarded(self):
        return len(self.discarded)

    @property
    def n_emitted(self):
        return len(self.emitted)


class LogicalPool:
    """N workers on a virtual clock: each solve costs ``base + per_iter * iterations``
    (plus ``extra(index)``) seconds of worker time; a worker serves its queue FIFO."""

    def __init__(self, n_workers, n_muscles, base_cost=0.004, per_iter_cost=0.0005, extra=None):
        if n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        self.n_workers = int(n_workers)
        self.warm = WarmStarts(n_workers, n_muscles)
        self.free_at = [-np.inf] * self.n_workers
        self.base_cost = float(base_cost)
        self.per_iter_cost = float(per_iter_cost)
        self.extra = extra
        self.assignments = []

    def submit(self, index, problem: SOProblem, t, events: EventLog, now) -> ActivationResult:
        w = dispatch(index, self.n_workers)
        self.assignments.append((index, w))
        res = solve_activation(problem, self.warm.get(w), t, w)
        self.warm.update(w, res)
        t8 = max(float(now), self.free_at[w])
        cost = self.base_cost + self.per_iter_cost * res.iterations
        if self.extra is not None:
            cost += float(self.extra(index))
        t9 = t8 + cost
        self.free_at[w] = t9
        events = record_event(record_event(events, 8, t8), 9, t9)
        return ActivationResult(res.t, res.a, res.residuals, res.converged, w, events,
                                res.iterations, res.kkt, index)


@dataclass
class Replay:
    assignments: list
    results: list
    sequencer: Sequencer


def replay_logical(messages, n_workers, deadline=0.5, **pool_kw) -> Replay:
    """Replay ``(events, t, problem)`` messages through dispatch, a logical pool and
    the sequencer. ``events`` must end with event 7 (receipt at the dispatcher)."""
    import heapq

    messages = list(messages)
    if not messages:
        return Replay([], [], Sequencer(deadline))
    n_muscles = len(messages[0][2].f_max)
    pool = LogicalPool(n_workers, n_muscles, **pool_kw)
    seq = Sequencer(deadline)
    done = []
    results = []

    def drain(upto):
        while done and done[0][0] <= upto:
            t9, i, res = heapq.heappop(done)
            seq.push(i, res, now=t9)
        seq.poll(upto)

    for i, (events, t, problem) in enumerate(messages):
        now = events.time_of(7)
        drain(now)
        seq.register(i, events.time_of(0))
        res = pool.submit(i, problem, t, events, now)
        results.append((i, res))
        heapq.heappush(done, (res.events.time_of(9), i, res))
    drain(np.inf)
    seq.flush()
    return Replay(pool.assignments, results, seq)
