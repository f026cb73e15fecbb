"""Pipeline assembly: IK -> delay -> force matching -> ID -> parallel SO -> sequencer.

Two runners share the same stage objects:

* logical: a discrete-event simulation on a virtual clock. Stage compute
  costs are virtual (configurable constants), so event logs and all outputs
  are bit-identical across runs.
* realtime: one thread per stage plus one per SO worker, stamped by the
  monotonic process clock, with the session played back at wall speed.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .calib import CalibrationError, CalibrationSet, calibrate
from .dynamics import build_wrench, inverse_dynamics, transform_cop
from .filter import SplineFilter, SplineWindow
from .ik import IKStage
from .model import ChainModel, ModelError, Transform, demo_model_path, forward_kinematics, load_model, moment_arms
from .so import LogicalPool, SOProblem, Sequencer, WarmStarts, dispatch, solve_activation
from .streams import (
    SIDES, InsoleDemux, InsoleSample, Session, SessionError, SyncEvent, parse_session, playback,
    segment_steps,
)
from .sync import DEFER, DROP, MATCH, DelayLine, TimedBuffer, match, release_time
from .telemetry import EventLog, MonotonicClock, VirtualClock, build_report, format_report, record_event, report_json, write_event_csv

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


# -- configuration -------------------------------------------------------------------

@dataclass
class PipelineConfig:
    model: Path
    session: Path
    output_dir: Path
    calibration: Path | None = None
    mode: str = "logical"
    body_weight: float | None = None
    sync_delay_s: float = 0.26
    sync_tol_s: float = 0.015
    buffer_capacity: int = 512
    buffer_max_age_s: float = 5.0
    so_workers: int = 12
    so_deadline_s: float = 0.5
    so_residual_weight: float = 1e3
    ik_filter: SplineWindow = field(default_factory=SplineWindow)
    insole_filter: SplineWindow = field(default_factory=SplineWindow)
    insole_rate: float = 100.0
    insole_lag: int = 4
    force_threshold: float = 10.0
    insole_mount: dict = field(default_factory=dict)   # side -> Transform (insole in foot)
    feet: dict = field(default_factory=lambda: {"left": "calcn_l", "right": "calcn_r"})
    calibration_frames: int = 10
    heading_mode: str = "global"
    heading_reference: str | None = None
    ik_weights: dict | None = None
    step_cutoff_hz: float = 5.0
    # virtual stage costs for logical mode, s
    cost_id_s: float = 0.002
    cost_so_s: float = 0.004
    cost_so_per_iter_s: float = 0.0005
    so_extra_delay: object = None  # optional callable(index) -> s, for fault injection

    def validate(self):
        if not Path(self.model).is_file():
            raise ConfigError(f"model file not found: {self.model}")
        if not Path(self.session).is_file():
            raise ConfigError(f"session file not found: {self.session}")
        if self.calibration is not None and not Path(self.calibration).is_file():
            raise ConfigError(f"calibration file not found: {self.calibration}")
        if self.mode not in ("logical", "realtime"):
            raise ConfigError(f"mode must be logical or realtime, got {self.mode!r}")
        if int(self.so_workers) < 1:
            raise ConfigError("so.workers must be >= 1")
        for name in ("sync_delay_s", "sync_tol_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.so_deadline_s > 0:
            raise ConfigError("so.deadline_s must be > 0")
        if self.calibration_frames < 1:
            raise ConfigError("calibration_frames must be >= 1")
        return self


def _window(d, where):
    try:
        return SplineWindow(int(d.get("window", 50)), float(d.get("smoothing", 1e-6)),
                            None if d.get("delay") is None else int(d["delay"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _mount(d):
    rotation = d.get("rotation", [1.0, 0.0, 0.0, 0.0])
    return Transform.from_quat(np.asarray(rotation, float), np.asarray(d.get("translation", [0, 0, 0]), float))


def config_from_dict(doc: dict, base_dir=Path(".")) -> PipelineConfig:
    base_dir = Path(base_dir)

    def path(key, required=True):
        v = doc.get(key)
        if v is None:
            if required:
                raise ConfigError(f"missing config key {key!r}")
            return None
        if key == "model" and v == "demo":
            return demo_model_path()
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    known = {"model", "session", "output_dir", "calibration", "mode", "body_weight", "sync", "so",
             "filter", "insole", "calibration_frames", "heading", "ik", "steps", "virtual_cost"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    sync = doc.get("sync", {})
    so = doc.get("so", {})
    filt = doc.get("filter", {})
    ins = doc.get("insole", {})
    heading = doc.get("heading", {})
    cost = doc.get("virtual_cost", {})
    try:
        cfg = PipelineConfig(
            model=path("model"),
            session=path("session"),
            output_dir=path("output_dir"),
            calibration=path("calibration", required=False),
            mode=doc.get("mode", "logical"),
            body_weight=None if doc.get("body_weight") is None else float(doc["body_weight"]),
            sync_delay_s=float(sync.get("delay_s", 0.26)),
            sync_tol_s=float(sync.get("tol_s", 0.015)),
            buffer_capacity=int(sync.get("capacity", 512)),
            buffer_max_age_s=float(sync.get("max_age_s", 5.0)),
            so_workers=int(so.get("workers", 12)),
            so_deadline_s=float(so.get("deadline_s", 0.5)),
            so_residual_weight=float(so.get("residual_weight", 1e3)),
            ik_filter=_window(filt.get("ik", {}), "filter.ik"),
            insole_filter=_window(filt.get("insole", {}), "filter.insole"),
            insole_rate=float(ins.get("rate", 100.0)),
            insole_lag=int(ins.get("lag", 4)),
            force_threshold=float(ins.get("threshold_n", 10.0)),
            insole_mount={s: _mount(m) for s, m in ins.get("mount", {}).items()},
            feet=dict(ins.get("feet", {"left": "calcn_l", "right": "calcn_r"})),
            calibration_frames=int(doc.get("calibration_frames", 10)),
            heading_mode=heading.get("mode", "global"),
            heading_reference=heading.get("reference"),
            ik_weights=doc.get("ik", {}).get("weights"),
            step_cutoff_hz=float(doc.get("steps", {}).get("cutoff_hz", 5.0)),
            cost_id_s=float(cost.get("id_s", 0.002)),
            cost_so_s=float(cost.get("so_s", 0.004)),
            cost_so_per_iter_s=float(cost.get("so_per_iter_s", 0.0005)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from None
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed config ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be an object")
    return config_from_dict(doc, path.parent)


# -- stages -----------------------------------------------------------------------------

class InsoleStage:
    """Demux, re-stamp and spline-filter insole data into per-side buffers."""

    def __init__(self, cfg: PipelineConfig, sync: SyncEvent | None):
        self.cfg = cfg
        self.sync = sync
        self.demux = None if sync is None else InsoleDemux(sync, cfg.insole_lag)
        self.filters = {s: SplineFilter(cfg.insole_filter) for s in SIDES}
        self.buffers = {s: TimedBuffer(cfg.buffer_capacity, cfg.buffer_max_age_s) for s in SIDES}
        self.raw = {s: [] for s in SIDES}
        self.skipped_bursts = 0

    def _accept(self, samples):
        n = 0
        for side, items in samples.items():
            for smp in items:
                self.raw[side].append(smp)
                out = self.filters[side].push(smp.t, [smp.normal_force, *smp.cop])
                if out is None:
                    continue
                t_eval, v, _, _ = out
                filtered = InsoleSample(t_eval, side, float(max(v[0], 0.0)), np.array(v[1:3]))
                self.buffers[side].push(t_eval, filtered)
                n += 1
        return n

    def push(self, burst):
        if self.demux is None:
            try:
                self.sync = SyncEvent.from_burst(burst, self.cfg.insole_rate)
            except ValueError:
                self.skipped_bursts += 1
                return 0
            self.demux = InsoleDemux(self.sync, self.cfg.insole_lag)
        return self._accept(self.demux.push(burst))

    def flush(self):
        return 0 if self.demux is None else self._accept(self.demux.flush())

    @property
    def dropped(self):
        return 0 if self.demux is None else self.demux.dropped


class DynamicsStage:
    """Matches delayed joint states with force samples and runs inverse dynamics."""

    def __init__(self, model: ChainModel, cfg: PipelineConfig, insole: InsoleStage):
        self.model = model
        self.cfg = cfg
        self.insole = insole
        self.pending = deque()
        self.dropped = []
        self.torques = []
        self.actuated = actuated_coordinates(model)

    def release(self, js):
        self.pending.append(js)

    def step(self, clock, ended=False):
        """Process the head joint state; returns ('match', ts) | ('defer',) | ('drop', js) | None."""
        if not self.pending:
            return None
        js = self.pending[0]
        if js.events.time_of(1) is None:
            js = replace(js, events=record_event(js.events, 1, clock.now()))
            self.pending[0] = js
        m = match(js.t, self.insole.buffers["left"], self.insole.buffers["right"], self.cfg.sync_tol_s, ended)
        if m.status == DEFER:
            return (DEFER,)
        self.pending.popleft()
        if m.status == DROP:
            self.dropped.append(js)
            return (DROP, js)
        js = replace(js, events=record_event(js.events, 3, clock.now()))
        fk = forward_kinematics(self.model, js.q)
        wrenches = []
        for side, (_, sample) in (("left", m.left), ("right", m.right)):
            body = self.cfg.feet[side]
            p = transform_cop(sample, fk[body], self.cfg.insole_mount.get(side))
            wrenches.append(build_wrench(sample, p, body, self.cfg.force_threshold))
        for side in SIDES:
            self.insole.buffers[side].discard_before(js.t - self.cfg.sync_tol_s)
        ts = inverse_dynamics(self.model, js, wrenches, clock=clock)
        self.torques.append(ts)
        return (MATCH, ts)

    def so_problem(self, ts):
        R = moment_arms(self.model, ts.joint_state.q)[self.actuated]
        return SOProblem(R, self.model.f_max(), ts.tau[self.actuated], self.cfg.so_residual_weight)


def actuated_coordinates(model: ChainModel):
    """Indices of coordinates spanned by at least one muscle."""
    spanned = set()
    for mu in model.muscles:
        spanned.update(mu.moment_arms)
        if mu.length is not None:
            spanned.update(mu.length.variables)
    return np.array([j for j, c in enumerate(model.coordinate_names) if c in spanned], dtype=int)


@dataclass
class RunResult:
    config: PipelineConfig
    model: ChainModel
    calibration: CalibrationSet
    joint_states: list
    torques: list
    activations: list        # emitted (index, ActivationResult)
    results: list            # every SO result (index, ActivationResult)
    sequencer: Sequencer
    assignments: list        # (index, worker)
    match_drops: list
    ik_iterations: list
    ik_unconverged: int
    steps: dict
    insole_dropped: int
    wall_s: float = 0.0

    @property
    def report(self):
        logs = [r.events for _, r in self.activations]
        return build_report(logs, self.config.so_workers, self.config.so_deadline_s,
                            self.sequencer.n_discarded)


# -- calibration and session prep -----------------------------------------------------

def _orient_frames(session: Session):
    return [(t, p) for kind, t, p in playback(session) if kind == "frame"]


def _session_sync(session: Session, rate):
    ticks, times = {}, {}
    for _, t, (side, tick) in session.syncs():
        ticks.setdefault(side, tick)
        times.setdefault(side, t)
    if set(ticks) == set(SIDES):
        return SyncEvent(ticks, times, rate)
    return None


def prepare(cfg: PipelineConfig):
    try:
        model = load_model(cfg.model)
    except ModelError as exc:
        raise ConfigError(f"model: {exc}") from None
    try:
        session = parse_session(cfg.session)
    except SessionError as exc:
        raise ConfigError(f"session: {exc}") from None
    for side, body in cfg.feet.items():
        if body not in model.segment_names:
            raise ConfigError(f"insole.feet.{side}: unknown segment {body!r}")
    if cfg.calibration is not None:
        try:
            calib = CalibrationSet.load(cfg.calibration)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"calibration: {exc}") from None
    else:
        frames = _orient_frames(session)[:cfg.calibration_frames]
        if not frames:
            raise ConfigError("session has no orientation frames to calibrate from")
        per_sensor = {}
        for _, obs in frames:
            for f, s in obs.items():
                per_sensor.setdefault(f, []).append(s)
        try:
            calib = calibrate(model, model.default_q(), per_sensor, cfg.heading_reference, cfg.heading_mode)
        except (CalibrationError, KeyError) as exc:
            raise ConfigError(f"calibration: {exc}") from None
    if cfg.body_weight is None:
        bw = session.meta.get("body_weight")
        cfg.body_weight = float(bw) if bw is not None else model.total_mass * float(-model.gravity[2])
    return model, session, calib


# -- logical runner -------------------------------------------------------------------

def run_logical(cfg: PipelineConfig) -> RunResult:
    start = time.perf_counter()
    model, session, calib = prepare(cfg)
    clock = VirtualClock(0.0)
    ik = IKStage(model, calib, cfg.ik_filter, cfg.ik_weights, clock)
    insole = InsoleStage(cfg, _session_sync(session, cfg.insole_rate))
    dyn = DynamicsStage(model, cfg, insole)
    seq = Sequencer(cfg.so_deadline_s)
    pool = LogicalPool(cfg.so_workers, len(model.muscles), cfg.cost_so_s, cfg.cost_so_per_iter_s,
                       cfg.so_extra_delay)
    heap = []
    counter = itertools.count()
    joint_states, results = [], []
    id_busy = [0.0]
    msg_index = itertools.count()

    def schedule(t, kind, payload=None):
        heapq.heappush(heap, (t, next(counter), kind, payload))

    for kind, t, payload in playback(session):
        if kind in ("frame", "burst"):
            schedule(t, kind, payload)
    end_of_input = max((h[0] for h in heap), default=0.0)
    schedule(end_of_input, "input_end")
    ended = False

    def run_dynamics():
        # single-server ID stage
        while dyn.pending and clock.now() >= id_busy[0]:
            out = dyn.step(clock, ended)
            if out is None or out[0] == DEFER:
                return
            if out[0] == DROP:
                continue
            ts = out[1]
            # ID compute cost: event 6 lands cost_id_s after event 5
            t6 = ts.events.time_of(5) + cfg.cost_id_s
            ts = replace(ts, events=EventLog(ts.events.events[:-1] + ((6, t6),)))
            dyn.torques[-1] = ts
            id_busy[0] = t6
            schedule(t6, "to_so", ts)
            schedule(t6, "id_free")
            return

    def submit(ts):
        i = next(msg_index)
        events = record_event(ts.events, 7, clock.now())
        seq.register(i, events.time_of(0))
        res = pool.submit(i, dyn.so_problem(ts), ts.t, events, clock.now())
        results.append((i, res))
        t9 = res.events.time_of(9)
        schedule(t9, "so_done", (i, res))

    while heap:
        t, _, kind, payload = heapq.heappop(heap)
        clock.advance_to(max(t, clock.now()))
        if kind == "frame":
            js = ik.push(t, payload)
            if js is not None:
                joint_states.append(js)
                schedule(release_time(js.events.time_of(0), cfg.sync_delay_s), "release", js)
        elif kind == "burst":
            if insole.push(payload):
                run_dynamics()
        elif kind == "input_end":
            insole.flush()
            ended = True
            run_dynamics()
        elif kind == "release":
            dyn.release(payload)
            run_dynamics()
        elif kind == "id_free":
            run_dynamics()
        elif kind == "to_so":
            submit(payload)
        elif kind == "so_done":
            seq.push(payload[0], payload[1], now=clock.now())
        seq.poll(clock.now())
        if ended and kind != "input_end":
            run_dynamics()
    seq.flush()
    return RunResult(cfg, model, calib, joint_states, dyn.torques, list(seq.emitted), results, seq,
                     pool.assignments, dyn.dropped, ik.iterations, ik.unconverged,
                     _steps(insole, cfg), insole.dropped, time.perf_counter() - start)


def _steps(insole, cfg):
    return {s: segment_steps(insole.raw[s], cfg.body_weight, cfg.step_cutoff_hz) for s in SIDES}


# -- realtime runner ------------------------------------------------------------------

_STOP = object()


def run_realtime(cfg: PipelineConfig) -> RunResult:
    start = time.perf_counter()
    model, session, calib = prepare(cfg)
    clock = MonotonicClock()
    ik = IKStage(model, calib, cfg.ik_filter, cfg.ik_weights, clock)
    insole = InsoleStage(cfg, _session_sync(session, cfg.insole_rate))
    dyn = DynamicsStage(model, cfg, insole)
    seq = Sequencer(cfg.so_deadline_s)
    warm = WarmStarts(cfg.so_workers, len(model.muscles))
    joint_states, results, assignments = [], [], []
    errors = []

    ik_q, ins_q, res_q = queue.Queue(), queue.Queue(), queue.Queue()
    work_q = [queue.Queue() for _ in range(cfg.so_workers)]
    cond = threading.Condition()
    delay = DelayLine(cfg.sync_delay_s)
    state = {"ik_done": False, "ins_done": False}

    def guarded(fn):
        def run():
            try:
                fn()
            except Exception as exc:  # surfaced by the runner as a stage failure
                log.exception("stage %s failed", fn.__name__)
                errors.append(exc)
                with cond:
                    state["ik_done"] = state["ins_done"] = True
                    cond.notify_all()
        return run

    def player():
        for kind, t, payload in playback(session, "realtime", clock):
            if kind == "frame":
                ik_q.put((t, payload))
            elif kind == "burst":
                ins_q.put(payload)
        ik_q.put(_STOP)
        ins_q.put(_STOP)

    def ik_worker():
        while (item := ik_q.get()) is not _STOP:
            js = ik.push(*item)
            if js is not None:
                joint_states.append(js)
                with cond:
                    delay.push(js.events.time_of(0), js)
                    cond.notify_all()
        with cond:
            state["ik_done"] = True
            cond.notify_all()

    def insole_worker():
        while (item := ins_q.get()) is not _STOP:
            with cond:
                insole.push(item)
                cond.notify_all()
        with cond:
            insole.flush()
            state["ins_done"] = True
            cond.notify_all()

    def dynamics_worker():
        index = itertools.count()
        while True:
            with cond:
                for _, js in delay.due(clock.now()):
                    dyn.release(js)
                ended = state["ins_done"]
                out = dyn.step(clock, ended) if dyn.pending else None
                if out is None or out[0] == DEFER:
                    if state["ik_done"] and state["ins_done"] and not len(delay) and not dyn.pending:
                        break
                    nxt = delay.next_release()
                    timeout = 0.05 if nxt is None else max(0.0, min(0.05, nxt - clock.now()))
                    cond.wait(timeout)
                    continue
            if out[0] != MATCH:
                continue
            ts = out[1]
            i = next(index)
            w = dispatch(i, cfg.so_workers)
            assignments.append((i, w))
            events = record_event(ts.events, 7, clock.now())
            seq_lock.acquire()
            seq.register(i, events.time_of(0))
            seq_lock.release()
            work_q[w].put((i, ts, dyn.so_problem(ts), events))
        for q in work_q:
            q.put(_STOP)

    def so_worker(w):
        def loop():
            while (item := work_q[w].get()) is not _STOP:
                i, ts, problem, events = item
                events = record_event(events, 8, clock.now())
                res = solve_activation(problem, warm.get(w), ts.t, w)
                warm.update(w, res)
                if cfg.so_extra_delay is not None:
                    time.sleep(float(cfg.so_extra_delay(i)))
                events = record_event(events, 9, clock.now())
                res_q.put((i, replace(res, events=events, index=i)))
            res_q.put(_STOP)
        loop.__name__ = f"so_worker_{w}"
        return loop

    seq_lock = threading.Lock()
    threads = [threading.Thread(target=guarded(f), daemon=True, name=f.__name__)
               for f in (player, ik_worker, insole_worker, dynamics_worker)]
    threads += [threading.Thread(target=guarded(so_worker(w)), daemon=True, name=f"so{w}")
                for w in range(cfg.so_workers)]
    for th in threads:
        th.start()
    stopped = 0
    while stopped < cfg.so_workers and not errors:
        try:
            item = res_q.get(timeout=0.05)
        except queue.Empty:
            with seq_lock:
                seq.poll(clock.now())
            continue
        if item is _STOP:
            stopped += 1
            continue
        results.append(item)
        with seq_lock:
            seq.push(item[0], item[1], now=clock.now())
    if errors:
        raise StageError(f"pipeline stage failed: {errors[0]!r}") from errors[0]
    for th in threads:
        th.join(timeout=5.0)
    seq.flush()
    results.sort(key=lambda r: r[0])
    return RunResult(cfg, model, calib, joint_states, dyn.torques, list(seq.emitted), results, seq,
                     sorted(assignments), dyn.dropped, ik.iterations, ik.unconverged,
                     _steps(insole, cfg), insole.dropped, time.perf_counter() - start)


def run(cfg: PipelineConfig) -> RunResult:
    return run_logical(cfg) if cfg.mode == "logical" else run_realtime(cfg)


# -- outputs --------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".10g")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for t, values in rows:
            fh.write(_fmt(t) + "," + ",".join(_fmt(v) for v in values) + "\n")


def write_outputs(result: RunResult, out_dir=None):
    out = Path(out_dir or result.config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = result.model
    coords = list(m.coordinate_names)
    write_csv(out / "q.csv", ["t"] + coords, [(js.t, js.q) for js in result.joint_states])
    write_csv(out / "qd.csv", ["t"] + coords, [(js.t, js.qd) for js in result.joint_states])
    write_csv(out / "tau.csv", ["t"] + coords, [(ts.t, ts.tau) for ts in result.torques])
    write_csv(out / "act.csv", ["t"] + list(m.muscle_names), [(r.t, r.a) for _, r in result.activations])
    actuated = [coords[j] for j in actuated_coordinates(m)]
    write_csv(out / "residuals.csv", ["t"] + actuated, [(r.t, r.residuals) for _, r in result.activations])
    status = {i: "emitted" for i, _ in result.activations}
    for i, _, reason in result.sequencer.discarded:
        status[i] = reason.replace(" ", "_")
    write_event_csv(out / "events.csv", [(i, r.t, r.worker, status.get(i, "unknown"), r.events)
                                        for i, r in sorted(result.results, key=lambda x: x[0])])
    with open(out / "discards.log", "w") as fh:
        for i, r, reason in sorted(result.sequencer.discarded, key=lambda x: x[0]):
            fh.write(f"so {i} t={_fmt(r.t)} worker={r.worker} reason={reason}\n")
        for js in result.match_drops:
            fh.write(f"match t={_fmt(js.t)} reason=no_force_sample\n")
    with open(out / "steps.csv", "w") as fh:
        fh.write("side,t_on,t_off\n")
        for side, intervals in result.steps.items():
            for on, off in intervals:
                fh.write(f"{side},{_fmt(on)},{_fmt(off)}\n")
    rep = result.report
    (out / "latency_report.txt").write_text(format_report(rep))
    (out / "latency_report.json").write_text(report_json(rep))
    if result.config.calibration is None:
        result.calibration.save(out / "calibration.json")
    summary = {
        "mode": result.config.mode,
        "joint_states": len(result.joint_states),
        "torques": len(result.torques),
        "match_drops": len(result.match_drops),
        "so_received": result.sequencer.received,
        "so_emitted": result.sequencer.n_emitted,
        "so_discarded": result.sequencer.n_discarded,
        "ik_max_iterations": max(result.ik_iterations, default=0),
        "ik_unconverged": result.ik_unconverged,
        "insole_dropped_records": result.insole_dropped,
        "n_workers": result.config.so_workers,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out
