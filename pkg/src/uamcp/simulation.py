"""Run orchestration: wires mobility, sensing, messaging, and the central path."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .central import (Backend, GroundStation, UplinkRecord, make_ground_stations,
                      roi_filter)
from .engine import Engine, Event, EventKind, RunSummary, substream, to_us
from .messages import (CPM_BASE_BYTES, CPM_OBJECT_BYTES, Cam, Cpm, StationMeta,
                       cam_due, ingest_cam, ingest_cpm, select_due_objects)
from .metrics import (CLS_CAM, CLS_CPM, CLS_DOWNLINK, CLS_GS_CPM, CLS_UPLINK,
                      MetricsRecorder)
from .perception import KHEAD, KIN_COLS, SOURCE_SENSOR, Lem, LemStore
from .radio import Channel, dcc_interval
from .scenario import (Route, ScenarioConfig, UasState, advance, build_network,
                       generate_routes, make_uas, place_ground_stations)
from .sensing import sense_pairs


@dataclass
class RunResult:
    cfg: ScenarioConfig
    summary: RunSummary
    metrics: MetricsRecorder
    store: LemStore
    channel: Channel
    output_paths: dict[str, Path] | None = None


class Simulation:
    """One seeded scenario run; share nothing with other instances."""

    def __init__(self, cfg: ScenarioConfig, *, record_events: bool = False,
                 record_frames: bool = False,
                 routes: list[tuple[Route, float]] | None = None) -> None:
        cfg.validate()
        self.cfg = cfg
        self.duration_us = to_us(cfg.duration)
        self.tick_us = to_us(cfg.mobility_tick)
        self.check_us = to_us(cfg.msg_check_period)
        self.sample_us = to_us(cfg.metrics_sample_period)
        self.ttl_us = to_us(cfg.lem_ttl)
        self.lf_period_us = to_us(cfg.cam_meta_period)
        self.silence_us = to_us(cfg.triggers.max_silence)
        self.publish_us = to_us(cfg.backend_publish_period)

        self.send_cam = cfg.mode in ("ca", "ca_cp", "central")
        self.send_cpm = cfg.mode in ("cp", "ca_cp", "central")
        self.central = cfg.mode == "central"

        if routes is None:
            routes = generate_routes(build_network(cfg), cfg, substream(cfg.seed, "routes"))
        if len(routes) != cfg.n_uas:
            raise ValueError("routes list must match cfg.n_uas")
        self.routes = routes

        n = cfg.n_uas
        self.n_uas = n
        gs_positions = place_ground_stations(cfg.gs_grid_dim, cfg)
        self.n_nodes = n + len(gs_positions)

        # shared state tables: kinematics row layout [x, y, speed, heading, acc]
        self.kin_table = np.zeros((self.n_nodes, KIN_COLS), dtype=np.float64)
        self.alive = np.zeros(self.n_nodes, dtype=bool)

        self.engine = Engine(self._dispatch)
        self.channel = Channel(self.engine, cfg.radio, self.kin_table[:, :2],
                               self.alive, record_frames=record_frames)
        self.store = LemStore(n + 1, n, self.ttl_us, record_log=record_events)
        self.backend = Backend(self.store, n) if self.central else None
        self.metrics = MetricsRecorder(n, len(gs_positions), self.central,
                                       self.duration_us)

        self.states: list[UasState] = []
        for uid, (route, _) in enumerate(routes):
            state = make_uas(uid, route, cfg.max_speed)
            state.alive = False
            self.states.append(state)
        self.last_advance_us = np.zeros(n, dtype=np.int64)
        self.metas = [StationMeta(public_id=uid, station_type="uas") for uid in range(n)]

        self.last_cam_us = np.full(n, -1, dtype=np.int64)
        self.cam_row = np.zeros((n, KIN_COLS), dtype=np.float64)
        self.cam_has = np.zeros(n, dtype=bool)
        self.last_lf_us = np.full(n, -1, dtype=np.int64)
        self.last_cpm_us = np.full(n, -1, dtype=np.int64)
        self.last_incl_ts = np.full((n, n), -1, dtype=np.int64)
        self.last_incl_kin = np.zeros((n, n, KIN_COLS), dtype=np.float64)

        self.cam_phase = np.zeros(n, dtype=np.int64)
        self.cpm_phase = np.zeros(n, dtype=np.int64)
        for uid in range(n):
            rng = substream(cfg.seed, "phase", uid)
            self.cam_phase[uid] = int(rng.integers(0, self.check_us))
            # keep the two classes half a period apart: the radio is half-duplex
            self.cpm_phase[uid] = (self.cam_phase[uid] + self.check_us // 2) % self.check_us
        self.jitter_us = to_us(cfg.radio.tx_jitter)
        self._jitter_rng = [substream(cfg.seed, "txjitter", node)
                            for node in range(self.n_nodes)]

        self.gss: list[GroundStation] = make_ground_stations(gs_positions, n, cfg.wired)
        for gs in self.gss:
            self.kin_table[gs.node_idx, 0] = gs.position[0]
            self.kin_table[gs.node_idx, 1] = gs.position[1]
            self.alive[gs.node_idx] = True

        self._handlers = {
            EventKind.SPAWN: self._on_spawn,
            EventKind.MOBILITY_TICK: self._on_mobility,
            EventKind.MSG_CHECK: self._on_msg_check,
            EventKind.FRAME_START: self._on_frame_start,
            EventKind.FRAME_END: self._on_frame_end,
            EventKind.WIRED_DELIVERY: self._on_wired,
            EventKind.BACKEND_PUBLISH: self._on_publish,
            EventKind.METRICS_SAMPLE: self._on_sample,
        }
        self._schedule_initial()

    # -- setup -------------------------------------------------------------

    def _schedule_initial(self) -> None:
        # insertion order fixes same-timestamp dispatch: spawns, then mobility
        # and sensing, then infrastructure, then metrics sampling
        for uid, (_, spawn_s) in enumerate(self.routes):
            self.engine.schedule_at(to_us(spawn_s), EventKind.SPAWN, uid)
        self.engine.schedule_at(0, EventKind.MOBILITY_TICK)
        if self.central:
            self.engine.schedule_at(0, EventKind.BACKEND_PUBLISH)
            for gs in self.gss:
                rng = substream(self.cfg.seed, "gs_phase", gs.gs_id)
                phase = int(rng.integers(0, self.check_us))
                self.engine.schedule_at(phase, EventKind.MSG_CHECK, (CLS_GS_CPM, gs.gs_id))
        self.engine.schedule_at(0, EventKind.METRICS_SAMPLE)

    def _dispatch(self, event: Event) -> None:
        self._handlers[event.kind](event)

    def _log(self, *entry) -> None:
        if self.store.log is not None:
            self.store.log.append(entry)

    # -- handlers ------------------------------------------------------------

    def _on_spawn(self, ev: Event) -> None:
        uid = ev.data
        now = ev.time_us
        state = self.states[uid]
        state.alive = True
        self.last_advance_us[uid] = now
        x, y = state.position
        self.kin_table[uid] = (x, y, state.speed, state.heading, 0.0)
        self.alive[uid] = True
        self.metrics.note_spawn(uid, now)
        self._log("spawn", now, uid)
        if self.send_cam:
            self.engine.schedule_at(now + int(self.cam_phase[uid]),
                                    EventKind.MSG_CHECK, (CLS_CAM, uid))
        if self.send_cpm:
            self.engine.schedule_at(now + int(self.cpm_phase[uid]),
                                    EventKind.MSG_CHECK, (CLS_CPM, uid))

    def _on_mobility(self, ev: Event) -> None:
        now = ev.time_us
        kin = self.kin_table
        for uid in range(self.n_uas):
            state = self.states[uid]
            if not state.alive:
                continue
            if self.last_advance_us[uid] < now:
                advance(state, (now - self.last_advance_us[uid]) / 1e6)
                self.last_advance_us[uid] = now
                if not state.alive:
                    self.alive[uid] = False
                    self.metrics.note_despawn(uid, now)
                    self._log("despawn", now, uid)
                    continue
                kin[uid, 0] = state.position[0]
                kin[uid, 1] = state.position[1]
                kin[uid, KHEAD] = state.heading
        alive_uas = np.nonzero(self.alive[:self.n_uas])[0]
        obs, tgt = sense_pairs(kin[:, :2], kin[:, KHEAD], alive_uas, self.cfg.sensor)
        if len(obs):
            ts = np.full(len(obs), now, dtype=np.int64)
            self.store.update_pairs(obs, tgt, kin[tgt], ts, SOURCE_SENSOR, now)
        nxt = now + self.tick_us
        if nxt <= self.duration_us:
            self.engine.schedule_at(nxt, EventKind.MOBILITY_TICK)

    def _on_msg_check(self, ev: Event) -> None:
        tag, idx = ev.data
        if tag == CLS_CAM:
            self._check_cam(idx, ev.time_us)
        elif tag == CLS_CPM:
            self._check_cpm(idx, ev.time_us)
        else:
            self._check_gs(idx, ev.time_us)

    def _resched_check(self, now: int, tag: int, idx: int) -> None:
        nxt = now + self.check_us
        if nxt <= self.duration_us:
            self.engine.schedule_at(nxt, EventKind.MSG_CHECK, (tag, idx))

    def _send(self, node: int, cls: int, msg, size: int, now: int) -> None:
        """Commit a generated message and put it on air after an access delay."""
        self.metrics.record_tx(node, cls, size, now)
        start = now + int(self._jitter_rng[node].integers(0, self.jitter_us + 1))
        if start <= self.duration_us:
            self.engine.schedule_at(start, EventKind.FRAME_START, (node, cls, msg, size))

    def _on_frame_start(self, ev: Event) -> None:
        node, cls, msg, size = ev.data
        if self.channel.transmit(node, size, ev.time_us, msg) is None:
            self.metrics.record_drop(node, cls)

    def _check_cam(self, uid: int, now: int) -> None:
        if not self.states[uid].alive:
            return
        dcc = dcc_interval(self.channel.cbr(uid, now))
        last = self.last_cam_us[uid]
        elapsed = math.inf if last < 0 else (now - last) / 1e6
        cur = self.kin_table[uid]
        prev = self.cam_row[uid] if self.cam_has[uid] else None
        if cam_due(prev, cur, elapsed, dcc, self.cfg.triggers):
            lf = self.last_lf_us[uid] < 0 or now - self.last_lf_us[uid] >= self.lf_period_us
            cam = Cam(sender=uid, kin_row=cur.copy(), ts_us=now,
                      lf_container_present=lf, meta=self.metas[uid] if lf else None,
                      generation_time_us=now)
            self._send(uid, CLS_CAM, cam, cam.size_bytes, now)
            self.last_cam_us[uid] = now
            self.cam_row[uid] = cur
            self.cam_has[uid] = True
            if lf:
                self.last_lf_us[uid] = now
        self._resched_check(now, CLS_CAM, uid)

    def _check_cpm(self, uid: int, now: int) -> None:
        if not self.states[uid].alive:
            return
        dcc = dcc_interval(self.channel.cbr(uid, now))
        last = self.last_cpm_us[uid]
        elapsed = math.inf if last < 0 else (now - last) / 1e6
        if elapsed >= dcc:
            own = self.store.own_sensed[uid]
            ids = np.nonzero((own >= 0) & (now - own <= self.ttl_us))[0]
            cur_kin = self.store.kin[uid][ids]
            due = select_due_objects(ids, cur_kin, self.last_incl_ts[uid],
                                     self.last_incl_kin[uid], now, self.cfg.triggers)
            sel = ids[due]
            if len(sel) or last < 0 or now - last >= self.silence_us:
                obj_kin = cur_kin[due]
                obj_ts = self.store.kin_ts[uid][sel].copy()
                cpm = Cpm(sender=uid, sender_kin_row=self.kin_table[uid].copy(),
                          sender_ts_us=now, object_ids=sel, object_kin=obj_kin,
                          object_ts=obj_ts, generation_time_us=now)
                self._send(uid, CLS_CPM, cpm, cpm.size_bytes, now)
                self.last_cpm_us[uid] = now
                if len(sel):
                    self.last_incl_ts[uid, sel] = now
                    self.last_incl_kin[uid, sel] = obj_kin
        self._resched_check(now, CLS_CPM, uid)

    def _check_gs(self, gs_id: int, now: int) -> None:
        gs = self.gss[gs_id]
        node = gs.node_idx
        dcc = dcc_interval(self.channel.cbr(node, now))
        last = gs.last_broadcast_us
        elapsed = math.inf if last < 0 else (now - last) / 1e6
        if elapsed >= dcc and len(gs.latest_ids):
            cpm = Cpm(sender=node, sender_kin_row=self.kin_table[node].copy(),
                      sender_ts_us=now, object_ids=gs.latest_ids,
                      object_kin=gs.latest_kin, object_ts=gs.latest_ts,
                      generation_time_us=now, from_gs=True)
            self._send(node, CLS_GS_CPM, cpm, cpm.size_bytes, now)
            gs.last_broadcast_us = now
        self._resched_check(now, CLS_GS_CPM, gs_id)

    def _on_frame_end(self, ev: Event) -> None:
        frame = ev.data
        now = ev.time_us
        delivered = self.channel.finish_frame(frame)
        msg = frame.data
        if isinstance(msg, Cam):
            cls = CLS_CAM
        else:
            cls = CLS_GS_CPM if msg.from_gs else CLS_CPM
        self.metrics.record_rx_many(delivered, cls)
        if len(delivered) == 0:
            return
        uas_recv = delivered[delivered < self.n_uas]
        uas_recv = uas_recv[self.alive[uas_recv]]
        if len(uas_recv):
            if cls == CLS_CAM:
                ingest_cam(self.store, uas_recv, msg, now)
            else:
                ingest_cpm(self.store, uas_recv, msg, now)
        if self.central and cls != CLS_GS_CPM:
            gs_recv = delivered[delivered >= self.n_uas]
            if len(gs_recv):
                self._forward_uplink(gs_recv, msg, now)

    def _forward_uplink(self, gs_recv: np.ndarray, msg: Cam | Cpm, now: int) -> None:
        # duplicates from several gateways arrive together in practice (equal
        # link parameters); bucket by arrival so each event ingests once
        size = msg.size_bytes
        buckets: dict[int, list[int]] = {}
        for node in gs_recv:
            gs = self.gss[node - self.n_uas]
            arrival = gs.uplink.send(now, size)
            buckets.setdefault(arrival, []).append(int(node))
        for arrival, nodes in buckets.items():
            record = UplinkRecord(gs_indices=nodes, rx_time_us=now, inner=msg,
                                  size_bytes=size)
            self.engine.schedule_at(arrival, EventKind.WIRED_DELIVERY,
                                    ("uplink", record))

    def _on_wired(self, ev: Event) -> None:
        now = ev.time_us
        tag = ev.data[0]
        if tag == "uplink":
            record: UplinkRecord = ev.data[1]
            for node in record.gs_indices:
                self.metrics.record_tx(node, CLS_UPLINK, record.size_bytes, now)
            self.metrics.record_rx(self.metrics.backend_row, CLS_UPLINK,
                                   len(record.gs_indices))
            self.backend.ingest(record.inner, now)
        else:
            _, entries = ev.data
            for gs_id, ids, kin, ts, size in entries:
                gs = self.gss[gs_id]
                gs.latest_ids, gs.latest_kin, gs.latest_ts = ids, kin, ts
                self.metrics.record_tx(self.metrics.backend_row, CLS_DOWNLINK, size, now)
                self.metrics.record_rx(gs.node_idx, CLS_DOWNLINK)

    def _on_publish(self, ev: Event) -> None:
        now = ev.time_us
        ids, kin, ts = self.backend.snapshot(now)
        roi = self.cfg.roi_radius
        buckets: dict[int, list[tuple]] = {}
        for gs in self.gss:
            if roi is not None and len(ids):
                g_ids, g_kin, g_ts = roi_filter(ids, kin, ts, gs.position, roi)
            else:
                g_ids, g_kin, g_ts = ids, kin, ts
            size = CPM_BASE_BYTES + CPM_OBJECT_BYTES * len(g_ids)
            arrival = gs.downlink.send(now, size)
            buckets.setdefault(arrival, []).append((gs.gs_id, g_ids, g_kin, g_ts, size))
        for arrival, entries in buckets.items():
            self.engine.schedule_at(arrival, EventKind.WIRED_DELIVERY,
                                    ("downlink", entries))
        nxt = now + self.publish_us
        if nxt <= self.duration_us:
            self.engine.schedule_at(nxt, EventKind.BACKEND_PUBLISH)

    def _on_sample(self, ev: Event) -> None:
        now = ev.time_us
        alive_uas = np.nonzero(self.alive[:self.n_uas])[0]
        counts = self.store.fresh_counts(now)
        backend_known = int(counts[self.n_uas]) if self.central else None
        gs_nodes = np.arange(self.n_uas, self.n_nodes, dtype=np.int64)
        cbr_nodes = np.concatenate([alive_uas, gs_nodes])
        cbr_values = np.array([self.channel.cbr(int(i), now) for i in cbr_nodes])
        self.store.mark_sample(now, len(alive_uas))
        self.metrics.sample(now, alive_uas, counts[alive_uas], backend_known,
                            len(alive_uas), cbr_nodes, cbr_values)
        nxt = now + self.sample_us
        if nxt <= self.duration_us:
            self.engine.schedule_at(nxt, EventKind.METRICS_SAMPLE)

    # -- execution -----------------------------------------------------------

    def lem_view(self, uid: int) -> Lem:
        return Lem(self.store, uid, owner_id=uid)

    def run(self) -> RunResult:
        summary = self.engine.run_until(self.duration_us)
        return RunResult(cfg=self.cfg, summary=summary, metrics=self.metrics,
                         store=self.store, channel=self.channel)


def run_simulation(cfg: ScenarioConfig, out_dir: str | Path | None = None, *,
                   record_events: bool = False, record_frames: bool = False,
                   routes: list[tuple[Route, float]] | None = None) -> RunResult:
    """Build, run, and optionally write CSV outputs for one scenario."""
    sim = Simulation(cfg, record_events=record_events, record_frames=record_frames,
                     routes=routes)
    result = sim.run()
    if out_dir is not None:
        result.output_paths = result.metrics.write_outputs(out_dir, result.store)
    return result
