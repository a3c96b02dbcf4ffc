"""Message schema for the perception data space: CA/CP payloads and trigger rules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .perception import (KHEAD, KSPEED, KX, KY, SOURCE_BACKEND, SOURCE_CA,
                         SOURCE_CP, KinematicsDto, Lem, LemStore)
from .scenario import TriggerThresholds

CAM_BASE_BYTES = 41
CAM_LF_BYTES = 62  # low-frequency container carrying station metadata
CPM_BASE_BYTES = 46
CPM_OBJECT_BYTES = 29

# Data-space containers that are schema-defined but never generated in the
# evaluated scenarios; reserved byte footprints for a future codec.
MISSION_CONTAINER_BYTES = 48
ENVIRONMENT_CONTAINER_BYTES = 40
CONFLICT_CONTAINER_BYTES = 32


@dataclass(frozen=True)
class StationMeta:
    public_id: int
    station_type: str  # "uas" | "gs"
    dimensions: tuple[float, float] = (2.0, 2.0)
    special_vehicle: bool = False
    status: str = "mission"  # mission | take-off | landing


@dataclass(frozen=True)
class MissionContainer:
    """Reserved: mission plan/status sharing (no generator in this artifact)."""

    service_provider: str = ""
    public_mission_id: int = 0
    plan: tuple = ()
    status: str = ""
    changes: tuple = ()


@dataclass(frozen=True)
class EnvironmentContainer:
    """Reserved: traffic guidance, weather, and noise reports (no generator)."""

    traffic_guidance: tuple = ()
    weather: tuple = ()
    noise: tuple = ()


@dataclass(frozen=True)
class ConflictContainer:
    """Reserved: hazard and breakdown notifications (no generator)."""

    hazards: tuple = ()
    collision_avoidance: tuple = ()


class PerceivedObjectDto(NamedTuple):
    object_ref: int
    kinematics: KinematicsDto
    time_of_measurement_us: int


@dataclass(slots=True)
class Cam:
    """Cooperative awareness broadcast: sender identity and kinematics."""

    sender: int
    kin_row: np.ndarray
    ts_us: int
    lf_container_present: bool
    meta: StationMeta | None
    generation_time_us: int

    @property
    def size_bytes(self) -> int:
        return CAM_BASE_BYTES + (CAM_LF_BYTES if self.lf_container_present else 0)

    @property
    def kinematics(self) -> KinematicsDto:
        return KinematicsDto.from_row(self.kin_row, self.ts_us)


@dataclass(slots=True)
class Cpm:
    """Perception broadcast: sender state plus a perceived-object list.

    Object identity/kinematics columns are shared immutable arrays so one
    message can be ingested by many receivers without copies.
    """

    sender: int
    sender_kin_row: np.ndarray | None
    sender_ts_us: int
    object_ids: np.ndarray
    object_kin: np.ndarray
    object_ts: np.ndarray
    generation_time_us: int
    from_gs: bool = False
    _ingest_cols: tuple | None = None

    @property
    def size_bytes(self) -> int:
        return CPM_BASE_BYTES + CPM_OBJECT_BYTES * len(self.object_ids)

    @property
    def objects(self) -> list[PerceivedObjectDto]:
        return [PerceivedObjectDto(int(i), KinematicsDto.from_row(k, int(t)), int(t))
                for i, k, t in zip(self.object_ids, self.object_kin, self.object_ts)]


def heading_delta(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def cam_due(last_sent: np.ndarray | None, current: np.ndarray, elapsed_s: float,
            dcc_min_s: float, th: TriggerThresholds) -> bool:
    """Generation predicate: DCC gate AND (silence timeout OR kinematic change).

    The three kinematic conditions combine with OR and use strict `>`
    comparisons; heading deltas are taken on the circle.
    """
    if elapsed_s < dcc_min_s:
        return False
    if last_sent is None:
        return True
    if elapsed_s >= th.max_silence:
        return True
    if heading_delta(float(current[KHEAD]), float(last_sent[KHEAD])) > th.heading_delta:
        return True
    dx = current[KX] - last_sent[KX]
    dy = current[KY] - last_sent[KY]
    if math.hypot(dx, dy) > th.position_delta:
        return True
    return abs(float(current[KSPEED]) - float(last_sent[KSPEED])) > th.speed_delta


def select_due_objects(obj_ids: np.ndarray, cur_kin: np.ndarray,
                       last_incl_ts: np.ndarray, last_incl_kin: np.ndarray,
                       now_us: int, th: TriggerThresholds) -> np.ndarray:
    """Mask of own-sensed objects due for inclusion in the next perception message.

    Objects never reported before are always due; otherwise the CA trigger
    rules apply between the current kinematics and those at last inclusion,
    with a per-object silence timeout of th.max_silence.
    """
    if len(obj_ids) == 0:
        return np.zeros(0, dtype=bool)
    prev_ts = last_incl_ts[obj_ids]
    prev = last_incl_kin[obj_ids]
    silence_us = round(th.max_silence * 1e6)
    due = prev_ts < 0
    due |= (now_us - prev_ts) >= silence_us
    dh = np.abs(cur_kin[:, KHEAD] - prev[:, KHEAD]) % 360.0
    dh = np.minimum(dh, 360.0 - dh)
    due |= dh > th.heading_delta
    dx = cur_kin[:, KX] - prev[:, KX]
    dy = cur_kin[:, KY] - prev[:, KY]
    due |= dx * dx + dy * dy > th.position_delta ** 2
    due |= np.abs(cur_kin[:, KSPEED] - prev[:, KSPEED]) > th.speed_delta
    return due


def ingest_cam(store: LemStore, observers: np.ndarray, cam: Cam, now_us: int) -> None:
    store.update_broadcast(observers, np.full(1, cam.sender, dtype=np.int64),
                           cam.kin_row[None, :], np.full(1, cam.ts_us, dtype=np.int64),
                           SOURCE_CA, now_us)


def ingest_cpm(store: LemStore, observers: np.ndarray, cpm: Cpm, now_us: int) -> None:
    """Upsert perceived objects (and, for UAS senders, the sender itself)."""
    if cpm.from_gs:
        store.update_broadcast(observers, cpm.object_ids, cpm.object_kin,
                               cpm.object_ts, SOURCE_BACKEND, now_us)
        return
    if cpm._ingest_cols is None:
        cpm._ingest_cols = (
            np.concatenate([np.full(1, cpm.sender, dtype=np.int64), cpm.object_ids]),
            np.concatenate([cpm.sender_kin_row[None, :], cpm.object_kin]),
            np.concatenate([np.full(1, cpm.sender_ts_us, dtype=np.int64), cpm.object_ts]),
        )
    ids, kin, ts = cpm._ingest_cols
    store.update_broadcast(observers, ids, kin, ts, SOURCE_CP, now_us)


def on_receive(lem: Lem, msg: Cam | Cpm, now_us: int) -> None:
    """Apply one delivered message to one node's environment model."""
    observers = np.full(1, lem.row, dtype=np.int64)
    if isinstance(msg, Cam):
        ingest_cam(lem.store, observers, msg, now_us)
    else:
        ingest_cpm(lem.store, observers, msg, now_us)
