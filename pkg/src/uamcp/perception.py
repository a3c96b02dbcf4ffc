"""Local Environment Model: per-node TTL caches over globally unique object ids.

All caches for one run live in a single set of (observer x object) matrices so
message deliveries and sensing sweeps update many caches in one pass;
:class:`Lem` is the per-node view used by generation and metrics code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

SOURCE_SENSOR = 1
SOURCE_CA = 2
SOURCE_CP = 4
SOURCE_BACKEND = 8

SOURCE_NAMES = {
    SOURCE_SENSOR: "sensor",
    SOURCE_CA: "ca",
    SOURCE_CP: "cp",
    SOURCE_BACKEND: "backend",
}

# kinematics row layout shared across modules
KX, KY, KSPEED, KHEAD, KACC = range(5)
KIN_COLS = 5


@dataclass(frozen=True)
class KinematicsDto:
    """Kinematic snapshot as carried in messages and cache entries."""

    position: tuple[float, float]
    heading: float
    speed: float
    acceleration: float = 0.0
    altitude: float = 0.0
    timestamp_us: int = 0

    def to_row(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1], self.speed,
                         self.heading, self.acceleration], dtype=np.float64)

    @classmethod
    def from_row(cls, row: np.ndarray, ts_us: int) -> "KinematicsDto":
        return cls(position=(float(row[KX]), float(row[KY])), heading=float(row[KHEAD]),
                   speed=float(row[KSPEED]), acceleration=float(row[KACC]),
                   timestamp_us=int(ts_us))


@dataclass(frozen=True)
class LemEntry:
    object_id: int
    kinematics: KinematicsDto
    last_seen_us: int
    sources: frozenset[str]
    own_sensed_last_us: int | None


@njit(cache=True)
def _upsert_pairs_kernel(seen_f, ts_f, src_f, own_f, first_f, kin_f, rejected,
                         obs, obj, kin_rows, ts_us, source_bit, now_us, ttl_us,
                         is_sensor, n_objects):
    fresh_floor = now_us - ttl_us
    if fresh_floor < 0:
        fresh_floor = 0
    for i in range(len(obs)):
        if obs[i] == obj[i]:
            rejected[obs[i]] += 1  # self-reports never enter a node's own cache
            continue
        slot = obs[i] * n_objects + obj[i]
        if seen_f[slot] < fresh_floor:
            src_f[slot] = 0
            own_f[slot] = -1
            if first_f[slot] < 0:
                first_f[slot] = now_us
            take_kin = True
        else:
            take_kin = ts_us[i] > ts_f[slot]
        seen_f[slot] = now_us
        src_f[slot] |= source_bit
        if take_kin:
            ts_f[slot] = ts_us[i]
            for c in range(kin_rows.shape[1]):
                kin_f[slot, c] = kin_rows[i, c]
        if is_sensor:
            own_f[slot] = now_us


@njit(cache=True)
def _upsert_broadcast_kernel(seen_f, ts_f, src_f, own_f, first_f, kin_f, rejected,
                             obs, obj, kin_rows, ts_us, source_bit, now_us, ttl_us,
                             n_objects):
    """Cross-product upsert: every observer receives the same object list."""
    fresh_floor = now_us - ttl_us
    if fresh_floor < 0:
        fresh_floor = 0
    for a in range(len(obs)):
        base = obs[a] * n_objects
        for i in range(len(obj)):
            if obs[a] == obj[i]:
                rejected[obs[a]] += 1
                continue
            slot = base + obj[i]
            if seen_f[slot] < fresh_floor:
                src_f[slot] = 0
                own_f[slot] = -1
                if first_f[slot] < 0:
                    first_f[slot] = now_us
                take_kin = True
            else:
                take_kin = ts_us[i] > ts_f[slot]
            seen_f[slot] = now_us
            src_f[slot] |= source_bit
            if take_kin:
                ts_f[slot] = ts_us[i]
                for c in range(kin_rows.shape[1]):
                    kin_f[slot, c] = kin_rows[i, c]


class LemStore:
    """Backing matrices for every cache in a run (UAS rows plus one backend row)."""

    def __init__(self, n_observers: int, n_objects: int, ttl_us: int,
                 record_log: bool = False) -> None:
        self.n_observers = n_observers
        self.n_objects = n_objects
        self.ttl_us = ttl_us
        shape = (n_observers, n_objects)
        self.last_seen = np.full(shape, -1, dtype=np.int64)
        self.kin = np.zeros(shape + (KIN_COLS,), dtype=np.float64)
        self.kin_ts = np.full(shape, -1, dtype=np.int64)
        self.sources = np.zeros(shape, dtype=np.int64)
        self.own_sensed = np.full(shape, -1, dtype=np.int64)
        self.first_seen = np.full(shape, -1, dtype=np.int64)
        self.own_rejected = np.zeros(n_observers, dtype=np.int64)
        self.log: list[tuple] | None = [] if record_log else None
        # raveled views for the update kernels
        self._seen_f = self.last_seen.reshape(-1)
        self._ts_f = self.kin_ts.reshape(-1)
        self._src_f = self.sources.reshape(-1)
        self._own_f = self.own_sensed.reshape(-1)
        self._first_f = self.first_seen.reshape(-1)
        self._kin_f = self.kin.reshape(-1, KIN_COLS)

    def update_pairs(self, obs: np.ndarray, obj: np.ndarray, kin_rows: np.ndarray,
                     ts_us: np.ndarray, source_bit: int, now_us: int) -> None:
        """Upsert aligned (observer, object) pairs.

        Entries refresh last_seen unconditionally; kinematics only advance to
        newer measurement timestamps; an expired slot is re-created from
        scratch (sources reset). Self-reports are rejected and counted.
        """
        if len(obs) == 0:
            return
        _upsert_pairs_kernel(self._seen_f, self._ts_f, self._src_f, self._own_f,
                             self._first_f, self._kin_f, self.own_rejected,
                             obs, obj, np.ascontiguousarray(kin_rows), ts_us,
                             source_bit, now_us, self.ttl_us,
                             source_bit == SOURCE_SENSOR, self.n_objects)
        if self.log is not None:
            self.log.append(("upsert", now_us, obs.copy(), obj.copy()))

    def update_broadcast(self, obs: np.ndarray, obj: np.ndarray, kin_rows: np.ndarray,
                         ts_us: np.ndarray, source_bit: int, now_us: int) -> None:
        """Deliver the same object list to several observers (cross product)."""
        if len(obs) == 0 or len(obj) == 0:
            return
        _upsert_broadcast_kernel(self._seen_f, self._ts_f, self._src_f, self._own_f,
                                 self._first_f, self._kin_f, self.own_rejected,
                                 obs, obj, np.ascontiguousarray(kin_rows), ts_us,
                                 source_bit, now_us, self.ttl_us, self.n_objects)
        if self.log is not None:
            self.log.append(("upsert_bcast", now_us, obs.copy(), obj.copy()))

    def fresh_mask(self, now_us: int) -> np.ndarray:
        return (self.last_seen >= 0) & (now_us - self.last_seen <= self.ttl_us)

    def fresh_counts(self, now_us: int) -> np.ndarray:
        """Non-expired entry count per observer (the EAR numerator)."""
        return self.fresh_mask(now_us).sum(axis=1)

    def mark_sample(self, now_us: int, active: int) -> None:
        if self.log is not None:
            self.log.append(("sample", now_us, active))


class Lem:
    """One observer's TTL cache view over the shared store."""

    def __init__(self, store: LemStore, row: int, owner_id: int | None = None) -> None:
        self.store = store
        self.row = row
        self.owner_id = owner_id if owner_id is not None else -1

    @property
    def ttl_us(self) -> int:
        return self.store.ttl_us

    def upsert(self, object_id: int, kinematics: KinematicsDto, source: int,
               now_us: int) -> None:
        self.store.update_pairs(
            np.full(1, self.row, dtype=np.int64),
            np.full(1, object_id, dtype=np.int64),
            kinematics.to_row()[None, :],
            np.full(1, kinematics.timestamp_us, dtype=np.int64),
            source, now_us)

    def evict_expired(self, now_us: int) -> int:
        seen = self.store.last_seen[self.row]
        expired = (seen >= 0) & (now_us - seen > self.store.ttl_us)
        n = int(expired.sum())
        if n:
            seen[expired] = -1
            self.store.sources[self.row][expired] = 0
            self.store.own_sensed[self.row][expired] = -1
        return n

    def fresh_ids(self, now_us: int) -> np.ndarray:
        seen = self.store.last_seen[self.row]
        return np.nonzero((seen >= 0) & (now_us - seen <= self.store.ttl_us))[0]

    def own_sensed_ids(self, now_us: int) -> np.ndarray:
        own = self.store.own_sensed[self.row]
        return np.nonzero((own >= 0) & (now_us - own <= self.store.ttl_us))[0]

    def snapshot(self, now_us: int) -> list[LemEntry]:
        """All non-expired entries, including ones for despawned objects."""
        self.evict_expired(now_us)
        return [self._entry(i) for i in self.fresh_ids(now_us)]

    def own_sensed_view(self, now_us: int) -> list[LemEntry]:
        self.evict_expired(now_us)
        return [self._entry(i) for i in self.own_sensed_ids(now_us)]

    def entry(self, object_id: int) -> LemEntry | None:
        if self.store.last_seen[self.row, object_id] < 0:
            return None
        return self._entry(object_id)

    def _entry(self, obj: int) -> LemEntry:
        st = self.store
        row = self.row
        bits = int(st.sources[row, obj])
        own = int(st.own_sensed[row, obj])
        return LemEntry(
            object_id=int(obj),
            kinematics=KinematicsDto.from_row(st.kin[row, obj], st.kin_ts[row, obj]),
            last_seen_us=int(st.last_seen[row, obj]),
            sources=frozenset(name for bit, name in SOURCE_NAMES.items() if bits & bit),
            own_sensed_last_us=own if own >= 0 else None,
        )
