"""Ground-station gateways, wired links, and the central aggregation backend."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .messages import Cam, Cpm, ingest_cam, ingest_cpm
from .perception import LemStore
from .scenario import WiredParams


def serialization_delay_s(n_bytes: int, capacity_bps: float) -> float:
    return 8.0 * n_bytes / capacity_bps


@dataclass(slots=True)
class WiredLink:
    """FIFO point-to-point link; delays quantize up to the microsecond tick."""

    capacity_bps: float
    latency_us: int
    next_free_us: int = 0

    def send(self, now_us: int, n_bytes: int) -> int:
        """Enqueue one message; returns its arrival time."""
        ser_us = max(1, math.ceil(serialization_delay_s(n_bytes, self.capacity_bps) * 1e6))
        depart_us = max(now_us, self.next_free_us)
        self.next_free_us = depart_us + ser_us
        return depart_us + ser_us + self.latency_us


@dataclass(slots=True)
class UplinkRecord:
    """A broadcast captured by one or more gateways, bound for the backend."""

    gs_indices: list[int]
    rx_time_us: int
    inner: Cam | Cpm
    size_bytes: int


@dataclass
class GroundStation:
    """Stationary gateway between the broadcast channel and the backend."""

    gs_id: int
    node_idx: int
    position: tuple[float, float]
    uplink: WiredLink
    downlink: WiredLink
    latest_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    latest_kin: np.ndarray = field(default_factory=lambda: np.empty((0, 5)))
    latest_ts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    last_broadcast_us: int = -1


class Backend:
    """Singleton cache aggregating every report relayed through the gateways."""

    def __init__(self, store: LemStore, row: int) -> None:
        self.store = store
        self.row = row
        self._obs = np.full(1, row, dtype=np.int64)

    def ingest(self, msg: Cam | Cpm, now_us: int) -> None:
        """Idempotent upsert of the sender and any perceived objects."""
        if isinstance(msg, Cam):
            ingest_cam(self.store, self._obs, msg, now_us)
        else:
            ingest_cpm(self.store, self._obs, msg, now_us)

    def snapshot(self, now_us: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fresh cache content as (ids, kinematics, measurement times)."""
        seen = self.store.last_seen[self.row]
        ids = np.nonzero((seen >= 0) & (now_us - seen <= self.store.ttl_us))[0]
        return ids, self.store.kin[self.row, ids].copy(), self.store.kin_ts[self.row, ids].copy()


def roi_filter(ids: np.ndarray, kin: np.ndarray, ts: np.ndarray,
               center: tuple[float, float], radius: float
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Restrict a snapshot to objects within a radius of a gateway."""
    dx = kin[:, 0] - center[0]
    dy = kin[:, 1] - center[1]
    keep = dx * dx + dy * dy <= radius * radius
    return ids[keep], kin[keep], ts[keep]


def make_ground_stations(positions: list[tuple[float, float]], first_node_idx: int,
                         wired: WiredParams) -> list[GroundStation]:
    latency_us = round(wired.latency * 1e6)
    return [
        GroundStation(
            gs_id=k, node_idx=first_node_idx + k, position=pos,
            uplink=WiredLink(wired.capacity, latency_us),
            downlink=WiredLink(wired.capacity, latency_us))
        for k, pos in enumerate(positions)
    ]
