"""Broadcast channel: path loss, decode range, collisions, CBR, and DCC."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .engine import Engine, EventKind, to_us
from .scenario import RadioParams

C_LIGHT = 2.998e8  # m/s

# DCC step table: CBR threshold -> minimum message-generation interval [s].
# Keeps the generation rate within the 1-10 Hz corridor.
DCC_TABLE = (
    (0.20, 0.10),
    (0.30, 0.20),
    (0.40, 0.40),
    (0.50, 0.50),
)
DCC_FLOOR_INTERVAL = 1.00


def reference_loss_db(p: RadioParams) -> float:
    """Free-space loss at the 1 m reference distance."""
    return 20.0 * math.log10(4.0 * math.pi * p.carrier_freq * 1e6 / C_LIGHT)


def path_loss_db(d: float, p: RadioParams) -> float:
    """Log-distance loss; equals free space at exponent 2. d=0 is lossless."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    if d == 0:
        return 0.0
    return reference_loss_db(p) + 10.0 * p.path_loss_exponent * math.log10(d)


def max_range(p: RadioParams) -> float:
    """Distance where received power hits the sensitivity threshold."""
    budget = p.tx_power_dbm - p.sensitivity_dbm
    return 10.0 ** ((budget - reference_loss_db(p)) / (10.0 * p.path_loss_exponent))


def airtime_s(payload_len: int, p: RadioParams) -> float:
    return p.preamble_time + 8.0 * (payload_len + p.frame_overhead) / p.data_rate


def dcc_interval(cbr_value: float) -> float:
    """Map channel busy ratio to the minimum generation interval [0.1 s, 1.0 s]."""
    for threshold, interval in DCC_TABLE:
        if cbr_value < threshold:
            return interval
    return DCC_FLOOR_INTERVAL


class CbrMeter:
    """Busy-time union over a trailing window at one node's position.

    Intervals arrive in non-decreasing start order (appended at frame start),
    so overlapping records merge on append and the deque stays disjoint.
    """

    __slots__ = ("_intervals",)

    def __init__(self) -> None:
        self._intervals: deque[tuple[int, int]] = deque()

    def add(self, start_us: int, end_us: int) -> None:
        iv = self._intervals
        if iv:
            last_start, last_end = iv[-1]
            if start_us <= last_end:
                if end_us > last_end:
                    iv[-1] = (last_start, end_us)
                return
        iv.append((start_us, end_us))

    def value(self, now_us: int, window_us: int) -> float:
        lo = now_us - window_us
        iv = self._intervals
        while iv and iv[0][1] <= lo:
            iv.popleft()
        busy = 0
        for start, end in iv:
            if start >= now_us:
                break
            busy += (end if end < now_us else now_us) - (start if start > lo else lo)
        return busy / window_us


@dataclass(slots=True)
class Frame:
    """One on-air transmission; the unit of the channel model."""

    sender: int
    tx_position: tuple[float, float]
    payload_len: int
    start_us: int
    airtime_us: int
    data: Any = None
    hearers: np.ndarray | None = None
    hearer_pos: np.ndarray | None = None
    out_of_range: int = 0
    uid: int = -1
    overlaps: list["Frame"] = field(default_factory=list)

    @property
    def end_us(self) -> int:
        return self.start_us + self.airtime_us


@dataclass(slots=True)
class FrameRecord:
    sender: int
    payload_len: int
    start_us: int
    end_us: int
    in_range: int
    delivered: int
    collided: int
    out_of_range: int


class Channel:
    """Half-duplex broadcast medium over a shared node position table.

    A frame reaches every in-range node captured at its start unless another
    audible frame (including the receiver's own transmission) overlapped it in
    time at that receiver; overlapping frames destroy each other (no capture).
    """

    def __init__(self, engine: Engine, params: RadioParams, positions: np.ndarray,
                 alive: np.ndarray, record_frames: bool = False) -> None:
        self.engine = engine
        self.params = params
        self.positions = positions
        self.alive = alive
        self.decode_range = max_range(params)
        self.cbr_window_us = to_us(params.cbr_window)
        n = len(positions)
        self.meters = [CbrMeter() for _ in range(n)]
        self.tx_busy_until = np.zeros(n, dtype=np.int64)
        self._d2 = np.empty(n, dtype=np.float64)
        self._work = np.empty(n, dtype=np.float64)
        self._active: dict[int, Frame] = {}
        self._next_frame_id = 0
        self.record_frames = record_frames
        self.frame_records: list[FrameRecord] = []
        self.frames_sent = 0
        self.tx_busy_drops = 0
        self.delivered_total = 0
        self.collided_total = 0
        self.out_of_range_total = 0

    def cbr(self, node: int, now_us: int) -> float:
        return self.meters[node].value(now_us, self.cbr_window_us)

    def transmit(self, sender: int, payload_len: int, now_us: int,
                 data: Any = None) -> Frame | None:
        """Start a broadcast; returns None when the sender is mid-transmission."""
        if self.tx_busy_until[sender] > now_us:
            self.tx_busy_drops += 1
            return None
        air_us = max(1, to_us(airtime_s(payload_len, self.params)))
        end_us = now_us + air_us
        self.tx_busy_until[sender] = end_us

        pos = self.positions
        sx, sy = pos[sender]
        d2, work = self._d2, self._work
        np.subtract(pos[:, 0], sx, out=d2)
        np.multiply(d2, d2, out=d2)
        np.subtract(pos[:, 1], sy, out=work)
        np.multiply(work, work, out=work)
        d2 += work
        in_range = (d2 <= self.decode_range ** 2) & self.alive
        in_range[sender] = False
        hearers = np.flatnonzero(in_range)
        out_of_range = (int(np.count_nonzero(self.alive))
                        - (1 if self.alive[sender] else 0) - len(hearers))

        frame = Frame(sender=sender, tx_position=(float(sx), float(sy)),
                      payload_len=payload_len, start_us=now_us, airtime_us=air_us,
                      data=data, hearers=hearers, hearer_pos=pos[hearers].copy(),
                      out_of_range=out_of_range)

        meters = self.meters
        meters[sender].add(now_us, end_us)
        for idx in hearers:
            meters[idx].add(now_us, end_us)

        for other in self._active.values():
            other.overlaps.append(frame)
        frame.overlaps.extend(self._active.values())
        frame.uid = self._next_frame_id
        self._next_frame_id += 1
        self._active[frame.uid] = frame

        self.frames_sent += 1
        self.engine.schedule_at(end_us, EventKind.FRAME_END, frame)
        return frame

    def finish_frame(self, frame: Frame) -> np.ndarray:
        """Resolve per-receiver outcomes at frame end; returns delivered indices."""
        del self._active[frame.uid]

        hearers = frame.hearers
        if len(hearers) == 0:
            collided_mask = np.zeros(0, dtype=bool)
        else:
            candidates = [g for g in frame.overlaps
                          if g.start_us < frame.end_us and g.end_us > frame.start_us]
            if candidates:
                ctx = np.array([g.tx_position for g in candidates])
                dx = ctx[:, 0][:, None] - frame.hearer_pos[:, 0][None, :]
                dy = ctx[:, 1][:, None] - frame.hearer_pos[:, 1][None, :]
                audible = dx * dx + dy * dy <= self.decode_range ** 2
                collided_mask = audible.any(axis=0)
            else:
                collided_mask = np.zeros(len(hearers), dtype=bool)
        delivered = hearers[~collided_mask]
        n_collided = int(collided_mask.sum())

        self.delivered_total += len(delivered)
        self.collided_total += n_collided
        self.out_of_range_total += frame.out_of_range
        if self.record_frames:
            self.frame_records.append(FrameRecord(
                sender=frame.sender, payload_len=frame.payload_len,
                start_us=frame.start_us, end_us=frame.end_us,
                in_range=len(hearers), delivered=len(delivered),
                collided=n_collided, out_of_range=frame.out_of_range))
        return delivered
