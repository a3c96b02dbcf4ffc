"""Forward radar model: perfect detections within a range/field-of-view cone."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .scenario import SensorSpec, UasState


@dataclass(frozen=True)
class Detection:
    target_id: int
    position: tuple[float, float]
    speed: float
    heading: float
    time_us: int


def _angle_delta(a: float, b: float) -> float:
    """Absolute circular difference in degrees, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def sense(ego: UasState, world: Iterable[UasState], spec: SensorSpec,
          now_us: int) -> list[Detection]:
    """Exactly the live targets within range and |bearing offset| <= fov/2."""
    half = spec.fov / 2.0
    ex, ey = ego.position
    out: list[Detection] = []
    for target in world:
        if target.id == ego.id or not target.alive:
            continue
        tx, ty = target.position
        dx, dy = tx - ex, ty - ey
        if math.hypot(dx, dy) > spec.range:
            continue
        if dx != 0.0 or dy != 0.0:
            # a co-located target sits at the cone apex and is always seen
            bearing = math.degrees(math.atan2(dy, dx)) % 360.0
            if _angle_delta(bearing, ego.heading) > half:
                continue
        out.append(Detection(target_id=target.id, position=(tx, ty),
                             speed=target.speed, heading=target.heading,
                             time_us=now_us))
    return out


def sense_pairs(pos: np.ndarray, heading: np.ndarray, alive_idx: np.ndarray,
                spec: SensorSpec) -> tuple[np.ndarray, np.ndarray]:
    """All (observer, target) detection pairs among alive nodes, vectorized.

    Returns index arrays into the full position table; same membership as
    running :func:`sense` per observer.
    """
    if len(alive_idx) < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    p = pos[alive_idx]
    dx = p[None, :, 0] - p[:, None, 0]
    dy = p[None, :, 1] - p[:, None, 1]
    d2 = dx * dx + dy * dy
    in_range = d2 <= spec.range * spec.range
    np.fill_diagonal(in_range, False)
    bearing = np.degrees(np.arctan2(dy, dx)) % 360.0
    offset = np.abs(bearing - heading[alive_idx][:, None]) % 360.0
    offset = np.minimum(offset, 360.0 - offset)
    mask = in_range & ((offset <= spec.fov / 2.0) | (d2 == 0.0))
    obs, tgt = np.nonzero(mask)
    return alive_idx[obs], alive_idx[tgt]
