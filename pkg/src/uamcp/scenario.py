"""Scenario configuration, grid network, routes, ground stations, and UAS mobility."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

MODES = ("local", "ca", "cp", "ca_cp", "central")

ROUTE_REJECTION_LIMIT = 10_000


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class SensorSpec:
    """Forward radar: full aperture `fov` degrees centered on the heading."""

    range: float = 1000.0
    fov: float = 120.0


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = 23.0103  # 200 mW
    carrier_freq: float = 5900.0  # MHz
    data_rate: float = 6e6  # bit/s
    sensitivity_dbm: float = -82.0
    path_loss_exponent: float = 2.0
    preamble_time: float = 40e-6  # s
    frame_overhead: int = 64  # bytes
    cbr_window: float = 0.1  # s
    # channel-access delay spread; decorrelates the periodic generation slots
    # of different stations (without it, stations whose slots align destroy
    # each other's frames for as long as their airtimes match)
    tx_jitter: float = 0.01  # s


@dataclass(frozen=True)
class TriggerThresholds:
    heading_delta: float = 4.0  # degrees
    position_delta: float = 4.0  # meters
    speed_delta: float = 0.5  # m/s
    max_silence: float = 1.0  # s


@dataclass(frozen=True)
class WiredParams:
    capacity: float = 1e11  # bit/s
    latency: float = 1e-3  # s


@dataclass(frozen=True)
class ScenarioConfig:
    area_side: float = 4000.0
    grid_spacing: float = 500.0
    n_uas: int = 200
    spawn_window: float = 20.0
    max_speed: float = 70.0
    duration: float = 100.0
    mode: str = "central"
    gs_grid_dim: int = 9
    sensor: SensorSpec = field(default_factory=SensorSpec)
    radio: RadioParams = field(default_factory=RadioParams)
    seed: int = 1
    route_duration_range: tuple[float, float] = (70.0, 95.0)
    lem_ttl: float = 1.1
    metrics_sample_period: float = 0.1
    # knobs beyond the core parameter set, documented in the README
    triggers: TriggerThresholds = field(default_factory=TriggerThresholds)
    wired: WiredParams = field(default_factory=WiredParams)
    mobility_tick: float = 0.1
    msg_check_period: float = 0.1
    backend_publish_period: float = 0.1
    cam_meta_period: float = 0.5
    roi_radius: float | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        spacing_steps = self.area_side / self.grid_spacing
        if abs(spacing_steps - round(spacing_steps)) > 1e-9:
            raise ConfigError("area_side: not divisible by grid_spacing")
        if (self.mode == "central") != (self.gs_grid_dim >= 1):
            raise ConfigError(
                "gs_grid_dim: central mode requires gs_grid_dim >= 1 and "
                "non-central modes require gs_grid_dim = 0"
            )
        if not self.spawn_window < self.duration:
            raise ConfigError("spawn_window: must be smaller than duration")
        if self.n_uas < 0:
            raise ConfigError("n_uas: must be non-negative")
        if self.max_speed <= 0:
            raise ConfigError("max_speed: must be positive")
        if self.duration <= 0:
            raise ConfigError("duration: must be positive")
        if self.sensor.range <= 0:
            raise ConfigError("sensor.range: must be positive")
        if not 0 < self.sensor.fov <= 360:
            raise ConfigError("sensor.fov: must lie in (0, 360]")
        if self.radio.data_rate <= 0:
            raise ConfigError("radio.data_rate: must be positive")
        if self.radio.path_loss_exponent <= 0:
            raise ConfigError("radio.path_loss_exponent: must be positive")
        lo, hi = self.route_duration_range
        if not 0 < lo <= hi:
            raise ConfigError("route_duration_range: need 0 < low <= high")
        if self.lem_ttl <= 0:
            raise ConfigError("lem_ttl: must be positive")
        for name in ("metrics_sample_period", "mobility_tick", "msg_check_period",
                     "backend_publish_period", "cam_meta_period"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive")
        if self.roi_radius is not None and self.roi_radius <= 0:
            raise ConfigError("roi_radius: must be positive or null")

    @property
    def n_gs(self) -> int:
        return self.gs_grid_dim * self.gs_grid_dim


_NESTED = {
    "sensor": SensorSpec,
    "radio": RadioParams,
    "triggers": TriggerThresholds,
    "wired": WiredParams,
}


def _build_nested(cls: type, doc: dict[str, Any], prefix: str) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown field {prefix}.{sorted(unknown)[0]}")
    return cls(**doc)


def config_from_dict(doc: dict[str, Any]) -> ScenarioConfig:
    """Build a validated config; absent fields take defaults, unknown fields error."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    doc = dict(doc)
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown field {sorted(unknown)[0]!r}")
    kwargs: dict[str, Any] = {}
    for name, cls in _NESTED.items():
        if name in doc:
            sub = doc.pop(name)
            if not isinstance(sub, dict):
                raise ConfigError(f"{name}: must be an object")
            kwargs[name] = _build_nested(cls, sub, name)
    if "route_duration_range" in doc:
        rng = doc.pop("route_duration_range")
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            raise ConfigError("route_duration_range: must be a [low, high] pair")
        kwargs["route_duration_range"] = (float(rng[0]), float(rng[1]))
    mode = doc.get("mode", "central")
    if "gs_grid_dim" not in doc:
        kwargs["gs_grid_dim"] = 9 if mode == "central" else 0
    kwargs.update(doc)
    try:
        cfg = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(text: str) -> ScenarioConfig:
    """Parse a JSON config document into a validated ScenarioConfig."""
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def apply_overrides(cfg: ScenarioConfig, overrides: dict[str, Any]) -> ScenarioConfig:
    """Apply dotted-key overrides (e.g. ``sensor.range``) on top of a config."""
    doc = config_to_dict(cfg)
    for key, value in overrides.items():
        parts = key.split(".")
        target = doc
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigError(f"unknown field {key!r}")
            target = target[part]
        target[parts[-1]] = value
    if "mode" in overrides and "gs_grid_dim" not in overrides:
        # keep the mode <-> ground-station coupling intact for lone mode flips
        if doc["mode"] != "central":
            doc["gs_grid_dim"] = 0
        elif doc["gs_grid_dim"] < 1:
            doc["gs_grid_dim"] = 9
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    doc: dict[str, Any] = {}
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if f.name in _NESTED:
            doc[f.name] = {sf.name: getattr(value, sf.name) for sf in fields(value)}
        elif f.name == "route_duration_range":
            doc[f.name] = list(value)
        else:
            doc[f.name] = value
    return doc


PRESETS: dict[str, dict[str, Any]] = {
    "paper": {},
    "small": {"n_uas": 50, "area_side": 2000.0, "gs_grid_dim": 5},
}


def preset_config(name: str, mode: str | None = None) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    doc = dict(PRESETS[name])
    if mode is not None:
        doc["mode"] = mode
        if mode != "central":
            doc["gs_grid_dim"] = 0
    return config_from_dict(doc)


@dataclass(frozen=True)
class GridNetwork:
    """Axis-aligned lattice of intersections spanning [0, side] x [0, side]."""

    side: float
    spacing: float

    @property
    def n_per_axis(self) -> int:
        return round(self.side / self.spacing) + 1

    def intersections(self) -> np.ndarray:
        axis = np.arange(self.n_per_axis) * self.spacing
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


def build_network(cfg: ScenarioConfig) -> GridNetwork:
    return GridNetwork(side=cfg.area_side, spacing=cfg.grid_spacing)


@dataclass
class Route:
    """Lattice walk along grid edges with precomputed cumulative arc length."""

    waypoints: list[tuple[float, float]]
    length: float = field(init=False)
    _cum: list[float] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        cum = [0.0]
        for (x0, y0), (x1, y1) in zip(self.waypoints, self.waypoints[1:]):
            cum.append(cum[-1] + math.hypot(x1 - x0, y1 - y0))
        self._cum = cum
        self.length = cum[-1]

    def pose_at(self, progress: float) -> tuple[float, float, float]:
        """Position and segment heading (degrees, east=0, ccw) at arc length."""
        progress = min(max(progress, 0.0), self.length)
        i = bisect.bisect_right(self._cum, progress) - 1
        i = min(i, len(self.waypoints) - 2)
        x0, y0 = self.waypoints[i]
        x1, y1 = self.waypoints[i + 1]
        seg = self._cum[i + 1] - self._cum[i]
        t = (progress - self._cum[i]) / seg if seg > 0 else 0.0
        heading = math.degrees(math.atan2(y1 - y0, x1 - x0)) % 360.0
        return x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, heading


@dataclass
class UasState:
    """Ground-truth state of one airborne node."""

    id: int
    position: tuple[float, float]
    speed: float
    heading: float
    acceleration: float
    route: Route
    route_progress: float
    alive: bool


def _lattice_walk(origin: tuple[float, float], n_edges: int, side: float,
                  spacing: float, rng: np.random.Generator) -> list[tuple[float, float]]:
    """Non-backtracking walk along grid edges, turning at the area boundary.

    The step kernel is symmetric, so a population of walkers started uniformly
    over the intersections stays (approximately) uniformly spread; routes
    through a central via point would pile traffic up in the middle instead.
    """
    steps = ((spacing, 0.0), (-spacing, 0.0), (0.0, spacing), (0.0, -spacing))
    path = [origin]
    x, y = origin
    back: tuple[float, float] | None = None
    for _ in range(n_edges):
        options = [s for s in steps
                   if s != back and 0.0 <= x + s[0] <= side and 0.0 <= y + s[1] <= side]
        dx, dy = options[rng.integers(len(options))]
        x, y = x + dx, y + dy
        path.append((x, y))
        back = (-dx, -dy)
    return path


def generate_routes(net: GridNetwork, cfg: ScenarioConfig,
                    rng: np.random.Generator) -> list[tuple[Route, float]]:
    """Routes with travel time in route_duration_range plus uniform spawn times.

    Origins are uniform over the intersections; each route is a lattice walk
    whose edge count is drawn uniformly from the counts compatible with the
    duration range (single shortest paths cannot reach the required length
    from interior origins of the default area).
    """
    nodes = net.intersections()
    lo, hi = cfg.route_duration_range
    min_edges = math.ceil(lo * cfg.max_speed / cfg.grid_spacing - 1e-9)
    max_edges = math.floor(hi * cfg.max_speed / cfg.grid_spacing + 1e-9)
    if min_edges > max_edges or max_edges < 1:
        raise RuntimeError(
            "route_duration_range admits no whole number of grid edges at "
            f"max_speed={cfg.max_speed} and grid_spacing={cfg.grid_spacing}"
        )
    min_edges = max(min_edges, 1)
    routes: list[tuple[Route, float]] = []
    for _ in range(cfg.n_uas):
        origin = tuple(nodes[rng.integers(len(nodes))])
        n_edges = int(rng.integers(min_edges, max_edges + 1))
        route = Route(waypoints=_lattice_walk(origin, n_edges, cfg.area_side,
                                              cfg.grid_spacing, rng))
        spawn_time = float(rng.uniform(0.0, cfg.spawn_window))
        routes.append((route, spawn_time))
    return routes


def place_ground_stations(dim: int, cfg: ScenarioConfig) -> list[tuple[float, float]]:
    """dim^2 stations on a uniform lattice spanning the area incl. boundary."""
    if dim <= 0:
        return []
    if dim == 1:
        c = cfg.area_side / 2.0
        return [(c, c)]
    step = cfg.area_side / (dim - 1)
    return [(i * step, j * step) for i in range(dim) for j in range(dim)]


def make_uas(uid: int, route: Route, max_speed: float) -> UasState:
    x, y, heading = route.pose_at(0.0)
    return UasState(id=uid, position=(x, y), speed=max_speed, heading=heading,
                    acceleration=0.0, route=route, route_progress=0.0, alive=True)


def advance(u: UasState, dt: float) -> UasState:
    """Move along the route polyline at constant speed; despawn at route end."""
    u.route_progress += u.speed * dt
    if u.route_progress >= u.route.length:
        u.route_progress = u.route.length
        x, y, heading = u.route.pose_at(u.route_progress)
        u.position = (x, y)
        u.heading = heading
        u.alive = False
        return u
    x, y, heading = u.route.pose_at(u.route_progress)
    u.position = (x, y)
    u.heading = heading
    return u


def derive_mode_config(cfg: ScenarioConfig, mode: str) -> ScenarioConfig:
    """Same scenario under another coordination mode (identical seed/routes)."""
    gs_dim = cfg.gs_grid_dim if mode == "central" else 0
    if mode == "central" and gs_dim == 0:
        gs_dim = 9
    out = replace(cfg, mode=mode, gs_grid_dim=gs_dim)
    out.validate()
    return out
