"""Run metrics: awareness ratio, channel load, message and payload accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .perception import LemStore

CLASSES = ("cam", "cpm", "gs_cpm", "uplink", "downlink")
CLS_CAM, CLS_CPM, CLS_GS_CPM, CLS_UPLINK, CLS_DOWNLINK = range(5)

OUTPUT_FILES = ("ear.csv", "channel_load.csv", "messages.csv", "payloads.csv",
                "delays.csv", "summary.csv")


@dataclass(frozen=True)
class EarSample:
    time_us: int
    observer: str
    known: int
    active: int
    ear: float | None


@dataclass(frozen=True)
class DelayRecord:
    observer: str
    target: str
    first_known_us: int | None
    window_start_us: int

    @property
    def delay_s(self) -> float | None:
        if self.first_known_us is None:
            return None
        return (self.first_known_us - self.window_start_us) / 1e6


class MetricsRecorder:
    """Accumulates per-run observables; CSV emission happens after the run."""

    def __init__(self, n_uas: int, n_gs: int, has_backend: bool,
                 duration_us: int) -> None:
        self.n_uas = n_uas
        self.n_gs = n_gs
        self.has_backend = has_backend
        self.duration_us = duration_us
        n_rows = n_uas + n_gs + 1  # trailing row: the backend service
        self.backend_row = n_rows - 1
        n_cls = len(CLASSES)
        self.tx = np.zeros((n_rows, n_cls), dtype=np.int64)
        self.rx = np.zeros((n_rows, n_cls), dtype=np.int64)
        self.dropped = np.zeros((n_rows, n_cls), dtype=np.int64)
        self.payload_stats = {}  # class idx -> [min, max, total, count]
        self.gap_last = np.full((n_rows, n_cls), -1, dtype=np.int64)
        self.gap_min = np.full((n_rows, n_cls), np.iinfo(np.int64).max, dtype=np.int64)
        self.gap_max = np.zeros((n_rows, n_cls), dtype=np.int64)
        self.spawn_us = np.full(n_uas, -1, dtype=np.int64)
        self.despawn_us = np.full(n_uas, -1, dtype=np.int64)
        self.ear_samples: list[tuple[int, np.ndarray, np.ndarray, int | None, int]] = []
        self.cbr_samples: list[tuple[int, np.ndarray, np.ndarray]] = []

    def node_name(self, idx: int) -> str:
        if idx < self.n_uas:
            return f"uas-{idx}"
        if idx < self.n_uas + self.n_gs:
            return f"gs-{idx - self.n_uas}"
        return "backend"

    def note_spawn(self, uid: int, now_us: int) -> None:
        self.spawn_us[uid] = now_us

    def note_despawn(self, uid: int, now_us: int) -> None:
        self.despawn_us[uid] = now_us

    def record_tx(self, node: int, cls: int, n_bytes: int, now_us: int) -> None:
        self.tx[node, cls] += 1
        stats = self.payload_stats.get(cls)
        if stats is None:
            self.payload_stats[cls] = [n_bytes, n_bytes, n_bytes, 1]
        else:
            if n_bytes < stats[0]:
                stats[0] = n_bytes
            if n_bytes > stats[1]:
                stats[1] = n_bytes
            stats[2] += n_bytes
            stats[3] += 1
        last = self.gap_last[node, cls]
        if last >= 0:
            gap = now_us - last
            if gap < self.gap_min[node, cls]:
                self.gap_min[node, cls] = gap
            if gap > self.gap_max[node, cls]:
                self.gap_max[node, cls] = gap
        self.gap_last[node, cls] = now_us

    def record_rx_many(self, nodes: np.ndarray, cls: int) -> None:
        if len(nodes):
            self.rx[nodes, cls] += 1  # indices are unique per frame

    def record_rx(self, node: int, cls: int, count: int = 1) -> None:
        self.rx[node, cls] += count

    def record_drop(self, node: int, cls: int) -> None:
        self.dropped[node, cls] += 1

    def sample(self, now_us: int, alive_idx: np.ndarray, known: np.ndarray,
               backend_known: int | None, n_active: int,
               cbr_nodes: np.ndarray, cbr_values: np.ndarray) -> None:
        self.ear_samples.append((now_us, alive_idx.copy(), known.copy(),
                                 backend_known, n_active))
        self.cbr_samples.append((now_us, cbr_nodes.copy(), cbr_values.copy()))

    # -- aggregation ------------------------------------------------------

    def ear_rows(self):
        """Materialized per-observer awareness samples (small runs only)."""
        for t_us, alive_idx, known, backend_known, n_active in self.ear_samples:
            for idx, k in zip(alive_idx, known):
                denom = n_active - 1
                yield EarSample(int(t_us), self.node_name(int(idx)), int(k), denom,
                                k / denom if denom > 0 else None)
            if backend_known is not None:
                yield EarSample(int(t_us), "backend", int(backend_known), n_active,
                                backend_known / n_active if n_active else None)

    def ear_series(self, observer: str = "uas") -> np.ndarray:
        """(time_s, ear) rows pooled over UAS observers, or the backend trace."""
        rows = []
        for t_us, alive_idx, known, backend_known, n_active in self.ear_samples:
            if observer == "backend":
                if backend_known is not None and n_active > 0:
                    rows.append((t_us / 1e6, backend_known / n_active))
            elif n_active > 1:
                rows.append((t_us / 1e6, float(known.mean()) / (n_active - 1)))
        return np.array(rows) if rows else np.empty((0, 2))

    def summarize(self) -> dict[str, tuple[float, float, float]]:
        """Per-metric (avg, max, min) rows as written to summary.csv."""
        out: dict[str, tuple[float, float, float]] = {}
        uas_vals: list[float] = []
        backend_vals: list[float] = []
        for _, _, known, backend_known, n_active in self.ear_samples:
            if n_active > 1:
                uas_vals.extend(known / (n_active - 1))
            if backend_known is not None and n_active > 0:
                backend_vals.append(backend_known / n_active)
        if uas_vals:
            arr = np.array(uas_vals)
            out["ear_uas"] = (float(arr.mean()), float(arr.max()), float(arr.min()))
        if backend_vals:
            arr = np.array(backend_vals)
            out["ear_backend"] = (float(arr.mean()), float(arr.max()), float(arr.min()))

        uas_cbr: list[np.ndarray] = []
        gs_cbr: list[np.ndarray] = []
        for _, nodes, values in self.cbr_samples:
            is_uas = nodes < self.n_uas
            uas_cbr.append(values[is_uas])
            gs_cbr.append(values[~is_uas])
        for name, chunks in (("cbr_uas", uas_cbr), ("cbr_gs", gs_cbr)):
            if chunks:
                arr = np.concatenate(chunks)
                if len(arr):
                    out[name] = (float(arr.mean()), float(arr.max()), float(arr.min()))

        def payload_row(indices: tuple[int, ...]) -> tuple[float, float, float] | None:
            mins, maxs, total, count = [], [], 0, 0
            for cls in indices:
                stats = self.payload_stats.get(cls)
                if stats:
                    mins.append(stats[0])
                    maxs.append(stats[1])
                    total += stats[2]
                    count += stats[3]
            if not count:
                return None
            return (total / count, float(max(maxs)), float(min(mins)))

        for name, indices in (("payload_uas", (CLS_CAM, CLS_CPM)),
                              ("payload_cam", (CLS_CAM,)),
                              ("payload_cpm", (CLS_CPM,)),
                              ("payload_gs", (CLS_GS_CPM,))):
            row = payload_row(indices)
            if row is not None:
                out[name] = row

        # broadcast message counts only; wired forwards are accounted per class
        spawned = self.spawn_us >= 0
        if spawned.any():
            totals = (self.tx[:self.n_uas, CLS_CAM] +
                      self.tx[:self.n_uas, CLS_CPM])[spawned].astype(float)
            out["messages_uas"] = (float(totals.mean()), float(totals.max()),
                                   float(totals.min()))
        if self.n_gs:
            totals = self.tx[self.n_uas:self.n_uas + self.n_gs, CLS_GS_CPM].astype(float)
            out["messages_gs"] = (float(totals.mean()), float(totals.max()),
                                  float(totals.min()))
        return out

    # -- CSV emission -----------------------------------------------------

    def write_outputs(self, directory: str | Path, store: LemStore) -> dict[str, Path]:
        out_dir = Path(directory)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            paths = {
                "ear": self._write_ear(out_dir / "ear.csv"),
                "channel_load": self._write_cbr(out_dir / "channel_load.csv"),
                "messages": self._write_messages(out_dir / "messages.csv"),
                "payloads": self._write_payloads(out_dir / "payloads.csv"),
                "delays": self._write_delays(out_dir / "delays.csv", store),
                "summary": self._write_summary(out_dir / "summary.csv"),
            }
        except OSError as exc:
            raise OSError(f"failed writing outputs under {out_dir}: {exc}") from exc
        return paths

    def _write_ear(self, path: Path) -> Path:
        lines = ["time_s,observer,known,active,ear"]
        for t_us, alive_idx, known, backend_known, n_active in self.ear_samples:
            t = t_us / 1e6
            for idx, k in zip(alive_idx, known):
                denom = n_active - 1
                ear = f"{k / denom:.6f}" if denom > 0 else ""
                lines.append(f"{t:.6f},{self.node_name(int(idx))},{int(k)},{denom},{ear}")
            if backend_known is not None:
                ear = f"{backend_known / n_active:.6f}" if n_active > 0 else ""
                lines.append(f"{t:.6f},backend,{int(backend_known)},{n_active},{ear}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def _write_cbr(self, path: Path) -> Path:
        lines = ["time_s,node,cbr"]
        for t_us, nodes, values in self.cbr_samples:
            t = t_us / 1e6
            lines.extend(f"{t:.6f},{self.node_name(int(n))},{v:.6f}"
                         for n, v in zip(nodes, values))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def _write_messages(self, path: Path) -> Path:
        lines = ["node,class,tx,rx,dropped"]
        n_rows = self.tx.shape[0]
        for node in range(n_rows):
            for cls, cls_name in enumerate(CLASSES):
                tx, rx, dr = (int(self.tx[node, cls]), int(self.rx[node, cls]),
                              int(self.dropped[node, cls]))
                if tx or rx or dr:
                    lines.append(f"{self.node_name(node)},{cls_name},{tx},{rx},{dr}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def _write_payloads(self, path: Path) -> Path:
        lines = ["class,min_bytes,avg_bytes,max_bytes"]
        for cls, cls_name in enumerate(CLASSES):
            stats = self.payload_stats.get(cls)
            if stats:
                lines.append(f"{cls_name},{stats[0]},{stats[2] / stats[3]:.6f},{stats[1]}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def _coexistence_end(self, uid: int) -> int:
        d = self.despawn_us[uid]
        return int(d) if d >= 0 else self.duration_us

    def detection_delays(self, store: LemStore) -> list[DelayRecord]:
        """First-detection delay per (observer, target) pair that co-existed."""
        rows: list[DelayRecord] = []
        spawned = np.nonzero(self.spawn_us >= 0)[0]
        first = store.first_seen
        for obs in spawned:
            obs_spawn = self.spawn_us[obs]
            obs_end = self._coexistence_end(int(obs))
            for tgt in spawned:
                if tgt == obs:
                    continue
                start = int(max(obs_spawn, self.spawn_us[tgt]))
                if start >= min(obs_end, self._coexistence_end(int(tgt))):
                    continue
                f = int(first[obs, tgt])
                rows.append(DelayRecord(self.node_name(int(obs)),
                                        self.node_name(int(tgt)),
                                        f if f >= 0 else None, start))
        if self.has_backend:
            for tgt in spawned:
                f = int(first[store.n_observers - 1, tgt])
                rows.append(DelayRecord("backend", self.node_name(int(tgt)),
                                        f if f >= 0 else None,
                                        int(self.spawn_us[tgt])))
        return rows

    def _write_delays(self, path: Path, store: LemStore) -> Path:
        lines = ["observer,target,delay_s"]
        for row in self.detection_delays(store):
            delay = f"{row.delay_s:.6f}" if row.first_known_us is not None else ""
            lines.append(f"{row.observer},{row.target},{delay}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def _write_summary(self, path: Path) -> Path:
        lines = ["metric,avg,max,min"]
        for name, (avg, mx, mn) in self.summarize().items():
            lines.append(f"{name},{avg:.6f},{mx:.6f},{mn:.6f}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def read_summary(path: str | Path) -> dict[str, tuple[float, float, float]]:
    """Parse a summary.csv back into {metric: (avg, max, min)}."""
    out: dict[str, tuple[float, float, float]] = {}
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    for line in text[1:]:
        name, avg, mx, mn = line.split(",")
        out[name] = (float(avg), float(mx), float(mn))
    return out


def gap_bounds_s(rec: MetricsRecorder, cls: int) -> tuple[float, float]:
    """(smallest, largest) observed inter-transmission gap for a message class."""
    mins = rec.gap_min[:, cls]
    maxs = rec.gap_max[:, cls]
    valid = mins < np.iinfo(np.int64).max
    if not valid.any():
        return (math.inf, 0.0)
    return (float(mins[valid].min()) / 1e6, float(maxs.max()) / 1e6)
