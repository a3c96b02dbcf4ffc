"""Acceptance suite: banded quantitative targets plus strict property checks.

Quantitative checks run the full-scale preset seed-averaged over five seeds;
property checks run at desk scale. Each check prints one PASS/FAIL line.
"""

from __future__ import annotations

import filecmp
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_config
from oracles import replay_ear_from_log
from test_radio import run_conservation_cases
from uamcp.engine import to_us
from uamcp.metrics import (CLS_CAM, CLS_CPM, CLS_GS_CPM, OUTPUT_FILES,
                           MetricsRecorder, gap_bounds_s)
from uamcp.radio import airtime_s, max_range
from uamcp.scenario import (RadioParams, Route, config_from_dict,
                            derive_mode_config, preset_config)
from uamcp.simulation import run_simulation

SEEDS = (1, 2, 3, 4, 5)
SWEEP_COUNTS = (0, 25, 36, 49, 64, 81, 100, 121, 144, 169, 196, 225)
MODES = ("local", "ca", "cp", "ca_cp", "central")


def check(num: int, description: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] A{num}: {description}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def run_stats(cfg):
    result = run_simulation(cfg)
    rec: MetricsRecorder = result.metrics
    gaps = {cls: gap_bounds_s(rec, cls) for cls in (CLS_CAM, CLS_CPM, CLS_GS_CPM)}
    return result.metrics.summarize(), gaps


@pytest.fixture(scope="session")
def study():
    """Seed-averaged full-scale results for the five coordination modes."""
    base = config_from_dict({})
    raw = {}
    for seed in SEEDS:
        for mode in MODES:
            cfg = replace(derive_mode_config(base, mode), seed=seed)
            raw[(mode, seed)] = run_stats(cfg)
    means: dict[str, dict[str, float]] = {}
    for mode in MODES:
        acc: dict[str, list[float]] = {}
        for seed in SEEDS:
            summary, _ = raw[(mode, seed)]
            for key, (avg, mx, mn) in summary.items():
                acc.setdefault(key + "_avg", []).append(avg)
                acc.setdefault(key + "_max", []).append(mx)
        means[mode] = {k: float(np.mean(v)) for k, v in acc.items()}
    return raw, means


@pytest.fixture(scope="session")
def sweep():
    """Seed-averaged gateway-count sweep of the hybrid mode."""
    base = config_from_dict({})
    raw = {}
    for seed in SEEDS:
        for count in SWEEP_COUNTS:
            if count == 0:
                cfg = derive_mode_config(base, "ca_cp")
            else:
                cfg = replace(base, gs_grid_dim=round(math.sqrt(count)))
            raw[(count, seed)] = run_stats(replace(cfg, seed=seed))
    means = {}
    for count in SWEEP_COUNTS:
        acc: dict[str, list[float]] = {}
        for seed in SEEDS:
            summary, _ = raw[(count, seed)]
            for key, (avg, mx, mn) in summary.items():
                acc.setdefault(key + "_avg", []).append(avg)
        means[count] = {k: float(np.mean(v)) for k, v in acc.items()}
    return raw, means


def test_a1_mode_ordering(study):
    _, means = study
    e = {mode: means[mode]["ear_uas_avg"] for mode in MODES}
    backend = means["central"]["ear_backend_avg"]
    ordered = (e["local"] < e["ca"] < e["cp"] and
               e["cp"] <= e["central"] < backend)
    close = abs(e["ca_cp"] - e["cp"]) <= 0.05
    detail = (f"local={e['local']:.3f} ca={e['ca']:.3f} cp={e['cp']:.3f} "
              f"ca_cp={e['ca_cp']:.3f} central={e['central']:.3f} backend={backend:.3f}")
    check(1, "avg awareness ordered local<ca<cp<=central-uas<backend and "
             "|ca_cp-cp|<=5pp", ordered and close, detail)


def test_a2_band_targets(study):
    _, means = study
    local = means["local"]["ear_uas_avg"]
    backend = means["central"]["ear_backend_avg"]
    central_uas = means["central"]["ear_uas_avg"]
    ok = 0.02 <= local <= 0.07 and backend >= 0.95 and 0.50 <= central_uas <= 0.85
    check(2, "awareness bands: local in [2,7]%, backend >= 95%, "
             "central-uas in [50,85]%",
          ok, f"local={local:.4f} backend={backend:.4f} central_uas={central_uas:.4f}")


def test_a3_channel_load(study):
    _, means = study
    c = {mode: means[mode].get("cbr_uas_avg", 0.0) for mode in MODES}
    ordered = (c["local"] < c["ca"] < c["cp"] <= c["ca_cp"] <= c["central"])
    bands = 0.01 <= c["ca"] <= 0.08 and 0.10 <= c["central"] <= 0.30
    detail = " ".join(f"{m}={c[m]:.4f}" for m in MODES)
    check(3, "channel load ordered local<ca<cp<=ca_cp<=central with ca in "
             "[1,8]% and central in [10,30]%", ordered and bands, detail)


def test_a4_gs_sweep(sweep):
    raw, means = sweep
    backend_ok = all(means[count]["ear_backend_avg"] >= 0.95
                     for count in SWEEP_COUNTS if count >= 25)
    cbr = [means[count]["cbr_uas_avg"] for count in SWEEP_COUNTS]
    monotone_ok = all(b >= a - 0.01 for a, b in zip(cbr, cbr[1:]))
    min_gap = math.inf
    max_cam_gap = 0.0
    max_other_gap = 0.0
    for (_count, _seed), (_summary, gaps) in raw.items():
        for cls, (lo, hi) in gaps.items():
            min_gap = min(min_gap, lo)
            if cls == CLS_CAM:
                max_cam_gap = max(max_cam_gap, hi)
            else:
                max_other_gap = max(max_other_gap, hi)
    rate_ok = (min_gap >= 0.1 - 1e-9 and max_cam_gap <= 1.101
               and max_other_gap <= 1.101)
    detail = (f"backend_min={min(means[c]['ear_backend_avg'] for c in SWEEP_COUNTS if c >= 25):.4f} "
              f"cbr={['%.3f' % v for v in cbr]} min_gap={min_gap:.3f} "
              f"max_gaps=({max_cam_gap:.3f},{max_other_gap:.3f})")
    check(4, "sweep: backend >= 95% from 25 gateways, load non-decreasing "
             "within 1pp, rates within 1-10 Hz", backend_ok and monotone_ok and rate_ok,
          detail)


def test_a5_payload_model(study):
    raw, _means = study
    # exact size sets recorded on air at desk scale
    cam_run = run_simulation(tiny_config("ca", duration=20.0), record_frames=True)
    cam_sizes = {rec.payload_len for rec in cam_run.channel.frame_records}
    cam_ok = cam_sizes == {41, 103}
    cp_run = run_simulation(tiny_config("cp", duration=20.0), record_frames=True)
    cpm_ok = all((rec.payload_len - 46) % 29 == 0 and rec.payload_len >= 46
                 for rec in cp_run.channel.frame_records)
    central_run = run_simulation(tiny_config("central", duration=20.0),
                                 record_frames=True)
    n = central_run.cfg.n_uas
    gs_ok = all((rec.payload_len - 46) % 29 == 0
                for rec in central_run.channel.frame_records if rec.sender >= n)
    gs_max_ok = True
    gs_maxima = []
    for seed in SEEDS:
        summary, _ = raw[("central", seed)]
        gs_max = summary["payload_gs"][1]
        gs_maxima.append(gs_max)
        gs_max_ok &= 5400 <= gs_max <= 5846
    check(5, "payloads: cam sizes {41,103}, cpm = 46+29n, gateway max in "
             "[5400,5846] B", cam_ok and cpm_ok and gs_ok and gs_max_ok,
          f"cam={sorted(cam_sizes)} gs_max={gs_maxima}")


def test_a6_detection_delay():
    base = config_from_dict({"n_uas": 10})
    worst = 0.0
    best = math.inf
    missing = 0
    for seed in SEEDS:
        cfg = replace(base, seed=seed)
        result = run_simulation(cfg)
        rec = result.metrics
        airtime = airtime_s(46 + 29 * cfg.n_uas, cfg.radio)
        bound = 2.0 + 2.0 * (airtime + cfg.wired.latency) + cfg.mobility_tick
        duration_us = to_us(cfg.duration)
        first = result.store.first_seen
        spawned = np.nonzero(rec.spawn_us >= 0)[0]
        for obs in list(spawned) + [cfg.n_uas]:
            obs_spawn = 0 if obs == cfg.n_uas else rec.spawn_us[obs]
            obs_end = duration_us if obs == cfg.n_uas else (
                rec.despawn_us[obs] if rec.despawn_us[obs] >= 0 else duration_us)
            for tgt in spawned:
                if tgt == obs:
                    continue
                start = max(obs_spawn, rec.spawn_us[tgt])
                end = min(obs_end, rec.despawn_us[tgt]
                          if rec.despawn_us[tgt] >= 0 else duration_us)
                if start >= end:
                    continue
                f = first[obs, tgt]
                if f < 0:
                    # only a window shorter than the pipeline bound excuses a miss
                    if (end - start) / 1e6 > bound:
                        missing += 1
                    continue
                delay = (f - start) / 1e6
                worst = max(worst, delay)
                best = min(best, delay)
    ok = worst <= bound and best >= 0.0 and missing == 0
    check(6, "uncongested 10-node central path: p100 delay within bound, p0 >= 0",
          ok, f"p100={worst:.3f}s bound={bound:.3f}s p0={best:.3f}s missed={missing}")


def test_a7_cache_semantics():
    # age bound: replaying the event log admits only entries younger than the
    # cache lifetime, and the live samples must agree exactly
    cfg = tiny_config("central", seed=33)
    result = run_simulation(replace(cfg, duration=25.0), record_events=True)
    oracle = replay_ear_from_log(result.store.log, cfg.n_uas, to_us(cfg.lem_ttl))
    age_ok = len(oracle) == len(result.metrics.ear_samples)
    for (t_o, _alive, known_o, backend_o), (t_s, alive_idx, known, backend_known,
                                            _n) in zip(oracle, result.metrics.ear_samples):
        age_ok &= t_o == t_s and backend_o == backend_known
        age_ok &= all(known_o[int(i)] == int(k) for i, k in zip(alive_idx, known))

    # scripted early despawn: the ratio exceeds 100 % for at most one lifetime
    def straight(x0, n_edges):
        return Route(waypoints=[(x0 + 500.0 * q, 1000.0) for q in range(n_edges + 1)])

    s_cfg = tiny_config("local", n_uas=3, duration=30.0, spawn_window=1.0,
                        area_side=4000.0)
    routes = [(straight(0.0, 7), 0.0), (straight(500.0, 2), 0.0),
              (straight(900.0, 7), 0.0)]
    s_result = run_simulation(s_cfg, routes=routes)
    t_dead = min(t for t in s_result.metrics.despawn_us if t >= 0)
    over = [t for t, alive_idx, known, _b, n_active in s_result.metrics.ear_samples
            if n_active == 2 and 0 in alive_idx.tolist()
            and dict(zip(alive_idx.tolist(), known.tolist()))[0] / (n_active - 1) > 1.0]
    overhang_ok = (bool(over) and min(over) >= t_dead
                   and max(over) <= t_dead + to_us(s_cfg.lem_ttl) + to_us(0.101))
    check(7, "cache ages never exceed 1.1 s; despawn overhang lasts at most 1.1 s",
          age_ok and overhang_ok,
          f"overhang={(max(over) - t_dead) / 1e6 if over else -1:.2f}s")


def test_a8_determinism(tmp_path):
    cfg = preset_config("small")
    run_simulation(cfg, out_dir=tmp_path / "a")
    run_simulation(cfg, out_dir=tmp_path / "b")
    same = all(filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name,
                           shallow=False) for name in OUTPUT_FILES)
    check(8, "identical config+seed give byte-identical outputs", same)


def test_a9_awareness_oracle():
    cfg = preset_config("small")
    result = run_simulation(cfg, record_events=True)
    oracle = replay_ear_from_log(result.store.log, cfg.n_uas, to_us(cfg.lem_ttl))
    samples = result.metrics.ear_samples
    ok = len(oracle) == len(samples)
    mismatches = 0
    for (t_o, alive_o, known_o, backend_o), (t_s, alive_idx, known, backend_known,
                                             n_active) in zip(oracle, samples):
        if t_o != t_s or alive_o != set(alive_idx.tolist()):
            mismatches += 1
            continue
        if backend_o != backend_known:
            mismatches += 1
        for i, k in zip(alive_idx, known):
            if known_o[int(i)] != int(k):
                mismatches += 1
    check(9, "brute-force replay of the event log matches every sample exactly",
          ok and mismatches == 0, f"samples={len(samples)} mismatches={mismatches}")


def test_a10_frame_conservation():
    run_conservation_cases(1000, seed=20250810)
    check(10, "per-frame receiver accounting reconciles with the geometry "
              "oracle for 1000 random configurations", True)


def test_a11_trigger_rules():
    from oracles import cam_due_reference
    from uamcp.messages import cam_due
    from uamcp.scenario import TriggerThresholds

    th = TriggerThresholds()
    rng = np.random.default_rng(99)
    failures = 0
    for _ in range(4000):
        if rng.random() < 0.1:
            last = None
        else:
            last = (float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50)),
                    float(rng.uniform(0, 80)), float(rng.uniform(0, 360)))
        # mix smooth values with exact threshold boundaries
        dx = float(rng.choice([0.0, 2.0, 4.0, 4.0001, 6.0, rng.uniform(0, 8)]))
        cur = ((last[0] + dx, last[1], last[2] + float(rng.choice([0.0, 0.5, 0.50001, 1.0])),
                (last[3] + float(rng.choice([0.0, 4.0, 4.0001, 10.0]))) % 360.0)
               if last is not None else
               (float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50)),
                float(rng.uniform(0, 80)), float(rng.uniform(0, 360))))
        elapsed = float(rng.choice([0.0, 0.05, 0.1, 0.5, 0.99999, 1.0, 1.5]))
        dcc_min = float(rng.choice([0.1, 0.2, 0.4, 0.5, 1.0]))
        last_row = None if last is None else np.array(
            [last[0], last[1], last[2], last[3], 0.0])
        cur_row = np.array([cur[0], cur[1], cur[2], cur[3], 0.0])
        got = cam_due(last_row, cur_row, elapsed, dcc_min, th)
        if got != cam_due_reference(last, cur, elapsed, dcc_min, th):
            failures += 1
        if got and not cam_due(last_row, cur_row, elapsed + 1.0, dcc_min, th):
            failures += 1  # monotone in elapsed
    check(11, "randomized kinematics match the reference trigger predicate "
              "and stay monotone", failures == 0, f"failures={failures}")


def test_a12_degeneracy(tmp_path):
    from uamcp.cli import main
    small = ["--preset", "small", "--seed", "1"]
    assert main(["gs-sweep", *small, "--gs-counts", "0",
                 "-o", str(tmp_path / "sweep")]) == 0
    assert main(["run", *small, "--set", "mode=ca_cp",
                 "-o", str(tmp_path / "run")]) == 0
    identical = all(filecmp.cmp(tmp_path / "sweep" / "gs0" / name,
                                tmp_path / "run" / "ca_cp" / name, shallow=False)
                    for name in OUTPUT_FILES)

    ideal = preset_config("small", mode="local")
    ideal = replace(ideal, sensor=replace(ideal.sensor, range=1e12, fov=360.0))
    result = run_simulation(ideal)
    despawns = [int(t) for t in result.metrics.despawn_us if t >= 0]
    ttl = to_us(ideal.lem_ttl)
    full = True
    for t_us, _alive, known, _b, n_active in result.metrics.ear_samples:
        if n_active < 2:
            continue
        overhang = any(0 <= t_us - d <= ttl + to_us(0.101) for d in despawns)
        for k in known:
            ear = k / (n_active - 1)
            full &= ear >= 1.0 if overhang else ear == 1.0
    check(12, "0-gateway sweep equals the ca_cp mode; ideal sensing yields "
              "full awareness", identical and full)


def test_a13_decode_range_band():
    d = max_range(RadioParams())
    check(13, "default decode range lands at several hundred meters",
          300.0 <= d <= 900.0, f"range={d:.1f} m")
