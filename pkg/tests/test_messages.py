from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cam_due_reference
from uamcp.engine import to_us
from uamcp.messages import (CAM_BASE_BYTES, CAM_LF_BYTES, CPM_BASE_BYTES,
                            CPM_OBJECT_BYTES, Cam, Cpm, StationMeta, cam_due,
                            heading_delta, on_receive, select_due_objects)
from uamcp.perception import Lem, LemStore, KinematicsDto
from uamcp.scenario import TriggerThresholds

TH = TriggerThresholds()


def row(x=0.0, y=0.0, speed=70.0, heading=0.0, acc=0.0):
    return np.array([x, y, speed, heading, acc], dtype=np.float64)


def make_cam(sender=1, lf=True, ts=0, **kw):
    return Cam(sender=sender, kin_row=row(**kw), ts_us=ts,
               lf_container_present=lf,
               meta=StationMeta(public_id=sender, station_type="uas") if lf else None,
               generation_time_us=ts)


def make_cpm(sender=1, objects=(), ts=0, from_gs=False, **kw):
    ids = np.array([o for o, _ in objects], dtype=np.int64)
    kins = (np.stack([k for _, k in objects])
            if objects else np.empty((0, 5), dtype=np.float64))
    return Cpm(sender=sender, sender_kin_row=row(**kw), sender_ts_us=ts,
               object_ids=ids, object_kin=kins,
               object_ts=np.full(len(ids), ts, dtype=np.int64),
               generation_time_us=ts, from_gs=from_gs)


def test_cam_sizes():
    assert make_cam(lf=False).size_bytes == 41
    assert make_cam(lf=True).size_bytes == 103
    assert CAM_BASE_BYTES + CAM_LF_BYTES == 103


def test_cpm_size_model():
    assert make_cpm().size_bytes == 46
    assert make_cpm(objects=[(2, row())]).size_bytes == 75
    objs = [(i, row()) for i in range(2, 33)]
    assert make_cpm(objects=objs).size_bytes == 945  # 31 objects
    assert CPM_BASE_BYTES + CPM_OBJECT_BYTES * 200 == 5846


def test_cam_due_silence_timeout():
    last = row()
    assert cam_due(last, last.copy(), elapsed_s=1.001, dcc_min_s=0.1, th=TH)
    assert not cam_due(last, last.copy(), elapsed_s=0.999, dcc_min_s=0.1, th=TH)


def test_cam_due_all_below_thresholds():
    last = row()
    cur = row(x=3.0 * math.cos(0.3), y=3.0 * math.sin(0.3), speed=70.2, heading=2.0)
    assert not cam_due(last, cur, elapsed_s=0.5, dcc_min_s=0.1, th=TH)


def test_cam_due_dcc_gate_dominates():
    last = row()
    cur = row(heading=5.0)
    assert not cam_due(last, cur, elapsed_s=0.15, dcc_min_s=0.2, th=TH)
    assert cam_due(last, cur, elapsed_s=0.25, dcc_min_s=0.2, th=TH)


def test_cam_due_first_message():
    assert cam_due(None, row(), elapsed_s=math.inf, dcc_min_s=0.1, th=TH)
    assert not cam_due(None, row(), elapsed_s=0.05, dcc_min_s=0.1, th=TH)


def test_heading_delta_wraps():
    assert heading_delta(359.0, 2.0) == pytest.approx(3.0)
    assert heading_delta(10.0, 350.0) == pytest.approx(20.0)
    cur = row(heading=2.0)
    last = row(heading=359.0)
    assert not cam_due(last, cur, elapsed_s=0.5, dcc_min_s=0.1, th=TH)  # 3 deg
    assert cam_due(row(heading=355.0), cur, elapsed_s=0.5, dcc_min_s=0.1, th=TH)


@settings(max_examples=300)
@given(
    st.one_of(st.none(), st.tuples(st.floats(-100, 100), st.floats(-100, 100),
                                   st.floats(0, 80), st.floats(0, 360))),
    st.tuples(st.floats(-100, 100), st.floats(-100, 100),
              st.floats(0, 80), st.floats(0, 360)),
    st.floats(0, 2.0),
    st.sampled_from([0.1, 0.2, 0.4, 0.5, 1.0]),
)
def test_cam_due_matches_reference_predicate(last, cur, elapsed, dcc_min):
    last_row = None if last is None else row(x=last[0], y=last[1], speed=last[2],
                                             heading=last[3])
    cur_row = row(x=cur[0], y=cur[1], speed=cur[2], heading=cur[3])
    got = cam_due(last_row, cur_row, elapsed, dcc_min, TH)
    want = cam_due_reference(last, cur, elapsed, dcc_min, TH)
    assert got == want
    # monotone in elapsed time for identical kinematics
    if got:
        assert cam_due(last_row, cur_row, elapsed + 0.7, dcc_min, TH)


def test_select_due_objects_rules():
    n = 8
    last_ts = np.full(n, -1, dtype=np.int64)
    last_kin = np.zeros((n, 5))
    now = to_us(10.0)
    ids = np.array([1, 2, 3], dtype=np.int64)
    cur = np.stack([row(x=10), row(x=20), row(x=30)])
    # never included: all due
    assert select_due_objects(ids, cur, last_ts, last_kin, now, TH).tolist() == [True] * 3

    # object 1 included 0.3 s ago having moved 2 m: not due
    last_ts[1] = now - to_us(0.3)
    last_kin[1] = row(x=8.0)
    # object 2 included 1.05 s ago, unchanged: due again (silence)
    last_ts[2] = now - to_us(1.05)
    last_kin[2] = row(x=20)
    # object 3 included 0.3 s ago but moved 5 m: due (position delta)
    last_ts[3] = now - to_us(0.3)
    last_kin[3] = row(x=25)
    due = select_due_objects(ids, cur, last_ts, last_kin, now, TH)
    assert due.tolist() == [False, True, True]
    assert select_due_objects(np.empty(0, dtype=np.int64), np.empty((0, 5)),
                              last_ts, last_kin, now, TH).tolist() == []


def lem_for(owner=0, n=8):
    store = LemStore(n + 1, n, to_us(1.1))
    return Lem(store, row=owner, owner_id=owner)


def test_on_receive_cam_upserts_sender():
    lem = lem_for(owner=0)
    on_receive(lem, make_cam(sender=2, ts=500), now_us=500)
    entry = lem.entry(2)
    assert entry is not None and entry.sources == {"ca"}


def test_on_receive_cpm_upserts_sender_and_objects():
    lem = lem_for(owner=0)
    cpm = make_cpm(sender=2, objects=[(3, row(x=9.0))], ts=100)
    on_receive(lem, cpm, now_us=100)
    assert {e.object_id for e in lem.snapshot(100)} == {2, 3}
    assert lem.entry(2).sources == {"cp"}
    assert lem.entry(3).sources == {"cp"}


def test_on_receive_ignores_own_entry():
    lem = lem_for(owner=0)
    cpm = make_cpm(sender=2, objects=[(0, row()), (4, row())], ts=100)
    on_receive(lem, cpm, now_us=100)
    assert {e.object_id for e in lem.snapshot(100)} == {2, 4}
    assert lem.store.own_rejected[0] == 1


def test_on_receive_gs_cpm_tags_backend_source():
    lem = lem_for(owner=0)
    cpm = make_cpm(sender=10_000, objects=[(5, row()), (6, row())], ts=100,
                   from_gs=True)
    on_receive(lem, cpm, now_us=100)
    assert {e.object_id for e in lem.snapshot(100)} == {5, 6}
    assert lem.entry(5).sources == {"backend"}


def test_cpm_objects_materialize_dtos():
    cpm = make_cpm(sender=1, objects=[(7, row(x=3.0, heading=90.0))], ts=42)
    (obj,) = cpm.objects
    assert obj.object_ref == 7
    assert obj.kinematics == KinematicsDto(position=(3.0, 0.0), heading=90.0,
                                           speed=70.0, acceleration=0.0,
                                           timestamp_us=42)
    assert obj.time_of_measurement_us == 42
