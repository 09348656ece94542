import io
import logging
from collections import Counter

import numpy as np
import pytest

from commitmotion import ingest
from commitmotion.ingest import (
    CommitmentSample,
    IngestError,
    TransactionEvent,
    align_transactions,
    build_commitment_samples,
    build_displacement_samples,
    extract_contests,
    extract_passes,
    load_tracking,
    load_transactions,
    read_samples_csv,
    write_samples_csv,
)

from conftest import linear_track, make_tracking


def ev(t, kind, player, team="A"):
    return TransactionEvent(float(t), kind, player, team, "m1")


def test_load_tracking_header_only():
    tr = load_tracking(b"match_id,player_id,team_id,t,x,y\n")
    assert len(tr) == 0 and tr.tracks == {}


def test_load_tracking_groups_and_sorts():
    data = b"match_id,player_id,team_id,t,x,y\nm,p1,A,0.2,1,1\nm,p2,B,0.0,5,5\nm,p1,A,0.1,0,0\n"
    tr = load_tracking(io.BytesIO(data))
    assert len(tr) == 3
    assert tr.track("m", "p1").t.tolist() == [0.1, 0.2]
    assert tr.track("m", "p2").team_id == "B"


def test_load_tracking_reports_bad_line():
    data = b"match_id,player_id,team_id,t,x,y\nm,p1,A,0.0,1,1\nm,p1,A,0.1,abc,1\n"
    with pytest.raises(IngestError, match="line 3"):
        load_tracking(data)


def test_load_tracking_duplicate_keeps_first(caplog):
    data = b"match_id,player_id,team_id,t,x,y\nm,p1,A,0.0,1,1\nm,p1,A,0.0,9,9\n"
    with caplog.at_level(logging.WARNING):
        tr = load_tracking(data)
    assert tr.track("m", "p1").pos.tolist() == [[1.0, 1.0]]
    assert "duplicate" in caplog.text


def test_load_transactions_rejects_unknown_kind():
    with pytest.raises(IngestError, match="line 2"):
        load_transactions(b"match_id,t,kind,player_id,team_id\nm,3,handball,p,A\n")


def test_align_transactions():
    events = [ev(12, "kick", "a"), ev(12.7, "mark", "b"), ev(12, "spoil", "c")]
    out = align_transactions(events)
    assert [e.t for e in out] == [12.0, 12.0, 12.0]
    assert [e.kind for e in out] == ["kick", "mark", "spoil"]
    assert isinstance(out[0].t, float)


def contest_tracking():
    return make_tracking({
        "K": ("A", *linear_track(0, 20, (0, 0), (0, 0))),
        "P": ("B", *linear_track(0, 20, (30, 5), (0, 0))),
        "Q": ("A", *linear_track(0, 20, (10, -5), (0, 0))),
    })


def test_extract_contests_direct_pairing():
    out = extract_contests([ev(10, "kick", "K"), ev(12, "spoil", "P", "B")], contest_tracking())
    assert len(out) == 1
    c = out[0]
    assert (c.t_p, c.t_c, c.contest_pos, c.kind, c.passer_id) == (10.0, 12.0, (30.0, 5.0), "spoil", "K")


def test_extract_contests_requires_recent_kick():
    assert extract_contests([ev(1, "kick", "K"), ev(12, "spoil", "P", "B")], contest_tracking()) == []
    assert extract_contests([ev(12, "spoil", "P", "B")], contest_tracking()) == []


def test_extract_contests_shared_kick():
    events = [ev(10, "kick", "K"), ev(11, "contested_mark", "Q"), ev(13, "spoil", "P", "B")]
    out = extract_contests(events, contest_tracking())
    # last-kick cursor scan
    expected, last = [], None
    for e in events:
        if e.kind == "kick":
            last = e.t
        elif e.kind in ("contested_mark", "spoil"):
            expected.append((last, e.t))
    assert [(c.t_p, c.t_c) for c in out] == expected == [(10.0, 11.0), (10.0, 13.0)]


def pass_tracking():
    return make_tracking({
        "A": ("T1", *linear_track(0, 60, (0, 0), (0, 0))),
        "B": ("T1", *linear_track(0, 60, (20, 0), (0, 0))),
        "C": ("T1", *linear_track(0, 60, (10, 0), (0, 0))),
        "D": ("T2", *linear_track(0, 60, (40, 0), (0, 0))),
        "E": ("T1", *linear_track(0, 60, (0, 30), (0, 0))),
    })


def test_extract_passes_basic_and_min_distance():
    tr = pass_tracking()
    out = extract_passes([ev(5, "kick", "A", "T1"), ev(7, "mark", "B", "T1")], tr)
    assert len(out) == 1 and out[0].distance == pytest.approx(20.0)
    assert extract_passes([ev(5, "kick", "A", "T1"), ev(7, "mark", "C", "T1")], tr) == []


def test_extract_passes_ten_event_fixture():
    events = [
        ev(1, "mark", "A", "T1"),
        ev(2, "kick", "A", "T1"),            # -> B mark, 20 m: kept
        ev(4, "mark", "B", "T1"),
        ev(5, "kick", "B", "T1"),            # -> E contested mark, 36 m: kept, contested
        ev(7, "contested_mark", "E", "T1"),
        ev(8, "kick", "E", "T1"),            # -> spoil: not a reception
        ev(9, "spoil", "D", "T2"),
        ev(11, "kick", "A", "T1"),           # -> C mark, 10 m: too short
        ev(12, "mark", "C", "T1"),
        ev(13, "kick", "C", "T1"),           # -> D mark: turnover
    ] + [ev(14, "mark", "D", "T2")]
    stats = Counter()
    out = extract_passes(events, pass_tracking(), stats=stats)
    assert [(p.passer_id, p.receiver_id, p.contested) for p in out] == [("A", "B", False), ("B", "E", True)]
    assert stats == Counter({"kept": 2, "no_mark": 1, "too_short": 1, "turnover": 1})
    assert all(p.distance >= 15 for p in out)


def snapshot_tracking():
    return make_tracking({
        "K": ("A", *linear_track(0, 20, (-20, 0), (0, 0))),
        "W": ("A", *linear_track(0, 20, (-2, 0), (1, 0))),
        "F": ("B", *linear_track(0, 20, (10, 50), (0, -1))),
    })


def test_commitment_labels_and_frames():
    tr = snapshot_tracking()
    contests = extract_contests([ev(10, "kick", "K"), ev(12, "contested_mark", "W")], tr)
    samples = build_commitment_samples(contests, tr)
    by = {s.player_id: s for s in samples}
    assert set(by) == {"W", "F"}  # passer excluded
    w, f = by["W"], by["F"]
    # W is at (10, 0) at t_c: the contest spot; at t_p W was at (8,0) heading +x
    assert (w.x, w.y, w.v, w.t, w.c) == pytest.approx((2.0, 0.0, 1.0, 2.0, 1))
    # F is at (10, 38) at t_c: 38 m away; at t_p F was at (10, 40) heading -y
    assert f.c == 0
    assert (f.x, f.y) == pytest.approx((40.0, 0.0), abs=1e-9)
    assert all(s.t == 2.0 for s in samples)


def test_commitment_weight_from_reported_counts():
    n1, n0 = 6392, 39828
    assert n1 + n0 == 46220
    assert n1 / (n1 + n0) == pytest.approx(0.1383, abs=1e-4)
    assert round(n1 / (n1 + n0), 2) == 0.14


def test_missing_tracking_at_contest_time_is_counted():
    tr = make_tracking({
        "K": ("A", *linear_track(0, 20, (0, 0), (0, 0))),
        "W": ("A", *linear_track(0, 20, (20, 0), (0, 0))),
        "G": ("B", *linear_track(0, 10.5, (5, 5), (1, 0))),
    })
    contests = extract_contests([ev(10, "kick", "K"), ev(12, "spoil", "W")], tr)
    stats = Counter()
    samples = build_commitment_samples(contests, tr, stats=stats)
    assert [s.player_id for s in samples] == ["W"]
    assert stats["missing_tc"] == 1


def test_displacement_uniform_motion():
    tr = make_tracking({"R": ("A", *linear_track(0, 5, (0, 0), (2, 0)))})
    out = build_displacement_samples(tr, 2.0)
    assert len(out) == 31  # samples with a partner 2 s later
    for s in out:
        assert (s.x, s.y, s.v, s.t, s.c) == pytest.approx((4.0, 0.0, 2.0, 2.0, 1), abs=1e-9)


def test_displacement_skips_stationary():
    tr = make_tracking({"S": ("A", *linear_track(0, 5, (3, 3), (0, 0)))})
    assert build_displacement_samples(tr, 1.0) == []


def test_displacement_u_turn_goes_negative():
    t1, p1 = linear_track(0, 2, (0, 0), (2, 0))
    t2, p2 = linear_track(2.1, 5, (4 - 0.2, 0), (-2, 0))
    tr = make_tracking({"U": ("A", np.concatenate([t1, t2]), np.concatenate([p1, p2]))})
    out = build_displacement_samples(tr, 2.0)
    # from x=3 at 1.5 s heading +x, the player is back at x=1 at 3.5 s
    s = [o for o in out if o.x < 0]
    assert s
    start = next(o for o in out if abs(o.x + 2.0) < 1e-6)
    assert start.y == pytest.approx(0.0, abs=1e-9)


def test_samples_csv_round_trip(tmp_path):
    samples = [CommitmentSample(1.23456789, -2.0, 3.5, 2.0, 1), CommitmentSample(0.0, 0.0, 0.0, 1.0, 0)]
    path = tmp_path / "s.csv"
    write_samples_csv(samples, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,v,t,c"
    assert lines[1] == "1.234568,-2.000000,3.500000,2.000000,1"
    back = read_samples_csv(path)
    assert [s.c for s in back] == [1, 0]


def test_label_invariants_on_synthetic(small_synth):
    res = small_synth
    events = align_transactions(res.events)
    contests = extract_contests(events, res.tracking)
    samples = build_commitment_samples(contests, res.tracking)
    arr = ingest.samples_to_array(samples)
    assert (arr[:, 4] == 1).sum() + (arr[:, 4] == 0).sum() == len(arr)
    ttp = {c.contest_id: c.t_c - c.t_p for c in contests}
    assert all(s.t == ttp[s.contest_id] for s in samples)
    cpos = {c.contest_id: c for c in contests}
    for s in samples:
        c = cpos[s.contest_id]
        end = res.tracking.track(c.match_id, s.player_id).position_at(c.t_c)
        assert s.c == int(np.hypot(end[0] - c.contest_pos[0], end[1] - c.contest_pos[1]) < 2.0)
