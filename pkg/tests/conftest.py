import numpy as np
import pytest

from commitmotion import ingest, kde, synth
from commitmotion.ingest import PlayerTrack, Tracking


def make_tracking(tracks, match_id="m1"):
    """tracks: {player_id: (team_id, t_array, pos_array)}"""
    return Tracking(PlayerTrack(match_id, pid, team, np.asarray(t, float), np.asarray(p, float))
                    for pid, (team, t, p) in tracks.items())


def linear_track(t0, t1, start, vel, dt=0.1):
    ticks = np.arange(round(t0 / dt), round(t1 / dt) + 1)
    t = ticks * dt
    pos = np.asarray(start, float) + (t - t0)[:, None] * np.asarray(vel, float)
    return t, pos


@pytest.fixture(scope="session")
def small_synth():
    return synth.generate(synth.SynthConfig(seed=3, n_contests=120, noise=0.0))


@pytest.fixture(scope="session")
def synth_model():
    res = synth.generate(synth.SynthConfig(seed=5, n_contests=150, noise=0.2))
    ev = ingest.align_transactions(res.events)
    samples = ingest.build_commitment_samples(ingest.extract_contests(ev, res.tracking), res.tracking)
    return kde.fit_commitment_model(samples)


def random_snapshot(seed=0, per_team=18, pitch=None):
    from commitmotion.geometry import PlayerState
    from commitmotion.grid import Pitch
    from commitmotion.spatial import Snapshot

    pitch = pitch or Pitch()
    rng = np.random.default_rng(seed)
    players = []
    for team in ("A", "B"):
        for i in range(per_team):
            r, a = np.sqrt(rng.uniform(0, 0.8)), rng.uniform(0, 2 * np.pi)
            pos = (float(r * np.cos(a) * pitch.length / 2), float(r * np.sin(a) * pitch.width / 2))
            h = rng.uniform(0, 2 * np.pi)
            players.append(PlayerState(f"{team}{i + 1:02d}", team, 0.0, pos,
                                       (float(np.cos(h)), float(np.sin(h))), float(rng.uniform(0.5, 6))))
    return Snapshot(0.0, (0.0, 0.0), tuple(players), "A")


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion's outcome and fail the test if it did not hold."""
    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
