"""Tracking/transaction loading, contest and pass extraction, sample building."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .geometry import (
    PITCH_FRAME_HEADING,
    PlayerState,
    TrackingSample,
    frame_coords,
    kinematics_arrays,
    relative_to_heading,
)

log = logging.getLogger(__name__)

TRACKING_HEADER = ["match_id", "player_id", "team_id", "t", "x", "y"]
TRANSACTION_HEADER = ["match_id", "t", "kind", "player_id", "team_id"]
SAMPLE_HEADER = ["x", "y", "v", "t", "c"]

EVENT_KINDS = ("kick", "mark", "contested_mark", "spoil", "other")
CONTEST_KINDS = ("contested_mark", "spoil")
MARK_KINDS = ("mark", "contested_mark")

T_MAX = 10.0
COMMIT_RADIUS = 2.0
MIN_PASS_DISTANCE = 15.0
TIME_TOL = 0.05 + 1e-9


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class TransactionEvent:
    t: float
    kind: str
    player_id: str
    team_id: str
    match_id: str = ""


@dataclass(frozen=True)
class Contest:
    t_p: float
    t_c: float
    contest_pos: tuple[float, float]
    kind: str
    player_id: str
    passer_id: str
    match_id: str = ""
    contest_id: int = -1

    @property
    def time_to_point(self) -> float:
        return self.t_c - self.t_p


@dataclass(frozen=True)
class PassEvent:
    t_p: float
    t_c: float
    passer_id: str
    receiver_id: str
    team_id: str
    origin_pos: tuple[float, float]
    receive_pos: tuple[float, float]
    distance: float
    contested: bool = False
    match_id: str = ""
    pass_id: int = -1


@dataclass(frozen=True)
class CommitmentSample:
    x: float
    y: float
    v: float
    t: float
    c: int
    contest_id: int = field(default=-1, compare=False)
    player_id: str = field(default="", compare=False)


class PlayerTrack:
    """One player's tracking arrays plus lazily derived kinematics.

    Kinematics are computed per contiguous segment so differencing never
    spans a gap in coverage.
    """

    def __init__(self, match_id: str, player_id: str, team_id: str, t: np.ndarray, pos: np.ndarray):
        self.match_id = match_id
        self.player_id = player_id
        self.team_id = team_id
        self.t = np.asarray(t, dtype=np.float64)
        self.pos = np.asarray(pos, dtype=np.float64).reshape(-1, 2)
        self._kin: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.t)

    def index_at(self, t: float, tol: float = TIME_TOL) -> int | None:
        n = len(self.t)
        if n == 0:
            return None
        i = int(np.searchsorted(self.t, t))
        best = None
        for j in (i - 1, i):
            if 0 <= j < n and abs(self.t[j] - t) <= tol:
                if best is None or abs(self.t[j] - t) < abs(self.t[best] - t):
                    best = j
        return best

    def position_at(self, t: float) -> tuple[float, float] | None:
        i = self.index_at(t)
        if i is None:
            return None
        return (float(self.pos[i, 0]), float(self.pos[i, 1]))

    def kinematics(self, smooth_window: int = 1):
        """``(speed, heading, defined)`` arrays aligned with :attr:`t`."""
        if smooth_window not in self._kin:
            n = len(self.t)
            speed = np.zeros(n)
            heading = np.zeros((n, 2))
            defined = np.zeros(n, dtype=bool)
            for lo, hi in self._segments():
                if hi - lo >= 2:
                    s, h, d = kinematics_arrays(self.t[lo:hi], self.pos[lo:hi], smooth_window)
                    speed[lo:hi], heading[lo:hi], defined[lo:hi] = s, h, d
            self._kin[smooth_window] = (speed, heading, defined)
        return self._kin[smooth_window]

    def state_at(self, t: float, smooth_window: int = 1) -> PlayerState | None:
        i = self.index_at(t)
        if i is None:
            return None
        speed, heading, defined = self.kinematics(smooth_window)
        h = (float(heading[i, 0]), float(heading[i, 1])) if defined[i] else None
        return PlayerState(self.player_id, self.team_id, float(self.t[i]),
                           (float(self.pos[i, 0]), float(self.pos[i, 1])), h, float(speed[i]))

    def _segments(self):
        if len(self.t) < 2:
            return [(0, len(self.t))]
        dt = np.diff(self.t)
        gap = 2.0 * float(np.median(dt))
        cuts = np.nonzero(dt > gap)[0] + 1
        bounds = [0, *cuts.tolist(), len(self.t)]
        return list(zip(bounds[:-1], bounds[1:]))


class Tracking:
    """Tracking data grouped into per-player tracks, keyed by (match_id, player_id)."""

    def __init__(self, tracks: Iterable[PlayerTrack] = ()):
        self.tracks: dict[tuple[str, str], PlayerTrack] = {}
        for tr in tracks:
            self.tracks[(tr.match_id, tr.player_id)] = tr

    def __len__(self) -> int:
        return sum(len(tr) for tr in self.tracks.values())

    def track(self, match_id: str, player_id: str) -> PlayerTrack | None:
        return self.tracks.get((match_id, player_id))

    def match_tracks(self, match_id: str) -> list[PlayerTrack]:
        return [tr for (m, _), tr in self.tracks.items() if m == match_id]

    def samples(self) -> list[TrackingSample]:
        out = []
        for tr in self.tracks.values():
            out.extend(TrackingSample(tr.player_id, tr.team_id, float(t), float(p[0]), float(p[1]))
                       for t, p in zip(tr.t, tr.pos))
        return out

    def snapshot_states(self, match_id: str, t: float, smooth_window: int = 1) -> list[PlayerState]:
        states = []
        for tr in self.match_tracks(match_id):
            st = tr.state_at(t, smooth_window)
            if st is not None:
                states.append(st)
        return states


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _check_header(header, expected, what):
    if header is None:
        raise IngestError(f"{what}: empty file (missing header)")
    if [h.strip() for h in header] != expected:
        raise IngestError(f"{what}: line 1: expected header {','.join(expected)}")


def load_tracking(source) -> Tracking:
    """Parse a tracking CSV (path, bytes or stream) into per-player tracks."""
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        _check_header(next(reader, None), TRACKING_HEADER, "tracking")
        rows: dict[tuple[str, str], list[tuple[float, float, float]]] = {}
        teams: dict[tuple[str, str], str] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise IngestError(f"tracking: line {lineno}: expected 6 fields, got {len(row)}")
            match_id, player_id, team_id = row[0], row[1], row[2]
            try:
                t, x, y = float(row[3]), float(row[4]), float(row[5])
            except ValueError:
                raise IngestError(f"tracking: line {lineno}: non-numeric t/x/y") from None
            if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
                raise IngestError(f"tracking: line {lineno}: non-finite t/x/y")
            key = (match_id, player_id)
            rows.setdefault(key, []).append((t, x, y))
            teams.setdefault(key, team_id)
    finally:
        if close:
            fh.close()

    tracks = []
    for key, vals in rows.items():
        arr = np.array(vals, dtype=np.float64)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        keep = np.ones(len(arr), dtype=bool)
        keep[1:] = np.diff(arr[:, 0]) != 0.0
        if not keep.all():
            log.warning("tracking: %d duplicate (player, t) rows for %s/%s, keeping first",
                        int((~keep).sum()), key[0], key[1])
            arr = arr[keep]
        tracks.append(PlayerTrack(key[0], key[1], teams[key], arr[:, 0], arr[:, 1:3]))
    return Tracking(tracks)


def write_tracking(tracking: Tracking, dest) -> None:
    fh, close = (open(dest, "w", newline="", encoding="utf-8"), True) if isinstance(dest, (str, Path)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACKING_HEADER)
        for tr in tracking.tracks.values():
            for t, (x, y) in zip(tr.t, tr.pos):
                w.writerow([tr.match_id, tr.player_id, tr.team_id, f"{t:.3f}", f"{x:.6f}", f"{y:.6f}"])
    finally:
        if close:
            fh.close()


def load_transactions(source) -> list[TransactionEvent]:
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        _check_header(next(reader, None), TRANSACTION_HEADER, "transactions")
        events = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise IngestError(f"transactions: line {lineno}: expected 5 fields, got {len(row)}")
            try:
                t = float(row[1])
            except ValueError:
                raise IngestError(f"transactions: line {lineno}: non-numeric t") from None
            kind = row[2].strip()
            if kind not in EVENT_KINDS:
                raise IngestError(f"transactions: line {lineno}: unknown kind {kind!r}")
            events.append(TransactionEvent(t, kind, row[3], row[4], match_id=row[0]))
    finally:
        if close:
            fh.close()
    return events


def write_transactions(events: Sequence[TransactionEvent], dest) -> None:
    fh, close = (open(dest, "w", newline="", encoding="utf-8"), True) if isinstance(dest, (str, Path)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSACTION_HEADER)
        for e in events:
            w.writerow([e.match_id, f"{e.t:g}", e.kind, e.player_id, e.team_id])
    finally:
        if close:
            fh.close()


def align_transactions(events: Iterable[TransactionEvent]) -> list[TransactionEvent]:
    """Place each event at the start of its recorded second."""
    return [TransactionEvent(float(math.floor(e.t)), e.kind, e.player_id, e.team_id, e.match_id) for e in events]


def _by_match(events: Iterable[TransactionEvent]) -> dict[str, list[TransactionEvent]]:
    out: dict[str, list[TransactionEvent]] = {}
    for e in events:
        out.setdefault(e.match_id, []).append(e)
    return out


def extract_contests(events: Sequence[TransactionEvent], tracking: Tracking,
                     t_max: float = T_MAX) -> list[Contest]:
    """Pair every contested mark / spoil with the most recent kick."""
    contests: list[Contest] = []
    for match_id, evs in _by_match(events).items():
        last_kick: TransactionEvent | None = None
        for e in evs:
            if e.kind == "kick":
                last_kick = e
                continue
            if e.kind not in CONTEST_KINDS:
                continue
            if last_kick is None or not (0.0 < e.t - last_kick.t <= t_max):
                log.warning("contest at t=%g (%s) has no kick in the prior %g s; skipped", e.t, match_id, t_max)
                continue
            tr = tracking.track(match_id, e.player_id)
            pos = tr.position_at(e.t) if tr is not None else None
            if pos is None:
                log.warning("contest at t=%g: no tracking for player %s; skipped", e.t, e.player_id)
                continue
            contests.append(Contest(last_kick.t, e.t, pos, e.kind, e.player_id, last_kick.player_id,
                                    match_id=match_id, contest_id=len(contests)))
    return contests


def extract_passes(events: Sequence[TransactionEvent], tracking: Tracking,
                   min_distance: float = MIN_PASS_DISTANCE, t_max: float = T_MAX,
                   stats: Counter | None = None) -> list[PassEvent]:
    """Kick -> mark pairs where the next possession event is a (contested) mark by a teammate.

    Pairs shorter than ``min_distance`` are dropped. Skip reasons are tallied
    into ``stats`` when given.
    """
    stats = Counter() if stats is None else stats
    passes: list[PassEvent] = []
    for match_id, evs in _by_match(events).items():
        chain = [e for e in evs if e.kind != "other"]
        for i, kick in enumerate(chain):
            if kick.kind != "kick":
                continue
            nxt = chain[i + 1] if i + 1 < len(chain) else None
            if nxt is None or nxt.kind not in MARK_KINDS:
                stats["no_mark"] += 1
                continue
            if nxt.team_id != kick.team_id:
                stats["turnover"] += 1
                continue
            if not (0.0 < nxt.t - kick.t <= t_max):
                stats["timing"] += 1
                continue
            tp = tracking.track(match_id, kick.player_id)
            tr = tracking.track(match_id, nxt.player_id)
            origin = tp.position_at(kick.t) if tp is not None else None
            receive = tr.position_at(nxt.t) if tr is not None else None
            if origin is None or receive is None:
                stats["no_tracking"] += 1
                continue
            dist = math.hypot(receive[0] - origin[0], receive[1] - origin[1])
            if dist < min_distance:
                stats["too_short"] += 1
                continue
            stats["kept"] += 1
            passes.append(PassEvent(kick.t, nxt.t, kick.player_id, nxt.player_id, kick.team_id,
                                    origin, receive, dist, contested=nxt.kind == "contested_mark",
                                    match_id=match_id, pass_id=len(passes)))
    log.info("pass extraction: %s", dict(stats))
    return passes


def build_commitment_samples(contests: Sequence[Contest], tracking: Tracking,
                             radius: float = COMMIT_RADIUS, smooth_window: int = 1,
                             stats: Counter | None = None) -> list[CommitmentSample]:
    """Label every on-field player (except the passer) for every contest.

    A player is on-field if they have a tracking sample at the pass time.
    Players with no usable heading are placed in the pitch frame.
    """
    stats = Counter() if stats is None else stats
    out: list[CommitmentSample] = []
    for con in contests:
        ttp = con.t_c - con.t_p
        for tr in tracking.match_tracks(con.match_id):
            if tr.player_id == con.passer_id:
                continue
            ip = tr.index_at(con.t_p)
            if ip is None:
                continue
            ic = tr.index_at(con.t_c)
            if ic is None:
                stats["missing_tc"] += 1
                continue
            speed, heading, defined = tr.kinematics(smooth_window)
            pos = tr.pos[ip]
            h = heading[ip] if defined[ip] else PITCH_FRAME_HEADING
            if not defined[ip]:
                stats["pitch_frame"] += 1
            rel = relative_to_heading(pos, h, con.contest_pos)
            end = tr.pos[ic]
            c = int(math.hypot(end[0] - con.contest_pos[0], end[1] - con.contest_pos[1]) < radius)
            out.append(CommitmentSample(rel.x, rel.y, float(speed[ip]), ttp, c,
                                        contest_id=con.contest_id, player_id=tr.player_id))
    if stats:
        log.info("commitment samples: %s", dict(stats))
    return out


def build_displacement_samples(tracking: Tracking, horizon: float,
                               smooth_window: int = 1) -> list[CommitmentSample]:
    """Observed displacements over ``horizon`` seconds, in each player's frame (all c = 1)."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    out: list[CommitmentSample] = []
    for tr in tracking.tracks.values():
        if len(tr) < 2:
            continue
        speed, heading, defined = tr.kinematics(smooth_window)
        target_t = tr.t + horizon
        j = np.searchsorted(tr.t, target_t)
        for i in np.nonzero(defined)[0]:
            k = None
            for cand in (j[i] - 1, j[i]):
                if 0 <= cand < len(tr) and abs(tr.t[cand] - target_t[i]) <= TIME_TOL:
                    k = cand
                    break
            if k is None:
                continue
            x, y = frame_coords(tr.pos[i], heading[i], tr.pos[k])
            out.append(CommitmentSample(float(x), float(y), float(speed[i]), float(horizon), 1,
                                        player_id=tr.player_id))
    return out


def samples_to_array(samples: Sequence[CommitmentSample]) -> np.ndarray:
    """``(n, 5)`` array with columns x, y, v, t, c."""
    if not samples:
        return np.zeros((0, 5))
    return np.array([[s.x, s.y, s.v, s.t, s.c] for s in samples], dtype=np.float64)


def write_samples_csv(samples: Sequence[CommitmentSample], dest) -> None:
    fh, close = (open(dest, "w", newline="", encoding="utf-8"), True) if isinstance(dest, (str, Path)) else (dest, False)
    try:
        fh.write(",".join(SAMPLE_HEADER) + "\n")
        for s in samples:
            fh.write(f"{s.x:.6f},{s.y:.6f},{s.v:.6f},{s.t:.6f},{int(s.c)}\n")
    finally:
        if close:
            fh.close()


def read_samples_csv(source) -> list[CommitmentSample]:
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        _check_header(next(reader, None), SAMPLE_HEADER, "samples")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x, y, v, t = (float(r) for r in row[:4])
                c = int(row[4])
            except (ValueError, IndexError):
                raise IngestError(f"samples: line {lineno}: malformed row") from None
            if c not in (0, 1):
                raise IngestError(f"samples: line {lineno}: label must be 0 or 1")
            out.append(CommitmentSample(x, y, v, t, c))
    finally:
        if close:
            fh.close()
    return out
