"""Scripted synthetic matches with a known commitment rule.

Each possession: a stationary kicker (team A) kicks at an integer second
t_p to a contest point that the ball reaches at t_c = t_p + tau. Every
other player has a random position and velocity at t_p. They keep that
velocity for a short reaction time, then committed players run to within
1 m of the contest point (the player credited with the contest lands on
it exactly) and the rest carry on, nudged to stay at least 3 m clear.
Labels therefore sit well away from the 2 m commitment radius.

If nobody commits the possession is redrawn; after ``max_retries`` the
contest is credited to the kicker at their own spot (this only happens
for near-zero rules).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import relative_to_heading
from .grid import Pitch
from .ingest import PlayerTrack, Tracking, TransactionEvent

TICKS_PER_S = 10
POSSESSION_STRIDE = 12  # seconds between possession starts
PRE_ROLL = 1.0
POST_ROLL = 0.5
COMMIT_LANDING = 1.0
CLEARANCE = 3.0
TRUTH_HEADER = ["contest_id", "player_id", "p_star", "committed"]


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class TrueRule:
    """p* = logistic(a - b * max(0, d/t - v_max) - c * (1 - cos theta)).

    ``constant`` overrides the formula (for degenerate-rule tests).
    """

    a: float = 2.0
    b: float = 1.5
    v_max: float = 8.0
    c: float = 0.5
    constant: float | None = None

    def __post_init__(self):
        if self.constant is not None and not 0.0 <= self.constant <= 1.0:
            raise SynthError("constant rule must be a probability")

    def __call__(self, x, y, v, t):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if np.any(t <= 0):
            raise SynthError("time-to-point must be positive")
        shape = np.broadcast_shapes(x.shape, y.shape, np.shape(v), t.shape)
        if self.constant is not None:
            out = np.full(shape, float(self.constant))
            return out if out.ndim else float(out)
        d = np.hypot(x, y)
        cos_theta = np.where(d > 0, x / np.where(d > 0, d, 1.0), 1.0)
        z = self.a - self.b * np.maximum(0.0, d / t - self.v_max) - self.c * (1.0 - cos_theta)
        out = np.broadcast_to(1.0 / (1.0 + np.exp(-z)), shape).copy()
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_contests: int = 100
    players_per_team: int = 18
    pitch: Pitch = field(default_factory=Pitch)
    true_rule: TrueRule = field(default_factory=TrueRule)
    kick_speed: float = 20.0
    noise: float = 0.2
    n_marks: int | None = None
    kick_range: tuple[float, float] = (15.0, 55.0)
    spread: float = 20.0
    speed_range: tuple[float, float] = (1.0, 7.0)
    reaction: float = 0.2
    max_retries: int = 50
    match_id: str = "synth"

    def __post_init__(self):
        if self.n_contests < 1:
            raise SynthError("n_contests must be at least 1")
        if not 1 <= self.players_per_team <= 18:
            raise SynthError("players_per_team must be in 1..18")
        if self.kick_speed <= 0 or self.noise < 0:
            raise SynthError("kick_speed must be positive and noise non-negative")
        if self.reaction < 0.2:
            raise SynthError("reaction must be at least 0.2 s so t_p differencing sees pre-kick motion")

    @property
    def marks(self) -> int:
        return self.n_contests // 4 if self.n_marks is None else self.n_marks


@dataclass(frozen=True)
class TruthRow:
    contest_id: int
    player_id: str
    p_star: float
    committed: int
    x: float
    y: float
    v: float
    t: float


@dataclass
class SynthResult:
    tracking: Tracking
    events: list[TransactionEvent]
    truth: list[TruthRow]
    retries: int = 0
    fallbacks: int = 0

    def truth_array(self) -> np.ndarray:
        """``(n, 6)`` array: x, y, v, t, p_star, committed."""
        return np.array([[r.x, r.y, r.v, r.t, r.p_star, r.committed] for r in self.truth]).reshape(-1, 6)


def ground_truth_probability(config: SynthConfig | TrueRule, x, y, v, t):
    rule = config.true_rule if isinstance(config, SynthConfig) else config
    return rule(x, y, v, t)


class _Builder:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        n = cfg.players_per_team
        self.ids = [f"A{i + 1:02d}" for i in range(n)] + [f"B{i + 1:02d}" for i in range(n)]
        self.teams = ["A"] * n + ["B"] * n
        self.ticks: list[list[np.ndarray]] = [[] for _ in self.ids]
        self.paths: list[list[np.ndarray]] = [[] for _ in self.ids]

    def in_bounds(self, p, shrink: float = 0.9) -> bool:
        pitch = self.cfg.pitch
        return (2 * p[0] / (shrink * pitch.length)) ** 2 + (2 * p[1] / (shrink * pitch.width)) ** 2 <= 1.0

    def uniform_point(self, shrink: float = 0.9) -> np.ndarray:
        pitch = self.cfg.pitch
        while True:
            p = (self.rng.random(2) - 0.5) * np.array([pitch.length, pitch.width]) * shrink
            if self.in_bounds(p, shrink):
                return p

    def scatter(self, centre: np.ndarray) -> np.ndarray:
        while True:
            p = centre + self.rng.normal(0.0, self.cfg.spread, 2)
            if self.in_bounds(p, 0.98):
                return p

    def kick(self):
        cfg = self.cfg
        for _ in range(1000):
            origin = self.uniform_point(0.8)
            dist = self.rng.uniform(*cfg.kick_range)
            phi = self.rng.uniform(0, 2 * math.pi)
            target = origin + dist * np.array([math.cos(phi), math.sin(phi)])
            if self.in_bounds(target, 0.9):
                tau = max(1, math.ceil(dist / cfg.kick_speed - 1e-9))
                return origin, target, tau
        raise SynthError("could not place an in-bounds contest")

    def states(self, origin, target):
        mid = 0.5 * (origin + target)
        n = len(self.ids)
        pos = np.array([self.scatter(mid) for _ in range(n)])
        speed = self.rng.uniform(*self.cfg.speed_range, n)
        ang = self.rng.uniform(0, 2 * math.pi, n)
        vel = np.column_stack([speed * np.cos(ang), speed * np.sin(ang)])
        pos[0] = origin
        vel[0] = 0.0
        return pos, vel

    def emit(self, t_p: int, tau: int, pos, vel, ends: dict[int, np.ndarray]):
        """Write tracking for one possession. ``ends[i]`` overrides player i's position at t_c."""
        cfg = self.cfg
        lo = (t_p - int(PRE_ROLL)) * TICKS_PER_S
        hi = int(round((t_p + tau + POST_ROLL) * TICKS_PER_S))
        ticks = np.arange(lo, hi + 1)
        rel = ticks / TICKS_PER_S - t_p
        t_r = cfg.reaction
        for i in range(len(self.ids)):
            straight = pos[i] + rel[:, None] * vel[i]
            if i in ends:
                start = pos[i] + t_r * vel[i]
                end = ends[i]
                frac = np.clip((rel - t_r) / (tau - t_r), 0.0, 1.0)[:, None]
                path = np.where(rel[:, None] <= t_r, straight, start + frac * (end - start))
                if i != 0 and not self._committed.get(i, False):
                    # cleared non-committers resume their velocity after t_c
                    after = rel[:, None] > tau
                    path = np.where(after, end + (rel[:, None] - tau) * vel[i], path)
            else:
                path = straight
            if cfg.noise > 0:
                path = path + self.rng.normal(0.0, cfg.noise, path.shape)
            self.ticks[i].append(ticks)
            self.paths[i].append(path)

    def tracking(self) -> Tracking:
        tracks = []
        for i, pid in enumerate(self.ids):
            t = np.concatenate(self.ticks[i]) / TICKS_PER_S
            p = np.concatenate(self.paths[i])
            tracks.append(PlayerTrack(self.cfg.match_id, pid, self.teams[i], t, p))
        return Tracking(tracks)


def generate(config: SynthConfig) -> SynthResult:
    """Simulate ``n_contests`` contested possessions plus ``config.marks`` uncontested marks."""
    cfg = config
    b = _Builder(cfg)
    rng = b.rng
    n_players = len(b.ids)
    kinds = ["contest"] * cfg.n_contests + ["mark"] * cfg.marks
    order = rng.permutation(len(kinds))
    events: list[TransactionEvent] = []
    truth: list[TruthRow] = []
    retries = fallbacks = 0
    contest_id = 0
    mid = cfg.match_id

    for slot, k_idx in enumerate(order):
        t_p = PRE_ROLL + slot * POSSESSION_STRIDE + 1
        t_p = int(t_p)
        b._committed = {}
        if kinds[k_idx] == "mark":
            for _ in range(1000):
                origin, _, _ = b.kick()
                pos, vel = b.states(origin, origin)
                r = int(rng.integers(1, cfg.players_per_team)) if cfg.players_per_team > 1 else None
                if r is None:
                    break
                tau = int(rng.integers(1, 4))
                target = pos[r] + tau * vel[r]
                if b.in_bounds(target, 0.9) and np.hypot(*(target - origin)) >= cfg.kick_range[0] + 1.0:
                    break
            else:
                raise SynthError("could not place an uncontested mark")
            if r is None:
                continue
            b._committed = {r: True}
            b.emit(t_p, tau, pos, vel, {0: origin, r: target})
            events.append(TransactionEvent(float(t_p), "kick", b.ids[0], "A", mid))
            events.append(TransactionEvent(float(t_p + tau), "mark", b.ids[r], "A", mid))
            continue

        for attempt in range(cfg.max_retries + 1):
            origin, target, tau = b.kick()
            pos, vel = b.states(origin, target)
            rows = []
            committed = np.zeros(n_players, dtype=bool)
            for i in range(1, n_players):
                spd = float(np.hypot(*vel[i]))
                rl = relative_to_heading(pos[i], vel[i] / spd, target)
                p = float(cfg.true_rule(rl.x, rl.y, spd, float(tau)))
                committed[i] = rng.random() < p
                rows.append((i, p, rl.x, rl.y, spd))
            if committed.any():
                break
            retries += 1
        else:
            fallbacks += 1

        if committed.any():
            winner = int(rng.choice(np.nonzero(committed)[0]))
            spot = target
        else:
            winner = 0
            spot = origin
        ends: dict[int, np.ndarray] = {0: origin}
        for i, p, *_ in rows:
            if committed[i]:
                if i == winner:
                    ends[i] = spot.copy()
                else:
                    r = COMMIT_LANDING * math.sqrt(rng.random())
                    a = rng.uniform(0, 2 * math.pi)
                    ends[i] = spot + r * np.array([math.cos(a), math.sin(a)])
                b._committed[i] = True
            else:
                end = pos[i] + tau * vel[i]
                gap = end - spot
                dist = float(np.hypot(*gap))
                if dist < CLEARANCE:
                    if dist == 0.0:
                        a = rng.uniform(0, 2 * math.pi)
                        gap, dist = np.array([math.cos(a), math.sin(a)]), 1.0
                    ends[i] = spot + gap * (CLEARANCE / dist)
        b.emit(t_p, tau, pos, vel, ends)

        kind = "contested_mark" if b.teams[winner] == "A" else "spoil"
        events.append(TransactionEvent(float(t_p), "kick", b.ids[0], "A", mid))
        events.append(TransactionEvent(float(t_p + tau), kind, b.ids[winner], b.teams[winner], mid))
        for i, p, x, y, spd in rows:
            truth.append(TruthRow(contest_id, b.ids[i], p, int(committed[i]), x, y, spd, float(tau)))
        contest_id += 1

    return SynthResult(b.tracking(), events, truth, retries, fallbacks)


def write_truth_csv(truth, dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for r in truth:
            w.writerow([r.contest_id, r.player_id, f"{r.p_star:.17g}", r.committed])


def read_truth_csv(source) -> list[tuple[int, str, float, int]]:
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRUTH_HEADER:
            raise SynthError("ground truth: unexpected header")
        return [(int(r[0]), r[1], float(r[2]), int(r[3])) for r in reader if r]


def feature_clusters(n: int, means, sds, weights, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian blobs standing in for pass features: returns (data, labels)."""
    means = np.asarray(means, dtype=np.float64)
    sds = np.broadcast_to(np.asarray(sds, dtype=np.float64), means.shape)
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(means), size=n, p=np.asarray(weights) / np.sum(weights))
    data = means[labels] + rng.normal(size=(n, means.shape[1])) * sds[labels]
    return data, labels
