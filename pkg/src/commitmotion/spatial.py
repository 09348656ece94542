"""Team influence and dominance fields from a frozen match snapshot."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import PlayerState, frame_coords
from .grid import FieldGrid, GridSpec, Pitch
from .kde import EPSILON_FLOOR, CommitmentModel

BALL_SPEED = 20.0
T_MIN = 0.5
MAX_TEAM_SIZE = 18


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    t: float
    ball_pos: tuple[float, float]
    players: tuple[PlayerState, ...]
    possession_team: str

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        if not self.players:
            raise SnapshotError("snapshot has no players")
        teams = self.teams()
        if len(teams) > 2:
            raise SnapshotError(f"snapshot has {len(teams)} teams, expected at most 2")
        for team in teams:
            n = sum(1 for p in self.players if p.team_id == team)
            if n > MAX_TEAM_SIZE:
                raise SnapshotError(f"team {team} has {n} players on field (max {MAX_TEAM_SIZE})")

    def teams(self) -> list[str]:
        return sorted({p.team_id for p in self.players})

    def team_players(self, team: str) -> list[PlayerState]:
        return [p for p in self.players if p.team_id == team]

    def opponent_of(self, team: str) -> str:
        others = [t for t in self.teams() if t != team]
        if not others:
            raise SnapshotError(f"no opponent for team {team}")
        return others[0]

    @classmethod
    def from_dict(cls, doc: dict) -> "Snapshot":
        players = []
        for p in doc.get("players", []):
            heading = p.get("heading")
            players.append(PlayerState(str(p["player_id"]), str(p["team_id"]), float(doc.get("t", 0.0)),
                                       (float(p["pos"][0]), float(p["pos"][1])),
                                       None if heading is None else (float(heading[0]), float(heading[1])),
                                       float(p.get("speed", 0.0))))
        return cls(float(doc.get("t", 0.0)), (float(doc["ball_pos"][0]), float(doc["ball_pos"][1])),
                   tuple(players), str(doc["possession_team"]))

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "ball_pos": list(self.ball_pos),
            "possession_team": self.possession_team,
            "players": [{"player_id": p.player_id, "team_id": p.team_id, "pos": list(p.pos),
                         "heading": None if p.heading is None else list(p.heading), "speed": p.speed}
                        for p in self.players],
        }

    @classmethod
    def load(cls, path) -> "Snapshot":
        return cls.from_dict(json.loads(Path(path).read_text()))


def time_to_point(ball_pos, target, ball_speed: float = BALL_SPEED, t_min: float = T_MIN):
    """Constant-speed ball flight time, floored at ``t_min``. ``target`` may be an array of points."""
    if not ball_speed > 0:
        raise ValueError("ball_speed must be positive")
    target = np.asarray(target, dtype=np.float64)
    d = np.hypot(target[..., 0] - ball_pos[0], target[..., 1] - ball_pos[1])
    t = np.maximum(d / ball_speed, t_min)
    return t if t.ndim else float(t)


def influence_at_points(player: PlayerState, ball_pos, model: CommitmentModel, points: np.ndarray,
                        ball_speed: float = BALL_SPEED, workers: int = 1) -> np.ndarray:
    """A player's commitment probability at each of ``points`` (shape (m, 2))."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = frame_coords(player.pos, player.frame_heading(), points)
    t = time_to_point(ball_pos, points, ball_speed)
    return model.probability_xyt(np.column_stack([x, y, t]), player.speed, workers)


def _pitch_mask(spec: GridSpec, pitch: Pitch | None) -> np.ndarray:
    if pitch is None:
        return np.ones((spec.nx, spec.ny), dtype=bool)
    X, Y = spec.mesh()
    return pitch.contains(X, Y)


def player_influence(player: PlayerState, ball_pos, model: CommitmentModel, spec: GridSpec,
                     pitch: Pitch | None = None, ball_speed: float = BALL_SPEED, workers: int = 1) -> FieldGrid:
    """Commitment probability of one player over the grid; out-of-bounds cells hold 0."""
    mask = _pitch_mask(spec, pitch)
    X, Y = spec.mesh()
    values = np.zeros((spec.nx, spec.ny))
    pts = np.column_stack([X[mask], Y[mask]])
    if len(pts):
        values[mask] = influence_at_points(player, ball_pos, model, pts, ball_speed, workers)
    return FieldGrid(spec, values, mask)


def team_influence(snapshot: Snapshot, team: str, model: CommitmentModel, spec: GridSpec,
                   pitch: Pitch | None = None, ball_speed: float = BALL_SPEED, workers: int = 1,
                   exclude: Sequence[str] = ()) -> FieldGrid:
    """Cellwise sum of the team's player influences (players summed in id order)."""
    players = sorted((p for p in snapshot.team_players(team) if p.player_id not in exclude),
                     key=lambda p: p.player_id)
    mask = _pitch_mask(spec, pitch)
    total = np.zeros((spec.nx, spec.ny))
    for p in players:
        total += player_influence(p, snapshot.ball_pos, model, spec, pitch, ball_speed, workers).values
    return FieldGrid(spec, total, mask)


def team_influence_at(snapshot: Snapshot, team: str, model: CommitmentModel, points,
                      ball_pos=None, ball_speed: float = BALL_SPEED, exclude: Sequence[str] = ()) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ball = snapshot.ball_pos if ball_pos is None else ball_pos
    total = np.zeros(len(points))
    for p in sorted(snapshot.team_players(team), key=lambda p: p.player_id):
        if p.player_id in exclude:
            continue
        total += influence_at_points(p, ball, model, points, ball_speed)
    return total


def dominance_values(inf_a, inf_o, floor: float = EPSILON_FLOOR):
    """Share of total influence held by side a; 0.5 where neither side has any."""
    a = np.asarray(inf_a, dtype=np.float64)
    o = np.asarray(inf_o, dtype=np.float64)
    den = a + o
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den < floor, 0.5, a / np.where(den < floor, 1.0, den))
    return out if out.ndim else float(out)


def dominance(inf_a: FieldGrid, inf_o: FieldGrid, floor: float = EPSILON_FLOOR) -> FieldGrid:
    if inf_a.spec != inf_o.spec:
        raise ValueError("influence grids have different specs")
    return FieldGrid(inf_a.spec, dominance_values(inf_a.values, inf_o.values, floor), inf_a.mask & inf_o.mask)
