"""Player kinematics and the contest-relative coordinate frame.

A player's frame has +x along their direction of travel and +y to their
left (counter-clockwise from +x). Positions are metres in the pitch frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EPS_SPEED = 0.3
"""Below this speed (m/s) a player has no usable movement direction."""

PITCH_FRAME_HEADING = (1.0, 0.0)
"""Fallback heading for near-stationary players: the pitch +x axis."""


class TrackError(ValueError):
    pass


class UndefinedOrientation(ValueError):
    pass


@dataclass(frozen=True)
class TrackingSample:
    player_id: str
    team_id: str
    t: float
    x: float
    y: float

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class PlayerState:
    player_id: str
    team_id: str
    t: float
    pos: tuple[float, float]
    heading: tuple[float, float] | None
    speed: float

    @property
    def has_heading(self) -> bool:
        return self.heading is not None

    def frame_heading(self) -> tuple[float, float]:
        """Heading used for frame transforms, falling back to the pitch axes."""
        return self.heading if self.heading is not None else PITCH_FRAME_HEADING


@dataclass(frozen=True)
class RelativeLocation:
    x: float
    y: float
    d: float
    theta: float


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centred moving average along axis 0; the window shrinks at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("smoothing window must be a positive odd integer")
    values = np.asarray(values, dtype=np.float64)
    if window == 1 or len(values) < 2:
        return values.copy()
    half = window // 2
    n = len(values)
    csum = np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)])
    idx = np.arange(n)
    lo = np.clip(idx - half, 0, n)
    hi = np.clip(idx + half + 1, 0, n)
    counts = (hi - lo).reshape((-1,) + (1,) * (values.ndim - 1))
    return (csum[hi] - csum[lo]) / counts


def kinematics_arrays(t: np.ndarray, pos: np.ndarray, smooth_window: int = 1):
    """Vectorised finite-difference kinematics.

    Returns ``(speed, heading, defined)`` where ``heading`` is ``(n, 2)`` and
    zeroed wherever ``defined`` is False.
    """
    t = np.asarray(t, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.float64)
    if len(t) < 2:
        raise TrackError("insufficient track")
    if np.any(np.diff(t) <= 0):
        raise TrackError("unordered track")
    p = moving_average(pos, smooth_window)
    vel = np.empty_like(p)
    vel[1:-1] = (p[2:] - p[:-2]) / (t[2:] - t[:-2])[:, None]
    vel[0] = (p[1] - p[0]) / (t[1] - t[0])
    vel[-1] = (p[-1] - p[-2]) / (t[-1] - t[-2])
    speed = np.hypot(vel[:, 0], vel[:, 1])
    defined = speed >= EPS_SPEED
    heading = np.zeros_like(vel)
    heading[defined] = vel[defined] / speed[defined, None]
    return speed, heading, defined


def derive_kinematics(track: Sequence[TrackingSample], smooth_window: int = 1) -> list[PlayerState]:
    """Speed and heading per sample via central differences.

    One-sided differences are used at the first and last sample. Heading is
    None where speed falls below :data:`EPS_SPEED`.
    """
    if len(track) < 2:
        raise TrackError("insufficient track")
    t = np.array([s.t for s in track])
    pos = np.array([[s.x, s.y] for s in track])
    speed, heading, defined = kinematics_arrays(t, pos, smooth_window)
    states = []
    for i, s in enumerate(track):
        h = (float(heading[i, 0]), float(heading[i, 1])) if defined[i] else None
        states.append(PlayerState(s.player_id, s.team_id, s.t, (s.x, s.y), h, float(speed[i])))
    return states


def _locate(ab_x: float, ab_y: float, bc_x: float, bc_y: float) -> RelativeLocation:
    d = math.hypot(bc_x, bc_y)
    if d == 0.0:
        return RelativeLocation(0.0, 0.0, 0.0, 0.0)
    dot = ab_x * bc_x + ab_y * bc_y
    cross = ab_x * bc_y - ab_y * bc_x
    # atan2(|AB x BC|, AB . BC) is the arccos of the normalised dot product,
    # without arccos's loss of precision near 0 and pi
    theta = math.atan2(abs(cross), dot)
    sign = -1.0 if cross < 0 else 1.0
    return RelativeLocation(d * math.cos(theta), sign * d * math.sin(theta), d, theta)


def relative_location(prev_pos, cur_pos, target_pos) -> RelativeLocation:
    """Location of ``target_pos`` in the frame of a player moving prev -> cur.

    ``y`` carries the side: positive when the target is on the player's left.
    """
    ab_x = cur_pos[0] - prev_pos[0]
    ab_y = cur_pos[1] - prev_pos[1]
    if ab_x == 0.0 and ab_y == 0.0:
        raise UndefinedOrientation("undefined orientation")
    return _locate(ab_x, ab_y, target_pos[0] - cur_pos[0], target_pos[1] - cur_pos[1])


def relative_to_heading(pos, heading, target_pos) -> RelativeLocation:
    """Same transform with the movement vector given as a heading."""
    if heading[0] == 0.0 and heading[1] == 0.0:
        raise UndefinedOrientation("undefined orientation")
    return _locate(heading[0], heading[1], target_pos[0] - pos[0], target_pos[1] - pos[1])


def frame_coords(pos, heading, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (x, y) of many targets in a player's frame; ``heading`` must be unit length."""
    targets = np.asarray(targets, dtype=np.float64)
    bx = targets[..., 0] - pos[0]
    by = targets[..., 1] - pos[1]
    hx, hy = heading
    return hx * bx + hy * by, hx * by - hy * bx
