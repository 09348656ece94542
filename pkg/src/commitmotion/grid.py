"""Rectangular scalar fields over the pitch, plus CSV and PPM export."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Pitch:
    """Elliptical playing surface inscribed in a length x width box centred on the origin."""

    length: float = 160.0
    width: float = 130.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("pitch dimensions must be positive")

    def contains(self, x, y):
        return (2.0 * np.asarray(x) / self.length) ** 2 + (2.0 * np.asarray(y) / self.width) ** 2 <= 1.0

    def attacking_goal(self, direction: int = 1) -> tuple[float, float]:
        return (direction * self.length / 2.0, 0.0)

    @classmethod
    def parse(cls, text: str) -> "Pitch":
        """Parse ``"LxW"``, e.g. ``"160x130"``."""
        try:
            length, width = (float(p) for p in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"pitch must look like LxW, got {text!r}") from None
        return cls(length, width)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("empty grid")

    @classmethod
    def for_pitch(cls, pitch: Pitch, cell_size: float = 2.0) -> "GridSpec":
        nx = max(1, int(math.ceil(pitch.length / cell_size - 1e-9)))
        ny = max(1, int(math.ceil(pitch.width / cell_size - 1e-9)))
        return cls((-nx * cell_size / 2.0, -ny * cell_size / 2.0), cell_size, nx, ny)

    @classmethod
    def from_window(cls, xmin: float, xmax: float, ymin: float, ymax: float, resolution: float) -> "GridSpec":
        if not resolution > 0:
            raise ValueError("resolution must be positive")
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("empty window")
        nx = int(round((xmax - xmin) / resolution))
        ny = int(round((ymax - ymin) / resolution))
        if nx < 1 or ny < 1:
            raise ValueError("empty window")
        return cls((xmin, ymin), resolution, nx, ny)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D cell-centre coordinates along x and y."""
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_size
        return xs, ys

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = self.centers()
        return np.meshgrid(xs, ys, indexing="ij")

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        i = int(math.floor((x - self.origin[0]) / self.cell_size))
        j = int(math.floor((y - self.origin[1]) / self.cell_size))
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)


@dataclass
class FieldGrid:
    """Scalar values on ``spec``; ``mask`` is True for in-bounds cells."""

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.nx, self.spec.ny):
            raise ValueError("values shape does not match grid spec")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)

    def masked_values(self) -> np.ndarray:
        return self.values[self.mask]

    def to_csv(self, dest) -> None:
        """Write ``x,y,value`` rows for in-bounds cells."""
        X, Y = self.spec.mesh()
        lines = ["x,y,value"]
        for x, y, v in zip(X[self.mask], Y[self.mask], self.values[self.mask]):
            lines.append(f"{x:.6f},{y:.6f},{v:.17g}")
        Path(dest).write_text("\n".join(lines) + "\n")

    def to_ppm(self, dest, vmin: float = 0.0, vmax: float = 1.0) -> None:
        """Plain (P3) grayscale PPM; +y up, +x right; out-of-bounds cells black."""
        if not vmax > vmin:
            raise ValueError("vmax must exceed vmin")
        scaled = np.clip((self.values - vmin) / (vmax - vmin), 0.0, 1.0)
        levels = np.rint(scaled * 255).astype(int)
        levels[~self.mask] = 0
        img = levels.T[::-1]
        rows = [" ".join(f"{v} {v} {v}" for v in row) for row in img]
        Path(dest).write_text(f"P3\n{self.spec.nx} {self.spec.ny}\n255\n" + "\n".join(rows) + "\n")
