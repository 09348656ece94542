"""Pass features, rank correlation, and location-smoothed feature maps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _accel
from .grid import FieldGrid, GridSpec, Pitch
from .ingest import PassEvent
from .kde import CommitmentModel
from .spatial import BALL_SPEED, Snapshot, dominance_values, team_influence_at

FEATURE_HEADER = ["pass_id", "distance", "dominance", "influence", "equity", "dist_to_goal"]
SMOOTH_RADIUS = 15.0
MIN_WEIGHT = 1e-6


class PassingError(ValueError):
    pass


class EquitySurface:
    """Field-equity values on cell centres, read by bilinear interpolation.

    Queries beyond the outermost cell centres are clamped to the edge.
    """

    def __init__(self, grid: FieldGrid, synthetic: bool = False):
        if not np.all(np.isfinite(grid.values[grid.mask])):
            raise PassingError("equity surface has non-finite values")
        self.grid = grid
        self.synthetic = synthetic

    def value_at(self, x: float, y: float) -> float:
        spec = self.grid.spec
        v = self.grid.values
        fx = (x - spec.origin[0]) / spec.cell_size - 0.5
        fy = (y - spec.origin[1]) / spec.cell_size - 0.5
        fx = min(max(fx, 0.0), spec.nx - 1.0)
        fy = min(max(fy, 0.0), spec.ny - 1.0)
        i0, j0 = min(int(fx), max(spec.nx - 2, 0)), min(int(fy), max(spec.ny - 2, 0))
        i1, j1 = min(i0 + 1, spec.nx - 1), min(j0 + 1, spec.ny - 1)
        ax, ay = fx - i0, fy - j0
        # difference form: exact on constant surfaces
        v00, v10, v01, v11 = v[i0, j0], v[i1, j0], v[i0, j1], v[i1, j1]
        return float(v00 + ax * (v10 - v00) + ay * (v01 - v00) + ax * ay * (v11 - v10 - v01 + v00))

    @classmethod
    def from_dict(cls, doc: dict) -> "EquitySurface":
        spec = GridSpec((float(doc["origin"][0]), float(doc["origin"][1])), float(doc["cell_size"]),
                        int(doc["nx"]), int(doc["ny"]))
        values = np.asarray(doc["values"], dtype=np.float64)
        if values.shape != (spec.nx, spec.ny):
            raise PassingError(f"equity values shape {values.shape} != ({spec.nx}, {spec.ny})")
        return cls(FieldGrid(spec, values), synthetic=bool(doc.get("synthetic", False)))

    def to_dict(self) -> dict:
        spec = self.grid.spec
        doc = {"origin": list(spec.origin), "cell_size": spec.cell_size, "nx": spec.nx, "ny": spec.ny,
               "values": self.grid.values.tolist()}
        if self.synthetic:
            doc["synthetic"] = True
        return doc

    @classmethod
    def load(cls, path) -> "EquitySurface":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def placeholder(cls, pitch: Pitch = Pitch(), cell_size: float = 2.0) -> "EquitySurface":
        """SYNTHETIC stand-in: 1 at the attacking goal falling linearly to 0 at the farthest cell.

        Not an AFL equity model.
        """
        spec = GridSpec.for_pitch(pitch, cell_size)
        X, Y = spec.mesh()
        gx, gy = pitch.attacking_goal(1)
        d = np.hypot(X - gx, Y - gy)
        return cls(FieldGrid(spec, 1.0 - d / d.max()), synthetic=True)

    @classmethod
    def linear_x(cls, pitch: Pitch, cell_size: float, slope: float) -> "EquitySurface":
        spec = GridSpec.for_pitch(pitch, cell_size)
        X, _ = spec.mesh()
        return cls(FieldGrid(spec, slope * X), synthetic=True)

    @classmethod
    def constant(cls, pitch: Pitch, cell_size: float, value: float = 0.5) -> "EquitySurface":
        spec = GridSpec.for_pitch(pitch, cell_size)
        return cls(FieldGrid(spec, np.full((spec.nx, spec.ny), value)), synthetic=True)


@dataclass(frozen=True)
class PassFeatures:
    pass_id: int
    distance: float
    dominance: float
    influence: float
    equity: float
    dist_to_goal: float
    receive_pos: tuple[float, float] = (math.nan, math.nan)

    def row(self) -> list[str]:
        return [str(self.pass_id)] + [f"{getattr(self, k):.17g}" for k in FEATURE_HEADER[1:]]


def equity_delta(equity: EquitySurface, origin, receive, attack_direction: int = 1) -> float:
    """FE(receiver) - FE(passer). The surface is stored for a team attacking +x;
    a team attacking -x reads it through a half-turn about the centre."""
    s = 1.0 if attack_direction >= 0 else -1.0
    return equity.value_at(s * receive[0], s * receive[1]) - equity.value_at(s * origin[0], s * origin[1])


def compute_pass_features(pass_: PassEvent, snapshot: Snapshot, model: CommitmentModel,
                          equity: EquitySurface, pitch: Pitch = Pitch(), ball_speed: float = BALL_SPEED,
                          attack_direction: int = 1) -> PassFeatures:
    """Receiver-location features for one pass, with the ball at the kick origin.

    The passer is left out of their own team's influence, as they are left
    out of commitment samples.
    """
    rx, ry = pass_.receive_pos
    if not bool(pitch.contains(rx, ry)):
        raise PassingError("off-pitch reception")
    team = pass_.team_id
    point = np.array([[rx, ry]])
    inf_a = float(team_influence_at(snapshot, team, model, point, pass_.origin_pos, ball_speed,
                                    exclude=(pass_.passer_id,))[0])
    opp = [t for t in snapshot.teams() if t != team]
    inf_o = 0.0
    if opp:
        inf_o = float(team_influence_at(snapshot, opp[0], model, point, pass_.origin_pos, ball_speed)[0])
    gx, gy = pitch.attacking_goal(1 if attack_direction >= 0 else -1)
    return PassFeatures(
        pass_id=pass_.pass_id,
        distance=pass_.distance,
        dominance=float(dominance_values(inf_a, inf_o)),
        influence=inf_a,
        equity=equity_delta(equity, pass_.origin_pos, pass_.receive_pos, attack_direction),
        dist_to_goal=math.hypot(rx - gx, ry - gy),
        receive_pos=(rx, ry),
    )


def rank_average(values) -> np.ndarray:
    """1-based ranks with tied values sharing their mean rank."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    ranks = np.empty(len(a))
    i = 0
    n = len(a)
    while i < n:
        j = i
        while j + 1 < n and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise PassingError("spearman needs two equal-length vectors of at least 2 values")
    rx = rank_average(xs)
    ry = rank_average(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise PassingError("undefined correlation")
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t))


def spearman_significance(rho: float, n: int) -> float:
    """Two-sided p-value of rho via the t approximation with n - 2 degrees of freedom."""
    if n < 10:
        raise PassingError("significance needs n >= 10")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return student_t_two_sided(t, n - 2)


def smooth_by_location(passes: Sequence[PassFeatures], feature: str | Callable[[PassFeatures], float],
                       spec: GridSpec, kernel_radius: float = SMOOTH_RADIUS, pitch: Pitch | None = None,
                       workers: int = 1) -> FieldGrid:
    """Gaussian-weighted (Nadaraya-Watson) mean of a feature around each cell centre.

    Cells whose total weight is below 1e-6, or outside ``pitch``, are masked.
    """
    if not passes:
        raise PassingError("nothing to smooth")
    if not kernel_radius > 0:
        raise PassingError("kernel_radius must be positive")
    get = (lambda p: getattr(p, feature)) if isinstance(feature, str) else feature
    vals = np.array([get(p) for p in passes], dtype=np.float64)
    locs = np.array([p.receive_pos for p in passes], dtype=np.float64)
    X, Y = spec.mesh()
    cells = np.column_stack([X.ravel(), Y.ravel()])
    inv_h = np.full(2, 1.0 / kernel_radius)
    ref = vals[0]
    wsum = _accel.kernel_sum_chunked(cells, locs, inv_h, None, workers)
    fsum = _accel.kernel_sum_chunked(cells, locs, inv_h, vals - ref, workers)
    ok = wsum >= MIN_WEIGHT
    out = np.full(len(cells), np.nan)
    out[ok] = np.clip(ref + fsum[ok] / wsum[ok], vals.min(), vals.max())
    mask = ok.reshape(spec.nx, spec.ny)
    if pitch is not None:
        mask &= pitch.contains(X, Y)
    values = out.reshape(spec.nx, spec.ny)
    values[~mask] = 0.0
    return FieldGrid(spec, values, mask)


def write_features_csv(features: Sequence[PassFeatures], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_HEADER)
        for f in features:
            w.writerow(f.row())


def read_features_csv(source) -> tuple[list[str], np.ndarray]:
    """Returns (pass ids, float matrix of the five feature columns)."""
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != FEATURE_HEADER:
            raise PassingError(f"features: line 1: expected header {','.join(FEATURE_HEADER)}")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[1:6]])
            except ValueError:
                raise PassingError(f"features: line {lineno}: non-numeric value") from None
            ids.append(row[0])
    return ids, np.array(rows, dtype=np.float64).reshape(-1, 5)
