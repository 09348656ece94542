"""Product-Gaussian kernel density estimation and the commitment probability.

The commitment model holds one KDE over the committed (c = 1) samples and
one over the ignored (c = 0) samples, and reports

    p = w f1 / (w f1 + (1 - w) f0),    w = n1 / (n1 + n0)

for a query (x, y, v, t).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _accel
from .grid import FieldGrid, GridSpec
from .ingest import CommitmentSample, samples_to_array

SQRT_2PI = math.sqrt(2.0 * math.pi)
EPSILON_FLOOR = 1e-12
COMMITMENT_DIM = 4


class KdeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KdeModel:
    samples: np.ndarray
    bandwidths: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        h = np.ascontiguousarray(self.bandwidths, dtype=np.float64).reshape(-1)
        if len(s) < 1:
            raise KdeError("a KDE needs at least one sample")
        if h.shape != (s.shape[1],):
            raise KdeError("one bandwidth per dimension required")
        if not np.all(h > 0) or not np.all(np.isfinite(h)):
            raise KdeError("bandwidths must be positive and finite")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "bandwidths", h)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def sample_count(self) -> int:
        return self.samples.shape[0]

    @property
    def norm(self) -> float:
        return 1.0 / (self.sample_count * float(np.prod(self.bandwidths * SQRT_2PI)))

    def evaluate(self, points, workers: int = 1) -> np.ndarray:
        """Density at each row of ``points``."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        return self.norm * _accel.kernel_sum_chunked(pts, self.samples, 1.0 / self.bandwidths, workers=workers)

    def evaluate_fixed(self, points, fixed: dict[int, float], workers: int = 1) -> np.ndarray:
        """Density with some coordinates pinned to constants.

        ``points`` holds only the free coordinates, in dimension order. The
        kernel factor of every pinned coordinate is computed once per sample
        and folded into the sample weights.
        """
        free = [j for j in range(self.dim) if j not in fixed]
        pts = np.asarray(points, dtype=np.float64).reshape(-1, len(free))
        weights = np.ones(self.sample_count)
        for j, val in fixed.items():
            z = (val - self.samples[:, j]) / self.bandwidths[j]
            weights *= np.exp(-0.5 * z * z)
        sub = np.ascontiguousarray(self.samples[:, free])
        return self.norm * _accel.kernel_sum_chunked(pts, sub, 1.0 / self.bandwidths[free], weights, workers)


def scott_bandwidths(samples: np.ndarray) -> np.ndarray:
    n, d = samples.shape
    sd = samples.std(axis=0, ddof=1)
    return sd * n ** (-1.0 / (d + 4))


def fit_kde(samples, bandwidth_rule: str = "scott", manual_bandwidths=None,
            bandwidth_scale: float = 1.0) -> KdeModel:
    """Fit a diagonal-bandwidth Gaussian KDE.

    ``scott`` uses sigma_j * n**(-1/(d+4)) per dimension, times ``bandwidth_scale``.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 1:
        s = s.reshape(-1, 1)
    if not bandwidth_scale > 0:
        raise KdeError("bandwidth_scale must be positive")
    if bandwidth_rule == "manual":
        if manual_bandwidths is None:
            raise KdeError("manual bandwidth rule needs manual_bandwidths")
        h = np.asarray(manual_bandwidths, dtype=np.float64).reshape(-1)
        if np.any(h <= 0):
            raise KdeError("manual bandwidths must be positive")
        return KdeModel(s, h * bandwidth_scale)
    if bandwidth_rule != "scott":
        raise KdeError(f"unknown bandwidth rule {bandwidth_rule!r}")
    if len(s) < 2:
        raise KdeError("scott rule needs at least 2 samples")
    h = scott_bandwidths(s)
    if np.any(h <= 0):
        raise KdeError("degenerate dimension")
    return KdeModel(s, h * bandwidth_scale)


def density(model: KdeModel, point) -> float:
    return float(model.evaluate(np.asarray(point, dtype=np.float64).reshape(1, -1))[0])


def combine(f1, f0, w, floor: float = EPSILON_FLOOR):
    """Weighted posterior share of the committed density; 0 where both vanish."""
    f1 = np.asarray(f1, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    a = w * f1
    den = a + (1.0 - w) * f0
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(den < floor, 0.0, a / np.where(den < floor, 1.0, den))
    return p if p.ndim else float(p)


@dataclass(frozen=True, eq=False)
class CommitmentModel:
    f1: KdeModel
    f0: KdeModel
    epsilon_floor: float = EPSILON_FLOOR
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.f1.dim != self.f0.dim:
            raise KdeError("f1 and f0 must share a dimension")

    @property
    def w(self) -> float:
        n1, n0 = self.f1.sample_count, self.f0.sample_count
        return n1 / (n1 + n0)

    @property
    def dim(self) -> int:
        return self.f1.dim

    def probability(self, points, workers: int = 1) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        return combine(self.f1.evaluate(pts, workers), self.f0.evaluate(pts, workers), self.w, self.epsilon_floor)

    def probability_xyt(self, xyt, v: float, workers: int = 1) -> np.ndarray:
        """Probability for rows of (x, y, t) at a single speed ``v``."""
        fixed = {2: float(v)}
        f1 = self.f1.evaluate_fixed(xyt, fixed, workers)
        f0 = self.f0.evaluate_fixed(xyt, fixed, workers)
        return combine(f1, f0, self.w, self.epsilon_floor)

    def to_dict(self) -> dict:
        meta = dict(self.metadata)
        meta.setdefault("source_counts", {"c1": self.f1.sample_count, "c0": self.f0.sample_count})
        return {
            "dim": self.dim,
            "bandwidths": {"c1": self.f1.bandwidths.tolist(), "c0": self.f0.bandwidths.tolist()},
            "w": self.w,
            "samples_c1": self.f1.samples.tolist(),
            "samples_c0": self.f0.samples.tolist(),
            "epsilon_floor": self.epsilon_floor,
            "metadata": meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CommitmentModel":
        bw = doc["bandwidths"]
        if not isinstance(bw, dict):
            bw = {"c1": bw, "c0": bw}
        f1 = KdeModel(np.asarray(doc["samples_c1"], dtype=np.float64).reshape(-1, doc["dim"]), bw["c1"])
        f0 = KdeModel(np.asarray(doc["samples_c0"], dtype=np.float64).reshape(-1, doc["dim"]), bw["c0"])
        model = cls(f1, f0, float(doc.get("epsilon_floor", EPSILON_FLOOR)), dict(doc.get("metadata", {})))
        if "w" in doc and abs(model.w - float(doc["w"])) > 1e-12:
            raise KdeError("stored w disagrees with sample counts")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "CommitmentModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def commitment_probability(model: CommitmentModel, point) -> float:
    return float(model.probability(np.asarray(point, dtype=np.float64).reshape(1, -1))[0])


def fit_commitment_model(samples, bandwidth_rule: str = "scott", manual_bandwidths=None,
                         bandwidth_scale: float = 1.0, epsilon_floor: float = EPSILON_FLOOR) -> CommitmentModel:
    """Split samples on the label and fit one KDE per side.

    ``samples`` is a sequence of :class:`CommitmentSample` or an ``(n, 5)``
    array with columns x, y, v, t, c.
    """
    arr = samples_to_array(samples) if _is_sample_seq(samples) else np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != COMMITMENT_DIM + 1:
        raise KdeError("expected rows of (x, y, v, t, c)")
    c = arr[:, 4]
    pos, neg = arr[c == 1, :4], arr[c == 0, :4]
    if len(pos) == 0 or len(neg) == 0:
        raise KdeError("cannot weight one-sided data")
    f1 = fit_kde(pos, bandwidth_rule, manual_bandwidths, bandwidth_scale)
    f0 = fit_kde(neg, bandwidth_rule, manual_bandwidths, bandwidth_scale)
    meta = {"source_counts": {"c1": len(pos), "c0": len(neg)},
            "bandwidth_rule": bandwidth_rule, "scale": bandwidth_scale}
    return CommitmentModel(f1, f0, epsilon_floor, meta)


def _is_sample_seq(obj) -> bool:
    return isinstance(obj, Sequence) and len(obj) > 0 and isinstance(obj[0], CommitmentSample)


def slice_grid(model: CommitmentModel, v: float, t: float, window: GridSpec, workers: int = 1) -> FieldGrid:
    """Commitment probability over the (x, y) cells of ``window`` at fixed (v, t)."""
    X, Y = window.mesh()
    xy = np.column_stack([X.ravel(), Y.ravel()])
    fixed = {2: float(v), 3: float(t)}
    f1 = model.f1.evaluate_fixed(xy, fixed, workers)
    f0 = model.f0.evaluate_fixed(xy, fixed, workers)
    p = combine(f1, f0, model.w, model.epsilon_floor)
    return FieldGrid(window, np.asarray(p).reshape(window.nx, window.ny))


def fit_displacement_model(samples, bandwidth_rule: str = "scott", manual_bandwidths=None,
                           bandwidth_scale: float = 1.0) -> KdeModel:
    """KDE over observed displacements, the displacement-baseline model.

    Fit over (x, y, v, t) when several horizons are pooled, or over (x, y, v)
    when every sample shares one horizon.
    """
    arr = samples_to_array(samples) if _is_sample_seq(samples) else np.asarray(samples, dtype=np.float64)
    cols = 4 if np.ptp(arr[:, 3]) > 0 else 3
    return fit_kde(arr[:, :cols], bandwidth_rule, manual_bandwidths, bandwidth_scale)


def displacement_slice(model: KdeModel, v: float, t: float, window: GridSpec) -> FieldGrid:
    """Displacement density over (x, y) at fixed (v, t), normalised to integrate to 1 on the window.

    A 3-D model (single horizon) ignores ``t``.
    """
    X, Y = window.mesh()
    xy = np.column_stack([X.ravel(), Y.ravel()])
    fixed = {2: float(v)} if model.dim == 3 else {2: float(v), 3: float(t)}
    f = model.evaluate_fixed(xy, fixed)
    total = f.sum() * window.cell_size ** 2
    if total > 0:
        f = f / total
    return FieldGrid(window, f.reshape(window.nx, window.ny))
