"""Full-covariance Gaussian mixtures fit by EM, and an elbow curve over k.

Seeding contract: data are collapsed to their distinct rows in
lexicographic order, each carrying its multiplicity as a weight. k-means++
then draws from that canonical list. A fit is therefore unchanged by
reordering the input, and duplicating every point leaves weights, means
and covariances bitwise identical (the total log-likelihood doubles).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
MONOTONE_TOL = 1e-8


class GmmError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    seed: int | None = None
    n_iter: int = 0
    feature_means: np.ndarray | None = None
    feature_sds: np.ndarray | None = None
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def standardized(self) -> bool:
        return self.feature_means is not None

    def transform(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=np.float64)
        if self.standardized:
            x = (x - self.feature_means) / self.feature_sds
        return x

    def original_means(self) -> np.ndarray:
        if not self.standardized:
            return self.means.copy()
        return self.means * self.feature_sds + self.feature_means

    def n_params(self) -> int:
        return n_free_params(self.k, self.dim)

    def to_dict(self) -> dict:
        std = None
        if self.standardized:
            std = {"feature_means": self.feature_means.tolist(), "feature_sds": self.feature_sds.tolist()}
        return {
            "k": self.k,
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "means_original": self.original_means().tolist(),
            "standardization": std,
            "seed": self.seed,
            "log_likelihood": self.log_likelihood,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmModel":
        std = doc.get("standardization")
        return cls(np.asarray(doc["weights"], dtype=np.float64), np.asarray(doc["means"], dtype=np.float64),
                   np.asarray(doc["covariances"], dtype=np.float64), float(doc["log_likelihood"]),
                   doc.get("seed"), int(doc.get("n_iter", 0)),
                   None if std is None else np.asarray(std["feature_means"], dtype=np.float64),
                   None if std is None else np.asarray(std["feature_sds"], dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "GmmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def n_free_params(k: int, dim: int) -> int:
    return (k - 1) + k * dim + k * dim * (dim + 1) // 2


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def _log_gauss(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (x - mean).T)
    maha = np.einsum("ij,ij->j", z, z)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (x.shape[1] * LOG_2PI + logdet + maha)


def _log_joint(x, weights, means, covs) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return np.column_stack([logw[j] + _log_gauss(x, means[j], covs[j]) for j in range(len(weights))])


def _floor_cov(cov: np.ndarray, reg_floor: float) -> tuple[np.ndarray, bool]:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= reg_floor:
        return cov, False
    vals = np.maximum(vals, reg_floor)
    return (vecs * vals) @ vecs.T, True


def _canonical(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows, counts = np.unique(data, axis=0, return_counts=True)
    return rows, counts.astype(np.float64)


def _kmeanspp(x: np.ndarray, counts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = len(x)
    idx = [int(rng.choice(m, p=counts / counts.sum()))]
    d2 = ((x - x[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        p = counts * d2
        total = p.sum()
        if not total > 0:
            raise GmmError("fewer distinct points than components")
        nxt = int(rng.choice(m, p=p / total))
        idx.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[idx].copy()


def _validate(data, k: int) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise GmmError("data must be a 2-D array")
    if k < 1:
        raise GmmError("k must be at least 1")
    if not np.all(np.isfinite(x)):
        raise GmmError("data contain non-finite values")
    n, d = x.shape
    if n < k * (d + 1):
        raise GmmError(f"insufficient data: {n} rows for k={k}, dim={d} (need {k * (d + 1)})")
    return x


def standardization(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = data.mean(axis=0)
    sd = data.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def fit_em(data, k: int, seed: int = 0, max_iter: int = 500, tol: float = 1e-7, reg_floor: float = 1e-6,
           standardize: bool = False, strict: bool = True) -> GmmModel:
    """EM for a k-component full-covariance mixture from a seeded k-means++ start.

    Stops when the per-point mean log-likelihood gains less than ``tol``, or
    after ``max_iter`` iterations. Covariance eigenvalues are floored at
    ``reg_floor``. With ``strict``, a log-likelihood drop larger than 1e-8
    (total, absolute) raises :class:`ConvergenceError`; steps where the
    floor was active are exempt since they leave exact EM.
    """
    x = _validate(data, k)
    mu = sd = None
    if standardize:
        mu, sd = standardization(x)
        x = (x - mu) / sd
    pts, counts = _canonical(x)
    if len(pts) < k:
        raise GmmError("fewer distinct points than components")
    n_total = counts.sum()
    rng = np.random.default_rng(seed)

    means = _kmeanspp(pts, counts, k, rng)
    gmean = (counts @ pts) / n_total
    diff = pts - gmean
    gcov, _ = _floor_cov((diff * counts[:, None]).T @ diff / n_total, reg_floor)
    covs = np.repeat(gcov[None], k, axis=0)
    weights = np.full(k, 1.0 / k)

    lj = _log_joint(pts, weights, means, covs)
    ll_rows = logsumexp_rows(lj)
    ll = float(counts @ ll_rows)
    history = [ll]
    floored = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        resp = np.exp(lj - ll_rows[:, None]) * counts[:, None]
        nk = resp.sum(axis=0)
        weights = nk / n_total
        floored = False
        new_means = np.empty_like(means)
        new_covs = np.empty_like(covs)
        for j in range(k):
            if nk[j] <= 1e-12 * n_total:
                # starved component: keep its location, reset its shape
                new_means[j] = means[j]
                new_covs[j] = gcov
                continue
            new_means[j] = (resp[:, j] @ pts) / nk[j]
            dj = pts - new_means[j]
            cj = (dj * resp[:, j, None]).T @ dj / nk[j]
            new_covs[j], hit = _floor_cov(cj, reg_floor)
            floored |= hit
        means, covs = new_means, new_covs

        lj = _log_joint(pts, weights, means, covs)
        ll_rows = logsumexp_rows(lj)
        new_ll = float(counts @ ll_rows)
        if strict and not floored and new_ll < ll - MONOTONE_TOL:
            raise ConvergenceError(f"log-likelihood decreased at iteration {n_iter}: {ll!r} -> {new_ll!r}")
        history.append(new_ll)
        gain = (new_ll - ll) / n_total
        ll = new_ll
        if gain < tol:
            break

    return GmmModel(weights, means, covs, ll, seed, n_iter, mu, sd, tuple(history))


def log_likelihood(model: GmmModel, data) -> float:
    """Total log-likelihood of ``data`` (original units), log-sum-exp stabilised."""
    return float(point_log_density(model, data).sum())


def point_log_density(model: GmmModel, data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64).reshape(-1, model.dim)
    z = model.transform(x)
    out = logsumexp_rows(_log_joint(z, model.weights, model.means, model.covariances))
    if model.standardized:
        out = out - np.log(model.feature_sds).sum()
    return out


def responsibilities(model: GmmModel, point) -> np.ndarray:
    """Posterior component probabilities; shape (k,) for one point, (n, k) for many."""
    x = np.asarray(point, dtype=np.float64)
    single = x.ndim == 1
    z = model.transform(x.reshape(-1, model.dim))
    lj = _log_joint(z, model.weights, model.means, model.covariances)
    g = np.exp(lj - logsumexp_rows(lj)[:, None])
    g /= g.sum(axis=1, keepdims=True)
    return g[0] if single else g


def predict(model: GmmModel, data) -> np.ndarray:
    return responsibilities(model, np.asarray(data, dtype=np.float64).reshape(-1, model.dim)).argmax(axis=1)


@dataclass(frozen=True)
class ElbowPoint:
    k: int
    mean_nll: float
    n_params: int
    seed: int
    model: GmmModel = field(repr=False, compare=False)


def restart_seed(seed: int, k: int, restart: int) -> int:
    return int(np.random.SeedSequence([seed, k, restart]).generate_state(1)[0])


def elbow_curve(data, k_range: Sequence[int], seed: int = 0, restarts: int = 5, workers: int = 1,
                **fit_kwargs) -> list[ElbowPoint]:
    """Best-of-``restarts`` mean negative log-likelihood per point for each k.

    Restart seeds derive from (seed, k, restart) so the curve is the same
    for any ``workers``.
    """
    ks = list(k_range)
    if not ks or ks != sorted(ks):
        raise GmmError("k_range must be non-empty and ascending")
    x = np.asarray(data, dtype=np.float64)
    n = len(x)
    jobs = [(k, restart_seed(seed, k, r)) for k in ks for r in range(restarts)]

    def run(job):
        k, s = job
        return fit_em(x, k, seed=s, **fit_kwargs)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            fits = list(ex.map(run, jobs))
    else:
        fits = [run(j) for j in jobs]

    curve = []
    for k in ks:
        best = None
        for (jk, s), m in zip(jobs, fits):
            if jk == k and (best is None or m.log_likelihood > best[1].log_likelihood):
                best = (s, m)
        curve.append(ElbowPoint(k, -best[1].log_likelihood / n, best[1].n_params(), best[0], best[1]))
    return curve


def pick_elbow(curve: Sequence[ElbowPoint], flat_tol: float = 0.05) -> int:
    """k at the sharpest bend of the mean-NLL curve.

    Each k is scored by the drop into it over the drop out of it (the
    latter floored at ``flat_tol``), so a large first step does not hide a
    later bend. Only drops above ``flat_tol`` nats per point count as an
    improvement; a curve with none is flat and the smallest k wins.
    """
    ks = [p.k for p in curve]
    c = np.array([p.mean_nll for p in curve])
    if len(c) < 2:
        return ks[0]
    drops = c[:-1] - c[1:]
    best, best_score = ks[0], 0.0
    for i, drop_in in enumerate(drops):
        if drop_in <= flat_tol:
            continue
        drop_out = drops[i + 1] if i + 1 < len(drops) else 0.0
        score = drop_in / max(drop_out, flat_tol)
        if score > best_score:
            best, best_score = ks[i + 1], score
    return best
