"""PCA, k-means (k-means++ seeded Lloyd iterations), WSS curves and elbow selection."""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

DEFAULT_PCA_VARIANCE = 0.95
DEFAULT_MAX_COMPONENTS = 100


class NumericalError(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (C, D), orthonormal rows
    explained_variance: np.ndarray  # eigenvalues, descending
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> PcaModel:
        return cls(
            np.asarray(obj["mean"], dtype=float),
            np.asarray(obj["components"], dtype=float).reshape(len(obj["components"]), -1),
            np.asarray(obj["explained_variance"], dtype=float),
            np.asarray(obj["explained_variance_ratio"], dtype=float),
        )


def _check_matrix(X: Any) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise NumericalError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericalError("matrix contains non-finite entries")
    return X


def pca_fit(
    X: Any,
    n_components: int | None = None,
    variance: float | None = None,
    max_components: int | None = DEFAULT_MAX_COMPONENTS,
) -> PcaModel:
    """Fit PCA by eigendecomposition of the sample covariance.

    Give either `n_components` or a `variance` fraction; with neither, the
    default keeps enough components for 95% of the variance, capped at
    `max_components`. Only components with positive variance are kept.
    """
    X = _check_matrix(X)
    n, d = X.shape
    if n < 2 or d < 1:
        raise NumericalError(f"need at least 2 rows and 1 column, got {X.shape}")
    if n_components is not None and variance is not None:
        raise ValueError("give n_components or variance, not both")
    if variance is None and n_components is None:
        variance = DEFAULT_PCA_VARIANCE
    if variance is not None and not 0 < variance <= 1:
        raise ValueError(f"variance fraction must be in (0, 1], got {variance}")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    total = float(np.sum(np.clip(evals, 0, None)))
    scale = max(float(np.max(np.abs(X))), 1.0)
    if total <= 1e-24 * scale * scale * d:
        raise NumericalError("data has zero variance")
    keep = evals > max(evals[0], 0.0) * 1e-12
    evals, evecs = evals[keep], evecs[:, keep]
    ratios = evals / total

    if n_components is not None:
        if n_components < 1:
            raise ValueError("n_components must be >= 1")
        count = min(n_components, len(evals))
    else:
        cumulative = np.cumsum(ratios)
        reach = np.nonzero(cumulative >= variance - 1e-12)[0]
        count = int(reach[0]) + 1 if reach.size else len(evals)
    if max_components is not None:
        count = min(count, max_components)

    components = evecs[:, :count].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaModel(mean, components, evals[:count].copy(), ratios[:count].copy())


def pca_transform(model: PcaModel, X: Any) -> np.ndarray:
    X = np.atleast_2d(_check_matrix(np.atleast_2d(X)))
    if X.shape[1] != model.dim:
        raise NumericalError(f"expected {model.dim} columns, got {X.shape[1]}")
    return (X - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, Z: Any) -> np.ndarray:
    return np.asarray(Z, dtype=float) @ model.components + model.mean


@dataclass(frozen=True)
class KmeansModel:
    centers: np.ndarray
    labels: np.ndarray
    wss: float
    iterations: int
    seed: int
    wss_history: tuple[float, ...] = field(default=())

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def to_json(self) -> dict[str, Any]:
        return {
            "centers": self.centers.tolist(),
            "labels": self.labels.tolist(),
            "wss": self.wss,
            "iterations": self.iterations,
            "seed": self.seed,
            "wss_history": list(self.wss_history),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> KmeansModel:
        return cls(
            np.asarray(obj["centers"], dtype=float),
            np.asarray(obj["labels"], dtype=int),
            float(obj["wss"]),
            int(obj["iterations"]),
            int(obj["seed"]),
            tuple(obj.get("wss_history", ())),
        )


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkc,nkc->nk", diff, diff)


def _wss(X: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = X - centers[labels]
    return math.fsum(np.einsum("nc,nc->n", diff, diff).tolist())


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(X, X[chosen]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen center; pick unchosen indices in order
            rest = [i for i in range(n) if i not in chosen]
            chosen.append(rest[0])
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            chosen.append(min(idx, n - 1))
        closest = np.minimum(closest, _sq_dists(X, X[chosen[-1:]])[:, 0])
    return X[chosen].copy()


def _repair_empty(X: np.ndarray, centers: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for c in range(k):
        if np.any(labels == c):
            continue
        own = np.einsum("nc,nc->n", X - centers[labels], X - centers[labels])
        counts = np.bincount(labels, minlength=k)
        own[counts[labels] <= 1] = -1.0  # never empty another cluster
        far = int(np.argmax(own))
        labels[far] = c
        centers[c] = X[far]
    return labels


def kmeans_fit(X: Any, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-10) -> KmeansModel:
    """Lloyd's algorithm from k-means++ seeds.

    Stops when assignments stop changing, the WSS improvement drops below
    `tol`, or `max_iter` is reached. WSS is checked to be non-increasing at
    every iteration.
    """
    X = _check_matrix(X)
    n = X.shape[0]
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, k, rng)
    labels = np.full(n, -1)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_labels = np.argmin(_sq_dists(X, centers), axis=1)
        new_labels = _repair_empty(X, centers, new_labels, k)
        for c in range(k):
            centers[c] = X[new_labels == c].mean(axis=0)
        wss = _wss(X, centers, new_labels)
        if history and wss > history[-1] * (1 + 1e-12) + 1e-300:
            raise AssertionError(f"WSS increased at iteration {iterations}: {history[-1]} -> {wss}")
        unchanged = np.array_equal(new_labels, labels)
        labels = new_labels
        improvement = history[-1] - wss if history else math.inf
        history.append(wss)
        if unchanged or improvement < tol:
            break
    return KmeansModel(centers, labels, history[-1], iterations, seed, tuple(history))


def kmeans_best(X: Any, k: int, seed: int = 0, restarts: int = 5, max_iter: int = 300,
                tol: float = 1e-10) -> KmeansModel:
    """Lowest-WSS model over `restarts` seeds derived from `seed`."""
    seeds = np.random.SeedSequence(seed).generate_state(max(restarts, 1)).tolist()
    best: KmeansModel | None = None
    for s in seeds:
        model = kmeans_fit(X, k, seed=int(s), max_iter=max_iter, tol=tol)
        if best is None or model.wss < best.wss:
            best = model
    assert best is not None
    return best


def wss_curve(X: Any, k_range: Sequence[int], seed: int = 0, restarts: int = 5) -> list[tuple[int, float]]:
    X = _check_matrix(X)
    return [(int(k), kmeans_best(X, int(k), seed=seed, restarts=restarts).wss) for k in k_range]


def select_k_elbow(curve: Sequence[tuple[int, float]]) -> int:
    """Knee of a WSS curve: the point farthest from the end-to-end chord.

    Both axes are min-max normalised first, so the choice does not depend
    on the scale of the WSS values. Ties go to the smallest k.
    """
    if len(curve) < 3:
        raise ValueError("elbow selection needs at least 3 curve points")
    ks = np.array([k for k, _ in curve], dtype=float)
    ws = np.array([w for _, w in curve], dtype=float)
    if np.any(np.diff(ks) <= 0):
        raise ValueError("k values must be strictly increasing")
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    span = ws.max() - ws.min()
    y = (ws - ws.min()) / span if span > 0 else np.zeros_like(ws)
    x0, y0, x1, y1 = x[0], y[0], x[-1], y[-1]
    chord = math.hypot(x1 - x0, y1 - y0)
    dist = np.abs((x1 - x0) * (y0 - y) - (x0 - x) * (y1 - y0)) / chord
    dist = np.round(dist, 12)
    interior = dist[1:-1]
    return int(ks[1 + int(np.argmax(interior))])


def assign_cluster(model: KmeansModel, pca: PcaModel | None, x: Any) -> int:
    x = np.asarray(x, dtype=float)
    z = pca_transform(pca, x[None, :])[0] if pca is not None else x
    if z.shape[0] != model.centers.shape[1]:
        raise NumericalError(f"expected dimension {model.centers.shape[1]}, got {z.shape[0]}")
    d = np.einsum("kc,kc->k", model.centers - z, model.centers - z)
    return int(np.argmin(d))


def save_cluster_model(path: str | Path, pca: PcaModel | None, km: KmeansModel, config: dict[str, Any]) -> None:
    doc = {
        "format_version": 1,
        "config": config,
        "seed": km.seed,
        "pca": pca.to_json() if pca is not None else None,
        "kmeans": km.to_json(),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def load_cluster_model(path: str | Path) -> tuple[PcaModel | None, KmeansModel, dict[str, Any]]:
    doc = json.loads(Path(path).read_text("utf-8"))
    pca = PcaModel.from_json(doc["pca"]) if doc.get("pca") else None
    return pca, KmeansModel.from_json(doc["kmeans"]), doc.get("config", {})


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Chance-corrected pair agreement between two partitions (1.0 = identical up to relabeling)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("partitions differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(v: np.ndarray) -> float:
        return float(np.sum(v * (v - 1) / 2))

    index = pairs(table)
    row, col = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2
    expected = row * col / total if total else 0.0
    max_index = (row + col) / 2
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)
