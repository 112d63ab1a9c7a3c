"""Story-validity classifiers (multinomial NB, softmax LR, one-vs-rest linear SVM) and the per-cluster experiment."""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from factline.corpus import StoryRecord, train_test_split
from factline.metrics import AVERAGING, evaluate_f1
from factline.textrep import EmbeddingTable, SparseVector, build_vocab, preprocess, to_matrix, vectorize


class ClassifierKind(str, Enum):
    NAIVE_BAYES = "NaiveBayes"
    LOGISTIC_REGRESSION = "LogisticRegression"
    LINEAR_SVM = "LinearSvm"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0  # NB Laplace smoothing
    l2: float = 1e-3
    learning_rate: float | None = None  # LR: None -> 1/L from a Lipschitz bound
    max_epochs: int = 5000
    tol: float = 1e-6
    svm_epochs: int = 50
    svm_learning_rate: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class ClassifierModel:
    kind: ClassifierKind
    labels: tuple[Hashable, ...]
    params: Mapping[str, np.ndarray]
    dim: int
    config: TrainConfig = field(default_factory=TrainConfig)
    epochs_run: int = 0

    @property
    def constant(self) -> bool:
        return len(self.labels) == 1

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X, self.dim)
        if self.constant:
            return np.zeros((X.shape[0], 1))
        if self.kind is ClassifierKind.NAIVE_BAYES:
            return self.params["class_log_prior"] + X @ self.params["feature_log_prob"].T
        return X @ self.params["weights"] + self.params["bias"]

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "labels": [str(lab) for lab in self.labels],
            "dim": self.dim,
            "config": self.config.__dict__,
            "epochs_run": self.epochs_run,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }


def _as_matrix(X: Any, dim: int | None = None) -> np.ndarray:
    if isinstance(X, np.ndarray):
        M = np.atleast_2d(X.astype(float, copy=False)) if X.size else X.reshape(0, dim or 0).astype(float)
    else:
        rows = list(X)
        M = to_matrix(rows, dim) if rows else np.zeros((0, dim or 0))
    if dim is not None and M.shape[1] != dim and M.shape[0] > 0:
        raise ValueError(f"feature dimension {M.shape[1]} does not match model dimension {dim}")
    return M


def _label_order(y: Sequence[Hashable]) -> list[Hashable]:
    return sorted(set(y), key=str)


def _train_nb(X: np.ndarray, Y: np.ndarray, alpha: float) -> dict[str, np.ndarray]:
    if np.any(X < 0):
        raise ValueError("naive Bayes needs non-negative features (counts or TF-IDF)")
    # sum rows in a canonical order so parameters do not depend on input order, bit for bit
    order = np.lexsort(np.hstack([X, Y]).T[::-1])
    X, Y = X[order], Y[order]
    class_count = Y.sum(axis=0)
    feature_count = Y.T @ X
    smoothed = feature_count + alpha
    return {
        "class_log_prior": np.log(class_count / class_count.sum()),
        "feature_log_prob": np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True)),
    }


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def lr_loss_and_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray,
                     l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy + (l2/2)·‖W‖² and its gradient (bias unpenalised)."""
    n = X.shape[0]
    Z = X @ W + b
    Zs = Z - Z.max(axis=1, keepdims=True)
    log_p = Zs - np.log(np.exp(Zs).sum(axis=1, keepdims=True))
    loss = -float(np.sum(Y * log_p)) / n + 0.5 * l2 * float(np.sum(W * W))
    R = (np.exp(log_p) - Y) / n
    return loss, X.T @ R + l2 * W, R.sum(axis=0)


def _train_lr(X: np.ndarray, Y: np.ndarray, cfg: TrainConfig) -> tuple[dict[str, np.ndarray], int]:
    n, d = X.shape
    k = Y.shape[1]
    W = np.zeros((d, k))
    b = np.zeros(k)
    lr = cfg.learning_rate
    if lr is None:
        Xa = np.hstack([X, np.ones((n, 1))])
        sigma = np.linalg.norm(Xa, 2)
        lr = 1.0 / (0.5 * sigma * sigma / n + cfg.l2)
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        _, gW, gb = lr_loss_and_grad(W, b, X, Y, cfg.l2)
        if math.sqrt(float(np.sum(gW * gW) + np.sum(gb * gb))) < cfg.tol:
            epoch -= 1
            break
        W -= lr * gW
        b -= lr * gb
    return {"weights": W, "bias": b}, epoch


def _train_svm(X: np.ndarray, y_idx: np.ndarray, k: int, cfg: TrainConfig) -> dict[str, np.ndarray]:
    n, d = X.shape
    W = np.zeros((d, k))
    b = np.zeros(k)
    lam = cfg.l2
    for c in range(k):
        target = np.where(y_idx == c, 1.0, -1.0)
        w = np.zeros(d)
        bias = 0.0
        t = 0
        for _ in range(cfg.svm_epochs):
            for i in range(n):
                eta = cfg.svm_learning_rate / (1.0 + cfg.svm_learning_rate * lam * t)
                margin = target[i] * (X[i] @ w + bias)
                w *= 1.0 - eta * lam
                if margin < 1.0:
                    w += eta * target[i] * X[i]
                    bias += eta * target[i]
                t += 1
        W[:, c] = w
        b[c] = bias
    return {"weights": W, "bias": b}


def train_classifier(
    kind: ClassifierKind | str,
    X: Sequence[SparseVector | np.ndarray] | np.ndarray,
    y: Sequence[Hashable],
    config: TrainConfig | None = None,
) -> ClassifierModel:
    kind = ClassifierKind(kind)
    cfg = config or TrainConfig()
    M = _as_matrix(X)
    if M.shape[0] != len(y):
        raise ValueError(f"{M.shape[0]} rows but {len(y)} labels")
    if len(y) < 2:
        raise ValueError("need at least two training examples")
    labels = _label_order(y)
    dim = M.shape[1]
    if kind is ClassifierKind.NAIVE_BAYES and np.any(M < 0):
        raise ValueError("naive Bayes needs non-negative features (counts or TF-IDF)")
    if len(labels) == 1:
        warnings.warn(f"single-class training set; model always predicts {labels[0]!r}", stacklevel=2)
        return ClassifierModel(kind, tuple(labels), {}, dim, cfg)
    pos = {lab: i for i, lab in enumerate(labels)}
    y_idx = np.array([pos[v] for v in y])
    Y = np.eye(len(labels))[y_idx]
    epochs = 0
    if kind is ClassifierKind.NAIVE_BAYES:
        params = _train_nb(M, Y, cfg.alpha)
    elif kind is ClassifierKind.LOGISTIC_REGRESSION:
        params, epochs = _train_lr(M, Y, cfg)
    else:
        params = _train_svm(M, y_idx, len(labels), cfg)
        epochs = cfg.svm_epochs
    return ClassifierModel(kind, tuple(labels), params, dim, cfg, epochs)


def predict(model: ClassifierModel, X: Sequence[SparseVector | np.ndarray] | np.ndarray) -> list[Hashable]:
    M = _as_matrix(X, model.dim)
    if M.shape[0] == 0:
        return []
    if M.shape[1] != model.dim:
        raise ValueError(f"feature dimension {M.shape[1]} does not match model dimension {model.dim}")
    if model.constant:
        return [model.labels[0]] * M.shape[0]
    return [model.labels[i] for i in np.argmax(model.scores(M), axis=1)]


def predict_log_proba(model: ClassifierModel, X: Any) -> np.ndarray:
    """Normalised class log-posteriors (NB) or log-softmax of scores (LR/SVM)."""
    S = model.scores(_as_matrix(X, model.dim))
    return S - np.logaddexp.reduce(S, axis=1, keepdims=True)


# --- per-cluster experiment ---------------------------------------------------

BOW = "bow_tfidf"
EMBEDDING = "embedding"
DEFAULT_CELLS: tuple[tuple[str, ClassifierKind], ...] = (
    (BOW, ClassifierKind.NAIVE_BAYES),
    (BOW, ClassifierKind.LINEAR_SVM),
    (BOW, ClassifierKind.LOGISTIC_REGRESSION),
    (EMBEDDING, ClassifierKind.LINEAR_SVM),
    (EMBEDDING, ClassifierKind.LOGISTIC_REGRESSION),
)
RESULT_COLUMNS = ("cluster", "representation", "classifier", "f1_macro", "f1_weighted", "f1_micro", "n_train", "n_test")
INSUFFICIENT = "insufficient-data"
MIN_CLUSTER_SIZE = 5


@dataclass
class ValidityCell:
    cluster: str
    representation: str
    classifier: str
    f1: dict[str, float] | None
    n_train: int
    n_test: int
    pred: list[Hashable] = field(default_factory=list)
    gold: list[Hashable] = field(default_factory=list)

    def row(self) -> dict[str, str]:
        out = {
            "cluster": self.cluster,
            "representation": self.representation,
            "classifier": self.classifier,
            "n_train": str(self.n_train),
            "n_test": str(self.n_test),
        }
        for scheme in AVERAGING:
            out[f"f1_{scheme}"] = INSUFFICIENT if self.f1 is None else f"{self.f1[scheme]:.6f}"
        return out


def _cell_f1(pred: Sequence[Hashable], gold: Sequence[Hashable]) -> dict[str, float]:
    scores = evaluate_f1(pred, gold)
    return {scheme: scores.aggregate(scheme)["f1"] for scheme in AVERAGING}


def run_validity_experiment(
    records: Sequence[StoryRecord],
    assignments: Mapping[str, int],
    embeddings: EmbeddingTable | None,
    cells: Iterable[tuple[str, ClassifierKind | str]] = DEFAULT_CELLS,
    ratio: float = 0.8,
    seed: int = 0,
    stopwords: Iterable[str] = (),
    config: TrainConfig | None = None,
) -> list[ValidityCell]:
    """Train/evaluate every (cluster × representation × classifier) cell.

    Each cluster is split once (stratified by validity) and the same split
    serves every cell. The TF-IDF vocabulary is fitted on the training half.
    Returns per-cluster cells followed by "Avg" (mean over clusters) and
    "Pooled" (F1 over all clusters' test predictions) rows.
    """
    cells = [(rep, ClassifierKind(kind)) for rep, kind in cells]
    if any(rep == EMBEDDING for rep, _ in cells) and embeddings is None:
        raise ValueError("embedding cells requested but no embedding table given")
    stop = frozenset(stopwords)
    missing = [r.id for r in records if r.id not in assignments]
    if missing:
        raise ValueError(f"records without a cluster id: {', '.join(missing[:20])}")
    by_cluster: dict[int, list[StoryRecord]] = {}
    for rec in records:
        by_cluster.setdefault(int(assignments[rec.id]), []).append(rec)

    tokens = {r.id: preprocess(r.story, stopwords=stop) for r in records}
    results: list[ValidityCell] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for cid in sorted(by_cluster):
            members = by_cluster[cid]
            name = str(cid + 1)
            if len(members) < MIN_CLUSTER_SIZE:
                results.extend(ValidityCell(name, rep, kind.value, None, 0, 0) for rep, kind in cells)
                continue
            train, test = train_test_split(members, ratio, seed, stratify_by="validity")
            if not test:
                results.extend(ValidityCell(name, rep, kind.value, None, len(train), 0) for rep, kind in cells)
                continue
            y_train = [r.validity for r in train]
            y_test = [r.validity for r in test]
            feats: dict[str, tuple[np.ndarray, np.ndarray]] = {}
            if any(rep == BOW for rep, _ in cells):
                try:
                    vocab = build_vocab([tokens[r.id] for r in train])
                    feats[BOW] = (
                        to_matrix([vectorize(tokens[r.id], vocab, "tfidf") for r in train]),
                        to_matrix([vectorize(tokens[r.id], vocab, "tfidf") for r in test]),
                    )
                except ValueError:
                    pass
            if embeddings is not None:
                feats[EMBEDDING] = (embeddings.matrix([r.id for r in train]), embeddings.matrix([r.id for r in test]))
            for rep, kind in cells:
                if rep not in feats:
                    results.append(ValidityCell(name, rep, kind.value, None, len(train), len(test)))
                    continue
                Xtr, Xte = feats[rep]
                model = train_classifier(kind, Xtr, y_train, config)
                pred = predict(model, Xte)
                results.append(
                    ValidityCell(name, rep, kind.value, _cell_f1(pred, y_test), len(train), len(test), pred, y_test)
                )

    for rep, kind in cells:
        done = [c for c in results if c.representation == rep and c.classifier == kind.value and c.f1 is not None]
        if not done:
            results.append(ValidityCell("Avg", rep, kind.value, None, 0, 0))
            results.append(ValidityCell("Pooled", rep, kind.value, None, 0, 0))
            continue
        n_train = sum(c.n_train for c in done)
        n_test = sum(c.n_test for c in done)
        avg = {s: math.fsum(c.f1[s] for c in done) / len(done) for s in AVERAGING}  # type: ignore[index]
        results.append(ValidityCell("Avg", rep, kind.value, avg, n_train, n_test))
        pred = [p for c in done for p in c.pred]
        gold = [g for c in done for g in c.gold]
        results.append(ValidityCell("Pooled", rep, kind.value, _cell_f1(pred, gold), n_train, n_test, pred, gold))
    return results


def write_validity_csv(cells: Iterable[ValidityCell], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for cell in cells:
            writer.writerow(cell.row())


def save_model(model: ClassifierModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), sort_keys=True), encoding="utf-8")
