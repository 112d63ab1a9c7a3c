"""Token preprocessing, BOW/TF-IDF vectors, and file-backed sentence embeddings."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cache
from importlib import resources
from pathlib import Path

import numpy as np
from nltk.stem.porter import PorterStemmer

_NON_TOKEN_RE = re.compile(r"[^a-z0-9'\s]+")
_STEMMER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


class EmptyVocabulary(ValueError):
    pass


class EmbeddingError(ValueError):
    pass


@cache
def stem(token: str) -> str:
    """Porter stem iterated to a fixed point, so stemming a stem is a no-op."""
    current = token
    while True:
        nxt = _STEMMER.stem(current)
        if nxt == current or not nxt:
            return current
        current = nxt


def default_stopwords() -> frozenset[str]:
    text = resources.files("factline.assets").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def load_stopwords(path: str | Path) -> frozenset[str]:
    lines = Path(path).read_text("utf-8").splitlines()
    return frozenset(w.strip().lower() for w in lines if w.strip() and not w.startswith("#"))


def preprocess(text: str, stem_tokens: bool = True, stopwords: Iterable[str] = ()) -> list[str]:
    stopwords = stopwords if isinstance(stopwords, (set, frozenset)) else frozenset(stopwords)
    cleaned = _NON_TOKEN_RE.sub(" ", text.lower().replace("’", "'"))
    tokens: list[str] = []
    for raw in cleaned.split():
        tok = raw.strip("'")
        if not tok or tok in stopwords:
            continue
        if stem_tokens:
            tok = stem(tok)
            if tok in stopwords:
                continue
        tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    index: Mapping[str, int]
    df: Mapping[str, int]
    n_docs: int

    def __len__(self) -> int:
        return len(self.index)

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df[token])) + 1.0

    def to_json(self) -> dict:
        return {"n_docs": self.n_docs, "df": dict(sorted(self.df.items()))}

    @classmethod
    def from_json(cls, obj: Mapping) -> Vocabulary:
        df = dict(obj["df"])
        return cls({t: i for i, t in enumerate(sorted(df))}, df, int(obj["n_docs"]))


def build_vocab(docs: Sequence[Sequence[str]], min_df: int = 1) -> Vocabulary:
    if not docs:
        raise ValueError("docs must be non-empty")
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc))
    kept = sorted(t for t, c in df.items() if c >= min_df)
    if not kept:
        raise EmptyVocabulary(f"no token reaches min_df={min_df} across {len(docs)} documents")
    return Vocabulary({t: i for i, t in enumerate(kept)}, {t: df[t] for t in kept}, len(docs))


@dataclass(frozen=True)
class SparseVector:
    indices: tuple[int, ...]
    weights: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("index out of range")
        if not all(math.isfinite(w) for w in self.weights):
            raise ValueError("weights must be finite")

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[list(self.indices)] = self.weights
        return out

    def norm(self) -> float:
        return math.sqrt(math.fsum(w * w for w in self.weights))


def vectorize(doc: Sequence[str], vocab: Vocabulary, weighting: str = "tfidf") -> SparseVector:
    if weighting not in ("count", "tfidf"):
        raise ValueError(f"unknown weighting {weighting!r}")
    counts = Counter(t for t in doc if t in vocab.index)
    items = sorted((vocab.index[t], float(c), t) for t, c in counts.items())
    if weighting == "count":
        return SparseVector(tuple(i for i, _, _ in items), tuple(c for _, c, _ in items), len(vocab))
    weights = [c * vocab.idf(t) for _, c, t in items]
    norm = math.sqrt(math.fsum(w * w for w in weights))
    if norm > 0:
        weights = [w / norm for w in weights]
    return SparseVector(tuple(i for i, _, _ in items), tuple(weights), len(vocab))


def to_matrix(vectors: Sequence[SparseVector | np.ndarray], dim: int | None = None) -> np.ndarray:
    """Stack sparse or dense vectors into a dense float matrix."""
    if not vectors:
        return np.zeros((0, dim or 0))
    rows = [v.to_dense() if isinstance(v, SparseVector) else np.asarray(v, dtype=float) for v in vectors]
    return np.vstack(rows)


class EmbeddingTable(Mapping[str, np.ndarray]):
    """Immutable id → dense vector table with one fixed dimension."""

    def __init__(self, vectors: Mapping[str, Sequence[float]], dim: int | None = None):
        table: dict[str, np.ndarray] = {}
        for rid, vec in vectors.items():
            arr = np.asarray(vec, dtype=float)
            if dim is None:
                dim = arr.shape[0]
            if arr.ndim != 1 or arr.shape[0] != dim:
                raise EmbeddingError(f"embedding for {rid!r} has dimension {arr.shape}, expected {dim}")
            if not np.all(np.isfinite(arr)):
                raise EmbeddingError(f"embedding for {rid!r} has non-finite components")
            arr.setflags(write=False)
            table[rid] = arr
        self._table = table
        self.dim = dim or 0

    def __getitem__(self, key: str) -> np.ndarray:
        return self._table[key]

    def __iter__(self):
        return iter(self._table)

    def __len__(self) -> int:
        return len(self._table)

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self._table]
        if missing:
            raise KeyError(f"missing embeddings for ids: {', '.join(missing[:20])}")
        if not ids:
            return np.zeros((0, self.dim))
        return np.vstack([self._table[i] for i in ids])


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> EmbeddingTable:
    vectors: dict[str, list[float]] = {}
    dim = expected_dim
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid, vec = str(obj["id"]), obj["vector"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EmbeddingError(f"{path}: line {lineno}: malformed embedding row") from exc
            if rid in vectors:
                raise EmbeddingError(f"{path}: duplicate embedding id {rid!r}")
            if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
                raise EmbeddingError(f"{path}: line {lineno}: vector for {rid!r} is not a numeric list")
            if dim is None:
                dim = len(vec)
            if len(vec) != dim:
                raise EmbeddingError(f"embedding for {rid!r} has dimension {len(vec)}, expected {dim}")
            if not all(math.isfinite(x) for x in vec):
                raise EmbeddingError(f"embedding for {rid!r} has non-finite components")
            vectors[rid] = vec
    return EmbeddingTable(vectors, dim)


def write_embeddings(table: Mapping[str, Sequence[float]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rid, vec in table.items():
            fh.write(json.dumps({"id": rid, "vector": [float(x) for x in vec]}) + "\n")


def cosine_similarity(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u / nu, v / nv), -1.0, 1.0))


def cosine_distance(u, v) -> float:
    return 1.0 - cosine_similarity(u, v)


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities between rows of A and rows of B."""
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("cosine similarity is undefined for a zero vector")
    return np.clip((A / na) @ (B / nb).T, -1.0, 1.0)
