"""Granular story-type classification: keyword + public-figure rules and embedding 1-NN."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from factline.enrich import RuleBasedAnnotator, WikiClient, extract_person_names
from factline.metrics import EvalScores, evaluate_f1
from factline.textrep import EmbeddingTable, preprocess

UNCLASSIFIED = "Unclassified"
PUBLIC_FIGURES = "PublicFigures"
DEFAULT_STORY_TYPES: tuple[str, ...] = (
    "CaseOccurrences",
    "CommercialActivityPromotion",
    "Conspiracy",
    "CorrectionCallingOut",
    "EmergencyResponses",
    "FakeCures",
    "FakeTrueFactOrPrevention",
    "FakeTruePublicHealthResponses",
    "PublicFigures",
)
EVAL_COLUMNS = ("train_medium", "test_medium", "method", "precision", "recall", "f1")
BASELINE_COLUMNS = ("medium", "mode", "n_labels", "expected_accuracy", "mc_accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class KeywordLexicon:
    """Ordered story type → trigger phrases, each phrase stored as a stemmed token tuple."""

    triggers: tuple[tuple[str, tuple[tuple[str, ...], ...]], ...]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[str]]) -> KeywordLexicon:
        owner: dict[tuple[str, ...], str] = {}
        ordered: list[tuple[str, tuple[tuple[str, ...], ...]]] = []
        for story_type, phrases in mapping.items():
            if not phrases:
                raise ValueError(f"story type {story_type!r} has no triggers")
            norm: list[tuple[str, ...]] = []
            for phrase in phrases:
                toks = tuple(preprocess(phrase))
                if not toks:
                    raise ValueError(f"trigger {phrase!r} for {story_type!r} is empty after normalisation")
                if owner.setdefault(toks, story_type) != story_type:
                    raise ValueError(f"trigger {phrase!r} maps to both {owner[toks]!r} and {story_type!r}")
                if toks not in norm:
                    norm.append(toks)
            ordered.append((story_type, tuple(norm)))
        return cls(tuple(ordered))

    @classmethod
    def load(cls, path: str | Path | None = None) -> KeywordLexicon:
        if path is None:
            text = resources.files("factline.assets").joinpath("storytype_lexicon.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_mapping(json.loads(text))

    def types(self) -> list[str]:
        return [t for t, _ in self.triggers]

    def match(self, tokens: Sequence[str], allowed: Iterable[str] | None = None) -> str | None:
        allowed_set = None if allowed is None else set(allowed)
        for story_type, phrases in self.triggers:
            if allowed_set is not None and story_type not in allowed_set:
                continue
            for phrase in phrases:
                n = len(phrase)
                if any(tuple(tokens[i:i + n]) == phrase for i in range(len(tokens) - n + 1)):
                    return story_type
        return None


def classify_bow_type(
    text: str,
    lexicon: KeywordLexicon,
    persons: Any | None = None,
    wiki: WikiClient | None = None,
    mode: str = "offline",
    record_id: str | None = None,
    figures_first: bool = True,
    allowed: Iterable[str] | None = None,
) -> str:
    """Public-figure check, then the first lexicon type whose trigger occurs.

    With `figures_first=False` the keyword scan runs before the figure check.
    `allowed` restricts the answer to a label set (e.g. the training medium's).
    """
    allowed_set = None if allowed is None else set(allowed)

    def figure() -> bool:
        if allowed_set is not None and PUBLIC_FIGURES not in allowed_set:
            return False
        if wiki is None:
            return False
        names = extract_person_names(text, persons or RuleBasedAnnotator.default(), record_id)
        return any(wiki.has_page(name, mode) for name in names)

    def keywords() -> str | None:
        return lexicon.match(preprocess(text), allowed_set)

    if figures_first:
        if figure():
            return PUBLIC_FIGURES
        return keywords() or UNCLASSIFIED
    hit = keywords()
    if hit is not None:
        return hit
    return PUBLIC_FIGURES if figure() else UNCLASSIFIED


@dataclass(frozen=True)
class AnnotatedSet:
    medium: str
    ids: tuple[str, ...]
    embeddings: np.ndarray  # (n, D)
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != len(self.ids) or len(self.ids) != len(self.labels):
            raise ValueError("ids, embeddings and labels must align")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def subset(self, ids: Iterable[str]) -> AnnotatedSet:
        pos = {rid: i for i, rid in enumerate(self.ids)}
        idx = [pos[rid] for rid in ids]
        return AnnotatedSet(self.medium, tuple(self.ids[i] for i in idx), self.embeddings[idx],
                            tuple(self.labels[i] for i in idx))

    @classmethod
    def from_table(cls, medium: str, labels: Mapping[str, str], table: EmbeddingTable) -> AnnotatedSet:
        ids = tuple(sorted(labels))
        return cls(medium, ids, table.matrix(list(ids)), tuple(labels[i] for i in ids))


def load_annotations(path: str | Path) -> dict[str, dict[str, str]]:
    """Annotation JSONL {"id","label","medium"} → {medium: {id: label}}."""
    out: dict[str, dict[str, str]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                rid, label, medium = str(obj["id"]), str(obj["label"]), str(obj["medium"])
            except KeyError as exc:
                raise ValueError(f"{path}: line {lineno}: missing key {exc}") from exc
            bucket = out.setdefault(medium, {})
            if rid in bucket:
                raise ValueError(f"{path}: duplicate annotation for id {rid!r}")
            bucket[rid] = label
    return out


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cosine distance is undefined for a zero vector")
    return M / norms


def nearest_labels(queries: np.ndarray, annotated: AnnotatedSet, k: int = 1) -> list[str]:
    """Label of the closest annotated item by cosine distance (majority of k when k > 1).

    Distance ties go to the lexicographically smallest record id; majority
    ties go to the label of the nearest tied neighbour.
    """
    if len(annotated) == 0:
        raise ValueError("annotated set is empty")
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    if Q.shape[1] != annotated.dim:
        raise ValueError(f"query dimension {Q.shape[1]} does not match annotated dimension {annotated.dim}")
    dist = 1.0 - np.clip(_unit_rows(Q) @ _unit_rows(annotated.embeddings).T, -1.0, 1.0)
    id_rank = np.argsort(np.argsort(np.array(annotated.ids, dtype=object), kind="stable"), kind="stable")
    out: list[str] = []
    for row in dist:
        order = np.lexsort((id_rank, row))[:k]
        if k == 1:
            out.append(annotated.labels[order[0]])
            continue
        votes = Counter(annotated.labels[j] for j in order)
        top = max(votes.values())
        out.append(next(annotated.labels[j] for j in order if votes[annotated.labels[j]] == top))
    return out


def classify_nn_type(query: Sequence[float] | np.ndarray, annotated: AnnotatedSet, k: int = 1) -> str:
    return nearest_labels(np.asarray(query, dtype=float)[None, :], annotated, k)[0]


def cross_medium_eval(
    train: AnnotatedSet,
    test: AnnotatedSet,
    method: str = "nn",
    texts: Mapping[str, str] | None = None,
    lexicon: KeywordLexicon | None = None,
    persons: Any | None = None,
    wiki: WikiClient | None = None,
    mode: str = "offline",
    k: int = 1,
    figures_first: bool = True,
) -> EvalScores:
    """Score test items classified with `train` as the only reference.

    Gold labels missing from the training label set can never be predicted,
    so they count as misses. Unclassified predictions are misses too; the
    sentinel is excluded from the macro average.
    """
    if len(train) == 0 or len(test) == 0:
        raise ValueError("train and test sets must be non-empty")
    if method == "nn":
        pred = nearest_labels(test.embeddings, train, k)
    elif method == "bow":
        if texts is None:
            raise ValueError("bow method needs the story texts")
        lexicon = lexicon or KeywordLexicon.load()
        allowed = set(train.labels)
        pred = [
            classify_bow_type(texts[rid], lexicon, persons, wiki, mode, record_id=rid,
                              figures_first=figures_first, allowed=allowed)
            for rid in test.ids
        ]
    else:
        raise ValueError(f"unknown method {method!r}")
    return evaluate_f1(pred, list(test.labels), averaging="macro", ignore=(UNCLASSIFIED,))


@dataclass(frozen=True)
class BaselineResult:
    mode: str
    n_labels: int
    expected_accuracy: float
    mc_accuracy: float
    mc_accuracy_se: float
    precision: float
    recall: float
    f1: float
    trials: int


def random_baseline(
    gold: Sequence[Hashable],
    mode: str = "uniform",
    trials: int = 1000,
    seed: int = 0,
    labels: Sequence[Hashable] | None = None,
    chunk: int = 10000,
) -> BaselineResult:
    """Expected scores of a label-agnostic guesser.

    uniform: each guess is uniform over the label set, expected accuracy 1/k.
    frequency: guesses follow the empirical gold distribution, expected
    accuracy Σp². Monte-Carlo estimates of accuracy and macro P/R/F1 are
    averaged over `trials` independent guess vectors.
    """
    if not gold:
        raise ValueError("gold labels must be non-empty")
    label_set = list(labels) if labels is not None else sorted(set(gold), key=str)
    for g in gold:
        if g not in label_set:
            label_set.append(g)
    pos = {lab: i for i, lab in enumerate(label_set)}
    g_idx = np.array([pos[g] for g in gold])
    n, k = len(gold), len(label_set)
    counts = np.bincount(g_idx, minlength=k)
    if mode == "uniform":
        probs = np.full(k, 1.0 / k)
        expected = 1.0 / k
    elif mode == "frequency":
        probs = counts / n
        expected = math.fsum(p * p for p in probs.tolist())
    else:
        raise ValueError(f"unknown baseline mode {mode!r}")

    rng = np.random.default_rng(seed)
    correct = 0
    p_sum = r_sum = f_sum = 0.0
    present = counts > 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        draws = rng.choice(k, size=(m, n), p=probs)
        hit = draws == g_idx[None, :]
        correct += int(hit.sum())
        prec = np.zeros((m, k))
        rec = np.zeros((m, k))
        for c in range(k):
            pred_c = draws == c
            tp = np.sum(pred_c & (g_idx == c)[None, :], axis=1)
            npred = pred_c.sum(axis=1)
            prec[:, c] = np.divide(tp, npred, out=np.zeros(m), where=npred > 0)
            rec[:, c] = tp / counts[c] if counts[c] else 0.0
        f1 = np.divide(2 * prec * rec, prec + rec, out=np.zeros_like(prec), where=(prec + rec) > 0)
        # average over classes that appear in gold or in this trial's guesses
        used = present[None, :] | np.stack([(draws == c).any(axis=1) for c in range(k)], axis=1)
        denom = used.sum(axis=1)
        p_sum += float(np.sum((prec * used).sum(axis=1) / denom))
        r_sum += float(np.sum((rec * used).sum(axis=1) / denom))
        f_sum += float(np.sum((f1 * used).sum(axis=1) / denom))
        done += m
    total = trials * n
    mc = correct / total
    return BaselineResult(
        mode, k, expected, mc, math.sqrt(max(expected * (1 - expected), 0.0) / total),
        p_sum / trials, r_sum / trials, f_sum / trials, trials,
    )


def write_eval_csv(rows: Iterable[Mapping[str, Any]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: (f"{row[c]:.6f}" if isinstance(row[c], float) else row[c]) for c in EVAL_COLUMNS})


def eval_row(train_medium: str, test_medium: str, method: str, scores: EvalScores) -> dict[str, Any]:
    agg = scores.aggregate("macro")
    return {"train_medium": train_medium, "test_medium": test_medium, "method": method, **agg}


def baseline_rows(medium: str, results: Iterable[BaselineResult]) -> list[dict[str, Any]]:
    return [
        {
            "medium": medium,
            "mode": r.mode,
            "n_labels": r.n_labels,
            "expected_accuracy": r.expected_accuracy,
            "mc_accuracy": r.mc_accuracy,
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
        }
        for r in results
    ]


def write_baseline_csv(rows: Iterable[Mapping[str, Any]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BASELINE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: (f"{row[c]:.6f}" if isinstance(row[c], float) else row[c]) for c in BASELINE_COLUMNS})

