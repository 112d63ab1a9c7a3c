"""Cross-site agreement: nearest cross-site embeddings above a similarity floor, then modal validity."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from factline.corpus import VALIDITY_ORDER, StoryRecord, ValidityLabel
from factline.textrep import EmbeddingTable, cosine_matrix

DEFAULT_THRESHOLD = 0.70
DEFAULT_K = 5
DEFAULT_SITE_PAIRS: tuple[tuple[str, str], ...] = (
    ("Snopes", "PolitiFact"),
    ("Snopes", "Poynter"),
    ("PolitiFact", "Poynter"),
)
CSV_COLUMNS = ("cluster", "site_a", "site_b", "candidates", "matches", "agreement", "zero_candidate_flag")

_TIE_RANK = {label: i for i, label in enumerate(VALIDITY_ORDER)}


def mode_validity(labels: Sequence[ValidityLabel]) -> ValidityLabel:
    """Most frequent label; ties resolved True > PartiallyTrue > PartiallyFalse > False > Unknown."""
    if not labels:
        raise ValueError("mode of an empty label list is undefined")
    counts = Counter(ValidityLabel(lab) for lab in labels)
    top = max(counts.values())
    return min((lab for lab, c in counts.items() if c == top), key=_TIE_RANK.__getitem__)


@dataclass(frozen=True)
class Evidence:
    story_id: str
    neighbor_ids: tuple[str, ...]
    similarities: tuple[float, ...]
    mode: ValidityLabel
    own: ValidityLabel
    matched: bool

    def to_json(self, cluster: str, site_a: str, site_b: str) -> dict:
        return {
            "cluster": cluster,
            "site_a": site_a,
            "site_b": site_b,
            "story_id": self.story_id,
            "neighbor_ids": list(self.neighbor_ids),
            "similarities": [round(s, 12) for s in self.similarities],
            "mode_validity": self.mode.value,
            "own_validity": self.own.value,
            "matched": self.matched,
        }


@dataclass
class AgreementSlice:
    site_a: str
    site_b: str
    cluster: str = "all"
    candidates: int = 0
    matches: int = 0
    evidence: list[Evidence] = field(default_factory=list)

    @property
    def zero_candidates(self) -> bool:
        return self.candidates == 0

    @property
    def agreement(self) -> float:
        return self.matches / self.candidates if self.candidates else 0.0

    def row(self) -> dict[str, str]:
        return {
            "cluster": self.cluster,
            "site_a": self.site_a,
            "site_b": self.site_b,
            "candidates": str(self.candidates),
            "matches": str(self.matches),
            "agreement": f"{self.agreement:.6f}",
            "zero_candidate_flag": str(int(self.zero_candidates)),
        }


def agreement_between_sites(
    stories_a: Sequence[StoryRecord],
    stories_b: Sequence[StoryRecord],
    embeddings: Mapping[str, np.ndarray],
    threshold: float = DEFAULT_THRESHOLD,
    k: int = DEFAULT_K,
    metric: str = "similarity",
    site_a: str = "A",
    site_b: str = "B",
    cluster: str = "all",
) -> AgreementSlice:
    """A→B agreement for one story set pair.

    Each story in A looks up its `k` most similar B stories whose cosine
    similarity is at least `threshold` (or, with metric="distance", whose
    cosine distance is at most `threshold`). Stories with no such neighbour
    are not candidates; a candidate matches when the neighbours' modal
    validity equals its own. Neighbour ties rank the smaller story id first.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if metric not in ("similarity", "distance"):
        raise ValueError(f"unknown metric {metric!r}")
    missing = [r.id for r in (*stories_a, *stories_b) if r.id not in embeddings]
    if missing:
        raise KeyError(f"missing embeddings for ids: {', '.join(sorted(set(missing)))}")
    out = AgreementSlice(site_a, site_b, cluster)
    if not stories_a or not stories_b:
        return out
    A = np.vstack([embeddings[r.id] for r in stories_a])
    B = np.vstack([embeddings[r.id] for r in stories_b])
    sims = cosine_matrix(A, B)
    b_ids = [r.id for r in stories_b]
    for i, story in enumerate(stories_a):
        row = sims[i]
        keep = row >= threshold if metric == "similarity" else (1.0 - row) <= threshold
        idx = [j for j in range(len(stories_b)) if keep[j]]
        if not idx:
            continue
        idx.sort(key=lambda j: (-row[j], b_ids[j]))
        top = idx[:k]
        mode = mode_validity([stories_b[j].validity for j in top])
        matched = mode == story.validity
        out.candidates += 1
        out.matches += int(matched)
        out.evidence.append(
            Evidence(story.id, tuple(b_ids[j] for j in top), tuple(float(row[j]) for j in top), mode,
                     story.validity, matched)
        )
    return out


@dataclass
class AgreementReport:
    slices: list[AgreementSlice]
    averages: list[AgreementSlice]

    def rows(self) -> list[dict[str, str]]:
        out = [s.row() for s in self.slices]
        for avg in self.averages:
            row = avg.row()
            row["agreement"] = f"{avg_agreement(self.slices, avg.site_a, avg.site_b):.6f}"
            out.append(row)
        return out

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.rows())

    def write_evidence(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for sl in self.slices:
                for ev in sl.evidence:
                    fh.write(json.dumps(ev.to_json(sl.cluster, sl.site_a, sl.site_b), sort_keys=True) + "\n")


def avg_agreement(slices: Iterable[AgreementSlice], site_a: str, site_b: str) -> float:
    """Unweighted mean over clusters; zero-candidate clusters count as 0 like the table cells."""
    vals = [s.agreement for s in slices if s.site_a == site_a and s.site_b == site_b and s.cluster != "Avg"]
    return math.fsum(vals) / len(vals) if vals else 0.0


def agreement_table(
    records: Sequence[StoryRecord],
    assignments: Mapping[str, int],
    embeddings: EmbeddingTable | Mapping[str, np.ndarray],
    site_pairs: Sequence[tuple[str, str]] = DEFAULT_SITE_PAIRS,
    threshold: float = DEFAULT_THRESHOLD,
    k: int = DEFAULT_K,
    both_directions: bool = False,
    metric: str = "similarity",
) -> AgreementReport:
    pairs = list(site_pairs)
    if both_directions:
        pairs += [(b, a) for a, b in site_pairs if (b, a) not in pairs]
    by_cluster: dict[int, dict[str, list[StoryRecord]]] = {}
    for rec in records:
        if rec.id in assignments:
            by_cluster.setdefault(int(assignments[rec.id]), {}).setdefault(rec.site, []).append(rec)
    slices: list[AgreementSlice] = []
    for cid in sorted(by_cluster):
        sites = by_cluster[cid]
        for a, b in pairs:
            slices.append(
                agreement_between_sites(
                    sites.get(a, []), sites.get(b, []), embeddings, threshold, k, metric,
                    site_a=a, site_b=b, cluster=str(cid + 1),
                )
            )
    averages = []
    for a, b in pairs:
        part = [s for s in slices if s.site_a == a and s.site_b == b]
        averages.append(
            AgreementSlice(a, b, "Avg", sum(s.candidates for s in part), sum(s.matches for s in part))
        )
    return AgreementReport(slices, averages)
