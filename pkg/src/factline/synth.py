"""Deterministic synthetic corpora: the bundled desk-scale fixture and planted test fixtures."""

from __future__ import annotations

import argparse
import datetime as dt
import json
from pathlib import Path

import numpy as np

from factline.corpus import StoryRecord, ValidityLabel
from factline.storytype import AnnotatedSet
from factline.textrep import EmbeddingTable

EMBED_DIM = 16

# (story text, story type) per topic; topic order mirrors six broad story groups.
TOPICS: tuple[tuple[tuple[str, str], ...], ...] = (
    (
        ("Video of man eating bat soup in a restaurant in Wuhan", "CorrectionCallingOut"),
        ("Photo shows bodies lying in the streets of a city", "CorrectionCallingOut"),
        ("Scientists and experts answer questions and rumors about the virus", "CorrectionCallingOut"),
        ("Video shows people collapsing in a market from the virus", "CaseOccurrences"),
        ("Photo of an empty hospital proves the outbreak is a hoax", "CorrectionCallingOut"),
    ),
    (
        ("Did Kim Jong Un order the first patient to be executed", "PublicFigures"),
        ("Did Nostradamus predict the pandemic centuries ago", "Conspiracy"),
        ("Studies show the coronavirus was engineered to be a bioweapon", "Conspiracy"),
        ("Bill Gates planned the pandemic to sell a vaccine microchip", "PublicFigures"),
        ("The new 5G towers spread the virus across the country", "Conspiracy"),
    ),
    (
        ("The department of health issued a notification recommending people keep their throats moist",
         "FakeTruePublicHealthResponses"),
        ("Grape vinegar is the antidote to the coronavirus", "FakeCures"),
        ("Vitamin C with zinc can prevent and treat the infection", "FakeCures"),
        ("Drinking hot water every fifteen minutes will protect you", "FakeTrueFactOrPrevention"),
        ("The ministry recommends gargling salt water to stay safe", "FakeTruePublicHealthResponses"),
    ),
    (
        ("Kuwait boycotted the products of a Saudi dairy company", "CommercialActivityPromotion"),
        ("Red Cross is offering free home test kits door to door", "CommercialActivityPromotion"),
        ("Call the department of health if a store refuses you service for not wearing a mask", "EmergencyResponses"),
        ("A supermarket is selling masks at a huge discount this week", "CommercialActivityPromotion"),
        ("The army will enforce a national curfew starting tonight", "EmergencyResponses"),
    ),
    (
        ("There is magically already a vaccine available", "FakeCures"),
        ("The virus comes from rhino horns sold in markets", "FakeTrueFactOrPrevention"),
        ("Garlic soup cures the infection overnight", "FakeCures"),
        ("The virus cannot survive temperatures above twenty degrees", "FakeTrueFactOrPrevention"),
        ("A herbal remedy has cured thousands of patients", "FakeCures"),
    ),
    (
        ("Google has donated billions of rupees to fight the virus in India", "CommercialActivityPromotion"),
        ("China built a hospital for one thousand people in ten days", "FakeTruePublicHealthResponses"),
        ("The government will close all schools until September", "EmergencyResponses"),
        ("Health officials confirmed three new cases in the capital", "CaseOccurrences"),
        ("The state lockdown has been extended by two more weeks", "EmergencyResponses"),
    ),
)

TWEET_TOPICS: tuple[tuple[str, str], ...] = (
    ("everyone is panic buying toilet paper at the store again #covid19", "PanicBuying"),
    ("shelves empty, people hoarding rice and pasta #covid19", "PanicBuying"),
    ("stop blaming asian people for the virus #covid19", "Racism"),
    ("the virus was made in a lab as a bioweapon wake up #covid19", "Conspiracy"),
    ("5g towers are spreading it, look it up #covid19", "Conspiracy"),
    ("drink bleach to cure the virus, my cousin swears by it #covid19", "FakeCures"),
    ("vitamin c megadoses cure covid, doctors hide it #covid19", "FakeCures"),
    ("two more confirmed cases in my town today #covid19", "CaseOccurrences"),
)

RAW_VALIDITY = {
    ValidityLabel.TRUE: ("True", "Correct", "Correct Attribution"),
    ValidityLabel.PARTIALLY_TRUE: ("Mostly True", "Half true", "Mixture"),
    ValidityLabel.PARTIALLY_FALSE: ("Mostly False", "Partly False", "Two Pinocchios"),
    ValidityLabel.FALSE: ("False", "Pants on fire", "Misleading", "Fake", "Barely-true"),
    ValidityLabel.UNKNOWN: ("Unproven", "Unverified", "No evidence"),
}
# validity weights per topic, in ValidityLabel declaration order
TOPIC_VALIDITY = (
    (0.05, 0.05, 0.10, 0.70, 0.10),
    (0.05, 0.20, 0.10, 0.55, 0.10),
    (0.05, 0.10, 0.15, 0.60, 0.10),
    (0.10, 0.10, 0.10, 0.60, 0.10),
    (0.02, 0.03, 0.05, 0.85, 0.05),
    (0.40, 0.15, 0.10, 0.30, 0.05),
)
MEDIUMS = ("Facebook", "WhatsApp", "Facebook, WhatsApp", "Twitter", "https://dailynews-blog.com/story",
           "John Smith", "Instagram and Facebook", "YouTube", "")
SITES = ("Poynter", "Poynter", "Poynter", "PolitiFact", "Snopes")
WIKI_CACHE = (
    ("Kim Jong Un", True),
    ("Bill Gates", True),
    ("Nostradamus", True),
    ("Marlow Quillfeather", False),
)


def topic_centers(n_topics: int, dim: int, rng: np.random.Generator, spread: float = 4.0) -> np.ndarray:
    centers = rng.normal(size=(n_topics, dim))
    return spread * centers / np.linalg.norm(centers, axis=1, keepdims=True)


def make_fixture(out_dir: str | Path, n_stories: int = 60, n_tweets: int = 30, seed: int = 7) -> dict[str, Path]:
    """Write stories.jsonl, tweets.jsonl, embeddings.jsonl, annotations.jsonl and wiki_cache.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    centers = topic_centers(len(TOPICS), EMBED_DIM, rng)
    all_types = sorted({t for items in TOPICS for _, t in items} | {t for _, t in TWEET_TOPICS})
    type_offset = dict(zip(all_types, topic_centers(len(all_types), EMBED_DIM, rng, spread=1.5)))
    labels = list(ValidityLabel)
    start = dt.date(2020, 1, 14)
    span = (dt.date(2020, 6, 5) - start).days

    stories: list[dict] = []
    vectors: dict[str, list[float]] = {}
    annotations: list[dict] = []
    n_dupes = n_stories // 6
    base_n = n_stories - n_dupes
    for i in range(base_n):
        topic = i % len(TOPICS)
        text, stype = TOPICS[topic][(i // len(TOPICS)) % len(TOPICS[topic])]
        validity = labels[int(rng.choice(len(labels), p=TOPIC_VALIDITY[topic]))]
        raw = RAW_VALIDITY[validity][int(rng.integers(len(RAW_VALIDITY[validity])))]
        site = SITES[i % len(SITES)]
        day = start + dt.timedelta(days=int(rng.integers(span + 1)))
        rid = f"{site.lower()}-{i:03d}"
        stories.append({
            "id": rid, "site": site, "date": day.isoformat(), "raw_validity": raw,
            "story": f"{text} (claim {i})", "elaboration": None,
            "raw_medium": MEDIUMS[int(rng.integers(len(MEDIUMS)))] or None,
            "story_type": None, "kind": "FactCheck",
        })
        vectors[rid] = (centers[topic] + type_offset[stype] + rng.normal(scale=0.5, size=EMBED_DIM)).round(6).tolist()
        annotations.append({"id": rid, "label": stype, "medium": "stories"})

    # the same claims re-checked by another site, with the occasional verdict disagreement
    for j in range(n_dupes):
        src = stories[j * (base_n // max(n_dupes, 1)) % base_n]
        other = {"Poynter": "PolitiFact", "PolitiFact": "Poynter", "Snopes": "Poynter"}[src["site"]]
        rid = f"{other.lower()}-d{j:03d}"
        raw = src["raw_validity"] if rng.random() < 0.75 else "Unproven"
        day = dt.date.fromisoformat(src["date"]) + dt.timedelta(days=int(rng.integers(0, 5)))
        stories.append({**src, "id": rid, "site": other, "raw_validity": raw, "date": day.isoformat(),
                        "story": src["story"].replace("(claim", "(recheck of claim")})
        vectors[rid] = (np.asarray(vectors[src["id"]]) + rng.normal(scale=0.1, size=EMBED_DIM)).round(6).tolist()
        label = next(a["label"] for a in annotations if a["id"] == src["id"])
        annotations.append({"id": rid, "label": label, "medium": "stories"})

    tweet_shift = rng.normal(size=EMBED_DIM)
    tweet_shift = 3.0 * tweet_shift / np.linalg.norm(tweet_shift)
    type_topic = {stype: topic for topic, items in enumerate(TOPICS) for _, stype in items}
    tweets: list[dict] = []
    for i in range(n_tweets):
        text, stype = TWEET_TOPICS[i % len(TWEET_TOPICS)]
        rid = f"tweet-{i:03d}"
        day = start + dt.timedelta(days=int(rng.integers(span + 1)))
        tweets.append({
            "id": rid, "site": "Twitter", "date": day.isoformat(), "raw_validity": "False",
            "story": f"{text} [{i}]", "elaboration": None, "raw_medium": "Twitter",
            "story_type": None, "kind": "Tweet",
        })
        base = centers[type_topic[stype]] if stype in type_topic else np.zeros(EMBED_DIM)
        vectors[rid] = (base + 2 * type_offset[stype] + tweet_shift
                        + rng.normal(scale=0.6, size=EMBED_DIM)).round(6).tolist()
        annotations.append({"id": rid, "label": stype, "medium": "tweets"})

    paths = {name: out / f"{name}.jsonl" for name in ("stories", "tweets", "embeddings", "annotations", "wiki_cache")}
    _write_jsonl(paths["stories"], stories)
    _write_jsonl(paths["tweets"], tweets)
    _write_jsonl(paths["embeddings"], [{"id": k, "vector": v} for k, v in vectors.items()])
    _write_jsonl(paths["annotations"], annotations)
    _write_jsonl(paths["wiki_cache"], [
        {"name": n, "exists": e, "checked_at": "2020-06-05T00:00:00+00:00"} for n, e in WIKI_CACHE
    ])
    return paths


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def gaussian_blobs(n_per_blob: int, n_blobs: int, dim: int | None = None, separation: float = 20.0,
                   scale: float = 1.0, seed: int = 0, layout: str = "simplex") -> tuple[np.ndarray, np.ndarray]:
    """Isotropic blobs with ground-truth labels.

    layout="simplex" puts every pair of centers exactly `separation` apart
    (needs dim >= n_blobs, the default); "ring" spaces them on a circle in the
    first two coordinates.
    """
    dim = n_blobs if dim is None else dim
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_blobs, dim))
    if layout == "simplex":
        if dim < n_blobs:
            raise ValueError(f"simplex layout needs dim >= n_blobs, got dim={dim}, n_blobs={n_blobs}")
        centers[:, :n_blobs] = np.eye(n_blobs) * separation / np.sqrt(2)
    elif layout == "ring":
        if dim < 2:
            raise ValueError("ring layout needs dim >= 2")
        angles = 2 * np.pi * np.arange(n_blobs) / n_blobs
        centers[:, :2] = separation * np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        raise ValueError(f"unknown layout {layout!r}")
    X = np.vstack([c + rng.normal(scale=scale, size=(n_per_blob, dim)) for c in centers])
    y = np.repeat(np.arange(n_blobs), n_per_blob)
    return X, y


def planted_two_medium(
    shared: int = 4, exclusive: int = 2, per_type: int = 10, dim: int = 12, medium_shift: float = 1.5,
    noise: float = 0.3, seed: int = 0,
) -> tuple[AnnotatedSet, AnnotatedSet, AnnotatedSet, AnnotatedSet]:
    """Stories and tweets sharing `shared` types plus `exclusive` types of their own.

    Returns (stories_train, stories_test, tweets_train, tweets_test). Tweets of
    a shared type sit near the story cluster of that type but offset by a
    medium-wide shift.
    """
    rng = np.random.default_rng(seed)
    n_types = shared + 2 * exclusive
    centers = topic_centers(n_types, dim, rng, spread=3.0)
    shift = rng.normal(size=dim)
    shift = medium_shift * shift / np.linalg.norm(shift)
    shared_types = [f"Shared{i}" for i in range(shared)]
    story_only = [f"StoryOnly{i}" for i in range(exclusive)]
    tweet_only = [f"TweetOnly{i}" for i in range(exclusive)]
    story_types = shared_types + story_only
    tweet_types = shared_types + tweet_only
    center_of = dict(zip(shared_types + story_only + tweet_only, centers))

    def make(medium: str, types: list[str], offset: np.ndarray) -> tuple[AnnotatedSet, AnnotatedSet]:
        ids, vecs, labs = [], [], []
        for t in types:
            for j in range(per_type):
                ids.append(f"{medium}-{t}-{j:02d}")
                vecs.append(center_of[t] + offset + rng.normal(scale=noise, size=dim))
                labs.append(t)
        full = AnnotatedSet(medium, tuple(ids), np.vstack(vecs), tuple(labs))
        train_ids = [i for i in ids if int(i[-2:]) % 2 == 0]
        test_ids = [i for i in ids if int(i[-2:]) % 2 == 1]
        return full.subset(train_ids), full.subset(test_ids)

    s_train, s_test = make("stories", story_types, np.zeros(dim))
    t_train, t_test = make("tweets", tweet_types, shift)
    return s_train, s_test, t_train, t_test


def planted_validity(n_per_class: int = 20, dim: int = 10, clusters: int = 1, seed: int = 0
                     ) -> tuple[list[StoryRecord], dict[str, int], EmbeddingTable]:
    """Corpus whose validity is fully determined by a marker word and by an embedding direction.

    Every story mixes shared filler words with one marker per validity label;
    embeddings sit on well-separated per-label centers. Records are spread
    round-robin over `clusters` cluster ids.
    """
    rng = np.random.default_rng(seed)
    labels = list(ValidityLabel)
    markers = {lab: f"marker{chr(ord('a') + i)}" for i, lab in enumerate(labels)}
    filler = ["virus", "claim", "post", "share", "video", "report", "govern", "citi"]
    centers = topic_centers(len(labels), dim, rng, spread=6.0)
    records: list[StoryRecord] = []
    vectors: dict[str, np.ndarray] = {}
    assignments: dict[str, int] = {}
    for i in range(n_per_class * len(labels)):
        lab = labels[i % len(labels)]
        rid = f"v{i:04d}"
        words = list(rng.choice(filler, size=6)) + [markers[lab]]
        rng.shuffle(words)
        records.append(StoryRecord(rid, "Poynter", None, lab.value, lab, " ".join(words)))
        vectors[rid] = centers[labels.index(lab)] + rng.normal(scale=0.3, size=dim)
        assignments[rid] = (i // len(labels)) % clusters
    return records, assignments, EmbeddingTable(vectors)


def planted_agreement(n_pairs: int = 200, flip_rate: float = 0.5, dim: int = 32, seed: int = 0
                      ) -> tuple[list[StoryRecord], list[StoryRecord], dict[str, np.ndarray]]:
    """Site A and site B each hold one copy of every claim; B's verdict is flipped at `flip_rate`."""
    rng = np.random.default_rng(seed)
    labels = list(ValidityLabel)
    a_recs, b_recs, emb = [], [], {}
    flips = rng.permutation(n_pairs) < round(flip_rate * n_pairs)
    for i in range(n_pairs):
        base = rng.normal(size=dim)
        label = labels[int(rng.integers(len(labels)))]
        other = label if not flips[i] else labels[(labels.index(label) + 1 + int(rng.integers(4))) % 5]
        for site, lab, bucket in (("A", label, a_recs), ("B", other, b_recs)):
            rid = f"{site}-{i:04d}"
            bucket.append(StoryRecord(rid, site, None, lab.value, lab, f"claim {i}"))
            emb[rid] = base + rng.normal(scale=0.05, size=dim)
    return a_recs, b_recs, emb


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Write the synthetic desk-scale fixture corpus.")
    parser.add_argument("out", type=Path)
    parser.add_argument("--stories", type=int, default=60)
    parser.add_argument("--tweets", type=int, default=30)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    for name, path in make_fixture(args.out, args.stories, args.tweets, args.seed).items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
