"""Canonical record model, validity/medium harmonization, ingestion and splitting."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import re
import warnings
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Protocol

import numpy as np


class ValidityLabel(str, Enum):
    TRUE = "True"
    PARTIALLY_TRUE = "PartiallyTrue"
    PARTIALLY_FALSE = "PartiallyFalse"
    FALSE = "False"
    UNKNOWN = "Unknown"

    def __str__(self) -> str:
        return self.value


VALIDITY_ORDER: tuple[ValidityLabel, ...] = tuple(ValidityLabel)


class RecordKind(str, Enum):
    FACT_CHECK = "FactCheck"
    TWEET = "Tweet"

    def __str__(self) -> str:
        return self.value


KNOWN_SITES = {"poynter": "Poynter", "snopes": "Snopes", "politifact": "PolitiFact", "twitter": "Twitter"}

# Medium tags; anything else is carried as a lowercase "other" name.
WEBSITE = "Website"
PERSON = "Person"
PLATFORMS: dict[str, str] = {
    "facebook": "Facebook",
    "fb": "Facebook",
    "twitter": "Twitter",
    "tweet": "Twitter",
    "tweets": "Twitter",
    "whatsapp": "WhatsApp",
    "whats app": "WhatsApp",
    "instagram": "Instagram",
    "youtube": "YouTube",
    "tiktok": "TikTok",
    "tik tok": "TikTok",
    "email": "Email",
    "e mail": "Email",
}
MEDIUM_TAGS = frozenset({WEBSITE, PERSON, *PLATFORMS.values()})

_TLDS = "com|net|org|gov|edu|info|biz|io|co|us|uk|in|ph|ng|za|ca|au|news|tv|me|ly|de|fr|es|it|br|mx"
_URL_RE = re.compile(
    rf"(?:https?://|www\.)[\w-][^\s,;]*|\b[\w-]+(?:\.[\w-]+)*\.(?:{_TLDS})\b(?:/[^\s,;]*)?", re.IGNORECASE
)
_PART_SPLIT_RE = re.compile(r"\s*(?:[,;|/&+]|\band\b)\s*", re.IGNORECASE)


class UnmappedLabel(ValueError):
    """Raised when a raw validity string has no lexicon entry."""

    def __init__(self, raw: str):
        super().__init__(f"unmapped validity label: {raw!r}")
        self.raw = raw


class IngestError(ValueError):
    pass


class DuplicateIdError(IngestError):
    def __init__(self, ids: Sequence[str]):
        super().__init__(f"duplicate record id(s): {', '.join(sorted(ids))}")
        self.ids = list(ids)


class PersonAnnotator(Protocol):
    def extract(self, text: str, record_id: str | None = None) -> list[str]: ...


@dataclass(frozen=True)
class StoryRecord:
    id: str
    site: str
    date: dt.date | None
    raw_validity: str
    validity: ValidityLabel
    story: str
    elaboration: str | None = None
    raw_medium: str | None = None
    mediums: frozenset[str] = frozenset()
    story_type: str | None = None
    kind: RecordKind = RecordKind.FACT_CHECK
    raw_date: str | None = None
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict[str, Any]:
        """Serialize the raw (input-schema) fields; harmonized fields are recomputed on ingest."""
        return {
            "id": self.id,
            "site": self.site,
            "date": self.date.isoformat() if self.date else self.raw_date,
            "raw_validity": self.raw_validity,
            "story": self.story,
            "elaboration": self.elaboration,
            "raw_medium": self.raw_medium,
            "story_type": self.story_type,
            "kind": self.kind.value,
        }


def normalize_label(raw: str) -> str:
    s = raw.strip().lower().replace("’", "'")
    s = re.sub(r"[-_]+", " ", s)
    return re.sub(r"\s+", " ", s).strip()


@dataclass(frozen=True)
class ValidityLexicon:
    entries: Mapping[str, ValidityLabel]
    fallback_unknown: bool = False

    @classmethod
    def from_pairs(cls, pairs: Mapping[str, str], fallback_unknown: bool = False) -> ValidityLexicon:
        entries: dict[str, ValidityLabel] = {}
        for raw, label in pairs.items():
            key = normalize_label(raw)
            value = ValidityLabel(label)
            if entries.get(key, value) != value:
                raise ValueError(f"conflicting lexicon entries for {raw!r}")
            entries[key] = value
        return cls(entries, fallback_unknown)

    @classmethod
    def load(cls, path: str | Path | None = None, fallback_unknown: bool = False) -> ValidityLexicon:
        if path is None:
            text = resources.files("factline.assets").joinpath("validity_lexicon.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_pairs(json.loads(text), fallback_unknown)

    @classmethod
    def default(cls) -> ValidityLexicon:
        return cls.load()


def harmonize_validity(raw: str, lexicon: ValidityLexicon | None = None) -> ValidityLabel:
    lexicon = lexicon or ValidityLexicon.default()
    label = lexicon.entries.get(normalize_label(raw))
    if label is None:
        if lexicon.fallback_unknown:
            return ValidityLabel.UNKNOWN
        raise UnmappedLabel(raw)
    return label


def harmonize_medium(raw: str | None, person_annotator: PersonAnnotator | None = None) -> frozenset[str]:
    """Map a free-text originating-medium field to a set of medium tags.

    URLs and bare domains become Website. The rest is split into
    comma/semicolon/"and"-separated parts; each part contributes Person when
    the annotator finds a name and a platform tag for every platform it
    mentions. A part matching neither is kept as a lowercase "other" name.
    """
    if raw is None or not raw.strip():
        return frozenset()
    if person_annotator is None:
        from factline.enrich import RuleBasedAnnotator

        person_annotator = RuleBasedAnnotator.default()
    tags: set[str] = set()
    for url in _URL_RE.findall(raw):
        tags.add(WEBSITE)
        tags |= _platform_tags(url)
    for part in _PART_SPLIT_RE.split(_URL_RE.sub(" , ", raw)):
        part = part.strip()
        if not part:
            continue
        part_tags = _platform_tags(part)
        if person_annotator.extract(part):
            part_tags.add(PERSON)
        if not part_tags:
            part_tags.add(re.sub(r"\s+", " ", part.lower()))
        tags |= part_tags
    return frozenset(tags)


def _platform_tags(text: str) -> set[str]:
    words = " " + re.sub(r"[^a-z0-9]+", " ", text.lower()) + " "
    return {tag for name, tag in PLATFORMS.items() if f" {name} " in words}


def normalize_site(raw: str | None) -> str:
    if raw is None or not raw.strip():
        return "unknown"
    key = raw.strip().lower()
    return KNOWN_SITES.get(key, key)


DateParser = Callable[[str], "dt.date | None"]


def parse_iso_date(raw: str) -> dt.date | None:
    try:
        return dt.date.fromisoformat(raw.strip()[:10])
    except ValueError:
        return None


_COLUMNS = ("id", "site", "date", "raw_validity", "story", "elaboration", "raw_medium", "story_type", "kind")


def build_record(
    row: Mapping[str, Any],
    index: int,
    lexicon: ValidityLexicon,
    person_annotator: PersonAnnotator | None = None,
    date_parsers: Sequence[DateParser] = (),
) -> StoryRecord:
    def opt(key: str) -> str | None:
        value = row.get(key)
        if value is None:
            return None
        value = str(value)
        return value if value.strip() else None

    story = opt("story")
    if story is None:
        raise IngestError(f"row {index}: missing story text")
    site = normalize_site(opt("site"))
    rid = opt("id") or f"{site.lower()}-{index}"

    flags: list[str] = []
    raw_date = opt("date")
    date = None
    if raw_date is not None:
        for parser in (parse_iso_date, *date_parsers):
            date = parser(raw_date)
            if date is not None:
                break
        if date is None:
            flags.append("unparseable_date")
    else:
        flags.append("missing_date")

    raw_validity = opt("raw_validity") or ""
    validity = harmonize_validity(raw_validity, lexicon) if raw_validity else ValidityLabel.UNKNOWN

    kind_raw = (opt("kind") or "").strip().lower()
    if kind_raw in ("tweet", "tweets"):
        kind = RecordKind.TWEET
    elif kind_raw in ("", "factcheck", "fact_check", "fact-check"):
        kind = RecordKind.TWEET if not kind_raw and site == "Twitter" else RecordKind.FACT_CHECK
    else:
        raise IngestError(f"row {index}: unknown kind {kind_raw!r}")

    raw_medium = opt("raw_medium")
    return StoryRecord(
        id=rid,
        site=site,
        date=date,
        raw_validity=raw_validity,
        validity=validity,
        story=story,
        elaboration=opt("elaboration"),
        raw_medium=raw_medium,
        mediums=harmonize_medium(raw_medium, person_annotator),
        story_type=opt("story_type"),
        kind=kind,
        raw_date=raw_date,
        flags=tuple(flags),
    )


def _iter_rows(path: Path, fmt: str) -> Iterable[tuple[int, Mapping[str, Any]]]:
    if fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IngestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
                if not isinstance(obj, dict):
                    raise IngestError(f"{path}: line {lineno}: expected a JSON object")
                yield lineno, obj
    elif fmt == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, strict=True)
            try:
                for row in reader:
                    if None in row:
                        raise IngestError(f"{path}: line {reader.line_num}: more fields than header columns")
                    yield reader.line_num, row
            except csv.Error as exc:
                raise IngestError(f"{path}: line {reader.line_num}: {exc}") from exc
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def ingest_records(
    path: str | Path,
    format: str | None = None,
    lexicon: ValidityLexicon | None = None,
    person_annotator: PersonAnnotator | None = None,
    date_parsers: Sequence[DateParser] = (),
) -> list[StoryRecord]:
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    lexicon = lexicon or ValidityLexicon.default()
    if person_annotator is None:
        from factline.enrich import RuleBasedAnnotator

        person_annotator = RuleBasedAnnotator.default()
    records: list[StoryRecord] = []
    seen: set[str] = set()
    dupes: list[str] = []
    for index, (lineno, row) in enumerate(_iter_rows(path, fmt)):
        try:
            rec = build_record(row, index, lexicon, person_annotator, date_parsers)
        except UnmappedLabel as exc:
            raise IngestError(f"{path}: line {lineno}: {exc}") from exc
        except IngestError as exc:
            raise IngestError(f"{path}: line {lineno}: {exc}") from exc
        if rec.id in seen:
            dupes.append(rec.id)
        seen.add(rec.id)
        records.append(rec)
    if dupes:
        raise DuplicateIdError(sorted(set(dupes)))
    return records


def write_records(records: Iterable[StoryRecord], path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
    elif fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_COLUMNS)
            writer.writeheader()
            for rec in records:
                writer.writerow({k: ("" if v is None else v) for k, v in rec.to_json().items()})
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def train_test_split(
    records: Sequence[Any],
    ratio: float = 0.8,
    seed: int = 0,
    stratify_by: str | Callable[[Any], Any] | None = None,
) -> tuple[list[Any], list[Any]]:
    """Deterministic (optionally stratified) partition; both halves keep input order."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(records)
    if n == 0:
        raise ValueError("cannot split an empty list")
    target = _round_half_up(ratio * n)
    rng = np.random.default_rng(seed)

    if stratify_by is None:
        order = rng.permutation(n)
        train_idx = set(order[:target].tolist())
        if n - target == 0:
            warnings.warn(f"split of {n} record(s) at ratio {ratio} leaves the test set empty", stacklevel=2)
    else:
        key = stratify_by if callable(stratify_by) else (lambda r: getattr(r, stratify_by))
        strata: dict[str, list[int]] = {}
        for i, rec in enumerate(records):
            strata.setdefault(str(key(rec)), []).append(i)
        names = sorted(strata)
        quota: dict[str, int] = {}
        for name in names:
            if len(strata[name]) == 1:
                warnings.warn(f"stratum {name!r} has a single record; assigning it to train", stacklevel=2)
                quota[name] = 1
        rest = [s for s in names if s not in quota]
        remaining = max(target - sum(quota.values()), 0)
        exact = {s: ratio * len(strata[s]) for s in rest}
        for s in rest:
            quota[s] = min(int(math.floor(exact[s])), len(strata[s]))
        short = remaining - sum(quota[s] for s in rest)
        by_remainder = sorted(rest, key=lambda s: (-(exact[s] - math.floor(exact[s])), s))
        i = 0
        while short > 0 and by_remainder:
            s = by_remainder[i % len(by_remainder)]
            if quota[s] < len(strata[s]):
                quota[s] += 1
                short -= 1
            i += 1
            if i > 4 * n:
                break
        while short < 0:
            shrinkable = [s for s in rest if quota[s] > 0]
            if not shrinkable:
                break
            s = max(shrinkable, key=lambda s: (quota[s] - exact[s], s))
            quota[s] -= 1
            short += 1
        train_idx = set()
        for name in names:
            members = strata[name]
            perm = rng.permutation(len(members))
            train_idx.update(members[j] for j in perm[: quota[name]])
    train = [r for i, r in enumerate(records) if i in train_idx]
    test = [r for i, r in enumerate(records) if i not in train_idx]
    return train, test


def with_story_types(records: Sequence[StoryRecord], labels: Mapping[str, str]) -> list[StoryRecord]:
    return [replace(r, story_type=labels.get(r.id, r.story_type)) for r in records]


__all__ = [
    "DuplicateIdError",
    "IngestError",
    "PersonAnnotator",
    "RecordKind",
    "StoryRecord",
    "UnmappedLabel",
    "VALIDITY_ORDER",
    "ValidityLabel",
    "ValidityLexicon",
    "build_record",
    "harmonize_medium",
    "harmonize_validity",
    "ingest_records",
    "normalize_label",
    "normalize_site",
    "train_test_split",
    "write_records",
]
