from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factline.corpus import (
    PERSON,
    WEBSITE,
    DuplicateIdError,
    IngestError,
    UnmappedLabel,
    ValidityLabel,
    ValidityLexicon,
    harmonize_medium,
    harmonize_validity,
    ingest_records,
    train_test_split,
    write_records,
)

GOLDEN = Path(__file__).parent / "data" / "validity_golden.tsv"


def golden_rows() -> list[tuple[str, str]]:
    rows = []
    for line in GOLDEN.read_text("utf-8").splitlines():
        if line.startswith("#") or not line.strip():
            continue
        raw, label = line.split("\t")
        rows.append((raw, label))
    return rows


class TagAll:
    """Annotator stub that reports every non-empty part as a person."""

    def extract(self, text, record_id=None):
        return [text] if text.strip() else []


class TagNone:
    def extract(self, text, record_id=None):
        return []


def test_golden_has_thirty_variants():
    assert len(golden_rows()) == 30


@pytest.mark.parametrize(("raw", "label"), golden_rows())
def test_validity_golden(raw, label):
    assert harmonize_validity(raw) is ValidityLabel(label)


@pytest.mark.parametrize(
    ("raw", "label"),
    [("Pants on fire", "False"), ("Correct Attribution", "True"), ("Unproven", "Unknown"),
     ("FALSE", "False"), ("pants fire", "False"), ("  Half_True ", "PartiallyTrue")],
)
def test_validity_examples_and_normalization(raw, label):
    assert harmonize_validity(raw) is ValidityLabel(label)


def test_unmapped_label_raises_with_raw_string():
    with pytest.raises(UnmappedLabel) as err:
        harmonize_validity("totally bogus")
    assert err.value.raw == "totally bogus"


def test_permissive_lexicon_falls_back_to_unknown():
    lex = ValidityLexicon.load(fallback_unknown=True)
    assert harmonize_validity("totally bogus", lex) is ValidityLabel.UNKNOWN


def test_lexicon_rejects_unknown_target_label():
    with pytest.raises(ValueError):
        ValidityLexicon.from_pairs({"odd": "Maybe"})


@pytest.mark.parametrize(
    ("raw", "expected"),
    [
        ("https://example.net", {WEBSITE}),
        ("Facebook, WhatsApp", {"Facebook", "WhatsApp"}),
        ("www.facebook.com/posts/123", {WEBSITE, "Facebook"}),
        ("", set()),
        (None, set()),
    ],
)
def test_medium_examples(raw, expected):
    assert harmonize_medium(raw, TagNone()) == expected


def test_medium_person_from_annotator():
    assert harmonize_medium("John Smith", TagAll()) == {PERSON}


def test_medium_unrecognised_part_kept_as_other():
    assert harmonize_medium("chain letter", TagNone()) == {"chain letter"}


def test_medium_default_annotator_finds_person():
    assert PERSON in harmonize_medium("Facebook and Donald Trump")


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=40))
def test_medium_adding_platform_never_removes_tags(s):
    annotator = TagNone()
    assert harmonize_medium(s, annotator) <= harmonize_medium(s + ", Facebook", annotator)


def _records(n: int):
    from conftest import story

    return [story(f"r{i:03d}", list(ValidityLabel)[i % 5]) for i in range(n)]


def test_split_ten_records():
    train, test = train_test_split(_records(10), 0.8, seed=3)
    assert (len(train), len(test)) == (8, 2)


def test_split_single_record_warns():
    with pytest.warns(UserWarning):
        train, test = train_test_split(_records(1), 0.8)
    assert (len(train), len(test)) == (1, 0)


def test_split_is_seed_deterministic():
    recs = _records(37)
    assert train_test_split(recs, 0.7, seed=11) == train_test_split(recs, 0.7, seed=11)


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.2, 1.5])
def test_split_rejects_bad_ratio(ratio):
    with pytest.raises(ValueError):
        train_test_split(_records(5), ratio)


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(1, 60),
    ratio=st.floats(0.05, 0.95),
    seed=st.integers(0, 2**32 - 1),
    stratify=st.booleans(),
)
def test_split_partitions_input(n, ratio, seed, stratify):
    recs = _records(n)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train, test = train_test_split(recs, ratio, seed, "validity" if stratify else None)
    ids_train = {r.id for r in train}
    ids_test = {r.id for r in test}
    assert not ids_train & ids_test
    assert ids_train | ids_test == {r.id for r in recs}
    # input order is kept within each half
    assert [r.id for r in train] == sorted(ids_train)


def test_stratified_split_keeps_class_proportions():
    recs = _records(50)
    train, test = train_test_split(recs, 0.8, seed=0, stratify_by="validity")
    for label in ValidityLabel:
        assert sum(r.validity is label for r in test) == 2


def _write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_ingest_example_row(tmp_path):
    p = _write_jsonl(tmp_path / "in.jsonl", [{"id": "p1", "site": "poynter", "raw_validity": "FALSE", "story": "..."}])
    (rec,) = ingest_records(p)
    assert rec.validity is ValidityLabel.FALSE
    assert rec.site == "Poynter"
    assert rec.flags == ("missing_date",)


def test_ingest_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert ingest_records(p) == []


def test_ingest_duplicate_id_names_it(tmp_path):
    p = _write_jsonl(tmp_path / "d.jsonl", [{"id": "x", "story": "a"}, {"id": "x", "story": "b"}])
    with pytest.raises(DuplicateIdError, match="x"):
        ingest_records(p)


def test_ingest_bad_json_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "story": "ok"}\n{not json\n')
    with pytest.raises(IngestError, match="line 2"):
        ingest_records(p)


def test_ingest_unmapped_label_reports_line(tmp_path):
    p = _write_jsonl(tmp_path / "u.jsonl", [{"id": "a", "story": "s", "raw_validity": "Four Pinocchios"}])
    with pytest.raises(IngestError, match="line 1"):
        ingest_records(p)


def test_ingest_csv_extra_field_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,story\na,one\nb,two,three\n")
    with pytest.raises(IngestError, match="line 3"):
        ingest_records(p)


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_round_trip(tmp_path, fixture_dir, fmt):
    original = ingest_records(fixture_dir / "stories.jsonl")
    out = tmp_path / f"copy.{fmt}"
    write_records(original, out)
    assert ingest_records(out) == original


def test_unparseable_date_is_flagged(tmp_path):
    p = _write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "story": "s", "date": "sometime in March"}])
    (rec,) = ingest_records(p)
    assert rec.date is None
    assert "unparseable_date" in rec.flags
