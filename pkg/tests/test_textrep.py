from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factline.textrep import (
    EmbeddingError,
    EmptyVocabulary,
    SparseVector,
    Vocabulary,
    build_vocab,
    cosine_distance,
    cosine_similarity,
    default_stopwords,
    load_embeddings,
    preprocess,
    stem,
    vectorize,
)


def test_preprocess_vaccines_cured():
    # Porter by hand: vaccines -1a-> vaccine -5a (m=2)-> vaccin; cured -1b-> cur -(m=1, cvc)-> cure
    assert preprocess("Vaccines CURED!!!") == ["vaccin", "cure"]


@pytest.mark.parametrize(
    ("text", "expected"),
    [("", []), ("5G 5G 5G", ["5g", "5g", "5g"]), ("!!!", [])],
)
def test_preprocess_trivial(text, expected):
    assert preprocess(text) == expected


def test_preprocess_without_stemming_lowercases():
    assert preprocess("Vaccines CURED", stem_tokens=False) == ["vaccines", "cured"]


def test_preprocess_drops_stopwords():
    assert preprocess("the virus is in the water", stopwords=default_stopwords()) == ["viru", "water"]


@pytest.mark.parametrize(("word", "expected"), [("caresses", "caress"), ("ponies", "poni"), ("hopping", "hop"),
                                                ("relational", "relat"), ("generalization", "gener")])
def test_stem_reference_words(word, expected):
    assert stem(word) == expected


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=st.characters(codec="ascii"), max_size=60), st.booleans())
def test_preprocess_idempotent(text, use_stopwords):
    sw = default_stopwords() if use_stopwords else ()
    once = preprocess(text, stopwords=sw)
    assert preprocess(" ".join(once), stopwords=sw) == once


def test_vocab_examples():
    docs = [["a", "b"], ["b"]]
    v2 = build_vocab(docs, min_df=2)
    assert v2.index == {"b": 0} and v2.df == {"b": 2} and v2.n_docs == 2
    assert build_vocab(docs, min_df=1).index == {"a": 0, "b": 1}
    with pytest.raises(EmptyVocabulary):
        build_vocab(docs, min_df=3)


def test_vocab_json_round_trip():
    v = build_vocab([["x", "y"], ["y", "z"]])
    assert Vocabulary.from_json(json.loads(json.dumps(v.to_json()))) == v


def test_vectorize_count():
    vec = vectorize(["b", "b"], build_vocab([["b"]]), "count")
    assert list(vec.indices) == [0] and list(vec.weights) == [2.0]


def test_idf_hand_value():
    vocab = build_vocab([["a", "b"], ["b"]])
    assert vocab.idf("a") == pytest.approx(math.log(1.5) + 1, abs=1e-12)
    assert vocab.idf("a") == pytest.approx(1.4055, abs=5e-5)


def test_vectorize_oov_only_is_empty():
    vec = vectorize(["zzz"], build_vocab([["a"]]))
    assert len(vec.indices) == 0 and vec.norm() == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=8), min_size=1, max_size=10))
def test_tfidf_unit_norm(docs):
    vocab = build_vocab(docs)
    for d in docs:
        assert vectorize(d, vocab).norm() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=0, max_size=8), min_size=1, max_size=10))
def test_binarized_counts_reproduce_df(docs):
    if not any(docs):
        return
    vocab = build_vocab(docs)
    total = np.zeros(len(vocab))
    for d in docs:
        total += vectorize(d, vocab, "count").to_dense() > 0
    assert {t: int(total[i]) for t, i in vocab.index.items()} == vocab.df


def test_sparse_vector_validates():
    with pytest.raises(ValueError):
        SparseVector(np.array([3]), np.array([1.0]), 2)


@pytest.mark.parametrize(
    ("u", "v", "expected"),
    [((1, 2, 3), (1, 2, 3), 1.0), ((1, 0), (0, 1), 0.0), ((1, 0), (-1, 0), -1.0)],
)
def test_cosine_examples(u, v, expected):
    assert cosine_similarity(u, v) == pytest.approx(expected, abs=1e-12)
    assert cosine_distance(u, v) == pytest.approx(1 - expected, abs=1e-12)


def test_cosine_zero_vector_raises():
    with pytest.raises(ValueError):
        cosine_similarity((0, 0), (1, 0))


vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3
)


@settings(max_examples=200, deadline=None)
@given(vectors, vectors, st.floats(1e-3, 1e3))
def test_cosine_symmetric_and_scale_invariant(u, v, alpha):
    s = cosine_similarity(u, v)
    assert s == pytest.approx(cosine_similarity(v, u), abs=1e-12)
    assert cosine_similarity(np.multiply(alpha, u), v) == pytest.approx(s, abs=1e-12)
    assert -1.0 <= s <= 1.0


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_load_embeddings(tmp_path):
    rows = [{"id": "a", "vector": [1, 0]}, {"id": "b", "vector": [0, 1]}]
    table = load_embeddings(_write(tmp_path / "e.jsonl", rows))
    assert table.dim == 2 and set(table) == {"a", "b"}
    with pytest.raises(ValueError):
        table["a"][0] = 5.0


def test_load_embeddings_dimension_error_names_id(tmp_path):
    p = _write(tmp_path / "e.jsonl", [{"id": "a", "vector": [1, 0]}, {"id": "b", "vector": [0, 1, 2]}])
    with pytest.raises(EmbeddingError, match="b"):
        load_embeddings(p)


def test_load_embeddings_expected_dim(tmp_path):
    p = _write(tmp_path / "e.jsonl", [{"id": "a", "vector": [1, 0]}])
    with pytest.raises(EmbeddingError):
        load_embeddings(p, expected_dim=3)


def test_load_embeddings_rejects_nan(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text('{"id": "a", "vector": [1, NaN]}\n')
    with pytest.raises(EmbeddingError):
        load_embeddings(p)


def test_load_embeddings_rejects_duplicates(tmp_path):
    p = _write(tmp_path / "e.jsonl", [{"id": "a", "vector": [1, 0]}, {"id": "a", "vector": [0, 1]}])
    with pytest.raises(EmbeddingError, match="a"):
        load_embeddings(p)
