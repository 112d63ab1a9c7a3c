from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factline.enrich import (
    HttpResponse,
    RateLimiter,
    RuleBasedAnnotator,
    SidecarAnnotator,
    WikiCache,
    WikiClient,
    WikiLookupError,
    extract_person_names,
    has_wikipedia_page,
    page_exists,
    requests_transport,
)

from conftest import failing_transport


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps: list[float] = []

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("Did Kim Jong Un Order North Korea First Coronavirus Patient To Be Executed", ["Kim Jong Un"]),
        ("President Trump said Dr. Fauci was wrong", ["Trump", "Fauci"]),
        ("", []),
        ("the quick brown fox", []),
    ],
)
def test_rule_based_extraction(text, expected):
    names = extract_person_names(text)
    assert [n for n in expected if n in names] == expected
    if not expected:
        assert names == []


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_extraction_deterministic_and_verbatim(text):
    annotator = RuleBasedAnnotator.default()
    names = annotator.extract(text)
    assert names == annotator.extract(text)
    assert all(name in text for name in names)


def test_sidecar_annotator(tmp_path):
    p = tmp_path / "persons.jsonl"
    p.write_text(json.dumps({"id": "s1", "persons": ["Ada Lovelace"]}) + "\n")
    side = SidecarAnnotator.load(p)
    assert extract_person_names("anything", side, record_id="s1") == ["Ada Lovelace"]
    with pytest.raises(KeyError, match="s2"):
        side.extract("text", record_id="s2")


def test_cache_round_trip(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = WikiCache.open(path)
    cache.put("Bill Gates", True)
    cache.put("Marlow Quillfeather", False)
    reopened = WikiCache.open(path)
    assert reopened.get("bill gates") is True
    assert reopened.get("Marlow Quillfeather") is False
    assert reopened.get("Nobody") is None
    assert len(path.read_text().splitlines()) == 2


def test_cache_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("FACTLINE_CACHE", str(tmp_path / "env.jsonl"))
    assert WikiCache.default_path(tmp_path / "fallback.jsonl") == tmp_path / "env.jsonl"
    monkeypatch.delenv("FACTLINE_CACHE")
    assert WikiCache.default_path(tmp_path / "fallback.jsonl") == tmp_path / "fallback.jsonl"


def test_cached_fixture_name(fixture_dir):
    cache = WikiCache.open(fixture_dir / "wiki_cache.jsonl")
    assert has_wikipedia_page("Kim Jong Un", cache, "offline") is True


def test_offline_miss_makes_no_request():
    client = WikiClient(WikiCache(), transport=failing_transport)
    assert client.has_page("Someone Uncached", "offline") is False
    assert client.miss_events == ["Someone Uncached"]
    assert client.requests_made == 0


def test_empty_name_rejected():
    with pytest.raises(ValueError):
        has_wikipedia_page("", WikiCache())


def test_page_exists_payload_shapes():
    assert page_exists({"query": {"pages": {"12": {"pageid": 12, "title": "X"}}}})
    assert not page_exists({"query": {"pages": {"-1": {"title": "X", "missing": ""}}}})
    assert page_exists({"query": {"pages": [{"pageid": 3, "title": "X"}]}})
    assert not page_exists({"query": {"pages": [{"title": "<", "invalid": ""}]}})


def test_stub_server_one_request_per_name(stub_server, tmp_path):
    endpoint, hits = stub_server
    client = WikiClient(WikiCache.open(tmp_path / "c.jsonl"), endpoint=endpoint,
                        transport=requests_transport, rate_limiter=RateLimiter(0.01))
    names = ["Bill Gates", "Kim Jong Un", "Marlow Quillfeather", "bill gates", "Bill Gates", "Kim Jong Un"]
    answers = [client.has_page(n, "online") for n in names]
    assert answers == [True, True, False, True, True, True]
    assert all(count <= 1 for count in hits.values())
    assert client.requests_made == 3
    # a fresh client over the same cache file needs no requests at all
    again = WikiClient(WikiCache.open(tmp_path / "c.jsonl"), endpoint=endpoint, transport=failing_transport)
    assert [again.has_page(n, "offline") for n in names] == answers


def test_retries_with_backoff_then_succeeds():
    clock = FakeClock()
    calls = []

    def flaky(url, params, headers):
        calls.append(params["titles"])
        if len(calls) < 3:
            raise ConnectionError("reset")
        return HttpResponse(200, {"query": {"pages": {"1": {"pageid": 1}}}})

    client = WikiClient(transport=flaky, rate_limiter=RateLimiter(0.2, clock, clock.sleep), sleep=clock.sleep)
    assert client.has_page("Bill Gates") is True
    assert len(calls) == 3
    assert 0.5 in clock.sleeps and 1.0 in clock.sleeps


def test_gives_up_after_three_attempts():
    clock = FakeClock()
    client = WikiClient(transport=lambda *a: HttpResponse(503, None),
                        rate_limiter=RateLimiter(0.2, clock, clock.sleep), sleep=clock.sleep)
    with pytest.raises(WikiLookupError):
        client.has_page("Bill Gates")
    assert client.requests_made == 3
    assert "Bill Gates" not in client.cache


def test_429_honours_retry_after():
    clock = FakeClock()
    responses = iter([HttpResponse(429, None, {"Retry-After": "3"}), HttpResponse(200, {"query": {"pages": {}}})])
    client = WikiClient(transport=lambda *a: next(responses),
                        rate_limiter=RateLimiter(0.2, clock, clock.sleep), sleep=clock.sleep)
    assert client.has_page("Marlow Quillfeather") is False
    assert clock.now >= 3.0


def test_rate_limiter_spacing():
    clock = FakeClock()
    limiter = RateLimiter(0.2, clock, clock.sleep)
    for _ in range(4):
        limiter.wait()
    assert clock.now == pytest.approx(0.6)
