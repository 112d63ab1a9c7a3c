"""Person-name extraction and a cached MediaWiki page-existence client."""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://en.wikipedia.org/w/api.php"
USER_AGENT = "factline/0.1 (fact-check story analysis)"
CACHE_ENV = "FACTLINE_CACHE"

_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z'\-]*|[^\sA-Za-z]+")
_NAME_TOKEN_RE = re.compile(r"^[A-Z][a-z]+(?:['\-][A-Z]?[a-z]+)*$")


def _read_word_list(name: str) -> frozenset[str]:
    text = resources.files("factline.assets").joinpath(name).read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")
    )


def normalize_name(name: str) -> str:
    return re.sub(r"\s+", " ", name).strip().casefold()


class RuleBasedAnnotator:
    """Capitalized-span person finder.

    A span is a run of Capitalized tokens broken at stoplist words and
    punctuation. It is accepted as a person when it has two or more tokens,
    follows an honorific, or starts with a gazetteer given name.
    """

    def __init__(
        self,
        stoplist: Iterable[str] = (),
        gazetteer: Iterable[str] = (),
        honorifics: Iterable[str] = (),
    ):
        self.stoplist = frozenset(w.casefold() for w in stoplist)
        self.gazetteer = frozenset(w.casefold() for w in gazetteer)
        self.honorifics = frozenset(w.casefold().rstrip(".") for w in honorifics)

    @classmethod
    @lru_cache(maxsize=1)
    def default(cls) -> RuleBasedAnnotator:
        return cls(
            _read_word_list("person_stoplist.txt"),
            _read_word_list("name_gazetteer.txt"),
            _read_word_list("honorifics.txt"),
        )

    def extract(self, text: str, record_id: str | None = None) -> list[str]:
        spans: list[tuple[list[str], bool]] = []
        current: list[str] = []
        after_honorific = False
        pending_honorific = False
        for tok in _TOKEN_RE.findall(text):
            bare = tok.casefold().rstrip(".")
            if _NAME_TOKEN_RE.match(tok) and bare in self.honorifics:
                if current:
                    spans.append((current, after_honorific))
                current, after_honorific = [], False
                pending_honorific = True
                continue
            if _NAME_TOKEN_RE.match(tok) and bare not in self.stoplist:
                if not current:
                    after_honorific = pending_honorific
                current.append(tok)
                pending_honorific = False
                continue
            if tok == "." and pending_honorific:
                continue
            if current:
                spans.append((current, after_honorific))
            current, after_honorific, pending_honorific = [], False, False
        if current:
            spans.append((current, after_honorific))

        names: list[str] = []
        seen: set[str] = set()
        for tokens, honorific in spans:
            if len(tokens) >= 2 or honorific or tokens[0].casefold() in self.gazetteer:
                name = " ".join(tokens)
                if name not in text:
                    continue
                key = normalize_name(name)
                if key not in seen:
                    seen.add(key)
                    names.append(name)
        return names


class SidecarAnnotator:
    """Pre-computed NER output keyed by record id (JSONL: {"id": ..., "persons": [...]})."""

    def __init__(self, annotations: Mapping[str, list[str]]):
        self.annotations = {k: [n.strip().title() for n in v if n.strip()] for k, v in annotations.items()}

    @classmethod
    def load(cls, path: str | Path) -> SidecarAnnotator:
        data: dict[str, list[str]] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    data[str(obj["id"])] = list(obj.get("persons", []))
        return cls(data)

    def extract(self, text: str, record_id: str | None = None) -> list[str]:
        if record_id is None or record_id not in self.annotations:
            raise KeyError(f"no person annotation for record {record_id!r}")
        out: list[str] = []
        for name in self.annotations[record_id]:
            if name not in out:
                out.append(name)
        return out


def extract_person_names(text: str, annotator: Any | None = None, record_id: str | None = None) -> list[str]:
    annotator = annotator or RuleBasedAnnotator.default()
    names = annotator.extract(text, record_id)
    out: list[str] = []
    seen: set[str] = set()
    for name in names:
        key = normalize_name(name)
        if key and key not in seen:
            seen.add(key)
            out.append(name.strip())
    return out


@dataclass
class WikiCache:
    """Append-only JSONL cache of page-existence answers."""

    path: Path | None = None
    entries: dict[str, dict[str, Any]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def open(cls, path: str | Path | None) -> WikiCache:
        cache = cls(Path(path) if path else None)
        if cache.path is not None and cache.path.exists():
            with cache.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        cache.entries[normalize_name(obj["name"])] = {
                            "exists": bool(obj["exists"]),
                            "checked_at": obj.get("checked_at"),
                        }
        return cache

    @classmethod
    def default_path(cls, fallback: str | Path | None = None) -> Path | None:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return Path(fallback) if fallback else None

    def get(self, name: str) -> bool | None:
        hit = self.entries.get(normalize_name(name))
        return None if hit is None else hit["exists"]

    def put(self, name: str, exists: bool, checked_at: str | None = None) -> None:
        checked_at = checked_at or dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        with self._lock:
            self.entries[normalize_name(name)] = {"exists": exists, "checked_at": checked_at}
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"name": name, "exists": exists, "checked_at": checked_at}) + "\n")

    def __contains__(self, name: str) -> bool:
        return normalize_name(name) in self.entries


class RateLimiter:
    def __init__(self, min_interval: float = 0.2, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None
        self._lock = threading.Lock()

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            if self._last is not None:
                delay = self._last + self.min_interval - now
                if delay > 0:
                    self._sleep(delay)
                    now = self._clock()
            self._last = now

    def hold(self, seconds: float) -> None:
        """Push the next permitted request at least `seconds` into the future."""
        with self._lock:
            self._last = self._clock() + seconds - self.min_interval


@dataclass
class HttpResponse:
    status: int
    payload: dict[str, Any] | None
    headers: Mapping[str, str] = field(default_factory=dict)


Transport = Callable[[str, Mapping[str, str], Mapping[str, str]], HttpResponse]


def requests_transport(url: str, params: Mapping[str, str], headers: Mapping[str, str]) -> HttpResponse:
    import requests

    resp = requests.get(url, params=params, headers=headers, timeout=30)
    payload = resp.json() if resp.status_code == 200 else None
    return HttpResponse(resp.status_code, payload, dict(resp.headers))


class WikiLookupError(RuntimeError):
    def __init__(self, name: str, cause: str):
        super().__init__(f"wikipedia lookup failed for {name!r}: {cause}")
        self.name = name


class WikiClient:
    def __init__(
        self,
        cache: WikiCache | None = None,
        endpoint: str = DEFAULT_ENDPOINT,
        transport: Transport | None = None,
        rate_limiter: RateLimiter | None = None,
        attempts: int = 3,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cache = cache if cache is not None else WikiCache()
        self.endpoint = endpoint
        self.transport = transport or requests_transport
        self.rate_limiter = rate_limiter or RateLimiter()
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self.requests_made = 0
        self.miss_events: list[str] = []
        self._lock = threading.Lock()

    def _query(self, name: str) -> bool:
        params = {"action": "query", "titles": name, "format": "json", "redirects": "1"}
        last_error = "no attempt made"
        for attempt in range(self.attempts):
            self.rate_limiter.wait()
            self.requests_made += 1
            try:
                resp = self.transport(self.endpoint, params, {"User-Agent": USER_AGENT})
            except Exception as exc:  # network layer
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status == 200 and resp.payload is not None:
                    return page_exists(resp.payload)
                last_error = f"HTTP {resp.status}"
                if resp.status == 429:
                    retry_after = _parse_retry_after(resp.headers.get("Retry-After"))
                    self.rate_limiter.hold(retry_after if retry_after is not None else self.backoff * 2**attempt)
                    continue
            if attempt + 1 < self.attempts:
                self._sleep(self.backoff * 2**attempt)
        raise WikiLookupError(name, last_error)

    def has_page(self, name: str, mode: str = "online") -> bool:
        if not name or not name.strip():
            raise ValueError("name must be non-empty")
        if mode not in ("online", "offline"):
            raise ValueError(f"mode must be 'online' or 'offline', got {mode!r}")
        cached = self.cache.get(name)
        if cached is not None:
            return cached
        if mode == "offline":
            self.miss_events.append(name)
            log.debug("offline cache miss for %r", name)
            return False
        with self._lock:
            cached = self.cache.get(name)
            if cached is not None:
                return cached
            exists = self._query(name)
            self.cache.put(name, exists)
        return exists


def _parse_retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        return max(float(value), 0.0)
    except ValueError:
        return None


def page_exists(payload: Mapping[str, Any]) -> bool:
    """True when the query response holds at least one non-missing, valid page."""
    pages = payload.get("query", {}).get("pages", {})
    items = pages.values() if isinstance(pages, dict) else pages
    for page in items:
        if "missing" in page or "invalid" in page:
            continue
        return True
    return False


def has_wikipedia_page(name: str, cache: WikiCache | None = None, mode: str = "offline",
                       client: WikiClient | None = None) -> bool:
    client = client or WikiClient(cache=cache)
    return client.has_page(name, mode)
