from __future__ import annotations

import datetime as dt
import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import pytest

from factline.corpus import StoryRecord, ValidityLabel

_ACCEPTANCE_LINES: list[str] = []


def story(
    rid: str,
    validity: ValidityLabel | str = ValidityLabel.FALSE,
    site: str = "Poynter",
    text: str = "",
    date: dt.date | None = None,
) -> StoryRecord:
    label = ValidityLabel(validity)
    return StoryRecord(rid, site, date, label.value, label, text or f"story {rid}")


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return Path(str(resources.files("factline.assets").joinpath("fixture")))


KNOWN_PAGES = {"kim jong un", "bill gates", "anthony fauci"}


def failing_transport(url, params, headers):
    raise AssertionError(f"network call attempted in offline mode: {params}")


@pytest.fixture
def stub_server():
    hits: Counter[str] = Counter()

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            title = parse_qs(urlparse(self.path).query)["titles"][0]
            hits[title] += 1
            page = {"pageid": 7, "title": title} if title.lower() in KNOWN_PAGES else {"title": title, "missing": ""}
            body = json.dumps({"query": {"pages": {"-1" if "missing" in page else "7": page}}}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/w/api.php", hits
    server.shutdown()
    server.server_close()


@pytest.fixture
def acceptance_line(request):
    """Record a PASS/FAIL line for the acceptance summary, keyed by the test's outcome."""
    holder: dict[str, str] = {}

    def record(label: str) -> None:
        holder["label"] = label

    yield record
    rep = getattr(request.node, "rep_call", None)
    if "label" in holder and rep is not None:
        status = "PASS" if rep.passed else "FAIL"
        _ACCEPTANCE_LINES.append(f"[{status}] {holder['label']}")


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
