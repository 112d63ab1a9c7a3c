"""End-to-end orchestration: staged, resumable, with a run manifest."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import platform
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

import factline
from factline import agreement as agree_mod
from factline import numcore, reports, storytype, validity
from factline.corpus import (
    RecordKind,
    StoryRecord,
    ValidityLabel,
    ValidityLexicon,
    ingest_records,
    train_test_split,
)
from factline.enrich import RuleBasedAnnotator, SidecarAnnotator, WikiCache, WikiClient
from factline.textrep import EmbeddingTable, build_vocab, default_stopwords, load_embeddings, load_stopwords, preprocess

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STAGES = ("ingest", "represent", "cluster", "validity", "agreement", "storytype", "report")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    input: Path
    embeddings: Path
    out: Path
    tweets: Path | None = None
    annotations: Path | None = None
    lexicon: Path | None = None
    validity_lexicon: Path | None = None
    stopwords: Path | None = None
    persons: Path | None = None
    wiki_cache: Path | None = None
    pca_var: float = numcore.DEFAULT_PCA_VARIANCE
    pca_components: int | None = None
    pca_max_components: int = numcore.DEFAULT_MAX_COMPONENTS
    use_pca: bool = True
    k: int | str = "auto"
    k_max: int = 12
    restarts: int = 5
    agree_threshold: float = agree_mod.DEFAULT_THRESHOLD
    agree_k: int = agree_mod.DEFAULT_K
    agree_metric: str = "similarity"
    both_directions: bool = False
    split: float = 0.8
    seed: int = 0
    offline: bool = False
    permissive_validity: bool = False
    figures_first: bool = True
    nn_k: int = 1
    baseline_trials: int = 2000
    bucket: str = "week"
    train: validity.TrainConfig = field(default_factory=validity.TrainConfig)

    def input_paths(self) -> dict[str, Path]:
        names = ("input", "embeddings", "tweets", "annotations", "lexicon", "validity_lexicon", "stopwords", "persons")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def validate(self) -> None:
        for name, path in self.input_paths().items():
            if not Path(path).is_file():
                raise ConfigError(f"--{name.replace('_', '-')}: file not found: {path}")
        if not 0 < self.pca_var <= 1:
            raise ConfigError(f"--pca-var must be in (0, 1], got {self.pca_var}")
        if self.pca_components is not None and self.pca_components < 1:
            raise ConfigError("--pca-components must be >= 1")
        if self.k != "auto" and (not isinstance(self.k, int) or self.k < 1):
            raise ConfigError(f"--k must be 'auto' or a positive integer, got {self.k!r}")
        if self.k_max < 3:
            raise ConfigError("--k-max must be >= 3 for elbow selection")
        if not 0 <= self.agree_threshold <= 1:
            raise ConfigError(f"--agree-threshold must be in [0, 1], got {self.agree_threshold}")
        if self.agree_k < 1:
            raise ConfigError("--agree-k must be >= 1")
        if not 0 < self.split < 1:
            raise ConfigError(f"--split must be in (0, 1), got {self.split}")
        if self.bucket not in ("week", "day"):
            raise ConfigError("--bucket must be 'week' or 'day'")
        if self.agree_metric not in ("similarity", "distance"):
            raise ConfigError("--agree-metric must be 'similarity' or 'distance'")
        if self.nn_k < 1:
            raise ConfigError("--nn-k must be >= 1")

    def snapshot(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif dataclasses.is_dataclass(value):
                value = dataclasses.asdict(value)
            out[f.name] = value
        return out


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict[str, Any]
    input_digests: dict[str, str]
    versions: dict[str, str]
    timings: dict[str, float] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


class _StageOutputs:
    """Writes go to `<name>.partial`; `commit` renames them into place."""

    def __init__(self, root: Path):
        self.root = root
        self.pending: list[Path] = []

    def path(self, rel: str) -> Path:
        final = self.root / rel
        final.parent.mkdir(parents=True, exist_ok=True)
        self.pending.append(final)
        return final.with_name(final.name + ".partial")

    def commit(self) -> list[Path]:
        for final in self.pending:
            final.with_name(final.name + ".partial").replace(final)
        done, self.pending = self.pending, []
        return done


# --- intermediate record format ------------------------------------------------

def _record_to_intermediate(rec: StoryRecord) -> dict[str, Any]:
    return {
        **rec.to_json(),
        "validity": rec.validity.value,
        "mediums": sorted(rec.mediums),
        "flags": list(rec.flags),
    }


def _record_from_intermediate(obj: dict[str, Any]) -> StoryRecord:
    import datetime as dt

    date = None
    if obj.get("date"):
        try:
            date = dt.date.fromisoformat(obj["date"])
        except ValueError:
            date = None
    return StoryRecord(
        id=obj["id"],
        site=obj["site"],
        date=date,
        raw_validity=obj["raw_validity"],
        validity=ValidityLabel(obj["validity"]),
        story=obj["story"],
        elaboration=obj.get("elaboration"),
        raw_medium=obj.get("raw_medium"),
        mediums=frozenset(obj.get("mediums", [])),
        story_type=obj.get("story_type"),
        kind=RecordKind(obj["kind"]),
        raw_date=obj.get("date"),
        flags=tuple(obj.get("flags", [])),
    )


def _write_jsonl(path: Path, rows: Sequence[dict[str, Any]]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format_version": FORMAT_VERSION}) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    with path.open(encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported intermediate format {header!r}")
        return [json.loads(line) for line in fh if line.strip()]


# --- the pipeline ----------------------------------------------------------------

class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out)
        self.inter = self.out / "intermediate"
        self._embeddings: EmbeddingTable | None = None

    # shared loaders
    def embeddings(self) -> EmbeddingTable:
        if self._embeddings is None:
            self._embeddings = load_embeddings(self.config.embeddings)
        return self._embeddings

    def records(self) -> list[StoryRecord]:
        return [_record_from_intermediate(o) for o in _read_jsonl(self.inter / "records.jsonl")]

    def tweets(self) -> list[StoryRecord]:
        path = self.inter / "tweets.jsonl"
        return [_record_from_intermediate(o) for o in _read_jsonl(path)] if path.exists() else []

    def assignments(self) -> dict[str, int]:
        with (self.inter / "assignments.csv").open(encoding="utf-8", newline="") as fh:
            return {row["id"]: int(row["cluster"]) - 1 for row in csv.DictReader(fh)}

    def stopwords(self) -> frozenset[str]:
        return load_stopwords(self.config.stopwords) if self.config.stopwords else default_stopwords()

    def wiki_client(self) -> WikiClient:
        path = self.config.wiki_cache or WikiCache.default_path(self.out / "wiki_cache.jsonl")
        return WikiClient(cache=WikiCache.open(path))

    def person_annotator(self):
        if self.config.persons:
            return SidecarAnnotator.load(self.config.persons)
        return RuleBasedAnnotator.default()

    # stages
    def stage_ingest(self, io: _StageOutputs) -> None:
        cfg = self.config
        lexicon = ValidityLexicon.load(cfg.validity_lexicon, fallback_unknown=cfg.permissive_validity)
        annotator = RuleBasedAnnotator.default()
        records = ingest_records(cfg.input, lexicon=lexicon, person_annotator=annotator)
        stories = [r for r in records if r.kind is RecordKind.FACT_CHECK]
        tweets = [r for r in records if r.kind is RecordKind.TWEET]
        if cfg.tweets:
            tweets += ingest_records(cfg.tweets, lexicon=lexicon, person_annotator=annotator)
        ids = [r.id for r in stories + tweets]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"record ids shared between story and tweet inputs: {', '.join(dupes)}")
        _write_jsonl(io.path("intermediate/records.jsonl"), [_record_to_intermediate(r) for r in stories])
        _write_jsonl(io.path("intermediate/tweets.jsonl"), [_record_to_intermediate(r) for r in tweets])

    def stage_represent(self, io: _StageOutputs) -> None:
        table = self.embeddings()
        records = self.records()
        missing = [r.id for r in records if r.id not in table]
        if missing:
            raise KeyError(f"no embedding for records: {', '.join(missing[:20])}")
        stop = self.stopwords()
        tokens = [{"id": r.id, "tokens": preprocess(r.story, stopwords=stop)} for r in records + self.tweets()]
        _write_jsonl(io.path("intermediate/tokens.jsonl"), tokens)
        vocab = build_vocab([t["tokens"] for t in tokens[: len(records)]] or [[]])
        io.path("intermediate/vocab.json").write_text(
            json.dumps({"format_version": FORMAT_VERSION, **vocab.to_json()}, sort_keys=True), encoding="utf-8"
        )

    def stage_cluster(self, io: _StageOutputs) -> None:
        cfg = self.config
        records = self.records()
        ids = [r.id for r in records]
        X = self.embeddings().matrix(ids)
        pca = None
        Z = X
        if cfg.use_pca:
            if cfg.pca_components is not None:
                pca = numcore.pca_fit(X, n_components=cfg.pca_components, max_components=cfg.pca_max_components)
            else:
                pca = numcore.pca_fit(X, variance=cfg.pca_var, max_components=cfg.pca_max_components)
            Z = numcore.pca_transform(pca, X)
        curve: list[tuple[int, float]] = []
        if cfg.k == "auto":
            k_range = range(1, min(cfg.k_max, len(ids)) + 1)
            curve = numcore.wss_curve(Z, k_range, seed=cfg.seed, restarts=cfg.restarts)
            k = numcore.select_k_elbow(curve)
        else:
            k = int(cfg.k)
        km = numcore.kmeans_best(Z, k, seed=cfg.seed, restarts=cfg.restarts)
        numcore.save_cluster_model(
            io.path("intermediate/cluster_model.json"), pca, km,
            {"k": k, "k_mode": str(cfg.k), "pca_var": cfg.pca_var, "pca_components": cfg.pca_components,
             "use_pca": cfg.use_pca, "restarts": cfg.restarts},
        )
        with io.path("intermediate/assignments.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "cluster"])
            for rid, label in zip(ids, km.labels.tolist()):
                writer.writerow([rid, label + 1])
        with io.path("wss_curve.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "wss", "selected"])
            for kk, w in curve:
                writer.writerow([kk, f"{w:.6f}", int(kk == k)])

    def stage_validity(self, io: _StageOutputs) -> None:
        cfg = self.config
        cells = validity.run_validity_experiment(
            self.records(), self.assignments(), self.embeddings(), ratio=cfg.split, seed=cfg.seed,
            stopwords=self.stopwords(), config=dataclasses.replace(cfg.train, seed=cfg.seed),
        )
        validity.write_validity_csv(cells, io.path("validity_f1.csv"))

    def stage_agreement(self, io: _StageOutputs) -> None:
        cfg = self.config
        report = agree_mod.agreement_table(
            self.records(), self.assignments(), self.embeddings(), threshold=cfg.agree_threshold, k=cfg.agree_k,
            both_directions=cfg.both_directions, metric=cfg.agree_metric,
        )
        report.write_csv(io.path("agreement.csv"))
        report.write_evidence(io.path("agreement_evidence.jsonl"))

    def stage_storytype(self, io: _StageOutputs) -> None:
        cfg = self.config
        records = self.records() + self.tweets()
        texts = {r.id: r.story for r in records}
        if cfg.annotations:
            by_medium = storytype.load_annotations(cfg.annotations)
        else:
            by_medium = {}
            for r in records:
                if r.story_type:
                    medium = "tweets" if r.kind is RecordKind.TWEET else "stories"
                    by_medium.setdefault(medium, {})[r.id] = r.story_type
        table = self.embeddings()
        sets = {m: storytype.AnnotatedSet.from_table(m, labels, table) for m, labels in sorted(by_medium.items())}
        splits: dict[str, tuple[storytype.AnnotatedSet, storytype.AnnotatedSet]] = {}
        for medium, full in sets.items():
            pairs = list(zip(full.ids, full.labels))
            train, test = train_test_split(pairs, cfg.split, cfg.seed, stratify_by=lambda p: p[1])
            splits[medium] = (full.subset([i for i, _ in train]), full.subset([i for i, _ in test]))
        wiki = self.wiki_client()
        mode = "offline" if cfg.offline else "online"
        lexicon = storytype.KeywordLexicon.load(cfg.lexicon)
        persons = self.person_annotator()
        rows = []
        baselines = []
        for test_medium in sets:
            test = splits[test_medium][1]
            if len(test) == 0:
                continue
            for train_medium in sets:
                train = splits[train_medium][0] if train_medium == test_medium else sets[train_medium]
                for method in ("nn", "bow"):
                    scores = storytype.cross_medium_eval(
                        train, test, method, texts=texts, lexicon=lexicon, persons=persons, wiki=wiki,
                        mode=mode, k=cfg.nn_k, figures_first=cfg.figures_first,
                    )
                    rows.append(storytype.eval_row(train_medium, test_medium, method, scores))
            gold = list(test.labels)
            label_set = sorted(set(sets[test_medium].labels))
            results = [
                storytype.random_baseline(gold, m, cfg.baseline_trials, cfg.seed, labels=label_set)
                for m in ("uniform", "frequency")
            ]
            for r in results:
                rows.append({"train_medium": "random", "test_medium": test_medium, "method": f"random_{r.mode}",
                             "precision": r.precision, "recall": r.recall, "f1": r.f1})
            baselines += storytype.baseline_rows(test_medium, results)
        storytype.write_eval_csv(rows, io.path("storytype_eval.csv"))
        storytype.write_baseline_csv(baselines, io.path("storytype_baselines.csv"))
        if wiki.miss_events:
            io.path("wiki_misses.txt").write_text(
                "".join(f"{n}\n" for n in sorted(set(wiki.miss_events))), encoding="utf-8"
            )

    def stage_report(self, io: _StageOutputs) -> None:
        records = self.records()
        assignments = self.assignments()
        rows, skipped = reports.timeseries_rows(records, assignments, self.config.bucket)
        reports.write_csv(rows, reports.TIMESERIES_COLUMNS[self.config.bucket], io.path("timeseries.csv"))
        for by in ("site", "medium", "validity"):
            reports.write_csv(reports.breakdown_rows(records, assignments, by), reports.BREAKDOWN_COLUMNS,
                              io.path(f"clusters_by_{by}.csv"))
        io.path("timeseries_notes.txt").write_text(f"dateless records excluded: {skipped}\n", encoding="utf-8")

    # orchestration
    def _stamp(self, stage: str, digests: dict[str, str]) -> str:
        payload = json.dumps({"stage": stage, "config": self.config.snapshot(), "inputs": digests,
                              "version": factline.__version__}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def run(self, stages: Sequence[str] = STAGES, resume: bool = False,
            on_stage: Callable[[str, float], None] | None = None) -> RunManifest:
        self.config.validate()
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
        self.out.mkdir(parents=True, exist_ok=True)
        self.inter.mkdir(parents=True, exist_ok=True)
        digests = {name: file_digest(p) for name, p in sorted(self.config.input_paths().items())}
        manifest = RunManifest(
            config=self.config.snapshot(),
            input_digests=digests,
            versions={"factline": factline.__version__, "numpy": np.__version__, "python": platform.python_version()},
        )
        last = max(STAGES.index(s) for s in stages)
        for stage in STAGES[: last + 1]:
            stamp_path = self.inter / f"{stage}.stamp"
            stamp = self._stamp(stage, digests)
            requested = stage in stages
            previous = json.loads(stamp_path.read_text("utf-8")) if stamp_path.exists() else {}
            outputs_intact = all((self.out / rel).exists() for rel in previous.get("outputs", []))
            if (resume or not requested) and previous.get("stamp") == stamp and outputs_intact:
                manifest.skipped.append(stage)
                for rel in previous["outputs"]:
                    manifest.outputs[rel] = file_digest(self.out / rel)
                continue
            io = _StageOutputs(self.out)
            started = time.perf_counter()
            try:
                getattr(self, f"stage_{stage}")(io)
            except Exception as exc:
                log.error("stage %s failed: %s", stage, exc)
                raise StageError(stage, exc) from exc
            written = [str(p.relative_to(self.out)) for p in io.commit()]
            for rel in written:
                manifest.outputs[rel] = file_digest(self.out / rel)
            stamp_path.write_text(json.dumps({"stamp": stamp, "outputs": written}) + "\n", encoding="utf-8")
            elapsed = time.perf_counter() - started
            manifest.timings[stage] = round(elapsed, 4)
            if on_stage:
                on_stage(stage, elapsed)
        manifest.write(self.out / "manifest.json")
        return manifest


def run_pipeline(config: PipelineConfig, resume: bool = False) -> RunManifest:
    return Pipeline(config).run(STAGES, resume=resume)
