from __future__ import annotations

import csv
import json
import shutil
from pathlib import Path

import pytest

from factline.agreement import CSV_COLUMNS as AGREEMENT_COLUMNS
from factline.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from factline.pipeline import ConfigError, Pipeline, PipelineConfig, run_pipeline
from factline.reports import BREAKDOWN_COLUMNS, TIMESERIES_COLUMNS
from factline.storytype import BASELINE_COLUMNS, EVAL_COLUMNS
from factline.validity import RESULT_COLUMNS

SCHEMAS = {
    "validity_f1.csv": RESULT_COLUMNS,
    "agreement.csv": AGREEMENT_COLUMNS,
    "storytype_eval.csv": EVAL_COLUMNS,
    "storytype_baselines.csv": BASELINE_COLUMNS,
    "timeseries.csv": TIMESERIES_COLUMNS["week"],
    "clusters_by_site.csv": BREAKDOWN_COLUMNS,
    "clusters_by_medium.csv": BREAKDOWN_COLUMNS,
    "clusters_by_validity.csv": BREAKDOWN_COLUMNS,
    "wss_curve.csv": ("k", "wss", "selected"),
}


def fixture_config(fixture_dir: Path, out: Path, **overrides) -> PipelineConfig:
    return PipelineConfig(
        input=fixture_dir / "stories.jsonl",
        embeddings=fixture_dir / "embeddings.jsonl",
        out=out,
        tweets=fixture_dir / "tweets.jsonl",
        annotations=fixture_dir / "annotations.jsonl",
        wiki_cache=fixture_dir / "wiki_cache.jsonl",
        offline=True,
        **overrides,
    )


def csv_bytes(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


@pytest.fixture(scope="module")
def fixture_run(tmp_path_factory, fixture_dir):
    out = tmp_path_factory.mktemp("run")
    manifest = run_pipeline(fixture_config(fixture_dir, out))
    return out, manifest


def test_all_reports_emitted_with_fixed_schema(fixture_run):
    out, manifest = fixture_run
    for name, columns in SCHEMAS.items():
        with (out / name).open() as fh:
            assert next(csv.reader(fh)) == list(columns), name
    assert (out / "manifest.json").exists()
    assert not list(out.rglob("*.partial"))
    assert set(SCHEMAS) <= set(manifest.outputs)


def test_fixture_elbow_selects_six(fixture_run):
    out, _ = fixture_run
    with (out / "wss_curve.csv").open() as fh:
        selected = [row["k"] for row in csv.DictReader(fh) if row["selected"] == "1"]
    assert selected == ["6"]


def test_rerun_is_byte_identical(fixture_run, fixture_dir, tmp_path):
    out, _ = fixture_run
    run_pipeline(fixture_config(fixture_dir, tmp_path / "again"))
    assert csv_bytes(tmp_path / "again") == csv_bytes(out)


def test_resume_matches_fresh_run(fixture_run, fixture_dir, tmp_path):
    out, _ = fixture_run
    target = tmp_path / "resumed"
    config = fixture_config(fixture_dir, target)
    run_pipeline(config)
    (target / "agreement.csv").unlink()
    manifest = Pipeline(config).run(resume=True)
    assert "ingest" in manifest.skipped and "agreement" not in manifest.skipped
    assert csv_bytes(target) == csv_bytes(out)


def test_manifest_digest_tracks_input_bytes(fixture_dir, tmp_path):
    inputs = tmp_path / "inputs"
    shutil.copytree(fixture_dir, inputs)
    first = Pipeline(fixture_config(inputs, tmp_path / "a")).run(stages=("ingest",))
    same = Pipeline(fixture_config(inputs, tmp_path / "b")).run(stages=("ingest",))
    assert first.input_digests == same.input_digests
    with (inputs / "stories.jsonl").open("a") as fh:
        fh.write("\n")
    changed = Pipeline(fixture_config(inputs, tmp_path / "c")).run(stages=("ingest",))
    assert changed.input_digests["input"] != first.input_digests["input"]
    assert changed.input_digests["embeddings"] == first.input_digests["embeddings"]


def test_missing_embeddings_fails_before_any_stage(fixture_dir, tmp_path):
    config = fixture_config(fixture_dir, tmp_path / "out")
    config.embeddings = tmp_path / "nope.jsonl"
    with pytest.raises(ConfigError, match="embeddings"):
        run_pipeline(config)
    assert not (tmp_path / "out").exists()


def cli_args(fixture_dir: Path, out: Path) -> list[str]:
    return [
        "--input", str(fixture_dir / "stories.jsonl"),
        "--embeddings", str(fixture_dir / "embeddings.jsonl"),
        "--tweets", str(fixture_dir / "tweets.jsonl"),
        "--annotations", str(fixture_dir / "annotations.jsonl"),
        "--wiki-cache", str(fixture_dir / "wiki_cache.jsonl"),
        "--offline", "--out", str(out),
    ]


def test_cli_config_error_exit_code(fixture_dir, tmp_path, capsys):
    args = cli_args(fixture_dir, tmp_path / "out")
    args[args.index("--embeddings") + 1] = str(tmp_path / "missing.jsonl")
    assert main(["run", *args]) == EXIT_CONFIG
    assert "file not found" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_stage_failure_exit_code(fixture_dir, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "story": "x", "raw_validity": "Four Pinocchios"}\n')
    args = cli_args(fixture_dir, tmp_path / "out")
    args[args.index("--input") + 1] = str(bad)
    assert main(["ingest", *args]) == EXIT_STAGE
    assert main(["ingest", *args, "--permissive-validity"]) == EXIT_OK


def test_cli_single_stage_and_fixed_k(fixture_dir, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["cluster", *cli_args(fixture_dir, out), "--k", "4"]) == EXIT_OK
    assert "cluster_model.json" in capsys.readouterr().out
    model = json.loads((out / "intermediate" / "cluster_model.json").read_text())
    assert len(model["kmeans"]["centers"]) == 4
    assert not (out / "validity_f1.csv").exists()
