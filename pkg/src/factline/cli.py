"""Command-line entry point: one subcommand per pipeline stage plus `run`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from factline.pipeline import STAGES, ConfigError, Pipeline, PipelineConfig, StageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _k_value(text: str) -> int | str:
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or an integer, got {text!r}") from None


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    io = p.add_argument_group("inputs and outputs")
    io.add_argument("--input", type=Path, required=True, help="fact-check records (JSONL or CSV)")
    io.add_argument("--embeddings", type=Path, required=True, help="embedding JSONL {id, vector}")
    io.add_argument("--out", type=Path, required=True, help="output directory")
    io.add_argument("--tweets", type=Path, help="annotated tweet records (JSONL or CSV)")
    io.add_argument("--annotations", type=Path, help="story-type annotations JSONL {id, label, medium}")
    io.add_argument("--lexicon", type=Path, help="story-type keyword lexicon JSON")
    io.add_argument("--validity-lexicon", type=Path, help="validity harmonization JSON {raw: label}")
    io.add_argument("--stopwords", type=Path, help="stopword list, one per line")
    io.add_argument("--persons", type=Path, help="precomputed person annotations JSONL {id, persons}")
    io.add_argument("--wiki-cache", type=Path,
                    help="wiki page cache (default: $FACTLINE_CACHE or <out>/wiki_cache.jsonl)")

    cl = p.add_argument_group("clustering")
    cl.add_argument("--pca-var", type=float, default=0.95, help="variance fraction to keep (default 0.95)")
    cl.add_argument("--pca-components", type=int, help="fixed component count (overrides --pca-var)")
    cl.add_argument("--no-pca", action="store_true", help="cluster raw embeddings")
    cl.add_argument("--k", type=_k_value, default="auto", help="cluster count or 'auto' for elbow (default auto)")
    cl.add_argument("--k-max", type=int, default=12, help="largest k on the WSS curve (default 12)")
    cl.add_argument("--restarts", type=int, default=5, help="k-means restarts per k (default 5)")

    ag = p.add_argument_group("agreement")
    ag.add_argument("--agree-threshold", type=float, default=0.70)
    ag.add_argument("--agree-k", type=int, default=5)
    ag.add_argument("--agree-metric", choices=("similarity", "distance"), default="similarity")
    ag.add_argument("--both-directions", action="store_true", help="also report B→A for every site pair")

    ex = p.add_argument_group("experiments")
    ex.add_argument("--split", type=float, default=0.8, help="train fraction (default 0.8)")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--offline", action="store_true", help="never query the wiki API; cache misses count as no page")
    ex.add_argument("--permissive-validity", action="store_true", help="map unknown verdict strings to Unknown")
    ex.add_argument("--keywords-first", action="store_true", help="scan keywords before the public-figure check")
    ex.add_argument("--nn-k", type=int, default=1, help="neighbours for the story-type classifier (default 1)")
    ex.add_argument("--baseline-trials", type=int, default=2000)
    ex.add_argument("--bucket", choices=("week", "day"), default="week")
    ex.add_argument("--resume", action="store_true", help="skip stages whose inputs and config are unchanged")
    ex.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factline", description="Fact-checked story analysis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    helps = {
        "ingest": "harmonize raw records into the canonical format",
        "represent": "preprocess text and check embedding coverage",
        "cluster": "PCA + k-means over story embeddings",
        "validity": "per-cluster validity classifiers (F1 table)",
        "agreement": "cross-site agreement table",
        "storytype": "story-type classification and random baselines",
        "report": "time-series and per-cluster breakdown CSVs",
        "run": "all stages",
    }
    for name in (*STAGES, "run"):
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        input=args.input,
        embeddings=args.embeddings,
        out=args.out,
        tweets=args.tweets,
        annotations=args.annotations,
        lexicon=args.lexicon,
        validity_lexicon=args.validity_lexicon,
        stopwords=args.stopwords,
        persons=args.persons,
        wiki_cache=args.wiki_cache,
        pca_var=args.pca_var,
        pca_components=args.pca_components,
        use_pca=not args.no_pca,
        k=args.k,
        k_max=args.k_max,
        restarts=args.restarts,
        agree_threshold=args.agree_threshold,
        agree_k=args.agree_k,
        agree_metric=args.agree_metric,
        both_directions=args.both_directions,
        split=args.split,
        seed=args.seed,
        offline=args.offline,
        permissive_validity=args.permissive_validity,
        figures_first=not args.keywords_first,
        nn_k=args.nn_k,
        baseline_trials=args.baseline_trials,
        bucket=args.bucket,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config = config_from_args(args)
    stages = STAGES if args.command == "run" else (args.command,)
    try:
        manifest = Pipeline(config).run(
            stages, resume=args.resume,
            on_stage=lambda stage, secs: print(f"{stage}: done in {secs:.2f}s", file=sys.stderr),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    for rel in sorted(manifest.outputs):
        print(config.out / rel)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
