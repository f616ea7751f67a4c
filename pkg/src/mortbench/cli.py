"""Command line entry point: synth, ingest, backtest, and report.

Exit codes: 0 success, 2 usage or data error, 3 partial method failure
(some cells failed or a method was excluded; surviving records are
still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .bridge import AdapterHandle, BridgeError, load_registry, start_adapter
from .config import RunConfig
from .engine import (
    BUILTIN_METHODS,
    EngineError,
    failures_to_csv,
    records_from_csv,
    records_to_csv,
    run_backtest,
    run_future,
)
from .lifetables import load_corpus, read_corpus_csv, write_corpus_csv
from .report import ReportError, RunManifest, generate_report, make_manifest
from .synthetic import write_synthetic_hmd_dir

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARTIAL = 3

ADAPTERS_ENV = "MORTBENCH_ADAPTERS"


class CliError(Exception):
    """Usage or data error; maps to exit code 2."""


def _comma_list(text: str) -> list[str]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in _comma_list(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "horizons", None) is not None:
        overrides["horizons"] = tuple(args.horizons)
    return config.with_overrides(**overrides) if overrides else config


def _load_surfaces(path: str):
    # a directory is raw life tables, a file is the canonical corpus CSV
    target = Path(path)
    if target.is_dir():
        return load_corpus(target)
    if target.is_file():
        return read_corpus_csv(target.read_text())
    raise CliError(f"corpus path {path!r} does not exist")


def _load_income_map(path: str | None) -> dict | None:
    if path is None:
        return None
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise CliError("income map must be a JSON object of country: class")
    return raw


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_synthetic_hmd_dir(out, seed=args.seed)
    tables = [p for p in paths if p.suffix == ".txt"]
    print(f"wrote {len(tables)} life tables and income_map.json to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    surfaces = load_corpus(args.hmd_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = make_manifest(surfaces)
    (out / "corpus.csv").write_text(
        write_corpus_csv(surfaces, comment=f"manifest={manifest.hash}")
    )
    (out / "manifest.json").write_text(manifest.to_json())
    for surface in surfaces:
        print(
            f"{surface.country_code} {surface.years[0]}-{surface.years[-1]} "
            f"({len(surface.years)} years)"
        )
    print(f"corpus.csv + manifest.json written to {out}")
    return EXIT_OK


def _start_adapters(registry_path: str | None) -> dict[str, AdapterHandle]:
    if registry_path is None:
        registry_path = os.environ.get(ADAPTERS_ENV)
    if registry_path is None:
        return {}
    handles: dict[str, AdapterHandle] = {}
    for spec in load_registry(registry_path):
        try:
            handles[spec.name] = start_adapter(spec)
        except BridgeError as exc:
            log.warning("adapter %s unavailable: %s", spec.name, exc)
    return handles


def cmd_backtest(args) -> int:
    config = _load_config(args)
    surfaces = _load_surfaces(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    adapters = _start_adapters(args.adapters)
    try:
        runner = run_future if args.future else run_backtest
        result = runner(surfaces, args.methods, config, adapters, export_dir=out)
    finally:
        for handle in adapters.values():
            handle.close()
    manifest = make_manifest(surfaces, args.methods, config)
    name = "future_records.csv" if args.future else "records.csv"
    (out / name).write_text(
        records_to_csv(result.records, comment=f"manifest={manifest.hash}")
    )
    (out / "manifest.json").write_text(manifest.to_json())
    if result.failures:
        (out / "failures.csv").write_text(
            failures_to_csv(result.failures, comment=f"manifest={manifest.hash}")
        )
    print(
        f"{len(result.records)} records, {len(result.failures)} failures, "
        f"{len(result.skips)} skipped cells -> {out / name}"
    )
    for method, reason in result.method_errors.items():
        print(f"method error: {method}: {reason}", file=sys.stderr)
    if result.failures or result.method_errors:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    config = _load_config(args)
    records = records_from_csv(Path(args.records).read_text())
    future_records = None
    if args.future_records:
        future_records = records_from_csv(Path(args.future_records).read_text())
    corpus = _load_surfaces(args.corpus) if args.corpus else None
    manifest_path = args.manifest
    if manifest_path is None:
        candidate = Path(args.records).parent / "manifest.json"
        manifest_path = str(candidate) if candidate.is_file() else None
    if manifest_path is not None:
        manifest = RunManifest.from_json(Path(manifest_path).read_text())
    elif corpus is not None:
        manifest = make_manifest(corpus, sorted({r.method for r in records}), config)
    else:
        raise CliError("no manifest.json next to the records; pass --manifest or --corpus")
    written = generate_report(
        records,
        args.out,
        manifest,
        config=config,
        by=args.by,
        significance=args.significance,
        plots=args.plots or (),
        corpus=corpus,
        income_map=_load_income_map(args.income_map),
        future_records=future_records,
        country=args.country,
        ages=args.ages or (),
        horizon=args.horizon,
        deterministic=args.deterministic,
    )
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mortbench",
        description=(
            "Mortality-rate forecasting benchmark: ingest life tables, "
            "backtest forecasting methods, and render report tables and figures."
        ),
        epilog=(
            "records CSV schema: method,country,age,horizon,step,year,predicted,actual. "
            f"Built-in methods: {', '.join(BUILTIN_METHODS)}; adapter-backed methods "
            f"(for example LSTM, CHRONOSTiny, CHRONOSSmall, CHRONOSLarge, "
            f"CHRONOSSmallFinetuned, TimesFM) need a registry passed via --adapters "
            f"or the {ADAPTERS_ENV} environment variable."
        ),
    )
    parser.add_argument("--version", action="version", version=f"mortbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write the bundled synthetic corpus")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_ingest = sub.add_parser("ingest", help="parse a life-table directory into corpus.csv")
    p_ingest.add_argument("--hmd-dir", required=True, help="directory of 1x1 life tables")
    p_ingest.add_argument("--out", required=True, help="output directory")
    p_ingest.set_defaults(func=cmd_ingest)

    p_back = sub.add_parser("backtest", help="run forecasters against held-out tails")
    p_back.add_argument("--corpus", required=True, help="corpus.csv or life-table directory")
    p_back.add_argument("--methods", required=True, type=_comma_list, metavar="A,B,C")
    p_back.add_argument("--horizons", type=_int_list, metavar="5,10,20")
    p_back.add_argument("--adapters", help=f"adapter registry JSON (default ${ADAPTERS_ENV})")
    p_back.add_argument("--seed", type=int)
    p_back.add_argument("--config", help="JSON config file overriding defaults")
    p_back.add_argument(
        "--future", action="store_true", help="forecast past the end of each series"
    )
    p_back.add_argument("--out", required=True, help="output directory")
    p_back.set_defaults(func=cmd_backtest)

    p_rep = sub.add_parser("report", help="tables and figures from a records CSV")
    p_rep.add_argument("--records", required=True, help="records.csv from backtest")
    p_rep.add_argument("--future-records", help="future_records.csv for trajectory overlays")
    p_rep.add_argument("--corpus", help="corpus.csv or life-table directory")
    p_rep.add_argument("--manifest", help="manifest.json of the backtest run")
    p_rep.add_argument("--income-map", help="JSON file of country: income class")
    p_rep.add_argument(
        "--by",
        type=_comma_list,
        default=["method"],
        metavar="method,age,income,length",
        help="grouping dimensions for median tables",
    )
    p_rep.add_argument("--significance", action="store_true")
    p_rep.add_argument(
        "--plots", type=_comma_list, metavar="boxplot,heatmap,trajectories"
    )
    p_rep.add_argument("--country", help="country code for trajectory plots")
    p_rep.add_argument("--ages", type=_int_list, metavar="25,50,75")
    p_rep.add_argument("--horizon", type=int, help="horizon for trajectory plots")
    p_rep.add_argument("--config", help="JSON config file overriding defaults")
    p_rep.add_argument(
        "--deterministic",
        action="store_true",
        help="suppress timestamps so figures reproduce byte-identically",
    )
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("MORTBENCH_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        EngineError,
        ReportError,
        BridgeError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
