"""Operator entry point: generate, refine, stats, traindata, eval, judge,
serve, repl.

Configuration precedence is CLI flag > config file > built-in default; the
resolved snapshot lands in the RunManifest written into every command's
output directory. With --transport replay and a fixed --seed, generate and
refine are byte-deterministic (manifest timestamps included).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path
from typing import Any, Optional

from . import augment, datasetio, dbexec, llmclient, metrics, refine, sqlkit
from .domain import QuestionType
from .manifest import RunManifest
from .stateflow import FlowConfig, ScriptedAnswerer, create_app, init_session, step

log = logging.getLogger("convsql.cli")


def _setup_logging(verbose: bool) -> None:
    level = logging.INFO if verbose else logging.WARNING
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s")


def _load_config_file(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _transport_from_args(args: argparse.Namespace) -> llmclient.Transport:
    cassette = getattr(args, "cassette", None)
    return llmclient.Transport(
        mode=args.transport, cassette_path=Path(cassette) if cassette else None
    )


def _dataclass_config(cls, section: dict[str, Any], overrides: dict[str, Any]):
    allowed = {f.name for f in dataclass_fields(cls)}
    merged: dict[str, Any] = {}
    for key, value in section.items():
        if key not in allowed:
            raise SystemExit(f"unknown {cls.__name__} option {key!r} in config file")
        merged[key] = value
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    if "target_turns" in merged and isinstance(merged["target_turns"], list):
        merged["target_turns"] = tuple(merged["target_turns"])
    if "qa_type_weights" in merged and isinstance(merged["qa_type_weights"], dict):
        merged["qa_type_weights"] = {
            QuestionType.from_json({"variant": k}): v
            for k, v in merged["qa_type_weights"].items()
        }
    return cls(**merged)


def _config_snapshot(cfg) -> dict[str, Any]:
    out = {}
    for f in dataclass_fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, dict):
            value = {
                (k.variant.value if isinstance(k, QuestionType) else getattr(k, "value", str(k))): v
                for k, v in value.items()
            }
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _catalog_from_root(root: Path) -> dict[str, dbexec.DatabaseRef]:
    return dbexec.load_spider_catalog(root / "tables.json", root / "database")


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(args: argparse.Namespace) -> int:
    transport = _transport_from_args(args)
    config_file = _load_config_file(args.config)
    cfg = _dataclass_config(
        augment.GenConfig,
        config_file.get("generate", {}),
        {"seed": args.seed},
    )
    corpus = datasetio.load_seed_corpus(Path(args.corpus), split=args.split)
    seeds = corpus.dialogues[: args.limit] if args.limit else corpus.dialogues
    out_dir = Path(args.out)
    manifest = RunManifest(
        command="generate",
        config={"generate": _config_snapshot(cfg), "transport": transport.mode},
        seed=cfg.seed,
        inputs={"corpus": str(args.corpus), "split": args.split},
        outputs={"dataset": "dataset.jsonl"},
        deterministic_clock=transport.mode == "replay",
    ).start()
    dialogues, errors = augment.generate_many(
        seeds, corpus.databases, cfg, transport, jobs=args.jobs
    )
    datasetio.write_dataset(dialogues, out_dir / "dataset.jsonl")
    manifest.finish().write(out_dir)
    if errors:
        print(f"{len(errors)} dialogue(s) failed:", file=sys.stderr)
        for err in errors:
            print(f"  - {err}", file=sys.stderr)
        return 1
    print(f"wrote {len(dialogues)} dialogues to {out_dir / 'dataset.jsonl'}")
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    transport = _transport_from_args(args)
    config_file = _load_config_file(args.config)
    cfg = _dataclass_config(refine.RefineConfig, config_file.get("refine", {}), {})
    catalog = _catalog_from_root(Path(args.corpus))
    dialogues = datasetio.read_dataset(Path(args.dataset))
    out_dir = Path(args.out)
    manifest = RunManifest(
        command="refine",
        config={"refine": _config_snapshot(cfg), "transport": transport.mode},
        seed=args.seed,
        inputs={"dataset": str(args.dataset), "corpus": str(args.corpus)},
        outputs={"dataset": "dataset.jsonl", "reports": "reports.jsonl"},
        deterministic_clock=transport.mode == "replay",
    ).start()
    refined, reports, errors = refine.refine_many(
        dialogues, catalog, cfg, transport, jobs=args.jobs
    )
    datasetio.write_dataset(refined, out_dir / "dataset.jsonl")
    with open(out_dir / "reports.jsonl", "w", encoding="utf-8") as handle:
        for report in reports:
            handle.write(json.dumps(report.to_json(), ensure_ascii=False) + "\n")
    manifest.finish().write(out_dir)
    if errors:
        print(f"{len(errors)} dialogue(s) failed:", file=sys.stderr)
        for err in errors:
            print(f"  - {err}", file=sys.stderr)
        return 1
    print(f"wrote {len(refined)} dialogues to {out_dir / 'dataset.jsonl'}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    source = Path(args.dataset)
    if source.is_dir():
        dialogues = datasetio.load_seed_corpus(source, split=args.split).dialogues
    else:
        dialogues = datasetio.read_dataset(source)
    report = datasetio.stats_report(dialogues)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="stats",
        config={},
        seed=None,
        inputs={"dataset": str(source)},
        outputs={
            "report": "stats.json",
            "turn_lengths": "turn_lengths.csv",
            "ast_depths": "ast_depths.csv",
        },
    ).start()
    with open(out_dir / "stats.json", "w", encoding="utf-8") as handle:
        json.dump(report.to_json(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    _write_histogram_csv(
        out_dir / "turn_lengths.csv", "turns", report.turn_length_histogram
    )
    _write_histogram_csv(
        out_dir / "ast_depths.csv", "depth", report.ast_depth_histogram
    )
    manifest.finish().write(out_dir)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def _write_histogram_csv(path: Path, key_name: str, histogram: dict[int, int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([key_name, "count"])
        for key in sorted(histogram):
            writer.writerow([key, histogram[key]])


def cmd_traindata(args: argparse.Namespace) -> int:
    dialogues = datasetio.read_dataset(Path(args.dataset))
    catalog = _catalog_from_root(Path(args.corpus))
    mode = datasetio.TrainMode(args.mode)
    samples = datasetio.assemble_training_data(
        dialogues, catalog, mode, balance_ratio=args.balance_ratio, seed=args.seed
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="traindata",
        config={"mode": mode.value, "balance_ratio": args.balance_ratio},
        seed=args.seed,
        inputs={"dataset": str(args.dataset), "corpus": str(args.corpus)},
        outputs={"samples": "samples.jsonl"},
    ).start()
    with open(out_dir / "samples.jsonl", "w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample.to_json(), ensure_ascii=False) + "\n")
    manifest.finish().write(out_dir)
    print(f"wrote {len(samples)} samples to {out_dir / 'samples.jsonl'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gold = datasetio.read_dataset(Path(args.gold))
    records = datasetio.read_records(Path(args.predictions))
    catalog = _catalog_from_root(Path(args.corpus))
    ctx = metrics.EvalContext.from_dialogues(gold, catalog)
    for record in records:
        if record.gold_sql is None:
            continue
        schema = ctx.schema_for(record.dialogue_id)
        try:
            sqlkit.parse_sql(record.gold_sql, schema)
        except sqlkit.SqlError as exc:
            print(
                f"gold SQL unparseable at dialogue {record.dialogue_id!r} "
                f"turn {record.turn_index}: {exc}",
                file=sys.stderr,
            )
            return 1
    summary = metrics.evaluate(records, ctx)
    table = _format_summary(summary)
    print(table)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            command="eval",
            config={},
            seed=None,
            inputs={"gold": str(args.gold), "predictions": str(args.predictions)},
            outputs={"summary": "summary.json", "table": "table.txt"},
        ).start()
        with open(out_dir / "summary.json", "w", encoding="utf-8") as handle:
            json.dump(summary.to_json(), handle, indent=2, sort_keys=True)
            handle.write("\n")
        (out_dir / "table.txt").write_text(table + "\n", encoding="utf-8")
        manifest.finish().write(out_dir)
    return 0


def _format_summary(summary: metrics.EvalSummary) -> str:
    def pct(x: Optional[float]) -> str:
        return "   -" if x is None else f"{100 * x:5.1f}"

    lines = [
        "metric           value",
        f"QM              {pct(summary.qm)}",
        f"IM              {pct(summary.im)}",
        f"Acc             {pct(summary.acc)}",
        f"AccS            {pct(summary.accs)}",
        f"IAccS           {pct(summary.iaccs)}",
        f"ERROR %         {pct(summary.error_rate)}",
        "",
        "type            precision  recall      f1",
    ]
    for variant, prf in summary.per_type.items():
        lines.append(
            f"{variant.value:<15} {100 * prf.precision:9.1f} {100 * prf.recall:7.1f}"
            f" {100 * prf.f1:7.1f}"
        )
    macro = summary.per_type_macro
    lines.append(
        f"{'average':<15} {100 * macro.precision:9.1f} {100 * macro.recall:7.1f}"
        f" {100 * macro.f1:7.1f}"
    )
    return "\n".join(lines)


def cmd_judge(args: argparse.Namespace) -> int:
    transport = _transport_from_args(args)
    set_a = datasetio.read_dataset(Path(args.dataset_a))
    set_b = datasetio.read_dataset(Path(args.dataset_b))
    if len(set_a) != len(set_b):
        print("paired datasets differ in length", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="judge",
        config={"transport": transport.mode},
        seed=None,
        inputs={"dataset_a": str(args.dataset_a), "dataset_b": str(args.dataset_b)},
        outputs={"verdicts": "verdicts.jsonl", "raw": "judge_raw.jsonl"},
        deterministic_clock=transport.mode == "replay",
    ).start()
    tallies = {c: {"A": 0, "B": 0, "Tie": 0} for c in metrics.JUDGE_CRITERIA}
    with open(out_dir / "verdicts.jsonl", "w", encoding="utf-8") as verdicts_f, open(
        out_dir / "judge_raw.jsonl", "w", encoding="utf-8"
    ) as raw_f:
        for i, (a, b) in enumerate(zip(set_a, set_b), start=1):
            if a.database_id != b.database_id:
                print(
                    f"pair {i}: dialogues are over different databases", file=sys.stderr
                )
                return 1
            verdict = metrics.pairwise_judge(a, b, i, transport)
            for criterion, winner in verdict.winners.items():
                tallies[criterion][winner] += 1
            verdicts_f.write(json.dumps(verdict.to_json(), ensure_ascii=False) + "\n")
            raw_f.write(
                json.dumps({"pair_id": i, "raw": verdict.raw}, ensure_ascii=False)
                + "\n"
            )
    manifest.finish().write(out_dir)
    print(json.dumps(tallies, indent=2))
    return 0


def _build_answer_source(args: argparse.Namespace):
    if args.answerer == "scripted":
        if not args.script:
            raise SystemExit("--answerer scripted needs --script")
        return ScriptedAnswerer.from_json(Path(args.script))
    return _transport_from_args(args)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    catalog = _catalog_from_root(Path(args.corpus))
    config_file = _load_config_file(args.config)
    flow_cfg = _dataclass_config(FlowConfig, config_file.get("flow", {}), {})
    app = create_app(
        catalog,
        flow_cfg,
        _build_answer_source(args),
        transcripts_path=Path(args.transcripts) if args.transcripts else None,
        static_dir=Path(args.static) if args.static else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_repl(args: argparse.Namespace) -> int:
    catalog = _catalog_from_root(Path(args.corpus))
    if args.database not in catalog:
        print(f"unknown database {args.database!r}", file=sys.stderr)
        return 1
    config_file = _load_config_file(args.config)
    flow_cfg = _dataclass_config(FlowConfig, config_file.get("flow", {}), {})
    source = _build_answer_source(args)
    state = init_session(catalog[args.database], flow_cfg)
    print(f"connected to {args.database}; empty line quits")
    while True:
        try:
            line = input("? ").strip()
        except EOFError:
            break
        if not line:
            break
        result = step(state, line, source)
        print(f"[{result.question_type.variant.value}] ", end="")
        if result.sql:
            print(result.sql)
            if result.result_rows is not None:
                for row in result.result_rows.rows:
                    print("   ", row)
        else:
            print(result.message)
    return 0


# ---------------------------------------------------------------------------
# Argument wiring


def _add_transport_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--transport", choices=["live", "record", "replay"], default="live"
    )
    parser.add_argument("--cassette", help="cassette path for record/replay")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convsql",
        description="Generate, refine, evaluate, and serve multi-turn text-to-SQL dialogues.",
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="augment a seed corpus into new dialogues")
    p.add_argument("corpus", help="corpus root (tables.json, database/, train.json)")
    p.add_argument("out", help="output directory")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, help="process only the first N seed dialogues")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--split", default="train")
    _add_transport_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("refine", help="run the verify-and-refine gate over a dataset")
    p.add_argument("dataset", help="augmented dataset (JSON-lines)")
    p.add_argument("corpus", help="corpus root for the database catalog")
    p.add_argument("out", help="output directory")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    _add_transport_args(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("stats", help="corpus statistics and histograms")
    p.add_argument("dataset", help="dataset JSON-lines file or corpus root")
    p.add_argument("out", help="output directory")
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("traindata", help="assemble per-state training samples")
    p.add_argument("dataset", help="dialogue dataset (JSON-lines)")
    p.add_argument("corpus", help="corpus root for schemas")
    p.add_argument("out", help="output directory")
    p.add_argument(
        "--mode",
        choices=[m.value for m in datasetio.TrainMode],
        default=datasetio.TrainMode.WITH_INTENT.value,
    )
    p.add_argument("--balance-ratio", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_traindata)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("gold", help="gold dialogue dataset (JSON-lines)")
    p.add_argument("predictions", help="prediction records (JSON-lines)")
    p.add_argument("corpus", help="corpus root for schemas and execution")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("judge", help="pairwise quality judgment of two datasets")
    p.add_argument("dataset_a")
    p.add_argument("dataset_b")
    p.add_argument("out", help="output directory")
    _add_transport_args(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("serve", help="serve the inference engine over HTTP")
    p.add_argument("corpus", help="corpus root")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--answerer", choices=["llm", "scripted"], default="llm")
    p.add_argument("--script", help="scripted answerer rules (JSON)")
    p.add_argument("--static", help="directory of web UI assets to host")
    p.add_argument("--transcripts", help="JSON-lines transcript dump path")
    _add_transport_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("repl", help="terminal chat against a local session")
    p.add_argument("corpus", help="corpus root")
    p.add_argument("--database", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--answerer", choices=["llm", "scripted"], default="llm")
    p.add_argument("--script", help="scripted answerer rules (JSON)")
    _add_transport_args(p)
    p.set_defaults(func=cmd_repl)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except (
        datasetio.LayoutError,
        datasetio.ValidationError,
        llmclient.CassetteMiss,
        llmclient.TransportError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
