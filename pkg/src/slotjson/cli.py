"""Command-line entry point: ``slotjson <subcommand> ...``.

Exit status is 0 on success, 1 on data errors (a JSON error report goes to
stderr) and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .core import (
    ExtractionParseError,
    SlotJsonError,
    canonical_serialize,
    load_records,
    parse_extraction,
    read_jsonl,
    record_from_json,
    save_records,
    write_jsonl,
)
from .evaluation import score_corpus
from .guardrails import sanitize_extraction
from .pipeline import (
    READERS,
    AugmentParams,
    augment_record,
    build_dbpedia_records,
    convert_tagged_utterance,
    load_label_map,
    mix_dataset,
    read_articles,
    slot_inventory,
)
from .prompts import PromptTemplate, build_prompt, select_exemplar
from .synth import (
    UNFAITHFUL,
    LiveCompletionClient,
    MockCompletionClient,
    build_template_fixtures,
    load_catalog,
    load_seed_pairs,
    make_specs,
    run_synth,
    split_dataset,
)

BUILD_ID = f"slotjson {__version__}"
log = logging.getLogger("slotjson")


class DataError(SlotJsonError):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


def _info(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg)


def _map(args, fn, items):
    if getattr(args, "jobs", 1) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _pred_texts(path, field: str, completion: bool) -> dict[str, str]:
    out = {}
    for row in read_jsonl(path):
        if "id" not in row:
            raise DataError("prediction row without 'id'", path=str(path))
        text = row.get(field, "")
        if not isinstance(text, str):
            text = json.dumps(text, ensure_ascii=False)
        if completion and not text.lstrip().startswith("["):
            text = "[" + text
        out[str(row["id"])] = text
    return out


# --- subcommands -----------------------------------------------------------

def cmd_evaluate(args) -> int:
    gold = load_records(args.gold)
    preds = _pred_texts(args.pred, args.pred_field, args.completion)
    report = score_corpus(
        [(r.gold, preds.get(r.id, "")) for r in gold],
        ids=[r.id for r in gold],
        jobs=args.jobs,
    )
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(BUILD_ID), indent=2) + "\n", encoding="utf-8")
    for line in report.summary_lines():
        _info(args, line)
    return 0


def cmd_convert(args) -> int:
    utterances = READERS[args.format](args.input)
    label_map = load_label_map(args.format)
    if args.label_map:
        label_map.update(json.loads(Path(args.label_map).read_text(encoding="utf-8")))
    inventory = slot_inventory(utterances)
    records = _map(args, lambda u: convert_tagged_utterance(u, inventory[u.intent], label_map), utterances)
    n = save_records(args.out, records)
    _info(args, f"wrote {n} records to {args.out}")
    return 0


def cmd_mix(args) -> int:
    pool = load_records(args.input)
    records = mix_dataset(pool, args.n, random.Random(args.seed), args.k_min, args.k_max)
    n = save_records(args.out, records)
    _info(args, f"wrote {n} mixed records to {args.out}")
    return 0


def cmd_dbpedia(args) -> int:
    articles = read_articles(args.abstracts, args.infobox)
    records = build_dbpedia_records(articles, args.threshold, filter_first=not args.count_before_grounding)
    n = save_records(args.out, records)
    _info(args, f"wrote {n} records from {len(articles)} articles to {args.out}")
    return 0


def cmd_augment(args) -> int:
    params = AugmentParams(args.drop, args.reorder, args.seed)
    rng = random.Random(args.seed)
    records = [augment_record(r, params, rng) for r in load_records(args.input)]
    n = save_records(args.out, records)
    _info(args, f"wrote {n} augmented records to {args.out}")
    return 0


def cmd_prompt(args) -> int:
    if args.mode == "one" and args.seed is None:
        args.parser.error("the following arguments are required for --mode one: --seed")
    records = load_records(args.records)
    pool = load_records(args.pool) if args.pool else records
    template = PromptTemplate(entity_casing=args.casing) if not args.instruction else PromptTemplate(
        instruction=args.instruction, entity_casing=args.casing
    )
    rng = random.Random(args.seed)
    rows = []
    for r in records:
        exemplar = select_exemplar(r.input, pool, rng, exclude_id=r.id) if args.mode == "one" else None
        p = build_prompt(r.input, template, exemplar)
        rows.append({"id": r.id, "prompt": p.text, "exemplar_id": p.exemplar_id})
    n = write_jsonl(args.out, rows)
    _info(args, f"wrote {n} prompts to {args.out}")
    return 0


def cmd_guard(args) -> int:
    records = {r.id: r for r in load_records(args.records)}
    rows = []
    for row in read_jsonl(args.pred):
        rid = str(row.get("id"))
        if rid not in records:
            raise DataError("prediction id not found in records", record_id=rid)
        text = row.get(args.pred_field, "")
        try:
            x = parse_extraction(text)
        except ExtractionParseError as exc:
            rows.append({"id": rid, args.pred_field: text, "error": str(exc)})
            continue
        clean = sanitize_extraction(x, records[rid].input)
        rows.append({"id": rid, args.pred_field: canonical_serialize(clean)})
    n = write_jsonl(args.out, rows)
    _info(args, f"wrote {n} sanitized predictions to {args.out}")
    return 0


def cmd_synth(args) -> int:
    catalog = load_catalog(args.catalog)
    seeds = load_seed_pairs(args.seeds)
    specs = make_specs(catalog, seeds, args.n, random.Random(args.seed))
    if args.mode == "mock":
        if not args.fixtures:
            args.parser.error("--fixtures is required in mock mode")
        if args.template_fixtures:
            Path(args.fixtures).write_text(
                json.dumps(build_template_fixtures(specs, catalog), indent=1) + "\n", encoding="utf-8"
            )
        client = MockCompletionClient.from_file(args.fixtures, args.max_chars)
    else:
        client = LiveCompletionClient.from_env(max_chars=args.max_chars)
    records = run_synth(client, specs, catalog, jobs=args.jobs)
    if args.drop_unfaithful:
        records = [r for r in records if UNFAITHFUL not in r.flags]
    n = save_records(args.out, records)
    flagged = sum(1 for r in records if UNFAITHFUL in r.flags)
    _info(args, f"wrote {n} records to {args.out} ({flagged} flagged unfaithful)")
    return 0


def cmd_split(args) -> int:
    try:
        ratios = tuple(float(x) for x in args.ratios.split(","))
    except ValueError:
        args.parser.error(f"--ratios: cannot parse {args.ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        args.parser.error(f"--ratios must sum to 1, got {sum(ratios)}")
    records = load_records(args.input)
    parts = split_dataset(records, ratios, random.Random(args.seed))
    src = Path(args.input)
    out_dir = Path(args.out_dir) if args.out_dir else src.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    names = ["train", "valid", "test"] if len(parts) == 3 else [f"part{i}" for i in range(len(parts))]
    for name, part in zip(names, parts):
        path = out_dir / f"{src.stem}.{name}.jsonl"
        save_records(path, part)
        _info(args, f"{name}: {len(part)} -> {path}")
    return 0


def cmd_validate(args) -> int:
    errors = []
    n = 0
    for lineno, row in enumerate(read_jsonl(args.input), 1):
        n += 1
        try:
            record_from_json(row)
        except SlotJsonError as exc:
            rid = getattr(exc, "record_id", None) or (row.get("id") if isinstance(row, dict) else None)
            errors.append({"line": lineno, "id": rid, "reason": getattr(exc, "reason", str(exc))})
    if errors:
        raise DataError(f"{len(errors)} of {n} records are invalid", errors=errors)
    _info(args, f"{n} records valid")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker threads for per-record work")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="slotjson", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=BUILD_ID)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn, parser=p)
        return p

    p = add("evaluate", cmd_evaluate, "score predictions against gold records")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report")
    p.add_argument("--pred-field", default="generation")
    p.add_argument("--completion", action="store_true", help="predictions omit the opening '['")
    p.add_argument("--seed", type=int)

    p = add("convert", cmd_convert, "convert a BIO slot-filling corpus")
    p.add_argument("--format", required=True, choices=sorted(READERS))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label-map", help="JSON file overriding slot label display names")
    p.add_argument("--seed", type=int)

    p = add("mix", cmd_mix, "concatenate 2-4 random records into multi-intent records")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=4)

    p = add("dbpedia", cmd_dbpedia, "build records from abstract/infobox tables")
    p.add_argument("--abstracts", required=True)
    p.add_argument("--infobox", required=True)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--count-before-grounding", action="store_true",
                   help="apply the frequency threshold before the value-in-abstract filter")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = add("augment", cmd_augment, "randomly drop/reorder requested entities")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--drop", type=float, default=0.15)
    p.add_argument("--reorder", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("prompt", cmd_prompt, "render zero-shot or one-shot prompts")
    p.add_argument("--records", required=True)
    p.add_argument("--mode", choices=["zero", "one"], default="zero")
    p.add_argument("--pool")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--casing", choices=["snake", "title"], default="snake")
    p.add_argument("--instruction")

    p = add("guard", cmd_guard, "strip ungrounded pairs from predictions")
    p.add_argument("--records", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pred-field", default="generation")
    p.add_argument("--seed", type=int)

    p = add("synth", cmd_synth, "generate synthetic email records")
    p.add_argument("--catalog")
    p.add_argument("--seeds")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=["mock", "live"], default="mock")
    p.add_argument("--fixtures")
    p.add_argument("--template-fixtures", action="store_true",
                   help="write template completions for the sampled prompts to --fixtures first")
    p.add_argument("--max-chars", type=int)
    p.add_argument("--drop-unfaithful", action="store_true")
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, "split records into train/valid/test")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir")

    p = add("validate", cmd_validate, "check records against the JSONL contract")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (SlotJsonError, OSError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        report.update(getattr(exc, "details", {}))
        if getattr(exc, "record_id", None) is not None:
            report["record_id"] = exc.record_id
        print(json.dumps(report, ensure_ascii=False), file=sys.stderr)
        return 1


run = main

if __name__ == "__main__":
    sys.exit(main())
