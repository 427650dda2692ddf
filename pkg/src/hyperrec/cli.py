"""Command-line entry point.

Subcommands: ingest, mine, recommend, explain, ablate, evaluate. Exit codes:
0 success, 2 input/config error, 3 domain error (unknown user or rule),
4 internal invariant violation. A default config file can be supplied via
the HYPER_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .config import EngineConfig
from .datamodel import UserGroupMap, ingest_log
from .declarative import ChunkStore
from .errors import DomainError, EngineError, InputError, InvariantError
from .evalharness import SplitSpec, evaluate
from .recommend import Engine, ablate, explain, recommend, recommendations_to_jsonl
from .rulemine import RuleSet, mine_scoped
from .store import load_store, save_store

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_INTERNAL = 4


def _load_config(path: str | None) -> EngineConfig:
    if path is None:
        path = os.environ.get("HYPER_CONFIG") or None
    if path is None:
        return EngineConfig()
    return EngineConfig.from_file(path)


def _load_groups(path: str | None) -> UserGroupMap:
    if path is None:
        return UserGroupMap()
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return UserGroupMap()
            if header != ["user_id", "group_id"]:
                raise InputError("groups file header must be user_id,group_id")
            assignments = {}
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2 or not row[0] or not row[1]:
                    raise InputError(f"groups line {line_no}: expected user_id,group_id")
                assignments[row[0]] = row[1]
    except FileNotFoundError:
        raise InputError(f"groups file not found: {path}") from None
    return UserGroupMap(assignments)


def _load_rules(path: str) -> RuleSet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"rules file not found: {path}") from None
    return RuleSet.from_jsonl(text)


def _make_engine(args) -> tuple[Engine, EngineConfig]:
    config = _load_config(args.config)
    log, store = load_store(args.store)
    ruleset = _load_rules(args.rules)
    groups = _load_groups(getattr(args, "groups", None))
    return Engine(store=store, ruleset=ruleset, config=config, groups=groups), config


def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    log = ingest_log(args.log, args.format)
    store = ChunkStore.build(log, cooc_window=config.cooc_window,
                             time_mode=config.time_mode)
    save_store(args.out, log, store)
    print(f"users={len(log.users)} items={len(log.catalog)} interactions={len(log)}")
    return EXIT_OK


def cmd_mine(args) -> int:
    config = _load_config(args.config)
    log, _store = load_store(args.store)
    groups = _load_groups(args.groups)
    ruleset = mine_scoped(log, groups, config.mining, beta=config.beta,
                          lift_cap=config.lift_cap, bucket_kind=config.bucket_kind,
                          bucket_key=config.bucket_key, tz_offset=config.tz_offset)
    Path(args.out).write_text(ruleset.to_jsonl(), encoding="utf-8")
    counts: dict[tuple[str, str], int] = {}
    for sr in ruleset.rules:
        key = (sr.scope.level, sr.rule_class)
        counts[key] = counts.get(key, 0) + 1
    for (level, cls), n in sorted(counts.items()):
        print(f"scope={level} class={cls} rules={n}")
    print(f"total={len(ruleset)}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    engine, _config = _make_engine(args)
    recs = recommend(engine, args.user, args.now, args.k, disabled=args.disable)
    ruleset = engine.ruleset.without(args.disable)
    sys.stdout.write(recommendations_to_jsonl(recs, ruleset))
    return EXIT_OK


def cmd_explain(args) -> int:
    engine, _config = _make_engine(args)
    recs = recommend(engine, args.user, args.now, args.k, disabled=args.disable)
    ruleset = engine.ruleset.without(args.disable)
    for rec in recs:
        obj = explain(rec, ruleset).to_json_obj()
        obj["rank"] = rec.rank
        print(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    return EXIT_OK


def cmd_ablate(args) -> int:
    engine, _config = _make_engine(args)
    recs, diff = ablate(engine, args.user, args.now, args.k, args.disable)
    ruleset = engine.ruleset.without(args.disable)
    doc = {
        "disabled": sorted(set(args.disable)),
        "recommendations": [
            json.loads(line) for line in
            recommendations_to_jsonl(recs, ruleset).splitlines()
        ],
        "diff": diff,
    }
    print(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    log, _store = load_store(args.store)
    groups = _load_groups(args.groups)
    manual = _load_rules(args.manual_rules) if args.manual_rules else None
    spec = SplitSpec(holdout_n=args.holdout, min_history=args.min_history)
    try:
        ks = [int(x) for x in args.k.split(",") if x]
    except ValueError:
        raise InputError(f"bad --k list: {args.k!r}") from None
    report = evaluate(log, spec, config, ks, groups=groups, manual_rules=manual,
                      disabled=args.disable, per_user_csv=args.per_user_csv)
    print(report.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperrec",
        description="Memory-activation recommender with mined production-rule "
                    "reweighting, explanations, and counterfactual ablation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a log file and persist a store")
    p.add_argument("--log", required=True, help="input log file")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--out", required=True, help="store directory to create")
    p.add_argument("--config", default=None, help="engine config file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mine", help="mine production rules from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--groups", default=None, help="CSV user_id,group_id")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="rules JSONL output path")
    p.set_defaults(func=cmd_mine)

    def serving_args(p):
        p.add_argument("--store", required=True)
        p.add_argument("--rules", required=True)
        p.add_argument("--user", required=True)
        p.add_argument("--now", type=int, required=True)
        p.add_argument("--k", type=int, required=True)
        p.add_argument("--groups", default=None)
        p.add_argument("--config", default=None)
        p.add_argument("--disable", action="append", default=[],
                       metavar="RULE_ID", help="disable a rule (repeatable)")

    p = sub.add_parser("recommend", help="top-k recommendations as JSON lines")
    serving_args(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("explain", help="explanations for the top-k items")
    serving_args(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ablate", help="recompute with rules disabled and diff")
    serving_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("evaluate", help="temporal-split offline evaluation")
    p.add_argument("--store", required=True)
    p.add_argument("--holdout", type=int, default=1)
    p.add_argument("--min-history", type=int, default=5, dest="min_history")
    p.add_argument("--k", default="1,5,10", help="comma-separated cutoffs")
    p.add_argument("--groups", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--manual-rules", default=None, dest="manual_rules",
                   help="JSONL of manual rules to merge into the mined set")
    p.add_argument("--disable", action="append", default=[], metavar="RULE_ID")
    p.add_argument("--per-user-csv", default=None, dest="per_user_csv")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (InvariantError, EngineError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
