"""Command line: ``gen``, ``detect``, ``eval`` and ``rules-check``.

Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .builtins import DetectionConfig, processing_registry
from .evaluation import EvaluationError, format_table
from .knowledge import KBSchemaError, KnowledgeError, builtin_vocabulary, load_kb, save_kb
from .pipeline import (
    PipelineError,
    evaluate_against_truth,
    load_report,
    run_generic,
    run_specific,
    save_boxes_ply,
    save_report,
    shipped_rules_path,
)
from .pointcloud import CloudFormatError, load_cloud, save_cloud
from .rules import LimitExceeded, RuleSyntaxError, RuleValidationError, load_rules, validate_safety
from .scenegen import SceneSpecError, generate_scene, load_scene_spec

log = logging.getLogger("kbdetect")

_EXPECTED = (OSError, ValueError, KnowledgeError, KBSchemaError, CloudFormatError, RuleSyntaxError,
             RuleValidationError, PipelineError, SceneSpecError, EvaluationError, LimitExceeded)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load_config(path: str | None) -> DetectionConfig:
    if path is None:
        return DetectionConfig()
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return DetectionConfig.from_dict(doc)


def cmd_gen(args) -> int:
    spec = load_scene_spec(args.spec)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.density is not None:
        changes["density"] = args.density
    if changes:
        spec = spec.with_(**changes)
        spec.validate()
    cloud, truth = generate_scene(spec)
    save_cloud(cloud, args.out)
    save_kb(truth, args.truth)
    log.info("wrote %d points to %s and %d objects to %s", len(cloud), args.out,
             len(truth.individuals), args.truth)
    return 0


def _print_violations(violations) -> None:
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)


def cmd_detect(args) -> int:
    config = _load_config(args.config)
    cloud = load_cloud(args.cloud)
    kb = load_kb(args.kb) if args.kb else builtin_vocabulary()
    rules = load_rules(args.rules or shipped_rules_path(args.mode))
    run = run_specific if args.mode == "specific" else run_generic
    try:
        report = run(cloud, kb, rules, config)
    except RuleValidationError as e:
        _print_violations(e.violations)
        return _fail("rule validation failed")
    save_report(report, args.out)
    if args.boxes:
        save_boxes_ply(report, args.boxes)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            json.dump(report.log.to_dict(), fh, indent=2)
            fh.write("\n")
    log.info("%d elements, %d not found; timings %s", len(report.elements), len(report.not_found),
             {k: round(v, 3) for k, v in report.timings.items()})
    return 0


def cmd_eval(args) -> int:
    report = load_report(args.report)
    truth = load_kb(args.truth)
    ev = evaluate_against_truth(report, truth)
    print(format_table(ev))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(ev.to_dict(), fh, indent=2)
            fh.write("\n")
    return 0


def cmd_rules_check(args) -> int:
    rules = load_rules(args.file)
    kb = load_kb(args.kb) if args.kb else builtin_vocabulary()
    violations = validate_safety(rules, kb, processing_registry())
    if violations:
        _print_violations(violations)
        return _fail(f"{len(violations)} violation(s) in {args.file}")
    print(f"{args.file}: {len(rules)} rules ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbdetect", description="Knowledge-guided plane detection in point clouds.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scene and its truth KB")
    g.add_argument("--spec", required=True, help="scene spec (JSON)")
    g.add_argument("--out", required=True, help="output cloud (.xyz or .ply)")
    g.add_argument("--truth", required=True, help="output truth KB (JSON)")
    g.add_argument("--seed", type=int)
    g.add_argument("--density", type=float, help="override points per square meter")
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("detect", help="run the specific or generic workflow")
    d.add_argument("--mode", choices=("specific", "generic"), required=True)
    d.add_argument("--cloud", required=True)
    d.add_argument("--kb", help="input KB (default: the bare vocabulary)")
    d.add_argument("--rules", help="rule file (default: the shipped file for the mode)")
    d.add_argument("--out", required=True, help="report (JSON)")
    d.add_argument("--boxes", help="optional box mesh (ASCII PLY)")
    d.add_argument("--config", help="DetectionConfig overrides (JSON object)")
    d.add_argument("--log", help="write the derivation log (JSON)")
    d.add_argument("--seed", type=int, help="recorded for reproducibility; detection is deterministic")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score a report against a truth KB")
    e.add_argument("--report", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--json", help="also write the scores as JSON")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rules-check", help="parse and validate a rule file")
    r.add_argument("file")
    r.add_argument("--kb", help="vocabulary KB (default: the built-in vocabulary)")
    r.set_defaults(func=cmd_rules_check)

    # "rules check FILE" spelling of the same command
    rg = sub.add_parser("rules", help="rule file tools")
    rsub = rg.add_subparsers(dest="rules_command", required=True)
    rc = rsub.add_parser("check", help="parse and validate a rule file")
    rc.add_argument("file")
    rc.add_argument("--kb")
    rc.set_defaults(func=cmd_rules_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except RuleSyntaxError as e:
        return _fail(f"rule syntax: {e}")
    except RuleValidationError as e:
        _print_violations(e.violations)
        return _fail("rule validation failed")
    except _EXPECTED as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
