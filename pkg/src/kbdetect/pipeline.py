"""The two detection workflows and their run reports.

``run_specific`` searches around the prior of every known individual,
widening the search area after each miss. ``run_generic`` iterates
geometry, topology, semantic and refinement stages until the knowledge
base stops changing.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from importlib import resources

from .boxes import BoundingBox
from .builtins import (
    BOX_CLASS,
    NAMESPACE,
    DetectionConfig,
    PlaneDetector,
    connection_builtin,
    detection_branch,
    materialize_box,
    parallel_builtin,
    parse_detection_args,
    perpendicular_builtin,
    processing_registry,
)
from .evaluation import Evaluation, EvaluationError, evaluate_boxes, truth_from_kb
from .knowledge import DISJOINT_SEMANTIC, ClassAtom, KnowledgeBase, Var, match_atom
from .pointcloud import PointCloud
from .rules import (
    BuiltinAtom,
    BuiltinCall,
    DerivationLog,
    Firing,
    Limits,
    RuleSet,
    RuleValidationError,
    RuleViolation,
    assert_consequent,
    evaluate_fixpoint,
    load_rules,
    validate_safety,
)
from .rules.registry import BuiltinError

GEOMETRIC = "Geometric"
SEMANTIC = "Semantic"
GENERIC_STAGES = ("geometry", "topology", "semantic", "refinement")


class PipelineError(RuntimeError):
    pass


def shipped_rules(mode: str) -> RuleSet:
    """The rule file shipped for ``"generic"`` or ``"specific"`` mode."""
    if mode not in ("generic", "specific"):
        raise ValueError(f"unknown mode {mode!r}")
    return load_rules(resources.files("kbdetect") / "data" / f"{mode}.wrl")


def shipped_rules_path(mode: str) -> str:
    return str(resources.files("kbdetect") / "data" / f"{mode}.wrl")


@dataclass
class DetectedElement:
    id: str
    box: BoundingBox
    qualification: str
    class_label: str | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.qualification == SEMANTIC and self.class_label is None:
            raise ValueError(f"{self.id}: a semantic element needs a class label")

    def to_dict(self) -> dict:
        return {"id": self.id, "class_label": self.class_label, "qualification": self.qualification,
                "box": self.box.to_dict(), "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "DetectedElement":
        return cls(d["id"], BoundingBox.from_dict(d["box"]), d["qualification"],
                   d.get("class_label"), dict(d.get("provenance", {})))


@dataclass
class RunReport:
    """Outcome of a run.

    ``timings`` (seconds per stage) and ``kb`` are kept in memory only, so
    the serialized report depends on the inputs alone.
    """

    mode: str
    elements: list[DetectedElement] = field(default_factory=list)
    not_found: list[str] = field(default_factory=list)
    searches: dict = field(default_factory=dict)
    log: DerivationLog = field(default_factory=DerivationLog)
    iterations: int = 0
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    kb: KnowledgeBase | None = None

    def labelled(self) -> list[tuple[str, BoundingBox]]:
        return [(e.class_label, e.box) for e in self.elements if e.class_label is not None]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "iterations": self.iterations,
                "elements": [e.to_dict() for e in self.elements],
                "not_found": list(self.not_found), "searches": dict(self.searches),
                "config": dict(self.config),
                "derivation_log": self.log.to_dict()}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _atomic_write(path, text: str) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_report(report: RunReport, path) -> None:
    _atomic_write(path, report.dumps())


@dataclass
class LoadedReport:
    mode: str
    elements: list[DetectedElement]
    not_found: list[str]

    def labelled(self) -> list[tuple[str, BoundingBox]]:
        return [(e.class_label, e.box) for e in self.elements if e.class_label is not None]


def load_report(path) -> LoadedReport:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        return LoadedReport(d["mode"], [DetectedElement.from_dict(e) for e in d["elements"]],
                            list(d.get("not_found", [])))
    except (KeyError, TypeError, ValueError) as e:
        raise PipelineError(f"{path}: malformed report ({e})") from None


_FACES = ((0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5), (0, 4, 5), (0, 5, 1),
          (2, 3, 7), (2, 7, 6), (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3))


def boxes_to_ply(boxes) -> str:
    """ASCII PLY mesh with 8 vertices and 12 triangles per box."""
    boxes = list(boxes)
    lines = ["ply", "format ascii 1.0", f"element vertex {8 * len(boxes)}",
             "property float x", "property float y", "property float z",
             f"element face {12 * len(boxes)}", "property list uchar int vertex_indices", "end_header"]
    for b in boxes:
        lines += [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in b.corners()]
    for k in range(len(boxes)):
        lines += [f"3 {a + 8 * k} {b + 8 * k} {c + 8 * k}" for a, b, c in _FACES]
    return "\n".join(lines) + "\n"


def save_boxes_ply(report, path) -> None:
    _atomic_write(path, boxes_to_ply(e.box for e in report.elements))


# -- shared plumbing -----------------------------------------------------------

def _require_valid(ruleset: RuleSet, kb: KnowledgeBase, registry) -> None:
    violations = validate_safety(ruleset, kb, registry)
    if violations:
        raise RuleValidationError(violations)


def _label_of(kb: KnowledgeBase, name: str) -> str | None:
    for c in kb.classes_of(name):
        if c in DISJOINT_SEMANTIC:
            return c
    return None


def _box_individuals(kb: KnowledgeBase) -> list[str]:
    return [n for n in kb.instances(BOX_CLASS) if isinstance(kb.value(n, "hasBoxGeometry"), BoundingBox)]


def _elements(kb: KnowledgeBase, log: DerivationLog, extra: dict) -> list[DetectedElement]:
    """One element per stored box, with the rules and branch that produced it."""
    origin: dict[str, dict] = {}
    for call in log.builtin_calls:
        if call.builtin != f"{NAMESPACE}:Plane_Detection" or call.error is not None or call.cached:
            continue
        for row in call.result or []:
            name = row[0]
            if name in origin:
                continue
            try:
                branch = detection_branch(parse_detection_args(call.args, kb))
            except BuiltinError:
                branch = None
            origin[name] = {"branch": branch, "rule": call.rule}
    out = []
    for name in _box_individuals(kb):
        rules = []
        for f in log.firings:
            if name in f.bindings.values() and f.rule not in rules:
                rules.append(f.rule)
        prov = {"branch": None, "rule": None, "enlargements": 0, "element": None}
        prov.update(origin.get(name, {}))
        prov.update(extra.get(name, {}))
        prov["firings"] = rules
        label = _label_of(kb, name)
        out.append(DetectedElement(name, kb.value(name, "hasBoxGeometry"),
                                   SEMANTIC if label else GEOMETRIC, label, prov))
    return out


# -- specific knowledge --------------------------------------------------------

def _prior_individuals(kb: KnowledgeBase) -> list[str]:
    return [n for n in kb.individuals if not kb.instance_of(n, BOX_CLASS)
            and (kb.value(n, "hasPosition") is not None or kb.value(n, "hasBoxGeometry") is not None)]


def _detection_rule(ruleset: RuleSet, kb: KnowledgeBase, name: str):
    """First rule whose class atom accepts ``name`` and whose body binds a Plane_Detection call."""
    for rule in ruleset:
        pd = [a for a in rule.antecedent if isinstance(a, BuiltinAtom) and a.name == "Plane_Detection"]
        if not pd:
            continue
        atom = pd[0]
        lead = [a for a in rule.antecedent if isinstance(a, ClassAtom) and isinstance(a.term, Var)]
        if not lead or not kb.instance_of(name, lead[0].cls):
            continue
        bindings = [{lead[0].term.name: name}]
        for a in rule.antecedent:
            if isinstance(a, BuiltinAtom):
                break
            bindings = [b for prev in bindings for b in match_atom(kb, a, prev)]
        if bindings:
            return rule, atom, bindings[0]
    return None


def run_specific(cloud: PointCloud, kb: KnowledgeBase, ruleset: RuleSet | None = None,
                 config: DetectionConfig | None = None, detector: PlaneDetector | None = None,
                 limits: Limits | None = None) -> RunReport:
    """Locate every individual that carries a prior, then annotate.

    Each prior is tried with the search area widened by
    ``enlargement_factor`` up to ``max_enlargements`` times. A hit stores
    the box, its qualification and ``hasDetectionRes(x, true)`` through the
    matching specific-stage rule; a miss asserts ``hasDetectionRes(x, false)``.
    The remaining stages then run to a fixpoint.
    """
    config = config or (detector.config if detector else DetectionConfig())
    ruleset = ruleset if ruleset is not None else shipped_rules("specific")
    detector = detector or PlaneDetector(cloud, config)
    registry = processing_registry(detector)
    _require_valid(ruleset, kb, registry)
    priors = _prior_individuals(kb)
    if not priors:
        raise PipelineError("no priors: no individual has hasPosition or hasBoxGeometry")
    specific = ruleset.stage("specific")
    log = DerivationLog()
    report = RunReport("specific", config=config.to_dict(), log=log, kb=kb)
    extra: dict[str, dict] = {}
    t0 = time.perf_counter()
    for name in priors:
        found = _detection_rule(specific, kb, name)
        if found is None:
            log.errors.append(f"no specific rule applies to {name}")
            continue
        rule, atom, binding = found
        values = []
        for t in atom.args[:6]:
            values.append(binding.get(t.name) if isinstance(t, Var) else t.value)
        try:
            args = parse_detection_args(values, kb)
        except BuiltinError as e:
            log.errors.append(f"rule {rule.name}, {name}: {e}")
            continue
        hits, attempts = [], 0
        for k in range(config.max_enlargements + 1):
            attempts = k
            try:
                hits = detector.detect(replace(args, enlargement=k))
            except BuiltinError as e:
                log.errors.append(f"rule {rule.name}, {name}: {e}")
                hits = []
            log.builtin_calls.append(BuiltinCall(0, rule.name, atom.qualname, values + [k],
                                                 [[repr(h.box)] for h in hits]))
            if hits:
                break
        report.searches[name] = {"found": bool(hits), "enlargements": attempts}
        if hits:
            box_name = materialize_box(kb, hits[0])
            out_var = atom.args[6]
            b = dict(binding)
            b[out_var.name] = box_name
            new = assert_consequent(kb, rule, b)
            if kb.assert_fact(name, "hasDetectionRes", True):
                new.append(f"hasDetectionRes({name}, True)")
            log.firings.append(Firing(0, rule.name, b, new))
            extra[box_name] = {"branch": detection_branch(args), "rule": rule.name,
                               "enlargements": attempts, "element": name}
        else:
            kb.assert_fact(name, "hasDetectionRes", False)
            report.not_found.append(name)
    report.timings["specific"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    log.extend(evaluate_fixpoint(kb, ruleset.without_stage("specific"), registry, limits))
    report.timings["annotation"] = time.perf_counter() - t0
    report.iterations = 1
    report.elements = _elements(kb, log, extra)
    return report


# -- generic knowledge ---------------------------------------------------------

def _check_stages(ruleset: RuleSet) -> None:
    tagged = set(ruleset.stages) | ({"semantic"} if ruleset.stage(None).rules else set())
    missing = [s for s in ("geometry", "topology") if s not in tagged]
    if not ({"semantic", "refinement"} & tagged):
        missing.append("semantic or refinement")
    if missing:
        raise RuleValidationError([RuleViolation("<ruleset>", f"missing {m} stage rules") for m in missing])


def relate_boxes(kb: KnowledgeBase, config: DetectionConfig, done: set | None = None,
                 pass_no: int = 0) -> list[Firing]:
    """Assert perpendicular, connected and parallel relations between stored boxes.

    Pairs listed in ``done`` are skipped and newly checked pairs are added to it.
    """
    done = set() if done is None else done
    boxes = _box_individuals(kb)
    firings = []
    for a in boxes:
        for b in boxes:
            if a == b or (a, b) in done:
                continue
            done.add((a, b))
            new = []
            for prop, pred in (("isPerpendicularTo", perpendicular_builtin),
                               ("isConnectedTo", connection_builtin), ("isParallelTo", parallel_builtin)):
                if pred(kb, a, b, config) and kb.assert_fact(a, prop, b):
                    new.append(f"{prop}({a}, {b})")
            if new:
                firings.append(Firing(pass_no, "topology", {"b1": a, "b2": b}, new))
    return firings


def run_generic(cloud: PointCloud, kb: KnowledgeBase, ruleset: RuleSet | None = None,
                config: DetectionConfig | None = None, detector: PlaneDetector | None = None,
                limits: Limits | None = None) -> RunReport:
    """Detect, relate, annotate and refine until nothing changes.

    Each iteration fires the geometry rules, relates every new pair of
    boxes, then fires the topology, semantic (and untagged) and refinement
    rules, each to its own fixpoint. Stops after an iteration that adds no
    fact, or after ``max_refinement_iterations``.
    """
    config = config or (detector.config if detector else DetectionConfig())
    ruleset = ruleset if ruleset is not None else shipped_rules("generic")
    detector = detector or PlaneDetector(cloud, config)
    registry = processing_registry(detector)
    _check_stages(ruleset)
    _require_valid(ruleset, kb, registry)
    stages = [("geometry", ruleset.stage("geometry")), ("topology", ruleset.stage("topology")),
              ("semantic", ruleset.stage("semantic", None)), ("refinement", ruleset.stage("refinement"))]
    log = DerivationLog()
    report = RunReport("generic", config=config.to_dict(), log=log, kb=kb)
    report.timings = {s: 0.0 for s in GENERIC_STAGES}
    memo: dict = {}
    related: set = set()
    for it in range(1, int(config.max_refinement_iterations) + 1):
        report.iterations = it
        start = kb.version
        for stage, rules in stages:
            t0 = time.perf_counter()
            if stage == "topology":
                log.firings.extend(relate_boxes(kb, config, related, it))
            if rules.rules:
                log.extend(evaluate_fixpoint(kb, rules, registry, limits, memo))
            report.timings[stage] += time.perf_counter() - t0
        if kb.version == start:
            break
    report.elements = _elements(kb, log, {})
    return report


def evaluate_against_truth(report, truth) -> Evaluation:
    """Per-class precision, recall and IoU of a report's labelled elements.

    ``truth`` is a knowledge base of labelled individuals with
    hasBoxGeometry, or a sequence of ``(label, box)``.
    """
    if isinstance(truth, KnowledgeBase):
        truth = truth_from_kb(truth)
    return evaluate_boxes(report.labelled(), list(truth))


__all__ = [
    "DetectedElement", "EvaluationError", "GEOMETRIC", "LoadedReport", "PipelineError", "RunReport",
    "SEMANTIC", "boxes_to_ply", "evaluate_against_truth", "load_report", "relate_boxes",
    "run_generic", "run_specific", "save_boxes_ply", "save_report", "shipped_rules",
    "shipped_rules_path",
]
