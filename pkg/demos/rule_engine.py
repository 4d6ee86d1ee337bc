"""Forward chaining on a tiny family KB, with the derivation log printed."""

from kbdetect.knowledge import KnowledgeBase
from kbdetect.rules import evaluate_fixpoint, parse_rules

kb = KnowledgeBase()
for p in ("hasParent", "hasBrother", "hasUncle"):
    kb.declare_property(p, "object")
for name in ("tom", "sue", "max"):
    kb.add_individual(name)
kb.assert_fact("tom", "hasParent", "sue")
kb.assert_fact("sue", "hasBrother", "max")

rules = parse_rules("rule uncle: hasParent(?x, ?p) ^ hasBrother(?p, ?u) -> hasUncle(?x, ?u)")
log = evaluate_fixpoint(kb, rules)
for f in log.firings:
    print(f"pass {f.pass_no}: {f.rule} {f.bindings} -> {f.new_facts}")
print("fixpoint after", log.passes, "passes;", "hasUncle(tom) =", kb.value("tom", "hasUncle"))
