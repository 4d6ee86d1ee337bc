import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbdetect.builtins import processing_registry
from kbdetect.knowledge import OBJECT, KnowledgeBase, builtin_vocabulary, dumps_kb
from kbdetect.pipeline import shipped_rules
from kbdetect.rules import (
    IN,
    OUT,
    BuiltinAtom,
    BuiltinDef,
    LimitExceeded,
    Limits,
    RuleSet,
    RuleSyntaxError,
    eval_comparison_builtin,
    evaluate_fixpoint,
    parse_rules,
    standard_registry,
    validate_safety,
)

from .test_knowledge import family_kb

UNCLE = "rule u: hasParent(?x1,?x2) ^ hasBrother(?x2,?x3) -> hasUncle(?x1,?x3)"
RULE6 = ("rule r6: hasOrientation(?box, Vertical) ^ hasHeight(?box,?h) ^ swrlb:lessThan(?h,4) "
         "-> Panel(?box) ^ hasQualification(?box, Semantic)")


# -- parsing ------------------------------------------------------------------

def test_parse_uncle():
    rs = parse_rules(UNCLE)
    assert len(rs) == 1
    assert len(rs.rules[0].antecedent) == 2
    assert len(rs.rules[0].consequent) == 1


def test_empty_antecedent_rejected():
    with pytest.raises(RuleSyntaxError):
        parse_rules("rule bad: -> Wall(?x)")


def test_parse_rule6():
    rule = parse_rules(RULE6).rules[0]
    builtins = [a for a in rule.antecedent if isinstance(a, BuiltinAtom)]
    assert [b.qualname for b in builtins] == ["swrlb:lessThan"]


def test_syntax_error_position():
    with pytest.raises(RuleSyntaxError) as err:
        parse_rules("rule a: Wall(?x) -> Panel(?x)\nrule b: Wall(?x -> Panel(?x)")
    assert err.value.line == 2


def test_shipped_rules_round_trip_text():
    for mode in ("generic", "specific"):
        rs = shipped_rules(mode)
        again = parse_rules(rs.to_text())
        assert [str(r) for r in again] == [str(r) for r in rs]
        assert [r.stage for r in again] == [r.stage for r in rs]


# -- safety ------------------------------------------------------------------

def test_unbound_consequent_variable():
    rs = parse_rules("rule r: Wall(?x) -> isConnectedTo(?x, ?y)")
    v = validate_safety(rs, builtin_vocabulary())
    assert len(v) == 1 and "?y" in v[0].message


def test_generative_output_is_bound():
    rs = shipped_rules("generic").stage("geometry")
    assert validate_safety(rs, builtin_vocabulary(), processing_registry()) == []


def test_builtin_arity():
    rs = parse_rules("rule r: hasHeight(?b, ?h) ^ swrlb:lessThan(?h) -> Panel(?b)")
    v = validate_safety(rs, builtin_vocabulary())
    assert len(v) == 1 and "arguments" in v[0].message


def test_unbound_builtin_input():
    rs = parse_rules("rule r: swrlb:lessThan(?h, 4) ^ hasHeight(?b, ?h) -> Panel(?b)")
    assert len(validate_safety(rs, builtin_vocabulary())) == 1


def test_unknown_vocabulary():
    rs = parse_rules("rule r: Spaceship(?x) -> hasWings(?x, ?x)")
    assert len(validate_safety(rs, builtin_vocabulary())) == 2


def test_shipped_rules_are_safe():
    for mode in ("generic", "specific"):
        assert validate_safety(shipped_rules(mode), builtin_vocabulary(), processing_registry()) == []


# -- evaluation ---------------------------------------------------------------

def test_uncle_fixpoint():
    kb = family_kb()
    log = evaluate_fixpoint(kb, parse_rules(UNCLE))
    assert kb.has_fact("tom", "hasUncle", "max")
    assert [f.pass_no for f in log.firings] == [1]
    assert log.passes == 2 and log.converged


def chain_kb():
    kb = KnowledgeBase()
    for c in "ABC":
        kb.declare_class(c)
    kb.add_individual("x", "A")
    return kb


def test_chain_two_passes():
    kb = chain_kb()
    log = evaluate_fixpoint(kb, parse_rules("rule ab: A(?x) -> B(?x)\nrule bc: B(?x) -> C(?x)"))
    assert kb.instance_of("x", "C") and log.passes == 2


def test_chain_reverse_order():
    # C appears in pass 2; a third pass is needed to see nothing changes
    kb = chain_kb()
    with pytest.raises(LimitExceeded):
        evaluate_fixpoint(kb, parse_rules("rule bc: B(?x) -> C(?x)\nrule ab: A(?x) -> B(?x)"), limits=Limits(2))
    assert kb.instance_of("x", "C")


def test_rule6_selects_low_box():
    kb = builtin_vocabulary()
    for name, h in (("low", 2.5), ("tall", 5.0)):
        kb.add_individual(name, "BoundingBox")
        kb.assert_fact(name, "hasOrientation", "Vertical")
        kb.assert_fact(name, "hasHeight", h)
    evaluate_fixpoint(kb, parse_rules(RULE6))
    assert kb.instances("Panel") == ["low"]


@pytest.mark.parametrize("name,a,b,expected", [
    ("lessThan", 2, 4, True), ("lessThan", 4, 4, False), ("greaterThan", 5.2, 4, True),
    ("greaterThan", 4, 4, False), ("equal", 4, 4.0, True)])
def test_comparisons(name, a, b, expected):
    assert eval_comparison_builtin(name, a, b) is expected


def counting_registry():
    calls = []

    def func(ctx, args):
        calls.append(args[0])
        return [(args[0] + "_twin",)]

    reg = standard_registry()
    reg.register(BuiltinDef("t", "twin", (IN, OUT), func, generative=True, memoizable=True))
    return reg, calls


def twin_kb():
    kb = KnowledgeBase()
    kb.declare_class("Thing")
    kb.declare_property("hasTwin", OBJECT)
    kb.add_individual("a", "Thing")
    kb.add_individual("b", "Thing")
    return kb


def twin_rules():
    return parse_rules("rule tw: Thing(?x) ^ t:twin(?x, ?y) -> Thing(?y)")


def test_memo_skips_repeat_calls():
    reg, calls = counting_registry()
    kb = twin_kb()
    memo = {}
    evaluate_fixpoint(kb, parse_rules("rule tw: Thing(?x) ^ t:twin(?x, ?y) -> hasTwin(?x, ?x)"), reg, memo=memo)
    assert sorted(calls) == ["a", "b"]
    log = evaluate_fixpoint(kb, parse_rules("rule tw: Thing(?x) ^ t:twin(?x, ?y) -> hasTwin(?x, ?x)"), reg,
                            memo=memo)
    assert sorted(calls) == ["a", "b"]
    assert all(c.cached for c in log.builtin_calls)


def test_runaway_generation_hits_limit():
    reg, calls = counting_registry()
    kb = twin_kb()
    with pytest.raises(LimitExceeded) as err:
        evaluate_fixpoint(kb, twin_rules(), reg, Limits(max_iterations=5))
    assert err.value.log.passes == 5
    assert err.value.log.firings


def test_builtin_call_budget():
    reg, _ = counting_registry()
    with pytest.raises(LimitExceeded):
        evaluate_fixpoint(twin_kb(), twin_rules(), reg, Limits(max_iterations=100, max_builtin_calls=3))


def test_builtin_error_skips_binding():
    def func(ctx, args):
        if args[0] == "a":
            raise ValueError("boom")
        return True

    reg = standard_registry()
    reg.register(BuiltinDef("t", "ok", (IN,), func))
    kb = twin_kb()
    log = evaluate_fixpoint(kb, parse_rules("rule r: Thing(?x) ^ t:ok(?x) -> hasTwin(?x, ?x)"), reg)
    assert kb.has_fact("b", "hasTwin", "b") and not kb.has_fact("a", "hasTwin", "a")
    # retried (and logged) on every pass
    assert len(log.errors) == log.passes and all("boom" in e for e in log.errors)


def test_deterministic_log():
    runs = []
    for _ in range(2):
        kb = family_kb()
        log = evaluate_fixpoint(kb, parse_rules(UNCLE))
        runs.append((log.to_dict(), dumps_kb(kb)))
    assert runs[0] == runs[1]


# -- pure Datalog fragment ------------------------------------------------------

DATALOG = [
    "rule t1: isConnectedTo(?a, ?b) ^ isConnectedTo(?b, ?c) -> isParallelTo(?a, ?c)",
    "rule t2: isParallelTo(?a, ?b) ^ isConnectedTo(?b, ?c) -> isParallelTo(?a, ?c)",
    "rule s1: isConnectedTo(?a, ?b) -> isConnectedTo(?b, ?a)",
    "rule c1: isParallelTo(?a, ?b) ^ Wall(?a) -> Wall(?b)",
    "rule c2: Wall(?a) ^ isConnectedTo(?a, ?b) -> isPerpendicularTo(?a, ?b)",
    "rule c3: isPerpendicularTo(?a, ?b) ^ hasHeight(?a, ?h) ^ swrlb:greaterThan(?h, 4) -> Building(?b)",
]


def datalog_kb(edges):
    kb = builtin_vocabulary()
    for i in range(6):
        kb.add_individual(f"n{i}", "BoundingBox")
        kb.assert_fact(f"n{i}", "hasHeight", float(i))
    kb.assert_class("n0", "Wall")
    for a, b in edges:
        kb.assert_fact(f"n{a}", "isConnectedTo", f"n{b}")
    return kb


def fact_set(kb):
    return ({(a.subject, a.property, repr(a.object)) for a in kb.assertions},
            {(n, c) for n in kb.individuals for c in kb.classes_of(n)})


edges = st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=8)


@settings(max_examples=40, deadline=None)
@given(edges, st.permutations(range(len(DATALOG))))
def test_rule_order_does_not_change_facts(es, order):
    base = datalog_kb(es)
    evaluate_fixpoint(base, parse_rules("\n".join(DATALOG)))
    shuffled = datalog_kb(es)
    evaluate_fixpoint(shuffled, parse_rules("\n".join(DATALOG[i] for i in order)))
    assert fact_set(base) == fact_set(shuffled)


@settings(max_examples=20, deadline=None)
@given(edges)
def test_fact_count_monotone_per_pass(es):
    counts = []
    for k in itertools.count(1):
        kb = datalog_kb(es)
        try:
            evaluate_fixpoint(kb, parse_rules("\n".join(DATALOG)), limits=Limits(max_iterations=k))
            done = True
        except LimitExceeded:
            done = False
        counts.append(kb.fact_count())
        if done:
            break
    assert counts == sorted(counts)


def test_ruleset_rejects_duplicate_names():
    with pytest.raises(ValueError):
        RuleSet(parse_rules("rule a: Wall(?x) -> Panel(?x)").rules * 2)
