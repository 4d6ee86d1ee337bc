"""Rule language, built-in registry and the fixpoint evaluator."""

from .engine import (
    BuiltinCall,
    DerivationLog,
    EvalContext,
    Firing,
    LimitExceeded,
    Limits,
    RuleValidationError,
    RuleViolation,
    assert_consequent,
    evaluate_fixpoint,
    validate_safety,
)
from .registry import IN, OUT, BuiltinDef, BuiltinError, BuiltinRegistry, eval_comparison_builtin, standard_registry
from .syntax import BuiltinAtom, Rule, RuleSet, RuleSyntaxError, load_rules, parse_rules

__all__ = [
    "IN", "OUT", "BuiltinAtom", "BuiltinCall", "BuiltinDef", "BuiltinError", "BuiltinRegistry",
    "DerivationLog", "EvalContext", "Firing", "LimitExceeded", "Limits", "Rule", "RuleSet",
    "RuleSyntaxError", "RuleValidationError", "RuleViolation", "assert_consequent", "eval_comparison_builtin",
    "evaluate_fixpoint", "load_rules", "parse_rules", "standard_registry", "validate_safety",
]
