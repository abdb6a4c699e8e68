"""Explicit-state LTL model checking for multi-agent guarded-command models of
atomic swap protocols."""
from .checker import (
    LassoTrace, ModelChecker, Outcome, Verdict, check, naive_check, validate_counterexample,
)
from .ltl import SpecFormula, eval_on_lasso, ltl_to_gba, normalize
from .model import ModelIR, ValidationReport, expand_defines, validate_model
from .parser import ParseError, parse_formula, parse_model, pretty_print
from .semantics import Semantics, StateGraph, build_graph

__all__ = [
    "LassoTrace", "ModelChecker", "ModelIR", "Outcome", "ParseError", "Semantics",
    "SpecFormula", "StateGraph", "ValidationReport", "Verdict", "build_graph", "check",
    "eval_on_lasso", "expand_defines", "ltl_to_gba", "naive_check", "normalize",
    "parse_formula", "parse_model", "pretty_print", "validate_counterexample",
    "validate_model",
]
