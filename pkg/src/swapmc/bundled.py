"""The bundled swap models, their expected verdicts, and IR-level variants
used by the timeout-ordering experiment."""
from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .checker import ModelChecker, Outcome, naive_check, validate_counterexample
from .model import (
    BinOp, IntLit, IntRange, ModelIR, Name, NondetAssign, SKIP, Seq, Statement,
)
from .parser import parse_model

MODEL_DIR = Path(str(resources.files("swapmc") / "models"))


@dataclass(frozen=True)
class BundledModel:
    id: str
    source: Path
    manifest: Path

    def load(self) -> ModelIR:
        m = parse_model(self.source.read_text(encoding="utf-8"))
        if self.id == "htlc-reversed":
            m = swap_timeouts(m)
        return m

    def expected(self) -> dict[str, str]:
        doc = json.loads(self.manifest.read_text(encoding="utf-8"))
        return {e["label"]: e["verdict"] for e in doc["specs"]}


BUNDLED = {
    "escrow": BundledModel("escrow", MODEL_DIR / "escrow.swapmc", MODEL_DIR / "escrow.expected.json"),
    "htlc": BundledModel("htlc", MODEL_DIR / "htlc.swapmc", MODEL_DIR / "htlc.expected.json"),
    "htlc-reversed": BundledModel("htlc-reversed", MODEL_DIR / "htlc.swapmc",
                                  MODEL_DIR / "htlc-reversed.expected.json"),
}


def load(model_id: str) -> ModelIR:
    return BUNDLED[model_id].load()


# ---------------------------------------------------------------- IR rewrites

def _rewrite(e, fn):
    e2 = fn(e)
    if e2 is not e:
        return e2
    if isinstance(e, BinOp):
        return BinOp(e.op, _rewrite(e.left, fn), _rewrite(e.right, fn))
    return e


def set_init_constant(m: ModelIR, var: str, value: int) -> ModelIR:
    """Replace the constant in an init_cond conjunct `var == c`."""
    hits = []

    def fn(e):
        if (isinstance(e, BinOp) and e.op == "==" and isinstance(e.left, Name)
                and e.left.name == var and isinstance(e.right, IntLit)):
            hits.append(e)
            return BinOp("==", e.left, IntLit(value))
        return e

    init = _rewrite(m.init_cond, fn)
    if len(hits) != 1:
        raise ValueError(f"init_cond does not pin {var} to a single constant")
    return dataclasses.replace(m, init_cond=init)


def init_constant(m: ModelIR, var: str) -> int:
    found = []

    def fn(e):
        if (isinstance(e, BinOp) and e.op == "==" and isinstance(e.left, Name)
                and e.left.name == var and isinstance(e.right, IntLit)):
            found.append(e.right.value)
        return e

    _rewrite(m.init_cond, fn)
    if len(found) != 1:
        raise ValueError(f"init_cond does not pin {var} to a single constant")
    return found[0]


def swap_timeouts(m: ModelIR) -> ModelIR:
    """Exchange the two contract timeouts fixed by init_cond."""
    a, b = init_constant(m, "timeoutA"), init_constant(m, "timeoutB")
    return set_init_constant(set_init_constant(m, "timeoutA", b), "timeoutB", a)


def set_time_bound(m: ModelIR, hi: int, type_name: str = "Time") -> ModelIR:
    domains = tuple(dataclasses.replace(d, hi=hi) if isinstance(d, IntRange) and d.name == type_name
                    else d for d in m.domains)
    return dataclasses.replace(m, domains=domains)


def pin_variable(m: ModelIR, var: str, constant: str) -> ModelIR:
    """Fix `var` to `constant` initially and drop it from every
    nondeterministic assignment, so it never changes."""

    def strip(st: Statement) -> Statement:
        if isinstance(st, Seq):
            return Seq(tuple(strip(x) for x in st.body))
        if isinstance(st, NondetAssign) and var in st.vars:
            rest = tuple(v for v in st.vars if v != var)
            return NondetAssign(rest, st.condition, st.span) if rest else SKIP
        return st

    init = BinOp("/\\", m.init_cond, BinOp("==", Name(var), Name(constant)))
    return dataclasses.replace(m, init_cond=init, transitions=strip(m.transitions))


def small_htlc(*, reversed_timeouts: bool) -> ModelIR:
    """HTLC with Time {0..7}, timeouts 4 and 6, and both players pinned to
    Cooperate; small enough for the bounded lasso oracle."""
    m = set_time_bound(load("htlc"), 7)
    a, b = (4, 6) if reversed_timeouts else (6, 4)
    m = set_init_constant(set_init_constant(m, "timeoutA", a), "timeoutB", b)
    return pin_variable(pin_variable(m, "strategyA", "Cooperate"), "strategyB", "Cooperate")


# ---------------------------------------------------------------- suite

@dataclass
class SuiteEntry:
    model: str
    label: str
    expected: str
    actual: str
    millis: float
    states: int
    product_states: int
    trace_valid: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return self.expected == self.actual and self.trace_valid is not False


@dataclass
class SuiteReport:
    entries: list[SuiteEntry]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def mismatches(self) -> list[SuiteEntry]:
        return [e for e in self.entries if not e.ok]

    def lines(self) -> list[str]:
        out = []
        for e in self.entries:
            mark = "ok  " if e.ok else "FAIL"
            first = e.label.splitlines()[0]
            out.append(f"{mark} {e.model:14s} {e.actual:8s} (expected {e.expected}) "
                       f"{e.millis:8.1f} ms  {first}")
        return out


def regression_suite(models: tuple[str, ...] = ("escrow", "htlc", "htlc-reversed")) -> SuiteReport:
    """Check every bundled (model, spec) pair against its manifest."""
    entries = []
    for mid in models:
        b = BUNDLED[mid]
        m = b.load()
        expected = b.expected()
        mc = ModelChecker(m)
        for spec in m.specs:
            t0 = time.perf_counter()
            v = mc.check(spec.label)
            valid = None
            if v.trace is not None:
                valid = bool(validate_counterexample(mc.sem, spec.formula, v.trace))
            entries.append(SuiteEntry(
                mid, spec.label, expected.get(spec.label, "?"), v.outcome.value,
                (time.perf_counter() - t0) * 1000, v.stats.get("states", 0),
                v.stats.get("product_states", 0), valid))
    return SuiteReport(entries)


def derive_reversed_manifest(prefix_bound: int = 8, period_bound: int = 8) -> dict:
    """Verdicts for `htlc-reversed`, derived rather than asserted.

    Each spec is checked on the full reversed model (refutations must
    validate), and the bounded lasso oracle must agree with the checker on
    the small reversed variant.
    """
    m = load("htlc-reversed")
    mc = ModelChecker(m)
    small = small_htlc(reversed_timeouts=True)
    small_mc = ModelChecker(small)
    specs = []
    for spec in m.specs:
        v = mc.check(spec.label)
        if v.trace is not None and not validate_counterexample(mc.sem, spec.formula, v.trace):
            raise AssertionError(f"invalid counterexample for {spec.label!r}")
        naive = naive_check(small, spec.label, prefix_bound, period_bound)
        full = small_mc.check(spec.label)
        if (naive.outcome == Outcome.REFUTED) != (full.outcome == Outcome.REFUTED):
            raise AssertionError(f"bounded oracle disagrees on {spec.label!r}")
        specs.append({"label": spec.label, "verdict": v.outcome.value})
    return {
        "model": "htlc-reversed",
        "source": "htlc.swapmc",
        "derivation": "timeoutA and timeoutB swapped in init_cond; verdicts from check "
                      "with validated traces, cross-checked by naive_check on the small variant",
        "specs": specs,
    }


if __name__ == "__main__":
    doc = derive_reversed_manifest()
    path = BUNDLED["htlc-reversed"].manifest
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {path}")
