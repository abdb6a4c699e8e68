"""Verification of `A φ` specifications under unconditional fairness.

The reachable graph is multiplied with the automaton for ``neg φ``; a
counterexample is a reachable strongly connected component of the product
that has an edge and meets every acceptance set (the automaton's sets plus
one per fairness constraint).  Product labelling is state-sampled: the
product node (s, q) exists only if s satisfies the literals of q, and the
word handed to lasso evaluation samples atoms at each trace state.
"""
from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

from . import ltl
from .graphs import bfs_path, tarjan_scc
from .model import Expr, ModelIR, expand_defines
from .semantics import (
    ActionProfile, ResourceLimitError, Semantics, State, StateGraph, VacuousModelError,
    build_graph,
)


class Outcome(str, Enum):
    HOLDS = "Holds"
    REFUTED = "Refuted"
    VACUOUS = "Vacuous"
    NO_COUNTEREXAMPLE = "NoCounterexampleWithinBounds"


class UnknownSpecError(KeyError):
    pass


@dataclass
class LassoTrace:
    prefix: list[tuple[State, ActionProfile]]
    cycle: list[tuple[State, ActionProfile]]

    def states(self) -> list[State]:
        return [s for s, _ in self.prefix + self.cycle]

    def to_json(self, sem: Semantics) -> dict:
        def step(s, p):
            return {"state": _jsonable(sem.decode(s)), "actions": sem.profile_dict(p)}
        return {"prefix": [step(*x) for x in self.prefix], "cycle": [step(*x) for x in self.cycle]}


@dataclass
class Verdict:
    label: str
    outcome: Outcome
    trace: Optional[LassoTrace] = None
    stats: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.outcome in (Outcome.HOLDS, Outcome.VACUOUS)

    def to_json(self, sem: Semantics, model: str = "") -> dict:
        doc = {
            "model": model,
            "spec_label": self.label,
            "outcome": self.outcome.value,
            "stats": {
                "states": self.stats.get("states", 0),
                "product_states": self.stats.get("product_states", 0),
                "millis": self.stats.get("millis", 0),
            },
        }
        if self.warnings:
            doc["warnings"] = list(self.warnings)
        if self.trace is not None:
            doc["trace"] = self.trace.to_json(sem)
        return doc


VERDICT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["model", "spec_label", "outcome", "stats"],
    "properties": {
        "model": {"type": "string"},
        "spec_label": {"type": "string"},
        "outcome": {"enum": [o.value for o in Outcome]},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "stats": {
            "type": "object",
            "required": ["states", "product_states", "millis"],
            "properties": {
                "states": {"type": "integer", "minimum": 0},
                "product_states": {"type": "integer", "minimum": 0},
                "millis": {"type": "number", "minimum": 0},
            },
        },
        "trace": {
            "type": "object",
            "required": ["prefix", "cycle"],
            "properties": {
                "prefix": {"type": "array", "items": {"$ref": "#/$defs/step"}},
                "cycle": {"type": "array", "items": {"$ref": "#/$defs/step"}, "minItems": 1},
            },
        },
    },
    "$defs": {
        "step": {
            "type": "object",
            "required": ["state", "actions"],
            "properties": {
                "state": {"type": "object"},
                "actions": {"type": "object", "additionalProperties": {"type": "string"}},
            },
        }
    },
}


def _jsonable(d: dict) -> dict:
    return {k: (v if isinstance(v, (bool, int, str)) else str(v)) for k, v in d.items()}


# ---------------------------------------------------------------- spec lookup

def normalize_label(label: str) -> str:
    return re.sub(r"\s+", " ", label).strip()


def find_spec(m: ModelIR, selector: Union[str, int]):
    """Spec by verbatim label, whitespace-normalized label, or 1-based index
    (an int or a string of the form ``#n``)."""
    if isinstance(selector, int) or (isinstance(selector, str) and re.fullmatch(r"#\d+", selector)):
        k = selector if isinstance(selector, int) else int(selector[1:])
        if not 1 <= k <= len(m.specs):
            raise UnknownSpecError(f"no spec #{k}; model has {len(m.specs)}")
        return m.specs[k - 1]
    for s in m.specs:
        if s.label == selector:
            return s
    want = normalize_label(selector)
    for s in m.specs:
        if normalize_label(s.label) == want:
            return s
    raise UnknownSpecError(f"no spec labelled {selector!r}")


def expanded_body(m: ModelIR, spec: ltl.SpecFormula) -> ltl.Ltl:
    defines = m.define_map()
    return ltl.map_atoms(spec.body, lambda e: expand_defines(e, defines))


# ---------------------------------------------------------------- product

@dataclass
class Product:
    graph: StateGraph
    gba: ltl.GBA
    node_state: list[int]
    node_q: list[int]
    succ: list[list[int]]
    initial: list[int]
    acceptance: list[set[int]]
    n_gba_sets: int

    @property
    def size(self) -> int:
        return len(self.node_state)


def build_product(g: StateGraph, a: ltl.GBA, fairness: Sequence[Expr] = (), *,
                  budget: int = 20_000_000) -> Product:
    """Synchronous product of the reachable graph with a state-labelled GBA."""
    defines = g.model.define_map()
    n = g.n_nodes
    vals = [0] * n
    for bit, atom in enumerate(a.atoms):
        for i, v in enumerate(g.truth(expand_defines(atom, defines))):
            if v:
                vals[i] |= 1 << bit
    masks = a.masks()
    sat = [[(v & pos) == pos and not (v & neg) for v in vals] for pos, neg in masks]
    nq = a.size
    gsucc = [sorted(x) for x in a.succ]

    ids: dict[int, int] = {}
    node_state: list[int] = []
    node_q: list[int] = []
    succ: list[list[int]] = []
    initial: list[int] = []
    for s in g.initial:
        for q in sorted(a.initial):
            if sat[q][s]:
                key = s * nq + q
                if key not in ids:
                    ids[key] = len(node_state)
                    node_state.append(s)
                    node_q.append(q)
                    succ.append([])
                    initial.append(ids[key])
    k = 0
    msucc = g.succ
    while k < len(node_state):
        s, q = node_state[k], node_q[k]
        out = succ[k]
        for q2 in gsucc[q]:
            ok = sat[q2]
            for s2 in msucc[s]:
                if ok[s2]:
                    key = s2 * nq + q2
                    j = ids.get(key)
                    if j is None:
                        if len(node_state) >= budget:
                            raise ResourceLimitError(f"product exceeds budget {budget}")
                        j = ids[key] = len(node_state)
                        node_state.append(s2)
                        node_q.append(q2)
                        succ.append([])
                    out.append(j)
        k += 1

    acceptance = [{i for i, q in enumerate(node_q) if q in acc} for acc in a.acceptance]
    for f in fairness:
        truth = g.truth(expand_defines(f, defines))
        acceptance.append({i for i, s in enumerate(node_state) if truth[s]})
    return Product(g, a, node_state, node_q, succ, initial, acceptance, len(a.acceptance))


def _accepting_sccs(n: int, succ: Sequence[Sequence[int]], acceptance: Sequence[set[int]]):
    for comp in tarjan_scc(n, succ):
        if len(comp) == 1 and comp[0] not in succ[comp[0]]:
            continue
        members = set(comp)
        if all(members & acc for acc in acceptance):
            yield members


def _lasso_nodes(succ, initial, sccs: list[set[int]], acceptance) -> tuple[list[int], list[int]]:
    """Prefix and cycle node lists through one accepting component."""
    target = set().union(*sccs)
    path = bfs_path(initial, succ, lambda v: v in target)
    v0 = path[-1]
    comp = next(c for c in sccs if v0 in c)
    cycle = [v0]
    cur = v0
    for acc in acceptance:
        if any(x in acc for x in cycle):
            continue
        seg = bfs_path([cur], succ, lambda v: v in acc, allowed=comp)
        cycle += seg[1:]
        cur = cycle[-1]
    back = bfs_path([w for w in succ[cur] if w in comp], succ, lambda v: v == v0, allowed=comp)
    cycle += back[:-1]
    return path[:-1], cycle


def find_fair_accepting_lasso(p: Product) -> Optional[LassoTrace]:
    """A lasso through a nontrivial SCC meeting every acceptance set, or None."""
    sccs = list(_accepting_sccs(p.size, p.succ, p.acceptance))
    if not sccs:
        return None
    prefix, cycle = _lasso_nodes(p.succ, p.initial, sccs, p.acceptance)
    g = p.graph
    return _trace(g, [p.node_state[v] for v in prefix], [p.node_state[v] for v in cycle])


def _trace(g: StateGraph, prefix: list[int], cycle: list[int]) -> LassoTrace:
    sem = g.sem
    seq = prefix + cycle
    steps = []
    for k, i in enumerate(seq):
        j = seq[k + 1] if k + 1 < len(seq) else cycle[0]
        prof = sem.first_profile(g.states[i], g.states[j])
        steps.append((g.states[i], prof))
    return LassoTrace(steps[:len(prefix)], steps[len(prefix):])


def fair_nodes(g: StateGraph, fairness: Sequence[Expr]) -> set[int]:
    """Nodes from which some run visits every fairness condition infinitely often."""
    defines = g.model.define_map()
    sets = [{i for i, v in enumerate(g.truth(expand_defines(f, defines))) if v} for f in fairness]
    good = set().union(*_accepting_sccs(g.n_nodes, g.succ, sets)) if g.n_nodes else set()
    pred: list[list[int]] = [[] for _ in range(g.n_nodes)]
    for i, j in g.edges():
        pred[j].append(i)
    todo = list(good)
    while todo:
        v = todo.pop()
        for u in pred[v]:
            if u not in good:
                good.add(u)
                todo.append(u)
    return good


# ---------------------------------------------------------------- validation

@dataclass
class CounterexampleReport:
    failures: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.failures


def validate_counterexample(m: Union[ModelIR, Semantics], spec: ltl.SpecFormula,
                            t: LassoTrace) -> CounterexampleReport:
    """Independent check of a lasso: genuine steps, initial start, fairness on
    the cycle, and the negated body true on the sampled atom word."""
    sem = m if isinstance(m, Semantics) else Semantics(m)
    model = sem.model
    rep = CounterexampleReport()
    if not t.cycle:
        rep.failures.append("empty cycle")
        return rep
    steps = t.prefix + t.cycle
    for k, (s, prof) in enumerate(steps):
        if not sem.in_domain(s):
            rep.failures.append(f"step {k}: state outside declared domains")
            return rep
        nxt = steps[k + 1][0] if k + 1 < len(steps) else t.cycle[0][0]
        if (tuple(prof), nxt) not in sem.successors(s):
            rep.failures.append(f"step {k}: no transition under profile {prof}")
    if steps[0][0] not in set(sem.initial_states()):
        rep.failures.append("trace does not start in an initial state")
    defines = model.define_map()
    for f in model.fairness:
        fn = sem.compile_expr(expand_defines(f, defines))
        if not any(fn(s) for s, _ in t.cycle):
            rep.failures.append("a fairness constraint never holds on the cycle")
    body = expanded_body(model, spec)
    atoms = ltl.atoms_of(body)
    fns = [(a, sem.compile_expr(a)) for a in atoms]

    def word(part):
        return [{a: bool(fn(s)) for a, fn in fns} for s, _ in part]

    if not ltl.eval_on_lasso(ltl.Neg(body), word(t.prefix), word(t.cycle)):
        rep.failures.append("the specification holds on this lasso")
    return rep


# ---------------------------------------------------------------- check

class ModelChecker:
    """Holds one model's compiled semantics and reachable graph so that many
    specifications can be checked against the same exploration."""

    def __init__(self, m: ModelIR, *, node_budget: int = 5_000_000,
                 product_budget: int = 20_000_000, workers: int = 1, strict: bool = False):
        self.model = m
        self.sem = Semantics(m, strict=strict)
        self.node_budget = node_budget
        self.product_budget = product_budget
        self.workers = workers
        self._graph: Optional[StateGraph] = None
        self._fair: Optional[set[int]] = None

    @property
    def graph(self) -> StateGraph:
        if self._graph is None:
            self._graph = build_graph(self.sem, node_budget=self.node_budget, workers=self.workers)
        return self._graph

    def check(self, selector: Union[str, int]) -> Verdict:
        spec = find_spec(self.model, selector)
        start = time.perf_counter()
        if not self.sem.initial_states():
            return Verdict(spec.label, Outcome.VACUOUS, warnings=["init_cond admits no state"],
                           stats={"states": 0, "product_states": 0, "millis": 0})
        g = self.graph
        warnings = []
        if self._fair is None:
            self._fair = fair_nodes(g, self.model.fairness)
        dead = [i for i in g.initial if i not in self._fair]
        body = expanded_body(self.model, spec.formula)
        gba = ltl.ltl_to_gba(ltl.Neg(body))
        prod = build_product(g, gba, self.model.fairness, budget=self.product_budget)
        lasso = find_fair_accepting_lasso(prod)
        stats = {
            "states": g.n_nodes,
            "edges": g.n_edges,
            "gba_nodes": gba.size,
            "product_states": prod.size,
            "product_edges": sum(map(len, prod.succ)),
            "acceptance_sets": len(prod.acceptance),
        }
        if lasso is not None:
            report = validate_counterexample(self.sem, spec.formula, lasso)
            if not report:
                raise AssertionError(f"internal error: invalid counterexample: {report.failures}")
            outcome = Outcome.REFUTED
        elif len(dead) == len(g.initial):
            outcome = Outcome.VACUOUS
            warnings.append("no initial state admits a fair run; the specification holds vacuously")
        else:
            outcome = Outcome.HOLDS
            if dead:
                warnings.append(f"{len(dead)} initial state(s) admit no fair run")
        stats["millis"] = round((time.perf_counter() - start) * 1000, 1)
        return Verdict(spec.label, outcome, lasso, stats, warnings)


def check(m: ModelIR, spec_label: Union[str, int], **kwargs) -> Verdict:
    return ModelChecker(m, **kwargs).check(spec_label)


# ---------------------------------------------------------------- bounded oracle

def naive_check(m: ModelIR, spec_label: Union[str, int], prefix_bound: int = 8,
                period_bound: int = 8, *, max_nodes: int = 200) -> Verdict:
    """Exhaustive search over lassos with bounded prefix and period.

    Uses only the successor relation and lasso evaluation: cycles through a
    loop state are enumerated up to atom-word equivalence, and prefixes are
    evaluated backwards from each distinct cycle signature.
    """
    sem = Semantics(m)
    spec = find_spec(m, spec_label)
    start = time.perf_counter()
    g = build_graph(sem, node_budget=max_nodes)
    body = expanded_body(m, spec.formula)
    neg = ltl.Neg(body)
    order = ltl.subformulas(neg)
    atoms = ltl.atoms_of(body)
    afns = [sem.compile_expr(a) for a in atoms]
    defines = m.define_map()
    ffns = [sem.compile_expr(expand_defines(f, defines)) for f in m.fairness]
    all_fair = (1 << len(ffns)) - 1
    obs = []
    fbits = []
    for s in g.states:
        obs.append(frozenset(a for a, fn in zip(atoms, afns) if fn(s)))
        fbits.append(sum(1 << k for k, fn in enumerate(ffns) if fn(s)))
    pred: list[list[int]] = [[] for _ in range(g.n_nodes)]
    for i, j in g.edges():
        pred[j].append(i)
    initial = set(g.initial)

    # distinct fair cycle words through each loop node, one witness path each
    frontier: dict[tuple[int, tuple], tuple[list[int], list[int]]] = {}
    for x in range(g.n_nodes):
        layer = {(x, (), 0): [x]}
        for _ in range(period_bound):
            nxt: dict = {}
            for (v, word, fm), path in layer.items():
                w2 = word + (obs[v],)
                fm2 = fm | fbits[v]
                for u in g.succ[v]:
                    if u == x and fm2 == all_fair:
                        vals = ltl.lasso_values(neg, [], list(w2))
                        sig = tuple(vals[h][0] for h in order)
                        frontier.setdefault((x, sig), ([], path))
                    key = (u, w2, fm2)
                    if key not in nxt:
                        nxt[key] = path + [u]
            layer = nxt
    # backwards over prefixes of length 0..prefix_bound, shortest first
    at = order.index(neg)
    for k in range(prefix_bound + 1):
        for (v, sig), (pre, cyc) in frontier.items():
            if v in initial and sig[at]:
                trace = _trace(g, pre, cyc)
                stats = {"states": g.n_nodes, "product_states": 0,
                         "millis": round((time.perf_counter() - start) * 1000, 1)}
                return Verdict(spec.label, Outcome.REFUTED, trace, stats)
        if k == prefix_bound:
            break
        nxt = {}
        for (v, sig), (pre, cyc) in frontier.items():
            after = dict(zip(order, sig))
            for u in pred[v]:
                cur = ltl.step_back(order, obs[u], after)
                key = (u, tuple(cur[h] for h in order))
                if key not in nxt:
                    nxt[key] = ([u] + pre, cyc)
        frontier = nxt
    stats = {"states": g.n_nodes, "product_states": 0,
             "millis": round((time.perf_counter() - start) * 1000, 1)}
    return Verdict(spec.label, Outcome.NO_COUNTEREXAMPLE, None, stats)


def verdict_json(v: Verdict, sem: Semantics, model: str) -> str:
    return json.dumps(v.to_json(sem, model), indent=2)
