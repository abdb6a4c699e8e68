"""Executable semantics: initial states, protocol action selection, transition
execution and reachable-graph construction.

States are tuples holding one value per declared variable, in declaration
order: enum constants as their declaration index, booleans as ``bool`` and
integers as ``int``.  Action profiles are tuples of action names aligned with
the model's agent order.  Expressions are compiled to Python lambdas once per
model.
"""
from __future__ import annotations

import itertools
import logging
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .model import (
    ActionProp, ActionRef, Assign, BinOp, BoolDomain, BoolLit, EnumDomain, Expr,
    GuardedChoice, IntLit, IntRange, ModelIR, Name, NondetAssign, Not, Primed,
    ProtocolChoice, Seq, Skip, Statement, expand_defines, require_valid,
)

log = logging.getLogger(__name__)

State = tuple
ActionProfile = tuple
SKIP_ACTION = "Skip"


class ResourceLimitError(RuntimeError):
    """Exploration would exceed the configured node budget."""


class VacuousModelError(RuntimeError):
    """init_cond admits no state."""


class RangeError(ArithmeticError):
    """Out-of-range arithmetic under strict mode."""


def _saturate(v: int, lo: int, hi: int) -> int:
    return lo if v < lo else hi if v > hi else v


def _strict(v: int, lo: int, hi: int) -> int:
    if v < lo or v > hi:
        raise RangeError(f"value {v} outside {lo}..{hi}")
    return v


class _Recorder:
    """Profile stand-in that remembers which agents' actions were consulted."""

    __slots__ = ("values", "reads")

    def __init__(self, values: list):
        self.values = values
        self.reads: list[int] = []

    def __getitem__(self, k: int):
        if k not in self.reads:
            self.reads.append(k)
        return self.values[k]


class Semantics:
    """Compiled form of a validated model."""

    def __init__(self, m: ModelIR, *, strict: bool = False):
        self.report = require_valid(m)
        self.model = m
        self.strict = strict
        self.var_names = m.var_names()
        self.var_index = {v: i for i, v in enumerate(self.var_names)}
        self.domains = [m.var_domain(v) for v in self.var_names]
        self.constants = m.constants()
        self.defines = m.define_map()
        self.agents = [a.name for a in m.agents]
        self.agent_index = {a: i for i, a in enumerate(self.agents)}
        self._clamp = _strict if strict else _saturate
        self._cache: dict[object, Callable] = {}
        self._protocols = [self._compile_agent(a) for a in m.agents]
        self._transitions = self._stmt(m.transitions)
        self._init = self._compile_init()

    # ------------------------------------------------------------ values

    def decode(self, s: State) -> dict[str, object]:
        """Readable form of a state: constants by name, ints and bools as is."""
        out = {}
        for name, d, v in zip(self.var_names, self.domains, s):
            out[name] = d.constants[v] if isinstance(d, EnumDomain) else v
        return out

    def encode(self, values: Mapping[str, object]) -> State:
        out = []
        for name, d in zip(self.var_names, self.domains):
            v = values[name]
            if isinstance(d, EnumDomain):
                v = d.constants.index(v) if isinstance(v, str) else int(v)
            elif isinstance(d, BoolDomain):
                v = bool(v)
            out.append(v)
        return tuple(out)

    def profile_dict(self, p: ActionProfile) -> dict[str, str]:
        return dict(zip(self.agents, p))

    def profile(self, actions: Mapping[str, str]) -> ActionProfile:
        return tuple(actions.get(a, SKIP_ACTION) for a in self.agents)

    def in_domain(self, s: State) -> bool:
        for d, v in zip(self.domains, s):
            if isinstance(d, EnumDomain):
                ok = isinstance(v, int) and 0 <= v < len(d.constants)
            elif isinstance(d, IntRange):
                ok = not isinstance(v, bool) and d.lo <= v <= d.hi
            else:
                ok = isinstance(v, bool)
            if not ok:
                return False
        return True

    # ------------------------------------------------------------ compilation

    def _int_bounds(self, e: Expr, env) -> Optional[tuple[int, int, bool]]:
        if isinstance(e, IntLit):
            return (e.value, e.value, True)
        if isinstance(e, (Name, Primed)):
            d = self._name_domain(e.name, env)
            return (d.lo, d.hi, False) if isinstance(d, IntRange) else None
        if isinstance(e, BinOp) and e.op in ("+", "-"):
            lt, rt = self._int_bounds(e.left, env), self._int_bounds(e.right, env)
            bounded = [b for b in (lt, rt) if not b[2]]
            if bounded:
                return (bounded[0][0], bounded[0][1], False)
            v = lt[0] + rt[0] if e.op == "+" else lt[0] - rt[0]
            return (v, v, True)
        return None

    def _name_domain(self, name: str, env):
        if env is not None and name in env:
            return self.domains[env[name]]
        if name in self.var_index:
            return self.domains[self.var_index[name]]
        return None

    def _src(self, e: Expr, env) -> str:
        """Python source for `e`; `env` maps protocol parameters to state slots."""
        if isinstance(e, BoolLit):
            return "True" if e.value else "False"
        if isinstance(e, IntLit):
            return repr(e.value)
        if isinstance(e, Name):
            if env is not None and e.name in env:
                return f"s[{env[e.name]}]"
            if e.name in self.var_index:
                return f"s[{self.var_index[e.name]}]"
            if e.name in self.constants:
                return repr(self.constants[e.name][1])
            if e.name in self.defines:
                return self._src(expand_defines(e, self.defines), env)
            raise KeyError(e.name)
        if isinstance(e, Primed):
            return f"t[{self.var_index[e.name]}]"
        if isinstance(e, ActionProp):
            return f"(p[{self.agent_index[e.agent]}] == {e.action!r})"
        if isinstance(e, Not):
            return f"(not {self._src(e.operand, env)})"
        if isinstance(e, BinOp):
            l, r = self._src(e.left, env), self._src(e.right, env)
            if e.op == "/\\":
                return f"({l} and {r})"
            if e.op == "\\/":
                return f"({l} or {r})"
            if e.op == "=>":
                return f"((not {l}) or {r})"
            if e.op in ("+", "-"):
                lo, hi, literal = self._int_bounds(e, env)
                if literal:
                    return f"({l} {e.op} {r})"
                return f"clamp({l} {e.op} {r}, {lo}, {hi})"
            op = {"==": "==", "/=": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}[e.op]
            return f"({l} {op} {r})"
        raise TypeError(f"cannot evaluate {e!r}")

    def compile_expr(self, e: Expr, env: Optional[dict[str, int]] = None) -> Callable:
        """`fn(s, p=None, t=None)` evaluating `e` on state `s`."""
        key = (e, tuple(sorted(env.items())) if env else None)
        fn = self._cache.get(key)
        if fn is None:
            src = self._src(e, env)
            fn = eval(f"lambda s, p=None, t=None: {src}", {"clamp": self._clamp})
            self._cache[key] = fn
        return fn

    def _compile_agent(self, agent):
        proto = self.model.protocol(agent.protocol)
        env = {pname: self.var_index[var] for (pname, _), var in zip(proto.params, agent.bindings)}

        def build(body):
            if isinstance(body, ActionRef):
                leaf = [body.name]
                return lambda s: leaf
            arms = [(self.compile_expr(g, env), build(b)) for g, b in body.branches]
            other = build(body.otherwise) if body.otherwise is not None else None

            def choose(s):
                out: list[str] = []
                for guard, sub in arms:
                    if guard(s):
                        for a in sub(s):
                            if a not in out:
                                out.append(a)
                if out:
                    return out
                return other(s) if other is not None else [SKIP_ACTION]
            return choose

        return build(proto.body)

    def _stmt(self, st: Statement):
        if isinstance(st, Skip):
            return lambda s, p: [s]
        if isinstance(st, Assign):
            i = self.var_index[st.var]
            f = self.compile_expr(st.value)
            d = self.domains[i]
            if isinstance(d, IntRange):
                lo, hi, clamp = d.lo, d.hi, self._clamp
                return lambda s, p: [s[:i] + (clamp(f(s, p), lo, hi),) + s[i + 1:]]
            return lambda s, p: [s[:i] + (f(s, p),) + s[i + 1:]]
        if isinstance(st, Seq):
            parts = [self._stmt(x) for x in st.body]

            def seq(s, p):
                cur = [s]
                for part in parts:
                    if len(cur) == 1:
                        cur = part(cur[0], p)
                    else:
                        cur = list(dict.fromkeys(x for c in cur for x in part(c, p)))
                return cur
            return seq
        if isinstance(st, GuardedChoice):
            arms = [(self.compile_expr(g), self._stmt(b)) for g, b in st.branches]
            other = self._stmt(st.otherwise) if st.otherwise is not None else None

            def choice(s, p):
                out = None
                for guard, run in arms:
                    if guard(s, p):
                        res = run(s, p)
                        out = res if out is None else list(dict.fromkeys(out + res))
                if out is not None:
                    return out
                return other(s, p) if other is not None else [s]
            return choice
        if isinstance(st, NondetAssign):
            idx = [self.var_index[v] for v in st.vars]
            combos = list(itertools.product(*(self.domains[i].values() for i in idx)))
            always = isinstance(st.condition, BoolLit) and st.condition.value
            cond = self.compile_expr(st.condition)

            def nondet(s, p):
                out = []
                base = list(s)
                for combo in combos:
                    for i, v in zip(idx, combo):
                        base[i] = v
                    t = tuple(base)
                    if always or cond(s, p, t):
                        out.append(t)
                return out
            return nondet
        raise TypeError(f"not a statement: {st!r}")

    def _compile_init(self):
        conj: list[Expr] = []

        def split(e):
            if isinstance(e, BinOp) and e.op == "/\\":
                split(e.left)
                split(e.right)
            else:
                conj.append(e)

        if self.model.init_cond is not None:
            split(expand_defines(self.model.init_cond, self.defines))
        # each conjunct is checked as soon as its last variable is assigned
        by_level: dict[int, list[Callable]] = {}
        for c in conj:
            used = [self.var_index[x.name] for x in _names(c) if x.name in self.var_index]
            level = max(used, default=-1)
            by_level.setdefault(level, []).append(self.compile_expr(c))
        return by_level

    # ------------------------------------------------------------ operations

    def eval_expr(self, e: Expr, s: State, profile: Optional[ActionProfile] = None,
                  primed: Optional[State] = None):
        return self.compile_expr(e)(s, profile, primed)

    def initial_states(self) -> list[State]:
        """All states satisfying init_cond, in canonical order."""
        n = len(self.domains)
        levels = self._init
        if any(not f(()) for f in levels.get(-1, [])):
            return []
        out: list[State] = []
        cur = [None] * n

        def go(i: int) -> None:
            if i == n:
                out.append(tuple(cur))
                return
            checks = levels.get(i, [])
            for v in self.domains[i].values():
                cur[i] = v
                if all(f(cur) for f in checks):
                    go(i + 1)
            cur[i] = None

        go(0)
        return out

    def enabled_actions(self, agent: str, s: State) -> list[str]:
        return list(self._protocols[self.agent_index[agent]](s))

    def exec_statement(self, st: Statement, s: State, profile: ActionProfile) -> set[State]:
        run = self._transitions if st is self.model.transitions else self._stmt(st)
        return set(run(s, profile))

    def successor_groups(self, s: State) -> list[tuple[dict[int, str], list[State]]]:
        """Successors of `s` grouped by partial profile.

        Each group fixes only the agents whose actions the transition code
        actually read; every completion of that partial profile with enabled
        actions yields exactly the listed states.
        """
        enabled = [proto(s) for proto in self._protocols]
        groups: list[tuple[dict[int, str], list[State]]] = []
        run = self._transitions

        def explore(fixed: dict[int, str]) -> None:
            values = [fixed.get(k, acts[0]) for k, acts in enumerate(enabled)]
            rec = _Recorder(values)
            result = run(s, rec)
            groups.append(({k: values[k] for k in rec.reads}, result))
            chosen = dict(fixed)
            for k in rec.reads:
                if k in fixed:
                    continue
                for a in enabled[k][1:]:
                    explore({**chosen, k: a})
                chosen[k] = enabled[k][0]

        explore({})
        return groups

    def successors(self, s: State) -> set[tuple[ActionProfile, State]]:
        """Every (profile, successor) pair, profiles fully expanded."""
        enabled = [proto(s) for proto in self._protocols]
        out = set()
        for fixed, states in self.successor_groups(s):
            choices = [[fixed[k]] if k in fixed else acts for k, acts in enumerate(enabled)]
            for prof in itertools.product(*choices):
                for t in states:
                    out.add((prof, t))
        return out

    def successor_states(self, s: State) -> set[State]:
        return {t for _, states in self.successor_groups(s) for t in states}

    def profiles_between(self, s: State, t: State) -> list[ActionProfile]:
        return sorted(p for p, u in self.successors(s) if u == t)

    def first_profile(self, s: State, t: State) -> Optional[ActionProfile]:
        """One profile leading from `s` to `t`, or None if `t` is not a successor."""
        enabled = [proto(s) for proto in self._protocols]
        for fixed, states in self.successor_groups(s):
            if t in states:
                return tuple(fixed.get(k, acts[0]) for k, acts in enumerate(enabled))
        return None


def _names(e: Expr) -> Iterable[Name]:
    if isinstance(e, Name):
        yield e
    elif isinstance(e, Not):
        yield from _names(e.operand)
    elif isinstance(e, BinOp):
        yield from _names(e.left)
        yield from _names(e.right)


# ---------------------------------------------------------------- graph

@dataclass
class StateGraph:
    """Reachable states with canonical numbering (sorted state tuples)."""

    sem: Semantics
    states: list[State]
    index: dict[State, int]
    initial: list[int]
    succ: list[tuple[int, ...]]
    labelled_edges: int
    _atom_cache: dict = field(default_factory=dict, repr=False)

    @property
    def model(self) -> ModelIR:
        return self.sem.model

    @property
    def n_nodes(self) -> int:
        return len(self.states)

    @property
    def n_edges(self) -> int:
        """Distinct (state, successor) pairs."""
        return sum(len(x) for x in self.succ)

    def edges(self) -> Iterable[tuple[int, int]]:
        for i, out in enumerate(self.succ):
            for j in out:
                yield i, j

    def deadlocks(self) -> list[int]:
        return [i for i, out in enumerate(self.succ) if not out]

    def truth(self, e: Expr) -> list[bool]:
        """Per-node value of a boolean state expression (cached)."""
        vals = self._atom_cache.get(e)
        if vals is None:
            f = self.sem.compile_expr(e)
            vals = [bool(f(s)) for s in self.states]
            self._atom_cache[e] = vals
        return vals

    def labelled_edge_list(self) -> Iterable[tuple[State, ActionProfile, State]]:
        for s in self.states:
            for p, t in sorted(self.sem.successors(s)):
                yield s, p, t

    def to_dot(self) -> str:
        sem = self.sem
        lines = ["digraph states {"]
        init = set(self.initial)
        for i, s in enumerate(self.states):
            label = "\\n".join(f"{k}={_fmt(v)}" for k, v in sem.decode(s).items())
            shape = ", peripheries=2" if i in init else ""
            lines.append(f'  n{i} [label="{label}"{shape}];')
        for i, s in enumerate(self.states):
            labels: dict[int, list[str]] = {}
            for fixed, states in sem.successor_groups(s):
                prof = ", ".join(f"{a}={fixed[k]}" if k in fixed else f"{a}=*"
                                 for k, a in enumerate(sem.agents))
                for t in states:
                    labels.setdefault(self.index[t], []).append(prof)
            for j in sorted(labels):
                text = "\\n".join(sorted(set(labels[j])))
                lines.append(f'  n{i} -> n{j} [label="{text}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return str(v)


def build_graph(m: ModelIR | Semantics, *, node_budget: int = 5_000_000,
                workers: int = 1, strict: bool = False) -> StateGraph:
    """Breadth-first closure of the successor relation from the initial states."""
    sem = m if isinstance(m, Semantics) else Semantics(m, strict=strict)
    init = sem.initial_states()
    if not init:
        raise VacuousModelError("init_cond admits no state")
    if len(init) > node_budget:
        raise ResourceLimitError(f"node budget {node_budget} exceeded by the initial states")
    seen: dict[State, int] = {s: i for i, s in enumerate(init)}
    raw_succ: dict[int, list[State]] = {}
    labelled = 0
    frontier = list(init)

    def expand(s: State):
        groups = sem.successor_groups(s)
        enabled = [proto(s) for proto in sem._protocols]
        nlab = 0
        for fixed, states in groups:
            width = 1
            for k, acts in enumerate(enabled):
                if k not in fixed:
                    width *= len(acts)
            nlab += width * len(states)
        return sorted({t for _, states in groups for t in states}), nlab

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while frontier:
            if pool is None:
                results = [expand(s) for s in frontier]
            else:
                chunk = max(1, len(frontier) // (workers * 4))
                results = list(pool.map(expand, frontier, chunksize=chunk))
            nxt = []
            for s, (succs, nlab) in zip(frontier, results):
                raw_succ[seen[s]] = succs
                labelled += nlab
                for t in succs:
                    if t not in seen:
                        if len(seen) >= node_budget:
                            raise ResourceLimitError(
                                f"reachable state count exceeds node budget {node_budget}")
                        seen[t] = len(seen)
                        nxt.append(t)
            frontier = nxt
    finally:
        if pool is not None:
            pool.shutdown()

    states = sorted(seen)
    index = {s: i for i, s in enumerate(states)}
    succ: list[tuple[int, ...]] = [()] * len(states)
    for s, old in seen.items():
        succ[index[s]] = tuple(sorted(index[t] for t in raw_succ[old]))
    initial = sorted(index[s] for s in init)
    log.debug("explored %d states, %d edges", len(states), sum(map(len, succ)))
    return StateGraph(sem, states, index, initial, succ, labelled)


# module-level forms of the operations, for callers holding only a ModelIR

def eval_expr(e: Expr, s: State, profile=None, primed=None, *, m: ModelIR) -> object:
    return Semantics(m).eval_expr(e, s, profile, primed)


def initial_states(m: ModelIR) -> list[State]:
    return Semantics(m).initial_states()


def enabled_actions(m: ModelIR, agent: str, s: State) -> list[str]:
    return Semantics(m).enabled_actions(agent, s)


def exec_statement(m: ModelIR, st: Statement, s: State, profile: ActionProfile) -> set[State]:
    return Semantics(m).exec_statement(st, s, profile)


def successors(m: ModelIR, s: State) -> set[tuple[ActionProfile, State]]:
    return Semantics(m).successors(s)
