"""Model intermediate representation, static validation and define expansion.

Every node is a frozen dataclass, so two IRs built from the same text compare
equal and can be hashed.  Source spans are carried for diagnostics only and
never take part in equality.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


_NOSPAN = field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------- domains

@dataclass(frozen=True)
class EnumDomain:
    name: str
    constants: tuple[str, ...]

    def values(self) -> tuple[int, ...]:
        return tuple(range(len(self.constants)))


@dataclass(frozen=True)
class IntRange:
    name: str
    lo: int
    hi: int

    def values(self) -> tuple[int, ...]:
        return tuple(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class BoolDomain:
    name: str = "Bool"

    def values(self) -> tuple[bool, ...]:
        return (False, True)


BOOL = BoolDomain()
Domain = Union[EnumDomain, IntRange, BoolDomain]


# ---------------------------------------------------------------- expressions

@dataclass(frozen=True)
class Name:
    """Unqualified identifier: variable, define, constant or protocol parameter."""

    name: str
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class Primed:
    name: str
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class ActionProp:
    agent: str
    action: str
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class Otherwise:
    pass


OTHERWISE = Otherwise()
Expr = Union[Name, Primed, IntLit, BoolLit, Not, BinOp, ActionProp, Otherwise]

COMPARISONS = ("==", "/=", "<", "<=", ">", ">=")
ARITHMETIC = ("+", "-")
CONNECTIVES = ("/\\", "\\/", "=>")


# ---------------------------------------------------------------- statements

@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    var: str
    value: Expr
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class GuardedChoice:
    branches: tuple[tuple[Expr, "Statement"], ...]
    otherwise: Optional["Statement"] = None
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class Seq:
    body: tuple["Statement", ...]


@dataclass(frozen=True)
class NondetAssign:
    vars: tuple[str, ...]
    condition: Expr
    span: Optional[SourceSpan] = _NOSPAN


SKIP = Skip()
Statement = Union[Skip, Assign, GuardedChoice, Seq, NondetAssign]


# ---------------------------------------------------------------- declarations

@dataclass(frozen=True)
class VarDecl:
    name: str
    type_name: str
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class DefineDecl:
    name: str
    body: Expr
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class ActionRef:
    """Protocol leaf `<<name>>`."""

    name: str


@dataclass(frozen=True)
class ProtocolChoice:
    """`do ... od` body of a protocol, or a nested `if ... fi` inside a branch."""

    branches: tuple[tuple[Expr, "ProtocolBody"], ...]
    otherwise: Optional["ProtocolBody"] = None


ProtocolBody = Union[ActionRef, ProtocolChoice]


@dataclass(frozen=True)
class ProtocolDecl:
    name: str
    params: tuple[tuple[str, str], ...]
    body: ProtocolChoice
    span: Optional[SourceSpan] = _NOSPAN

    def actions(self) -> list[str]:
        """Action names in order of first occurrence."""
        seen: dict[str, None] = {}

        def walk(b: ProtocolBody) -> None:
            if isinstance(b, ActionRef):
                seen.setdefault(b.name)
                return
            for _, sub in b.branches:
                walk(sub)
            if b.otherwise is not None:
                walk(b.otherwise)

        walk(self.body)
        return list(seen)


@dataclass(frozen=True)
class AgentDecl:
    name: str
    protocol: str
    bindings: tuple[str, ...]
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class SpecDecl:
    label: str
    formula: object  # ltl.SpecFormula; typed loosely to avoid an import cycle
    span: Optional[SourceSpan] = _NOSPAN


@dataclass(frozen=True)
class ModelIR:
    domains: tuple[Domain, ...] = ()
    vars: tuple[VarDecl, ...] = ()
    defines: tuple[DefineDecl, ...] = ()
    init_cond: Optional[Expr] = None
    agents: tuple[AgentDecl, ...] = ()
    protocols: tuple[ProtocolDecl, ...] = ()
    transitions: Optional[Statement] = None
    fairness: tuple[Expr, ...] = ()
    specs: tuple[SpecDecl, ...] = ()

    def domain(self, type_name: str) -> Domain:
        if type_name == BOOL.name:
            return BOOL
        for d in self.domains:
            if d.name == type_name:
                return d
        raise KeyError(type_name)

    def var_domain(self, var: str) -> Domain:
        for v in self.vars:
            if v.name == var:
                return self.domain(v.type_name)
        raise KeyError(var)

    def var_names(self) -> list[str]:
        return [v.name for v in self.vars]

    def define_map(self) -> dict[str, Expr]:
        return {d.name: d.body for d in self.defines}

    def protocol(self, name: str) -> ProtocolDecl:
        for p in self.protocols:
            if p.name == name:
                return p
        raise KeyError(name)

    def agent(self, name: str) -> AgentDecl:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def spec(self, label: str) -> SpecDecl:
        for s in self.specs:
            if s.label == label:
                return s
        raise KeyError(label)

    def constants(self) -> dict[str, tuple[EnumDomain, int]]:
        out: dict[str, tuple[EnumDomain, int]] = {}
        for d in self.domains:
            if isinstance(d, EnumDomain):
                for i, c in enumerate(d.constants):
                    out.setdefault(c, (d, i))
        return out


# ---------------------------------------------------------------- traversal

def subexprs(e: Expr) -> Iterator[Expr]:
    """Pre-order walk over an expression tree."""
    yield e
    if isinstance(e, Not):
        yield from subexprs(e.operand)
    elif isinstance(e, BinOp):
        yield from subexprs(e.left)
        yield from subexprs(e.right)


def statement_exprs(st: Statement) -> Iterator[Expr]:
    if isinstance(st, Assign):
        yield st.value
    elif isinstance(st, GuardedChoice):
        for g, sub in st.branches:
            yield g
            yield from statement_exprs(sub)
        if st.otherwise is not None:
            yield from statement_exprs(st.otherwise)
    elif isinstance(st, Seq):
        for sub in st.body:
            yield from statement_exprs(sub)
    elif isinstance(st, NondetAssign):
        yield st.condition


def map_expr(e: Expr, fn) -> Expr:
    """Bottom-up rebuild of `e`; `fn` may replace any leaf."""
    if isinstance(e, Not):
        return fn(Not(map_expr(e.operand, fn)))
    if isinstance(e, BinOp):
        return fn(BinOp(e.op, map_expr(e.left, fn), map_expr(e.right, fn)))
    return fn(e)


# ---------------------------------------------------------------- defines

class DefineCycleError(ValueError):
    pass


def expand_defines(e: Expr, m: ModelIR | dict[str, Expr]) -> Expr:
    """Substitute define bodies for define references until none remain."""
    defines = m if isinstance(m, dict) else m.define_map()
    return _expand(e, defines, ())


def _expand(e: Expr, defines: dict[str, Expr], stack: tuple[str, ...]) -> Expr:
    if isinstance(e, Name) and e.name in defines:
        if e.name in stack:
            raise DefineCycleError(" -> ".join(stack + (e.name,)))
        return _expand(defines[e.name], defines, stack + (e.name,))
    if isinstance(e, Not):
        return Not(_expand(e.operand, defines, stack))
    if isinstance(e, BinOp):
        return BinOp(e.op, _expand(e.left, defines, stack), _expand(e.right, defines, stack))
    return e


# ---------------------------------------------------------------- validation

@dataclass
class Diagnostic:
    message: str
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.message}"


@dataclass
class ValidationReport:
    errors: list[Diagnostic] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, message: str, span: Optional[SourceSpan] = None) -> None:
        self.errors.append(Diagnostic(message, span))

    def warn(self, message: str, span: Optional[SourceSpan] = None) -> None:
        self.warnings.append(Diagnostic(message, span))


class ModelError(Exception):
    """Raised when a model with validation errors is handed to an engine."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(str(d) for d in report.errors))


# Expression types: "bool", ("enum", name) or ("int", lo, hi, literal?)
_BOOL = "bool"


def _is_int(t) -> bool:
    return isinstance(t, tuple) and t[0] == "int"


def _type_str(t) -> str:
    if t == _BOOL:
        return "Bool"
    if t[0] == "enum":
        return t[1]
    return f"{{{t[1]}..{t[2]}}}"


def _domain_type(d: Domain):
    if isinstance(d, BoolDomain):
        return _BOOL
    if isinstance(d, EnumDomain):
        return ("enum", d.name)
    return ("int", d.lo, d.hi, False)


class _Scope:
    """Resolution context for one kind of expression."""

    def __init__(self, names: dict, *, primed: frozenset = frozenset(),
                 actions: bool = False, what: str = "expression"):
        self.names = names  # identifier -> type
        self.primed = primed
        self.actions = actions
        self.what = what


class _Validator:
    def __init__(self, m: ModelIR):
        self.m = m
        self.report = ValidationReport()
        self.consts = m.constants()
        self.define_types: dict[str, object] = {}
        self.agent_actions: dict[str, set[str]] = {}

    def run(self) -> ValidationReport:
        m = self.m
        self._check_domains()
        self._check_names()
        state_names = {}
        for v in m.vars:
            try:
                state_names[v.name] = _domain_type(m.domain(v.type_name))
            except KeyError:
                self.report.error(f"unknown type '{v.type_name}' for variable '{v.name}'", v.span)
        for c, (d, _) in self.consts.items():
            state_names[c] = ("enum", d.name)
        self.state_names = state_names
        self._check_defines()
        for name, t in self.define_types.items():
            if t is not None:
                state_names[name] = t
        state_scope = _Scope(state_names, what="state expression")

        if m.init_cond is not None:
            self._expect_bool(m.init_cond, state_scope, "init_cond")
        self._check_protocols()
        self._check_agents()
        if m.transitions is None:
            self.report.error("missing transitions block")
        else:
            self._check_stmt(m.transitions, _Scope(state_names, actions=True, what="transition"))
        for f in m.fairness:
            self._expect_bool(f, state_scope, "fairness constraint")
        self._check_specs(state_scope)
        return self.report

    # -- declarations

    def _check_domains(self) -> None:
        seen = set()
        for d in self.m.domains:
            if d.name in seen or d.name == BOOL.name:
                self.report.error(f"duplicate type '{d.name}'")
            seen.add(d.name)
            if isinstance(d, EnumDomain):
                if not d.constants:
                    self.report.error(f"type '{d.name}' has no constants")
                if len(set(d.constants)) != len(d.constants):
                    self.report.error(f"type '{d.name}' repeats a constant")
            elif isinstance(d, IntRange) and d.lo > d.hi:
                self.report.error(f"type '{d.name}' has empty range {d.lo}..{d.hi}")

    def _check_names(self) -> None:
        seen: dict[str, str] = {}

        def claim(name: str, kind: str, span=None) -> None:
            if name in seen:
                self.report.error(f"{kind} '{name}' clashes with {seen[name]} of the same name", span)
            else:
                seen[name] = kind

        for d in self.m.domains:
            if isinstance(d, EnumDomain):
                for c in dict.fromkeys(d.constants):
                    claim(c, "constant")
        for v in self.m.vars:
            claim(v.name, "variable", v.span)
        for d in self.m.defines:
            claim(d.name, "define", d.span)
        for a in self.m.agents:
            claim(a.name, "agent", a.span)
        for p in self.m.protocols:
            if sum(q.name == p.name for q in self.m.protocols) > 1:
                self.report.error(f"duplicate protocol '{p.name}'", p.span)
                break

    def _check_defines(self) -> None:
        defines = self.m.define_map()
        for d in self.m.defines:
            try:
                _expand(d.body, defines, (d.name,))
            except DefineCycleError as exc:
                self.report.error(f"cyclic define chain: {exc}", d.span)
                self.define_types[d.name] = None
        # type each define in dependency order via expansion
        base = _Scope(dict(self.state_names), what="define")
        for d in self.m.defines:
            if d.name in self.define_types:
                continue
            expanded = expand_defines(d.body, defines)
            self.define_types[d.name] = self._type(expanded, base, d.span)

    def _check_protocols(self) -> None:
        for p in self.m.protocols:
            names = {}
            for pname, tname in p.params:
                if pname in names:
                    self.report.error(f"protocol '{p.name}' repeats parameter '{pname}'", p.span)
                try:
                    names[pname] = _domain_type(self.m.domain(tname))
                except KeyError:
                    self.report.error(f"unknown type '{tname}' for parameter '{pname}'", p.span)
            for c, (d, _) in self.consts.items():
                names.setdefault(c, ("enum", d.name))
            scope = _Scope(names, what=f"protocol '{p.name}' guard")
            self._check_pbody(p.body, scope, p)

    def _check_pbody(self, body: ProtocolBody, scope: _Scope, p: ProtocolDecl) -> None:
        if isinstance(body, ActionRef):
            if not body.name:
                self.report.error(f"empty action name in protocol '{p.name}'", p.span)
            return
        if not body.branches and body.otherwise is None:
            self.report.error(f"protocol '{p.name}' has an empty choice", p.span)
        for g, sub in body.branches:
            self._expect_bool(g, scope, "protocol guard")
            self._check_pbody(sub, scope, p)
        if body.otherwise is not None:
            self._check_pbody(body.otherwise, scope, p)

    def _check_agents(self) -> None:
        for a in self.m.agents:
            try:
                p = self.m.protocol(a.protocol)
            except KeyError:
                self.report.error(f"agent '{a.name}' uses unknown protocol \"{a.protocol}\"", a.span)
                self.agent_actions[a.name] = set()
                continue
            self.agent_actions[a.name] = set(p.actions()) | {"Skip"}
            if len(a.bindings) != len(p.params):
                self.report.error(
                    f"agent '{a.name}' binds {len(a.bindings)} variables but protocol "
                    f"\"{p.name}\" takes {len(p.params)}", a.span)
                continue
            for var, (pname, tname) in zip(a.bindings, p.params):
                vtype = next((v.type_name for v in self.m.vars if v.name == var), None)
                if vtype is None:
                    self.report.error(f"agent '{a.name}' binds undeclared variable '{var}'", a.span)
                elif vtype != tname:
                    self.report.error(
                        f"agent '{a.name}' binds '{var}' : {vtype} to parameter "
                        f"'{pname}' : {tname}", a.span)

    def _check_specs(self, scope: _Scope) -> None:
        from .ltl import atoms_of  # local: ltl imports this module

        labels = set()
        for s in self.m.specs:
            if s.label in labels:
                self.report.error(f"duplicate spec label {s.label!r}", s.span)
            labels.add(s.label)
            for atom in atoms_of(s.formula.body):
                self._expect_bool(atom, scope, "spec atom", s.span)

    # -- statements

    def _check_stmt(self, st: Statement, scope: _Scope) -> None:
        if isinstance(st, Assign):
            if st.var not in self.state_names or st.var in self.consts:
                self.report.error(f"assignment to undeclared variable '{st.var}'", st.span)
                self._type(st.value, scope, st.span)
                return
            target = self.state_names[st.var]
            t = self._type(st.value, scope, st.span)
            if t is not None and not _assignable(target, t):
                self.report.error(
                    f"cannot assign {_type_str(t)} value to '{st.var}' : {_type_str(target)}", st.span)
        elif isinstance(st, GuardedChoice):
            for g, sub in st.branches:
                self._expect_bool(g, scope, "guard", st.span)
                self._check_stmt(sub, scope)
            if st.otherwise is not None:
                self._check_stmt(st.otherwise, scope)
            else:
                self.report.warn("guarded choice without otherwise-branch behaves as skip "
                                 "when no guard holds", st.span)
        elif isinstance(st, Seq):
            for sub in st.body:
                self._check_stmt(sub, scope)
        elif isinstance(st, NondetAssign):
            for v in st.vars:
                if v not in self.m.var_names():
                    self.report.error(f"nondeterministic assignment to undeclared variable '{v}'", st.span)
            if len(set(st.vars)) != len(st.vars):
                self.report.error("nondeterministic assignment lists a variable twice", st.span)
            inner = _Scope(scope.names, primed=frozenset(st.vars), actions=scope.actions,
                           what="nondeterministic assignment condition")
            self._expect_bool(st.condition, inner, "condition", st.span)

    # -- expressions

    def _expect_bool(self, e: Expr, scope: _Scope, what: str, span=None) -> None:
        t = self._type(e, scope, span)
        if t is not None and t != _BOOL:
            self.report.error(f"{what} must be Bool, found {_type_str(t)}", span)

    def _type(self, e: Expr, scope: _Scope, span=None):
        """Type of `e`, or None after reporting an error."""
        r = self.report
        if isinstance(e, BoolLit):
            return _BOOL
        if isinstance(e, IntLit):
            return ("int", e.value, e.value, True)
        if isinstance(e, Otherwise):
            r.error("'otherwise' is only allowed as a guard", span)
            return None
        if isinstance(e, Name):
            if e.name in scope.names:
                return scope.names[e.name]
            r.error(f"unresolved name '{e.name}' in {scope.what}", e.span or span)
            return None
        if isinstance(e, Primed):
            if e.name not in scope.primed:
                r.error(f"primed reference '{e.name}'' outside its nondeterministic assignment",
                        e.span or span)
                return None
            return scope.names.get(e.name)
        if isinstance(e, ActionProp):
            if not scope.actions:
                r.error(f"action proposition '{e.agent}.{e.action}' outside the transitions block",
                        e.span or span)
                return None
            if e.agent not in self.agent_actions:
                r.error(f"unresolved agent '{e.agent}' in '{e.agent}.{e.action}'", e.span or span)
                return None
            if self.agent_actions[e.agent] and e.action not in self.agent_actions[e.agent]:
                r.error(f"agent '{e.agent}' has no action '{e.action}'", e.span or span)
                return None
            return _BOOL
        if isinstance(e, Not):
            t = self._type(e.operand, scope, span)
            if t is not None and t != _BOOL:
                r.error(f"'neg' applied to {_type_str(t)}", span)
            return _BOOL
        if isinstance(e, BinOp):
            lt = self._type(e.left, scope, span)
            rt = self._type(e.right, scope, span)
            if lt is None or rt is None:
                return _BOOL if e.op in COMPARISONS + CONNECTIVES else None
            if e.op in CONNECTIVES:
                if lt != _BOOL or rt != _BOOL:
                    r.error(f"'{e.op}' needs Bool operands, found {_type_str(lt)} and {_type_str(rt)}", span)
                return _BOOL
            if e.op in COMPARISONS:
                if _is_int(lt) and _is_int(rt):
                    return _BOOL
                if lt != rt:
                    r.error(f"cannot compare {_type_str(lt)} with {_type_str(rt)}", span)
                elif e.op not in ("==", "/="):
                    r.error(f"ordering '{e.op}' on non-integer type {_type_str(lt)}", span)
                return _BOOL
            if e.op in ARITHMETIC:
                if not (_is_int(lt) and _is_int(rt)):
                    r.error(f"'{e.op}' needs integer operands", span)
                    return None
                return self._arith(e.op, lt, rt, span)
        r.error(f"unknown expression {e!r}", span)
        return None

    def _arith(self, op: str, lt, rt, span):
        bounds = [t for t in (lt, rt) if not t[3]]
        if len(bounds) == 2 and bounds[0][1:3] != bounds[1][1:3]:
            self.report.error("arithmetic mixes different integer ranges", span)
            return None
        if op == "+":
            lo, hi = lt[1] + rt[1], lt[2] + rt[2]
        else:
            lo, hi = lt[1] - rt[2], lt[2] - rt[1]
        if not bounds:
            return ("int", lo, hi, True)
        dlo, dhi = bounds[0][1], bounds[0][2]
        if lo < dlo or hi > dhi:
            self.report.warn(f"arithmetic may exceed range {dlo}..{dhi}; result saturates", span)
        return ("int", dlo, dhi, False)


def _assignable(target, t) -> bool:
    if _is_int(target) and _is_int(t):
        if t[3]:  # literal must lie inside the target range
            return target[1] <= t[1] and t[2] <= target[2]
        return True
    return target == t


def validate_model(m: ModelIR) -> ValidationReport:
    """Collect every typing and scoping violation of `m`; never raises."""
    return _Validator(m).run()


def require_valid(m: ModelIR) -> ValidationReport:
    report = validate_model(m)
    if not report.ok:
        raise ModelError(report)
    return report


def names_in(e: Expr) -> Iterable[str]:
    return [x.name for x in subexprs(e) if isinstance(x, Name)]
