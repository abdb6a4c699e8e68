"""Front end for `.swapmc` model scripts: lexer, recursive-descent parser and
a pretty printer whose output parses back to an equal IR."""
from __future__ import annotations

import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

from . import ltl
from .model import (
    ActionProp, ActionRef, AgentDecl, Assign, BinOp, BoolLit, DefineDecl, EnumDomain,
    GuardedChoice, IntLit, IntRange, ModelIR, Name, NondetAssign, Not, OTHERWISE, Otherwise,
    Primed, ProtocolChoice, ProtocolDecl, SKIP, Seq, Skip, SourceSpan, SpecDecl, VarDecl,
)

KEYWORDS = {
    "type", "define", "init_cond", "agent", "transitions", "begin", "end", "if", "fi",
    "do", "od", "otherwise", "skip", "fairness", "spec_obs", "protocol", "neg",
    "True", "False",
}
TEMPORAL_UNARY = {"G": ltl.Always, "F": ltl.Eventually, "X": ltl.Next}
TEMPORAL_BINARY = ("U", "W")

# longest symbols first
_SYMBOLS = [
    ":=", "==", "/=", "<=", ">=", "/\\", "\\/", "=>", "->", "[[", "]]", "[]", "<<", ">>",
    "..", "<", ">", "+", "-", "(", ")", "{", "}", ",", ";", ":", "|", "=", ".", "'",
]
_SYM = re.compile("|".join(re.escape(x) for x in _SYMBOLS))
_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9]+")
_WS = re.compile(r"[ \t\r\f\v]+")


@dataclass(frozen=True)
class Token:
    kind: str  # "id", "int", "string", "sym", "kw", "eof"
    text: str
    span: SourceSpan
    value: object = None


@dataclass
class ParseError(Exception):
    span: SourceSpan
    message: str
    expected: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        return f"{self.span}: {self.message}"


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def _advance(self, n: int) -> None:
        chunk = self.text[self.pos:self.pos + n]
        nl = chunk.count("\n")
        if nl:
            self.line += nl
            self.col = len(chunk) - chunk.rfind("\n")
        else:
            self.col += n
        self.pos += n

    def _span(self, length: int) -> SourceSpan:
        return SourceSpan(self.line, self.col, length)

    def tokens(self) -> list[Token]:
        return list(self.iter_tokens())

    def iter_tokens(self) -> Iterator[Token]:
        """Tokens on demand, ending with one "eof" token."""
        text = self.text
        while True:
            self._skip_trivia()
            if self.pos >= len(text):
                yield Token("eof", "", self._span(0))
                return
            c = text[self.pos]
            if c == '"':
                yield self._string()
                continue
            m = _ID.match(text, self.pos)
            if m:
                word = m.group()
                kind = "kw" if word in KEYWORDS else "id"
                yield Token(kind, word, self._span(len(word)))
                self._advance(len(word))
                continue
            m = _INT.match(text, self.pos)
            if m:
                yield Token("int", m.group(), self._span(len(m.group())), int(m.group()))
                self._advance(len(m.group()))
                continue
            m = _SYM.match(text, self.pos)
            if m is None:
                raise ParseError(self._span(1), f"unexpected character {c!r}")
            sym = m.group()
            yield Token("sym", sym, self._span(len(sym)))
            self._advance(len(sym))

    def _skip_trivia(self) -> None:
        text = self.text
        while self.pos < len(text):
            m = _WS.match(text, self.pos)
            if m:
                self._advance(len(m.group()))
            elif text[self.pos] == "\n":
                self._advance(1)
            elif text.startswith("--", self.pos):
                end = text.find("\n", self.pos)
                self._advance((len(text) if end < 0 else end) - self.pos)
            elif text.startswith("{-", self.pos):
                self._block_comment()
            else:
                return

    def _block_comment(self) -> None:
        start = self._span(2)
        depth = 0
        text = self.text
        while self.pos < len(text):
            if text.startswith("{-", self.pos):
                depth += 1
                self._advance(2)
            elif text.startswith("-}", self.pos):
                depth -= 1
                self._advance(2)
                if depth == 0:
                    return
            else:
                self._advance(1)
        raise ParseError(start, "unterminated block comment", ["-}"])

    def _string(self) -> Token:
        span = self._span(1)
        i = self.pos + 1
        buf = []
        text = self.text
        while i < len(text):
            c = text[i]
            if c == "\\" and i + 1 < len(text) and text[i + 1] in '"\\':
                buf.append(text[i + 1])
                i += 2
            elif c == '"':
                raw = text[self.pos:i + 1]
                self._advance(len(raw))
                return Token("string", raw, SourceSpan(span.line, span.column, len(raw)), "".join(buf))
            else:
                buf.append(c)
                i += 1
        raise ParseError(span, "unterminated string literal", ['"'])


def tokenize(text: str) -> list[Token]:
    return _Lexer(text).tokens()


# ---------------------------------------------------------------- parser

_ExprOrLtl = Union[object, ltl.Ltl]


MAX_NESTING = 64


class _Parser:
    def __init__(self, tokens: Iterable[Token]):
        self._source = iter(tokens)
        self.toks: list[Token] = []
        self.i = 0
        self.depth = 0

    @contextmanager
    def nest(self):
        """Bound the nesting depth; the parser is recursive descent."""
        self.depth += 1
        try:
            if self.depth > MAX_NESTING:
                self.fail(f"nesting deeper than {MAX_NESTING} levels")
            yield
        finally:
            self.depth -= 1

    # -- token helpers

    def _fill(self, k: int) -> Token:
        """Token k, lexing lazily so that an early error stops the scan."""
        toks = self.toks
        while len(toks) <= k and (not toks or toks[-1].kind != "eof"):
            toks.append(next(self._source))
        return toks[min(k, len(toks) - 1)]

    @property
    def tok(self) -> Token:
        return self._fill(self.i)

    def peek(self, k: int = 1) -> Token:
        return self._fill(self.i + k)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "kw", "id") and t.text == text

    def take(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.take()
        return None

    def expect(self, text: str) -> Token:
        if self.at(text):
            return self.take()
        self.fail(f"expected '{text}'", [text])

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind == "id":
            return self.take()
        self.fail(f"expected {what}", ["identifier"])

    def fail(self, message: str, expected=()):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(t.span, f"{message}, found {found}", list(expected))

    # -- model

    def model(self) -> ModelIR:
        if self.tok.kind == "eof":
            self.fail("expected declaration", ["declaration"])
        domains, vars_, defines, agents, protocols = [], [], [], [], []
        fairness, specs = [], []
        init_cond = None
        transitions = None
        while self.tok.kind != "eof":
            t = self.tok
            if self.at("type"):
                domains.append(self.typedecl())
            elif self.at("define"):
                defines.append(self.define())
            elif self.at("init_cond"):
                if init_cond is not None:
                    self.fail("duplicate init_cond")
                self.take()
                self.expect("=")
                init_cond = self.expr()
            elif self.at("agent"):
                agents.append(self.agentdecl())
            elif self.at("transitions"):
                if transitions is not None:
                    self.fail("duplicate transitions block")
                self.take()
                transitions = self.stmt()
            elif self.at("fairness"):
                self.take()
                self.expect("=")
                fairness.append(self.expr())
            elif self.at("spec_obs"):
                specs.append(self.spec())
            elif self.at("protocol"):
                protocols.append(self.protocol())
            elif t.kind == "id" and self.peek().text == ":":
                self.take()
                self.take()
                vars_.append(VarDecl(t.text, self.ident("type name").text, t.span))
            else:
                self.fail("expected declaration", ["declaration"])
        return ModelIR(tuple(domains), tuple(vars_), tuple(defines), init_cond, tuple(agents),
                       tuple(protocols), transitions, tuple(fairness), tuple(specs))

    def typedecl(self):
        self.expect("type")
        name = self.ident("type name").text
        self.expect("=")
        self.expect("{")
        if self.tok.kind == "int" or (self.at("-") and self.peek().kind == "int"):
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            self.expect("}")
            return IntRange(name, lo, hi)
        consts = [self.ident("constant").text]
        while self.accept(","):
            consts.append(self.ident("constant").text)
        self.expect("}")
        return EnumDomain(name, tuple(consts))

    def integer(self) -> int:
        sign = -1 if self.accept("-") else 1
        if self.tok.kind != "int":
            self.fail("expected integer", ["integer"])
        return sign * self.take().value

    def define(self) -> DefineDecl:
        self.expect("define")
        t = self.ident("define name")
        self.expect("=")
        return DefineDecl(t.text, self.expr(), t.span)

    def agentdecl(self) -> AgentDecl:
        self.expect("agent")
        t = self.ident("agent name")
        if self.tok.kind != "string":
            self.fail("expected protocol name string", ["string"])
        proto = self.take().value
        self.expect("(")
        binds = [self.ident("variable").text]
        while self.accept(","):
            binds.append(self.ident("variable").text)
        self.expect(")")
        return AgentDecl(t.text, proto, tuple(binds), t.span)

    def spec(self) -> SpecDecl:
        start = self.expect("spec_obs")
        self.expect("=")
        if self.tok.kind != "string":
            self.fail("expected spec label string", ["string"])
        label = self.take().value
        return SpecDecl(label, self.formula(), start.span)

    def protocol(self) -> ProtocolDecl:
        start = self.expect("protocol")
        if self.tok.kind != "string":
            self.fail("expected protocol name string", ["string"])
        name = self.take().value
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                p = self.ident("parameter").text
                self.expect(":")
                params.append((p, self.ident("type name").text))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("begin")
        self.expect("do")
        body = self.pchoice("od")
        self.expect("end")
        return ProtocolDecl(name, tuple(params), body, start.span)

    def pchoice(self, closer: str) -> ProtocolChoice:
        branches, other = [], None
        while True:
            if self.accept("otherwise"):
                self.expect("->")
                if other is not None:
                    self.fail("duplicate otherwise branch")
                other = self.pbody()
            else:
                g = self.expr()
                self.expect("->")
                branches.append((g, self.pbody()))
            if not self.accept("[]"):
                break
        self.expect(closer)
        return ProtocolChoice(tuple(branches), other)

    def pbody(self):
        if self.accept("<<"):
            a = self.ident("action name").text
            self.expect(">>")
            return ActionRef(a)
        if self.accept("if"):
            with self.nest():
                return self.pchoice("fi")
        self.fail("expected '<<' action '>>' or nested 'if'", ["<<", "if"])

    # -- statements

    def stmt(self):
        t = self.tok
        if self.accept("skip"):
            return SKIP
        if self.accept("begin"):
            with self.nest():
                body = [self.stmt()]
                while self.accept(";"):
                    body.append(self.stmt())
            self.expect("end")
            return Seq(tuple(body))
        if self.at("if"):
            with self.nest():
                return self._choice()
        if self.accept("[["):
            names = [self.ident("variable").text]
            while self.accept(","):
                names.append(self.ident("variable").text)
            self.expect("|")
            cond = self.expr(allow_primed=True)
            self.expect("]]")
            return NondetAssign(tuple(names), cond, t.span)
        if t.kind == "id" and self.peek().text == ":=":
            self.take()
            self.take()
            return Assign(t.text, self.expr(), t.span)
        self.fail("expected statement", ["skip", "begin", "if", "[[", "assignment"])

    def _choice(self) -> GuardedChoice:
        t = self.expect("if")
        branches, other = [], None
        while True:
            if self.accept("otherwise"):
                self.expect("->")
                if other is not None:
                    self.fail("duplicate otherwise branch")
                other = self.stmt()
            else:
                g = self.expr()
                self.expect("->")
                branches.append((g, self.stmt()))
            if not self.accept("[]"):
                break
        self.expect("fi")
        return GuardedChoice(tuple(branches), other, t.span)

    # -- expressions (model and formula share one precedence ladder)

    def expr(self, allow_primed: bool = False):
        self.temporal = False
        self.allow_primed = allow_primed
        return self.implies()

    def formula(self) -> ltl.SpecFormula:
        self.temporal = True
        self.allow_primed = False
        if not self.at("A"):
            self.fail("expected path quantifier 'A'", ["A"])
        self.take()
        body = self.unary()
        return ltl.SpecFormula(self._to_ltl(body))

    def implies(self):
        left = self.disj()
        if self.accept("=>"):
            with self.nest():
                return BinOp("=>", left, self.implies())
        return left

    def disj(self):
        left = self.conj()
        while self.accept("\\/"):
            left = BinOp("\\/", left, self.conj())
        return left

    def conj(self):
        left = self.binary_temporal()
        while self.accept("/\\"):
            left = BinOp("/\\", left, self.binary_temporal())
        return left

    def binary_temporal(self):
        left = self.unary()
        if self.temporal and self.tok.kind == "id" and self.tok.text in TEMPORAL_BINARY:
            op = self.take().text
            with self.nest():
                return _Temporal(op, (left, self.binary_temporal()))
        return left

    def unary(self):
        if self.accept("neg"):
            with self.nest():
                return Not(self.unary())
        if self.temporal and self.tok.kind == "id":
            if self.tok.text in TEMPORAL_UNARY and self._starts_operand(self.peek()):
                op = self.take().text
                with self.nest():
                    return _Temporal(op, (self.unary(),))
            if self.tok.text == "A" and self._starts_operand(self.peek()):
                self.fail("path quantifier only at top level")
        return self.comparison()

    @staticmethod
    def _starts_operand(t: Token) -> bool:
        if t.kind in ("id", "int"):
            return True
        return t.text in ("(", "neg", "True", "False", "-")

    def comparison(self):
        left = self.additive()
        if self.tok.kind == "sym" and self.tok.text in ("==", "/=", "<", "<=", ">", ">="):
            op = self.take().text
            return BinOp(op, left, self.additive())
        return left

    def additive(self):
        left = self.primary()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            op = self.take().text
            left = BinOp(op, left, self.primary())
        return left

    def primary(self):
        t = self.tok
        if self.accept("("):
            with self.nest():
                inner = self.implies()
            self.expect(")")
            return inner
        if self.accept("True"):
            return BoolLit(True)
        if self.accept("False"):
            return BoolLit(False)
        if t.kind == "int":
            self.take()
            return IntLit(t.value)
        if self.at("-") and self.peek().kind == "int":
            self.take()
            return IntLit(-self.take().value)
        if self.at("otherwise"):
            self.fail("'otherwise' is only allowed as a whole guard")
        if t.kind == "id":
            if self.temporal and (t.text in TEMPORAL_UNARY or t.text in TEMPORAL_BINARY
                                  or t.text == "A"):
                self.fail(f"temporal operator '{t.text}' is missing an operand")
            self.take()
            if self.at(".") and self.peek().kind in ("id", "kw"):
                self.take()
                action = self.take().text
                return ActionProp(t.text, action, t.span)
            if self.at("'"):
                if not self.allow_primed:
                    self.fail("primed variables are only allowed inside [[ ... | ... ]]")
                self.take()
                return Primed(t.text, t.span)
            return Name(t.text, t.span)
        self.fail("expected expression", ["expression"])

    # -- formula conversion

    def _to_ltl(self, e) -> ltl.Ltl:
        if isinstance(e, _Temporal):
            args = [self._to_ltl(a) for a in e.args]
            if e.op in TEMPORAL_UNARY:
                return TEMPORAL_UNARY[e.op](args[0])
            if e.op == "U":
                return ltl.Until(*args)
            return ltl.weak_until(*args)
        if isinstance(e, Not):
            return ltl.Neg(self._to_ltl(e.operand))
        if isinstance(e, BinOp) and e.op in ("/\\", "\\/", "=>"):
            cls = {"/\\": ltl.And, "\\/": ltl.Or, "=>": ltl.Implies}[e.op]
            return cls(self._to_ltl(e.left), self._to_ltl(e.right))
        if isinstance(e, BoolLit):
            return ltl.Const(e.value)
        if _has_temporal(e):
            raise ParseError(self.tok.span, "temporal operator inside a comparison or arithmetic term")
        if isinstance(e, ActionProp):
            raise ParseError(e.span or self.tok.span,
                             "action propositions are not allowed in specifications")
        return ltl.Atom(e)


@dataclass(frozen=True)
class _Temporal:
    op: str
    args: tuple


def _has_temporal(e) -> bool:
    if isinstance(e, _Temporal):
        return True
    if isinstance(e, Not):
        return _has_temporal(e.operand)
    if isinstance(e, BinOp):
        return _has_temporal(e.left) or _has_temporal(e.right)
    return False


def parse_model(text: str) -> ModelIR:
    """Parse a model script; raises ParseError with a source span."""
    p = _Parser(_Lexer(text).iter_tokens())
    p.temporal = False
    return p.model()


def try_parse_model(text: str) -> Union[ModelIR, list[ParseError]]:
    try:
        return parse_model(text)
    except ParseError as exc:
        return [exc]
    except RecursionError:
        return [ParseError(SourceSpan(1, 1), "input nested too deeply")]


def parse_formula(text: str) -> ltl.SpecFormula:
    p = _Parser(_Lexer(text).iter_tokens())
    f = p.formula()
    if p.tok.kind != "eof":
        p.fail("unexpected input after formula")
    return f


def parse_expr(text: str):
    p = _Parser(_Lexer(text).iter_tokens())
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail("unexpected input after expression")
    return e


# ---------------------------------------------------------------- printing

_PREC = {"=>": 1, "\\/": 2, "/\\": 3}


def format_expr(e) -> str:
    """Fully parenthesized below the connective level; re-parses to `e`."""
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Primed):
        return f"{e.name}'"
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "True" if e.value else "False"
    if isinstance(e, ActionProp):
        return f"{e.agent}.{e.action}"
    if isinstance(e, Otherwise):
        return "otherwise"
    if isinstance(e, Not):
        return f"neg {_wrap(e.operand)}"
    if isinstance(e, BinOp):
        return f"{_wrap(e.left)} {e.op} {_wrap(e.right)}"
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e) -> str:
    if isinstance(e, IntLit) and e.value < 0:
        return f"({e.value})"
    if isinstance(e, (Name, Primed, IntLit, BoolLit, ActionProp)):
        return format_expr(e)
    return f"({format_expr(e)})"


def format_ltl(f: ltl.Ltl) -> str:
    if isinstance(f, ltl.Atom):
        return _wrap(f.expr)
    if isinstance(f, ltl.Const):
        return "True" if f.value else "False"
    if isinstance(f, ltl.Neg):
        return f"neg ({format_ltl(f.arg)})"
    for cls, op in ((ltl.Always, "G"), (ltl.Eventually, "F"), (ltl.Next, "X")):
        if isinstance(f, cls):
            return f"{op} ({format_ltl(f.arg)})"
    for cls, op in ((ltl.And, "/\\"), (ltl.Or, "\\/"), (ltl.Implies, "=>"),
                    (ltl.Until, "U"), (ltl.WeakUntil, "W")):
        if isinstance(f, cls):
            return f"({format_ltl(f.left)}) {op} ({format_ltl(f.right)})"
    if isinstance(f, ltl.Release):
        # printed through its definition; never produced by the parser
        return format_ltl(ltl.Neg(ltl.Until(ltl.Neg(f.left), ltl.Neg(f.right))))
    raise TypeError(f"not an LTL formula: {f!r}")


def format_spec(f: ltl.SpecFormula) -> str:
    return f"A ({format_ltl(f.body)})"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _format_stmt(st, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(st, Skip):
        return [pad + "skip"]
    if isinstance(st, Assign):
        return [f"{pad}{st.var} := {format_expr(st.value)}"]
    if isinstance(st, NondetAssign):
        return [f"{pad}[[ {', '.join(st.vars)} | {format_expr(st.condition)} ]]"]
    if isinstance(st, Seq):
        lines = [pad + "begin"]
        for k, sub in enumerate(st.body):
            sublines = _format_stmt(sub, indent + 1)
            if k < len(st.body) - 1:
                sublines[-1] += " ;"
            lines += sublines
        return lines + [pad + "end"]
    if isinstance(st, GuardedChoice):
        arms = [(format_expr(g), sub) for g, sub in st.branches]
        if st.otherwise is not None:
            arms.append(("otherwise", st.otherwise))
        lines = [pad + "if"]
        for k, (g, sub) in enumerate(arms):
            lead = "   " if k == 0 else "[] "
            lines.append(f"{pad}{lead}{g} ->")
            lines += _format_stmt(sub, indent + 2)
        return lines + [pad + "fi"]
    raise TypeError(f"not a statement: {st!r}")


def _format_pchoice(c: ProtocolChoice, indent: int) -> list[str]:
    pad = "  " * indent
    arms = [(format_expr(g), b) for g, b in c.branches]
    if c.otherwise is not None:
        arms.append(("otherwise", c.otherwise))
    lines = []
    for k, (g, b) in enumerate(arms):
        lead = "   " if k == 0 else "[] "
        if isinstance(b, ActionRef):
            lines.append(f"{pad}{lead}{g} -> <<{b.name}>>")
        else:
            lines.append(f"{pad}{lead}{g} ->")
            lines.append(f"{pad}    if")
            lines += _format_pchoice(b, indent + 3)
            lines.append(f"{pad}    fi")
    return lines


def pretty_print(m: ModelIR) -> str:
    """Render `m` as script text; parse_model(pretty_print(m)) == m."""
    out: list[str] = []
    for d in m.domains:
        if isinstance(d, EnumDomain):
            out.append(f"type {d.name} = {{{', '.join(d.constants)}}}")
        else:
            # a space keeps "{-" from opening a block comment
            lo = f" {d.lo}" if d.lo < 0 else str(d.lo)
            out.append(f"type {d.name} = {{{lo}..{d.hi}}}")
    if m.domains:
        out.append("")
    for v in m.vars:
        out.append(f"{v.name} : {v.type_name}")
    if m.vars:
        out.append("")
    for d in m.defines:
        out.append(f"define {d.name} = {format_expr(d.body)}")
    if m.init_cond is not None:
        out.append(f"init_cond = {format_expr(m.init_cond)}")
    out.append("")
    for a in m.agents:
        out.append(f"agent {a.name} {_quote(a.protocol)} ({', '.join(a.bindings)})")
    if m.agents:
        out.append("")
    if m.transitions is not None:
        out.append("transitions")
        out += _format_stmt(m.transitions, 0)
        out.append("")
    for f in m.fairness:
        out.append(f"fairness = {format_expr(f)}")
    if m.fairness:
        out.append("")
    for s in m.specs:
        out.append(f"spec_obs = {_quote(s.label)}")
        out.append(f"  {format_spec(s.formula)}")
        out.append("")
    for p in m.protocols:
        params = ", ".join(f"{n} : {t}" for n, t in p.params)
        out.append(f"protocol {_quote(p.name)} ({params})")
        out.append("begin")
        out.append("do")
        out += _format_pchoice(p.body, 1)
        out.append("od")
        out.append("end")
        out.append("")
    return "\n".join(out).rstrip("\n") + "\n"
