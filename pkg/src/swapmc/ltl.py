"""LTL formulas over opaque state atoms, tableau translation to a generalized
Büchi automaton, and exact evaluation on ultimately periodic words.

Atoms wrap whole boolean model expressions (``strategyA == Cooperate`` is one
atom).  A word is a sequence of valuations; a valuation is either a mapping
from atom expression to bool or a collection holding the atoms that are true.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Sequence, Union



@dataclass(frozen=True)
class Atom:
    expr: object  # model.Expr


@dataclass(frozen=True)
class Const:
    value: bool


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Neg:
    arg: "Ltl"


@dataclass(frozen=True)
class And:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Or:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Implies:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Next:
    arg: "Ltl"


@dataclass(frozen=True)
class Always:
    arg: "Ltl"


@dataclass(frozen=True)
class Eventually:
    arg: "Ltl"


@dataclass(frozen=True)
class Until:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class WeakUntil:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class Release:
    """Dual of until; produced only by `normalize`."""

    left: "Ltl"
    right: "Ltl"


Ltl = Union[Atom, Const, Neg, And, Or, Implies, Next, Always, Eventually, Until, WeakUntil, Release]
_UNARY = (Neg, Next, Always, Eventually)
_BINARY = (And, Or, Implies, Until, WeakUntil, Release)


@dataclass(frozen=True)
class SpecFormula:
    """`A body`: the body must hold on every (fair) run."""

    body: Ltl


def children(f: Ltl) -> tuple[Ltl, ...]:
    if isinstance(f, _UNARY):
        return (f.arg,)
    if isinstance(f, _BINARY):
        return (f.left, f.right)
    return ()


def subformulas(f: Ltl) -> list[Ltl]:
    """Distinct subformulas, children before parents."""
    out: dict[Ltl, None] = {}

    def walk(g: Ltl) -> None:
        if g in out:
            return
        for c in children(g):
            walk(c)
        out[g] = None

    walk(f)
    return list(out)


def atoms_of(f: Ltl) -> list[object]:
    """Atom expressions of `f` in first-occurrence order."""
    return [g.expr for g in subformulas(f) if isinstance(g, Atom)]


def map_atoms(f: Ltl, fn) -> Ltl:
    if isinstance(f, Atom):
        return Atom(fn(f.expr))
    if isinstance(f, _UNARY):
        return type(f)(map_atoms(f.arg, fn))
    if isinstance(f, _BINARY):
        return type(f)(map_atoms(f.left, fn), map_atoms(f.right, fn))
    return f


def weak_until(a: Ltl, b: Ltl) -> Ltl:
    """`a W b` as `(a U b) \\/ G(a /\\ neg b)`."""
    return Or(Until(a, b), Always(And(a, Neg(b))))


# ---------------------------------------------------------------- NNF

def normalize(f: Ltl) -> Ltl:
    """Negation normal form.

    Negations end up directly above atoms; implications and weak untils are
    expanded; F and G are kept as primitives, and negated untils become
    releases.
    """
    return _nnf(f, False)


def _nnf(f: Ltl, neg: bool) -> Ltl:
    if isinstance(f, Const):
        return Const(f.value != neg)
    if isinstance(f, Atom):
        return Neg(f) if neg else f
    if isinstance(f, Neg):
        return _nnf(f.arg, not neg)
    if isinstance(f, And):
        l, r = _nnf(f.left, neg), _nnf(f.right, neg)
        return Or(l, r) if neg else And(l, r)
    if isinstance(f, Or):
        l, r = _nnf(f.left, neg), _nnf(f.right, neg)
        return And(l, r) if neg else Or(l, r)
    if isinstance(f, Implies):
        return _nnf(Or(Neg(f.left), f.right), neg)
    if isinstance(f, Next):
        return Next(_nnf(f.arg, neg))
    if isinstance(f, Always):
        return Eventually(_nnf(f.arg, True)) if neg else Always(_nnf(f.arg, False))
    if isinstance(f, Eventually):
        return Always(_nnf(f.arg, True)) if neg else Eventually(_nnf(f.arg, False))
    if isinstance(f, Until):
        if neg:
            return Release(_nnf(f.left, True), _nnf(f.right, True))
        return Until(_nnf(f.left, False), _nnf(f.right, False))
    if isinstance(f, Release):
        if neg:
            return Until(_nnf(f.left, True), _nnf(f.right, True))
        return Release(_nnf(f.left, False), _nnf(f.right, False))
    if isinstance(f, WeakUntil):
        return _nnf(weak_until(f.left, f.right), neg)
    raise TypeError(f"not an LTL formula: {f!r}")


# ---------------------------------------------------------------- lasso evaluation

def _truth(valuation, atom_expr) -> bool:
    if isinstance(valuation, (frozenset, set, dict)):
        return bool(valuation.get(atom_expr, False)) if type(valuation) is dict else atom_expr in valuation
    if isinstance(valuation, Mapping):
        return bool(valuation.get(atom_expr, False))
    return atom_expr in valuation


def _lfp(n: int, succ: Sequence[int], base: Sequence[bool], guard) -> list[bool]:
    """Least solution of v[i] = base[i] or (guard[i] and v[succ[i]]);
    `guard=None` means always true (F)."""
    vals = [False] * n
    changed = True
    while changed:
        changed = False
        for i in range(n - 1, -1, -1):
            v = base[i] or ((guard is None or guard[i]) and vals[succ[i]])
            if v != vals[i]:
                vals[i] = v
                changed = True
    return vals


def _gfp(n: int, succ: Sequence[int], base: Sequence[bool], escape) -> list[bool]:
    """Greatest solution of v[i] = base[i] and (escape[i] or v[succ[i]]);
    `escape=None` means never (G)."""
    vals = [True] * n
    changed = True
    while changed:
        changed = False
        for i in range(n - 1, -1, -1):
            v = base[i] and ((escape is not None and escape[i]) or vals[succ[i]])
            if v != vals[i]:
                vals[i] = v
                changed = True
    return vals


_KIND = {Const: 0, Atom: 1, Neg: 2, And: 3, Or: 4, Implies: 5, Next: 6, Eventually: 7,
         Always: 8, Until: 9, WeakUntil: 10, Release: 11}


@lru_cache(maxsize=512)
def _plan(f: Ltl) -> tuple[tuple[Ltl, ...], tuple[tuple, ...]]:
    """Subformulas (children first) with each operator's operand indices."""
    nodes = subformulas(f)
    pos = {g: i for i, g in enumerate(nodes)}
    ops = []
    for g in nodes:
        kind = _KIND.get(type(g))
        if kind is None:
            raise TypeError(f"not an LTL formula: {g!r}")
        if kind == 0:
            ops.append((0, g.value))
        elif kind == 1:
            ops.append((1, g.expr))
        else:
            ops.append((kind,) + tuple(pos[c] for c in children(g)))
    return tuple(nodes), tuple(ops)


def _vectors(f: Ltl, prefix: Sequence, cycle: Sequence) -> tuple[tuple[Ltl, ...], list[list[bool]]]:
    if not cycle:
        raise ValueError("cycle must be nonempty")
    nodes, ops = _plan(f)
    word = list(prefix) + list(cycle)
    n = len(word)
    succ = list(range(1, n)) + [len(prefix)]
    vals: list[list[bool]] = []
    for op in ops:
        kind = op[0]
        if kind == 0:
            v = [op[1]] * n
        elif kind == 1:
            v = [_truth(w, op[1]) for w in word]
        elif kind == 2:
            v = [not x for x in vals[op[1]]]
        elif kind == 6:
            a = vals[op[1]]
            v = [a[succ[i]] for i in range(n)]
        elif kind in (7, 8):
            a = vals[op[1]]
            v = _lfp(n, succ, a, None) if kind == 7 else _gfp(n, succ, a, None)
        else:
            a, b = vals[op[1]], vals[op[2]]
            if kind == 3:
                v = [x and y for x, y in zip(a, b)]
            elif kind == 4:
                v = [x or y for x, y in zip(a, b)]
            elif kind == 5:
                v = [(not x) or y for x, y in zip(a, b)]
            elif kind == 9:
                v = _lfp(n, succ, b, a)
            elif kind == 10:
                v = _gfp(n, succ, [x or y for x, y in zip(a, b)], b)
            else:
                v = _gfp(n, succ, b, a)
        vals.append(v)
    return nodes, vals


def lasso_values(f: Ltl, prefix: Sequence, cycle: Sequence) -> dict[Ltl, list[bool]]:
    """Truth of every subformula of `f` at every position of prefix·cycle^ω."""
    nodes, vals = _vectors(f, prefix, cycle)
    return dict(zip(nodes, vals))


def eval_on_lasso(f: Ltl, prefix: Sequence, cycle: Sequence) -> bool:
    """Truth of `f` at position 0 of the word prefix·cycle^ω."""
    return _vectors(f, prefix, cycle)[1][-1][0]


def step_back(order: Sequence[Ltl], valuation, after: Mapping[Ltl, bool]) -> dict[Ltl, bool]:
    """Subformula truth at a position, given the valuation there and the
    truth values at the following position.  `order` lists children first."""
    cur: dict[Ltl, bool] = {}
    for g in order:
        if isinstance(g, Const):
            v = g.value
        elif isinstance(g, Atom):
            v = _truth(valuation, g.expr)
        elif isinstance(g, Neg):
            v = not cur[g.arg]
        elif isinstance(g, And):
            v = cur[g.left] and cur[g.right]
        elif isinstance(g, Or):
            v = cur[g.left] or cur[g.right]
        elif isinstance(g, Implies):
            v = (not cur[g.left]) or cur[g.right]
        elif isinstance(g, Next):
            v = after[g.arg]
        elif isinstance(g, Eventually):
            v = cur[g.arg] or after[g]
        elif isinstance(g, Always):
            v = cur[g.arg] and after[g]
        elif isinstance(g, Until):
            v = cur[g.right] or (cur[g.left] and after[g])
        elif isinstance(g, WeakUntil):
            v = cur[g.right] or (cur[g.left] and after[g])
        elif isinstance(g, Release):
            v = cur[g.right] and (cur[g.left] or after[g])
        else:
            raise TypeError(f"not an LTL formula: {g!r}")
        cur[g] = v
    return cur


# ---------------------------------------------------------------- tableau

@dataclass
class GBA:
    """State-labelled generalized Büchi automaton.

    A run reads letter i while sitting in node i; node q accepts a letter iff
    every atom index in ``pos[q]`` is true and every index in ``neg[q]`` is
    false.  ``succ[q]`` are the nodes that may read the next letter.
    """

    atoms: tuple[object, ...]
    pos: list[frozenset[int]]
    neg: list[frozenset[int]]
    succ: list[frozenset[int]]
    initial: frozenset[int]
    acceptance: list[frozenset[int]]
    obligations: list[frozenset] = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return len(self.pos)

    def masks(self) -> list[tuple[int, int]]:
        """(required-true, required-false) atom bitmasks per node."""
        out = []
        for p, n in zip(self.pos, self.neg):
            out.append((sum(1 << i for i in p), sum(1 << i for i in n)))
        return out

    def valuation_mask(self, valuation) -> int:
        return sum(1 << i for i, a in enumerate(self.atoms) if _truth(valuation, a))

    def _tables(self):
        """Bitmask tables used by `accepts_lasso`, built once per automaton."""
        t = self.__dict__.get("_tab")
        if t is None:
            pred = [0] * self.size
            for q, rs in enumerate(self.succ):
                for r in rs:
                    pred[r] |= 1 << q
            t = {
                "masks": self.masks(),
                "pred": pred,
                "succ": [sum(1 << r for r in rs) for rs in self.succ],
                "init": sum(1 << q for q in self.initial),
                "acc": [sum(1 << q for q in acc) for acc in self.acceptance],
                "letter": {},
                "post": {},
                "pre": {},
            }
            self.__dict__["_tab"] = t
        return t

    def _letter_nodes(self, t, letter: int) -> int:
        m = t["letter"].get(letter)
        if m is None:
            m = 0
            for q, (p, ng) in enumerate(t["masks"]):
                if letter & p == p and not letter & ng:
                    m |= 1 << q
            t["letter"][letter] = m
        return m

    def _image(self, cache, table, nodes: int) -> int:
        out = cache.get(nodes)
        if out is None:
            out, rest = 0, nodes
            while rest:
                low = rest & -rest
                out |= table[low.bit_length() - 1]
                rest ^= low
            cache[nodes] = out
        return out

    def accepts_lasso(self, prefix: Sequence, cycle: Sequence) -> bool:
        """Decide acceptance of prefix·cycle^ω.

        Works on the product of the automaton with the lasso positions, each
        position holding a bitmask of automaton nodes: forward reachability,
        then an Emerson-Lei style greatest fixpoint over the cycle positions
        keeping nodes that can revisit every acceptance set.
        """
        t = self._tables()
        word = list(prefix) + list(cycle)
        n, k = len(word), len(prefix)
        if not cycle:
            raise ValueError("cycle must be nonempty")
        nxt = list(range(1, n)) + [k]
        allowed = [self._letter_nodes(t, self.valuation_mask(w)) for w in word]
        def post(nodes):
            return self._image(t["post"], t["succ"], nodes)

        def pre(nodes):
            return self._image(t["pre"], t["pred"], nodes)

        reach = [0] * n
        reach[0] = t["init"] & allowed[0]
        todo = [0] if reach[0] else []
        while todo:
            i = todo.pop()
            j = nxt[i]
            new = post(reach[i]) & allowed[j] & ~reach[j]
            if new:
                reach[j] |= new
                todo.append(j)
        cyc = range(k, n)
        prev_of = {nxt[i]: i for i in cyc}

        def back(target, within):
            """Nodes of `within` with a path of >= 1 step into `target` inside `within`."""
            out = [0] * n
            frontier = target
            changed = True
            while changed:
                changed = False
                for j in cyc:
                    i = prev_of[j]
                    add = pre(frontier[j] | out[j]) & within[i] & ~out[i]
                    if add:
                        out[i] |= add
                        changed = True
            return out

        z = [reach[i] if i >= k else 0 for i in range(n)]
        while True:
            znew = list(z)
            sets = t["acc"] or [-1]
            for acc in sets:
                y = back([z[i] & acc for i in range(n)], z)
                znew = [a & b for a, b in zip(znew, y)]
            if znew == z:
                return any(z)
            z = znew

    def to_dot(self) -> str:
        lines = ["digraph gba {", "  rankdir=LR;"]
        for q in range(self.size):
            lab = ", ".join([f"a{i}" for i in sorted(self.pos[q])] +
                            [f"!a{i}" for i in sorted(self.neg[q])]) or "true"
            sets = [str(k) for k, acc in enumerate(self.acceptance) if q in acc]
            extra = f"\\n{{{','.join(sets)}}}" if sets else ""
            shape = "doublecircle" if q in self.initial else "circle"
            lines.append(f'  q{q} [shape={shape}, label="{lab}{extra}"];')
        for q in range(self.size):
            for r in sorted(self.succ[q]):
                lines.append(f"  q{q} -> q{r};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _is_literal(f: Ltl) -> bool:
    return isinstance(f, (Atom, Const)) or (isinstance(f, Neg) and isinstance(f.arg, Atom))


def _complement(lit: Ltl) -> Ltl:
    if isinstance(lit, Neg):
        return lit.arg
    if isinstance(lit, Const):
        return Const(not lit.value)
    return Neg(lit)


@dataclass
class _Node:
    incoming: set
    old: frozenset
    new: frozenset
    nxt: frozenset


_INIT = -1


def ltl_to_gba(f: Ltl) -> GBA:
    """Tableau construction (expansion of obligations into current literals
    and next-step obligations).  `f` is normalized first if needed."""
    f = normalize(f)
    done: list[_Node] = []
    by_key: dict[tuple[frozenset, frozenset], int] = {}
    stack = [_Node({_INIT}, frozenset(), frozenset([f]), frozenset())]

    # iterative expansion; each stack entry is a partially expanded node
    while stack:
        node = stack.pop()
        if not node.new:
            key = (node.old, node.nxt)
            if key in by_key:
                done[by_key[key]].incoming |= node.incoming
                continue
            by_key[key] = len(done)
            done.append(node)
            stack.append(_Node({by_key[key]}, frozenset(), node.nxt, frozenset()))
            continue
        eta = next(iter(sorted(node.new, key=repr)))
        new = node.new - {eta}
        old = node.old
        if _is_literal(eta):
            if eta == FALSE or _complement(eta) in old:
                continue
            stack.append(_Node(node.incoming, old | {eta}, new, node.nxt))
            continue
        old = old | {eta}

        def fresh(items: Iterable[Ltl]) -> frozenset:
            return frozenset(x for x in items if x not in old)

        if isinstance(eta, And):
            stack.append(_Node(node.incoming, old, new | fresh([eta.left, eta.right]), node.nxt))
        elif isinstance(eta, Next):
            stack.append(_Node(node.incoming, old, new, node.nxt | {eta.arg}))
        elif isinstance(eta, Always):
            stack.append(_Node(node.incoming, old, new | fresh([eta.arg]), node.nxt | {eta}))
        elif isinstance(eta, Or):
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.left]), node.nxt))
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.right]), node.nxt))
        elif isinstance(eta, Until):
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.left]), node.nxt | {eta}))
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.right]), node.nxt))
        elif isinstance(eta, Eventually):
            stack.append(_Node(set(node.incoming), old, new, node.nxt | {eta}))
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.arg]), node.nxt))
        elif isinstance(eta, Release):
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.right]), node.nxt | {eta}))
            stack.append(_Node(set(node.incoming), old, new | fresh([eta.left, eta.right]), node.nxt))
        else:
            raise TypeError(f"unexpected formula after normalization: {eta!r}")

    atoms = tuple(atoms_of(f))
    aidx = {a: i for i, a in enumerate(atoms)}
    pos, neg, succ = [], [], [set() for _ in done]
    initial = set()
    for q, node in enumerate(done):
        pos.append(frozenset(aidx[x.expr] for x in node.old if isinstance(x, Atom)))
        neg.append(frozenset(aidx[x.arg.expr] for x in node.old
                             if isinstance(x, Neg) and isinstance(x.arg, Atom)))
        for src in node.incoming:
            if src == _INIT:
                initial.add(q)
            else:
                succ[src].add(q)
    eventualities = [g for g in subformulas(f) if isinstance(g, (Until, Eventually))]
    acceptance = []
    for u in eventualities:
        goal = u.right if isinstance(u, Until) else u.arg
        acceptance.append(frozenset(q for q, node in enumerate(done)
                                    if u not in node.old or goal in node.old))
    return _prune(GBA(atoms, pos, neg, [frozenset(s) for s in succ], frozenset(initial),
                      acceptance, [n.old for n in done]))


def _prune(a: GBA) -> GBA:
    """Drop nodes unreachable from the initial set; renumber densely."""
    seen = set(a.initial)
    todo = list(a.initial)
    while todo:
        q = todo.pop()
        for r in a.succ[q]:
            if r not in seen:
                seen.add(r)
                todo.append(r)
    keep = sorted(seen)
    ren = {q: i for i, q in enumerate(keep)}
    return GBA(
        a.atoms,
        [a.pos[q] for q in keep],
        [a.neg[q] for q in keep],
        [frozenset(ren[r] for r in a.succ[q]) for q in keep],
        frozenset(ren[q] for q in a.initial),
        [frozenset(ren[q] for q in acc if q in ren) for acc in a.acceptance],
        [a.obligations[q] for q in keep] if a.obligations else [],
    )


def iter_words(letters: Sequence, length: int) -> Iterator[tuple]:
    """All words of exactly `length` letters."""
    if length == 0:
        yield ()
        return
    for w in iter_words(letters, length - 1):
        for x in letters:
            yield w + (x,)
