import random

import pytest
from hypothesis import given, settings, strategies as st

from generators import ModelGen
from swapmc import ltl
from swapmc.bundled import BUNDLED, MODEL_DIR
from swapmc.model import (
    ActionProp, BinOp, GuardedChoice, IntLit, ModelIR, Name, NondetAssign, Not, Primed, Seq, SKIP,
)
from swapmc.parser import (
    MAX_NESTING, ParseError, format_ltl, parse_expr, parse_formula, parse_model, pretty_print,
    tokenize, try_parse_model,
)

ESCROW_LABELS = [
    "If Alice and Bob always play Cooperate, \n                     then eventually the swap is successful",
    "If Alice has always cooperated to now, then she can get an asset back \n"
    "                     by playing recover, awaiting such time as the swap has occurred",
    "If Bob has always cooperated to now, then he can get an asset back \n"
    "                     by playing recover, awaiting such time as the swap has occurred",
    "(FALSE) Alice is always able to ensure that she will eventually hold asset a, \n"
    "                      by playing strategy Recover",
    "(FALSE) Bob is always able to ensure that he will eventually hold asset b, \n"
    "                      by playing strategy Recover",
]
HTLC_LABELS = [
    "If Alice and Bob always play Cooperate, \n                     then eventually the swap is successful",
    "If Alice always cooperates, she is always eventually safe",
    "If Bob always cooperates, he is always eventually safe",
]


def _text(name):
    return (MODEL_DIR / name).read_text(encoding="utf-8")


P, Q, R = (ltl.Atom(Name(n)) for n in "pqr")


class TestBundledScripts:
    def test_escrow_shape(self, escrow):
        assert len(escrow.agents) == 2
        assert len(escrow.protocols) == 1
        assert len(escrow.specs) == 5
        assert len(escrow.fairness) == 2

    def test_htlc_shape(self, htlc):
        assert len(htlc.agents) == 2
        assert len(htlc.protocols) == 2
        assert len(htlc.specs) == 3
        assert len(htlc.fairness) == 0

    def test_labels_verbatim(self, escrow, htlc):
        assert [s.label for s in escrow.specs] == ESCROW_LABELS
        assert [s.label for s in htlc.specs] == HTLC_LABELS

    def test_transitions_structure(self, escrow):
        body = escrow.transitions
        assert isinstance(body, Seq) and len(body.body) == 4
        assert isinstance(body.body[0], GuardedChoice)
        assert body.body[3] == NondetAssign(("strategyA", "strategyB", "turn"), parse_expr("True"))

    def test_comments_discarded(self):
        text = _text("escrow.swapmc")
        stripped = "\n".join(line.split("--")[0] for line in text.splitlines())
        assert parse_model(stripped) == parse_model(text)

    @pytest.mark.parametrize("name", ["escrow.swapmc", "htlc.swapmc"])
    def test_round_trip(self, name):
        m = parse_model(_text(name))
        assert parse_model(pretty_print(m)) == m

    def test_print_is_a_fixpoint(self, escrow):
        once = pretty_print(escrow)
        assert pretty_print(parse_model(once)) == once


class TestLexer:
    def test_nested_block_comment(self):
        m = parse_model("{- outer {- inner -} still outer -}\nx : Bool\ninit_cond = x\ntransitions skip")
        assert [v.name for v in m.vars] == ["x"]

    def test_unterminated_block_comment(self):
        with pytest.raises(ParseError, match="unterminated"):
            parse_model("{- {- -}")

    def test_string_escapes(self):
        m = parse_model('x : Bool\ninit_cond = x\ntransitions skip\nspec_obs = "a \\"q\\" \\\\ b" A(G x)')
        assert m.specs[0].label == 'a "q" \\ b'

    def test_multiline_label(self):
        m = parse_model('x : Bool\ninit_cond = x\ntransitions skip\nspec_obs = "one\n   two" A(G x)')
        assert m.specs[0].label == "one\n   two"

    def test_spans_are_one_based(self):
        toks = tokenize("x : Bool\n  y")
        assert (toks[0].span.line, toks[0].span.column) == (1, 1)
        assert (toks[3].span.line, toks[3].span.column) == (2, 3)


class TestErrors:
    def test_empty_input(self):
        with pytest.raises(ParseError) as exc:
            parse_model("")
        assert "expected declaration" in exc.value.message
        assert exc.value.span.line == 1 and exc.value.span.column == 1

    def test_error_span_points_at_token(self):
        with pytest.raises(ParseError) as exc:
            parse_model("x : Bool\ninit_cond = x ==\n")
        assert exc.value.span.line >= 2
        assert exc.value.message

    def test_bang_spelling_rejected(self):
        with pytest.raises(ParseError):
            parse_expr("!x")
        with pytest.raises(ParseError):
            parse_expr("x != y")

    def test_nested_path_quantifier(self):
        with pytest.raises(ParseError, match="path quantifier only at top level"):
            parse_formula("A(G A(F p))")

    def test_formula_requires_quantifier(self):
        with pytest.raises(ParseError):
            parse_formula("G p")

    def test_primed_outside_nondet(self):
        with pytest.raises(ParseError):
            parse_model("x : Bool\ninit_cond = x'\ntransitions skip")

    def test_action_proposition_in_spec(self):
        with pytest.raises(ParseError):
            parse_formula("A(G Alice.Deposit)")

    def test_deep_nesting_is_an_error_not_a_crash(self):
        with pytest.raises(ParseError, match="nesting"):
            parse_model("init_cond = " + "(" * (MAX_NESTING + 5) + "x" + ")" * (MAX_NESTING + 5))

    def test_try_parse_returns_errors(self):
        out = try_parse_model("type")
        assert isinstance(out, list) and isinstance(out[0], ParseError)


class TestFormulas:
    def test_g_f(self):
        assert parse_formula("A(G F alice_safe)").body == ltl.Always(ltl.Eventually(ltl.Atom(Name("alice_safe"))))

    def test_until_binds_tighter_than_or(self):
        assert parse_formula("A(p U q \\/ r)").body == ltl.Or(ltl.Until(P, Q), R)

    def test_until_right_associative(self):
        assert parse_formula("A(p U q U r)").body == ltl.Until(P, ltl.Until(Q, R))

    def test_implies_right_associative(self):
        assert parse_formula("A(p => q => r)").body == ltl.Implies(P, ltl.Implies(Q, R))

    def test_and_binds_tighter_than_or(self):
        assert parse_formula("A(p \\/ q /\\ r)").body == ltl.Or(P, ltl.And(Q, R))

    def test_unary_temporal_takes_comparison(self):
        body = parse_formula("A(G strategyA == Cooperate)").body
        assert body == ltl.Always(ltl.Atom(BinOp("==", Name("strategyA"), Name("Cooperate"))))

    def test_neg_binds_looser_than_comparison(self):
        assert parse_expr("neg a == b") == Not(BinOp("==", Name("a"), Name("b")))

    def test_weak_until_desugars(self):
        body = parse_formula("A(a W b)").body
        a, b = ltl.Atom(Name("a")), ltl.Atom(Name("b"))
        assert body == ltl.Or(ltl.Until(a, b), ltl.Always(ltl.And(a, ltl.Neg(b))))

    def test_escrow_spec_shape(self, escrow):
        body = escrow.specs[0].formula.body
        assert isinstance(body, ltl.Implies)
        assert isinstance(body.left, ltl.Always) and isinstance(body.right, ltl.Eventually)

    def test_arithmetic_precedence(self):
        assert parse_expr("t + 1 >= n - 2") == BinOp(">=", BinOp("+", Name("t"), IntLit(1)),
                                                     BinOp("-", Name("n"), IntLit(2)))

    def test_action_and_primed(self):
        assert parse_expr("Alice.Deposit") == ActionProp("Alice", "Deposit")
        m = parse_model("x : Bool\ninit_cond = x\ntransitions [[ x | x' /= x ]]")
        assert m.transitions.condition == BinOp("/=", Primed("x"), Name("x"))

    def test_format_ltl_round_trip(self, escrow, htlc):
        for m in (escrow, htlc):
            for s in m.specs:
                assert parse_formula(f"A({format_ltl(s.formula.body)})") == s.formula


class TestRoundTrip:
    def test_skip_transitions_model(self):
        m = parse_model("x : Bool\ninit_cond = x\ntransitions skip")
        assert m.transitions == SKIP
        assert parse_model(pretty_print(m)) == m

    def test_negative_literals(self):
        # "{-" would open a block comment, hence the space
        m = parse_model("type T = { -2..2}\nn : T\ninit_cond = n == -1\ntransitions n := n - 1")
        assert parse_model(pretty_print(m)) == m

    def test_generated_models(self):
        for seed in range(200):
            m = ModelGen(seed).model()
            text = pretty_print(m)
            assert parse_model(text) == m, f"seed {seed}:\n{text}"


# -- totality

_ALPHABET = st.sampled_from(list("xyAGFUW()[]{}-<>=/\\|:;.,'\"\n \t0123456789") +
                            ["neg", "if", "fi", "begin", "end", "type", "agent", "protocol",
                             "spec_obs", "init_cond", "transitions", "otherwise", "<<", ">>",
                             "{-", "-}", "--", "[[", "]]", ":=", "->"])


def _total(text: str) -> None:
    out = try_parse_model(text)
    assert isinstance(out, (ModelIR, list))


class TestTotality:
    @settings(max_examples=300, deadline=None)
    @given(st.lists(_ALPHABET, max_size=200).map("".join))
    def test_token_soup(self, text):
        _total(text)

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=300))
    def test_arbitrary_text(self, text):
        _total(text)

    def test_mutated_scripts(self):
        rng = random.Random(11)
        base = _text("htlc.swapmc")
        for _ in range(300):
            chars = list(base)
            for _ in range(rng.randint(1, 5)):
                k = rng.randrange(len(chars))
                op = rng.random()
                if op < 0.4:
                    del chars[k]
                elif op < 0.8:
                    chars.insert(k, rng.choice("()[]{}-<>=/\\|:;.,'\"x"))
                else:
                    chars[k] = rng.choice("()|;x ")
            _total("".join(chars))

    def test_megabyte_inputs(self):
        size = 1 << 20
        for unit in ("x : Bool\n", "((((", "neg ", "{- ", "a /\\ ", "\x00\xff", '"'):
            text = (unit * (size // len(unit) + 1))[:size]
            _total(text)
