import itertools

import pytest

from conftest import TOGGLE
from oracles import TreeInterpreter, brute_force_initial, clamp, encode_dict, naive_reachable
from swapmc import bundled
from swapmc.model import EnumDomain, IntRange, NondetAssign, BoolLit, SKIP
from swapmc.parser import parse_expr, parse_model
from swapmc.semantics import (
    RangeError, ResourceLimitError, Semantics, VacuousModelError, build_graph, enabled_actions,
    eval_expr, exec_statement, initial_states, successors,
)

CLOCK = """
type Time = {0..20}
time : Time
init_cond = time == 0
transitions time := time + 1
"""


def _escrow_state(sem, **overrides):
    values = dict(done=False, depositedA=False, holdera="AliceH", depositedB=False,
                  holderb="BobH", strategyA="Cooperate", strategyB="Cooperate", turn="AliceP",
                  playedCoopA=True, playedCoopB=True)
    values.update(overrides)
    return sem.encode(values)


@pytest.fixture(scope="module")
def esem(escrow):
    return Semantics(escrow)


@pytest.fixture(scope="module")
def hsem(htlc):
    return Semantics(htlc)


@pytest.fixture(scope="module")
def escrow_graph(esem):
    return build_graph(esem)


@pytest.fixture(scope="module")
def htlc_graph(hsem):
    return build_graph(hsem)


class TestEval:
    def test_initial_holder(self, esem):
        s = esem.initial_states()[0]
        assert esem.eval_expr(parse_expr("holdera == AliceH"), s) is True

    def test_neg_true(self, esem):
        s = esem.initial_states()[0]
        assert esem.eval_expr(parse_expr("neg True"), s) is False

    def test_action_proposition(self, esem):
        s = esem.initial_states()[0]
        prof = esem.profile({"Alice": "Deposit", "Bob": "Skip"})
        assert esem.eval_expr(parse_expr("Alice.Deposit"), s, prof)
        assert not esem.eval_expr(parse_expr("Bob.Deposit"), s, prof)

    def test_primed_reads_candidate(self):
        m = parse_model("x : Bool\ninit_cond = x\ntransitions [[ x | x' /= x ]]")
        sem = Semantics(m)
        e = m.transitions.condition
        assert sem.eval_expr(e, (True,), None, (False,))
        assert not sem.eval_expr(e, (True,), None, (True,))

    @pytest.mark.parametrize("op,delta", [("+", 1), ("-", 1), ("+", 7), ("-", 13)])
    def test_saturation_matches_clamp(self, op, delta):
        sem = Semantics(parse_model(CLOCK))
        e = parse_expr(f"time {op} {delta}")
        for v in range(21):
            want = clamp(v + delta if op == "+" else v - delta, 0, 20)
            assert sem.eval_expr(e, (v,)) == want

    def test_saturated_successor(self):
        sem = Semantics(parse_model(CLOCK))
        assert {t for _, t in sem.successors((20,))} == {(20,)}

    def test_strict_mode_raises(self):
        sem = Semantics(parse_model(CLOCK), strict=True)
        with pytest.raises(RangeError):
            sem.successors((20,))
        assert {t for _, t in sem.successors((19,))} == {(20,)}

    def test_module_level_wrapper(self, escrow):
        sem = Semantics(escrow)
        s = sem.initial_states()[0]
        assert eval_expr(parse_expr("turn == AliceP \\/ turn == BobP"), s, m=escrow) is True

    def test_interpreter_agrees_on_every_guard(self, escrow, esem):
        """Every guard of the transition block, evaluated on a sample of states
        and profiles, agrees with the tree interpreter."""
        it = TreeInterpreter(escrow)
        guards = [g for g, _ in escrow.transitions.body[0].branches]
        for g in escrow.transitions.body[0].branches:
            guards += [h for h, _ in g[1].branches]
        states = sorted(esem.initial_states())
        for s in states:
            d = {k: v for k, v in esem.decode(s).items()}
            for prof in it.profiles(d):
                p = esem.profile(prof)
                for g in guards:
                    assert esem.eval_expr(g, s, p) == it.ev(g, d, prof)


class TestInitialStates:
    def test_escrow_count_and_content(self, escrow, esem):
        got = set(esem.initial_states())
        assert got == brute_force_initial(escrow)
        assert len(got) == 18
        for s in got:
            d = esem.decode(s)
            assert d["holdera"] == "AliceH" and d["holderb"] == "BobH"
            assert d["playedCoopA"] and d["playedCoopB"]
            assert not (d["done"] or d["depositedA"] or d["depositedB"])

    def test_htlc_count(self, htlc, hsem):
        got = set(hsem.initial_states())
        assert got == brute_force_initial(htlc)
        assert len(got) == 9
        for s in got:
            d = hsem.decode(s)
            assert (d["time"], d["timeoutA"], d["timeoutB"], d["turn"]) == (0, 8, 6, "AliceP")

    def test_false_init_is_empty(self):
        m = parse_model("x : Bool\ninit_cond = False\ntransitions skip")
        assert initial_states(m) == []
        with pytest.raises(VacuousModelError):
            build_graph(m)

    def test_free_variables_range_over_domain(self):
        m = parse_model("type C = {R,G,B}\nx : Bool\nc : C\ninit_cond = x\ntransitions skip")
        assert len(initial_states(m)) == 3

    def test_canonical_order(self, esem):
        init = esem.initial_states()
        assert init == sorted(init)


class TestEnabledActions:
    def test_cooperate_deposits(self, escrow, esem):
        s = _escrow_state(esem)
        assert enabled_actions(escrow, "Alice", s) == ["Deposit"]

    def test_random_offers_everything(self, esem):
        s = _escrow_state(esem, strategyA="Random")
        assert set(esem.enabled_actions("Alice", s)) == {"Deposit", "Cancel", "Finalize", "Skip", "GiveToOther"}

    def test_recover_without_deposit_skips(self, esem):
        s = _escrow_state(esem, strategyA="Recover")
        assert esem.enabled_actions("Alice", s) == ["Skip"]

    def test_bindings_are_per_agent(self, esem):
        s = _escrow_state(esem, strategyB="Recover", depositedB=True, holderb="Contract")
        assert esem.enabled_actions("Bob", s) == ["Cancel"]
        assert esem.enabled_actions("Alice", s) == ["Deposit"]

    def test_matches_interpreter_everywhere(self, escrow, esem, escrow_graph):
        it = TreeInterpreter(escrow)
        for s in escrow_graph.states:
            d = esem.decode(s)
            for a in ("Alice", "Bob"):
                assert esem.enabled_actions(a, s) == it.enabled(a, d)

    def test_nested_protocol_choice_without_match_skips(self, hsem):
        s = hsem.encode(dict(holdera="ContractA", holderb="BobH", strategyA="Cooperate",
                             strategyB="Cooperate", turn="AliceP", time=0,
                             viewSecretA="Known", viewSecretB="Unknown", depositedA=True,
                             depositedB=False, timeoutA=8, timeoutB=6, playedCoopA=True,
                             playedCoopB=True))
        assert hsem.enabled_actions("Alice", s) == ["Skip"]


class TestExecStatement:
    def test_nondet_bool(self):
        m = parse_model("x : Bool\ninit_cond = x\ntransitions skip")
        st = NondetAssign(("x",), BoolLit(True))
        for s in [(False,), (True,)]:
            assert exec_statement(m, st, s, ()) == {(False,), (True,)}

    def test_skip(self, escrow, esem):
        s = esem.initial_states()[0]
        assert exec_statement(escrow, SKIP, s, esem.profile({})) == {s}

    def test_deposit_step(self, escrow, esem):
        s = _escrow_state(esem)
        prof = esem.profile({"Alice": "Deposit", "Bob": "Deposit"})
        got = esem.exec_statement(escrow.transitions, s, prof)
        it = TreeInterpreter(escrow)
        want = {encode_dict(it, t) for t in it.run(escrow.transitions, esem.decode(s), esem.profile_dict(prof))}
        assert got == want
        assert len(got) == 18
        for t in got:
            d = esem.decode(t)
            assert d["depositedA"] and d["holdera"] == "Contract"

    def test_guarded_choice_without_match_is_skip(self):
        m = parse_model("x : Bool\ninit_cond = x\ntransitions if neg x -> x := True fi")
        sem = Semantics(m)
        assert sem.exec_statement(m.transitions, (True,), ()) == {(True,)}

    def test_union_of_true_branches(self):
        m = parse_model("type C = {R,G,B}\nc : C\ninit_cond = c == R\n"
                        "transitions if True -> c := G [] c == R -> c := B [] otherwise -> skip fi")
        sem = Semantics(m)
        assert sem.exec_statement(m.transitions, (0,), ()) == {(1,), (2,)}
        assert sem.exec_statement(m.transitions, (1,), ()) == {(1,)}

    def test_sequence_reads_intermediate_state(self):
        m = parse_model("a : Bool\nb : Bool\ninit_cond = True\ntransitions begin a := True ; b := a end")
        sem = Semantics(m)
        assert sem.exec_statement(m.transitions, (False, False), ()) == {(True, True)}

    def test_nondet_with_primed_relation(self):
        m = parse_model("type T = {0..3}\nn : T\ninit_cond = n == 0\ntransitions [[ n | n' > n ]]")
        sem = Semantics(m)
        assert sem.exec_statement(m.transitions, (1,), ()) == {(2,), (3,)}
        assert sem.exec_statement(m.transitions, (3,), ()) == set()


class TestSuccessors:
    def test_skip_model(self):
        m = parse_model(TOGGLE.replace("x := neg x", "skip"))
        assert successors(m, (True,)) == {((), (True,))}

    def test_skip_with_agents_gives_profiles_times_state(self, esem, escrow):
        import dataclasses
        m = dataclasses.replace(escrow, transitions=SKIP)
        sem = Semantics(m)
        s = _escrow_state(sem, strategyA="Random", strategyB="Random")
        succ = sem.successors(s)
        assert {t for _, t in succ} == {s}
        assert len(succ) == 25

    def test_random_random_has_25_profiles(self, escrow, esem):
        s = _escrow_state(esem, strategyA="Random", strategyB="Random")
        profiles = {p for p, _ in esem.successors(s)}
        want = set(itertools.product(esem.enabled_actions("Alice", s), esem.enabled_actions("Bob", s)))
        assert profiles == want
        assert len(profiles) == 25

    def test_matches_interpreter_on_all_reachable(self, escrow, esem, escrow_graph):
        it = TreeInterpreter(escrow)
        for s in escrow_graph.states[::7]:
            want = {(tuple(p[a] for a in esem.agents), encode_dict(it, t))
                    for p, t in it.successors(esem.decode(s))}
            assert esem.successors(s) == want

    def test_htlc_time_saturates(self, htlc, hsem):
        it = TreeInterpreter(htlc)
        for s in hsem.initial_states():
            d = dict(hsem.decode(s), time=20)
            s20 = hsem.encode(d)
            got = hsem.successors(s20)
            assert got
            assert all(hsem.decode(t)["time"] == 20 for _, t in got)
            want = {(tuple(p[a] for a in hsem.agents), encode_dict(it, t)) for p, t in it.successors(d)}
            assert got == want

    def test_first_profile_is_a_real_profile(self, esem, escrow_graph):
        for i, j in list(escrow_graph.edges())[::50]:
            s, t = escrow_graph.states[i], escrow_graph.states[j]
            p = esem.first_profile(s, t)
            assert (p, t) in esem.successors(s)
            assert p in esem.profiles_between(s, t)


class TestGraph:
    def test_toggle(self, toggle):
        g = build_graph(toggle)
        assert (g.n_nodes, g.n_edges) == (2, 2)
        assert g.initial == [g.index[(True,)]]

    def test_escrow_matches_naive_fixpoint(self, escrow, escrow_graph):
        states, pairs, labelled = naive_reachable(escrow)
        assert set(escrow_graph.states) == states
        assert {(escrow_graph.states[i], escrow_graph.states[j]) for i, j in escrow_graph.edges()} == pairs
        assert escrow_graph.labelled_edges == labelled
        # frozen from the oracle run above
        assert (escrow_graph.n_nodes, escrow_graph.n_edges, escrow_graph.labelled_edges) == (594, 15012, 58212)

    def test_shrunken_htlc_matches_naive_fixpoint(self, htlc):
        m = bundled.set_time_bound(htlc, 10)
        m = bundled.set_init_constant(bundled.set_init_constant(m, "timeoutA", 4), "timeoutB", 3)
        g = build_graph(m)
        states, pairs, labelled = naive_reachable(m)
        assert set(g.states) == states
        assert {(g.states[i], g.states[j]) for i, j in g.edges()} == pairs
        assert g.labelled_edges == labelled
        assert (g.n_nodes, g.n_edges, g.labelled_edges) == (7866, 108324, 450576)

    def test_labelled_edge_list_count(self, escrow_graph):
        assert sum(1 for _ in escrow_graph.labelled_edge_list()) == escrow_graph.labelled_edges

    @pytest.mark.parametrize("model_id", ["escrow", "htlc"])
    def test_thread_count_does_not_change_graph(self, model_id):
        m = bundled.load(model_id)
        graphs = [build_graph(m, workers=w) for w in (1, 2, 8)]
        base = graphs[0]
        for g in graphs[1:]:
            assert g.states == base.states
            assert g.succ == base.succ
            assert g.initial == base.initial
            assert g.labelled_edges == base.labelled_edges

    def test_node_budget(self, escrow):
        with pytest.raises(ResourceLimitError):
            build_graph(escrow, node_budget=100)

    def test_dot_is_deterministic(self, escrow):
        a, b = build_graph(escrow).to_dot(), build_graph(escrow).to_dot()
        assert a == b
        assert a.count("[label=\"done=") == 594


class TestInvariants:
    def test_escrow_asset_conservation(self, esem, escrow_graph):
        for s in escrow_graph.states:
            d = esem.decode(s)
            assert (not d["depositedA"]) or d["holdera"] == "Contract"
            assert (not d["depositedB"]) or d["holderb"] == "Contract"

    @pytest.mark.parametrize("which", ["escrow", "htlc"])
    def test_domain_closure(self, which, escrow_graph, htlc_graph):
        g = escrow_graph if which == "escrow" else htlc_graph
        for s in g.states:
            assert g.sem.in_domain(s)
        for d, col in zip(g.sem.domains, zip(*g.states)):
            if isinstance(d, IntRange):
                assert d.lo <= min(col) and max(col) <= d.hi
            elif isinstance(d, EnumDomain):
                assert set(col) <= set(range(len(d.constants)))

    @pytest.mark.parametrize("which", ["escrow", "htlc"])
    def test_totality(self, which, escrow_graph, htlc_graph):
        g = escrow_graph if which == "escrow" else htlc_graph
        assert g.deadlocks() == []

    def test_graph_invariants(self, escrow_graph):
        g = escrow_graph
        assert g.states == sorted(g.states)
        assert set(g.initial) <= set(range(g.n_nodes))
        # every node reachable from the initial set
        seen, todo = set(g.initial), list(g.initial)
        while todo:
            for j in g.succ[todo.pop()]:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        assert len(seen) == g.n_nodes
