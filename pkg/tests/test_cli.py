import json
import re
import subprocess
import sys

import jsonschema
import pytest

from conftest import TOGGLE
from swapmc import bundled
from swapmc.bundled import MODEL_DIR
from swapmc.checker import VERDICT_SCHEMA
from swapmc.cli import main, simulate
from swapmc.parser import pretty_print
from swapmc.semantics import build_graph

ESCROW = str(MODEL_DIR / "escrow.swapmc")
HTLC = str(MODEL_DIR / "htlc.swapmc")


@pytest.fixture
def toggle_file(tmp_path):
    p = tmp_path / "toggle.swapmc"
    p.write_text(TOGGLE, encoding="utf-8")
    return str(p)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestExitCodes:
    def test_escrow_refutes(self, capsys):
        code, out, _ = _run(capsys, "check", ESCROW, "--all")
        assert code == 1
        assert out.count("Holds") == 3 and out.count("Refuted") == 2
        assert "loop ->" in out
        assert out.rstrip().endswith("3 hold, 2 refuted")

    def test_htlc_holds(self, capsys):
        code, out, _ = _run(capsys, "check", HTLC)
        assert code == 0
        assert "states=16857" in out

    def test_missing_file(self, capsys):
        code, _, err = _run(capsys, "check", "missing.swapmc")
        assert code == 2
        assert "missing.swapmc" in err

    def test_parse_error_has_span(self, capsys, tmp_path):
        p = tmp_path / "bad.swapmc"
        p.write_text("x : Bool\ninit_cond = x ==\n", encoding="utf-8")
        code, _, err = _run(capsys, "check", str(p))
        assert code == 2
        assert re.search(r"bad\.swapmc:\d+:\d+", err)

    def test_validation_error(self, capsys, tmp_path):
        p = tmp_path / "bad.swapmc"
        p.write_text("x : Bool\ninit_cond = y\ntransitions skip\n", encoding="utf-8")
        assert _run(capsys, "check", str(p))[0] == 2

    def test_unknown_spec(self, capsys):
        code, _, err = _run(capsys, "check", ESCROW, "--spec", "#9")
        assert code == 2 and "#9" in err

    def test_single_spec_by_label(self, capsys):
        label = "If Alice and Bob always play Cooperate, then eventually the swap is successful"
        code, out, _ = _run(capsys, "check", ESCROW, "--spec", label)
        assert code == 0
        assert out.startswith("Holds")

    def test_bundled_id(self, capsys):
        code, out, _ = _run(capsys, "check", "htlc-reversed", "--spec", "#3")
        assert code == 1 and out.startswith("Refuted")

    def test_budget_exceeded(self, capsys):
        code, _, err = _run(capsys, "check", ESCROW, "--node-budget", "10")
        assert code == 2 and "budget" in err

    def test_steps_zero_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", ESCROW, "--steps", "0"])
        assert exc.value.code == 2

    def test_module_entry_point(self, toggle_file):
        r = subprocess.run([sys.executable, "-m", "swapmc", "check", toggle_file, "--spec", "#1"],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr

    def test_every_bundled_combination(self, capsys):
        for mid, b in bundled.BUNDLED.items():
            expected = b.expected()
            for k, label in enumerate(expected, 1):
                code, _, _ = _run(capsys, "check", mid, "--spec", f"#{k}")
                assert code == (1 if expected[label] == "Refuted" else 0), (mid, k)


class TestJson:
    def test_documents_validate(self, capsys):
        code, out, _ = _run(capsys, "check", ESCROW, "--json")
        docs = json.loads(out)
        assert code == 1 and len(docs) == 5
        for d in docs:
            jsonschema.validate(d, VERDICT_SCHEMA)
            assert d["model"] == ESCROW
        assert [d["outcome"] for d in docs] == ["Holds"] * 3 + ["Refuted"] * 2
        assert all(("trace" in d) == (d["outcome"] == "Refuted") for d in docs)

    def test_toggle_refutation(self, capsys, toggle_file):
        code, out, _ = _run(capsys, "check", toggle_file, "--spec", "always x", "--json")
        (doc,) = json.loads(out)
        jsonschema.validate(doc, VERDICT_SCHEMA)
        assert code == 1
        assert doc["trace"]["cycle"]


class TestGraph:
    def test_toggle(self, capsys, toggle_file, tmp_path):
        dot = tmp_path / "t.dot"
        code, out, _ = _run(capsys, "graph", toggle_file, "--dot", str(dot))
        assert code == 0
        assert out.strip() == "nodes: 2 edges: 2"
        assert dot.read_text().count("label=\"x=") == 2

    def test_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.dot", tmp_path / "b.dot"
        _run(capsys, "graph", ESCROW, "--dot", str(a))
        _run(capsys, "graph", ESCROW, "--dot", str(b), "--workers", "4")
        assert a.read_bytes() == b.read_bytes()

    def test_node_count_matches_build_graph(self, capsys, escrow):
        code, out, err = _run(capsys, "graph", ESCROW)
        n = build_graph(escrow).n_nodes
        assert len(re.findall(r"^\s*n\d+ \[", out, flags=re.M)) == n
        assert f"nodes: {n}" in err


class TestSimulate:
    def test_same_seed_same_transcript(self, capsys):
        a = _run(capsys, "simulate", ESCROW, "--steps", "30", "--seed", "1")[1]
        b = _run(capsys, "simulate", ESCROW, "--steps", "30", "--seed", "1")[1]
        assert a == b
        assert len(a.splitlines()) == 31

    def test_different_seeds_differ(self, escrow):
        runs = {tuple(simulate(escrow, 20, seed)) for seed in range(5)}
        assert len(runs) > 1

    def test_cooperative_runs_reach_swap(self, escrow):
        m = bundled.pin_variable(bundled.pin_variable(escrow, "strategyA", "Cooperate"),
                                 "strategyB", "Cooperate")
        swapped = 0
        for seed in range(100):
            text = "\n".join(simulate(m, 40, seed))
            if re.search(r"holdera: \w+ -> BobH", text) and re.search(r"holderb: \w+ -> AliceH", text):
                swapped += 1
        assert swapped > 0

    def test_step_lines(self, toggle):
        lines = simulate(toggle, 3, 0)
        assert lines == ["init: x=True", "step 1: [] x: True -> False",
                         "step 2: [] x: False -> True", "step 3: [] x: True -> False"]

    def test_pretty_printed_model_file(self, capsys, tmp_path, escrow):
        p = tmp_path / "e.swapmc"
        p.write_text(pretty_print(escrow), encoding="utf-8")
        assert _run(capsys, "simulate", str(p), "--steps", "5", "--seed", "3")[1] == \
            _run(capsys, "simulate", ESCROW, "--steps", "5", "--seed", "3")[1]


class TestStats:
    def test_escrow(self, capsys):
        code, out, _ = _run(capsys, "stats", ESCROW)
        assert code == 0
        assert "initial states: 18" in out
        assert "reachable nodes: 594" in out
        assert "reachable edges: 15012" in out
        assert "turn : Player (2 values)" in out

    def test_toggle(self, capsys, toggle_file):
        out = _run(capsys, "stats", toggle_file)[1]
        assert "reachable nodes: 2" in out and "reachable edges: 2" in out

    def test_htlc_repeatable(self, capsys):
        a = _run(capsys, "stats", HTLC)[1]
        b = _run(capsys, "stats", HTLC, "--workers", "2")[1]
        assert a == b
        assert "reachable nodes: 16857" in a
