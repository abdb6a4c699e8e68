"""Command-line front end: check, graph, simulate, stats.

Exit status: 0 when every selected spec holds (or the command succeeded),
1 when some spec is refuted, 2 on load, validation, usage or budget errors.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bundled import BUNDLED
from .checker import ModelChecker, Outcome, UnknownSpecError
from .model import ModelError, ModelIR, validate_model
from .parser import ParseError, parse_model
from .semantics import ResourceLimitError, Semantics, VacuousModelError, build_graph

EXIT_OK, EXIT_REFUTED, EXIT_ERROR = 0, 1, 2


class LoadError(Exception):
    pass


def load_model(path: str) -> ModelIR:
    """Load and validate a model file; a bundled model id such as `escrow`
    or `htlc-reversed` is accepted when no file of that name exists."""
    p = Path(path)
    if not p.exists() and path in BUNDLED:
        return BUNDLED[path].load()
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"{path}: cannot read model: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise LoadError(f"{path}: not UTF-8 text") from None
    try:
        m = parse_model(text)
    except ParseError as exc:
        raise LoadError(f"{path}:{exc.span}: {exc.message}") from None
    except RecursionError:
        raise LoadError(f"{path}: input nested too deeply") from None
    try:
        report = validate_model(m)
    except RecursionError:
        raise LoadError(f"{path}: expression nested too deeply") from None
    if not report.ok:
        raise LoadError("\n".join(f"{path}:{d}" for d in report.errors))
    for d in report.warnings:
        print(f"{path}:{d} (warning)", file=sys.stderr)
    return m


def _first_line(label: str) -> str:
    return " ".join(label.split())


def _print_trace(sem: Semantics, trace, out) -> None:
    prev = None
    steps = [("prefix", s, p) for s, p in trace.prefix] + [("cycle", s, p) for s, p in trace.cycle]
    for k, (part, s, p) in enumerate(steps):
        vals = sem.decode(s)
        if prev is None:
            delta = ", ".join(f"{n}={v}" for n, v in vals.items())
        else:
            delta = ", ".join(f"{n}={v}" for n, v in vals.items() if prev[n] != v) or "(no change)"
        marker = "  loop ->" if part == "cycle" and (k == len(trace.prefix)) else "         "
        acts = " ".join(f"{a}={x}" for a, x in sem.profile_dict(p).items())
        print(f"{marker} [{k}] {delta}", file=out)
        print(f"              actions: {acts}", file=out)
        prev = vals
    print("          (cycle repeats from the loop marker)", file=out)


def cmd_check(args) -> int:
    m = load_model(args.model)
    mc = ModelChecker(m, node_budget=args.node_budget, product_budget=args.product_budget,
                      workers=args.workers)
    selectors = [args.spec] if args.spec else list(range(1, len(m.specs) + 1))
    if not selectors:
        raise LoadError(f"{args.model}: model has no specifications")
    verdicts = [mc.check(sel) for sel in selectors]
    if args.json:
        docs = [v.to_json(mc.sem, args.model) for v in verdicts]
        print(json.dumps(docs, indent=2))
    else:
        for v in verdicts:
            st = v.stats
            print(f"{v.outcome.value:8s} {_first_line(v.label)}")
            print(f"         states={st.get('states')} product_states={st.get('product_states')} "
                  f"millis={st.get('millis')}")
            for w in v.warnings:
                print(f"         warning: {w}")
            if v.trace is not None:
                _print_trace(mc.sem, v.trace, sys.stdout)
        held = sum(v.holds for v in verdicts)
        print(f"{held} hold, {len(verdicts) - held} refuted")
    return EXIT_REFUTED if any(v.outcome == Outcome.REFUTED for v in verdicts) else EXIT_OK


def cmd_graph(args) -> int:
    m = load_model(args.model)
    g = build_graph(m, node_budget=args.node_budget, workers=args.workers)
    dot = g.to_dot()
    if args.dot:
        Path(args.dot).write_text(dot, encoding="utf-8")
        print(f"nodes: {g.n_nodes} edges: {g.n_edges}")
    else:
        sys.stdout.write(dot)
        print(f"nodes: {g.n_nodes} edges: {g.n_edges}", file=sys.stderr)
    return EXIT_OK


def simulate(m: ModelIR, steps: int, seed: Optional[int]) -> list[str]:
    """Transcript of a seeded random walk of `steps` transitions."""
    sem = Semantics(m)
    rng = random.Random(seed)
    init = sem.initial_states()
    if not init:
        raise VacuousModelError("init_cond admits no state")
    s = rng.choice(init)
    lines = ["init: " + ", ".join(f"{k}={v}" for k, v in sem.decode(s).items())]
    for k in range(1, steps + 1):
        choices = sorted(sem.successors(s))
        if not choices:
            lines.append(f"step {k}: deadlock")
            break
        prof, t = rng.choice(choices)
        before, after = sem.decode(s), sem.decode(t)
        delta = ", ".join(f"{n}: {before[n]} -> {after[n]}" for n in after if before[n] != after[n])
        acts = " ".join(f"{a}={x}" for a, x in sem.profile_dict(prof).items())
        lines.append(f"step {k}: [{acts}] {delta or '(no change)'}")
        s = t
    return lines


def cmd_simulate(args) -> int:
    m = load_model(args.model)
    for line in simulate(m, args.steps, args.seed):
        print(line)
    return EXIT_OK


def cmd_stats(args) -> int:
    m = load_model(args.model)
    sem = Semantics(m)
    print("variables:")
    for name, d in zip(sem.var_names, sem.domains):
        print(f"  {name} : {d.name} ({len(d.values())} values)")
    init = sem.initial_states()
    print(f"initial states: {len(init)}")
    if init:
        g = build_graph(sem, node_budget=args.node_budget, workers=args.workers)
        print(f"reachable nodes: {g.n_nodes}")
        print(f"reachable edges: {g.n_edges}")
        print(f"labelled edges: {g.labelled_edges}")
    return EXIT_OK


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swapmc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="path to a .swapmc model")
        p.add_argument("--node-budget", type=_positive, default=5_000_000)
        p.add_argument("--workers", type=_positive, default=1,
                       help="threads used to expand the exploration frontier")

    p = sub.add_parser("check", help="verify specifications")
    common(p)
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--spec", help="spec label (whitespace-insensitive) or #n for the n-th spec")
    sel.add_argument("--all", action="store_true", help="check every spec (the default)")
    p.add_argument("--json", action="store_true", help="emit a JSON list of verdicts")
    p.add_argument("--product-budget", type=_positive, default=20_000_000)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("graph", help="export the reachable graph as DOT")
    common(p)
    p.add_argument("--dot", help="output path (default: stdout)")
    p.set_defaults(run=cmd_graph)

    p = sub.add_parser("simulate", help="print a seeded random run")
    common(p)
    p.add_argument("--steps", type=_positive, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("stats", help="state-space statistics")
    common(p)
    p.set_defaults(run=cmd_stats)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except LoadError as exc:
        print(exc, file=sys.stderr)
    except (UnknownSpecError, ResourceLimitError, VacuousModelError, ModelError) as exc:
        print(f"{args.model}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
