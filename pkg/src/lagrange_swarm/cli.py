"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 numerical divergence,
3 structural failure (no spanning tree).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, graph as graphmod, observer, sim, verify
from .errors import LagrangeSwarmError, NonFiniteState, NoSpanningTree

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_STRUCTURE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lagrange-swarm",
                description="Leaderless consensus of networked two-link arms "
                            "with adaptive internal-model disturbance rejection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="suppress warnings on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", parents=[common], help="simulate a scenario and write trace.csv, "
                                   "summary.json and plots.gp")
    r.add_argument("scenario", help="scenario JSON file")
    r.add_argument("-o", "--out-dir", default=".", help="output directory (default: .)")
    r.add_argument("--override", action="append", default=[], metavar="PATH=VALUE",
                   help="patch the scenario by dotted path, e.g. gains.alpha=6 "
                        "(repeatable; VALUE is parsed as JSON)")
    r.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $LAGRANGE_SWARM_THREADS or all cores)")

    v = sub.add_parser("verify", parents=[common], help="run an oracle property suite")
    v.add_argument("suite", choices=("all",) + verify.SUITES, help="suite to run")
    v.add_argument("--seed", type=int, default=0, help="random seed for sampled checks")

    a = sub.add_parser("analyze-graph", parents=[common], help="spanning tree, left null vector, "
                                             "group model and observer gain report")
    a.add_argument("scenario", help="scenario JSON file")

    s = sub.add_parser("synth-im", parents=[common], help="print the internal-model data of every agent")
    s.add_argument("scenario", help="scenario JSON file")
    s.add_argument("--agent", type=int, default=None, help="only this agent (1-based)")

    rp = sub.add_parser("report", parents=[common], help="full pre-simulation analysis as JSON")
    rp.add_argument("scenario", help="scenario JSON file")
    return p


def _fmt(x) -> str:
    return np.array2string(np.asarray(x), precision=6, suppress_small=True,
                           max_line_width=100)


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario {path}: {exc.strerror}") from None


def _load(path, overrides=()):
    text = _read(path)
    if overrides:
        return sim.load_scenario(sim.apply_overrides(sim.parse_document(text), overrides))
    return sim.load_scenario(text)


def cmd_run(args) -> int:
    sc = _load(args.scenario, args.override)
    out = sim.run(sc, threads=args.threads)
    summary = sim.write_outputs(sc, out, args.out_dir)
    if not out.completed:
        print(f"error: {out.error}", file=sys.stderr)
        return EXIT_DIVERGED
    fe = summary["final_errors"]
    print(f"completed t={summary['t_final']:g}s  max|e|={fe['max_e_norm']:.3e}  "
          f"max|edot|={fe['max_edot_norm']:.3e}  max|s|={fe['max_s_norm']:.3e}")
    print(f"wrote {Path(args.out_dir) / sc.outputs.get('csv', 'trace.csv')}, summary.json, "
          f"plots.gp")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify.run_suites((args.suite,), seed=args.seed)
    print(verify.format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_USAGE


def cmd_analyze_graph(args) -> int:
    doc = sim.parse_document(_read(args.scenario))
    g = sim.graph_from_document(doc)
    an = graphmod.analyze(g)
    print(f"agents: {g.n_agents}")
    print(f"spanning tree: {'yes' if an.has_spanning_tree else 'no'}")
    if not an.has_spanning_tree:
        return EXIT_STRUCTURE
    print(f"u: {_fmt(an.left_null_vector)}")
    print(f"lambda1: {an.lambda1:.6g}")
    print(f"||L||_2: {an.laplacian_norm:.6g}")
    S0 = np.array([a["S0"] for a in doc["agents"]], dtype=float)
    gm = observer.s_star(S0, an.left_null_vector)
    print(f"S*:\n{_fmt(gm.S_star)}")
    print(f"eig(S*): {_fmt(np.linalg.eigvals(gm.S_star))}")
    if g.n_agents > 1:
        gains = doc.get("gains", {})
        mu1, mu2 = float(gains.get("mu1", np.nan)), float(gains.get("mu2", np.nan))
        rep = observer.check_gain_conditions(mu1, mu2, an.laplacian_norm, an.lambda1,
                                             float(np.linalg.norm(gm.S_star, 2)))
        print(f"mu1={mu1:g} >= {rep.mu1_bound:.6g}: {'ok' if rep.mu1_ok else 'violated'}")
        print(f"mu2={mu2:g} >  {rep.mu2_bound:.6g}: {'ok' if rep.mu2_ok else 'violated'}")
    if observer.unstable_group_model(gm.S_star):
        print("warning: group model is unstable")
    return EXIT_OK


def cmd_synth_im(args) -> int:
    sc = _load(args.scenario)
    idx = range(sc.n_agents) if args.agent is None else [args.agent - 1]
    for i in idx:
        if not 0 <= i < sc.n_agents:
            raise ValueError(f"agent {i + 1} out of range 1..{sc.n_agents}")
        c = sc.compensators[i]
        print(f"agent {i + 1}: n_i={c.n_i} l={c.l} omega_hat dim={5 + 6 * c.l}")
        for s, ch in enumerate(c.channels):
            print(f"  channel {s + 1}: r={ch.r} cond(T_sigma)={ch.cond_T_sigma:.3g} "
                  f"cond(T_zero)={ch.cond_T_zero:.3g}")
            print("    Phi_sigma =\n" + _indent(_fmt(ch.Phi_sigma), 6))
            print("    T_sigma =\n" + _indent(_fmt(ch.T_sigma), 6))
        print("  M =\n" + _indent(_fmt(c.M), 4))
        print("  A =\n" + _indent(_fmt(c.A), 4))
        print("  B =\n" + _indent(_fmt(c.B), 4))
        print("  A - B =\n" + _indent(_fmt(c.A - c.B), 4))
        print(f"  rho = {_fmt(c.rho_small)}")
    return EXIT_OK


def _indent(text, n):
    return "\n".join(" " * n + line for line in text.splitlines())


def cmd_report(args) -> int:
    sc = _load(args.scenario)
    an = sc.analysis
    rep = {
        "scenario": sc.name,
        "agents": sc.n_agents,
        "graph": {"edges": [list(e) for e in sc.graph.edges()],
                  "left_null_vector": an.left_null_vector.tolist(),
                  "lambda1": an.lambda1, "laplacian_norm": an.laplacian_norm,
                  "eigenvalues": [[z.real, z.imag] for z in an.eigenvalues]},
        "group_model": {"S_star": sc.group_model.S_star.tolist(),
                        "decay_rate_S": sc.group_model.decay_rate_S},
        "gain_report": None if sc.gain_report is None else {
            k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
            for k, v in vars(sc.gain_report).items()},
        "agents_detail": [
            {"n_i": c.n_i, "l": c.l, "rho": c.rho_small.tolist(), "A": c.A.tolist(),
             "B": c.B.tolist(), "inertia_eigen_bounds": list(b)}
            for c, b in zip(sc.compensators, sc.inertia_bounds)],
        "state_dimension": sc.layout.dim,
        "warnings": sc.warnings,
    }
    print(json.dumps(rep, indent=2, default=float))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "analyze-graph": cmd_analyze_graph,
            "synth-im": cmd_synth_im, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="warning: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NonFiniteState as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NoSpanningTree as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except (LagrangeSwarmError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
