"""Command-line interface.

Exit codes: 0 identified (or success), 2 FAIL / negative answer, 1 error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (BoundsError, BowData, CanonicalModel, Interval,
                     intervals_svg, nte_bounds_l1, nte_bounds_l2, nte_bounds_l25,
                     nte_query, polytope_bounds, read_table_csv, unit_selection)
from .dsl import DSLError, parse_conjunction, parse_query, parse_regime, parse_regimes, render_query
from .engine import EngineError, identify
from .estimand import EstimandError
from .expr import ExprError
from .graph import GraphError, parse_graph
from .layers import classify_layer, conflicting_ancestors
from .regime import RegimeError
from .scm import (OracleError, enumeration_cap, l3_valuation_mc, random_scm,
                  regime_distribution, sample_regime, scm_from_json, scm_to_json)
from .verify import oracle_value, verify_identification
from .witness import WitnessError, hedge_witness, thicket_witness

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
MIN_CAP = 2 ** 10
FIXTURES = Path(__file__).parent / "fixtures"

_ERRORS = (DSLError, GraphError, ExprError, RegimeError, EngineError, EstimandError,
           OracleError, WitnessError, BoundsError, OSError, ValueError, KeyError)


class CliError(Exception):
    pass


def _text_arg(value: str) -> str:
    """A path to a file, or the literal text itself."""
    p = Path(value)
    if len(value) < 512 and "\n" not in value and p.is_file():
        return p.read_text(encoding="utf-8")
    return value


def _graph(args):
    return parse_graph(_text_arg(args.graph))


def _query(args, G):
    lines = [ln.split("#", 1)[0].strip() for ln in _text_arg(args.query).splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) != 1:
        raise CliError("expected exactly one query")
    return parse_query(lines[0], G)


def _regimes(args, G):
    if not args.regimes:
        return parse_regimes("observe", G)
    out = []
    for r in args.regimes:
        for spec in parse_regimes(_text_arg(r), G):
            if spec not in out:
                out.append(spec)
    return out


def _apply_cap(args):
    if getattr(args, "cap", None) is not None:
        if args.cap < MIN_CAP:
            raise CliError(f"--cap must be at least {MIN_CAP}")
        os.environ["CTFID_CAP"] = str(args.cap)
    elif enumeration_cap() < MIN_CAP:
        raise CliError(f"CTFID_CAP must be at least {MIN_CAP}")


# -- commands ----------------------------------------------------------

def cmd_id(args) -> int:
    G = _graph(args)
    q = _query(args, G)
    regimes = _regimes(args, G)
    res = identify(G, q, regimes)
    if not res.identified:
        print(json.dumps(res.certificate.to_json(), indent=2))
        if args.log:
            print("\n".join(res.log), file=sys.stderr)
        return EXIT_FAIL
    if args.emit == "json":
        doc = res.to_json()
        doc["query"] = render_query(q)
        doc["regimes"] = [r.id for r in regimes]
        if args.log:
            doc["log"] = res.log
        print(json.dumps(doc, indent=2))
    else:
        print(res.text())
        if args.log:
            print("\n".join(res.log))
    if args.verify:
        n, seed = args.verify
        checks = verify_identification(G, q, regimes, res, n, seed)
        worst = max(c.error for c in checks)
        for c in checks:
            print(f"# verify seed={c.seed} estimate={c.estimate:.12f} oracle={c.truth:.12f} "
                  f"err={c.error:.2e}", file=sys.stderr)
        print(f"# verify: {n} SCMs, max error {worst:.2e}", file=sys.stderr)
        if worst > args.tol:
            print("verification mismatch", file=sys.stderr)
            return EXIT_ERROR
    return EXIT_OK


def cmd_classify(args) -> int:
    G = _graph(args)
    print(classify_layer(G, _query(args, G)))
    return EXIT_OK


def cmd_realizable(args) -> int:
    G = _graph(args)
    q = _query(args, G)
    bad = conflicting_ancestors(G, q.all_events)
    if not bad:
        print("realizable")
        return EXIT_OK
    print("not realizable")
    for a, b in bad:
        print(f"  ancestors contain both {a!r} and {b!r}")
    return EXIT_FAIL


def _model(args, G):
    if args.scm:
        return scm_from_json(_text_arg(args.scm))
    if G is None:
        raise CliError("need --scm or --graph")
    return random_scm(G, args.seed)


def cmd_oracle(args) -> int:
    G = _graph(args) if args.graph else None
    M = _model(args, G)
    G = G or M.diagram
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        if args.write_scm:
            Path(args.write_scm).write_text(scm_to_json(M), encoding="utf-8")
        if args.query:
            q = _query(args, G)
            if args.approx:
                if q.given is not None:
                    raise CliError("--approx supports unconditional queries only")
                p, se = l3_valuation_mc(M, q.joint.events, args.approx, args.seed)
                print(f"{render_query(q)} ~= {p:.6f} (se {se:.6f}, n={args.approx})", file=out)
            else:
                print(f"{render_query(q)} = {oracle_value(M, q):.12f}", file=out)
            return EXIT_OK
        spec = parse_regime(args.regime, G)
        if args.samples:
            header, rows = sample_regime(M, spec, args.samples, args.seed, G)
            print(",".join(header), file=out)
            for r in rows:
                print(",".join(str(int(v)) for v in r), file=out)
            return EXIT_OK
        t = regime_distribution(M, spec, G)
        tpl = t.template
        print(f"# {tpl!r}", file=out)
        print(",".join([s.name for s in tpl.axes] + ["p"]), file=out)
        for idx in np.ndindex(*t.array.shape):
            print(",".join([str(i) for i in idx] + [repr(float(t.array[idx]))]), file=out)
        return EXIT_OK
    finally:
        if out is not sys.stdout:
            out.close()


def _read_hedges(text: str, G):
    Ts, C = [], None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        key = key.strip()
        if key == "T":
            Ts.append(parse_conjunction(rest, G))
        elif key == "C":
            if C is not None:
                raise CliError(f"hedge file line {n}: a second C line")
            C = parse_conjunction(rest, G)
        else:
            raise CliError(f"hedge file line {n}: expected 'T: ...' or 'C: ...'")
    if not Ts or C is None:
        raise CliError("hedge file needs at least one T line and one C line")
    return Ts, C


def cmd_witness(args) -> int:
    G = _graph(args)
    Ts, C = _read_hedges(_text_arg(args.hedge), G)
    if len(Ts) == 1:
        w = hedge_witness(G, Ts[0], C, smooth=args.smooth, eps=args.eps, strict=False)
    else:
        w = thicket_witness(G, Ts, C, smooth=args.smooth, eps=args.eps, strict=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "M1.json").write_text(scm_to_json(w.M1), encoding="utf-8")
    (out / "M2.json").write_text(scm_to_json(w.M2), encoding="utf-8")
    lines = list(w.transcript) + [f"valid: {w.valid}"]
    (out / "transcript.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK if w.valid else EXIT_FAIL


def _bow_data(args) -> BowData:
    tables = {}
    for kind in ("obs", "exp", "ctf"):
        path = getattr(args, kind)
        if path:
            tables[kind] = read_table_csv(path, kind)
    if not tables:
        raise CliError("give at least one of --obs, --exp, --ctf")
    return BowData(**tables)


def cmd_bounds(args) -> int:
    d = _bow_data(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list = []
    if args.benefits:
        vals = [float(v) for v in args.benefits.split(",")]
        if len(vals) != 4:
            raise CliError("--benefits takes four numbers: always-1,helped,hurt,always-0")
        params = dict(zip([(1, 1), (0, 1), (1, 0), (0, 0)], vals))
        report = unit_selection(d, params)
        report["note"] = ("exact polytope endpoints over canonical models; "
                          "not posterior credible intervals")
        for key in ("population", "subgroup_x0", "subgroup_x1"):
            if key in report:
                iv = report[key]["interval"]
                rows.append((key, Interval(iv["lo"], iv["hi"]), report[key]["constraints"]))
        title = "Average benefit of treatment"
    else:
        x, xp, y, yp = args.nte
        m, k = d.shape
        cm = CanonicalModel(m, k)
        q = nte_query(cm, x, xp, y, yp)
        report = {"query": f"P(Y[X={x}]={y} | X={xp}, Y={yp})", "intervals": []}

        def add(label, iv, tiers, method):
            rows.append((label, iv, tiers))
            report["intervals"].append({"label": label, "interval": iv.to_json(),
                                        "method": method, "constraints": list(tiers)})
        add("L1 analytic", nte_bounds_l1(d), ["obs"], "analytic")
        if d.exp is not None and d.obs is not None:
            add("L2 analytic", nte_bounds_l2(d, x, xp, y, yp), ["obs", "exp"], "analytic")
        if d.ctf is not None and d.obs is not None:
            add("L2.5 analytic", nte_bounds_l25(d, x, xp, y, yp), ["obs", "ctf"], "analytic")
        if d.obs is not None:
            for tiers in (["obs"], ["obs", "exp"], ["obs", "ctf"], ["obs", "exp", "ctf"]):
                if all(t in d.tiers for t in tiers):
                    add("LP " + "+".join(tiers), polytope_bounds(d.subset(tiers), q),
                        tiers, "exact LP over canonical models")
        title = report["query"]
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out / "intervals.svg").write_text(intervals_svg([(r[0], r[1]) for r in rows], title),
                                       encoding="utf-8")
    with open(out / "intervals.csv", "w", encoding="utf-8") as fh:
        fh.write("label,lo,hi,constraints\n")
        for label, iv, tiers in rows:
            fh.write(f"{label},{iv.lo!r},{iv.hi!r},{'+'.join(tiers)}\n")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    for p in sorted(FIXTURES.iterdir()):
        if p.is_dir():
            print(p)
    return EXIT_OK


# -- parser ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ctfid",
        description="Counterfactual identification from observational, interventional "
                    "and counterfactual data. Exit codes: 0 identified/ok, 2 FAIL or "
                    "negative answer, 1 error.")
    p.add_argument("--version", action="version", version=f"ctfid {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, metavar="COMMAND")

    def graph_arg(sp, required=True):
        sp.add_argument("--graph", required=required, metavar="FILE",
                        help="causal diagram file (lines 'var X card 2', 'edge X -> Y', "
                             "'edge X <-> Y'), or the text itself")

    def query_arg(sp, required=True):
        sp.add_argument("--query", required=required, metavar="FILE|TEXT",
                        help="query file or text, e.g. \"P(Y[X=1]=1 | X=0)\"")

    def cap_arg(sp):
        sp.add_argument("--cap", type=int, metavar="N",
                        help="exogenous enumeration cap (overrides CTFID_CAP; at least 1024)")

    s = sub.add_parser("id", help="identify a query from a set of regimes",
                       description="Identify a counterfactual query. Prints the estimand "
                                   "(exit 0) or a FAIL certificate as JSON (exit 2).")
    graph_arg(s)
    query_arg(s)
    s.add_argument("--regimes", action="append", metavar="FILE|TEXT",
                   help="regime file (one regime per line, actions separated by ';') or a "
                        "single regime such as 'ctf-rand(X -> {Y})'; repeatable; "
                        "default: observe")
    s.add_argument("--emit", choices=("text", "json"), default="text",
                   help="output format for an identified estimand (default: text)")
    s.add_argument("--log", action="store_true", help="also print the derivation log")
    s.add_argument("--verify", nargs=2, type=int, metavar=("K", "SEED"),
                   help="check the estimand against the oracle on K random SCMs starting at SEED")
    s.add_argument("--tol", type=float, default=1e-6,
                   help="tolerance for --verify (default: 1e-6)")
    cap_arg(s)
    s.set_defaults(func=cmd_id)

    s = sub.add_parser("classify", help="layer of a query (L1, L2, L2.25, L2.5, L3-not-L2.5)")
    graph_arg(s)
    query_arg(s)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("realizable", help="whether a query's distribution can be sampled "
                                          "(exit 0 realizable, 2 not)")
    graph_arg(s)
    query_arg(s)
    s.set_defaults(func=cmd_realizable)

    s = sub.add_parser("oracle", help="exact regime tables, query values or samples from an SCM")
    graph_arg(s, required=False)
    s.add_argument("--scm", metavar="FILE", help="SCM JSON file (default: random SCM from --graph)")
    s.add_argument("--seed", type=int, default=0, help="seed for the random SCM and sampling")
    s.add_argument("--regime", default="observe", metavar="TEXT",
                   help="regime whose table is printed (default: observe)")
    query_arg(s, required=False)
    s.add_argument("--samples", type=int, metavar="N", help="draw N units as CSV instead of the table")
    s.add_argument("--approx", type=int, metavar="N",
                   help="estimate --query by Monte Carlo over N units (reports standard error)")
    s.add_argument("--write-scm", metavar="FILE", help="save the SCM used as JSON")
    s.add_argument("--out", metavar="FILE", help="write output here instead of stdout")
    cap_arg(s)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("witness", help="SCM pair witnessing a ctf-hedge or ctf-thicket",
                       description="Build two SCMs that agree on the hedge input tables and "
                                   "differ on the root. Exit 2 if the pair fails its checks.")
    graph_arg(s)
    s.add_argument("--hedge", required=True, metavar="FILE",
                   help="lines 'T: <events>' (one per hedge) and one 'C: <events>' root line")
    s.add_argument("--out", required=True, metavar="DIR",
                   help="directory for M1.json, M2.json and transcript.txt")
    s.add_argument("--smooth", action="store_true", help="add flip noise to the roots for positivity")
    s.add_argument("--eps", type=float, default=1e-3, help="noise mass for --smooth (default: 1e-3)")
    cap_arg(s)
    s.set_defaults(func=cmd_witness)

    s = sub.add_parser("bounds", help="partial-identification bounds on the bow graph",
                       description="Bounds from data tables. Without --benefits, bounds "
                                   "P(Y[X=x]=y | X=x', Y=y'); with --benefits, the unit "
                                   "selection report.")
    s.add_argument("--obs", metavar="CSV", help="observational table, header x,y,p")
    s.add_argument("--exp", metavar="CSV", help="interventional table, header x,y_x,p")
    s.add_argument("--ctf", metavar="CSV", help="counterfactual table, header x_natural,x_assigned,y,p")
    s.add_argument("--nte", nargs=4, type=int, default=(1, 0, 1, 0), metavar=("X", "XP", "Y", "YP"),
                   help="values x x' y y' of the bounded query (default: 1 0 1 0)")
    s.add_argument("--benefits", metavar="G,A,L,D",
                   help="benefit of treating always-1, helped, hurt and always-0 units")
    s.add_argument("--out", required=True, metavar="DIR",
                   help="directory for report.json, intervals.svg and intervals.csv")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("fixtures", help="list the bundled example directories")
    s.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_cap(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
