"""Command line entry point: ``mpcplan <command> ...``.

Exit status is 0 on success, 1 when a check fails or a query is rejected,
and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis
from .errors import MpcPlanError
from .ir import build_dag, dag_to_doc, load_document
from .orchestrator import audit_run, compile_query, simulate, verify


def parse_consent(text):
    """``"pA:true,pB:false"`` -> ``{"pA": True, "pB": False}``."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        party, sep, flag = item.partition(":")
        flag = flag.strip().lower()
        if not sep or flag not in ("true", "false", "1", "0", "yes", "no"):
            raise argparse.ArgumentTypeError(f"bad consent entry {item!r}; expected party:true|false")
        out[party.strip()] = flag in ("true", "1", "yes")
    return out


def _emit(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True, default=str)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
    print(text)


def cmd_analyze(args):
    dag = analysis.analyze(build_dag(load_document(args.query)))
    _emit({"nodes": analysis.report(dag)})
    return 0


def cmd_compile(args):
    dag, trace = compile_query(load_document(args.query), args.consent, not args.no_rewrites)
    doc = {"compiled": dag_to_doc(dag), "trace": trace.as_list()}
    if args.out:
        out = Path(args.out)
        _emit(doc["trace"], out / "trace.json")
        _emit(doc["compiled"], out / "compiled.json")
    else:
        _emit(doc)
    return 0


def cmd_simulate(args):
    res = simulate(load_document(args.query), args.inputs, args.consent, args.seed,
                   not args.no_rewrites, args.out)
    summary = {
        "outputs": {p: {n: len(t) for n, t in tables.items()} for p, tables in res.outputs.items()},
        "counters": res.counters.as_dict(),
        "events": len(res.ledger),
        "out": str(args.out),
    }
    _emit(summary)
    return 0


def cmd_verify(args):
    report = verify(load_document(args.query), args.trials, args.seed, args.max_rows, args.inputs, args.consent)
    _emit(report.as_dict(), Path(args.out) / "verify.json" if args.out else None)
    return 0 if report.passed else 1


def cmd_audit(args):
    report = audit_run(args.run_dir)
    _emit(report.as_dict(), Path(args.run_dir) / "audit.json")
    return 0 if report.passed else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="mpcplan", description="Compile and simulate relational queries under MPC.")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_query(p):
        p.add_argument("query", help="query document (JSON)")
        return p

    def with_consent(p):
        p.add_argument("--consent", type=parse_consent, default=None, metavar="PARTY:BOOL,...")
        return p

    with_query(sub.add_parser("analyze", help="print ownership, trust and MPC marks")).set_defaults(fn=cmd_analyze)

    p = with_consent(with_query(sub.add_parser("compile", help="run the rewrite passes")))
    p.add_argument("--no-rewrites", action="store_true")
    p.add_argument("--out", help="write compiled.json and trace.json here")
    p.set_defaults(fn=cmd_compile)

    p = with_consent(with_query(sub.add_parser("simulate", help="execute the compiled plans")))
    p.add_argument("--inputs", required=True, help="directory holding <party>/<input>.csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-rewrites", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = with_consent(with_query(sub.add_parser("verify", help="check rewritten, baseline and oracle agree")))
    p.add_argument("--inputs", help="optional directory used for the first trial")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rows", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("audit", help="audit the ledger of a simulate run directory")
    p.add_argument("run_dir")
    p.set_defaults(fn=cmd_audit)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (MpcPlanError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
