"""Drive compiled plans on the simulated parties and check the results.

A run keeps every relation under a ``name@location`` key, where the
location is a party id for cleartext copies and ``shared`` for secret
shares. Steps execute in plan order, which respects the DAG across
segments, so a missing relation indicates a broken plan and surfaces as
:class:`~mpcplan.errors.Deadlock`.
"""
from __future__ import annotations

import json
from collections import Counter as Multiset
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen
from .audit import audit, authorized_set
from .clear import Table, apply_op, oracle_execute, read_table, write_table
from .errors import Deadlock, Mismatch, MissingInput, UnsupportedUnderMpc
from .ir import Kind, build_dag, dag_to_doc, load_document
from .ledger import LeakageLedger
from .mpc.engine import Counters, Engine, MessageClass
from .plan import emit_plans, estimate_cost, partition, segments_doc, total_cost
from .rewrite import compile_dag


@dataclass
class RunResult:
    dag: object
    trace: object
    segments: list
    steps: list
    plans: dict
    outputs: dict  # party name -> {output name: Table}
    ledger: LeakageLedger
    counters: Counters
    sizes: dict
    engine: Engine
    seed: int
    estimate: dict = field(default_factory=dict)

    def output(self, name, party=None):
        if party is None:
            for tables in self.outputs.values():
                if name in tables:
                    return tables[name]
            raise KeyError(name)
        return self.outputs[party][name]

    @property
    def transcripts(self):
        return {
            self.dag.party(p).name: [m.as_record() for m in msgs]
            for p, msgs in self.engine.net.transcripts.items()
        }


class Runtime:
    def __init__(self, dag, steps, engine, inputs):
        self.dag = dag
        self.steps = steps
        self.engine = engine
        self.inputs = inputs
        self.store = {}
        self.sizes = {}
        self.outputs = {p.name: {} for p in dag.parties}

    def _get(self, key, step):
        try:
            return self.store[key]
        except KeyError:
            raise Deadlock(step["step_id"], f"relation {key!r} is not available") from None

    def run(self):
        for st in self.steps:
            self.engine.step = st["step_id"]
            getattr(self, "_" + st["op"])(st)
        return self

    def _record(self, st, rel):
        self.store[st["output"]] = rel
        self.sizes[st["node"]] = rel.n if hasattr(rel, "shares") else len(rel)

    def _input(self, st):
        node = self.dag.by_name(st["node"])
        party = node.params["at"]
        table = self.inputs.get(node.name)
        if table is None:
            raise MissingInput(self.dag.party(party).name, node.name)
        table = table.select(node.columns)
        self.engine.ledger.column_values(node.name, node.columns, [party], st["step_id"])
        self._record(st, table)

    def _clear(self, st):
        tables = [self._get(k, st) for k in st["inputs"]]
        self._record(st, apply_op(Kind(st["kind"]), st["params"], tables))

    def _mpc(self, st):
        e = self.engine
        p = st["params"]
        kind = Kind(st["kind"])
        rels = [self._get(k, st) for k in st["inputs"]]
        r = rels[0] if rels else None
        name = st["node"]
        if kind is Kind.CONCAT:
            out = e.concat(rels)
        elif kind is Kind.PROJECT:
            out = e.project(r, p["columns"])
        elif kind is Kind.FILTER:
            out = e.filter_flags(r, p["column"], p["op"], p["value"])
        elif kind is Kind.JOIN:
            out = e.mpc_join(rels[0], rels[1], p["left"], p["right"], relation=name)
        elif kind is Kind.AGGREGATE:
            out = e.mpc_aggregate(r, p["group"], p["func"], p.get("over"), p["out"],
                                  bool(p.get("presorted")), relation=name)
        elif kind is Kind.MULTIPLY:
            out = e.multiply(r, p["left"], p["right"], p["out"])
        elif kind is Kind.SCALAR_MUL:
            out = e.scalar_mul(r, p["scalar"], p["column"], p.get("out"))
        elif kind is Kind.ENUMERATE:
            out = e.enumerate(r, p["out"])
        elif kind is Kind.SORT_BY:
            out = e.sort_relation(r, p["column"], bool(p.get("presorted")))
        elif kind is Kind.DISTINCT:
            out = e.mpc_distinct(r, bool(p.get("presorted")), relation=name)
        else:
            raise UnsupportedUnderMpc(f"{kind.value} has no MPC implementation", name)
        self._record(st, out)

    def _input_names(self, st):
        node = self.dag.by_name(st["node"])
        return [self.dag.nodes[j].name for j in node.inputs]

    def _hybrid_join(self, st):
        p = st["params"]
        left, right = (self._get(k, st) for k in st["inputs"])
        names = (*self._input_names(st), st["node"])
        out = self.engine.hybrid_join(left, right, p["left"][0], p["right"][0], p["party"], names)
        self._record(st, out)

    def _public_join(self, st):
        p = st["params"]
        left, right = (self._get(k, st) for k in st["inputs"])
        names = (*self._input_names(st), st["node"])
        out = self.engine.public_join(left, right, p["left"][0], p["right"][0], p["party"], names)
        self._record(st, out)

    def _hybrid_agg(self, st):
        p = st["params"]
        rel = self._get(st["inputs"][0], st)
        names = (self._input_names(st)[0], st["node"])
        if Kind(st["kind"]) is Kind.DISTINCT:
            out = self.engine.hybrid_distinct(rel, p["party"], names)
        else:
            out = self.engine.hybrid_aggregate(rel, p["group"], p["func"], p.get("over"), p["out"], p["party"], names)
        self._record(st, out)

    def _share_in(self, st):
        table = self._get(st["inputs"][0], st)
        self.store[st["output"]] = self.engine.share_in(table, st["params"]["source"], relation=st["node"])

    def _reveal_to(self, st):
        p = st["params"]
        rel = self._get(st["inputs"][0], st)
        if p["compact"]:
            rel = self.engine.compact(rel, relation=st["node"])
        event = "none" if p["event"] == "output" else "values"
        table = self.engine.reveal_to(rel, rel.columns, p["targets"], relation=st["node"], event=event)
        for t in p["targets"]:
            self.store[f"{st['node']}@{t}"] = table

    def _plaintext_send(self, st):
        p = st["params"]
        table = self._get(st["inputs"][0], st)
        for t in p["targets"]:
            self.engine.net.send(p["source"], t, MessageClass.REVEAL, table.data)
            if p["event"] != "output":
                self.engine.ledger.column_values(st["node"], table.columns, [t], st["step_id"])
            self.store[f"{st['node']}@{t}"] = table

    def _output(self, st):
        node = self.dag.by_name(st["node"])
        src = self.dag.nodes[node.inputs[0]].name
        table = self._get(st["inputs"][0], st)
        holder = node.exec_mode.party
        for r in node.params["to"]:
            key = f"{src}@{r}"
            if key not in self.store:
                self.engine.net.send(holder, r, MessageClass.REVEAL, table.data)
                self.store[key] = table
            self.outputs[self.dag.party(r).name][node.name] = self.store[key]
        self.engine.ledger.output(node.name, node.params["to"], st["step_id"])
        self.sizes[node.name] = len(table)


def compile_query(doc, consent=None, rewrites=True):
    return compile_dag(build_dag(doc), consent, rewrites)


def input_path(root, party, relation):
    return Path(root) / party / f"{relation}.csv"


def load_inputs(dag, input_dir):
    """Read ``<dir>/<party>/<input>.csv`` for every Input node, checking all exist first."""
    missing = []
    for node in dag.inputs_of_kind():
        party = dag.party(node.params["at"]).name
        path = input_path(input_dir, party, node.name)
        if not path.exists():
            missing.append(MissingInput(party, node.name, path))
    if missing:
        raise missing[0]
    return {
        node.name: read_table(input_path(input_dir, dag.party(node.params["at"]).name, node.name))
        for node in dag.inputs_of_kind()
    }


def write_inputs(dag, inputs, input_dir):
    for node in dag.inputs_of_kind():
        write_table(inputs[node.name], input_path(input_dir, dag.party(node.params["at"]).name, node.name))


def run_compiled(dag, inputs, seed=0, trace=None, check_reveals=True):
    """Partition, emit plans and execute a compiled DAG."""
    for node in dag.inputs_of_kind():
        if node.name not in inputs:
            raise MissingInput(dag.party(node.params["at"]).name, node.name)
    segments = partition(dag)
    plans, steps = emit_plans(dag, segments, seed)
    engine = Engine(seed=seed, parties=sorted(dag.party_ids))
    if check_reveals:
        engine.authorize = authorized_set(dag, segments).permits_values
    rt = Runtime(dag, steps, engine, inputs).run()
    estimate = estimate_cost(dag, segments, rt.sizes)
    return RunResult(dag, trace, segments, steps, plans, rt.outputs, engine.ledger, engine.counters,
                     rt.sizes, engine, seed, estimate)


def simulate(doc, inputs, consent=None, seed=0, rewrites=True, out_dir=None):
    """Compile and run a query; ``inputs`` is a directory or a name -> Table mapping."""
    dag, trace = compile_query(doc, consent, rewrites)
    if not isinstance(inputs, dict):
        inputs = load_inputs(dag, inputs)
    result = run_compiled(dag, inputs, seed, trace)
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def _dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_run(result, out_dir):
    out = Path(out_dir)
    dag = result.dag
    pname = {p.id: p.name for p in dag.parties}
    for party, tables in result.outputs.items():
        for name, table in tables.items():
            write_table(table, out / "outputs" / party / f"{name}.csv")
    _dump(out / "compiled.json", dag_to_doc(dag))
    _dump(out / "trace.json", result.trace.as_list() if result.trace is not None else [])
    _dump(out / "ledger.json", result.ledger.to_json())
    _dump(out / "counters.json", result.counters.as_dict())
    _dump(out / "cost.json", {
        "segments": {str(k): v.as_dict() for k, v in result.estimate.items()},
        "total": total_cost(result.estimate).as_dict(),
        "sizes": result.sizes,
    })
    _dump(out / "segments.json", segments_doc(dag, result.segments))
    _dump(out / "steps.json", result.steps)
    for party, plan in result.plans.items():
        _dump(out / "plans" / f"{party}.json", plan)
    tdir = out / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)
    for party, records in result.transcripts.items():
        with open(tdir / f"{party}.jsonl", "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _dump(out / "run.json", {"seed": result.seed, "parties": [pname[i] for i in sorted(pname)]})


def audit_run(run_dir):
    """Re-audit a run directory written by :func:`write_run`."""
    run_dir = Path(run_dir)
    dag = build_dag(json.loads((run_dir / "compiled.json").read_text()))
    ledger = LeakageLedger.from_json(json.loads((run_dir / "ledger.json").read_text()))
    return audit(ledger, dag)


# --- equivalence harness --------------------------------------------------

@dataclass
class VerifyReport:
    passed: bool
    trials: int
    mismatch: dict | None = None

    def as_dict(self):
        return {"result": "pass" if self.passed else "fail", "trials": self.trials, "mismatch": self.mismatch}


def _first_difference(expected, actual):
    e, a = Multiset(expected.rows()), Multiset(actual.rows())
    extra = sorted((a - e).elements())
    missing = sorted((e - a).elements())
    return {"missing": missing[:1], "unexpected": extra[:1]}


def compare_outputs(dag, expected, result, label):
    for out in dag.outputs():
        want = expected[out.name]
        for r in out.params["to"]:
            party = dag.party(r).name
            got = result.outputs[party].get(out.name)
            if got is None:
                return {"mode": label, "relation": out.name, "party": party, "detail": "no output delivered"}
            if got.columns != want.columns or got.multiset() != want.multiset():
                diff = _first_difference(want, got)
                return {"mode": label, "relation": out.name, "party": party, **diff}
    return None


def verify(doc, trials=50, seed=0, max_rows=1000, input_dir=None, consent=None, raise_on_mismatch=False):
    """Compare rewritten, baseline and single-site evaluation on random inputs."""
    source = build_dag(load_document(doc))
    compiled = {
        "rewrites": compile_dag(source, consent, True)[0],
        "baseline": compile_dag(source, consent, False)[0],
    }
    rng = np.random.default_rng(seed)
    for t in range(trials):
        if input_dir is not None and t == 0:
            inputs = load_inputs(source, input_dir)
        else:
            inputs = datagen.random_inputs(source, rng, max_rows, trial=t)
        expected = oracle_execute(source, inputs)
        for label, dag in compiled.items():
            res = run_compiled(dag, inputs, seed=seed + t)
            bad = compare_outputs(dag, expected, res, label)
            if bad is not None:
                bad["trial"] = t
                if raise_on_mismatch:
                    raise Mismatch(json.dumps(bad, default=str))
                return VerifyReport(False, t + 1, bad)
    return VerifyReport(True, trials)


__all__ = [
    "RunResult",
    "Runtime",
    "Table",
    "audit_run",
    "compile_query",
    "load_inputs",
    "run_compiled",
    "simulate",
    "verify",
    "write_inputs",
    "write_run",
]
