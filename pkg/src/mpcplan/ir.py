"""Relational operator DAG, parties, annotations and the query document format.

A query document is JSON::

    {
      "parties": [{"name": "pA", "endpoint": "mpc.a.com"}, ...],
      "consent": {"pA": true, ...},                       # optional
      "nodes": [
        {"id": "demographics", "kind": "Input", "at": "pA",
         "out_columns": [{"name": "ssn", "trust": []}, ...]},
        {"id": "joined", "kind": "Join", "inputs": ["demographics", "scores"],
         "params": {"left": ["ssn"], "right": ["ssn"]}},
        ...
        {"id": "result", "kind": "Output", "inputs": ["avg"], "to": ["pA"]}
      ]
    }

Compiled documents carry an extra ``meta`` object per node (owner, exec
mode, sortedness) and full ``out_columns`` with propagated trust sets, so
that a compiled DAG survives a round trip through the format.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    ArityMismatch,
    CycleDetected,
    DuplicateColumn,
    NoOutput,
    QueryError,
    UnknownColumn,
    UnknownNode,
)


class Kind(str, Enum):
    INPUT = "Input"
    CONCAT = "Concat"
    PROJECT = "Project"
    FILTER = "Filter"
    JOIN = "Join"
    AGGREGATE = "Aggregate"
    MULTIPLY = "Multiply"
    DIVIDE = "Divide"
    SCALAR_MUL = "ScalarMul"
    ENUMERATE = "Enumerate"
    SORT_BY = "SortBy"
    DISTINCT = "Distinct"
    OUTPUT = "Output"


COMPARATORS = ("==", "<", ">")
AGG_FUNCS = ("sum", "count")


@dataclass(frozen=True)
class Party:
    id: int
    name: str
    endpoint: str = ""


@dataclass(frozen=True)
class Owner:
    kind: str  # "single" | "partitioned" | "public"
    party: int | None = None

    @classmethod
    def single(cls, party):
        return cls("single", party)

    def __str__(self):
        return f"single:{self.party}" if self.kind == "single" else self.kind


PARTITIONED = Owner("partitioned")
PUBLIC = Owner("public")


@dataclass(frozen=True)
class ExecMode:
    kind: str  # "clear" | "mpc" | "hybrid_join" | "public_join" | "hybrid_agg"
    party: int | None = None

    @property
    def is_clear(self):
        return self.kind == "clear"

    @property
    def is_shared(self):
        return self.kind != "clear"

    @property
    def is_hybrid(self):
        return self.kind in ("hybrid_join", "public_join", "hybrid_agg")


MPC = ExecMode("mpc")


def clear_at(party):
    return ExecMode("clear", party)


@dataclass
class ColumnMeta:
    name: str
    trust: frozenset = frozenset()
    vtype: str = "int64"
    # Optional [lo, hi) range used by the random input generator.
    domain: tuple | None = None


@dataclass
class RelationMeta:
    columns: list
    owner: Owner | None = None
    stored_at: frozenset = frozenset()
    sorted_by: str | None = None
    row_count_public: bool = False

    @property
    def names(self):
        return [c.name for c in self.columns]

    def column(self, name):
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownColumn(f"no column {name!r}")


@dataclass
class OpNode:
    id: int
    name: str
    kind: Kind
    params: dict
    inputs: list
    out_meta: RelationMeta
    exec_mode: ExecMode | None = None

    @property
    def columns(self):
        return self.out_meta.names


@dataclass
class QueryDag:
    nodes: dict
    parties: list
    consent: dict = field(default_factory=dict)

    @property
    def party_ids(self):
        return frozenset(p.id for p in self.parties)

    def party(self, ref):
        for p in self.parties:
            if p.id == ref or p.name == ref:
                return p
        raise QueryError(f"unknown party {ref!r}")

    def by_name(self, name):
        for n in self.nodes.values():
            if n.name == name:
                return n
        raise UnknownNode("no such node", name)

    def consumers(self, node_id):
        return [n.id for n in self.nodes.values() if node_id in n.inputs]

    def outputs(self):
        return [n for n in self.nodes.values() if n.kind is Kind.OUTPUT]

    def inputs_of_kind(self):
        return [n for n in self.nodes.values() if n.kind is Kind.INPUT]

    def topo_order(self):
        return topo_sort(self.nodes)

    def copy(self):
        return copy.deepcopy(self)

    def next_id(self):
        return max(self.nodes, default=-1) + 1

    def fresh_name(self, base):
        taken = {n.name for n in self.nodes.values()}
        if base not in taken:
            return base
        i = 2
        while f"{base}#{i}" in taken:
            i += 1
        return f"{base}#{i}"


def topo_sort(nodes):
    """Kahn's algorithm with ascending-id tie breaking."""
    import heapq

    indeg = {i: 0 for i in nodes}
    out = {i: [] for i in nodes}
    for n in nodes.values():
        for src in n.inputs:
            if src not in nodes:
                raise UnknownNode("input refers to a missing node", n.name)
            indeg[n.id] += 1
            out[src].append(n.id)
    heap = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for j in out[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, j)
    if len(order) != len(nodes):
        stuck = min(i for i, d in indeg.items() if d > 0)
        raise CycleDetected("operator graph has a cycle", nodes[stuck].name)
    return order


# --- schema inference ----------------------------------------------------

_ARITY = {
    Kind.INPUT: (0, 0),
    Kind.JOIN: (2, 2),
    Kind.CONCAT: (2, None),
}


def check_arity(kind, n_inputs, name):
    lo, hi = _ARITY.get(kind, (1, 1))
    if n_inputs < lo or (hi is not None and n_inputs > hi):
        want = f"{lo}" if lo == hi else f">= {lo}"
        raise ArityMismatch(f"{kind.value} takes {want} inputs, got {n_inputs}", name)


def _need(cols, name, node):
    if name not in cols:
        raise UnknownColumn(f"column {name!r} not in {cols}", node)
    return name


def infer_columns(kind, params, input_cols, node="?"):
    """Output column names of an operator given its inputs' column names."""
    if kind is Kind.INPUT:
        raise QueryError("Input schema comes from the document", node)
    first = input_cols[0]
    if kind is Kind.CONCAT:
        for other in input_cols[1:]:
            if len(other) != len(first):
                raise ArityMismatch("concat inputs differ in width", node)
        return list(first)
    if kind is Kind.PROJECT:
        return [_need(first, c, node) for c in params["columns"]]
    if kind is Kind.FILTER:
        _need(first, params["column"], node)
        return list(first)
    if kind is Kind.JOIN:
        left, right = input_cols
        lk, rk = params["left"], params["right"]
        if len(lk) != len(rk):
            raise ArityMismatch("join key lists differ in length", node)
        for c in lk:
            _need(left, c, node)
        for c in rk:
            _need(right, c, node)
        out = list(left) + [c for c in right if c not in rk]
        if len(set(out)) != len(out):
            raise DuplicateColumn(f"join output has duplicate columns {out}", node)
        return out
    if kind is Kind.AGGREGATE:
        for c in params["group"]:
            _need(first, c, node)
        if params["func"] == "sum":
            _need(first, params["over"], node)
        out = list(params["group"]) + [params["out"]]
        if len(set(out)) != len(out):
            raise DuplicateColumn(f"aggregate output has duplicate columns {out}", node)
        return out
    if kind in (Kind.MULTIPLY, Kind.DIVIDE):
        _need(first, params["left"], node)
        _need(first, params["right"], node)
        if params["out"] in first:
            raise DuplicateColumn(f"column {params['out']!r} already exists", node)
        return list(first) + [params["out"]]
    if kind is Kind.SCALAR_MUL:
        _need(first, params["column"], node)
        out = params.get("out") or params["column"]
        if out == params["column"]:
            return list(first)
        if out in first:
            raise DuplicateColumn(f"column {out!r} already exists", node)
        return list(first) + [out]
    if kind is Kind.ENUMERATE:
        if params["out"] in first:
            raise DuplicateColumn(f"column {params['out']!r} already exists", node)
        return list(first) + [params["out"]]
    if kind is Kind.SORT_BY:
        _need(first, params["column"], node)
        return list(first)
    if kind in (Kind.DISTINCT, Kind.OUTPUT):
        return list(first)
    raise QueryError(f"unhandled operator {kind}", node)


def _normalize_params(kind, params, input_cols, node):
    p = dict(params)
    if kind is Kind.PROJECT:
        cols = []
        for c in p.get("columns", []):
            if isinstance(c, int):
                if not 0 <= c < len(input_cols[0]):
                    raise UnknownColumn(f"column index {c} out of range", node)
                c = input_cols[0][c]
            cols.append(c)
        p["columns"] = cols
    elif kind is Kind.FILTER:
        if p.get("op") not in COMPARATORS:
            raise QueryError(f"comparator must be one of {COMPARATORS}", node)
        p["value"] = int(p["value"])
    elif kind is Kind.JOIN:
        p["left"] = list(p.get("left", []))
        p["right"] = list(p.get("right", []))
    elif kind is Kind.AGGREGATE:
        if p.get("func") not in AGG_FUNCS:
            raise QueryError(f"aggregate func must be one of {AGG_FUNCS}", node)
        p["group"] = list(p.get("group", []))
        p.setdefault("over", None)
        if p["func"] == "sum" and not p["over"]:
            raise QueryError("sum aggregate needs 'over'", node)
        p.setdefault("out", p["func"])
    elif kind is Kind.SCALAR_MUL:
        p["scalar"] = int(p["scalar"])
        p["out"] = p.get("out") or p["column"]
    return p


# --- document <-> DAG ----------------------------------------------------

def load_document(source):
    """Accept a dict, a JSON string or a path."""
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        return json.loads(Path(source).read_text())
    return json.loads(source)


def _trust_from_doc(entry, parties, node):
    if entry in ("*", "public"):
        return frozenset(p.id for p in parties)
    ids = set()
    for ref in entry or []:
        match = [p.id for p in parties if p.name == ref]
        if not match:
            raise QueryError(f"trust set names unknown party {ref!r}", node)
        ids.add(match[0])
    return frozenset(ids)


def _party_id(parties, ref, node):
    for p in parties:
        if p.name == ref:
            return p.id
    raise QueryError(f"unknown party {ref!r}", node)


def _mode_from_doc(entry, parties, node):
    if entry is None:
        return None
    kind, _, who = entry.partition(":")
    return ExecMode(kind, _party_id(parties, who, node) if who else None)


def _owner_from_doc(entry, parties, node):
    if entry is None:
        return None
    kind, _, who = entry.partition(":")
    return Owner(kind, _party_id(parties, who, node) if who else None)


def build_dag(doc):
    """Parse and validate a query document into a :class:`QueryDag`.

    Node ids are assigned densely in document order, so identical documents
    always yield identical DAGs.
    """
    doc = load_document(doc)
    parties = [
        Party(i, p["name"], p.get("endpoint", "")) for i, p in enumerate(doc.get("parties", []))
    ]
    if len({p.name for p in parties}) != len(parties):
        raise QueryError("duplicate party names")
    raw = doc.get("nodes", [])
    ids = {}
    for i, nd in enumerate(raw):
        name = nd["id"]
        if name in ids:
            raise QueryError("duplicate node id", name)
        ids[name] = i

    skeleton = {}
    for i, nd in enumerate(raw):
        name = nd["id"]
        try:
            kind = Kind(nd["kind"])
        except ValueError:
            raise QueryError(f"unknown operator kind {nd.get('kind')!r}", name) from None
        inputs = []
        for ref in nd.get("inputs", []):
            if ref not in ids:
                raise UnknownNode(f"input {ref!r} is not declared", name)
            if ref == name:
                raise CycleDetected("node consumes its own output", name)
            inputs.append(ids[ref])
        check_arity(kind, len(inputs), name)
        skeleton[i] = OpNode(i, name, kind, dict(nd.get("params", {})), inputs, RelationMeta([]))
    order = topo_sort(skeleton)

    for i in order:
        node, nd = skeleton[i], raw[i]
        in_cols = [skeleton[j].columns for j in node.inputs]
        doc_cols = nd.get("out_columns")
        if node.kind is Kind.INPUT:
            if not doc_cols:
                raise QueryError("Input needs out_columns", node.name)
            node.params = {"at": _party_id(parties, nd.get("at") or node.params.get("at"), node.name)}
            names = [c["name"] for c in doc_cols]
        else:
            node.params = _normalize_params(node.kind, node.params, in_cols, node.name)
            names = infer_columns(node.kind, node.params, in_cols, node.name)
            if doc_cols is not None and [c["name"] for c in doc_cols] != names:
                raise UnknownColumn(
                    f"declared columns {[c['name'] for c in doc_cols]} != inferred {names}", node.name
                )
        if len(set(names)) != len(names):
            raise DuplicateColumn(f"duplicate column names {names}", node.name)
        if node.kind is Kind.OUTPUT:
            to = nd.get("to") or node.params.get("to") or []
            node.params = {"to": sorted(_party_id(parties, r, node.name) for r in to)}
        for key in ("stp", "party"):
            if isinstance(node.params.get(key), str):
                node.params[key] = _party_id(parties, node.params[key], node.name)
        cols = []
        for k, cname in enumerate(names):
            entry = doc_cols[k] if doc_cols else {}
            dom = entry.get("domain")
            cols.append(
                ColumnMeta(
                    cname,
                    _trust_from_doc(entry.get("trust", []), parties, node.name),
                    entry.get("type", "int64"),
                    tuple(dom) if dom else None,
                )
            )
        meta = nd.get("meta", {})
        node.out_meta = RelationMeta(
            cols,
            owner=_owner_from_doc(meta.get("owner"), parties, node.name),
            stored_at=frozenset(_party_id(parties, r, node.name) for r in meta.get("stored_at", [])),
            sorted_by=meta.get("sorted_by"),
            row_count_public=bool(meta.get("row_count_public", node.kind is Kind.INPUT)),
        )
        node.exec_mode = _mode_from_doc(meta.get("exec_mode"), parties, node.name)

    dag = QueryDag(skeleton, parties)
    consent = doc.get("consent", {})
    dag.consent = {p.id: bool(consent.get(p.name, True)) for p in parties}
    validate(dag)
    return dag


def validate(dag):
    """Check the structural invariants of a DAG."""
    order = topo_sort(dag.nodes)
    outputs = dag.outputs()
    if not outputs:
        raise NoOutput("query has no Output node")
    for out in outputs:
        if not out.params.get("to"):
            raise NoOutput("Output has no recipients", out.name)
    for i in order:
        node = dag.nodes[i]
        check_arity(node.kind, len(node.inputs), node.name)
        if node.kind is Kind.INPUT:
            if node.params.get("at") not in dag.party_ids:
                raise QueryError("Input is not stored at a declared party", node.name)
            continue
        in_cols = [dag.nodes[j].columns for j in node.inputs]
        names = infer_columns(node.kind, node.params, in_cols, node.name)
        if names != node.columns:
            raise UnknownColumn(f"columns {node.columns} do not match inferred {names}", node.name)
    return dag


def dag_to_doc(dag, include_meta=True):
    """Serialize a DAG; ``build_dag(dag_to_doc(d))`` reproduces ``d``."""
    pname = {p.id: p.name for p in dag.parties}

    def trust_doc(t):
        return sorted(pname[i] for i in t)

    nodes = []
    for i in sorted(dag.nodes):
        n = dag.nodes[i]
        params = dict(n.params)
        entry = {"id": n.name, "kind": n.kind.value}
        if n.kind is Kind.INPUT:
            entry["at"] = pname[params.pop("at")]
        elif n.kind is Kind.OUTPUT:
            entry["to"] = [pname[r] for r in params.pop("to")]
        for key in ("stp", "party"):
            if key in params:
                params[key] = pname[params[key]]
        if params:
            entry["params"] = params
        if n.inputs:
            entry["inputs"] = [dag.nodes[j].name for j in n.inputs]
        cols = []
        for c in n.out_meta.columns:
            cd = {"name": c.name, "trust": trust_doc(c.trust)}
            if c.domain is not None:
                cd["domain"] = list(c.domain)
            cols.append(cd)
        entry["out_columns"] = cols
        if include_meta:
            m = n.out_meta
            meta = {}
            if m.owner is not None:
                meta["owner"] = m.owner.kind + (f":{pname[m.owner.party]}" if m.owner.party is not None else "")
            if m.stored_at:
                meta["stored_at"] = sorted(pname[s] for s in m.stored_at)
            if m.sorted_by is not None:
                meta["sorted_by"] = m.sorted_by
            meta["row_count_public"] = m.row_count_public
            if n.exec_mode is not None:
                meta["exec_mode"] = n.exec_mode.kind + (
                    f":{pname[n.exec_mode.party]}" if n.exec_mode.party is not None else ""
                )
            entry["meta"] = meta
        nodes.append(entry)
    return {
        "parties": [{"name": p.name, "endpoint": p.endpoint} for p in dag.parties],
        "consent": {pname[k]: v for k, v in sorted(dag.consent.items())},
        "nodes": nodes,
    }


def dags_equal(a, b):
    """Structural equality via the canonical document form."""
    return dag_to_doc(a) == dag_to_doc(b)


def renumber(dag):
    """Return a copy with dense ids in topological order."""
    order = topo_sort(dag.nodes)
    remap = {old: new for new, old in enumerate(order)}
    nodes = {}
    for old in order:
        n = copy.deepcopy(dag.nodes[old])
        n.id = remap[old]
        n.inputs = [remap[j] for j in n.inputs]
        nodes[n.id] = n
    return QueryDag(nodes, list(dag.parties), dict(dag.consent))


# --- column dependencies -------------------------------------------------

def column_deps(node, dag):
    """Map each result column to the (input index, column) pairs it depends on.

    Two kinds of dependency are encoded: columns that contribute values to
    the result column, and columns that decide which rows are combined,
    kept or reordered (group-by keys, join keys, filter and sort columns).
    """
    kind, p = node.kind, node.params
    ins = [dag.nodes[j].columns for j in node.inputs]
    out = node.columns
    if kind is Kind.INPUT:
        return {c: set() for c in out}
    if kind is Kind.CONCAT:
        return {c: {(k, ins[k][pos]) for k in range(len(ins))} for pos, c in enumerate(out)}
    if kind in (Kind.PROJECT, Kind.OUTPUT):
        return {c: {(0, c)} for c in out}
    if kind is Kind.FILTER:
        return {c: {(0, c), (0, p["column"])} for c in out}
    if kind is Kind.SORT_BY:
        return {c: {(0, c), (0, p["column"])} for c in out}
    if kind is Kind.JOIN:
        keys = {(0, k) for k in p["left"]} | {(1, k) for k in p["right"]}
        left = set(ins[0])
        return {c: {(0 if c in left else 1, c)} | keys for c in out}
    if kind is Kind.AGGREGATE:
        group = {(0, g) for g in p["group"]}
        deps = {g: {(0, g)} for g in p["group"]}
        if p["func"] == "sum":
            deps[p["out"]] = {(0, p["over"])} | group
        else:
            # A global count depends on how many rows exist at all.
            deps[p["out"]] = set(group) if group else {(0, c) for c in ins[0]}
        return deps
    if kind in (Kind.MULTIPLY, Kind.DIVIDE):
        deps = {c: {(0, c)} for c in ins[0]}
        deps[p["out"]] = {(0, p["left"]), (0, p["right"])}
        return deps
    if kind is Kind.SCALAR_MUL:
        deps = {c: {(0, c)} for c in ins[0]}
        deps[p["out"]] = {(0, p["column"])}
        return deps
    if kind is Kind.ENUMERATE:
        deps = {c: {(0, c)} for c in ins[0]}
        deps[p["out"]] = {(0, c) for c in ins[0]}
        return deps
    if kind is Kind.DISTINCT:
        every = {(0, c) for c in ins[0]}
        return {c: set(every) for c in out}
    raise QueryError(f"no dependency rule for {kind}", node.name)


def ancestors(dag, roots):
    seen = set()
    stack = list(roots)
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        if i not in dag.nodes:
            raise UnknownNode("no such node id", i)
        seen.add(i)
        stack.extend(dag.nodes[i].inputs)
    return seen


def clone_subdag(dag, roots, id_base=None):
    """Deep-copy the sub-DAG feeding ``roots`` under fresh node ids."""
    keep = ancestors(dag, roots)
    base = dag.next_id() if id_base is None else id_base
    order = [i for i in topo_sort(dag.nodes) if i in keep]
    remap = {old: base + k for k, old in enumerate(order)}
    nodes = {}
    for old in order:
        n = copy.deepcopy(dag.nodes[old])
        n.id = remap[old]
        n.inputs = [remap[j] for j in n.inputs]
        nodes[n.id] = n
    return QueryDag(nodes, list(dag.parties), dict(dag.consent))
