"""Check a leakage ledger against what the compiled query authorizes.

A party may observe:

* values of a column whose trust set contains it, or of any relation it
  recomputes locally as the pre-image of a lifted operator or delivers as
  an output
* output relations it is a recipient of
* cardinalities of inputs, of relations crossing a segment boundary and of
  relations entering or leaving a hybrid or data-dependent MPC operator
* the index permutation produced by a hybrid aggregation or public join
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import ledger as lg
from .analysis import flagged_nodes
from .ir import Kind
from .plan import partition


@dataclass
class AuthorizedSet:
    values: dict = field(default_factory=dict)  # (relation, column) -> parties
    cardinality: set = field(default_factory=set)
    permutation: set = field(default_factory=set)
    output: dict = field(default_factory=dict)  # relation -> parties

    def permits(self, ev):
        if ev.kind == lg.COLUMN_VALUES:
            return ev.observer in self.values.get((ev.relation, ev.column), ())
        if ev.kind == lg.OUTPUT:
            return ev.observer in self.output.get(ev.relation, ())
        if ev.kind == lg.CARDINALITY:
            return ev.relation in self.cardinality
        if ev.kind == lg.PERMUTATION:
            return ev.relation in self.permutation
        return False

    def permits_values(self, observer, relation, column):
        return observer in self.values.get((relation, column), ())


def authorized_set(dag, segments=None):
    segments = segments if segments is not None else partition(dag)
    auth = AuthorizedSet()
    flagged = flagged_nodes(dag)
    for node in dag.nodes.values():
        readers = set()
        for cid in dag.consumers(node.id):
            c = dag.nodes[cid]
            if c.params.get("lifted") is not None:
                readers.add(c.params["lifted"])
            if c.kind is Kind.OUTPUT:
                readers |= set(c.params["to"])
        for col in node.out_meta.columns:
            auth.values[(node.name, col.name)] = set(col.trust) | readers

        mode = node.exec_mode
        if node.kind is Kind.INPUT:
            auth.cardinality.add(node.name)
        if node.kind is Kind.OUTPUT:
            auth.output[node.name] = set(node.params["to"])
        if mode is not None and mode.is_hybrid:
            auth.cardinality.add(node.name)
            auth.cardinality.update(dag.nodes[j].name for j in node.inputs)
            if mode.kind in ("hybrid_agg", "public_join"):
                auth.permutation.add(node.name)
        if mode is not None and mode.is_shared and node.kind in (Kind.JOIN, Kind.AGGREGATE, Kind.DISTINCT):
            auth.cardinality.add(node.name)
        if node.id in flagged:
            auth.cardinality.add(node.name)
    for seg in segments:
        for b in seg.out_boundaries:
            auth.cardinality.add(b.relation)
    return auth


@dataclass
class AuditReport:
    passed: bool
    violations: list
    events: int

    def as_dict(self):
        return {"result": "pass" if self.passed else "fail", "events": self.events, "violations": self.violations}


def audit(ledger, dag):
    auth = authorized_set(dag)
    pname = {p.id: p.name for p in dag.parties}
    violations = []
    for ev in ledger:
        if not auth.permits(ev):
            violations.append(
                {
                    "seq": ev.seq,
                    "step": ev.step,
                    "observer": pname.get(ev.observer, ev.observer),
                    "kind": ev.kind,
                    "relation": ev.relation,
                    "column": ev.column,
                }
            )
    return AuditReport(not violations, violations, len(ledger))
