"""DAG-to-DAG passes that move work out of MPC, plus the compile pipeline.

Every pass takes a DAG and returns a new one; the input is never mutated.
Applied rules are appended to a :class:`RewriteTrace`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .analysis import analyze, flagged_nodes, propagate_sortedness
from .errors import ConsentRequired, UnsupportedUnderMpc
from .ir import (
    ColumnMeta,
    ExecMode,
    Kind,
    MPC,
    OpNode,
    RelationMeta,
    clear_at,
    renumber,
    validate,
)

DISTRIBUTIVE = (Kind.PROJECT, Kind.FILTER, Kind.MULTIPLY, Kind.DIVIDE, Kind.SCALAR_MUL)
# Consumers a relation with pending filter flags may feed while still shared.
FLAG_CONSUMERS = (Kind.PROJECT, Kind.FILTER, Kind.MULTIPLY, Kind.SCALAR_MUL, Kind.AGGREGATE, Kind.DISTINCT)


@dataclass
class TraceEntry:
    pass_name: str
    rule: str
    before: list
    after: list
    note: str = ""

    def as_dict(self):
        return {"pass": self.pass_name, "rule": self.rule, "before": self.before, "after": self.after, "note": self.note}


@dataclass
class RewriteTrace:
    entries: list = field(default_factory=list)

    def add(self, pass_name, rule, before, after, note=""):
        self.entries.append(TraceEntry(pass_name, rule, list(before), list(after), note))

    def rules(self):
        return [e.rule for e in self.entries]

    def of_pass(self, name):
        return [e for e in self.entries if e.pass_name == name]

    def as_list(self):
        return [e.as_dict() for e in self.entries]

    def __len__(self):
        return len(self.entries)


def _new_node(dag, name, kind, params, inputs, columns):
    nid = dag.next_id()
    node = OpNode(
        nid,
        dag.fresh_name(name),
        kind,
        dict(params),
        list(inputs),
        RelationMeta([ColumnMeta(c) for c in columns]),
    )
    dag.nodes[nid] = node
    return node


def _drop_if_orphaned(dag, nid):
    if not dag.consumers(nid) and dag.nodes[nid].kind is not Kind.OUTPUT:
        del dag.nodes[nid]


def _pname(dag, pid):
    return dag.party(pid).name


def _require_consent(dag, node, why):
    refused = [_pname(dag, p) for p, ok in sorted(dag.consent.items()) if not ok]
    if refused:
        raise ConsentRequired(f"{why}; no consent from {', '.join(refused)}", node.name)


def _splittable_concat(dag, node):
    """The Concat feeding ``node`` if all its inputs are local to distinct-or-single parties."""
    if len(node.inputs) != 1:
        return None
    src = dag.nodes[node.inputs[0]]
    if src.kind is not Kind.CONCAT:
        return None
    owners = [dag.nodes[j].out_meta.owner for j in src.inputs]
    if any(o is None or o.kind != "single" for o in owners):
        return None
    if len({o.party for o in owners}) < 2:
        return None
    return src


def push_down(dag, trace=None):
    """Distribute operators over a multi-party Concat and split aggregations.

    Repeats until no rule applies, re-analysing after every change.
    """
    trace = trace if trace is not None else RewriteTrace()
    dag = analyze(dag)
    while True:
        changed = False
        for i in dag.topo_order():
            node = dag.nodes[i]
            if node.exec_mode != MPC or node.params.get("lifted") is not None:
                continue
            cat = _splittable_concat(dag, node)
            if cat is None:
                continue
            if node.kind in DISTRIBUTIVE:
                if node.kind is Kind.FILTER:
                    _require_consent(dag, node, "pushing a filter below a concat makes MPC input sizes data-dependent")
                _distribute(dag, node, cat, trace)
                changed = True
            elif node.kind is Kind.AGGREGATE and node.params["group"] and not node.params.get("secondary"):
                _require_consent(dag, node, "splitting an aggregation makes MPC input sizes data-dependent")
                _split_aggregate(dag, node, cat, trace)
                changed = True
            if changed:
                break
        if not changed:
            return dag
        dag = analyze(dag)


def _distribute(dag, node, cat, trace):
    clones = []
    for j in cat.inputs:
        owner = dag.nodes[j].out_meta.owner.party
        c = _new_node(dag, f"{node.name}@{_pname(dag, owner)}", node.kind, node.params, [j], node.columns)
        clones.append(c)
    node.kind, node.params, node.inputs = Kind.CONCAT, {}, [c.id for c in clones]
    node.exec_mode = None
    _drop_if_orphaned(dag, cat.id)
    trace.add("push_down", "distribute-over-concat", [cat.name, node.name], [c.name for c in clones] + [node.name])


def _split_aggregate(dag, node, cat, trace):
    p = node.params
    locals_ = []
    for j in cat.inputs:
        owner = dag.nodes[j].out_meta.owner.party
        locals_.append(
            _new_node(dag, f"{node.name}@{_pname(dag, owner)}", Kind.AGGREGATE, {
                "func": p["func"], "group": list(p["group"]), "over": p["over"], "out": p["out"],
            }, [j], node.columns)
        )
    parts = _new_node(dag, f"{node.name}.parts", Kind.CONCAT, {}, [n.id for n in locals_], node.columns)
    node.params = {"func": "sum", "group": list(p["group"]), "over": p["out"], "out": p["out"], "secondary": True}
    node.inputs = [parts.id]
    node.exec_mode = None
    _drop_if_orphaned(dag, cat.id)
    trace.add(
        "push_down",
        "split-aggregation",
        [cat.name, node.name],
        [n.name for n in locals_] + [parts.name, node.name],
        f"secondary {p['func']} combined by sum",
    )


def insert_hybrids(dag, trace=None):
    """Replace MPC joins and group-bys with hybrid protocols where trust allows."""
    trace = trace if trace is not None else RewriteTrace()
    dag = propagate_sortedness(analyze(dag))
    everyone = dag.party_ids
    for i in dag.topo_order():
        node = dag.nodes[i]
        if node.exec_mode != MPC:
            continue
        p = node.params
        if node.kind is Kind.JOIN and len(p["left"]) == 1:
            left, right = (dag.nodes[j] for j in node.inputs)
            tl = left.out_meta.column(p["left"][0]).trust
            tr = right.out_meta.column(p["right"][0]).trust
            if tl == everyone and tr == everyone:
                node.exec_mode = ExecMode("public_join", min(everyone))
                trace.add("insert_hybrids", "public-join", [node.name], [node.name], "both join keys public")
                # the public join emits key-sorted rows; later decisions see that
                dag = propagate_sortedness(dag)
            elif tl & tr:
                node.exec_mode = ExecMode("hybrid_join", min(tl & tr))
                trace.add("insert_hybrids", "hybrid-join", [node.name], [node.name],
                          f"STP {_pname(dag, min(tl & tr))} trusted with both keys")
        elif node.kind in (Kind.AGGREGATE, Kind.DISTINCT):
            group = p["group"] if node.kind is Kind.AGGREGATE else node.columns
            if len(group) != 1:
                continue
            src = dag.nodes[node.inputs[0]]
            t = src.out_meta.column(group[0]).trust
            if not t:
                continue
            if src.out_meta.sorted_by == group[0]:
                trace.add("insert_hybrids", "keep-oblivious", [node.name], [node.name],
                          "input already sorted; the sort will be elided instead")
                continue
            node.exec_mode = ExecMode("hybrid_agg", min(t))
            trace.add("insert_hybrids", "hybrid-aggregation", [node.name], [node.name],
                      f"STP {_pname(dag, min(t))} trusted with group column")
    return analyze(dag)


def _reversible(dag, node, out_cols, trace):
    p = node.params
    k = node.kind
    if k is Kind.SCALAR_MUL:
        return p["scalar"] != 0
    if k is Kind.MULTIPLY or k is Kind.SORT_BY:
        return True
    if k is Kind.DIVIDE:
        if p["right"] in out_cols:
            return True
        trace.add("push_up", "divide-blocked", [node.name], [node.name], f"divisor {p['right']!r} is not output")
        return False
    if k is Kind.PROJECT:
        src = dag.nodes[node.inputs[0]]
        return not p.get("leaf_project") and sorted(p["columns"]) == sorted(src.columns)
    return False


def _leaf_count(dag, node):
    p = node.params
    return (
        node.kind is Kind.AGGREGATE
        and p["func"] == "count"
        and len(p["group"]) == 1
        and node.exec_mode is not None
        and node.exec_mode.kind in ("mpc", "hybrid_agg")
    )


def push_up(dag, trace=None, only_divides=False, count_leaf=True):
    """Lift reversible leaf-side MPC operators into the recipient's local segment.

    With ``only_divides`` the walk lifts just far enough to take any Divide
    out of MPC (the baseline pipeline needs this because MPC has no division).
    """
    trace = trace if trace is not None else RewriteTrace()
    dag = analyze(dag)
    for oid in [o.id for o in dag.outputs()]:
        out = dag.nodes[oid]
        recipient = min(out.params["to"])
        out_cols = set(out.columns)
        chain = []
        cur = dag.nodes[out.inputs[0]]
        leaf = None
        while True:
            if cur.params.get("lifted") is not None:
                cur = dag.nodes[cur.inputs[0]]
                continue
            if not cur.exec_mode.is_shared or len(dag.consumers(cur.id)) != 1:
                break
            if _reversible(dag, cur, out_cols, trace):
                chain.append(cur)
                cur = dag.nodes[cur.inputs[0]]
                continue
            if count_leaf and _leaf_count(dag, cur):
                leaf = cur
            break
        if only_divides:
            last = max((k for k, n in enumerate(chain) if n.kind is Kind.DIVIDE), default=None)
            chain = [] if last is None else chain[: last + 1]
            leaf = None
        for n in chain:
            n.params["lifted"] = recipient
            n.exec_mode = clear_at(recipient)
            trace.add("push_up", f"lift-{n.kind.value.lower()}", [n.name], [n.name],
                      f"reversible; recomputed by {_pname(dag, recipient)}")
        if leaf is not None:
            g = leaf.params["group"][0]
            proj = _new_node(dag, f"{leaf.name}.keys", Kind.PROJECT, {"columns": [g], "leaf_project": True},
                             leaf.inputs, [g])
            leaf.inputs = [proj.id]
            leaf.params["lifted"] = recipient
            leaf.exec_mode = clear_at(recipient)
            trace.add("push_up", "count-leaf", [leaf.name], [proj.name, leaf.name],
                      f"MPC projection then local count at {_pname(dag, recipient)}")
        dag = analyze(dag)
    return dag


def lower_divides(dag, trace=None):
    return push_up(dag, trace, only_divides=True, count_leaf=False)


def eliminate_sorts(dag, trace=None):
    """Mark oblivious sorts whose input is already in key order as elided."""
    trace = trace if trace is not None else RewriteTrace()
    dag = propagate_sortedness(dag)
    for i in dag.topo_order():
        node = dag.nodes[i]
        if node.exec_mode != MPC:
            continue
        if node.kind is Kind.AGGREGATE and node.params["group"]:
            key = node.params["group"][0]
        elif node.kind is Kind.DISTINCT:
            key = node.columns[0]
        elif node.kind is Kind.SORT_BY:
            key = node.params["column"]
        else:
            continue
        src = dag.nodes[node.inputs[0]]
        if src.out_meta.sorted_by == key and not node.params.get("presorted"):
            node.params["presorted"] = True
            trace.add("eliminate_sorts", "elide-sort", [node.name], [node.name], f"input sorted by {key!r}")
    return propagate_sortedness(dag)


def check_supported(dag):
    """Reject plans the MPC engine cannot execute."""
    flagged = flagged_nodes(dag)
    for i in dag.topo_order():
        node = dag.nodes[i]
        mode = node.exec_mode
        if mode is None or not mode.is_shared:
            continue
        p = node.params
        if mode == MPC:
            if node.kind is Kind.DIVIDE:
                raise UnsupportedUnderMpc("division cannot run under MPC and could not be lifted", node.name)
            if node.kind is Kind.JOIN and len(p["left"]) > 1:
                raise UnsupportedUnderMpc("multi-column join keys are not supported under MPC", node.name)
            if node.kind is Kind.AGGREGATE and len(p["group"]) > 1:
                raise UnsupportedUnderMpc("multi-column group-by is not supported under MPC", node.name)
            if node.kind is Kind.DISTINCT and len(node.columns) != 1:
                raise UnsupportedUnderMpc("distinct under MPC takes one column", node.name)
        for j in node.inputs:
            if j in flagged and node.kind not in FLAG_CONSUMERS:
                raise UnsupportedUnderMpc(
                    f"{node.kind.value} cannot consume the filtered relation {dag.nodes[j].name!r} under MPC",
                    node.name,
                )
            if j in flagged and mode.kind in ("hybrid_join", "public_join"):
                raise UnsupportedUnderMpc("hybrid joins cannot consume filtered relations", node.name)
    return dag


def compile_dag(dag, consent=None, rewrites=True):
    """Run the pass pipeline; returns ``(compiled_dag, trace)``."""
    trace = RewriteTrace()
    dag = dag.copy()
    if consent:
        for k, v in consent.items():
            pid = dag.party(k).id
            dag.consent[pid] = bool(v)
    dag = analyze(dag)
    if rewrites:
        dag = push_down(dag, trace)
        dag = insert_hybrids(dag, trace)
        dag = push_up(dag, trace)
        dag = eliminate_sorts(dag, trace)
    else:
        dag = lower_divides(dag, trace)
        dag = propagate_sortedness(dag)
    check_supported(dag)
    dag = renumber(dag)
    validate(dag)
    return dag, trace
