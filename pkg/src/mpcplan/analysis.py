"""Ownership and trust propagation, and the decision of what runs under MPC."""
from __future__ import annotations

from .ir import MPC, PARTITIONED, PUBLIC, Kind, Owner, clear_at, column_deps


def propagate_ownership(dag):
    """Pass 1: push input locations down the DAG, then output locations back up."""
    dag = dag.copy()
    for i in dag.topo_order():
        node = dag.nodes[i]
        meta = node.out_meta
        if node.kind is Kind.INPUT:
            p = node.params["at"]
            meta.owner, meta.stored_at, meta.row_count_public = Owner.single(p), frozenset({p}), True
            continue
        ins = [dag.nodes[j].out_meta for j in node.inputs]
        lifted = node.params.get("lifted")
        if lifted is not None:
            meta.owner = Owner.single(lifted)
            meta.stored_at = frozenset({lifted})
        elif node.exec_mode is not None and node.exec_mode.is_hybrid:
            meta.owner = PARTITIONED
            meta.stored_at = frozenset().union(*(m.stored_at for m in ins))
        else:
            owners = {m.owner for m in ins}
            private = owners - {PUBLIC}
            if len(owners) == 1:
                meta.owner = ins[0].owner
            elif len(private) == 1 and next(iter(private)).kind == "single":
                # public data combined with one party's data stays with that party
                meta.owner = next(iter(private))
            else:
                meta.owner = PARTITIONED
            if meta.owner.kind == "single":
                meta.stored_at = frozenset({meta.owner.party})
            else:
                meta.stored_at = frozenset().union(*(m.stored_at for m in ins))
        meta.row_count_public = False
    # backward: outputs are also stored at their recipients
    for out in dag.outputs():
        out.out_meta.stored_at = out.out_meta.stored_at | frozenset(out.params["to"])
    return dag


def propagate_trust(dag):
    """Pass 2: each column's trust set is the intersection over its dependencies."""
    dag = dag.copy()
    everyone = dag.party_ids
    for i in dag.topo_order():
        node = dag.nodes[i]
        if node.kind is Kind.INPUT:
            for c in node.out_meta.columns:
                c.trust = frozenset(c.trust) | {node.params["at"]}
            continue
        ins = [dag.nodes[j] for j in node.inputs]
        deps = column_deps(node, dag)
        for c in node.out_meta.columns:
            t = frozenset(everyone)
            for k, src in deps[c.name]:
                t &= ins[k].out_meta.column(src).trust
            if node.kind is Kind.OUTPUT:
                t |= frozenset(node.params["to"])
            c.trust = t
    return dag


def mark_mpc(dag):
    """Assign execution modes: Partitioned output means MPC, otherwise local."""
    dag = dag.copy()
    for node in dag.nodes.values():
        owner = node.out_meta.owner
        if node.kind is Kind.OUTPUT:
            node.exec_mode = clear_at(min(node.params["to"]))
        elif node.params.get("lifted") is not None:
            node.exec_mode = clear_at(node.params["lifted"])
        elif node.exec_mode is not None and node.exec_mode.is_hybrid:
            pass
        elif owner.kind == "single":
            node.exec_mode = clear_at(owner.party)
        elif owner.kind == "public":
            node.exec_mode = clear_at(min(node.out_meta.stored_at or dag.party_ids))
        else:
            node.exec_mode = MPC
    return dag


def analyze(dag):
    return mark_mpc(propagate_trust(propagate_ownership(dag)))


def mpc_nodes(dag):
    return [n for n in dag.nodes.values() if n.exec_mode is not None and n.exec_mode.is_shared]


def flagged_nodes(dag):
    """Ids of shared relations that still carry MPC filter flags."""
    flagged = set()
    for i in dag.topo_order():
        node = dag.nodes[i]
        if node.exec_mode is None or not node.exec_mode.is_shared:
            continue
        if node.kind is Kind.FILTER:
            flagged.add(i)
        elif node.kind in (Kind.PROJECT, Kind.MULTIPLY, Kind.SCALAR_MUL) and node.inputs[0] in flagged:
            flagged.add(i)
    return flagged


def propagate_sortedness(dag):
    """Forward pass recording which column each relation is sorted by, if any."""
    dag = dag.copy()
    flagged = flagged_nodes(dag)
    for i in dag.topo_order():
        node = dag.nodes[i]
        p, mode = node.params, node.exec_mode
        shared = mode is not None and mode.is_shared

        def incoming(k=0):
            j = node.inputs[k]
            src = dag.nodes[j]
            # crossing out of MPC with flags forces a shuffle-and-compact
            if j in flagged and not shared:
                return None
            return src.out_meta.sorted_by

        s = None
        k = node.kind
        if k is Kind.INPUT or k is Kind.CONCAT:
            s = None
        elif k is Kind.SORT_BY:
            s = p["column"]
        elif k is Kind.AGGREGATE:
            s = (p["group"][0] if p["group"] else None) if not shared else None
        elif k is Kind.DISTINCT:
            s = node.columns[0] if not shared else None
        elif k is Kind.JOIN:
            if mode is not None and mode.kind == "public_join":
                s = p["left"][0]
            elif not shared:
                s = incoming(0)
        elif k is Kind.PROJECT:
            s = incoming()
            if s not in p["columns"]:
                s = None
        elif k is Kind.SCALAR_MUL:
            s = incoming()
            if s == p["column"] and p["out"] == p["column"] and p["scalar"] <= 0:
                s = None
        else:
            s = incoming()
        node.out_meta.sorted_by = s
    return dag


def report(dag):
    """Per-node summary with stable key names."""
    pname = {q.id: q.name for q in dag.parties}
    rows = []
    for i in dag.topo_order():
        n = dag.nodes[i]
        owner = n.out_meta.owner
        rows.append(
            {
                "node": n.name,
                "kind": n.kind.value,
                "owner": None if owner is None else (
                    f"single:{pname[owner.party]}" if owner.kind == "single" else owner.kind
                ),
                "columns": [{"name": c.name, "trust": sorted(pname[t] for t in c.trust)} for c in n.out_meta.columns],
                "mpc": bool(n.exec_mode is not None and n.exec_mode.is_shared),
                "exec_mode": None if n.exec_mode is None else (
                    n.exec_mode.kind + (f":{pname[n.exec_mode.party]}" if n.exec_mode.party is not None else "")
                ),
            }
        )
    return rows
