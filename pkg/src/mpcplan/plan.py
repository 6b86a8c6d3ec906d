"""Split a compiled DAG into local and MPC segments and emit per-party plans.

Relations move between segments through boundary steps:

* ``share_in``: a local relation enters MPC (the holder deals shares)
* ``reveal_to``: an MPC relation is reconstructed at its consumers' party
* ``plaintext_send``: a local relation moves to another party
* ``local``: same party, different segment (no transfer)
* ``shared``: MPC to MPC across segments (shares stay where they are)
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .analysis import flagged_nodes
from .errors import IllegalBoundary
from .ir import Kind
from .mpc.engine import Counters, bitonic_compares, shuffle_units

SHARED = "shared"


def loc_name(node_name, loc):
    return f"{node_name}@{loc}"


@dataclass
class Boundary:
    relation: str
    node: int
    src: int
    dst: int
    kind: str
    source_party: int | None = None
    targets: tuple = ()
    compact: bool = False
    # "values", "output" or "none": how a reveal is ledgered
    event: str = "values"


@dataclass
class Segment:
    id: int
    mode: object
    steps: list = field(default_factory=list)
    in_boundaries: list = field(default_factory=list)
    out_boundaries: list = field(default_factory=list)

    @property
    def shared(self):
        return self.mode.is_shared

    def participants(self, parties):
        return sorted(parties) if self.shared else [self.mode.party]


def _reaches(seg_edges, a, b):
    stack, seen = [a], set()
    while stack:
        s = stack.pop()
        if s == b:
            return True
        if s in seen:
            continue
        seen.add(s)
        stack.extend(seg_edges.get(s, ()))
    return False


def _authorized_receiver(dag, node, consumer, party):
    """May ``party`` learn every column of ``node`` in the clear to feed ``consumer``?"""
    if consumer.kind is Kind.OUTPUT and party in consumer.params["to"]:
        return True
    if consumer.params.get("lifted") == party:
        return True
    return all(party in c.trust for c in node.out_meta.columns)


def partition(dag):
    """Group nodes into maximal connected same-mode segments; hybrids stand alone."""
    seg_of = {}
    segments = []
    seg_edges = {}
    for i in dag.topo_order():
        node = dag.nodes[i]
        mode = node.exec_mode
        target = None
        if not mode.is_hybrid:
            cands = [seg_of[j] for j in node.inputs if segments[seg_of[j]].mode == mode]
            for s in sorted(set(cands), reverse=True):
                others = {seg_of[j] for j in node.inputs} - {s}
                # joining s must not close a cycle s -> other -> node
                if not any(_reaches(seg_edges, s, o) for o in others):
                    target = s
                    break
        if target is None:
            target = len(segments)
            segments.append(Segment(target, mode))
        segments[target].steps.append(i)
        seg_of[i] = target
        for j in node.inputs:
            if seg_of[j] != target:
                seg_edges.setdefault(seg_of[j], set()).add(target)

    flagged = flagged_nodes(dag)
    for i in dag.topo_order():
        node = dag.nodes[i]
        src = seg_of[i]
        dests = {}
        for c in dag.consumers(i):
            if seg_of[c] != src:
                dests.setdefault(seg_of[c], []).append(dag.nodes[c])
        for dst, consumers in sorted(dests.items()):
            b = _boundary(dag, node, segments[src], segments[dst], consumers, i in flagged)
            segments[src].out_boundaries.append(b)
            segments[dst].in_boundaries.append(b)
    return segments


def _boundary(dag, node, src, dst, consumers, flagged):
    b = Boundary(node.name, node.id, src.id, dst.id, "")
    if src.shared and dst.shared:
        b.kind = "shared"
    elif not src.shared and dst.shared:
        b.kind, b.source_party = "share_in", src.mode.party
    elif src.shared:
        target = dst.mode.party
        targets = {target}
        outputs = [c for c in consumers if c.kind is Kind.OUTPUT]
        if outputs and len(outputs) == len(consumers):
            targets |= set().union(*(set(c.params["to"]) for c in outputs))
            b.event = "output"
        for c in consumers:
            if not _authorized_receiver(dag, node, c, target):
                raise IllegalBoundary(
                    f"revealing {node.name!r} to party {dag.party(target).name} is not authorized"
                )
        b.kind, b.targets, b.compact = "reveal_to", tuple(sorted(targets)), flagged
    elif src.mode.party != dst.mode.party:
        target = dst.mode.party
        for c in consumers:
            if not _authorized_receiver(dag, node, c, target):
                raise IllegalBoundary(
                    f"sending {node.name!r} to party {dag.party(target).name} is not authorized"
                )
        b.kind, b.source_party, b.targets = "plaintext_send", src.mode.party, (target,)
        if all(c.kind is Kind.OUTPUT for c in consumers):
            b.event = "output"
    else:
        b.kind, b.source_party = "local", src.mode.party
    return b


def _seg_order(segments):
    indeg = {s.id: 0 for s in segments}
    for s in segments:
        for b in s.in_boundaries:
            indeg[s.id] += 1
    ready = sorted(s.id for s in segments if indeg[s.id] == 0)
    order = []
    while ready:
        sid = ready.pop(0)
        order.append(sid)
        for b in segments[sid].out_boundaries:
            indeg[b.dst] -= 1
            if indeg[b.dst] == 0:
                ready.append(b.dst)
                ready.sort()
    return order


def _node_op(node):
    mode = node.exec_mode
    if node.kind is Kind.INPUT:
        return "input"
    if node.kind is Kind.OUTPUT:
        return "output"
    if mode.is_hybrid:
        return mode.kind
    return "mpc" if mode.is_shared else "clear"


def _loc(node):
    return SHARED if node.exec_mode.is_shared else node.exec_mode.party


def emit_steps(dag, segments):
    """Global ordered step list; boundary steps precede the segment that needs them."""
    parties = sorted(dag.party_ids)
    steps = []
    for sid in _seg_order(segments):
        seg = segments[sid]
        for b in seg.in_boundaries:
            node = dag.nodes[b.node]
            src_loc = SHARED if segments[b.src].shared else segments[b.src].mode.party
            if b.kind in ("shared", "local"):
                continue
            if b.kind == "share_in":
                dst_loc, parts = SHARED, parties
            elif b.kind == "reveal_to":
                dst_loc, parts = seg.mode.party, parties
            else:
                dst_loc, parts = seg.mode.party, sorted({b.source_party, *b.targets})
            steps.append({
                "step_id": len(steps),
                "segment": sid,
                "op": b.kind,
                "node": node.name,
                "kind": node.kind.value,
                "params": {
                    "source": b.source_party,
                    "targets": list(b.targets),
                    "compact": b.compact,
                    "event": b.event,
                },
                "inputs": [loc_name(node.name, src_loc)],
                "output": loc_name(node.name, dst_loc),
                "participants": parts,
            })
        for i in seg.steps:
            node = dag.nodes[i]
            loc = _loc(node)
            op = _node_op(node)
            params = dict(node.params)
            if op in ("hybrid_join", "public_join", "hybrid_agg"):
                params["party"] = node.exec_mode.party
            ins = []
            for j in node.inputs:
                src = dag.nodes[j]
                ins.append(loc_name(src.name, SHARED if seg.shared else loc))
            steps.append({
                "step_id": len(steps),
                "segment": sid,
                "op": op,
                "node": node.name,
                "kind": node.kind.value,
                "params": params,
                "inputs": ins,
                "output": loc_name(node.name, loc),
                "participants": seg.participants(parties) if op != "output" else sorted({loc, *node.params["to"]}),
            })
    return steps


def emit_plans(dag, segments, seed=None):
    """Per-party plan documents holding only the steps each party takes part in."""
    steps = emit_steps(dag, segments)
    plans = {}
    for p in dag.parties:
        plans[p.name] = {
            "party": p.name,
            "seed": seed,
            "steps": [s for s in steps if p.id in s["participants"]],
        }
    return plans, steps


def segments_doc(dag, segments):
    pname = {p.id: p.name for p in dag.parties}

    def mode_doc(m):
        return m.kind + (f":{pname[m.party]}" if m.party is not None else "")

    def bdoc(b):
        return {
            "relation": b.relation,
            "from": b.src,
            "to": b.dst,
            "kind": b.kind,
            "targets": [pname[t] for t in b.targets],
            "compact": b.compact,
        }

    return [
        {
            "segment": s.id,
            "mode": mode_doc(s.mode),
            "nodes": [dag.nodes[i].name for i in s.steps],
            "in": [bdoc(b) for b in s.in_boundaries],
            "out": [bdoc(b) for b in s.out_boundaries],
        }
        for s in segments
    ]


# --- cost model -----------------------------------------------------------

def cost_sort(n, width):
    c = Counters()
    k = bitonic_compares(n)
    c.sort_compares, c.lt, c.mul = k, k, 2 * width * k
    return c


def cost_select(n, m, width):
    return Counters(eq=n * m, mul=n * m * width, select_units=n * m)


def cost_mpc_join(nl, nr, wl, wr, keyed=True):
    if not keyed:
        return Counters()
    total = nl * nr
    return Counters(eq=total, mul=total * (wl + wr - 1), shuffle_units=shuffle_units(total))


def cost_hybrid_join(nl, nr, m, wl, wr):
    c = Counters(shuffle_units=shuffle_units(nl) + shuffle_units(nr) + shuffle_units(m))
    return c + cost_select(nl, m, wl) + cost_select(nr, m, wr)


def _group_terms(n, func, flagged):
    """Accumulate, discard-flag and final shuffle terms shared by both group-by protocols."""
    c = Counters()
    if n == 0:
        return c
    if func == "sum" and flagged:
        c.mul += n
    carried = (2 if flagged else 1) if func == "sum" else 1
    c.mul += (n - 1) * carried
    if flagged:
        c.eq += n
        c.mul += n
    c.shuffle_units += shuffle_units(n)
    return c


def cost_mpc_aggregate(n, func, grouped=True, flagged=False, presorted=False):
    if not grouped:
        c = Counters()
        if n and flagged:
            c.eq += 1
            if func == "sum":
                c.mul += n
        return c
    if n == 0:
        return Counters()
    c = Counters() if presorted else cost_sort(n, 1 + (func == "sum") + flagged)
    c.eq += n - 1
    return c + _group_terms(n, func, flagged)


def cost_hybrid_aggregate(n, func, flagged=False):
    return Counters(shuffle_units=shuffle_units(n)) + _group_terms(n, func, flagged)


def node_cost(dag, node, sizes, flagged):
    """Counters one shared-mode node adds, given the physical row count of each relation."""
    mode = node.exec_mode
    if mode is None or not mode.is_shared:
        return Counters()
    p = node.params
    ins = [dag.nodes[j] for j in node.inputs]
    n = sizes[ins[0].name] if ins else 0
    in_flagged = bool(ins) and ins[0].id in flagged
    k = node.kind
    if mode.kind == "public_join":
        return Counters()
    if mode.kind == "hybrid_join":
        return cost_hybrid_join(n, sizes[ins[1].name], sizes[node.name], len(ins[0].columns), len(ins[1].columns))
    if mode.kind == "hybrid_agg":
        func = p["func"] if k is Kind.AGGREGATE else "count"
        return cost_hybrid_aggregate(n, func, in_flagged)
    if k is Kind.FILTER:
        c = Counters(eq=n) if p["op"] == "==" else Counters(lt=n)
        if in_flagged:
            c.mul += n
        return c
    if k is Kind.MULTIPLY:
        return Counters(mul=n)
    if k is Kind.JOIN:
        return cost_mpc_join(n, sizes[ins[1].name], len(ins[0].columns), len(ins[1].columns), bool(p["left"]))
    if k is Kind.AGGREGATE:
        return cost_mpc_aggregate(n, p["func"], bool(p["group"]), in_flagged, bool(p.get("presorted")))
    if k is Kind.DISTINCT:
        return cost_mpc_aggregate(n, "count", True, in_flagged, bool(p.get("presorted")))
    if k is Kind.SORT_BY:
        return Counters() if p.get("presorted") else cost_sort(n, len(node.columns))
    return Counters()


def estimate_cost(dag, segments, sizes):
    """Per-segment counters predicted from relation sizes.

    ``sizes`` maps every node name to the physical row count of its
    relation (for filtered MPC relations that is the row count before
    compaction). Compacting a filtered relation on its way out of MPC is
    charged to the segment that produced it.
    """
    flagged = flagged_nodes(dag)
    report = {}
    for seg in segments:
        total = Counters()
        for i in seg.steps:
            total = total + node_cost(dag, dag.nodes[i], sizes, flagged)
        for b in seg.out_boundaries:
            if b.kind == "reveal_to" and b.compact:
                total = total + Counters(shuffle_units=shuffle_units(sizes[b.relation]))
        report[seg.id] = total
    return report


def total_cost(report):
    t = Counters()
    for c in report.values():
        t = t + c
    return t
