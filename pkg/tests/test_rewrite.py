import copy
from collections import Counter

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from conftest import QUERY_FIXTURES, fixture_dag, load_fixture
from mpcplan import FIXTURES, datagen
from mpcplan.analysis import analyze, mpc_nodes
from mpcplan.clear import oracle_execute
from mpcplan.errors import ConsentRequired, UnsupportedUnderMpc
from mpcplan.ir import MPC, Kind, build_dag, dags_equal
from mpcplan.orchestrator import run_compiled
from mpcplan.rewrite import RewriteTrace, compile_dag, push_down
from strategies import PARTIES, query_docs

P3 = [{"name": p} for p in PARTIES]


def inp(name, at, cols=("a", "b"), trust=()):
    return {"id": name, "kind": "Input", "at": at,
            "out_columns": [{"name": c, "trust": list(trust), "domain": [0, 5]} for c in cols]}


def out(src, to=("pA",)):
    return {"id": "o", "kind": "Output", "inputs": [src], "to": list(to)}


def doc(*nodes, consent=None):
    d = {"parties": P3, "nodes": list(nodes)}
    if consent:
        d["consent"] = consent
    return d


def modes(dag):
    return {n.name: (n.exec_mode.kind, n.exec_mode.party) for n in dag.nodes.values()}


def agree(dag, compiled, trials=5, max_rows=30, seed=0):
    rng = np.random.default_rng(seed)
    for t in range(trials):
        inputs = datagen.random_inputs(dag, rng, max_rows, trial=t)
        want = oracle_execute(dag, inputs)
        got = run_compiled(compiled, inputs, seed=t)
        for name, table in want.items():
            assert got.output(name).multiset() == table.multiset(), (name, t)


# --- push_down -------------------------------------------------------------

def test_market_concentration_push_down():
    dag, trace = compile_dag(fixture_dag("hhi"))
    m = modes(dag)
    for party, pid in zip(PARTIES, range(3)):
        for base in ("paid", "fares", "local_rev"):
            assert m[f"{base}@{party}"] == ("clear", pid)
    # MPC starts with the secondary aggregation feeding market_size
    assert m["local_rev"] == ("mpc", None)
    assert dag.by_name("local_rev").params.get("secondary") is True
    assert m["market_size"] == ("mpc", None)
    assert "split-aggregation" in trace.rules()


def test_push_down_no_concat_is_identity():
    d = analyze(build_dag(doc(inp("x", "pA"), inp("y", "pB", ("a", "c")),
                              {"id": "j", "kind": "Join", "inputs": ["x", "y"], "params": {"left": ["a"], "right": ["a"]}},
                              out("j"))))
    trace = RewriteTrace()
    assert dags_equal(push_down(d, trace), d)
    assert len(trace) == 0


def test_split_aggregation_hand_case():
    d = build_dag(doc(inp("x", "pA", ("k", "v")), inp("y", "pB", ("k", "v")),
                      {"id": "c", "kind": "Concat", "inputs": ["x", "y"]},
                      {"id": "s", "kind": "Aggregate", "inputs": ["c"],
                       "params": {"func": "sum", "group": ["k"], "over": "v", "out": "t"}},
                      out("s")))
    compiled, _ = compile_dag(d)
    from mpcplan.clear import Table

    inputs = {"x": Table.from_rows(("k", "v"), [[1, 5]]), "y": Table.from_rows(("k", "v"), [[1, 7]])}
    assert run_compiled(compiled, inputs).output("o").rows() == [(1, 12)]
    agree(d, compiled, trials=10, max_rows=10)


# --- push_up ---------------------------------------------------------------

def test_count_leaf_rewrite():
    dag, trace = compile_dag(fixture_dag("count_leaf"))
    keys = dag.by_name("by_zip.keys")
    count = dag.by_name("by_zip")
    assert keys.kind is Kind.PROJECT and keys.exec_mode == MPC and keys.columns == ["zip"]
    assert count.kind is Kind.AGGREGATE and count.exec_mode.kind == "clear" and count.params["func"] == "count"
    assert "count-leaf" in trace.rules()
    agree(fixture_dag("count_leaf"), dag)


def test_leaf_scalar_mul_lifted():
    d = build_dag(doc(inp("x", "pA"), inp("y", "pB", ("a", "c")),
                      {"id": "j", "kind": "Join", "inputs": ["x", "y"], "params": {"left": ["a"], "right": ["a"]}},
                      {"id": "m", "kind": "ScalarMul", "inputs": ["j"], "params": {"column": "c", "scalar": 3}},
                      out("m")))
    compiled, trace = compile_dag(d)
    assert modes(compiled)["m"] == ("clear", 0)
    assert "lift-scalarmul" in trace.rules()
    agree(d, compiled)


def test_zero_scalar_is_not_lifted():
    d = build_dag(doc(inp("x", "pA"), inp("y", "pB", ("a", "c")),
                      {"id": "j", "kind": "Join", "inputs": ["x", "y"], "params": {"left": ["a"], "right": ["a"]}},
                      {"id": "m", "kind": "ScalarMul", "inputs": ["j"], "params": {"column": "c", "scalar": 0}},
                      out("m")))
    compiled, _ = compile_dag(d)
    assert modes(compiled)["m"] == ("mpc", None)


def test_credit_divide_lifted_to_regulator():
    dag, trace = compile_dag(fixture_dag("credit"))
    assert modes(dag)["avg_scores"] == ("clear", 0)
    assert "lift-divide" in trace.rules()
    agree(fixture_dag("credit"), dag, trials=3, max_rows=100)


def test_divide_with_hidden_divisor_rejected():
    d = build_dag(doc(inp("x", "pA"), inp("y", "pB", ("a", "c")),
                      {"id": "j", "kind": "Join", "inputs": ["x", "y"], "params": {"left": ["a"], "right": ["a"]}},
                      {"id": "q", "kind": "Divide", "inputs": ["j"], "params": {"left": "b", "right": "c", "out": "r"}},
                      {"id": "p", "kind": "Project", "inputs": ["q"], "params": {"columns": ["r"]}},
                      out("p")))
    with pytest.raises(UnsupportedUnderMpc):
        compile_dag(d)


# --- insert_hybrids ----------------------------------------------------------

def test_credit_hybrid_join_with_regulator_stp():
    m = modes(compile_dag(fixture_dag("credit"))[0])
    assert m["joined"] == ("hybrid_join", 0)
    assert m["by_zip"] == ("hybrid_agg", 0)


def test_public_keys_give_public_join():
    m = modes(compile_dag(fixture_dag("aspirin"))[0])
    assert m["joined"] == ("public_join", 0)


def test_empty_trust_intersection_stays_mpc():
    m = modes(compile_dag(fixture_dag("count_leaf"))[0])
    assert m["joined"] == ("mpc", None)


def test_credit_without_annotations_has_no_hybrids():
    d = load_fixture("credit")
    for nd in d["nodes"]:
        for c in nd.get("out_columns", []):
            c["trust"] = []
    dag, trace = compile_dag(build_dag(d))
    m = modes(dag)
    assert m["joined"] == ("mpc", None)
    assert m["by_zip"] == ("mpc", None)
    assert not any(r.startswith("hybrid") for r in trace.rules())


# --- eliminate_sorts -----------------------------------------------------------

def _sorted_agg_doc(key):
    nodes = [inp("x", "pA"), inp("y", "pB"), {"id": "c", "kind": "Concat", "inputs": ["x", "y"]},
             {"id": "s", "kind": "SortBy", "inputs": ["c"], "params": {"column": key}}]
    nodes.append({"id": "g", "kind": "Aggregate", "inputs": ["s"], "params": {"func": "count", "group": ["a"],
                                                                           "out": "n"}})
    nodes.append({"id": "p", "kind": "ScalarMul", "inputs": ["g"], "params": {"column": "n", "scalar": 0}})
    nodes.append(out("p"))
    return doc(*nodes, consent={"pA": False})


def test_sorted_input_elides_aggregate_sort():
    d = build_dag(_sorted_agg_doc("a"))
    dag, trace = compile_dag(d)
    assert dag.by_name("g").params.get("presorted") is True
    assert "elide-sort" in trace.rules()
    agree(d, dag)


def test_unsorted_input_keeps_sort():
    dag, trace = compile_dag(build_dag(_sorted_agg_doc("b")))
    assert not dag.by_name("g").params.get("presorted")
    assert "elide-sort" not in trace.rules()


def test_public_join_feeds_presorted_distinct():
    dag, _ = compile_dag(fixture_dag("aspirin"))
    assert dag.by_name("joined").out_meta.sorted_by == "pid"
    assert dag.by_name("patients").params.get("presorted") is True


# --- compile -------------------------------------------------------------------

def test_single_party_query_is_all_clear():
    d = build_dag(doc(inp("x", "pB"), {"id": "f", "kind": "Filter", "inputs": ["x"],
                                       "params": {"column": "a", "op": ">", "value": 1}}, out("f", ["pB"])))
    dag, _ = compile_dag(d)
    assert mpc_nodes(dag) == []


@pytest.mark.parametrize("party", PARTIES)
def test_refused_consent_blocks_push_down(party):
    with pytest.raises(ConsentRequired) as err:
        compile_dag(fixture_dag("hhi"), {party: False})
    assert party in str(err.value)


def test_consent_in_document_honoured():
    d = load_fixture("hhi")
    d["consent"] = {"pB": False}
    with pytest.raises(ConsentRequired):
        compile_dag(build_dag(d))
    dag, _ = compile_dag(build_dag(d), rewrites=False)
    assert dag.by_name("paid").exec_mode == MPC


def test_flagged_relation_into_join_rejected():
    d = build_dag(doc(inp("x", "pA"), inp("y", "pB", ("a", "c")),
                      {"id": "j", "kind": "Join", "inputs": ["x", "y"], "params": {"left": ["a"], "right": ["a"]}},
                      {"id": "f", "kind": "Filter", "inputs": ["j"], "params": {"column": "b", "op": ">", "value": 1}},
                      {"id": "z", "kind": "Input", "at": "pC", "out_columns": [{"name": "b", "trust": []},
                                                                              {"name": "w", "trust": []}]},
                      {"id": "j2", "kind": "Join", "inputs": ["f", "z"], "params": {"left": ["b"], "right": ["b"]}},
                      out("j2")))
    with pytest.raises(UnsupportedUnderMpc):
        compile_dag(d)


def test_multi_key_join_rejected_under_mpc():
    d = build_dag(doc(inp("x", "pA"), inp("y", "pB"),
                      {"id": "j", "kind": "Join", "inputs": ["x", "y"],
                       "params": {"left": ["a", "b"], "right": ["a", "b"]}},
                      out("j")))
    with pytest.raises(UnsupportedUnderMpc):
        compile_dag(d)


# --- properties ----------------------------------------------------------

@pytest.mark.parametrize("name", FIXTURES)
def test_compile_is_idempotent(name):
    once, _ = compile_dag(fixture_dag(name))
    twice, trace = compile_dag(once)
    assert dags_equal(once, twice)
    assert len(trace) == 0


def _frontier_violations(dag, trace):
    lifted = {e.before[0] for e in trace.of_pass("push_up")}
    bad = []
    for node in dag.nodes.values():
        mode = node.exec_mode
        if node.kind in (Kind.INPUT, Kind.OUTPUT) or not mode.is_clear:
            continue
        for j in node.inputs:
            for c in dag.nodes[j].out_meta.columns:
                if mode.party not in c.trust and node.name not in lifted:
                    bad.append((node.name, dag.nodes[j].name, c.name))
    return bad


@pytest.mark.parametrize("name", FIXTURES)
def test_frontier_soundness_fixtures(name):
    dag, trace = compile_dag(fixture_dag(name))
    assert _frontier_violations(dag, trace) == []


@settings(suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(query_docs())
def test_frontier_soundness_random(d):
    try:
        dag, trace = compile_dag(build_dag(d))
    except UnsupportedUnderMpc:
        assume(False)
    assert _frontier_violations(dag, trace) == []
    again, _ = compile_dag(dag)
    assert dags_equal(dag, again)


@settings(max_examples=40, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(query_docs(max_ops=8, ops=("Project", "Filter", "Concat", "Join", "Aggregate", "ScalarMul", "SortBy",
                                  "Distinct")),
       st.integers(0, 2**16))
def test_semantics_preserved_on_random_queries(d, seed):
    dag = build_dag(d)
    try:
        on, _ = compile_dag(dag)
        off, _ = compile_dag(dag, rewrites=False)
    except UnsupportedUnderMpc:
        assume(False)
    rng = np.random.default_rng(seed)
    for t in range(3):
        inputs = datagen.random_inputs(dag, rng, 12, trial=t)
        want = oracle_execute(dag, inputs)["out"].multiset()
        assert run_compiled(on, inputs, seed).output("out").multiset() == want
        assert run_compiled(off, inputs, seed).output("out").multiset() == want


@pytest.mark.parametrize("name", QUERY_FIXTURES)
@given(st.data())
@settings(max_examples=15)
def test_hybrids_only_with_trusted_stp(name, data):
    d = copy.deepcopy(load_fixture(name))
    for nd in d["nodes"]:
        for c in nd.get("out_columns", []):
            c["trust"] = data.draw(st.lists(st.sampled_from(PARTIES), unique=True, max_size=3))
    source = analyze(build_dag(d))
    dag, _ = compile_dag(build_dag(d))
    for node in dag.nodes.values():
        mode = node.exec_mode
        if mode.kind == "hybrid_join":
            left, right = (dag.nodes[j] for j in node.inputs)
            inter = left.out_meta.column(node.params["left"][0]).trust & right.out_meta.column(
                node.params["right"][0]).trust
            assert inter and mode.party in inter
        elif mode.kind == "hybrid_agg":
            src = dag.nodes[node.inputs[0]]
            g = node.params["group"][0] if node.kind is Kind.AGGREGATE else node.columns[0]
            assert mode.party in src.out_meta.column(g).trust
        elif mode.kind == "public_join":
            left, right = (dag.nodes[j] for j in node.inputs)
            assert left.out_meta.column(node.params["left"][0]).trust == dag.party_ids
    assert source is not None


def test_trace_records_every_pass():
    _, trace = compile_dag(fixture_dag("hhi"))
    passes = Counter(e.pass_name for e in trace.entries)
    assert set(passes) == {"push_down", "push_up"}
    assert trace.as_list()[0]["rule"] == "distribute-over-concat"
