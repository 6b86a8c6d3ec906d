"""Hypothesis strategies producing small, valid query documents."""
from hypothesis import strategies as st

from mpcplan.errors import QueryError
from mpcplan.ir import Kind, infer_columns

PARTIES = ("pA", "pB", "pC")
OPS = ("Project", "Filter", "Concat", "Join", "Aggregate", "Multiply", "ScalarMul", "SortBy", "Distinct")
trust_sets = st.lists(st.sampled_from(PARTIES), unique=True, max_size=3)


@st.composite
def query_docs(draw, max_ops=12, min_inputs=2, ops=OPS):
    parties = [{"name": p} for p in PARTIES]
    nodes, schema = [], {}
    n_inputs = draw(st.integers(min_inputs, 4))
    for i in range(n_inputs):
        name = f"in{i}"
        nodes.append({
            "id": name,
            "kind": "Input",
            "at": draw(st.sampled_from(PARTIES)),
            "out_columns": [
                {"name": "a", "trust": draw(trust_sets), "domain": [0, 4]},
                {"name": "b", "trust": draw(trust_sets), "domain": [-3, 6]},
            ],
        })
        schema[name] = ["a", "b"]
    fresh = iter(f"c{k}" for k in range(1000))
    for step in range(draw(st.integers(1, max_ops))):
        names = list(schema)
        src = draw(st.sampled_from(names))
        cols = schema[src]
        kind = draw(st.sampled_from(ops))
        params, inputs = {}, [src]
        if kind == "Project":
            params["columns"] = draw(st.lists(st.sampled_from(cols), min_size=1, unique=True))
        elif kind == "Filter":
            params = {"column": draw(st.sampled_from(cols)), "op": draw(st.sampled_from(["==", "<", ">"])),
                      "value": draw(st.integers(-1, 4))}
        elif kind == "Concat":
            same = [n for n in names if len(schema[n]) == len(cols)]
            inputs = draw(st.lists(st.sampled_from(same), min_size=2, max_size=3))
        elif kind == "Join":
            other = draw(st.sampled_from(names))
            inputs = [src, other]
            lk = draw(st.sampled_from(cols))
            rk = draw(st.sampled_from(schema[other]))
            params = {"left": [lk], "right": [rk]}
        elif kind == "Aggregate":
            func = draw(st.sampled_from(["sum", "count"]))
            group = draw(st.lists(st.sampled_from(cols), max_size=1))
            params = {"func": func, "group": group, "out": next(fresh)}
            if func == "sum":
                params["over"] = draw(st.sampled_from(cols))
        elif kind == "Multiply":
            params = {"left": draw(st.sampled_from(cols)), "right": draw(st.sampled_from(cols)), "out": next(fresh)}
        elif kind == "ScalarMul":
            params = {"column": draw(st.sampled_from(cols)), "scalar": draw(st.integers(-3, 3))}
        elif kind == "SortBy":
            params = {"column": draw(st.sampled_from(cols))}
        elif kind == "Distinct":
            if len(cols) != 1:
                inputs = [src]
                kind, params = "Project", {"columns": [draw(st.sampled_from(cols))]}
        try:
            out_cols = infer_columns(Kind(kind), params, [schema[j] for j in inputs])
        except (QueryError, KeyError):
            continue
        if len(set(out_cols)) != len(out_cols):
            continue
        name = f"n{step}"
        nodes.append({"id": name, "kind": kind, "inputs": inputs, "params": params})
        schema[name] = out_cols
    last = nodes[-1]["id"]
    to = draw(st.lists(st.sampled_from(PARTIES), min_size=1, max_size=2, unique=True))
    nodes.append({"id": "out", "kind": "Output", "inputs": [last], "to": to})
    return {"parties": parties, "nodes": nodes}
