import time
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import fixture_dag
from mpcplan import clear
from mpcplan.clear import Table
from mpcplan.errors import ArityMismatch, DivisionByZero, MissingColumn, ParseError
from mpcplan.ir import Kind

T = Table.from_rows

small_rows = st.lists(st.tuples(st.integers(0, 4), st.integers(-50, 50)), max_size=25)


def table(rows, cols=("k", "v")):
    return T(cols, [list(r) for r in rows])


def test_hhi_tail_arithmetic():
    shares = T(("m_share",), [[50], [30], [20]])
    sq = clear.apply_op(Kind.MULTIPLY, {"left": "m_share", "right": "m_share", "out": "sq"}, [shares])
    assert sq.col("sq").tolist() == [2500, 900, 400]
    total = clear.aggregate(sq, "sum", [], "sq", "hhi")
    assert total.rows() == [(3800,)]


def test_join_disjoint_keys_empty():
    out = clear.join(T(("k", "a"), [[1, 10]]), T(("k", "b"), [[2, 20]]), ["k"], ["k"])
    assert len(out) == 0 and out.columns == ("k", "a", "b")


def test_aggregate_sum_by_group():
    t = T(("companyID", "price"), [[1, 10], [2, 5], [1, 7]])
    assert clear.aggregate(t, "sum", ["companyID"], "price", "rev").rows() == [(1, 17), (2, 5)]


def test_aggregate_count_and_empty():
    t = T(("g",), [[3], [3], [1]])
    assert clear.aggregate(t, "count", ["g"], None, "n").rows() == [(1, 1), (3, 2)]
    assert len(clear.aggregate(Table.empty(("g",)), "count", ["g"], None, "n")) == 0
    assert len(clear.aggregate(Table.empty(("v",)), "sum", [], "v", "s")) == 0


def test_keyless_join_is_cross_product():
    out = clear.join(T(("a",), [[1], [2]]), T(("b",), [[7], [8], [9]]), [], [])
    assert len(out) == 6


def test_truncdiv_toward_zero():
    a = np.array([7, -7, 7, -7])
    b = np.array([2, 2, -2, -2])
    assert clear.truncdiv(a, b).tolist() == [3, -3, -3, 3]
    with pytest.raises(DivisionByZero):
        clear.truncdiv(np.array([1]), np.array([0]))


def test_scalar_mul_in_place_and_new_column():
    t = T(("a",), [[2]])
    assert clear.apply_op(Kind.SCALAR_MUL, {"column": "a", "scalar": 3}, [t]).rows() == [(6,)]
    out = clear.apply_op(Kind.SCALAR_MUL, {"column": "a", "scalar": 3, "out": "b"}, [t])
    assert out.columns == ("a", "b")


def test_enumerate_and_distinct():
    t = T(("a",), [[5], [5], [1]])
    assert clear.apply_op(Kind.ENUMERATE, {"out": "i"}, [t]).col("i").tolist() == [0, 1, 2]
    assert clear.distinct(t).rows() == [(1,), (5,)]


def test_missing_column():
    with pytest.raises(MissingColumn):
        T(("a",), [[1]]).col("b")


def test_ragged_rows_rejected():
    with pytest.raises(ArityMismatch):
        T(("a", "b"), [[1, 2], [3]])


# --- CSV ---------------------------------------------------------------------

@given(st.lists(st.tuples(st.integers(-(2**62), 2**62), st.integers(-9, 9)), max_size=20))
def test_csv_round_trip(rows):
    t = table(rows, ("x", "y"))
    assert clear.parse_table(clear.format_table(t)) == t


def test_csv_file_round_trip(tmp_path):
    t = T(("a", "b"), [[1, -2], [3, 4]])
    clear.write_table(t, tmp_path / "sub" / "t.csv")
    assert clear.read_table(tmp_path / "sub" / "t.csv") == t


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as err:
        clear.parse_table("a,b\n1,2\n3,x\n")
    assert err.value.line == 3
    with pytest.raises(ParseError) as err:
        clear.parse_table("a,b\n1\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        clear.parse_table("")


def test_header_only_file_is_empty_table():
    t = clear.parse_table("a,b\n")
    assert len(t) == 0 and t.columns == ("a", "b")


def test_thousand_row_read_is_fast(tmp_path, rng):
    t = Table(("companyID", "price", "x"), rng.integers(0, 1000, size=(1000, 3)))
    clear.write_table(t, tmp_path / "taxi.csv")
    start = time.perf_counter()
    back = clear.read_table(tmp_path / "taxi.csv")
    assert time.perf_counter() - start < 1.0
    assert back == t


# --- oracle --------------------------------------------------------------

def test_oracle_hhi_hand_case():
    dag = fixture_dag("hhi")
    cols = ("companyID", "price")
    out = clear.oracle_execute(dag, {
        "inputA": T(cols, [[0, 50]]),
        "inputB": T(cols, [[1, 30]]),
        "inputC": T(cols, [[2, 20], [2, 0]]),
    })
    # shares 50/30/20 percent -> 2500 + 900 + 400
    assert out["result"].col("hhi").tolist() == [3800]


def test_oracle_hhi_random_gives_single_value(rng):
    dag = fixture_dag("hhi")
    cols = ("companyID", "price")
    inputs = {n: Table(cols, np.stack([rng.integers(0, 5, 10), rng.integers(1, 100, 10)], 1))
              for n in ("inputA", "inputB", "inputC")}
    assert len(clear.oracle_execute(dag, inputs)["result"]) == 1


def test_oracle_credit_hand_case():
    dag = fixture_dag("credit")
    out = clear.oracle_execute(dag, {
        "demographics": T(("ssn", "zip"), [[1, 7], [2, 8]]),
        "scores1": T(("ssn", "score"), [[1, 700]]),
        "scores2": T(("ssn", "score"), [[3, 600]]),
    })
    assert out["result"].rows() == [(7, 700, 1, 700)]


def test_oracle_empty_inputs():
    dag = fixture_dag("hhi")
    empty = Table.empty(("companyID", "price"))
    out = clear.oracle_execute(dag, {"inputA": empty, "inputB": empty, "inputC": empty})
    assert len(out["result"]) == 0


def test_run_clear_step_env():
    step = {"kind": "Filter", "params": {"column": "v", "op": "<", "value": 3}, "inputs": ["t@0"]}
    env = {"t@0": T(("v",), [[1], [5]])}
    assert clear.run_clear_step(step, env).rows() == [(1,)]
    with pytest.raises(MissingColumn):
        clear.run_clear_step(step, {})


# --- properties ----------------------------------------------------------

@given(small_rows, small_rows)
def test_concat_is_multiset_union(a, b):
    out = clear.concat([table(a), table(b)])
    assert Counter(out.rows()) == Counter(a) + Counter(b)


@given(small_rows, small_rows)
def test_join_size_is_sum_of_key_products(a, b):
    out = clear.join(table(a), table(b, ("k", "w")), ["k"], ["k"])
    la, lb = Counter(k for k, _ in a), Counter(k for k, _ in b)
    assert len(out) == sum(la[k] * lb[k] for k in la)


@given(small_rows)
def test_sort_by_is_stable(rows):
    out = clear.sort_by(table(rows), "k")
    keyed = sorted(enumerate(rows), key=lambda iv: (iv[1][0], iv[0]))
    assert out.rows() == [r for _, r in keyed]


@given(small_rows, st.randoms(use_true_random=False))
def test_sum_invariant_under_permutation(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a = clear.aggregate(table(rows), "sum", ["k"], "v", "s")
    b = clear.aggregate(table(shuffled), "sum", ["k"], "v", "s")
    assert a == b
