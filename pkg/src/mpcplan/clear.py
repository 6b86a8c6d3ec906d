"""Cleartext relational executor, CSV table I/O and the single-site oracle."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArityMismatch, DivisionByZero, MissingColumn, ParseError
from .ir import Kind, topo_sort


@dataclass(frozen=True, eq=False)
class Table:
    columns: tuple
    data: np.ndarray

    def __post_init__(self):
        cols = tuple(self.columns)
        data = np.asarray(self.data, dtype=np.int64)
        if data.size == 0:
            data = data.reshape(0 if data.ndim < 2 else data.shape[0], len(cols))
        if data.ndim != 2 or data.shape[1] != len(cols):
            raise ArityMismatch(f"rows have width {data.shape[-1] if data.ndim else 0}, schema has {len(cols)}")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_rows(cls, columns, rows):
        rows = list(rows)
        for i, r in enumerate(rows):
            if len(r) != len(columns):
                raise ArityMismatch(f"row {i} has {len(r)} values, schema has {len(columns)}")
        data = np.array(rows, dtype=np.int64).reshape(len(rows), len(columns))
        return cls(tuple(columns), data)

    @classmethod
    def empty(cls, columns):
        return cls(tuple(columns), np.zeros((0, len(columns)), dtype=np.int64))

    def __len__(self):
        return self.data.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, Table)
            and self.columns == other.columns
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"Table({list(self.columns)}, {self.rows()})"

    def idx(self, name):
        try:
            return self.columns.index(name)
        except ValueError:
            raise MissingColumn(f"no column {name!r} in {list(self.columns)}") from None

    def col(self, name):
        return self.data[:, self.idx(name)]

    def rows(self):
        return [tuple(int(v) for v in r) for r in self.data]

    def multiset(self):
        return sorted(self.rows())

    def select(self, names):
        return Table(tuple(names), self.data[:, [self.idx(n) for n in names]])


# --- CSV ------------------------------------------------------------------

def parse_table(text, source="<string>"):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{source} is empty", 1) from None
    header = [h.strip() for h in header]
    if not all(header) or len(set(header)) != len(header):
        raise ParseError(f"bad header {header}", 1)
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(rec)}", lineno)
        try:
            rows.append([int(v) for v in rec])
        except ValueError:
            raise ParseError(f"non-integer cell in {rec}", lineno) from None
    return Table.from_rows(header, rows)


def read_table(path):
    path = Path(path)
    return parse_table(path.read_text(), str(path))


def format_table(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    w.writerows(table.data.tolist())
    return buf.getvalue()


def write_table(table, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_table(table))


# --- operators ------------------------------------------------------------

def _compare(values, op, const):
    if op == "==":
        return values == const
    if op == "<":
        return values < const
    return values > const


def truncdiv(a, b):
    """Integer division rounding toward zero, elementwise."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if np.any(b == 0):
        raise DivisionByZero("division by zero")
    q = np.abs(a) // np.abs(b)
    return np.where((a < 0) != (b < 0), -q, q)


def concat(tables):
    return Table(tables[0].columns, np.concatenate([t.data for t in tables], axis=0))


def join(left, right, lkeys, rkeys):
    """Inner equi-join; output rows follow left order, then right order per key."""
    rest = [c for c in right.columns if c not in rkeys]
    cols = left.columns + tuple(rest)
    if not lkeys:
        li = np.repeat(np.arange(len(left)), len(right))
        ri = np.tile(np.arange(len(right)), len(left))
    else:
        index = defaultdict(list)
        rk = right.data[:, [right.idx(k) for k in rkeys]]
        for j, key in enumerate(map(tuple, rk.tolist())):
            index[key].append(j)
        lk = left.data[:, [left.idx(k) for k in lkeys]]
        pairs = [(i, j) for i, key in enumerate(map(tuple, lk.tolist())) for j in index.get(key, ())]
        li = np.array([p[0] for p in pairs], dtype=np.int64)
        ri = np.array([p[1] for p in pairs], dtype=np.int64)
    data = np.concatenate(
        [left.data[li], right.data[ri][:, [right.idx(c) for c in rest]]], axis=1
    )
    return Table(cols, data)


def aggregate(table, func, group, over, out):
    """Group-by sum/count; output sorted ascending by the group key."""
    cols = tuple(group) + (out,)
    if len(table) == 0:
        return Table.empty(cols)
    vals = table.col(over) if func == "sum" else np.ones(len(table), dtype=np.int64)
    if not group:
        return Table(cols, np.array([[int(vals.sum())]], dtype=np.int64))
    keys = table.data[:, [table.idx(g) for g in group]]
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(sums, inverse.reshape(-1), vals)
    return Table(cols, np.concatenate([uniq, sums[:, None]], axis=1))


def distinct(table):
    if len(table) == 0:
        return table
    return Table(table.columns, np.unique(table.data, axis=0))


def sort_by(table, column):
    order = np.argsort(table.col(column), kind="stable")
    return Table(table.columns, table.data[order])


def apply_op(kind, params, inputs):
    """Evaluate one relational operator on cleartext tables."""
    t = inputs[0] if inputs else None
    if kind is Kind.CONCAT:
        return concat(inputs)
    if kind is Kind.PROJECT:
        return t.select(params["columns"])
    if kind is Kind.FILTER:
        mask = _compare(t.col(params["column"]), params["op"], params["value"])
        return Table(t.columns, t.data[mask])
    if kind is Kind.JOIN:
        return join(inputs[0], inputs[1], params["left"], params["right"])
    if kind is Kind.AGGREGATE:
        return aggregate(t, params["func"], params["group"], params.get("over"), params["out"])
    if kind in (Kind.MULTIPLY, Kind.DIVIDE):
        a, b = t.col(params["left"]), t.col(params["right"])
        res = a * b if kind is Kind.MULTIPLY else truncdiv(a, b)
        return Table(t.columns + (params["out"],), np.concatenate([t.data, res[:, None]], axis=1))
    if kind is Kind.SCALAR_MUL:
        res = t.col(params["column"]) * params["scalar"]
        out = params.get("out") or params["column"]
        if out == params["column"]:
            data = t.data.copy()
            data[:, t.idx(out)] = res
            return Table(t.columns, data)
        return Table(t.columns + (out,), np.concatenate([t.data, res[:, None]], axis=1))
    if kind is Kind.ENUMERATE:
        res = np.arange(len(t), dtype=np.int64)
        return Table(t.columns + (params["out"],), np.concatenate([t.data, res[:, None]], axis=1))
    if kind is Kind.SORT_BY:
        return sort_by(t, params["column"])
    if kind is Kind.DISTINCT:
        return distinct(t)
    if kind is Kind.OUTPUT:
        return t
    raise ValueError(f"no cleartext rule for {kind}")


def run_clear_step(step, env):
    """Run a plan step of op ``clear`` against ``env`` (relation name -> Table)."""
    inputs = []
    for name in step["inputs"]:
        if name not in env:
            raise MissingColumn(f"relation {name!r} not available")
        inputs.append(env[name])
    return apply_op(Kind(step["kind"]), step["params"], inputs)


def oracle_execute(dag, inputs):
    """Evaluate the DAG at one logical site.

    ``inputs`` maps Input node names to tables; the result maps Output node
    names to tables.
    """
    values = {}
    for i in topo_sort(dag.nodes):
        node = dag.nodes[i]
        if node.kind is Kind.INPUT:
            t = inputs[node.name]
            values[i] = t.select(node.columns)
            continue
        values[i] = apply_op(node.kind, node.params, [values[j] for j in node.inputs])
    return {n.name: values[n.id] for n in dag.outputs()}
