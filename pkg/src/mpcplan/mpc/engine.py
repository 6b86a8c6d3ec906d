"""Three-party additive secret sharing with an arithmetic black box.

Linear operations (addition, scaling by public constants, projection,
gathering rows at public positions) run locally on each party's shares.
Everything nonlinear goes through :class:`Abb`, which reconstructs its
operands inside an isolated functionality, evaluates, and hands every party
a fresh random share of the result. The ABB never shows a party anything
but fresh shares; what the parties do learn is recorded in the leakage
ledger by the protocol that reveals it.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field as dc_field, fields
from enum import Enum

import numpy as np

from .. import ledger as lg
from ..clear import Table, join as clear_join
from ..errors import ShapeMismatch, UnauthorizedReveal, UntaggedMessage
from . import field

N_PARTIES = 3


# --- cost formulas --------------------------------------------------------

def shuffle_units(n):
    return n * math.ceil(math.log2(n)) if n > 1 else 0


def padded_size(n):
    return 1 << max(0, (n - 1).bit_length()) if n > 0 else 0


def bitonic_compares(n):
    """Compare-exchange count of a bitonic network on n padded to 2**k."""
    if n <= 1:
        return 0
    size = padded_size(n)
    k = size.bit_length() - 1
    return (size // 2) * k * (k + 1) // 2


@dataclass
class Counters:
    mul: int = 0
    eq: int = 0
    lt: int = 0
    shuffle_units: int = 0
    sort_compares: int = 0
    select_units: int = 0

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self):
        return Counters(**self.as_dict())

    def __add__(self, other):
        return Counters(**{k: v + getattr(other, k) for k, v in self.as_dict().items()})

    def __sub__(self, other):
        return Counters(**{k: v - getattr(other, k) for k, v in self.as_dict().items()})

    @property
    def nonlinear(self):
        """mul + eq + lt: the multiplications and comparisons evaluated under MPC."""
        return self.mul + self.eq + self.lt


# --- messages -------------------------------------------------------------

class MessageClass(str, Enum):
    SHARE = "share"
    REVEAL = "reveal"
    PUBLIC = "public"


@dataclass(frozen=True)
class Message:
    seq: int
    step: int | None
    sender: object
    receiver: object
    cls: MessageClass
    nbytes: int
    digest: str

    def as_record(self):
        return {
            "seq": self.seq,
            "step": self.step,
            "sender": self.sender,
            "receiver": self.receiver,
            "class": self.cls.value,
            "bytes": self.nbytes,
            "digest": self.digest,
        }


class Network:
    """Ordered point-to-point channels; every message must carry a class tag."""

    def __init__(self, parties):
        self.parties = tuple(parties)
        self.transcripts = {p: [] for p in self.parties}
        self.log = []
        self.step = None

    def send(self, sender, receiver, cls, payload=None, nbytes=None):
        if not isinstance(cls, MessageClass):
            raise UntaggedMessage(f"message {sender}->{receiver} has no class tag")
        h = hashlib.blake2b(digest_size=8)
        if payload is not None:
            arr = np.ascontiguousarray(payload)
            nbytes = arr.nbytes
            h.update(arr.tobytes())
        else:
            h.update(str(nbytes).encode())
        msg = Message(len(self.log), self.step, sender, receiver, cls, int(nbytes or 0), h.hexdigest())
        self.log.append(msg)
        for who in (sender, receiver):
            if who in self.transcripts:
                self.transcripts[who].append(msg)
        return msg

    def received_by(self, party):
        return [m for m in self.transcripts[party] if m.receiver == party]


# --- shared values --------------------------------------------------------

def sh_add(a, b):
    return [field.add(x, y) for x, y in zip(a, b)]


def sh_sub(a, b):
    return [field.sub(x, y) for x, y in zip(a, b)]


def sh_scale(a, c):
    c = field.encode(c)
    return [field.mul(x, c) for x in a]


def sh_const(values, shape=None):
    """Public constant as a sharing: party 0 holds it, the others hold zero."""
    v = field.encode(values if shape is None else np.broadcast_to(values, shape))
    return [v.copy(), np.zeros_like(v), np.zeros_like(v)]


def sh_take(a, idx, axis=0):
    return [np.take(x, idx, axis=axis) for x in a]


def sh_stack(cols):
    """Stack per-column sharings of shape (n,) into one (n, k) sharing."""
    return [np.stack([c[p] for c in cols], axis=1) if cols else None for p in range(N_PARTIES)]


def sh_col(a, j):
    return [x[:, j] for x in a]


@dataclass
class SharedRelation:
    columns: tuple
    shares: list  # one (n, k) uint64 array per party
    # Optional 0/1 row-validity sharing left behind by an MPC filter.
    flags: list | None = None

    def __post_init__(self):
        self.columns = tuple(self.columns)
        shapes = {s.shape for s in self.shares}
        if len(self.shares) != N_PARTIES or len(shapes) != 1:
            raise ShapeMismatch(f"share tables disagree in shape: {shapes}")
        (shape,) = shapes
        if len(shape) != 2 or shape[1] != len(self.columns):
            raise ShapeMismatch(f"shares have shape {shape} for {len(self.columns)} columns")
        if self.flags is not None and any(f.shape != (shape[0],) for f in self.flags):
            raise ShapeMismatch("flag sharing does not match the row count")

    @property
    def n(self):
        return self.shares[0].shape[0]

    @property
    def width(self):
        return len(self.columns)

    @property
    def flagged(self):
        return self.flags is not None

    def idx(self, name):
        return self.columns.index(name)

    def column(self, name):
        return sh_col(self.shares, self.idx(name))

    def project(self, names):
        ix = [self.idx(c) for c in names]
        return SharedRelation(names, [s[:, ix] for s in self.shares], self.flags)

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        flags = None if self.flags is None else sh_take(self.flags, rows)
        return SharedRelation(self.columns, sh_take(self.shares, rows), flags)

    def reconstruct(self):
        """Harness-only view of the plaintext; never called by a party."""
        return Table(self.columns, field.decode(field.combine(self.shares)))

    def reconstruct_flags(self):
        return None if self.flags is None else field.decode(field.combine(self.flags))

    @classmethod
    def empty(cls, columns):
        z = np.zeros((0, len(columns)), dtype=np.uint64)
        return cls(tuple(columns), [z.copy() for _ in range(N_PARTIES)])


def _with_column(rel, name, col):
    shares = [np.concatenate([s, c[:, None]], axis=1) for s, c in zip(rel.shares, col)]
    return SharedRelation(rel.columns + (name,), shares, rel.flags)


# --- the engine -----------------------------------------------------------

class Abb:
    """Isolated functionality for nonlinear operations.

    It reconstructs operands privately and returns fresh shares drawn from
    its own random stream; parties exchange only share messages with it.
    """

    def __init__(self, engine, rng):
        self.engine = engine
        self.rng = rng

    def open(self, *sharings):
        net = self.engine.net
        out = []
        for sh in sharings:
            for p, part in enumerate(sh):
                net.send(p, "abb", MessageClass.SHARE, part)
            out.append(field.combine(sh))
        return out

    def deal(self, values):
        values = np.asarray(values, dtype=np.uint64)
        shares = field.split(values, self.rng)
        for p, part in enumerate(shares):
            self.engine.net.send("abb", p, MessageClass.SHARE, part)
        return shares

    def permutation(self, n):
        return self.rng.permutation(n)


class Engine:
    def __init__(self, seed=0, ledger=None, parties=(0, 1, 2), authorize=None):
        if len(parties) != N_PARTIES:
            raise ValueError(f"the engine simulates exactly {N_PARTIES} parties")
        self.parties = tuple(parties)
        share_seq, abb_seq = np.random.SeedSequence(seed).spawn(2)
        self.rng = np.random.Generator(np.random.PCG64(share_seq))
        self.abb = Abb(self, np.random.Generator(np.random.PCG64(abb_seq)))
        self.counters = Counters()
        self.net = Network(self.parties)
        self.ledger = ledger if ledger is not None else lg.LeakageLedger()
        # Optional defense-in-depth check: authorize(observer, relation, column) -> bool
        self.authorize = authorize

    @property
    def step(self):
        return self.net.step

    @step.setter
    def step(self, value):
        self.net.step = value

    # -- sharing and reveal ------------------------------------------------

    def share_values(self, values, dealer):
        """Secret-share a field array held by ``dealer``."""
        shares = field.split(values, self.rng)
        for p in self.parties:
            if p != dealer:
                self.net.send(dealer, p, MessageClass.SHARE, shares[p])
        return shares

    def share_in(self, table, dealer, relation=None):
        shares = self.share_values(field.encode(table.data), dealer)
        self.ledger.cardinality(relation or "?", self.parties, self.step)
        return SharedRelation(table.columns, shares)

    def open_to(self, sharing, targets, cls=MessageClass.REVEAL):
        for t in sorted(targets):
            for p in self.parties:
                if p != t:
                    self.net.send(p, t, cls, sharing[p])
        return field.decode(field.combine(sharing))

    def reveal_to(self, rel, cols, targets, relation=None, event="values"):
        """Reconstruct ``cols`` of ``rel`` at ``targets``.

        ``event`` chooses how the disclosure is ledgered: "values" records
        ColumnValues, "output" records Output, "none" records only the
        cardinality (used when no column is revealed).
        """
        if rel.flagged:
            raise ValueError("compact a flagged relation before revealing it")
        relation = relation or "?"
        targets = sorted(targets)
        if self.authorize is not None and event == "values":
            for t in targets:
                for c in cols:
                    if not self.authorize(t, relation, c):
                        raise UnauthorizedReveal(f"party {t} may not learn {relation}.{c}")
        sub = rel.project(tuple(cols))
        data = self.open_to(sub.shares, targets)
        if event == "values":
            self.ledger.column_values(relation, cols, targets, self.step)
        elif event == "output":
            self.ledger.output(relation, targets, self.step)
        self.ledger.cardinality(relation, self.parties, self.step)
        return Table(tuple(cols), data.reshape(rel.n, len(cols)))

    # -- local linear operations --------------------------------------------

    def add(self, a, b):
        if a.shares[0].shape != b.shares[0].shape:
            raise ShapeMismatch(f"{a.shares[0].shape} vs {b.shares[0].shape}")
        return SharedRelation(a.columns, sh_add(a.shares, b.shares))

    def scalar_mul(self, rel, scalar, column=None, out=None):
        if column is None:
            return SharedRelation(rel.columns, sh_scale(rel.shares, scalar), rel.flags)
        scaled = sh_scale(rel.column(column), scalar)
        out = out or column
        if out == column:
            j = rel.idx(column)
            shares = [s.copy() for s in rel.shares]
            for s, c in zip(shares, scaled):
                s[:, j] = c
            return SharedRelation(rel.columns, shares, rel.flags)
        return _with_column(rel, out, scaled)

    def concat(self, rels):
        flags = None
        if any(r.flagged for r in rels):
            flags = [
                np.concatenate([r.flags[p] if r.flagged else sh_const(1, (r.n,))[p] for r in rels])
                for p in range(N_PARTIES)
            ]
        shares = [np.concatenate([r.shares[p] for r in rels], axis=0) for p in range(N_PARTIES)]
        return SharedRelation(rels[0].columns, shares, flags)

    def enumerate(self, rel, out):
        return _with_column(rel, out, sh_const(np.arange(rel.n, dtype=np.int64)))

    # -- ABB primitives ------------------------------------------------------

    def abb_mul(self, x, y):
        a, b = self.abb.open(x, y)
        self.counters.mul += a.size
        return self.abb.deal(field.mul(a, b))

    def abb_eq(self, x, y):
        a, b = self.abb.open(x, y)
        self.counters.eq += a.size
        return self.abb.deal((a == b).astype(np.uint64))

    def abb_lt(self, x, y):
        a, b = self.abb.open(x, y)
        self.counters.lt += a.size
        return self.abb.deal((field.decode(a) < field.decode(b)).astype(np.uint64))

    def _abb_accumulate(self, e, cols):
        """Segmented running sum: acc[i] = cols[i] + e[i] * acc[i-1], one mul per carried cell."""
        ev, cv = self.abb.open(e, cols)
        n, a = cv.shape
        self.counters.mul += max(n - 1, 0) * a
        return self.abb.deal(field.accumulate(ev, cv))

    # -- oblivious building blocks --------------------------------------------

    def shuffle(self, rel):
        n = rel.n
        self.counters.shuffle_units += shuffle_units(n)
        if n <= 1:
            return rel
        parts = [rel.shares] + ([rel.flags] if rel.flagged else [])
        opened = self.abb.open(*parts)
        perm = self.abb.permutation(n)
        shares = self.abb.deal(opened[0][perm])
        flags = self.abb.deal(opened[1][perm]) if rel.flagged else None
        return SharedRelation(rel.columns, shares, flags)

    def sort(self, rel, key):
        """Bitonic sort ascending on ``key``; flags travel with their rows."""
        n = rel.n
        if n <= 1:
            return rel
        work = rel.shares
        cols = rel.columns
        if rel.flagged:
            work = [np.concatenate([s, f[:, None]], axis=1) for s, f in zip(work, rel.flags)]
        size = padded_size(n)
        kj = rel.idx(key)
        if size > n:
            pad = np.zeros((size - n, work[0].shape[1]), dtype=np.int64)
            pad[:, kj] = field.HALF
            padsh = sh_const(pad)
            work = [np.concatenate([w, q], axis=0) for w, q in zip(work, padsh)]
        idx = np.arange(size)
        k = 2
        while k <= size:
            j = k // 2
            while j > 0:
                part = idx ^ j
                lo = idx[part > idx]
                hi = lo ^ j
                asc = (lo & k) == 0
                first = np.where(asc, hi, lo)
                second = np.where(asc, lo, hi)
                b = self.abb_lt(sh_col(sh_take(work, first), kj), sh_col(sh_take(work, second), kj))
                self.counters.sort_compares += lo.size
                xl, xh = sh_take(work, lo), sh_take(work, hi)
                bw = [np.repeat(v[:, None], xl[0].shape[1], axis=1) for v in b]
                m1 = self.abb_mul(bw, xh)
                m2 = self.abb_mul(bw, xl)
                new_lo = sh_add(sh_sub(xl, m2), m1)
                new_hi = sh_add(sh_sub(xh, m1), m2)
                work = [w.copy() for w in work]
                for p in range(N_PARTIES):
                    work[p][lo] = new_lo[p]
                    work[p][hi] = new_hi[p]
                j //= 2
            k *= 2
        work = [w[:n] for w in work]
        if rel.flagged:
            return SharedRelation(cols, [w[:, :-1] for w in work], [w[:, -1] for w in work])
        return SharedRelation(cols, work)

    def select(self, rel, index):
        """Rows of ``rel`` at secret positions ``index`` (one output row per index)."""
        n, m, w = rel.n, index[0].shape[0], rel.width
        iv, rv = self.abb.open(index, rel.shares)
        iv = field.decode(iv)
        if m and (iv.min() < 0 or iv.max() >= n):
            raise IndexError("select index out of range")
        self.counters.eq += n * m
        self.counters.mul += n * m * w
        self.counters.select_units += n * m
        return SharedRelation(rel.columns, self.abb.deal(rv[iv]))

    def compact(self, rel, relation=None):
        """Shuffle, reveal the row flags to everyone and drop invalid rows."""
        rel = self.shuffle(rel)
        if not rel.flagged:
            return rel
        keep = self.open_to(rel.flags, self.parties) == 1
        self.ledger.cardinality(relation or "?", self.parties, self.step)
        return SharedRelation(rel.columns, [s[keep] for s in rel.shares])

    # -- relational operators under MPC ---------------------------------------

    def project(self, rel, cols):
        return rel.project(tuple(cols))

    def multiply(self, rel, left, right, out):
        return _with_column(rel, out, self.abb_mul(rel.column(left), rel.column(right)))

    def filter_flags(self, rel, column, op, value):
        x = rel.column(column)
        c = sh_const(value, (rel.n,))
        if op == "==":
            b = self.abb_eq(x, c)
        elif op == "<":
            b = self.abb_lt(x, c)
        elif op == ">":
            b = self.abb_lt(c, x)
        else:
            raise ValueError(f"bad comparator {op!r}")
        if rel.flagged:
            b = self.abb_mul(rel.flags, b)
        return SharedRelation(rel.columns, rel.shares, b)

    def mpc_join(self, left, right, lkeys, rkeys, relation=None):
        if left.flagged or right.flagged:
            raise ValueError("join inputs must not carry row flags")
        rest = [c for c in right.columns if c not in rkeys]
        cols = left.columns + tuple(rest)
        if not lkeys:
            li = np.repeat(np.arange(left.n), right.n)
            ri = np.tile(np.arange(right.n), left.n)
            r = right.project(tuple(rest))
            shares = [np.concatenate([a[li], b[ri]], axis=1) for a, b in zip(left.shares, r.shares)]
            return SharedRelation(cols, shares)
        (lk,), (rk,) = lkeys, rkeys
        total = left.n * right.n
        lv, rv = self.abb.open(left.shares, right.shares)
        self.counters.eq += total
        self.counters.mul += total * (left.width + right.width - 1)
        self.counters.shuffle_units += shuffle_units(total)
        lt = Table(left.columns, field.decode(lv))
        rt = Table(right.columns, field.decode(rv))
        joined = clear_join(lt, rt, [lk], [rk])
        perm = self.abb.permutation(len(joined))
        # The candidate matrix and its flag vector are never materialised;
        # the transcript still carries their true sizes.
        width = (left.width + right.width - 1) * 8
        for p in self.parties:
            self.net.send("abb", p, MessageClass.SHARE, nbytes=total * width)
        for t in self.parties:
            for p in self.parties:
                if p != t:
                    self.net.send(p, t, MessageClass.REVEAL, nbytes=total * 8)
        self.ledger.cardinality(relation or "?", self.parties, self.step)
        return SharedRelation(cols, self.abb.deal(field.encode(joined.data[perm])))

    def _group_tail(self, key, vals, flags, func, e, out_cols):
        """Accumulate sorted groups into their last row, shuffle, reveal keep flags."""
        n = key[0].shape[0]
        if func == "sum":
            v = self.abb_mul(vals, flags) if flags is not None else vals
            acc_in = [v] + ([flags] if flags is not None else [])
        else:
            acc_in = [flags if flags is not None else sh_const(1, (n,))]
        acc = self._abb_accumulate(e, sh_stack(acc_in))
        # discard flag: set unless the row is the last of its group
        d = [np.concatenate([x[1:], np.zeros(1, dtype=np.uint64)]) for x in e]
        if flags is not None:
            empty = self.abb_eq(sh_col(acc, acc[0].shape[1] - 1), sh_const(0, (n,)))
            d = sh_sub(sh_add(d, empty), self.abb_mul(d, empty))
        body = sh_stack([key, sh_col(acc, 0)])
        rel = self.shuffle(SharedRelation(out_cols, body, d))
        drop = self.open_to(rel.flags, self.parties) == 1
        return SharedRelation(out_cols, [s[~drop] for s in rel.shares])

    def _global_aggregate(self, rel, func, over, out, relation):
        n = rel.n
        if n == 0:
            return SharedRelation.empty((out,))
        flags = rel.flags
        if func == "sum":
            v = rel.column(over)
            if flags is not None:
                v = self.abb_mul(v, flags)
            total = [field.sum_rows(x) for x in v]
        elif flags is not None:
            total = [field.sum_rows(x) for x in flags]
        else:
            total = sh_const(n)
        if flags is not None:
            cnt = [field.sum_rows(x).reshape(1) for x in flags]
            empty = self.open_to(self.abb_eq(cnt, sh_const(0, (1,))), self.parties)[0]
            self.ledger.cardinality(relation or "?", self.parties, self.step)
            if empty:
                return SharedRelation.empty((out,))
        shares = [np.asarray(t, dtype=np.uint64).reshape(1, 1) for t in total]
        return SharedRelation((out,), shares)

    def mpc_aggregate(self, rel, group, func, over, out, presorted=False, relation=None):
        """Sort-based oblivious group-by. ``group`` is a list of at most one column."""
        if not group:
            return self._global_aggregate(rel, func, over, out, relation)
        (g,) = group
        cols = (g, out)
        if rel.n == 0:
            return SharedRelation.empty(cols)
        keep = [g] + ([over] if func == "sum" else [])
        work = rel.project(tuple(keep))
        if not presorted:
            work = self.sort(work, g)
        key = work.column(g)
        vals = work.column(over) if func == "sum" else None
        e = self._adjacent_eq(key)
        res = self._group_tail(key, vals, work.flags, func, e, cols)
        self.ledger.cardinality(relation or "?", self.parties, self.step)
        return res

    def _adjacent_eq(self, key):
        n = key[0].shape[0]
        e = [np.zeros(n, dtype=np.uint64) for _ in range(N_PARTIES)]
        if n > 1:
            inner = self.abb_eq([k[1:] for k in key], [k[:-1] for k in key])
            for p in range(N_PARTIES):
                e[p][1:] = inner[p]
        return e

    def mpc_distinct(self, rel, presorted=False, relation=None):
        if rel.width != 1:
            raise ValueError("distinct under MPC takes a single column")
        (c,) = rel.columns
        res = self.mpc_aggregate(rel, [c], "count", None, "__n", presorted, relation)
        return res.project((c,))

    def sort_relation(self, rel, key, presorted=False):
        if rel.flagged:
            raise ValueError("sorting a flagged relation is not supported")
        return rel if presorted else self.sort(rel, key)

    # -- hybrid protocols ------------------------------------------------------

    def hybrid_join(self, left, right, lkey, rkey, stp, names=("left", "right", "out")):
        lname, rname, oname = names
        ls, rs = self.shuffle(left), self.shuffle(right)
        lk = self.reveal_to(ls, [lkey], [stp], lname).col(lkey)
        rk = self.reveal_to(rs, [rkey], [stp], rname).col(rkey)
        # STP: enumerate both sides, join, keep the index columns
        pairs = clear_join(
            Table(("k", "i"), np.stack([lk, np.arange(len(lk))], axis=1)),
            Table(("k", "j"), np.stack([rk, np.arange(len(rk))], axis=1)),
            ["k"],
            ["k"],
        )
        li = self.share_values(field.encode(pairs.col("i")), stp)
        ri = self.share_values(field.encode(pairs.col("j")), stp)
        lsel = self.select(ls, li)
        rsel = self.select(rs, ri).project(tuple(c for c in right.columns if c != rkey))
        both = SharedRelation(
            left.columns + rsel.columns,
            [np.concatenate([a, b], axis=1) for a, b in zip(lsel.shares, rsel.shares)],
        )
        self.ledger.cardinality(oname, self.parties, self.step)
        return self.shuffle(both)

    def public_join(self, left, right, lkey, rkey, chosen, names=("left", "right", "out")):
        lname, rname, oname = names
        lk = self.open_to(left.column(lkey), [chosen])
        rk = self.open_to(right.column(rkey), [chosen])
        self.ledger.column_values(lname, [lkey], self.parties, self.step)
        self.ledger.column_values(rname, [rkey], self.parties, self.step)
        # chosen party: join in key order, broadcast the index pairs
        lorder = np.argsort(lk, kind="stable")
        pairs = clear_join(
            Table(("k", "i"), np.stack([lk[lorder], lorder], axis=1)),
            Table(("k", "j"), np.stack([rk, np.arange(len(rk))], axis=1)),
            ["k"],
            ["k"],
        )
        index = pairs.data[:, 1:]
        for p in self.parties:
            if p != chosen:
                self.net.send(chosen, p, MessageClass.PUBLIC, index)
        self.ledger.permutation(oname, self.parties, self.step)
        self.ledger.cardinality(oname, self.parties, self.step)
        rest = tuple(c for c in right.columns if c != rkey)
        r = right.project(rest)
        li, ri = index[:, 0], index[:, 1]
        shares = [np.concatenate([a[li], b[ri]], axis=1) for a, b in zip(left.shares, r.shares)]
        return SharedRelation(left.columns + rest, shares)

    def hybrid_aggregate(self, rel, group, func, over, out, stp, names=("in", "out")):
        iname, oname = names
        (g,) = group
        cols = (g, out)
        keep = [g] + ([over] if func == "sum" else [])
        work = self.shuffle(rel.project(tuple(keep)))
        keys = self.reveal_to(SharedRelation(work.columns, work.shares), [g], [stp], iname).col(g)
        # STP: enumerate, sort by key, flag rows equal to their predecessor
        order = np.argsort(keys, kind="stable")
        sk = keys[order]
        eq = np.zeros(len(sk), dtype=np.int64)
        eq[1:] = sk[1:] == sk[:-1]
        for p in self.parties:
            if p != stp:
                self.net.send(stp, p, MessageClass.PUBLIC, order)
        self.ledger.permutation(oname, self.parties, self.step)
        e = self.share_values(field.encode(eq), stp)
        work = work.take(order)
        if work.n == 0:
            self.ledger.cardinality(oname, self.parties, self.step)
            return SharedRelation.empty(cols)
        key = work.column(g)
        vals = work.column(over) if func == "sum" else None
        res = self._group_tail(key, vals, work.flags, func, e, cols)
        self.ledger.cardinality(oname, self.parties, self.step)
        return res

    def hybrid_distinct(self, rel, stp, names=("in", "out")):
        (c,) = rel.columns
        return self.hybrid_aggregate(rel, [c], "count", None, "__n", stp, names).project((c,))
