"""Random input tables for equivalence trials."""
import numpy as np

from .clear import Table
from .ir import Kind

DEFAULT_DOMAIN = (0, 10)


def random_table(node, n, rng):
    cols = []
    for c in node.out_meta.columns:
        lo, hi = c.domain or DEFAULT_DOMAIN
        cols.append(rng.integers(lo, hi, size=n, dtype=np.int64))
    data = np.stack(cols, axis=1) if cols else np.zeros((n, 0), dtype=np.int64)
    return Table(tuple(node.columns), data.reshape(n, len(cols)))


def random_inputs(dag, rng, max_rows=1000, trial=None):
    """One table per Input node.

    Trial 0 is all-empty and trial 1 has a single row per input; later
    trials draw each size uniformly from ``[0, max_rows]``.
    """
    out = {}
    for node in dag.nodes.values():
        if node.kind is not Kind.INPUT:
            continue
        if trial == 0:
            n = 0
        elif trial == 1:
            n = 1
        else:
            n = int(rng.integers(0, max_rows + 1))
        out[node.name] = random_table(node, n, rng)
    return out
