"""Time the compiled field kernels against the numpy fallback.

    python3 benchmarks/bench_fieldops.py [--rows N] [--repeat R]

Also times one end-to-end simulated run of the credit query per backend.
"""
import argparse
import timeit

import numpy as np

from mpcplan import datagen, fixture_path
from mpcplan.ir import build_dag, load_document
from mpcplan.mpc import field
from mpcplan.orchestrator import simulate


def kernels(rows, rng):
    a = field.random_elems(rng, (rows, 4))
    b = field.random_elems(rng, (rows, 4))
    flags = rng.integers(0, 2, rows).astype(np.uint64)
    return {
        "mul_mod": lambda: field.mul(a, b),
        "sum_mod": lambda: field.sum_rows(a),
        "accumulate": lambda: field.accumulate(flags, a),
    }


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = ["python"]
    try:
        field.use_backend("compiled")
        backends.append("compiled")
    except ImportError:
        print("compiled extension not built; timing the fallback only")
    original = field.BACKEND

    doc = load_document(fixture_path("credit"))
    inputs = datagen.random_inputs(build_dag(doc), np.random.default_rng(0), 1000, trial=5)

    results = {}
    for name in backends:
        field.use_backend(name)
        rng = np.random.default_rng(1)
        timings = {k: best(fn, args.repeat) for k, fn in kernels(args.rows, rng).items()}
        timings["simulate(credit)"] = best(lambda: simulate(doc, inputs, seed=1), max(1, args.repeat // 2))
        results[name] = timings
    field.use_backend(original)

    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for k in results["python"]:
        row = f"{k:<18}" + "".join(f"{results[b][k] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][k] / results['compiled'][k]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
