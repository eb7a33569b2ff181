"""
Time the numba and numpy statevector backends on the same gate programs.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --rows 512 --repeats 5 --csv bench.csv

Each case evaluates one random design on ``rows`` independent angle rows,
which is the shape of a parameter-shift gradient batch.  Both backends are
called directly, so ``QCDS_DISABLE_NUMBA`` does not affect this script.
"""

import argparse
import csv
import sys
import time

import numpy as np

from qcds import _kernels as K
from qcds.circuit import compile_design
from qcds.design import random_design

CASES = ((4, 6), (6, 6), (9, 6), (12, 4))


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_case(n_qubits, n_layers, rows, repeats, rng):
    design = random_design(rng, n_qubits, n_layers)
    ops = compile_design(design)
    angles = rng.uniform(-np.pi, np.pi, (rows, design.n_params + n_qubits))
    n_measure = min(3, n_qubits)
    ref = K.run_program_numpy(ops, angles, n_qubits, n_measure)
    got = K.run_program_numba(ops, angles, n_qubits, n_measure)  # also triggers compilation
    err = float(np.max(np.abs(ref - got)))
    t_numpy = best_time(lambda: K.run_program_numpy(ops, angles, n_qubits, n_measure), repeats)
    t_numba = best_time(lambda: K.run_program_numba(ops, angles, n_qubits, n_measure), repeats)
    return {
        "n_qubits": n_qubits,
        "n_layers": n_layers,
        "rows": rows,
        "ops": len(ops),
        "numpy_s": t_numpy,
        "numba_s": t_numba,
        "speedup": t_numpy / t_numba,
        "max_abs_diff": err,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--rows", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default=None, help="also write results here")
    args = ap.parse_args(argv)

    if not K.NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    results = [run_case(n, l, args.rows, args.repeats, rng) for n, l in CASES]

    print(f"{'qubits':>6} {'layers':>6} {'ops':>5} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max diff':>9}")
    for r in results:
        print(f"{r['n_qubits']:>6} {r['n_layers']:>6} {r['ops']:>5} {1e3 * r['numpy_s']:>10.2f} "
              f"{1e3 * r['numba_s']:>10.2f} {r['speedup']:>8.2f} {r['max_abs_diff']:>9.1e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(results[0]))
            w.writeheader()
            w.writerows(results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
