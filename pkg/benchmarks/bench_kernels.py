"""Compiled versus pure-Python kernel timings for one sparse product step.

Each case times ``A x + b`` rounded once into the register format (the
inner step of both the Newton-Raphson and Clenshaw loops) and checks that
both backends produce identical registers.

    python3 benchmarks/bench_kernels.py --sizes 256 1024 4096 --repeat 5
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from digiq import kernels
from digiq.decompose import decomposition_of
from digiq.fixedpoint import FixedPointFormat
from digiq.operators import laplacian1d, random_hermitian
from digiq.state import _combine, from_vector


def _time(fn, repeat):
    out = None
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), out


def bench_case(name, op, fmt, repeat, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    x = from_vector(v / np.linalg.norm(v), fmt)
    b = from_vector(np.ones(op.dim) / np.sqrt(op.dim), fmt)
    dec = decomposition_of(op)
    dec.block_arrays(fmt)  # build the block cache outside the timed region

    def step():
        return _combine(fmt, x.n, op=dec, x=x, terms=[(1, b)])

    row = {"case": name, "N": op.dim, "d": op.d, "format": str(fmt)}
    results = {}
    for backend in ("compiled", "python"):
        if backend == "compiled" and not kernels.compiled_available():
            continue
        prev = kernels.set_backend(backend)
        try:
            row[backend], results[backend] = _time(step, repeat)
        finally:
            kernels.set_backend(prev)
    if len(results) == 2:
        row["identical"] = results["compiled"].same_bits(results["python"])
        row["speedup"] = row["python"] / row["compiled"]
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sparsity", type=int, default=6)
    args = ap.parse_args(argv)
    fmt = FixedPointFormat(64, 48)
    rows = []
    for N in args.sizes:
        rows.append(bench_case("laplacian1d", laplacian1d(N), fmt, args.repeat))
        rows.append(bench_case("random_hermitian", random_hermitian(N, args.sparsity, seed=N), fmt,
                               args.repeat))
    print(f"backend available: compiled={kernels.compiled_available()}")
    print(f"{'case':<18}{'N':>7}{'d':>4}  {'compiled ms':>12}{'python ms':>12}{'speedup':>9}  same")
    for r in rows:
        c = r.get("compiled")
        print(f"{r['case']:<18}{r['N']:>7}{r['d']:>4}  "
              f"{(c * 1e3 if c else float('nan')):>12.3f}{r['python'] * 1e3:>12.3f}"
              f"{r.get('speedup', float('nan')):>9.1f}  {r.get('identical', '-')}")
    return rows


if __name__ == "__main__":
    main()
