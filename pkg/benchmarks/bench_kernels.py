#!/usr/bin/env python3
"""Time the compiled and pure-Python graph kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--nodes 1000] [--repeat 5] [--csv out.csv]
"""
import argparse
import csv
import sys
import timeit

import numpy as np

from rumorloc import kernels
from rumorloc.diffusion import sample_delays
from rumorloc.experiments import generate_network


def cases(g, rng):
    delays = sample_delays(g, rng, size=200)
    sensors = np.sort(rng.choice(g.n_nodes, 50, replace=False)).astype(np.int64)

    def tree(k):
        return k.sssp(g.indptr, g.indices, g.half_mean, g.half_var, 0)

    yield "sssp", lambda k: tree(k)
    yield "betweenness", lambda k: k.betweenness(g.indptr, g.indices, g.half_mean)
    yield "batch_arrivals x200", lambda k: k.batch_arrivals(g.indptr, g.indices, g.edge_ids, delays, 0)

    par, dvar = None, None

    def shared(k):
        nonlocal par, dvar
        if par is None:
            _, dvar, par = tree(k)
        return k.shared_variance(par, dvar, sensors)
    yield "shared_variance k=50", shared


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if len(backends) < 2:
        print("compiled kernels not built; timing the Python backend only", file=sys.stderr)
    g = generate_network("barabasi_albert", {"n": args.nodes}, seed=args.seed)
    rows = []
    for name, fn in cases(g, np.random.default_rng(args.seed)):
        times = {}
        for b in backends:
            mod = kernels.get_backend(b)
            # betweenness is O(nm); one call is enough to time it
            number = 1 if name == "betweenness" else 3
            t = timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)
            times[b] = min(t) / number
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        rows.append([name, args.nodes, times.get("cython", float("nan")), times["python"], speedup])
        print(f"{name:24s} cython {times.get('cython', float('nan')) * 1e3:10.3f} ms   "
              f"python {times['python'] * 1e3:10.3f} ms   x{speedup:.1f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "nodes", "cython_s", "python_s", "speedup"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
