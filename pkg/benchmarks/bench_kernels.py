"""Benchmark the compiled numerical core against the pure-numpy fallback.

Times the four kernel functions at the training scale (16 visible + 16 hidden
on a 2x2 cell graph) and cross-checks that both backends agree to floating
point tolerance. Run from a built checkout:

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from qarbm import kernels, topology
from qarbm.model import RBMGraph


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5,
                    help="timing repeats per kernel (best is reported)")
    args = ap.parse_args()

    backends = kernels.available_backends()
    if len(backends) < 2:
        print("only the %r backend is importable; timing it alone"
              % kernels.BACKEND)

    graph = RBMGraph.from_partition(
        topology.chimera_rbm(topology.build_chimera(2, 2)))
    rng = np.random.default_rng(0)
    w = np.where(graph.mask, rng.normal(0.0, 0.5, (graph.n, graph.m)), 0.0)
    bv = rng.normal(0.0, 0.2, graph.n)
    bh = rng.normal(0.0, 0.2, graph.m)

    batch = rng.integers(0, 2, (1000, graph.n)).astype(np.int8) * 2 - 1
    uni = rng.random((1000, graph.m))
    spins = rng.integers(0, 2, (100000, graph.units)).astype(np.int8) * 2 - 1
    coeff = rng.normal(0.0, 0.3, graph.n_edges)
    fields = rng.normal(0.0, 0.1, graph.units)

    cases = [
        ("visible_logweights (2^16 states)",
         lambda m: m.visible_logweights(w, bv, bh)),
        ("visible_moments    (2^16 states)",
         lambda m: m.visible_moments(w, bv, bh)),
        ("gibbs_halfstep     (1000 rows)",
         lambda m: m.gibbs_halfstep(batch, w, bh, uni)),
        ("batch_energies     (100000 rows)",
         lambda m: m.batch_energies(spins, graph.edges_joint, coeff, fields)),
    ]

    print(f"{'kernel':<36} " + " ".join(f"{n:>12}" for n in backends)
          + ("  speedup" if len(backends) == 2 else ""))
    for label, call in cases:
        best = {}
        ref = None
        for name, mod in backends.items():
            out = call(mod)
            if ref is None:
                ref = out
            else:
                # backends must agree; summation order may differ slightly
                pair = zip(ref, out) if isinstance(ref, tuple) else [(ref, out)]
                for a, b in pair:
                    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
            best[name] = _best_of(lambda: call(mod), args.repeat)
        row = f"{label:<36} " + " ".join(
            f"{best[n] * 1000:>10.2f}ms" for n in backends)
        if len(best) == 2:
            py, comp = best["python"], best["compiled"]
            row += f"  {py / comp:>6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
