"""Independent oracles used to freeze expected values.

Everything here recomputes quantities by a different route than the package:
explicit per-term loops over edge dictionaries and full joint enumeration in
extended precision. Slow and simple on purpose.
"""

import numpy as np

from qarbm import topology
from qarbm.model import ControlParameters, ModelParameters, RBMGraph


def joint_spins(units):
    """All 2^units joint configurations, bit i of the row index -> spin i."""
    idx = np.arange(1 << units, dtype=np.int64)
    return (((idx[:, None] >> np.arange(units)) & 1) * 2 - 1).astype(np.int8)


def oracle_model_energy(s, params):
    """Model-form energy by an explicit loop over terms."""
    g = params.graph
    e = 0.0
    for i, j in g.edges:
        e -= params.w[i, j] * s[i] * s[g.n + j]
    for i in range(g.n):
        e -= params.bv[i] * s[i]
    for j in range(g.m):
        e -= params.bh[j] * s[g.n + j]
    return e


def oracle_device_energy(s, control):
    g = control.graph
    e = 0.0
    for i, j in g.edges:
        e += control.j[i, j] * s[i] * s[g.n + j]
    for i in range(g.n):
        e += control.hv[i] * s[i]
    for j in range(g.m):
        e += control.hh[j] * s[g.n + j]
    return e


def oracle_joint(params):
    """(states, probabilities, logZ) by joint enumeration in extended precision."""
    states = joint_spins(params.graph.units)
    g = np.array([-oracle_model_energy(s, params) for s in states],
                 dtype=np.longdouble)
    peak = g.max()
    w = np.exp(g - peak)
    z = w.sum()
    return states, (w / z).astype(np.longdouble), float(peak + np.log(z))


def oracle_moments(params):
    """Exact Boltzmann moments from the joint distribution."""
    g = params.graph
    states, p, _ = oracle_joint(params)
    sf = states.astype(np.longdouble)
    mean = (sf * p[:, None]).sum(axis=0)
    vh = np.zeros((g.n, g.m))
    for i, j in g.edges:
        vh[i, j] = float((sf[:, i] * sf[:, g.n + j] * p).sum())
    return (np.asarray(mean[:g.n], dtype=np.float64),
            np.asarray(mean[g.n:], dtype=np.float64), vh)


def oracle_marginal_loglik(params, v):
    """ln P(v) by joint enumeration."""
    g = params.graph
    states, p, _ = oracle_joint(params)
    match = (states[:, :g.n] == np.asarray(v, dtype=np.int8)).all(axis=1)
    return float(np.log(p[match].sum()))


def random_graph(rng, max_units=10):
    """Random bipartite structure with a random non-empty edge subset."""
    n = int(rng.integers(1, max_units))
    m = int(rng.integers(1, max_units + 1 - n))
    all_edges = [(i, j) for i in range(n) for j in range(m)]
    keep = rng.random(len(all_edges)) < 0.7
    if not keep.any():
        keep[int(rng.integers(len(all_edges)))] = True
    edges = [e for e, k in zip(all_edges, keep) if k]
    return RBMGraph(n, m, edges)


def random_model(graph, rng, scale=1.0):
    w = rng.uniform(-scale, scale, (graph.n, graph.m)) * graph.mask
    return ModelParameters(graph, w, rng.uniform(-scale, scale, graph.n),
                           rng.uniform(-scale, scale, graph.m))


def random_control(graph, rng, scale=0.5):
    j = rng.uniform(-scale, scale, (graph.n, graph.m)) * graph.mask
    return ControlParameters(graph, j, rng.uniform(-scale, scale, graph.n),
                             rng.uniform(-scale, scale, graph.m))


def chimera_rbm_graph(rows=2, cols=2):
    top = topology.build_chimera(rows, cols)
    return RBMGraph.from_partition(topology.chimera_rbm(top))


def benchmark_control(seed=100, jscale=0.1, hscale=0.05):
    """Fixed 16+16 Chimera-RBM instance used by the recovery tests."""
    g = chimera_rbm_graph()
    rng = np.random.default_rng(seed)
    j = np.zeros((g.n, g.m))
    j[g.mask] = rng.uniform(-jscale, jscale, g.n_edges)
    return ControlParameters(g, j, rng.uniform(-hscale, hscale, g.n),
                             rng.uniform(-hscale, hscale, g.m))
