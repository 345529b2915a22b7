"""Bipartite spin models: parameters, energies, and exact inference.

Sign conventions (single source of truth for the whole package)
----------------------------------------------------------------
Spins take values in {-1, +1}. Two equivalent parameterizations coexist:

* model form (temperature absorbed):

      E_model(s) = - sum_{(i,j) in E} W_ij s_i s_j - sum_i b_i s_i
      P(s) = exp(-E_model(s)) / Z

* device form (what gets programmed into the annealer):

      E_dev(s) = + sum_{(i,j) in E} J_ij s_i s_j + sum_i h_i s_i

  and the device samples P(s) = exp(-E_dev(s) / T_eff) / Z(T_eff).

The two Boltzmann laws coincide under the dictionary

      W = -J / T_eff,      b = -h / T_eff,

implemented by `model_from_control` / `control_from_model`. Everything downstream
(sample-set energy caches, thermometry, the pseudo-likelihood conditionals) uses
the device form for energies and the model form for likelihoods; modules never
restate the signs, they call the conversions here.

Exact inference exploits bipartiteness: with visible units enumerated, the hidden
layer integrates out analytically,

      log Z = logsumexp_v [ b_v . v + sum_j log(2 cosh(b_j + sum_i W_ij v_i)) ],

which is exact for any visible-layer width up to ENUMERATION_LIMIT (beyond that a
CapacityError asks the caller to use a sampling backend instead).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CapacityError, FormatError

ENUMERATION_LIMIT = 24


# ---------------------------------------------------------------------------
# structure


class RBMGraph:
    """Bipartite interaction graph: n visible units, m hidden units, an edge list.

    `edges` holds (visible_position, hidden_position) pairs; `mask` is the dense
    (n, m) adjacency used to keep off-graph weights pinned at zero. `visible_ids`
    and `hidden_ids` remember the underlying qubit ids when the graph came from a
    Chimera partition (positions are what all numerics use).
    """

    def __init__(self, n, m, edges, visible_ids=None, hidden_ids=None):
        self.n = int(n)
        self.m = int(m)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges) != len({(a, b) for a, b in self.edges}):
            raise ValueError("duplicate edges in graph")
        if len(self.edges) and (self.edges[:, 0].max() >= n or self.edges[:, 1].max() >= m):
            raise ValueError("edge position out of range")
        self.visible_ids = (np.arange(n, dtype=np.int64) if visible_ids is None
                            else np.asarray(visible_ids, dtype=np.int64))
        self.hidden_ids = (np.arange(n, n + m, dtype=np.int64) if hidden_ids is None
                           else np.asarray(hidden_ids, dtype=np.int64))
        self.mask = np.zeros((self.n, self.m), dtype=bool)
        self.mask[self.edges[:, 0], self.edges[:, 1]] = True
        # edge endpoints in the joint ordering (visible block then hidden block)
        self.edges_joint = np.column_stack(
            [self.edges[:, 0], self.n + self.edges[:, 1]])

    @property
    def units(self):
        return self.n + self.m

    @property
    def n_edges(self):
        return len(self.edges)

    @classmethod
    def from_partition(cls, partition):
        """Build from a topology.BipartitePartition (qubit ids -> positions)."""
        vis = {v: i for i, v in enumerate(partition.visible)}
        hid = {h: j for j, h in enumerate(partition.hidden)}
        edges = [(vis[a], hid[b]) for a, b in partition.edges]
        return cls(len(partition.visible), len(partition.hidden), edges,
                   visible_ids=partition.visible, hidden_ids=partition.hidden)

    @classmethod
    def complete(cls, n, m):
        """Fully connected bipartite graph (used by small test models)."""
        edges = [(i, j) for i in range(n) for j in range(m)]
        return cls(n, m, edges)

    def __eq__(self, other):
        return (isinstance(other, RBMGraph) and self.n == other.n
                and self.m == other.m and np.array_equal(self.edges, other.edges))


@dataclass
class ModelParameters:
    """Model-form parameters (W, b) on a graph; off-graph weights stay zero."""

    graph: RBMGraph
    w: np.ndarray
    bv: np.ndarray
    bh: np.ndarray

    @classmethod
    def zeros(cls, graph):
        return cls(graph, np.zeros((graph.n, graph.m)), np.zeros(graph.n),
                   np.zeros(graph.m))

    def copy(self):
        return ModelParameters(self.graph, self.w.copy(), self.bv.copy(),
                               self.bh.copy())

    def edge_values(self):
        return self.w[self.graph.edges[:, 0], self.graph.edges[:, 1]]

    def bias_vector(self):
        return np.concatenate([self.bv, self.bh])


@dataclass
class ControlParameters:
    """Device-form parameters (J, h) plus the programmable ranges."""

    graph: RBMGraph
    j: np.ndarray
    hv: np.ndarray
    hh: np.ndarray
    j_limit: float = 1.0
    h_limit: float = 2.0

    @classmethod
    def zeros(cls, graph, j_limit=1.0, h_limit=2.0):
        return cls(graph, np.zeros((graph.n, graph.m)), np.zeros(graph.n),
                   np.zeros(graph.m), j_limit, h_limit)

    def copy(self):
        return ControlParameters(self.graph, self.j.copy(), self.hv.copy(),
                                 self.hh.copy(), self.j_limit, self.h_limit)

    def edge_values(self):
        return self.j[self.graph.edges[:, 0], self.graph.edges[:, 1]]

    def field_vector(self):
        return np.concatenate([self.hv, self.hh])

    def in_range(self):
        return (np.abs(self.edge_values()).max(initial=0.0) <= self.j_limit
                and np.abs(self.field_vector()).max(initial=0.0) <= self.h_limit)

    def max_abs_coupling(self):
        return float(np.abs(self.edge_values()).max(initial=0.0))

    def scale_headroom(self):
        """Largest x such that x * (J, h) still fits the device ranges."""
        r = max(self.max_abs_coupling() / self.j_limit,
                float(np.abs(self.field_vector()).max(initial=0.0)) / self.h_limit)
        return np.inf if r == 0.0 else 1.0 / r


@dataclass
class MomentSet:
    """First moments per unit and second moments on graph edges."""

    v: np.ndarray
    h: np.ndarray
    vh: np.ndarray

    def flat(self, mask):
        return np.concatenate([self.v, self.h, self.vh[mask]])


@dataclass
class SampleSet:
    """Spin configurations with cached device-form energies.

    `spins` is (R, n+m) int8 in the joint ordering (visible block then hidden);
    `energies[i]` equals the device energy of row i under the clean, unscaled
    reference control parameters recorded in `reference` (even when the set was
    drawn at `scale` times those parameters). `seed` records the draw's seed.
    """

    spins: np.ndarray
    energies: np.ndarray
    scale: float = 1.0
    seed: int | None = None
    reference: ControlParameters | None = None

    def __len__(self):
        return len(self.spins)


# ---------------------------------------------------------------------------
# conversions


def model_from_control(control, t_eff):
    """Apply the dictionary W = -J/T, b = -h/T."""
    if t_eff <= 0:
        raise ValueError(f"temperature must be positive, got {t_eff}")
    return ModelParameters(control.graph, -control.j / t_eff,
                           -control.hv / t_eff, -control.hh / t_eff)


def control_from_model(params, t_eff, j_limit=1.0, h_limit=2.0):
    """Apply the inverse dictionary J = -T W, h = -T b, clipping to device ranges.

    Returns (control, clipped_count); a nonzero count means the instance hit the
    programmable range and the realized model differs from the nominal one.
    """
    if t_eff <= 0:
        raise ValueError(f"temperature must be positive, got {t_eff}")
    j = -t_eff * params.w
    hv = -t_eff * params.bv
    hh = -t_eff * params.bh
    clipped = int((np.abs(j[params.graph.mask]) > j_limit).sum()
                  + (np.abs(hv) > h_limit).sum() + (np.abs(hh) > h_limit).sum())
    control = ControlParameters(params.graph, np.clip(j, -j_limit, j_limit) * params.graph.mask,
                                np.clip(hv, -h_limit, h_limit),
                                np.clip(hh, -h_limit, h_limit), j_limit, h_limit)
    return control, clipped


# ---------------------------------------------------------------------------
# energies


def _as_batch(spins, units):
    s = np.asarray(spins, dtype=np.int8)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    if s.shape[1] != units:
        raise ValueError(f"expected {units} spins per configuration, got {s.shape[1]}")
    return s, single


def energy(spins, params):
    """Energy of one configuration or a batch, in the convention of `params`.

    ModelParameters gives the model form (minus signs), ControlParameters the
    device form (plus signs). `spins` is a vector over visible then hidden units,
    or a (R, n+m) batch; returns a float or a (R,) array accordingly.
    """
    graph = params.graph
    s, single = _as_batch(spins, graph.units)
    if isinstance(params, ModelParameters):
        vals = -kernels.batch_energies(s, graph.edges_joint, params.edge_values(),
                                       params.bias_vector())
    else:
        vals = kernels.batch_energies(s, graph.edges_joint, params.edge_values(),
                                      params.field_vector())
    return float(vals[0]) if single else vals


# ---------------------------------------------------------------------------
# exact inference (bipartite, visible layer enumerated)


def _check_capacity(graph):
    if graph.n > ENUMERATION_LIMIT:
        raise CapacityError(
            f"exact enumeration supports at most {ENUMERATION_LIMIT} visible units, "
            f"got {graph.n}; use a sampling backend")


def hidden_activations(params, v):
    """b_j + sum_i W_ij v_i for each datapoint row of v."""
    return np.asarray(v, dtype=np.float64) @ params.w + params.bh


def log_partition(params):
    """log Z of the model form, exact via visible-layer enumeration."""
    _check_capacity(params.graph)
    logw = kernels.visible_logweights(params.w, params.bv, params.bh)
    peak = logw.max()
    return float(peak + np.log(np.exp(logw - peak).sum()))


def average_log_likelihood(params, data):
    """Mean over datapoints of ln P(v), exact.

    ln P(v) = bv . v + sum_j log(2 cosh(a_j(v))) - log Z. Raises ValueError on an
    empty dataset and CapacityError past the enumeration limit.
    """
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (D, n) array")
    if data.shape[1] != params.graph.n:
        raise ValueError(f"dataset width {data.shape[1]} != visible count {params.graph.n}")
    a = hidden_activations(params, data)
    aa = np.abs(a)
    terms = data @ params.bv + (aa + np.log1p(np.exp(-2.0 * aa))).sum(axis=1)
    return float(terms.mean() - log_partition(params))


def exact_data_averages(params, data):
    """Data-side moments with the hidden layer integrated out.

    <v_i>_D is the empirical mean; <u_j>_D = mean_d tanh(a_j(v^d));
    <v_i u_j>_D = mean_d v_i^d tanh(a_j(v^d)); off-graph entries are zero.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (D, n) array")
    t = np.tanh(hidden_activations(params, data))
    v = data.mean(axis=0)
    h = t.mean(axis=0)
    vh = (data.T @ t) / len(data) * params.graph.mask
    return MomentSet(v=v, h=h, vh=vh)


def exact_model_averages(params):
    """Boltzmann moments of the model, exact via visible-layer enumeration."""
    _check_capacity(params.graph)
    logz, ev, eh, evh = kernels.visible_moments(params.w, params.bv, params.bh)
    return MomentSet(v=ev, h=eh, vh=evh * params.graph.mask)


# ---------------------------------------------------------------------------
# parameter files: "N M" header, "b i value" lines, "W i j value" lines


def _write_params(path, n, m, bias_tag, biases, edge_tag, edges, edge_values):
    with open(path, "w") as fh:
        fh.write(f"{n} {m}\n")
        for i, val in enumerate(biases):
            fh.write(f"{bias_tag} {i} {val:.17g}\n")
        for (i, j), val in zip(edges, edge_values):
            fh.write(f"{edge_tag} {i} {j} {val:.17g}\n")


def _read_params(path, graph, bias_tag, edge_tag):
    biases = np.full(graph.units, np.nan)
    seen_edges = {}
    with open(path) as fh:
        header = fh.readline()
        try:
            n, m = (int(x) for x in header.split())
        except ValueError:
            raise FormatError(f"{path}:1: malformed header {header!r}")
        if n != graph.n or m != graph.m:
            raise FormatError(f"{path}:1: header {n} {m} does not match graph "
                              f"{graph.n} {graph.m}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == bias_tag and len(parts) == 3:
                    biases[int(parts[1])] = float(parts[2])
                elif parts[0] == edge_tag and len(parts) == 4:
                    seen_edges[(int(parts[1]), int(parts[2]))] = float(parts[3])
                else:
                    raise ValueError
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: malformed line {line.rstrip()!r}")
    if np.isnan(biases).any():
        missing = int(np.isnan(biases).argmax())
        raise FormatError(f"{path}: missing bias for unit {missing}")
    graph_edges = {(int(a), int(b)) for a, b in graph.edges}
    if set(seen_edges) != graph_edges:
        raise FormatError(f"{path}: edge set does not match graph "
                          f"({len(seen_edges)} vs {len(graph_edges)} edges)")
    dense = np.zeros((graph.n, graph.m))
    for (i, j), val in seen_edges.items():
        dense[i, j] = val
    return biases, dense


def save_model_parameters(params, path):
    """Lossless text serialization (17 significant digits)."""
    g = params.graph
    _write_params(path, g.n, g.m, "b", params.bias_vector(), "W", g.edges,
                  params.edge_values())


def load_model_parameters(path, graph):
    biases, dense = _read_params(path, graph, "b", "W")
    return ModelParameters(graph, dense, biases[:graph.n], biases[graph.n:])


def save_control_parameters(control, path):
    """Same layout as model parameters with h/J tags."""
    g = control.graph
    _write_params(path, g.n, g.m, "h", control.field_vector(), "J", g.edges,
                  control.edge_values())


def load_control_parameters(path, graph, j_limit=1.0, h_limit=2.0):
    fields, dense = _read_params(path, graph, "h", "J")
    return ControlParameters(graph, dense, fields[:graph.n], fields[graph.n:],
                             j_limit, h_limit)
