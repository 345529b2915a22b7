"""Chimera graphs, their bipartite working subgraph, and the pixel layout.

A Chimera graph is a rows x cols grid of K_{4,4} unit cells (8 qubits each).
Vertex ids are assigned cell by cell in row-major order:

    id = 8 * (row * cols + col) + 4 * side + k,    side in {0, 1}, k in 0..3

Inside a cell every side-0 qubit couples to every side-1 qubit. Between cells,
side-0 qubits couple to the same-k side-0 qubit of the vertically adjacent cells
and side-1 qubits to the same-k side-1 qubit of the horizontally adjacent cells.

The working subgraph for learning is bipartite: each cell contributes one side to
the visible layer and the other to the hidden layer, alternating in a checkerboard
(cell (r, c) exposes side (r + c) % 2 as visible). With that assignment every
intra-cell and inter-cell coupler runs between a visible and a hidden qubit, so
nothing is dropped; `chimera_rbm` still filters and reports violations so the
partition rule can be swapped without silent breakage.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError

CELL = 8
HALF = 4


@dataclass(frozen=True)
class ChimeraTopology:
    """A Chimera grid; `edges` are (i, j) pairs with i < j, lexicographically sorted."""

    rows: int
    cols: int
    vertices: int
    edges: tuple


@dataclass(frozen=True)
class BipartitePartition:
    """Visible/hidden split of a Chimera graph.

    `visible` and `hidden` list vertex ids cell by cell (row-major cells, ascending
    k within a cell); `edges` holds the retained couplers oriented as
    (visible id, hidden id) in topology edge order; `dropped` holds couplers that
    would connect two units on the same side.
    """

    visible: tuple
    hidden: tuple
    edges: tuple
    dropped: tuple


@dataclass(frozen=True)
class PixelEmbedding:
    """Bijection from row-major image pixels onto the first side*side visible units.

    Canonical layout: pixels are consumed four at a time by the visible half-cells
    in cell order, ascending qubit index within a cell. With the standard visible
    ordering this makes `pixel_to_position` the identity; `pixel_to_vertex` carries
    the underlying qubit ids.
    """

    side: int
    pixel_to_vertex: np.ndarray
    pixel_to_position: np.ndarray


def vertex_id(row, col, side, k, cols):
    """Linear vertex id of qubit k on `side` of cell (row, col)."""
    return CELL * (row * cols + col) + HALF * side + k


def build_chimera(rows: int, cols: int) -> ChimeraTopology:
    """Construct the rows x cols Chimera graph.

    Raises ValueError for non-positive dimensions. Construction is deterministic:
    equal arguments give equal objects.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"Chimera dimensions must be positive, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            for k0 in range(HALF):
                a = vertex_id(r, c, 0, k0, cols)
                for k1 in range(HALF):
                    edges.append((a, vertex_id(r, c, 1, k1, cols)))
            if r + 1 < rows:
                for k in range(HALF):
                    edges.append((vertex_id(r, c, 0, k, cols),
                                  vertex_id(r + 1, c, 0, k, cols)))
            if c + 1 < cols:
                for k in range(HALF):
                    edges.append((vertex_id(r, c, 1, k, cols),
                                  vertex_id(r, c + 1, 1, k, cols)))
    edges = sorted((min(a, b), max(a, b)) for a, b in edges)
    return ChimeraTopology(rows=rows, cols=cols, vertices=CELL * rows * cols,
                           edges=tuple(edges))


def chimera_rbm(topology: ChimeraTopology) -> BipartitePartition:
    """Split a Chimera graph into visible/hidden layers, keeping crossing couplers.

    The checkerboard side assignment retains every coupler; any same-side coupler
    (impossible under this rule, kept for safety) is reported in `dropped`.
    """
    visible, hidden = [], []
    side_of = {}
    for r in range(topology.rows):
        for c in range(topology.cols):
            vis_side = (r + c) % 2
            for k in range(HALF):
                v = vertex_id(r, c, vis_side, k, topology.cols)
                h = vertex_id(r, c, 1 - vis_side, k, topology.cols)
                visible.append(v)
                hidden.append(h)
                side_of[v] = "v"
                side_of[h] = "h"
    kept, dropped = [], []
    for a, b in topology.edges:
        if side_of[a] == side_of[b]:
            dropped.append((a, b))
        elif side_of[a] == "v":
            kept.append((a, b))
        else:
            kept.append((b, a))
    return BipartitePartition(visible=tuple(visible), hidden=tuple(hidden),
                              edges=tuple(kept), dropped=tuple(dropped))


def default_pixel_embedding(partition: BipartitePartition, side: int | None = None) -> PixelEmbedding:
    """Map an n x n pixel grid onto the visible layer in the canonical order.

    `side` defaults to the largest n with n * n <= visible count. Raises
    CapacityError when the requested grid does not fit.
    """
    n_visible = len(partition.visible)
    if side is None:
        side = int(np.sqrt(n_visible))
    if side < 1 or side * side > n_visible:
        raise CapacityError(
            f"{side}x{side} pixel grid does not fit {n_visible} visible units")
    positions = []
    for p in range(side * side):
        cell, slot = divmod(p, HALF)
        positions.append(cell * HALF + slot)
    positions = np.array(positions, dtype=np.int64)
    vertices = np.array([partition.visible[q] for q in positions], dtype=np.int64)
    return PixelEmbedding(side=side, pixel_to_vertex=vertices,
                          pixel_to_position=positions)


def write_edge_list(topology: ChimeraTopology, path) -> None:
    """Write one `i j` pair per line, 0-based, ascending."""
    with open(path, "w") as fh:
        for a, b in topology.edges:
            fh.write(f"{a} {b}\n")
