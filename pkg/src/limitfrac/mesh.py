"""Quadrilateral meshes on the unit square.

Meshes are built from a quadtree over [0,1]^2: every cell is an
axis-aligned square of side 2^-level.  Local refinement keeps the tree
one-irregular (edge-neighbouring cells differ by at most one level) so
each hanging node is the midpoint of exactly one coarse edge and is
constrained to that edge's endpoints with weights 1/2, 1/2.

Node coordinates are kept on an integer lattice (denominator 2**_BITS)
so that midpoint lookups and slit alignment tests are exact.  Mesh
objects are immutable; ``refine_box`` and ``carve_slit`` return new
meshes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Lattice denominator exponent; supports refinement levels up to _BITS.
_BITS = 21
_ONE = 1 << _BITS


class BoundaryTag(Enum):
    LEFT = "Left"
    RIGHT_TOP_HALF = "RightTopHalf"
    RIGHT_BOTTOM_HALF = "RightBottomHalf"
    TOP_LEFT_HALF = "TopLeftHalf"
    TOP_RIGHT_HALF = "TopRightHalf"
    BOTTOM = "Bottom"
    SLIT_FACE_PLUS = "SlitFacePlus"
    SLIT_FACE_MINUS = "SlitFaceMinus"


@dataclass(frozen=True)
class SlitSpec:
    """Axis-aligned slit segment lying on mesh lines.

    The segment must be horizontal or vertical.  Its "plus" side is the
    side of larger transverse coordinate (above a horizontal slit, right
    of a vertical one).
    """

    start: tuple[float, float]
    end: tuple[float, float]

    def __post_init__(self):
        if self.start == self.end:
            raise ValueError("slit endpoints coincide")
        if self.start[0] != self.end[0] and self.start[1] != self.end[1]:
            raise ValueError("slit must be axis-aligned")

    @property
    def horizontal(self) -> bool:
        return self.start[1] == self.end[1]

    @property
    def line_value(self) -> float:
        """Coordinate of the line the slit lies on."""
        return self.start[1] if self.horizontal else self.start[0]

    @property
    def span(self) -> tuple[float, float]:
        """Range of the varying coordinate, ordered."""
        axis = 0 if self.horizontal else 1
        a, b = self.start[axis], self.end[axis]
        return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Mesh:
    """Immutable quadrilateral mesh.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, 2)
        Node coordinates.
    nodes_q : ndarray, shape (n_nodes, 2), int64
        The same coordinates on the integer lattice (x * 2**_BITS).
    cells : ndarray, shape (n_cells, 4), int
        Corner node ids ordered SW, SE, NE, NW.
    cell_level : ndarray, shape (n_cells,), int
        Quadtree level; cell side is 2**-level.
    constraints : dict
        Hanging node id -> ((parent, 1/2), (parent, 1/2)).
    boundary_edges : tuple
        (node_a, node_b, BoundaryTag) triples covering the boundary.
    slit : SlitSpec or None
        Set once the mesh has been carved.
    """

    nodes: np.ndarray
    nodes_q: np.ndarray
    cells: np.ndarray
    cell_level: np.ndarray
    constraints: dict = field(default_factory=dict)
    boundary_edges: tuple = ()
    slit: SlitSpec | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def cell_size(self) -> np.ndarray:
        """Side length of every cell."""
        return 0.5 ** self.cell_level.astype(float)

    @property
    def h_min(self) -> float:
        """Smallest cell diameter (diagonal of the smallest cell)."""
        return float(np.sqrt(2.0) * self.cell_size.min())


# ---------------------------------------------------------------------------
# quadtree helpers
# ---------------------------------------------------------------------------


def _leaves_of_mesh(mesh: Mesh) -> set[tuple[int, int, int]]:
    """Recover quadtree leaf keys (level, ix, iy) from a mesh."""
    leaves = set()
    for cell, lev in zip(mesh.cells, mesh.cell_level):
        sw = mesh.nodes_q[cell[0]]
        shift = _BITS - int(lev)
        leaves.add((int(lev), int(sw[0]) >> shift, int(sw[1]) >> shift))
    return leaves


def _max_level_in_region(leaves, lev, ix, iy, edge):
    """Finest leaf level inside region (lev, ix, iy) along one of its edges.

    ``edge`` is the region edge facing the querying cell: 'W', 'E',
    'S' or 'N'.  Returns -1 when the region lies outside the unit square.
    """
    n = 1 << lev
    if not (0 <= ix < n and 0 <= iy < n):
        return -1
    # Walk up: the region may be covered by a coarser (or equal) leaf.
    l, jx, jy = lev, ix, iy
    while l >= 0:
        if (l, jx, jy) in leaves:
            return l
        l, jx, jy = l - 1, jx >> 1, jy >> 1
    # Region subdivided: recurse into the two children touching the edge.
    if edge == "W":
        kids = ((2 * ix, 2 * iy), (2 * ix, 2 * iy + 1))
    elif edge == "E":
        kids = ((2 * ix + 1, 2 * iy), (2 * ix + 1, 2 * iy + 1))
    elif edge == "S":
        kids = ((2 * ix, 2 * iy), (2 * ix + 1, 2 * iy))
    else:
        kids = ((2 * ix, 2 * iy + 1), (2 * ix + 1, 2 * iy + 1))
    return max(_max_level_in_region(leaves, lev + 1, kx, ky, edge) for kx, ky in kids)


_NEIGHBOR_STEPS = (("E", 1, 0, "W"), ("W", -1, 0, "E"), ("N", 0, 1, "S"), ("S", 0, -1, "N"))


def _close_one_irregular(leaves: set[tuple[int, int, int]]) -> None:
    """Refine leaves in place until edge neighbours differ by <= 1 level."""
    while True:
        to_refine = set()
        for leaf in leaves:
            lev, ix, iy = leaf
            for _, dx, dy, opposite in _NEIGHBOR_STEPS:
                if _max_level_in_region(leaves, lev, ix + dx, iy + dy, opposite) > lev + 1:
                    to_refine.add(leaf)
                    break
        if not to_refine:
            return
        for leaf in to_refine:
            leaves.remove(leaf)
            leaves.update(_children(leaf))


def _children(leaf):
    lev, ix, iy = leaf
    return {
        (lev + 1, 2 * ix, 2 * iy),
        (lev + 1, 2 * ix + 1, 2 * iy),
        (lev + 1, 2 * ix, 2 * iy + 1),
        (lev + 1, 2 * ix + 1, 2 * iy + 1),
    }


def _mesh_from_leaves(leaves) -> Mesh:
    """Build node/cell arrays, hanging constraints and boundary tags."""
    node_index: dict[tuple[int, int], int] = {}
    coords: list[tuple[int, int]] = []

    def node_id(q):
        idx = node_index.get(q)
        if idx is None:
            idx = len(coords)
            node_index[q] = idx
            coords.append(q)
        return idx

    cells = []
    levels = []
    for lev, ix, iy in sorted(leaves):
        s = 1 << (_BITS - lev)
        x0, y0 = ix * s, iy * s
        cells.append(
            (
                node_id((x0, y0)),
                node_id((x0 + s, y0)),
                node_id((x0 + s, y0 + s)),
                node_id((x0, y0 + s)),
            )
        )
        levels.append(lev)

    nodes_q = np.array(coords, dtype=np.int64).reshape(-1, 2)
    nodes = nodes_q.astype(float) / _ONE
    cells = np.array(cells, dtype=np.int64).reshape(-1, 4)
    cell_level = np.array(levels, dtype=np.int64)

    # Hanging nodes: a node sitting at the midpoint of an existing cell
    # edge is constrained to the edge endpoints.  One-irregularity
    # guarantees no deeper nodes live inside any edge.
    constraints = {}
    for cell in cells:
        for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
            qa, qb = nodes_q[cell[a]], nodes_q[cell[b]]
            mid = ((int(qa[0]) + int(qb[0])) >> 1, (int(qa[1]) + int(qb[1])) >> 1)
            m = node_index.get(mid)
            if m is not None:
                constraints[m] = ((int(cell[a]), 0.5), (int(cell[b]), 0.5))
    for m, parents in constraints.items():
        for p, _ in parents:
            if p in constraints:
                raise RuntimeError("constraint chain: mesh is not one-irregular")

    boundary = _tag_boundary(nodes_q, cells, slit=None)
    return Mesh(nodes, nodes_q, cells, cell_level, constraints, boundary, None)


def _tag_boundary(nodes_q, cells, slit, plus_cells=None):
    """Tag cell edges lying on the unit-square boundary or on the slit."""
    edges = []
    span_q = line_q = None
    if slit is not None:
        span_q = (int(round(slit.span[0] * _ONE)), int(round(slit.span[1] * _ONE)))
        line_q = int(round(slit.line_value * _ONE))
    for ci, cell in enumerate(cells):
        for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
            na, nb = int(cell[a]), int(cell[b])
            qa, qb = nodes_q[na], nodes_q[nb]
            tag = _classify_edge(qa, qb, slit, span_q, line_q)
            if tag is None:
                continue
            if tag == "slit":
                plus = plus_cells is not None and ci in plus_cells
                tag = BoundaryTag.SLIT_FACE_PLUS if plus else BoundaryTag.SLIT_FACE_MINUS
            edges.append((na, nb, tag))
    return tuple(edges)


def _classify_edge(qa, qb, slit, span_q, line_q):
    ax0, ay0 = int(qa[0]), int(qa[1])
    bx0, by0 = int(qb[0]), int(qb[1])
    half = _ONE >> 1
    if ax0 == bx0 == 0:
        return BoundaryTag.LEFT
    if ax0 == bx0 == _ONE:
        return BoundaryTag.RIGHT_TOP_HALF if min(ay0, by0) >= half else BoundaryTag.RIGHT_BOTTOM_HALF
    if ay0 == by0 == 0:
        return BoundaryTag.BOTTOM
    if ay0 == by0 == _ONE:
        return BoundaryTag.TOP_LEFT_HALF if max(ax0, bx0) <= half else BoundaryTag.TOP_RIGHT_HALF
    if slit is not None:
        if slit.horizontal and ay0 == by0 == line_q:
            lo, hi = min(ax0, bx0), max(ax0, bx0)
            if lo >= span_q[0] and hi <= span_q[1]:
                return "slit"
        if not slit.horizontal and ax0 == bx0 == line_q:
            lo, hi = min(ay0, by0), max(ay0, by0)
            if lo >= span_q[0] and hi <= span_q[1]:
                return "slit"
    return None


# ---------------------------------------------------------------------------
# public constructors and operations
# ---------------------------------------------------------------------------


def build_unit_square(n_global: int) -> Mesh:
    """Uniform mesh of the unit square with 4**n_global cells.

    Parameters
    ----------
    n_global : int
        Number of global refinements from a single cell; the mesh has
        (2**n_global + 1)**2 nodes and cell side 2**-n_global.
    """
    if n_global < 0 or n_global > _BITS - 1:
        raise ValueError(f"n_global out of range [0, {_BITS - 1}]")
    n = 1 << n_global
    leaves = {(n_global, ix, iy) for ix in range(n) for iy in range(n)}
    return _mesh_from_leaves(leaves)


def refine_box(mesh: Mesh, box: tuple[float, float, float, float], levels: int) -> Mesh:
    """Refine all cells whose center lies in ``box``, ``levels`` times.

    The box is (x0, y0, x1, y1).  After each sweep the mesh is closed to
    one-irregularity, so cells outside the box may be refined too.  A box
    that selects no cells returns the mesh unchanged with a warning.
    """
    if mesh.slit is not None:
        raise ValueError("refine before carving the slit")
    x0, y0, x1, y1 = box
    leaves = _leaves_of_mesh(mesh)
    for _ in range(levels):
        marked = set()
        for lev, ix, iy in leaves:
            side = 1.0 / (1 << lev)
            cx, cy = (ix + 0.5) * side, (iy + 0.5) * side
            if x0 <= cx <= x1 and y0 <= cy <= y1:
                marked.add((lev, ix, iy))
        if not marked:
            warnings.warn("refine_box selected no cells; mesh unchanged")
            return mesh
        for leaf in marked:
            leaves.remove(leaf)
            leaves.update(_children(leaf))
        _close_one_irregular(leaves)
    return _mesh_from_leaves(leaves)


def carve_slit(mesh: Mesh, slit: SlitSpec) -> Mesh:
    """Cut the mesh along a slit by duplicating nodes.

    Nodes strictly inside the segment are duplicated, as is an endpoint
    lying on the domain boundary; an interior endpoint is a crack tip
    and stays shared.  Cells on the plus side of the slit line are
    rewired to the duplicates, so fields can jump across the slit while
    the tip remains connected.
    """
    if mesh.slit is not None:
        raise ValueError("mesh already carved")
    line_q = int(round(slit.line_value * _ONE))
    lo_q = int(round(slit.span[0] * _ONE))
    hi_q = int(round(slit.span[1] * _ONE))
    axis = 0 if slit.horizontal else 1  # varying coordinate
    perp = 1 - axis

    qs = mesh.nodes_q
    on_line = qs[:, perp] == line_q
    t = qs[:, axis]
    inside = on_line & (t > lo_q) & (t < hi_q)
    for endpoint_q in (lo_q, hi_q):
        if endpoint_q in (0, _ONE):
            inside = inside | (on_line & (t == endpoint_q))
    dup_ids = np.flatnonzero(inside)
    if len(dup_ids) == 0:
        raise ValueError("slit is not aligned with mesh nodes")
    for nid in dup_ids:
        if int(nid) in mesh.constraints:
            raise ValueError("hanging node on the slit is not supported")

    # Alignment check: consecutive slit nodes (tip included) must be
    # joined by existing cell edges, otherwise the slit crosses cell
    # interiors and cannot be carved.
    slit_nodes = np.flatnonzero(on_line & (t >= lo_q) & (t <= hi_q))
    order = np.argsort(qs[slit_nodes, axis])
    path = slit_nodes[order]
    edge_set = set()
    for cell in mesh.cells:
        for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
            edge_set.add(frozenset((int(cell[a]), int(cell[b]))))
    for a, b in zip(path[:-1], path[1:]):
        if frozenset((int(a), int(b))) not in edge_set:
            raise ValueError("slit is not aligned with mesh edges")

    n_old = mesh.n_nodes
    new_ids = {int(nid): n_old + k for k, nid in enumerate(dup_ids)}
    nodes = np.vstack([mesh.nodes, mesh.nodes[dup_ids]])
    nodes_q = np.vstack([mesh.nodes_q, mesh.nodes_q[dup_ids]])

    # Plus side: cells whose center has larger perpendicular coordinate.
    cells = mesh.cells.copy()
    centers = mesh.nodes[mesh.cells].mean(axis=1)
    plus_cells = set()
    for ci in range(mesh.n_cells):
        if centers[ci, perp] <= slit.line_value:
            continue
        touched = [new_ids[int(n)] for n in cells[ci] if int(n) in new_ids]
        if touched:
            plus_cells.add(ci)
            for k in range(4):
                cells[ci, k] = new_ids.get(int(cells[ci, k]), cells[ci, k])

    constraints = dict(mesh.constraints)
    boundary = _tag_boundary(nodes_q, cells, slit, plus_cells)
    return Mesh(nodes, nodes_q, cells, mesh.cell_level.copy(), constraints, boundary, slit)


def boundary_nodes(mesh: Mesh, tag: BoundaryTag) -> list[int]:
    """Sorted unique node ids on edges carrying ``tag``."""
    out = set()
    for a, b, t in mesh.boundary_edges:
        if t == tag:
            out.add(int(a))
            out.add(int(b))
    return sorted(out)


def find_cell(mesh: Mesh, point, bias=(0.0, 0.0)) -> int:
    """Cell id containing ``point``.

    ``bias`` nudges points lying exactly on a cell edge toward one side
    before the lookup; sampling routines use it to select the plus side
    of a slit.
    """
    key_map = getattr(mesh, "_leaf_map", None)
    if key_map is None:
        key_map = {}
        for ci, (cell, lev) in enumerate(zip(mesh.cells, mesh.cell_level)):
            sw = mesh.nodes_q[cell[0]]
            shift = _BITS - int(lev)
            key_map[(int(lev), int(sw[0]) >> shift, int(sw[1]) >> shift)] = ci
        object.__setattr__(mesh, "_leaf_map", key_map)
    x = min(max(point[0] + bias[0], 0.0), 1.0)
    y = min(max(point[1] + bias[1], 0.0), 1.0)
    for lev in range(int(mesh.cell_level.max()), int(mesh.cell_level.min()) - 1, -1):
        n = 1 << lev
        ix = min(int(x * n), n - 1)
        iy = min(int(y * n), n - 1)
        ci = key_map.get((lev, ix, iy))
        if ci is not None:
            return ci
    raise KeyError(f"no cell contains point {point}")
