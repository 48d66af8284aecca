"""Bilinear finite elements on quadrilateral meshes.

Assembly is vectorised over cells: every cell is an axis-aligned square,
so the reference-to-physical Jacobian is diagonal and the basis
gradients per cell differ only by the factor 2/side.  Hanging-node and
Dirichlet constraints are handled algebraically through a sparse
master-dof map C with offset g, u = C u_m + g, and systems are condensed
as C^T A C (symmetry is preserved for conjugate gradients).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .mesh import Mesh, find_cell


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (q, 2) on [-1, 1]^2
    weights: np.ndarray  # (q,)


def _tensor_rule(pts1, wts1) -> QuadratureRule:
    pts = np.array([(x, y) for y in pts1 for x in pts1])
    wts = np.array([wx * wy for wy in wts1 for wx in wts1])
    return QuadratureRule(pts, wts)


_S3 = np.sqrt(3.0) / 3.0
_S35 = np.sqrt(0.6)
GAUSS2 = _tensor_rule((-_S3, _S3), (1.0, 1.0))
GAUSS3 = _tensor_rule((-_S35, 0.0, _S35), (5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0))


def shape_eval(xi):
    """Bilinear shape functions and reference gradients.

    Parameters
    ----------
    xi : ndarray, shape (..., 2)
        Points in the reference square [-1, 1]^2.

    Returns
    -------
    N : ndarray, shape (..., 4)
        Values ordered to match cell corners SW, SE, NE, NW.
    dN : ndarray, shape (..., 4, 2)
        Gradients with respect to the reference coordinates.
    """
    xi = np.asarray(xi, dtype=float)
    x, y = xi[..., 0], xi[..., 1]
    N = 0.25 * np.stack(
        [(1 - x) * (1 - y), (1 + x) * (1 - y), (1 + x) * (1 + y), (1 - x) * (1 + y)],
        axis=-1,
    )
    dN = np.empty(xi.shape[:-1] + (4, 2))
    dN[..., 0, 0] = -(1 - y)
    dN[..., 0, 1] = -(1 - x)
    dN[..., 1, 0] = 1 - y
    dN[..., 1, 1] = -(1 + x)
    dN[..., 2, 0] = 1 + y
    dN[..., 2, 1] = 1 + x
    dN[..., 3, 0] = -(1 + y)
    dN[..., 3, 1] = 1 - x
    dN *= 0.25
    return N, dN


@dataclass
class ScalarField:
    """Nodal scalar field on a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("field size does not match mesh")

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "ScalarField":
        return cls(mesh, np.full(mesh.n_nodes, float(value)))

    @classmethod
    def from_callable(cls, mesh: Mesh, fn) -> "ScalarField":
        return cls(mesh, np.asarray(fn(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float))

    def copy(self) -> "ScalarField":
        return ScalarField(self.mesh, self.values.copy())


class _CellBasis:
    """Per-mesh cached quadrature geometry for a rule."""

    def __init__(self, mesh: Mesh, rule: QuadratureRule):
        self.N, dN_ref = shape_eval(rule.points)
        side = mesh.cell_size
        # physical gradient = reference gradient * 2 / side
        self.gradN = dN_ref[None, :, :, :] * (2.0 / side)[:, None, None, None]
        self.JxW = (side**2 / 4.0)[:, None] * rule.weights[None, :]
        self.x = np.einsum("qi,mid->mqd", self.N, mesh.nodes[mesh.cells])


def cell_basis(mesh: Mesh, rule: QuadratureRule = GAUSS2) -> _CellBasis:
    cache = getattr(mesh, "_basis_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(mesh, "_basis_cache", cache)
    key = id(rule)
    if key not in cache:
        cache[key] = _CellBasis(mesh, rule)
    return cache[key]


def quad_values(mesh: Mesh, values: np.ndarray, rule: QuadratureRule = GAUSS2):
    """Field values and gradients at all quadrature points.

    Returns
    -------
    vals : ndarray, shape (n_cells, q)
    grads : ndarray, shape (n_cells, q, 2)
    """
    basis = cell_basis(mesh, rule)
    uc = values[mesh.cells]
    vals = np.einsum("mi,qi->mq", uc, basis.N)
    grads = np.einsum("mi,mqid->mqd", uc, basis.gradN)
    return vals, grads


class ConstraintSet:
    """Hanging-node plus Dirichlet constraints, u = C u_m + g.

    Master dofs are the unconstrained nodes; hanging nodes interpolate
    their edge parents and Dirichlet nodes carry fixed values.  The
    reduced system C^T A C stays symmetric positive definite when A is.
    """

    def __init__(self, mesh: Mesh, dirichlet: dict[int, float] | None = None):
        dirichlet = dirichlet or {}
        n = mesh.n_nodes
        for nid in dirichlet:
            if nid in mesh.constraints:
                raise ValueError("Dirichlet value on a hanging node")
        self.mesh = mesh
        self.dirichlet = dict(dirichlet)
        slaves = set(mesh.constraints) | set(dirichlet)
        self.master_ids = np.array(
            [i for i in range(n) if i not in slaves], dtype=np.int64
        )
        col_of = {int(nid): k for k, nid in enumerate(self.master_ids)}

        g = np.zeros(n)
        rows, cols, data = [], [], []
        for k, nid in enumerate(self.master_ids):
            rows.append(int(nid))
            cols.append(k)
            data.append(1.0)
        for nid, value in dirichlet.items():
            g[nid] = value
        for nid, parents in mesh.constraints.items():
            for p, w in parents:
                if p in dirichlet:
                    g[nid] += w * dirichlet[p]
                else:
                    rows.append(nid)
                    cols.append(col_of[p])
                    data.append(w)
        self.C = sp.csr_matrix((data, (rows, cols)), shape=(n, len(self.master_ids)))
        self.g = g

    @property
    def n_masters(self) -> int:
        return len(self.master_ids)

    def distribute(self, u_m: np.ndarray) -> np.ndarray:
        """Full nodal vector from master values."""
        return self.C @ u_m + self.g

    def project(self, u: np.ndarray) -> np.ndarray:
        """Make a full vector consistent with all constraints."""
        return self.distribute(u[self.master_ids])

    def expand_increment(self, du_m: np.ndarray) -> np.ndarray:
        """Full increment (Dirichlet offsets do not move)."""
        return self.C @ du_m

    def reduce_vector(self, r: np.ndarray) -> np.ndarray:
        return self.C.T @ r

    def reduce_matrix(self, A: sp.spmatrix) -> sp.csr_matrix:
        return (self.C.T @ (A @ self.C)).tocsr()


def assemble(mesh: Mesh, constraints: ConstraintSet, kernel, fields: dict,
             want_matrix: bool = True, rule: QuadratureRule = GAUSS2):
    """Assemble the residual and optionally the tangent matrix.

    The kernel is called once with a context holding quadrature-point
    coordinates ``x`` (n_cells, q, 2) and per-field values/gradients; it
    returns a dict with any of

    - ``flux``     (n_cells, q, 2): paired against grad(w),
    - ``source``   (n_cells, q): paired against w,
    - ``tangent``  (n_cells, q, 2, 2): paired against grad(du) . grad(w),
    - ``reaction`` (n_cells, q): paired against du . w.

    Returns ``(A_reduced, r_reduced)`` or ``r_reduced`` only.  Both are
    condensed to master dofs; input fields must already satisfy the
    constraints.
    """
    basis = cell_basis(mesh, rule)
    ctx = {"x": basis.x, "values": {}, "grads": {}}
    for name, fld in fields.items():
        nodal = fld.values if hasattr(fld, "values") else fld
        vals, grads = quad_values(mesh, nodal, rule)
        ctx["values"][name] = vals
        ctx["grads"][name] = grads
    out = kernel(ctx)

    n = mesh.n_nodes
    r = np.zeros(n)
    r_loc = None
    if out.get("flux") is not None:
        r_loc = np.einsum("mq,mqd,mqid->mi", basis.JxW, out["flux"], basis.gradN)
    if out.get("source") is not None:
        rs = np.einsum("mq,mq,qi->mi", basis.JxW, out["source"], basis.N)
        r_loc = rs if r_loc is None else r_loc + rs
    if r_loc is not None:
        np.add.at(r, mesh.cells, r_loc)
    r_red = constraints.reduce_vector(r)
    if not want_matrix:
        return r_red

    k_loc = np.zeros((mesh.n_cells, 4, 4))
    if out.get("tangent") is not None:
        tg = np.einsum("mqid,mqde->mqie", basis.gradN, out["tangent"])
        k_loc += np.einsum("mq,mqie,mqje->mij", basis.JxW, tg, basis.gradN)
    if out.get("reaction") is not None:
        k_loc += np.einsum("mq,mq,qi,qj->mij", basis.JxW, out["reaction"], basis.N, basis.N)
    rows = np.broadcast_to(mesh.cells[:, :, None], k_loc.shape).ravel()
    cols = np.broadcast_to(mesh.cells[:, None, :], k_loc.shape).ravel()
    A = sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return constraints.reduce_matrix(A), r_red


def solve_linear(A: sp.spmatrix, b: np.ndarray, tol: float = 1.0e-12,
                 maxiter: int | None = None, x0: np.ndarray | None = None) -> np.ndarray:
    """Conjugate gradients with a Jacobi preconditioner.

    Solves A x = b to relative residual ``tol``; raises SolverError with
    the final residual when the iteration budget is exhausted.
    """
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise SolverError("matrix diagonal is not positive")
    M = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
    if maxiter is None:
        maxiter = max(1000, 40 * n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    try:
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M, x0=x0)
    except TypeError:  # older scipy spells rtol as tol
        x, info = spla.cg(A, b, tol=tol, atol=0.0, maxiter=maxiter, M=M, x0=x0)
    res = np.linalg.norm(A @ x - b) / bnorm
    if info != 0 or not np.isfinite(res) or res > 10.0 * tol:
        raise SolverError(f"conjugate gradients stalled: relative residual {res:.3e}")
    return x


def l2_error(mesh: Mesh, values: np.ndarray, exact, rule: QuadratureRule = GAUSS3) -> float:
    """L2 norm of (field - exact) using 3x3 Gauss quadrature."""
    basis = cell_basis(mesh, rule)
    vals, _ = quad_values(mesh, values, rule)
    diff = vals - exact(basis.x[..., 0], basis.x[..., 1])
    return float(np.sqrt(np.sum(basis.JxW * diff**2)))


def integrate(mesh: Mesh, f_quad: np.ndarray, rule: QuadratureRule = GAUSS2) -> float:
    """Integrate quadrature-point values over the mesh."""
    basis = cell_basis(mesh, rule)
    return float(np.sum(basis.JxW * f_quad))


def eval_at_point(mesh: Mesh, fields: dict, point, bias=(0.0, 0.0)):
    """Field values and gradients at one physical point.

    Returns ``{name: (value, grad)}`` evaluated inside the cell found
    under ``bias`` (used to pick a side on interior edges).
    """
    ci = find_cell(mesh, point, bias)
    cell = mesh.cells[ci]
    side = float(mesh.cell_size[ci])
    sw = mesh.nodes[cell[0]]
    xi = np.array(
        [
            2.0 * (point[0] - sw[0]) / side - 1.0,
            2.0 * (point[1] - sw[1]) / side - 1.0,
        ]
    )
    xi = np.clip(xi, -1.0, 1.0)
    N, dN = shape_eval(xi)
    out = {}
    for name, fld in fields.items():
        vals = fld.values if hasattr(fld, "values") else fld
        uc = vals[cell]
        out[name] = (float(N @ uc), (dN * (2.0 / side)).T @ uc)
    return out


def sample_line(mesh: Mesh, fields: dict, p0, p1, n: int, evaluator=None, bias=None):
    """Evaluate fields at n points along the segment p0 -> p1.

    ``evaluator(x, at)`` receives the point and the dict produced by
    ``eval_at_point`` and returns a tuple of output quantities; when it
    is omitted the field values are emitted in dict order.  When the
    mesh carries a slit and no bias is given, points on the slit line are
    evaluated on its plus side.

    Returns
    -------
    ndarray, shape (n, 1 + n_outputs)
        Rows of (arc length, outputs...).
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if bias is None:
        eps = 1.0e-12
        if mesh.slit is not None:
            bias = (0.0, eps) if mesh.slit.horizontal else (eps, 0.0)
        else:
            bias = (eps, eps)
    if evaluator is None:
        def evaluator(x, at):
            return tuple(val for val, _ in at.values())
    ts = np.linspace(0.0, 1.0, n)
    length = np.linalg.norm(p1 - p0)
    rows = []
    for t in ts:
        x = (1.0 - t) * p0 + t * p1
        at = eval_at_point(mesh, fields, x, bias)
        rows.append((t * length, *evaluator(x, at)))
    return np.array(rows)
