"""Phase-field subproblem with crack irreversibility.

Solves the damage equation arising from minimizing the regularized
fracture energy at a frozen mechanics state.  The weak residual pairs
the degraded bulk density against the crack surface terms, plus an
augmented-Lagrangian penalty that discourages phi from rising above
its previous time-step value, plus an L-scheme mass anchor:

    (1-kappa)(phi W, psi)
      - Gc/xi (1 - phi, psi) + Gc xi (grad phi, grad psi)
      + (eta (lam + gamma (phi - phi_prev_time)), psi)
      + L (phi - phi_prev_iter, psi)

The multiplier lam lives on nodes and the active indicator eta is the
per-node indicator of lam + gamma (phi - phi_prev_time) > 0, matching
the nodal multiplier update.  The penalty pairing is assembled with a
lumped mass so that the term, its derivative and the update all act on
the same nodal values; consistent quadrature there would let a node
drift above its own previous value wherever the interpolated slack
stays negative, pumping the multiplier without bound.  The indicator
is re-evaluated from the current iterate at every Newton step
(semi-smooth Newton); with eta frozen the residual is affine in phi,
so the terminal step is an exact solve and the Jacobian (lumped
diagonal included) is symmetric positive definite for W >= 0.

W is the undegraded bulk energy density evaluated at quadrature points
of the current mechanics solution; the degradation enters through the
(1-kappa) phi factor of the first term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constitutive import ModelParams, degradation
from .errors import SolverError
from .fem import GAUSS2, ConstraintSet, ScalarField, assemble, cell_basis, integrate, quad_values, solve_linear


@dataclass
class PhaseFieldProblem:
    """Damage subproblem data for one staggered iteration.

    Attributes
    ----------
    mesh : Mesh
    params : ModelParams
        Supplies Gc. The nonlinearity parameters do not enter here;
        they are already baked into ``w_quad``.
    constraints : ConstraintSet
        Hanging-node constraints. The damage field carries no Dirichlet
        data, so the constraint set is built with an empty boundary map.
    w_quad : ndarray, shape (n_cells, n_qp)
        Bulk energy density at the assembly quadrature points.
    pf_prev_time : ScalarField
        phi at the previous time step (irreversibility reference).
    pf_prev_iter : ScalarField
        phi at the previous staggered iterate (L-scheme anchor).
    multiplier : ndarray, shape (n_nodes,)
        Nodal augmented-Lagrangian multiplier, nonnegative.
    kappa, xi, gamma, l_stab : float
        Residual coefficients.
    eps_newton : float
        Newton increment tolerance on the master-dof 2-norm.
    active : ndarray or None
        Frozen nodal active set. None (the default) re-derives the
        indicator from the current iterate at each evaluation.
    """

    mesh: object
    params: ModelParams
    constraints: ConstraintSet
    w_quad: np.ndarray
    pf_prev_time: ScalarField
    pf_prev_iter: ScalarField
    multiplier: np.ndarray
    kappa: float
    xi: float
    gamma: float = 1.0e4
    l_stab: float = 1.0e-6
    eps_newton: float = 1.0e-7
    max_newton: int = 50
    max_cuts: int = 30
    lin_tol: float = 1.0e-12
    active: np.ndarray | None = None


@dataclass
class PhaseFieldResult:
    field: ScalarField
    newton_iters: int
    increments: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    overshoot: float = 0.0
    oscillating: bool = False


def _kernel(problem, want_matrix):
    gc = problem.params.Gc
    xi = problem.xi
    kap = problem.kappa
    lstab = problem.l_stab
    w = problem.w_quad

    def kernel(ctx):
        pf = ctx["values"]["pf"]
        prev_i = ctx["values"]["prev_iter"]
        out = {
            "flux": gc * xi * ctx["grads"]["pf"],
            "source": (1.0 - kap) * pf * w
            - (gc / xi) * (1.0 - pf)
            + lstab * (pf - prev_i),
        }
        if want_matrix:
            n_c, n_q = pf.shape
            eye = np.zeros((n_c, n_q, 2, 2))
            eye[..., 0, 0] = gc * xi
            eye[..., 1, 1] = gc * xi
            out["tangent"] = eye
            out["reaction"] = (1.0 - kap) * w + gc / xi + lstab
        return out

    return kernel


def _fields(problem, pf_values):
    return {
        "pf": pf_values,
        "prev_iter": problem.pf_prev_iter.values,
    }


def lumped_mass(mesh) -> np.ndarray:
    """Row-sum mass vector: m_i = integral of the i-th hat function."""
    basis = cell_basis(mesh, GAUSS2)
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.cells, np.einsum("mq,qi->mi", basis.JxW, basis.N))
    return m


def nodal_slack(problem, pf: ScalarField) -> np.ndarray:
    """lam + gamma (phi - phi_prev_time) on nodes."""
    return problem.multiplier + problem.gamma * (pf.values - problem.pf_prev_time.values)


def active_set(problem, pf: ScalarField) -> np.ndarray:
    """Nodal indicator of positive slack; frozen when problem.active is set."""
    if problem.active is not None:
        return problem.active
    return nodal_slack(problem, pf) > 0.0


def pf_residual(problem, pf: ScalarField):
    """Assemble the reduced residual at the given damage iterate."""
    r = assemble(problem.mesh, problem.constraints, _kernel(problem, False),
                 _fields(problem, pf.values), want_matrix=False)
    pen = np.where(active_set(problem, pf), nodal_slack(problem, pf), 0.0)
    return r + problem.constraints.reduce_vector(lumped_mass(problem.mesh) * pen)


def pf_jacobian(problem, pf: ScalarField):
    """Assemble residual and Jacobian; the matrix is SPD for W >= 0."""
    mat, r = assemble(problem.mesh, problem.constraints, _kernel(problem, True),
                      _fields(problem, pf.values), want_matrix=True)
    eta = active_set(problem, pf)
    m = lumped_mass(problem.mesh)
    pen = np.where(eta, nodal_slack(problem, pf), 0.0)
    r = r + problem.constraints.reduce_vector(m * pen)
    diag = sp.diags(m * problem.gamma * eta.astype(float))
    mat = mat + problem.constraints.reduce_matrix(diag.tocsr())
    return mat, r


def projected_residual(problem, pf: ScalarField) -> np.ndarray:
    """First-order optimality residual of the box-constrained subproblem.

    Components that push an iterate further into an active bound
    (phi = 0 pushed down, phi = 1 pushed up) are zeroed: those
    directions are blocked, so they are not solution defects. Away
    from active bounds this equals the plain residual.
    """
    r = pf_residual(problem, pf).copy()
    vals = pf.values[problem.constraints.master_ids]
    r[(vals <= 0.0) & (r > 0.0)] = 0.0
    r[(vals >= 1.0) & (r < 0.0)] = 0.0
    return r


def _blocked(values_m: np.ndarray, res: np.ndarray) -> np.ndarray:
    """Master dofs pinned by a bound that the residual pushes into."""
    return ((values_m <= 0.0) & (res > 0.0)) | ((values_m >= 1.0) & (res < 0.0))


def _clip_project(cons, values: np.ndarray) -> np.ndarray:
    return cons.project(np.clip(values, 0.0, 1.0))


def solve_phasefield(problem: PhaseFieldProblem, initial: ScalarField | None = None) -> PhaseFieldResult:
    """Projected semi-smooth Newton solve of the damage subproblem.

    The active-set indicator is refreshed from the current iterate
    before each linearization.  Every iterate is kept inside the box
    [0, 1]: dofs sitting on a bound with the residual pushing into it
    are dropped from the linear solve, and trial steps are clipped
    back into the box.  Backtracking halves the step until the
    projected residual norm decreases.  The largest clipped overshoot
    across all iterates is reported as a diagnostic.
    """
    cons = problem.constraints
    if initial is None:
        pf = problem.pf_prev_iter.copy()
    else:
        pf = initial.copy()
    overshoot = float(max(np.max(pf.values - 1.0, initial=0.0),
                          np.max(-pf.values, initial=0.0)))
    pf.values = _clip_project(cons, pf.values)

    increments = []
    residuals = []
    eta_history = []
    oscillating = False
    for it in range(problem.max_newton):
        mat, res = pf_jacobian(problem, pf)
        blocked = _blocked(pf.values[cons.master_ids], res)
        res_proj = np.where(blocked, 0.0, res)
        res_norm = float(np.linalg.norm(res_proj))
        residuals.append(res_norm)

        eta_nodes = tuple(active_set(problem, pf))
        if len(eta_history) >= 2 and eta_nodes == eta_history[-2] and eta_nodes != eta_history[-1]:
            oscillating = True
        eta_history.append(eta_nodes)

        if np.any(blocked):
            free = sp.diags((~blocked).astype(float))
            pinned = sp.diags(blocked.astype(float))
            mat = (free @ mat @ free + pinned).tocsr()
        du_m = solve_linear(mat, -res_proj, tol=problem.lin_tol)
        step = float(np.linalg.norm(du_m))
        increments.append(step)

        def apply(omega):
            raw = pf.values + omega * cons.expand_increment(du_m)
            over = float(max(np.max(raw - 1.0, initial=0.0),
                             np.max(-raw, initial=0.0)))
            return _clip_project(cons, raw), over

        if step <= problem.eps_newton:
            pf.values, over = apply(1.0)
            overshoot = max(overshoot, over)
            return _finish(problem, pf, it + 1, increments, residuals,
                           overshoot, oscillating)

        omega = 1.0
        for _ in range(problem.max_cuts + 1):
            trial, over = apply(omega)
            trial_field = ScalarField(problem.mesh, trial)
            trial_res = pf_residual(problem, trial_field)
            trial_blocked = _blocked(trial[cons.master_ids], trial_res)
            trial_norm = float(np.linalg.norm(np.where(trial_blocked, 0.0, trial_res)))
            if trial_norm < res_norm:
                pf.values = trial
                overshoot = max(overshoot, over)
                break
            omega *= 0.5
        else:
            raise SolverError("phase-field line search exhausted at iteration %d "
                              "(residual %.3e)" % (it + 1, res_norm))

        if step * omega <= problem.eps_newton:
            return _finish(problem, pf, it + 1, increments, residuals,
                           overshoot, oscillating)

    raise SolverError("phase-field Newton did not converge in %d iterations "
                      "(last increment %.3e)" % (problem.max_newton, increments[-1]))


def _finish(problem, pf, iters, increments, residuals, overshoot, oscillating):
    pf.values = _clip_project(problem.constraints, pf.values)
    return PhaseFieldResult(field=pf, newton_iters=iters, increments=increments,
                            residuals=residuals, overshoot=overshoot,
                            oscillating=oscillating)


def update_multiplier(multiplier: np.ndarray, gamma: float, pf: ScalarField,
                      pf_prev_time: ScalarField) -> np.ndarray:
    """Nodal positive-part update lam <- [lam + gamma (phi - phi_prev)]+."""
    return np.maximum(multiplier + gamma * (pf.values - pf_prev_time.values), 0.0)


def uniform_stationary_value(w: float, params: ModelParams, kappa: float, xi: float) -> float:
    """Stationary damage value for spatially uniform bulk density.

    With gradients, penalty and anchors absent, the nodal stationarity
    condition (1-kappa) phi W - Gc/xi (1 - phi) = 0 gives

        phi* = (Gc/xi) / ((1-kappa) W + Gc/xi).
    """
    a = params.Gc / xi
    return a / ((1.0 - kappa) * w + a)


def penalized_energy(problem: PhaseFieldProblem, pf: ScalarField) -> float:
    """Objective value whose minimization the damage solve performs.

    One half of the degraded bulk density, the crack surface energy,
    and the positive-part penalty (lumped nodally, so that the damage
    residual is its exact gradient); the L-scheme anchor term is
    omitted since it vanishes at staggered fixed points.
    """
    gc = problem.params.Gc
    xi = problem.xi
    vals, grads = quad_values(problem.mesh, pf.values, GAUSS2)
    bulk = 0.5 * degradation(vals, problem.kappa) * problem.w_quad
    crack = gc * ((1.0 - vals) ** 2 / (2.0 * xi)
                  + 0.5 * xi * np.einsum("cqd,cqd->cq", grads, grads))
    pen_nodal = np.maximum(nodal_slack(problem, pf), 0.0) ** 2 / (2.0 * problem.gamma)
    return integrate(problem.mesh, bulk + crack, GAUSS2) + float(lumped_mass(problem.mesh) @ pen_nodal)


def band_initial_pf(mesh, slit, xi: float) -> ScalarField:
    """Initial damage field representing a slit as a phi = 0 band.

    Nodes within xi of the slit segment start fully damaged; all
    others start intact.
    """
    pts = mesh.nodes
    a = np.asarray(slit.start, dtype=float)
    b = np.asarray(slit.end, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    closest = a[None, :] + t[:, None] * ab[None, :]
    dist = np.linalg.norm(pts - closest, axis=1)
    values = np.where(dist <= xi, 0.0, 1.0)
    return ScalarField(mesh, values)
