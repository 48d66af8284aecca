"""Newton solver for the degraded stress-potential equilibrium problem.

The weak residual, for test function w and potential Phi,

    L1(Phi; w) = (g(pf) flux(grad Phi), grad w)
               + L_stab (Phi - Phi_anchor, w) - (f, w),

couples the strain-limiting flux with the phase-field degradation
g(pf) = (1 - kappa) pf^2 + kappa.  The stabilisation term anchors the
staggered iteration (it vanishes at its fixed point) and f is an
optional manufactured source.  The Jacobian pairs g(pf) times the flux
tangent against gradients plus the L_stab mass term, and is symmetric
positive definite, so conjugate gradients apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constitutive as cst
from .errors import SolverError
from .fem import ConstraintSet, ScalarField, assemble, quad_values, solve_linear
from .mesh import Mesh


@dataclass
class MechanicsProblem:
    """One mechanics subproblem instance.

    Attributes
    ----------
    mesh : Mesh
    params : ModelParams
    constraints : ConstraintSet
        Dirichlet data for the load step plus hanging-node constraints.
    kappa : float
        Residual stiffness of the degradation function.
    pf : ScalarField or None
        Phase field; None means undamaged (g = 1).
    anchor : ScalarField or None
        Previous staggered iterate Phi^{n,i-1}; None disables the
        stabilisation term.
    l_stab : float
        Stabilisation weight L_Phi.
    source : callable or None
        Manufactured right-hand side f(x, y) evaluated at quadrature
        points.
    eps_newton : float
        Stop when the Newton increment norm drops below this.
    max_newton, max_cuts : int
        Iteration and line-search budgets.
    lin_tol : float
        Relative tolerance of the inner conjugate-gradient solves.
    """

    mesh: Mesh
    params: cst.ModelParams
    constraints: ConstraintSet
    kappa: float = 0.0
    pf: ScalarField | None = None
    anchor: ScalarField | None = None
    l_stab: float = 0.0
    source: object = None
    eps_newton: float = 1.0e-7
    max_newton: int = 50
    max_cuts: int = 30
    lin_tol: float = 1.0e-12


@dataclass
class MechanicsResult:
    field: ScalarField
    newton_iters: int
    increments: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    bootstrapped: bool = False


def _kernel(problem: MechanicsProblem, params: cst.ModelParams, want_matrix: bool):
    def kernel(ctx):
        grad = ctx["grads"]["phi"]
        if problem.pf is not None:
            gdeg = cst.degradation(ctx["values"]["pf"], problem.kappa)
        else:
            gdeg = np.ones(grad.shape[:2])
        out = {"flux": gdeg[..., None] * cst.flux(grad, params)}
        source = None
        if problem.l_stab != 0.0 and problem.anchor is not None:
            source = problem.l_stab * (ctx["values"]["phi"] - ctx["values"]["anchor"])
        if problem.source is not None:
            f = problem.source(ctx["x"][..., 0], ctx["x"][..., 1])
            source = -f if source is None else source - f
        out["source"] = source
        if want_matrix:
            out["tangent"] = gdeg[..., None, None] * cst.flux_tangent(grad, params)
            if problem.l_stab != 0.0 and problem.anchor is not None:
                out["reaction"] = np.full(grad.shape[:2], problem.l_stab)
        return out

    return kernel


def _fields(problem: MechanicsProblem, phi: ScalarField) -> dict:
    fields = {"phi": phi}
    if problem.pf is not None:
        fields["pf"] = problem.pf
    if problem.anchor is not None:
        fields["anchor"] = problem.anchor
    return fields


def mech_residual(problem: MechanicsProblem, phi: ScalarField) -> np.ndarray:
    """Reduced residual vector of L1 at the given iterate."""
    return assemble(
        problem.mesh,
        problem.constraints,
        _kernel(problem, problem.params, want_matrix=False),
        _fields(problem, phi),
        want_matrix=False,
    )


def mech_jacobian(problem: MechanicsProblem, phi: ScalarField):
    """Reduced (matrix, residual) pair of L1 at the given iterate."""
    return assemble(
        problem.mesh,
        problem.constraints,
        _kernel(problem, problem.params, want_matrix=True),
        _fields(problem, phi),
        want_matrix=True,
    )


def solve_mechanics(problem: MechanicsProblem, initial: ScalarField | None = None) -> MechanicsResult:
    """Solve the mechanics subproblem by damped Newton iteration.

    Without an initial guess the linear model (beta = 0) is solved first
    and used as the starting iterate.  Each Newton step backtracks
    omega in {1, 1/2, 1/4, ...} until the residual norm decreases, and
    the iteration stops once the increment norm falls below eps_newton.
    """
    cons = problem.constraints
    bootstrapped = False
    if initial is None:
        u = cons.distribute(np.zeros(cons.n_masters))
        phi = ScalarField(problem.mesh, u)
        if problem.params.beta != 0.0:
            linear = cst.ModelParams(
                mu=problem.params.mu, alpha=problem.params.alpha, beta=0.0,
                Gc=problem.params.Gc,
            )
            lin_prob = MechanicsProblem(
                mesh=problem.mesh, params=linear, constraints=cons,
                kappa=problem.kappa, pf=problem.pf, anchor=problem.anchor,
                l_stab=problem.l_stab, source=problem.source,
                lin_tol=problem.lin_tol,
            )
            A, r = mech_jacobian(lin_prob, phi)
            du = solve_linear(A, -r, tol=problem.lin_tol)
            phi = ScalarField(problem.mesh, u + cons.expand_increment(du))
            bootstrapped = True
    else:
        phi = ScalarField(problem.mesh, cons.project(initial.values))

    result = MechanicsResult(phi, 0, bootstrapped=bootstrapped)
    for it in range(1, problem.max_newton + 1):
        A, r = mech_jacobian(problem, phi)
        res_norm = np.linalg.norm(r)
        result.residuals.append(res_norm)
        du_m = solve_linear(A, -r, tol=problem.lin_tol)
        step = float(np.linalg.norm(du_m))
        result.increments.append(step)
        result.newton_iters = it
        du = cons.expand_increment(du_m)

        if step <= problem.eps_newton:
            # Converged; the tiny final increment needs no safeguarding.
            result.field = ScalarField(problem.mesh, phi.values + du)
            return result

        omega = 1.0
        for _ in range(problem.max_cuts + 1):
            trial = ScalarField(problem.mesh, phi.values + omega * du)
            trial_norm = np.linalg.norm(mech_residual(problem, trial))
            if trial_norm < res_norm:
                break
            omega *= 0.5
        else:
            raise SolverError(
                f"mechanics line search exhausted at Newton step {it} "
                f"(residual {res_norm:.3e})"
            )
        phi = trial
        result.field = phi
    raise SolverError(
        f"mechanics Newton did not converge in {problem.max_newton} iterations "
        f"(last increment {result.increments[-1]:.3e})"
    )
