"""Quasi-static evolution driver.

Each time step couples the mechanics and damage subproblems through a
staggered fixed-point loop. Both subproblems carry an L-scheme mass
anchor against their previous staggered iterate, the irreversibility
multiplier is refreshed after every damage solve, and the step is
accepted once both subproblem residuals, re-evaluated at the newest
iterates with the anchors moved onto themselves so the stabilization
terms vanish, fall below the outer tolerance.

Loading enters only through Dirichlet data scaled by time; there are
no inertia terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .constitutive import ModelParams, bulk_energy_density, degradation
from .errors import SolverError
from .fem import GAUSS2, ConstraintSet, ScalarField, integrate, quad_values, sample_line
from .mechanics import MechanicsProblem, mech_residual, solve_mechanics
from .phasefield import (PhaseFieldProblem, projected_residual, solve_phasefield,
                         update_multiplier)

# Abort when the combined residual is this many times larger than it
# was _DIVERGENCE_WINDOW iterations earlier. During a crack-front sweep
# the residual legitimately drifts upward for tens of iterations before
# the front arrests and the loop converges, so plain monotone growth is
# not evidence of divergence; a thousandfold rise inside ten iterations
# is.
_DIVERGENCE_WINDOW = 10
_DIVERGENCE_FACTOR = 1.0e3


@dataclass
class StaggeredSetup:
    """Fixed per-run data for the staggered loop.

    dirichlet_fn maps a time value to the mechanics Dirichlet node map;
    source is an optional manufactured volumetric term evaluated at
    quadrature coordinates.
    """

    mesh: object
    params: ModelParams
    kappa: float
    xi: float
    dirichlet_fn: object
    gamma: float = 1.0e4
    l_phi: float = 1.0e-6
    l_pf: float = 1.0e-6
    eps_phi: float = 1.0e-7
    eps_pf: float = 1.0e-7
    tol_outer: float = 1.0e-6
    max_newton: int = 50
    max_staggered: int = 200
    source: object = None
    pf_constraints: ConstraintSet = None

    def __post_init__(self):
        if self.pf_constraints is None:
            self.pf_constraints = ConstraintSet(self.mesh, {})


@dataclass
class StaggeredState:
    step: int
    time: float
    phi: ScalarField
    pf: ScalarField
    pf_prev: ScalarField
    multiplier: np.ndarray


@dataclass
class StepReport:
    staggered_iters: int
    mech_residuals: list = field(default_factory=list)
    pf_residuals: list = field(default_factory=list)
    mech_newton: list = field(default_factory=list)
    pf_newton: list = field(default_factory=list)
    max_pf_rise: float = 0.0
    converged: bool = False


@dataclass
class EnergyReport:
    bulk: float
    crack: float


def initial_state(setup: StaggeredSetup, pf0: ScalarField | None = None) -> StaggeredState:
    mesh = setup.mesh
    cons = ConstraintSet(mesh, setup.dirichlet_fn(0.0))
    phi = ScalarField(mesh, cons.distribute(np.zeros(cons.n_masters)))
    if pf0 is None:
        pf0 = ScalarField.constant(mesh, 1.0)
    pf0 = ScalarField(mesh, setup.pf_constraints.project(pf0.values.copy()))
    return StaggeredState(step=0, time=0.0, phi=phi, pf=pf0, pf_prev=pf0.copy(),
                          multiplier=np.zeros(mesh.n_nodes))


def _w_quad(mesh, phi_values, params):
    _, grads = quad_values(mesh, phi_values, GAUSS2)
    return bulk_energy_density(grads, params)


def advance_step(setup: StaggeredSetup, state: StaggeredState, time: float):
    """Advance one quasi-static step; returns (new_state, StepReport).

    Raises SolverError when the staggered loop exceeds its cap or the
    combined residual grows over too many consecutive iterations; the
    exception carries the residual history.
    """
    mesh = setup.mesh
    mech_cons = ConstraintSet(mesh, setup.dirichlet_fn(time))

    phi = ScalarField(mesh, mech_cons.project(state.phi.values.copy()))
    pf = state.pf.copy()
    pf_prev_time = state.pf.copy()
    lam = np.zeros(mesh.n_nodes)

    report = StepReport(staggered_iters=0)
    combined_history = []
    converged = False

    for _ in range(setup.max_staggered):
        report.staggered_iters += 1

        mech = MechanicsProblem(
            mesh=mesh, params=setup.params, constraints=mech_cons,
            kappa=setup.kappa, pf=pf, anchor=phi, l_stab=setup.l_phi,
            source=setup.source, eps_newton=setup.eps_phi,
            max_newton=setup.max_newton)
        mres = solve_mechanics(mech, initial=phi)
        phi = mres.field
        report.mech_newton.append(mres.newton_iters)

        w = _w_quad(mesh, phi.values, setup.params)
        pfp = PhaseFieldProblem(
            mesh=mesh, params=setup.params, constraints=setup.pf_constraints,
            w_quad=w, pf_prev_time=pf_prev_time, pf_prev_iter=pf,
            multiplier=lam, kappa=setup.kappa, xi=setup.xi,
            gamma=setup.gamma, l_stab=setup.l_pf,
            eps_newton=setup.eps_pf, max_newton=setup.max_newton)
        pres = solve_phasefield(pfp, initial=pf)
        pf = pres.field
        report.pf_newton.append(pres.newton_iters)

        lam = update_multiplier(lam, setup.gamma, pf, pf_prev_time)

        # Residuals at the newest iterates; anchors moved onto the
        # iterates themselves so the L-scheme terms drop out, and the
        # mechanics residual sees the newest damage field. The damage
        # residual is the projected one: components blocked by an
        # active bound of [0,1] are not defects.
        r1 = float(np.linalg.norm(mech_residual(replace(mech, pf=pf, anchor=phi), phi)))
        r2 = float(np.linalg.norm(projected_residual(
            replace(pfp, pf_prev_iter=pf, multiplier=lam), pf)))
        report.mech_residuals.append(r1)
        report.pf_residuals.append(r2)

        if r1 <= setup.tol_outer and r2 <= setup.tol_outer:
            converged = True
            break

        combined = max(r1, r2)
        combined_history.append(combined)
        blown_up = (len(combined_history) > _DIVERGENCE_WINDOW and
                    combined > _DIVERGENCE_FACTOR *
                    combined_history[-1 - _DIVERGENCE_WINDOW])
        if not np.isfinite(combined) or blown_up:
            err = SolverError(
                "staggered loop diverging: residual grew from %.3e to %.3e "
                "over %d iterations" % (
                    combined_history[max(0, len(combined_history) - 1 -
                                         _DIVERGENCE_WINDOW)],
                    combined, _DIVERGENCE_WINDOW))
            err.residual_history = (report.mech_residuals, report.pf_residuals)
            raise err

    if not converged:
        err = SolverError(
            "staggered loop did not converge in %d iterations "
            "(residuals %.3e / %.3e)" % (setup.max_staggered,
                                         report.mech_residuals[-1],
                                         report.pf_residuals[-1]))
        err.residual_history = (report.mech_residuals, report.pf_residuals)
        raise err

    report.converged = True
    report.max_pf_rise = float(np.max(pf.values - pf_prev_time.values))
    new_state = StaggeredState(step=state.step + 1, time=time, phi=phi, pf=pf,
                               pf_prev=pf_prev_time, multiplier=lam)
    return new_state, report


def compute_energies(setup: StaggeredSetup, state: StaggeredState) -> EnergyReport:
    """Quadrature of the bulk and crack energies at the given state.

    bulk  = 1/2 int g(phi) W(Phi) dx
    crack = Gc int (1-phi)^2/(2 xi) + xi/2 |grad phi|^2 dx
    """
    mesh = setup.mesh
    vals, grads = quad_values(mesh, state.pf.values, GAUSS2)
    w = _w_quad(mesh, state.phi.values, setup.params)
    bulk = integrate(mesh, 0.5 * degradation(vals, setup.kappa) * w, GAUSS2)
    crack = integrate(mesh, setup.params.Gc * (
        (1.0 - vals) ** 2 / (2.0 * setup.xi)
        + 0.5 * setup.xi * np.einsum("cqd,cqd->cq", grads, grads)), GAUSS2)
    return EnergyReport(bulk=bulk, crack=crack)


def locate_tip(pf: ScalarField, path_start, path_end, n_samples: int = 512) -> float:
    """Arc-length of the crack tip along the expected straight path.

    Returns the farthest sampled arc coordinate with phi <= 0.5,
    measured from path_start (the initial tip); 0.0 when no sample
    qualifies.
    """
    rows = sample_line(pf.mesh, {"pf": pf.values}, path_start, path_end, n_samples)
    arcs = rows[:, 0]
    vals = rows[:, 1]
    mask = vals <= 0.5
    if not np.any(mask):
        return 0.0
    return float(np.max(arcs[mask]))


@dataclass
class RunResult:
    times: list = field(default_factory=list)
    bulk: list = field(default_factory=list)
    crack: list = field(default_factory=list)
    tip: list = field(default_factory=list)
    tip_speed: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    final_state: StaggeredState = None


def run_quasistatic(setup: StaggeredSetup, dt: float, n_steps: int,
                    pf0: ScalarField | None = None, path=None,
                    on_step=None, stop_when=None) -> RunResult:
    """March n_steps of size dt from the unloaded state.

    path, when given, is the (start, end) crack line for tip tracking.
    on_step(state, report, energies, tip) is called after each accepted
    step. stop_when(result), checked after each step, ends the march
    early when it returns true. A step failure re-raises with the
    partial result attached as exc.partial.
    """
    state = initial_state(setup, pf0)
    result = RunResult(final_state=state)
    # speed baseline: the tip already present in the initial field
    prev_tip = locate_tip(state.pf, path[0], path[1]) if path is not None else 0.0
    for k in range(1, n_steps + 1):
        t = k * dt
        try:
            state, report = advance_step(setup, state, t)
        except SolverError as err:
            err.partial = result
            raise
        energies = compute_energies(setup, state)
        tip = locate_tip(state.pf, path[0], path[1]) if path is not None else 0.0
        result.times.append(t)
        result.bulk.append(energies.bulk)
        result.crack.append(energies.crack)
        result.tip.append(tip)
        result.tip_speed.append((tip - prev_tip) / dt)
        result.reports.append(report)
        result.final_state = state
        prev_tip = tip
        if on_step is not None:
            on_step(state, report, energies, tip)
        if stop_when is not None and stop_when(result):
            break
    return result
