"""Acceptance suite: one test per shipping criterion.

Each test covers one numbered criterion and reports a single pass or
fail line under pytest -v. Clause failures inside a criterion are
collected so the failure message lists every violated clause with the
measured numbers.

Floating-point convention: the strain bound 1 / (2 mu beta) is checked
with a 4 machine-epsilon allowance. The bound holds exactly in real
arithmetic; the allowance only absorbs the last-ulp scatter of two
independently rounded expressions, never a systematic excess.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from limitfrac.config import parse_config_text
from limitfrac.constitutive import (
    ModelParams,
    bulk_energy_density,
    flux,
    flux_tangent,
    recover_stress_strain,
)
from limitfrac.driver import StaggeredState, compute_energies
from limitfrac.examples import (
    apply_preset,
    ex4_sweep,
    initiation_step,
    mms_ladder,
    staggered_setup,
)
from limitfrac.fem import GAUSS2, ConstraintSet, ScalarField
from limitfrac.mesh import BoundaryTag, build_unit_square
from limitfrac.phasefield import (
    PhaseFieldProblem,
    active_set,
    pf_jacobian,
    pf_residual,
    solve_phasefield,
    uniform_stationary_value,
)

# reference error ladders for the manufactured-solution study,
# 6 cycles, mu = 0.01, zero boundary data
_DOFS_REF = [9, 25, 81, 289, 1089, 4225]
_LEFM_ERRS_REF = [0.250000000000, 0.067876629531, 0.017249573022,
                  0.004329234362, 0.001083351206, 0.000270902819]
_NLSL_ERRS_REF = [0.206592351198, 0.059590231627, 0.015062531456,
                  0.003735017497, 0.000921668019, 0.000226948716]


def _check(clauses):
    failed = [msg for ok, msg in clauses if not ok]
    assert not failed, " | ".join(failed)


# ------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def lefm_ladder():
    t0 = time.monotonic()
    data = mms_ladder(6, ModelParams(mu=0.01, alpha=1.0, beta=0.0))
    data["wall"] = time.monotonic() - t0
    return data


@pytest.fixture(scope="module")
def nlsl_ladder():
    t0 = time.monotonic()
    data = mms_ladder(6, ModelParams(mu=0.01, alpha=1.0, beta=0.2))
    data["wall"] = time.monotonic() - t0
    return data


@pytest.fixture(scope="module")
def crack_sweep():
    """Crack initiation study at desk scale: all four model cases on a
    five-times-refined unit square with a two-level band refinement."""
    cfg = apply_preset(parse_config_text(
        "run.example = ex4\n"
        "mesh.n_global = 5\n"
        "mesh.refine_box = 0.4375 0 0.5625 1 2\n"))
    t0 = time.monotonic()
    results = ex4_sweep(cfg, stop_tip=0.2)
    wall = time.monotonic() - t0
    return {"results": results, "wall": wall}


# ------------------------------------------------------------- criteria

def test_criterion_1_linear_convergence_ladder(lefm_ladder):
    """Six-cycle ladder of the linear model: reference errors within 1%,
    final observed rate 2.0450 +- 0.05, finished in under a minute."""
    data = lefm_ladder
    clauses = [(data["dofs"] == _DOFS_REF,
                "dofs %s != %s" % (data["dofs"], _DOFS_REF))]
    for k, (got, ref) in enumerate(zip(data["errors"], _LEFM_ERRS_REF)):
        rel = abs(got - ref) / ref
        clauses.append((rel <= 0.01,
                        "cycle %d error %.12e vs reference %.12e (rel %.3e)"
                        % (k + 1, got, ref, rel)))
    clauses.append((abs(data["rates"][-1] - 2.0450) <= 0.05,
                    "final rate %.4f outside 2.0450 +- 0.05" % data["rates"][-1]))
    clauses.append((data["wall"] < 60.0, "runtime %.1fs >= 60s" % data["wall"]))
    _check(clauses)


def test_criterion_2_strain_limiting_convergence_ladder(nlsl_ladder):
    """Six-cycle ladder of the strain-limiting model (alpha 1, beta 0.2):
    reference errors within 2%, final observed rate 2.0674 +- 0.05."""
    data = nlsl_ladder
    clauses = [(data["dofs"] == _DOFS_REF,
                "dofs %s != %s" % (data["dofs"], _DOFS_REF))]
    for k, (got, ref) in enumerate(zip(data["errors"], _NLSL_ERRS_REF)):
        rel = abs(got - ref) / ref
        clauses.append((rel <= 0.02,
                        "cycle %d error %.12e vs reference %.12e (rel %.3e)"
                        % (k + 1, got, ref, rel)))
    clauses.append((abs(data["rates"][-1] - 2.0674) <= 0.05,
                    "final rate %.4f outside 2.0674 +- 0.05" % data["rates"][-1]))
    _check(clauses)


def test_criterion_3_strain_bound_never_violated():
    """1e5 randomized states: recovered strain magnitude stays within
    1 / (2 mu beta), and |eps23| decreases as beta grows."""
    rng = np.random.default_rng(2024)
    n = 100_000
    thetas = rng.uniform(0.0, 2.0 * np.pi, n)
    mags = 10.0 ** rng.uniform(-6.0, 8.0, n)
    betas = rng.uniform(0.1, 25.0, n)
    alphas = rng.uniform(0.1, 2.0, n)
    mus = rng.uniform(0.01, 20.0, n)
    allowance = 1.0 + 4.0 * np.finfo(float).eps
    violations = 0
    worst = 0.0
    for k in range(n):
        g = mags[k] * np.array([np.cos(thetas[k]), np.sin(thetas[k])])
        p = ModelParams(mu=mus[k], alpha=alphas[k], beta=betas[k])
        _, eps = recover_stress_strain(g, 1.0, p, 0.0)
        norm = float(np.hypot(eps[0], eps[1]))
        bound = 1.0 / (2.0 * p.mu * p.beta)
        worst = max(worst, norm / bound)
        if norm > bound * allowance:
            violations += 1
    clauses = [(violations == 0,
                "%d of %d states violate the strain bound (worst ratio %.17f)"
                % (violations, n, worst))]

    # monotonicity: at a fixed state |eps23| must fall as beta rises
    beta_ladder = np.linspace(0.1, 25.0, 8)
    bad_pairs = 0
    for k in range(1000):
        theta = rng.uniform(0.05, np.pi / 2 - 0.05)
        g = 10.0 ** rng.uniform(-3.0, 8.0) * np.array(
            [np.cos(theta), np.sin(theta)])
        mu = rng.uniform(0.01, 20.0)
        alpha = rng.uniform(0.1, 2.0)
        eps23 = []
        for beta in beta_ladder:
            p = ModelParams(mu=mu, alpha=alpha, beta=beta)
            _, eps = recover_stress_strain(g, 1.0, p, 0.0)
            eps23.append(abs(eps[1]))
        bad_pairs += int(np.any(np.diff(eps23) >= 0.0))
    clauses.append((bad_pairs == 0,
                    "%d states lost strict |eps23| decrease in beta" % bad_pairs))
    _check(clauses)


def test_criterion_4_flux_tangent_is_consistent_and_spd():
    """1e3 randomized states including alpha = 0.1 near zero gradient:
    analytic tangent matches central differences to 1e-5 relative and is
    symmetric positive definite everywhere."""
    rng = np.random.default_rng(77)
    states = []
    for _ in range(800):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        r = 10.0 ** rng.uniform(-4.0, 6.0)
        states.append((r * np.cos(theta), r * np.sin(theta),
                       rng.uniform(0.1, 2.0), rng.uniform(0.1, 25.0),
                       rng.uniform(0.01, 20.0)))
    for _ in range(200):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        r = 10.0 ** rng.uniform(-10.0, -2.0)
        states.append((r * np.cos(theta), r * np.sin(theta), 0.1,
                       rng.uniform(0.1, 25.0), rng.uniform(0.01, 20.0)))

    worst_rel = 0.0
    min_eig = np.inf
    asym = 0.0
    for g1, g2, alpha, beta, mu in states:
        p = ModelParams(mu=mu, alpha=alpha, beta=beta)
        g = np.array([g1, g2])
        t = flux_tangent(g, p)
        r = float(np.hypot(g1, g2))
        h = 1e-4 * r
        fd = np.zeros((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd[:, j] = (flux(g + e, p) - flux(g - e, p)) / (2.0 * h)
        worst_rel = max(worst_rel, np.linalg.norm(t - fd) / np.linalg.norm(fd))
        asym = max(asym, abs(t[0, 1] - t[1, 0]))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(t)[0]))
    _check([
        (worst_rel <= 1e-5,
         "worst tangent vs differences mismatch %.3e > 1e-5" % worst_rel),
        (asym <= 1e-15, "tangent asymmetry %.3e" % asym),
        (min_eig > 0.0, "non positive tangent eigenvalue %.3e" % min_eig),
    ])


def _uniform_pf_problem(mesh, w, **kw):
    cons = ConstraintSet(mesh)
    ones = ScalarField.constant(mesh, 1.0)
    n_q = len(GAUSS2.weights)
    w_quad = np.full((mesh.n_cells, n_q), float(w)) if np.isscalar(w) else w
    defaults = dict(params=ModelParams(Gc=1.0), constraints=cons,
                    kappa=1e-10, xi=0.25, gamma=1e4, l_stab=1e-6,
                    eps_newton=1e-9)
    defaults.update(kw)
    return PhaseFieldProblem(mesh=mesh, w_quad=w_quad, pf_prev_time=ones,
                             pf_prev_iter=ones.copy(),
                             multiplier=np.zeros(mesh.n_nodes), **defaults)


def test_criterion_5_damage_solver_stationarity():
    """Uniform energy gives the closed-form constant field to 1e-10, one
    extra Newton step at a fixed active set cuts the residual by twelve
    orders, and zero energy leaves the field fully intact."""
    mesh = build_unit_square(3)
    clauses = []

    w0 = 7.3
    prob = _uniform_pf_problem(mesh, w0)
    first = solve_phasefield(prob, initial=ScalarField.constant(mesh, 1.0))
    prob_anchored = replace(_uniform_pf_problem(mesh, w0),
                            pf_prev_iter=first.field)
    res = solve_phasefield(prob_anchored, initial=first.field)
    expect = uniform_stationary_value(w0, prob.params, prob.kappa, prob.xi)
    dev = float(np.max(np.abs(res.field.values - expect)))
    clauses.append((dev <= 1e-10,
                    "stationary value deviates by %.3e > 1e-10" % dev))

    rng = np.random.default_rng(8)
    w = rng.uniform(0.5, 3.0, (mesh.n_cells, len(GAUSS2.weights)))
    prob2 = _uniform_pf_problem(mesh, w)
    pf = ScalarField(mesh, rng.uniform(0.25, 0.75, mesh.n_nodes))
    frozen = active_set(prob2, pf)
    prob_frozen = _uniform_pf_problem(mesh, w, active=frozen)
    r0 = pf_residual(prob_frozen, pf)
    mat, _ = pf_jacobian(prob_frozen, pf)
    du = spla.spsolve(mat.tocsc(), -r0)
    pf2 = ScalarField(mesh, pf.values + prob_frozen.constraints.expand_increment(du))
    r1 = pf_residual(prob_frozen, pf2)
    ratio = np.linalg.norm(r1) / np.linalg.norm(r0)
    clauses.append((np.linalg.norm(r0) > 1e-3,
                    "entry residual %.3e too small to measure the drop"
                    % np.linalg.norm(r0)))
    clauses.append((ratio <= 1e-12,
                    "one Newton step left residual ratio %.3e > 1e-12" % ratio))

    prob3 = _uniform_pf_problem(mesh, 0.0)
    res3 = solve_phasefield(prob3, initial=ScalarField.constant(mesh, 1.0))
    off = float(np.max(np.abs(res3.field.values - 1.0)))
    clauses.append((off <= 1e-14, "zero energy moved the field by %.3e" % off))
    _check(clauses)


def test_criterion_6_energy_closed_forms():
    """Crack energy vanishes for the intact field, equals Gc |domain| /
    (2 xi) for the broken field, and the bulk density equals flux dot
    gradient to fourteen digits."""
    mesh = build_unit_square(3)
    cfg = apply_preset(parse_config_text("run.example = ex4\n"))
    params = ModelParams(mu=cfg.mu, alpha=1.0, beta=0.0, Gc=cfg.Gc)
    setup = staggered_setup(cfg, mesh, params,
                            {BoundaryTag.TOP_LEFT_HALF: 0.0,
                             BoundaryTag.TOP_RIGHT_HALF: 0.0})
    clauses = []

    def state_with(pf_value):
        const = ScalarField.constant(mesh, pf_value)
        return StaggeredState(step=0, time=0.0,
                              phi=ScalarField.constant(mesh, 0.0),
                              pf=const, pf_prev=const.copy(),
                              multiplier=np.zeros(mesh.n_nodes))

    e_intact = compute_energies(setup, state_with(1.0))
    clauses.append((abs(e_intact.crack) <= 1e-14,
                    "intact crack energy %.3e > 1e-14" % e_intact.crack))

    e_broken = compute_energies(setup, state_with(0.0))
    expect = setup.params.Gc * 1.0 / (2.0 * setup.xi)
    rel = abs(e_broken.crack - expect) / expect
    clauses.append((rel <= 1e-12,
                    "broken crack energy off by rel %.3e > 1e-12" % rel))

    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(500):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        r = 10.0 ** rng.uniform(-6.0, 6.0)
        g = r * np.array([np.cos(theta), np.sin(theta)])
        p = ModelParams(mu=rng.uniform(0.01, 20.0),
                        alpha=rng.uniform(0.1, 2.0),
                        beta=rng.uniform(0.0, 25.0))
        w = bulk_energy_density(g, p)
        dot = float(np.dot(flux(g, p), g))
        worst = max(worst, abs(w - dot) / max(abs(dot), 1e-300))
    clauses.append((worst <= 1e-14,
                    "density vs flux dot gradient mismatch %.3e > 1e-14" % worst))
    _check(clauses)


def test_criterion_7_irreversibility_on_desk_study(crack_sweep):
    """Across the whole four-case study no accepted step heals the field
    by more than 1e-3 at any node and the tip never retreats."""
    clauses = []
    for label, result in crack_sweep["results"].items():
        rise = max(rep.max_pf_rise for rep in result.reports)
        clauses.append((rise <= 1e-3,
                        "case %s healed by %.3e > 1e-3" % (label, rise)))
        drops = float(np.min(np.diff(result.tip))) if len(result.tip) > 1 else 0.0
        clauses.append((drops >= -1e-12,
                        "case %s tip retreated by %.3e" % (label, -drops)))
    _check(clauses)


def test_criterion_8_initiation_order_and_energy_ordering(crack_sweep):
    """Crack initiation is strictly delayed by stronger nonlinearity,
    pre-initiation energies of every strain-limiting case stay below the
    linear case, and the study finishes inside fifteen minutes."""
    results = crack_sweep["results"]
    init = {label: initiation_step(results[label], threshold=0.1)
            for label in ("i", "ii", "iii", "iv")}
    clauses = [(all(v is not None for v in init.values()),
                "some case never initiated: %s" % init)]
    if all(v is not None for v in init.values()):
        clauses.append((init["i"] < init["ii"] < init["iii"] < init["iv"],
                        "initiation steps not strictly ordered: %s" % init))
    lefm = results["i"]
    if init["i"] is not None:
        pre = init["i"] - 1
        for label in ("ii", "iii", "iv"):
            case = results[label]
            bulk_ok = all(case.bulk[k] <= lefm.bulk[k] + 1e-8
                          for k in range(pre))
            crack_ok = all(case.crack[k] <= lefm.crack[k] + 1e-8
                           for k in range(pre))
            clauses.append((bulk_ok,
                            "case %s bulk energy above linear pre-initiation"
                            % label))
            clauses.append((crack_ok,
                            "case %s crack energy above linear pre-initiation"
                            % label))
    clauses.append((crack_sweep["wall"] < 900.0,
                    "study took %.0fs >= 900s" % crack_sweep["wall"]))
    _check(clauses)


def test_criterion_9_every_step_converged_within_budget(crack_sweep):
    """Every accepted step of every case drove both residuals below 1e-6
    within the 200-iteration staggered budget."""
    clauses = []
    for label, result in crack_sweep["results"].items():
        for k, rep in enumerate(result.reports):
            ok = (rep.converged and rep.staggered_iters <= 200
                  and rep.mech_residuals[-1] <= 1e-6
                  and rep.pf_residuals[-1] <= 1e-6)
            if not ok:
                clauses.append((False,
                                "case %s step %d: iters %d, residuals %.2e/%.2e"
                                % (label, k + 1, rep.staggered_iters,
                                   rep.mech_residuals[-1], rep.pf_residuals[-1])))
    clauses.append((True, ""))
    _check(clauses)
