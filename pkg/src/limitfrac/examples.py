"""Example presets and study runners.

Four studies ship with the package:

* ex1: manufactured-solution convergence ladder on the unit square,
  run once with beta = 0 and once with the nonlinear parameters.
* ex2: static carved slit from the domain center to the right edge,
  loaded antisymmetrically on the right boundary halves, swept over
  beta to expose the strain-limiting effect on the centerline.
* ex3: the same slit represented as a damage band (phi = 0) instead of
  carved faces, solved as one coupled staggered step, swept over alpha.
* ex4: quasi-static crack growth from a vertical slit band under a
  time-ramped antisymmetric load on the top boundary halves, run for
  four nonlinearity cases.

Each runner writes delimited output, field files, rendered figures and
a resolved-config echo into its own directory.
"""

from __future__ import annotations

import math
import os
from dataclasses import replace

import numpy as np

from .config import Config, resolved_echo
from .constitutive import ModelParams, bulk_energy_density, psi1, recover_stress_strain
from .driver import StaggeredSetup, run_quasistatic
from .errors import ConfigError
from .fem import GAUSS3, ConstraintSet, ScalarField, l2_error, sample_line
from .figures import centerline_figure, convergence_figure, field_figure, series_figure
from .io import write_convergence_csv, write_probe_csv, write_series_csv, write_text, write_vtk
from .mechanics import MechanicsProblem, solve_mechanics
from .mesh import BoundaryTag, SlitSpec, boundary_nodes, build_unit_square, carve_slit, refine_box
from .phasefield import band_initial_pf

_SIDE_TAGS = (BoundaryTag.LEFT, BoundaryTag.BOTTOM,
              BoundaryTag.RIGHT_TOP_HALF, BoundaryTag.RIGHT_BOTTOM_HALF,
              BoundaryTag.TOP_LEFT_HALF, BoundaryTag.TOP_RIGHT_HALF)

EX4_CASES = (("i", 1.0, 0.0), ("ii", 0.5, 0.001),
             ("iii", 0.5, 0.003), ("iv", 0.3, 0.001))

_PRESETS = {
    "ex1": dict(mu=0.01, alpha=1.0, beta=0.2, Gc=1.0, n_global=6),
    "ex2": dict(mu=1.0, alpha=1.5, beta=None, Gc=0.01, n_global=7,
                slit=(0.5, 0.5, 1.0, 0.5), c=0.1),
    "ex3": dict(mu=1.0, alpha=None, beta=1.0, Gc=0.01, n_global=7,
                slit=(0.5, 0.5, 1.0, 0.5),
                refine_box=(0.4375, 0.4375, 1.0, 0.5625, 3),
                c=0.01, dt=1.0, n_steps=1),
    "ex4": dict(mu=20.0, alpha=None, beta=None, Gc=1.0, n_global=7,
                slit=(0.5, 0.5, 0.5, 1.0),
                refine_box=(0.4375, 0.0, 0.5625, 1.0, 1),
                c=25.0, dt=1.0e-2, n_steps=80),
}


def apply_preset(cfg: Config) -> Config:
    """Fill fields the user left unset from the example preset."""
    preset = _PRESETS[cfg.example]
    updates = {}
    for name, value in preset.items():
        if name not in cfg.explicit and getattr(cfg, name) is None:
            updates[name] = value
    return replace(cfg, **updates) if updates else cfg


def dirichlet_map(mesh, tag_values: dict) -> dict:
    """Nodal Dirichlet data from per-tag boundary values.

    A node claimed by several tags with different values receives the
    average of the claims (this settles the corner shared by two loaded
    half-edges on an uncarved mesh).
    """
    claims = {}
    for tag, value in tag_values.items():
        for node in boundary_nodes(mesh, tag):
            claims.setdefault(node, []).append(value)
    return {node: sum(vals) / len(vals) for node, vals in claims.items()}


# ----------------------------------------------------------------- ex1

def mms_exact(x1, x2):
    return np.sin(np.pi * x1) * np.sin(np.pi * x2)


def mms_source(params: ModelParams):
    """Closed-form volumetric source for the manufactured solution.

    For u = sin(pi x) sin(pi y) the quasi-linear operator gives

        f = -( psi1(r) lap(u) + psi1'(r)/r * (grad u)^T H(u) grad u )

    with r = |grad u| and H the Hessian. psi1'(r)/r carries the factor
    -beta^alpha r^(alpha-2) psi1(r) / (1 + (beta r)^alpha); the product
    with the quadratic form vanishes as r -> 0, so the r = 0 branch is
    safely zeroed.
    """
    alpha, beta = params.alpha, params.beta

    def f(x1, x2):
        px = np.pi * x1
        py = np.pi * x2
        sx, cx = np.sin(px), np.cos(px)
        sy, cy = np.sin(py), np.cos(py)
        u = sx * sy
        g1 = np.pi * cx * sy
        g2 = np.pi * sx * cy
        r2 = g1 * g1 + g2 * g2
        r = np.sqrt(r2)
        lap = -2.0 * np.pi ** 2 * u
        quad = np.pi ** 2 * (-u * r2 + 2.0 * cx * cy * g1 * g2)
        psi = psi1(r, params)
        if beta == 0.0:
            return -psi * lap
        s = 1.0 + (beta * r) ** alpha
        safe_r = np.where(r > 0.0, r, 1.0)
        dpsi_over_r = np.where(
            r > 0.0,
            -beta ** alpha * safe_r ** (alpha - 2.0) * psi / s,
            0.0)
        return -(psi * lap + dpsi_over_r * quad)

    return f


def mms_cycle(n: int, params: ModelParams, eps_newton: float = 1.0e-7,
              max_newton: int = 50):
    """Solve one ladder cycle; returns (mesh, error, newton_iters, result)."""
    mesh = build_unit_square(n)
    dirichlet = dirichlet_map(mesh, {tag: 0.0 for tag in _SIDE_TAGS})
    cons = ConstraintSet(mesh, dirichlet)
    problem = MechanicsProblem(mesh=mesh, params=params, constraints=cons,
                               source=mms_source(params),
                               eps_newton=eps_newton, max_newton=max_newton)
    result = solve_mechanics(problem)
    err = l2_error(mesh, result.field.values, mms_exact, rule=GAUSS3)
    return mesh, err, result.newton_iters, result


def convergence_table(errors, dofs=None):
    """Observed convergence rates for an error ladder.

    rate_k = d * ln(e_{k-1}/e_k) / ln(N_k/N_{k-1}) with d = 2 when DOF
    counts N are given; without them each cycle is assumed to halve the
    resolution, reducing the formula to log2(e_{k-1}/e_k). The first
    rate is reported as 0.0. A zero error yields an infinity marker.
    """
    errors = list(errors)
    rates = [0.0]
    for k in range(1, len(errors)):
        if errors[k] == 0.0:
            rates.append(math.inf)
            continue
        ratio = errors[k - 1] / errors[k]
        if dofs is None:
            rates.append(math.log2(ratio))
        else:
            rates.append(2.0 * math.log(ratio) / math.log(dofs[k] / dofs[k - 1]))
    return rates


def mms_ladder(cycles: int, params: ModelParams, eps_newton: float = 1.0e-7,
               max_newton: int = 50):
    """Run the ladder; returns dict with dofs, hs, errors, rates, newton."""
    dofs, hs, errors, newton = [], [], [], []
    for k in range(1, cycles + 1):
        mesh, err, iters, _ = mms_cycle(k, params, eps_newton, max_newton)
        dofs.append(mesh.n_nodes)
        hs.append(0.5 ** (k + 1))
        errors.append(err)
        newton.append(iters)
    return {"dofs": dofs, "hs": hs, "errors": errors,
            "rates": convergence_table(errors, dofs), "newton": newton}


def _run_ex1(cfg: Config, outdir: str):
    cycles = cfg.n_global
    base = ModelParams(mu=cfg.mu, alpha=cfg.alpha, beta=cfg.beta, Gc=cfg.Gc)
    runs = {
        "lefm": mms_ladder(cycles, replace(base, beta=0.0),
                           cfg.eps_phi, cfg.max_newton),
        "nlsl": mms_ladder(cycles, base, cfg.eps_phi, cfg.max_newton),
    }
    for label, data in runs.items():
        write_convergence_csv(data["dofs"], data["hs"], data["errors"],
                              data["rates"],
                              os.path.join(outdir, "mms_%s.csv" % label))
    convergence_figure(runs["lefm"]["hs"],
                       {k: v["errors"] for k, v in runs.items()},
                       os.path.join(outdir, "convergence.png"))
    return runs


# ----------------------------------------------------------------- ex2

_PROBE_NAMES = ("Phi", "pf", "sigma13", "sigma23", "eps13", "eps23", "W")


def _probe_evaluator(params: ModelParams, kappa: float, with_pf: bool):
    def evaluator(x, at):
        phi_val, phi_grad = at["Phi"]
        pf_val = at["pf"][0] if with_pf else 1.0
        sigma, eps = recover_stress_strain(phi_grad, pf_val, params, kappa)
        w = bulk_energy_density(phi_grad, params)
        return (x[0], x[1], phi_val, pf_val,
                sigma[..., 0], sigma[..., 1], eps[..., 0], eps[..., 1], w)

    return evaluator


def probe_centerline(mesh, params, kappa, phi: ScalarField, pf: ScalarField | None,
                     p0, p1, n: int = 256):
    """Sample recovered fields along a segment; returns (n, 10) rows."""
    fields = {"Phi": phi.values}
    if pf is not None:
        fields["pf"] = pf.values
    return sample_line(mesh, fields, p0, p1, n,
                       evaluator=_probe_evaluator(params, kappa, pf is not None))


def ex2_mesh(cfg: Config):
    mesh = build_unit_square(cfg.n_global)
    if cfg.refine_box is not None:
        mesh = refine_box(mesh, cfg.refine_box[:4], cfg.refine_box[4])
    slit = SlitSpec((cfg.slit[0], cfg.slit[1]), (cfg.slit[2], cfg.slit[3]))
    return carve_slit(mesh, slit)


def ex2_solve(mesh, params: ModelParams, c: float, eps_newton: float = 1.0e-7,
              max_newton: int = 50):
    dirichlet = dirichlet_map(mesh, {BoundaryTag.RIGHT_TOP_HALF: c,
                                     BoundaryTag.RIGHT_BOTTOM_HALF: -c})
    cons = ConstraintSet(mesh, dirichlet)
    problem = MechanicsProblem(mesh=mesh, params=params, constraints=cons,
                               eps_newton=eps_newton, max_newton=max_newton)
    return solve_mechanics(problem)


def _run_ex2(cfg: Config, outdir: str):
    mesh = ex2_mesh(cfg)
    betas = [cfg.beta] if cfg.beta is not None else [1.0, 2.0, 5.0, 10.0, 25.0]
    p0, p1 = (0.0, 0.5), (cfg.slit[0], cfg.slit[1])
    curves_sig, curves_eps = {}, {}
    for beta in betas:
        params = ModelParams(mu=cfg.mu, alpha=cfg.alpha, beta=beta, Gc=cfg.Gc)
        result = ex2_solve(mesh, params, cfg.c, cfg.eps_phi, cfg.max_newton)
        rows = probe_centerline(mesh, params, 0.0, result.field, None, p0, p1)
        label = "beta_%g" % beta
        write_probe_csv(rows, _PROBE_NAMES,
                        os.path.join(outdir, "probe_%s.csv" % label))
        write_vtk(mesh, {"Phi": result.field.values},
                  os.path.join(outdir, "field_%s.vtk" % label))
        curves_sig[label] = (rows[:, 0], rows[:, 6])
        curves_eps[label] = (rows[:, 0], rows[:, 8])
    centerline_figure(curves_sig, "sigma23", os.path.join(outdir, "sigma23.png"))
    centerline_figure(curves_eps, "eps23", os.path.join(outdir, "eps23.png"))
    return curves_eps


# ----------------------------------------------------------------- ex3 / ex4

def _banded_mesh(cfg: Config):
    mesh = build_unit_square(cfg.n_global)
    if cfg.refine_box is not None:
        mesh = refine_box(mesh, cfg.refine_box[:4], cfg.refine_box[4])
    slit = SlitSpec((cfg.slit[0], cfg.slit[1]), (cfg.slit[2], cfg.slit[3]))
    return mesh, slit


def staggered_setup(cfg: Config, mesh, params: ModelParams, tag_values):
    h_min = mesh.h_min
    xi = cfg.xi_scale * h_min
    kappa = cfg.kappa_scale * h_min

    def dirichlet_fn(time):
        return dirichlet_map(mesh, {tag: value * time
                                    for tag, value in tag_values.items()})

    return StaggeredSetup(
        mesh=mesh, params=params, kappa=kappa, xi=xi,
        dirichlet_fn=dirichlet_fn, gamma=cfg.gamma,
        l_phi=cfg.L_phi, l_pf=cfg.L_pf, eps_phi=cfg.eps_phi,
        eps_pf=cfg.eps_pf, tol_outer=cfg.tol_outer,
        max_newton=cfg.max_newton, max_staggered=cfg.max_staggered)


def _run_ex3(cfg: Config, outdir: str):
    mesh, slit = _banded_mesh(cfg)
    alphas = [cfg.alpha] if cfg.alpha is not None else [1.5, 1.0, 0.5, 0.25, 0.1]
    p0, p1 = (0.0, 0.5), (cfg.slit[0], cfg.slit[1])
    loads = {BoundaryTag.RIGHT_TOP_HALF: cfg.c,
             BoundaryTag.RIGHT_BOTTOM_HALF: -cfg.c}
    curves_sig, curves_eps = {}, {}
    for alpha in alphas:
        params = ModelParams(mu=cfg.mu, alpha=alpha, beta=cfg.beta, Gc=cfg.Gc)
        setup = staggered_setup(cfg, mesh, params, loads)
        pf0 = band_initial_pf(mesh, slit, setup.xi)
        result = run_quasistatic(setup, dt=cfg.dt, n_steps=cfg.n_steps, pf0=pf0)
        state = result.final_state
        rows = probe_centerline(mesh, params, setup.kappa, state.phi, state.pf,
                                p0, p1)
        label = "alpha_%g" % alpha
        write_probe_csv(rows, _PROBE_NAMES,
                        os.path.join(outdir, "probe_%s.csv" % label))
        write_vtk(mesh, {"Phi": state.phi.values, "pf": state.pf.values},
                  os.path.join(outdir, "field_%s.vtk" % label))
        curves_sig[label] = (rows[:, 0], rows[:, 6])
        curves_eps[label] = (rows[:, 0], rows[:, 8])
    field_figure(mesh, band_initial_pf(mesh, slit, cfg.xi_scale * mesh.h_min).values,
                 os.path.join(outdir, "pf_initial.png"), label="pf",
                 vmin=0.0, vmax=1.0)
    centerline_figure(curves_sig, "sigma23", os.path.join(outdir, "sigma23.png"))
    centerline_figure(curves_eps, "eps23", os.path.join(outdir, "eps23.png"))
    return curves_eps


def ex4_case_params(cfg: Config, alpha: float, beta: float) -> ModelParams:
    return ModelParams(mu=cfg.mu, alpha=alpha, beta=beta, Gc=cfg.Gc)


def ex4_run_case(cfg: Config, mesh, slit, params: ModelParams,
                 stop_tip: float | None = None, on_step=None):
    """One quasi-static crack-growth run on the prepared banded mesh."""
    loads = {BoundaryTag.TOP_LEFT_HALF: cfg.c,
             BoundaryTag.TOP_RIGHT_HALF: -cfg.c}
    setup = staggered_setup(cfg, mesh, params, loads)
    pf0 = band_initial_pf(mesh, slit, setup.xi)
    path = ((cfg.slit[0], cfg.slit[1]), (cfg.slit[0], 0.0))
    stop_when = None
    if stop_tip is not None:
        def stop_when(result):
            return result.tip and result.tip[-1] >= stop_tip
    return run_quasistatic(setup, dt=cfg.dt, n_steps=cfg.n_steps, pf0=pf0,
                           path=path, on_step=on_step, stop_when=stop_when)


def initiation_step(result, threshold: float = 0.0):
    """First 1-based step whose tip coordinate exceeds threshold; None if never."""
    for k, tip in enumerate(result.tip):
        if tip > threshold:
            return k + 1
    return None


def ex4_sweep(cfg: Config, cases=EX4_CASES, stop_tip: float | None = 0.2,
              on_case=None):
    """Run the nonlinearity cases; returns {label: RunResult}."""
    mesh, slit = _banded_mesh(cfg)
    results = {}
    for label, alpha, beta in cases:
        params = ex4_case_params(cfg, alpha, beta)
        results[label] = ex4_run_case(cfg, mesh, slit, params, stop_tip=stop_tip)
        if on_case is not None:
            on_case(label, mesh, results[label])
    return results


def _run_ex4(cfg: Config, outdir: str):
    if cfg.alpha is not None and cfg.beta is not None:
        cases = (("custom", cfg.alpha, cfg.beta),)
    else:
        cases = EX4_CASES

    def on_case(label, mesh, result):
        case_dir = os.path.join(outdir, "case_%s" % label)
        write_series_csv(result, os.path.join(case_dir, "series.csv"))
        state = result.final_state
        write_vtk(mesh, {"Phi": state.phi.values, "pf": state.pf.values},
                  os.path.join(case_dir, "field_final.vtk"))
        field_figure(mesh, state.pf.values,
                     os.path.join(case_dir, "pf_final.png"), label="pf",
                     vmin=0.0, vmax=1.0)

    results = ex4_sweep(cfg, cases=cases, on_case=on_case)
    series_figure(results, os.path.join(outdir, "series.png"))
    return results


_RUNNERS = {"ex1": _run_ex1, "ex2": _run_ex2, "ex3": _run_ex3, "ex4": _run_ex4}


def run_example(cfg: Config, outdir: str):
    """Resolve the preset and execute the example into outdir."""
    cfg = apply_preset(cfg)
    if cfg.example not in _RUNNERS:
        raise ConfigError("unknown example %r" % cfg.example)
    os.makedirs(outdir, exist_ok=True)
    write_text(os.path.join(outdir, "config_resolved.txt"),
               resolved_echo(cfg, extras=("linear solve relative tolerance 1e-12",)))
    return _RUNNERS[cfg.example](cfg, outdir)
