"""Strain-limiting constitutive relations for anti-plane shear.

The out-of-plane stress field is described through a scalar stress
potential ``Phi`` whose gradient carries the stress components
(sigma_13, sigma_23) = (dPhi/dy, -dPhi/dx).  The modulus function

    psi1(r) = 1 / (2 mu (1 + beta^alpha r^alpha)^(1/alpha)),   r = |grad Phi|,

maps stress magnitude to strain per unit stress: the linearised strain
is eps = psi1(r) * (Phi_y, -Phi_x).  For beta = 0 the classical linear
relation eps = sigma / (2 mu) is recovered; for beta > 0 the strain
magnitude is bounded by 1 / (2 mu beta) no matter how large the stress
grows, which is what keeps crack-tip strains finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this gradient magnitude the anisotropic part of the tangent is
# dropped; it scales like r^alpha and for alpha < 2 the r^(alpha-2)
# factor must never be formed at r ~ 0.
_R_FLOOR = 1.0e-14


@dataclass(frozen=True)
class ModelParams:
    """Material and fracture parameters.

    Attributes
    ----------
    mu : float
        Shear modulus, must be positive.
    alpha : float
        Strain-limiting exponent, positive.
    beta : float
        Strain-limiting parameter, non-negative; ``beta = 0`` is the
        linear (LEFM) model.
    Gc : float
        Critical energy release rate.
    """

    mu: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    Gc: float = 1.0

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.Gc <= 0.0:
            raise ValueError(f"Gc must be positive, got {self.Gc}")


def psi1(r, params: ModelParams):
    """Scalar modulus function 1 / (2 mu (1 + beta^a r^a)^(1/a)).

    Parameters
    ----------
    r : array_like
        Gradient magnitude(s), non-negative.
    params : ModelParams

    Returns
    -------
    ndarray or float
        psi1 evaluated elementwise; equals 1/(2 mu) when beta = 0.
    """
    r = np.asarray(r, dtype=float)
    if params.beta == 0.0:
        return np.full_like(r, 1.0 / (2.0 * params.mu))
    a = params.alpha
    s = 1.0 + (params.beta * r) ** a
    # s^(1/a) > beta r holds exactly in real arithmetic; the clamp only
    # repairs last-ulp rounding so that r psi1 <= 1/(2 mu beta) is
    # never violated in floating point either.
    root = np.maximum(s ** (1.0 / a), params.beta * r)
    return 1.0 / (2.0 * params.mu * root)


def flux(g, params: ModelParams):
    """Constitutive flux psi1(|g|) g for gradient(s) g.

    Parameters
    ----------
    g : ndarray, shape (..., 2)
    params : ModelParams

    Returns
    -------
    ndarray, shape (..., 2)
    """
    g = np.asarray(g, dtype=float)
    r = np.linalg.norm(g, axis=-1)
    return psi1(r, params)[..., None] * g


def flux_tangent(g, params: ModelParams):
    """Derivative of ``flux`` with respect to the gradient.

    d flux / dg = psi1(r) I - beta^a r^(a-2) psi1(r) / (1 + beta^a r^a) g x g

    which is symmetric positive definite for any admissible state: the
    rank-one part subtracts at most psi1 * beta^a r^a / (1 + beta^a r^a)
    < psi1 along g.

    Parameters
    ----------
    g : ndarray, shape (..., 2)
    params : ModelParams

    Returns
    -------
    ndarray, shape (..., 2, 2)
    """
    g = np.asarray(g, dtype=float)
    r = np.linalg.norm(g, axis=-1)
    out = np.zeros(g.shape + (2,))
    p1 = psi1(r, params)
    out[..., 0, 0] = p1
    out[..., 1, 1] = p1
    if params.beta == 0.0:
        return out
    a = params.alpha
    safe = r > _R_FLOOR
    rs = np.where(safe, r, 1.0)
    coef = np.where(
        safe,
        params.beta ** a * rs ** (a - 2.0) * p1 / (1.0 + (params.beta * rs) ** a),
        0.0,
    )
    out -= coef[..., None, None] * (g[..., :, None] * g[..., None, :])
    return out


def degradation(pf, kappa):
    """Stiffness degradation g(pf) = (1 - kappa) pf^2 + kappa."""
    pf = np.asarray(pf, dtype=float)
    return (1.0 - kappa) * pf * pf + kappa


def bulk_energy_density(g, params: ModelParams):
    """Undegraded bulk density W(g) = |g|^2 psi1(|g|) = flux(g) . g."""
    g = np.asarray(g, dtype=float)
    r = np.linalg.norm(g, axis=-1)
    return r * r * psi1(r, params)


def recover_stress_strain(grad_phi, pf, params: ModelParams, kappa):
    """Stress and strain components from the potential gradient.

    The potential is defined so that equilibrium holds identically:
    sigma_13 = Phi_y and sigma_23 = -Phi_x, both degraded by g(pf).
    The strain follows from the strain-limiting relation,
    eps = g(pf) psi1(|grad Phi|) (Phi_y, -Phi_x), so |eps| stays below
    1 / (2 mu beta) for beta > 0.

    Parameters
    ----------
    grad_phi : ndarray, shape (..., 2)
        Components (Phi_x, Phi_y).
    pf : array_like
        Phase-field value(s) at the same points.
    params : ModelParams
    kappa : float
        Residual stiffness in the degradation function.

    Returns
    -------
    sigma : ndarray, shape (..., 2)
        (sigma_13, sigma_23).
    eps : ndarray, shape (..., 2)
        (eps_13, eps_23).
    """
    grad_phi = np.asarray(grad_phi, dtype=float)
    gdeg = degradation(pf, kappa)
    rot = np.stack([grad_phi[..., 1], -grad_phi[..., 0]], axis=-1)
    sigma = gdeg[..., None] * rot
    r = np.linalg.norm(grad_phi, axis=-1)
    eps = (gdeg * psi1(r, params))[..., None] * rot
    return sigma, eps


def invert_alpha1(eps, params: ModelParams):
    """Stress from strain for the alpha = 1 model: sigma = eps / (1 - beta |eps|).

    Only valid while beta |eps| < 1; the strain-limit bound makes the
    denominator positive for states produced by the forward relation.

    Parameters
    ----------
    eps : ndarray, shape (..., 2)
    params : ModelParams with ``alpha == 1``.

    Returns
    -------
    ndarray, shape (..., 2)
    """
    if params.alpha != 1.0:
        raise ValueError("closed-form inversion requires alpha = 1")
    eps = np.asarray(eps, dtype=float)
    e = np.linalg.norm(eps, axis=-1)
    denom = 1.0 - params.beta * e
    if np.any(denom <= 0.0):
        raise ValueError("strain magnitude at or beyond the limit 1/beta")
    return eps / denom[..., None]


def strain_energy_xi(eps, params: ModelParams):
    """Strain energy Xi(|eps|) = (1/beta) (log(1 - beta |eps|) + beta |eps|).

    Implemented in this printed form even though it is non-positive for
    small strains; its gradient relates to the inverted stress by
    d Xi / d eps = -beta * sigma, so tests check that identity rather
    than a sign convention.  Raises for beta |eps| >= 1 where the model
    leaves its admissible range.
    """
    if params.alpha != 1.0:
        raise ValueError("closed-form energy requires alpha = 1")
    if params.beta <= 0.0:
        raise ValueError("energy form requires beta > 0")
    eps = np.asarray(eps, dtype=float)
    e = np.linalg.norm(eps, axis=-1)
    arg = 1.0 - params.beta * e
    if np.any(arg <= 0.0):
        raise ValueError("strain magnitude at or beyond the limit 1/beta")
    return (np.log(arg) + params.beta * e) / params.beta
