"""Constitutive relation tests: modulus function, tangent, energy forms."""

import numpy as np
import pytest

from limitfrac.constitutive import (
    ModelParams,
    bulk_energy_density,
    degradation,
    flux,
    flux_tangent,
    invert_alpha1,
    psi1,
    recover_stress_strain,
    strain_energy_xi,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(mu=0.0)
    with pytest.raises(ValueError):
        ModelParams(alpha=0.0)
    with pytest.raises(ValueError):
        ModelParams(beta=-0.1)
    with pytest.raises(ValueError):
        ModelParams(Gc=0.0)


def test_linear_limit():
    p = ModelParams(mu=3.0, alpha=1.0, beta=0.0)
    r = np.array([0.0, 1.0, 1.0e6])
    assert np.all(psi1(r, p) == 1.0 / 6.0)
    g = np.array([[2.0, -1.0]])
    np.testing.assert_allclose(flux(g, p), g / 6.0, rtol=1e-15)


def test_psi1_closed_form_spot_values():
    # alpha = 1: psi1 = 1 / (2 mu (1 + beta r))
    p = ModelParams(mu=0.5, alpha=1.0, beta=2.0)
    assert psi1(3.0, p) == pytest.approx(1.0 / (1.0 * (1.0 + 6.0)), rel=1e-15)
    # alpha = 2: psi1 = 1 / (2 mu sqrt(1 + (beta r)^2))
    p2 = ModelParams(mu=1.0, alpha=2.0, beta=1.0)
    assert psi1(1.0, p2) == pytest.approx(0.5 / np.sqrt(2.0), rel=1e-15)


def test_strain_limit_bound_randomized():
    """|eps| = r psi1(r) stays below 1/(2 mu beta) over a wide sweep."""
    rng = np.random.default_rng(20240811)
    violations = 0
    for _ in range(1000):
        p = ModelParams(
            mu=float(rng.uniform(0.01, 20.0)),
            alpha=float(rng.uniform(0.1, 2.0)),
            beta=float(rng.uniform(0.1, 25.0)),
        )
        # gradient magnitudes spanning fourteen decades, crack-tip territory
        r = 10.0 ** rng.uniform(-6.0, 8.0, 100)
        eps_mag = r * psi1(r, p)
        # the true inequality is strict; eps_mag and the bound round
        # independently (pow, divide, multiply), so allow their combined
        # fp noise, four ulps, before calling something a violation
        bound = (1.0 / (2.0 * p.mu * p.beta)) * (1.0 + 4.0 * np.finfo(float).eps)
        violations += int(np.sum(eps_mag > bound))
    assert violations == 0


def test_strain_monotone_in_beta():
    """At a fixed gradient the strain magnitude decreases as beta grows."""
    g = np.array([0.7, -1.3])
    betas = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0]
    for alpha in (0.25, 1.0, 1.7):
        mags = []
        for beta in betas:
            p = ModelParams(mu=1.0, alpha=alpha, beta=beta)
            _, eps = recover_stress_strain(g, 1.0, p, kappa=0.0)
            mags.append(float(np.linalg.norm(eps)))
        assert all(a > b for a, b in zip(mags, mags[1:]))


def _fd_tangent(g, p, h):
    out = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        out[:, j] = (flux(g + e, p) - flux(g - e, p)) / (2.0 * h)
    return out


def test_tangent_matches_finite_differences():
    rng = np.random.default_rng(7)
    n = 1000
    worst = 0.0
    for _ in range(n):
        alpha = float(rng.uniform(0.1, 2.0))
        beta = float(rng.uniform(0.1, 25.0))
        mu = float(rng.uniform(0.01, 20.0))
        r = 10.0 ** float(rng.uniform(-3.0, 2.0))
        theta = float(rng.uniform(0.0, 2.0 * np.pi))
        g = r * np.array([np.cos(theta), np.sin(theta)])
        p = ModelParams(mu=mu, alpha=alpha, beta=beta)
        # step must shrink with r: the anisotropic part varies on scale r
        h = 1.0e-4 * r
        fd = _fd_tangent(g, p, h)
        an = flux_tangent(g, p)
        err = np.linalg.norm(fd - an) / np.linalg.norm(an)
        worst = max(worst, err)
    assert worst <= 1.0e-5


def test_tangent_near_zero_gradient_small_alpha():
    # alpha = 0.1 close to r = 0: the r^(alpha-2) factor must never blow up.
    # With g along x the eigenvalues are known in closed form: psi1/s
    # longitudinally (s = 1 + (beta r)^alpha) and psi1 transversally.
    p = ModelParams(mu=1.0, alpha=0.1, beta=5.0)
    for r in (1.0e-13, 1.0e-10, 1.0e-6, 1.0e-3):
        g = np.array([r, 0.0])
        t = flux_tangent(g, p)
        assert np.all(np.isfinite(t))
        s = 1.0 + (p.beta * r) ** p.alpha
        assert t[0, 0] == pytest.approx(psi1(r, p) / s, rel=1e-12)
        assert t[1, 1] == pytest.approx(psi1(r, p), rel=1e-15)
        assert t[0, 1] == 0.0 and t[1, 0] == 0.0


def test_tangent_symmetric_positive_definite():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        p = ModelParams(
            mu=float(rng.uniform(0.01, 20.0)),
            alpha=float(rng.uniform(0.1, 2.0)),
            beta=float(rng.uniform(0.0, 25.0)),
        )
        g = rng.normal(scale=10.0, size=2)
        t = flux_tangent(g, p)
        assert abs(t[0, 1] - t[1, 0]) <= 1.0e-15 * max(1.0, abs(t[0, 1]))
        ev = np.linalg.eigvalsh(t)
        assert np.all(ev > 0.0)


def test_bulk_density_is_flux_dot_gradient():
    rng = np.random.default_rng(3)
    g = rng.normal(size=(200, 2)) * 10.0 ** rng.uniform(-3, 3, size=(200, 1))
    for beta in (0.0, 0.2, 5.0):
        p = ModelParams(mu=0.7, alpha=1.3, beta=beta)
        w = bulk_energy_density(g, p)
        dot = np.einsum("ij,ij->i", flux(g, p), g)
        np.testing.assert_allclose(w, dot, rtol=1e-14, atol=1e-300)
        assert np.all(w >= 0.0)


def test_bulk_density_saturates():
    # for large r, W -> r / (2 mu beta): unbounded but only linearly
    p = ModelParams(mu=2.0, alpha=1.0, beta=0.5)
    r = 1.0e8
    w = bulk_energy_density(np.array([r, 0.0]), p)
    assert w == pytest.approx(r / (2.0 * p.mu * p.beta), rel=1e-7)


def test_degradation_endpoints():
    kappa = 1.0e-8
    assert degradation(0.0, kappa) == kappa
    assert degradation(1.0, kappa) == 1.0
    vals = degradation(np.linspace(0, 1, 11), kappa)
    assert np.all(np.diff(vals) > 0.0)


def test_recover_stress_strain_rotation():
    # sigma = g(pf) (Phi_y, -Phi_x); eps aligned with sigma
    p = ModelParams(mu=1.0, alpha=1.0, beta=1.0)
    grad = np.array([3.0, 4.0])
    sigma, eps = recover_stress_strain(grad, 1.0, p, kappa=0.0)
    np.testing.assert_allclose(sigma, [4.0, -3.0], rtol=1e-15)
    np.testing.assert_allclose(eps, psi1(5.0, p) * sigma, rtol=1e-15)


def test_invert_alpha1_round_trip():
    rng = np.random.default_rng(11)
    p = ModelParams(mu=1.5, alpha=1.0, beta=2.0)
    sigma = rng.normal(size=(50, 2)) * 10.0 ** rng.uniform(-2, 4, size=(50, 1))
    r = np.linalg.norm(sigma, axis=-1)
    eps = psi1(r, p)[:, None] * sigma
    # the closed form inverts the normalized relation, so feed it 2 mu eps
    np.testing.assert_allclose(invert_alpha1(2.0 * p.mu * eps, p), sigma, rtol=1e-11)


def test_invert_alpha1_rejects_bad_input():
    p = ModelParams(mu=1.0, alpha=1.0, beta=2.0)
    with pytest.raises(ValueError):
        invert_alpha1(np.array([1.0, 0.0]), p)  # beta|eps| = 2 >= 1
    with pytest.raises(ValueError):
        invert_alpha1(np.array([0.1, 0.0]), ModelParams(alpha=2.0, beta=1.0))


def test_strain_energy_gradient_identity():
    """d Xi / d eps = -beta sigma for the alpha = 1 closed form."""
    p = ModelParams(mu=1.0, alpha=1.0, beta=3.0)
    eps = np.array([0.07, -0.11])  # |eps| = 0.1303 < 1/beta
    h = 1.0e-7
    grad = np.zeros(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        grad[j] = (strain_energy_xi(eps + e, p) - strain_energy_xi(eps - e, p)) / (2.0 * h)
    sigma = invert_alpha1(eps, p)
    np.testing.assert_allclose(grad, -p.beta * sigma, rtol=1e-6)


def test_strain_energy_domain_checks():
    with pytest.raises(ValueError):
        strain_energy_xi(np.array([0.5, 0.0]), ModelParams(alpha=1.0, beta=2.0))
    with pytest.raises(ValueError):
        strain_energy_xi(np.array([0.1, 0.0]), ModelParams(alpha=1.0, beta=0.0))
