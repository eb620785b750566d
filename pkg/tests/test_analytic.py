import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_ss.analytic import build, negative_root, vhat_fenchel_closed
from impulse_ss.errors import DomainError, InvalidSpecError
from impulse_ss.model import ProblemSpec

from conftest import random_specs

GRID = np.geomspace(1e-2, 1e4, 60)


def _mp_constants(spec):
    mp.mp.dps = 40
    rho, nu, sig, g = (mp.mpf(repr(v)) for v in (spec.rho, spec.nu, spec.sigma, spec.gamma))
    a = mp.mpf(1) / 2 - nu / sig**2
    m = a - mp.sqrt(a * a + 2 * rho / sig**2)
    c = 1 / (rho - nu * g + g * (1 - g) * sig**2 / 2)
    return float(m), float(c)


def test_worked_constants_match_high_precision(worked, prim):
    m, c = _mp_constants(worked)
    assert prim.m == pytest.approx(m, rel=1e-14)
    assert prim.c_gamma == pytest.approx(c, rel=1e-14)
    assert prim.m == pytest.approx(-0.65693, abs=5e-6)
    assert prim.c_gamma == pytest.approx(8.14249, abs=5e-6)


def test_build_refuses_invalid_spec(worked):
    with pytest.raises(InvalidSpecError):
        build(worked.replace(rho=0.01, nu=0.05))


def test_unit_root_case():
    # nu = 0 and sigma^2 = rho leaves rho (1 - m (m - 1) / 2) = 0, root m = -1
    rho = 0.08
    m = negative_root(rho, 0.0, math.sqrt(rho))
    assert m == pytest.approx(-1.0, rel=1e-14)
    assert abs(rho - 0.5 * rho * m * (m - 1)) < 1e-15


def test_small_sigma_root_is_accurate():
    spec = ProblemSpec(0.08, -0.07, 0.01, 0.5, 1.0, 10.0)
    m, _ = _mp_constants(spec)
    assert negative_root(spec.rho, spec.nu, spec.sigma) == pytest.approx(m, rel=1e-13)


def test_quadratic_residual_random_specs():
    for spec in random_specs(200, seed=3):
        p = build(spec)
        m = p.m
        terms = (spec.rho, spec.nu * m, 0.5 * spec.sigma**2 * m * (m - 1))
        res = spec.rho - spec.nu * m - 0.5 * spec.sigma**2 * m * (m - 1)
        assert m < 0
        assert abs(res) <= 1e-12 * max(abs(t) for t in terms)
        assert p.c_gamma > 0


def test_phi_values(prim):
    assert prim.phi(1.0) == 1.0
    assert prim.phi(56.9930) == pytest.approx(56.9930**prim.m, rel=1e-15)
    assert all(prim.phi_d1(x) < 0 for x in (0.1, 1, 10, 100))
    assert np.all(prim.phi_d2(GRID) > 0)


def test_vhat_values(prim):
    assert prim.vhat(1e-12) == pytest.approx(2 * prim.c_gamma * 1e-6, rel=1e-12)
    assert prim.vhat(56.9930) == pytest.approx(2 * 8.14249 * math.sqrt(56.9930), rel=1e-5)
    d1 = prim.vhat_d1(GRID)
    assert np.all(np.diff(d1) < 0)
    assert np.all(prim.vhat_d2(GRID) < 0)


@pytest.mark.parametrize("fn", ["phi", "phi_d1", "phi_d2", "vhat", "vhat_d1", "vhat_d2"])
@pytest.mark.parametrize("x", [0.0, -1.0, math.nan])
def test_domain_errors(prim, fn, x):
    with pytest.raises(DomainError):
        getattr(prim, fn)(x)


def test_domain_error_in_array(prim):
    with pytest.raises(DomainError):
        prim.phi(np.array([1.0, 0.0]))


def test_derivatives_match_central_differences():
    for spec in random_specs(10, seed=5):
        p = build(spec)
        for f, d in (("phi", "phi_d1"), ("vhat", "vhat_d1"), ("phi_d1", "phi_d2"), ("vhat_d1", "vhat_d2")):
            h = 1e-6 * GRID
            fd = (getattr(p, f)(GRID + h) - getattr(p, f)(GRID - h)) / (2 * h)
            exact = getattr(p, d)(GRID)
            assert np.max(np.abs(fd - exact) / np.abs(exact)) < 1e-6


def test_generator_annihilates_phi_and_sources_vhat():
    for spec in random_specs(30, seed=6):
        p = build(spec)
        x = GRID
        lphi = p.generator(x, p.phi(x), p.phi_d1(x), p.phi_d2(x))
        scale = spec.rho * p.phi(x)
        assert np.max(np.abs(lphi) / scale) < 1e-10
        lv = p.generator(x, p.vhat(x), p.vhat_d1(x), p.vhat_d2(x))
        f = x**spec.gamma / spec.gamma
        assert np.max(np.abs(lv - f) / f) < 1e-10


def _brute_fenchel(p, alpha):
    xs = np.geomspace(1e-10, 1e12, 400_001)
    vals = p.vhat(xs) - alpha * xs
    i = int(np.argmax(vals))
    fine = np.linspace(xs[i - 1], xs[i + 1], 20_001)
    return float(np.max(p.vhat(fine) - alpha * fine))


def test_fenchel_worked_value(prim):
    assert prim.vhat_fenchel(1.0) == pytest.approx(prim.c_gamma**2, rel=1e-14)
    assert prim.vhat_fenchel(1.0) == pytest.approx(_brute_fenchel(prim, 1.0), rel=1e-8)


def test_fenchel_decreasing_to_zero(prim):
    vals = [prim.vhat_fenchel(a) for a in np.geomspace(0.1, 1e6, 50)]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-3


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("x", [0.5, 5.0, 50.0])
def test_fenchel_dominates_definition(prim, alpha, x):
    assert prim.vhat_fenchel(alpha) >= prim.vhat(x) - alpha * x


def test_fenchel_first_order_condition():
    for spec in random_specs(20, seed=8):
        p = build(spec)
        for alpha in (0.3, 1.0, 4.0):
            x_star = p.vhat_fenchel_argmax(alpha)
            assert p.vhat_d1(x_star) == pytest.approx(alpha, rel=1e-10)
            assert p.vhat_fenchel(alpha) == pytest.approx(p.vhat(x_star) - alpha * x_star, rel=1e-10)


def test_printed_exponent_disagrees_for_c0_not_one(prim):
    # the alternative exponent +g/(1-g) on c0 does not survive a brute-force check at c0 = 2
    g, cg = 0.5, prim.c_gamma
    brute = _brute_fenchel(prim, 2.0)
    derived = vhat_fenchel_closed(cg, g, 2.0)
    printed = cg ** (1 / (1 - g)) * 2.0 ** (g / (1 - g)) * (1 / g - 1)
    assert derived == pytest.approx(brute, rel=1e-8)
    assert abs(printed - brute) > 1.0


def test_fenchel_domain(prim):
    with pytest.raises(DomainError):
        prim.vhat_fenchel(0.0)


@settings(max_examples=100, deadline=None)
@given(
    rho=st.floats(0.01, 0.3),
    nu_frac=st.floats(-2.0, 0.99),
    sigma=st.floats(0.02, 1.0),
    gamma=st.floats(0.05, 0.95),
)
def test_primitives_invariants(rho, nu_frac, sigma, gamma):
    spec = ProblemSpec(rho, nu_frac * rho, sigma, gamma, 1.0, 1.0)
    p = build(spec)
    assert p.m < 0
    assert p.c_gamma == pytest.approx(1 / (rho - spec.nu * gamma + 0.5 * gamma * (1 - gamma) * sigma**2))
    m = p.m
    res = rho - spec.nu * m - 0.5 * sigma**2 * m * (m - 1)
    assert abs(res) <= 1e-12 * max(rho, abs(spec.nu * m), 0.5 * sigma**2 * m * (m - 1))
