import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quench.grid import Grid, GridFunction, inner_product
from quench.model import ProfileParams, hermite4_shape, v_profile
from quench.splitting import (G_map, SplittingFailure, extract_params, fluctuation, g_jacobian,
                              orthogonality_residuals, verify_ic_bounds)

G = Grid(30.0, 1201)
Y = G.nodes


def V(a, b, p=-1.0):
    return GridFunction(G, v_profile(ProfileParams(a, b), p, Y), even=True)


def test_G_vanishes_on_manifold():
    assert np.allclose(G_map((0.5, 0.05), V(0.5, 0.05), -1.0), 0.0, atol=1e-15)


def test_G_orthogonal_perturbation():
    v = GridFunction(G, V(0.5, 0.02).values + 1e-3 * hermite4_shape(Y), even=True)
    assert np.allclose(G_map((0.5, 0.02), v, -1.0), 0.0, atol=1e-14)


def test_G_first_component_quadrature():
    a, eps = 0.5, 1e-3
    phi0 = (a / (2 * math.pi)) ** 0.25 * np.exp(-a * Y * Y / 4)
    bump = eps * np.exp(a * Y * Y / 4) * phi0
    v = GridFunction(G, V(a, 0.0).values + bump, even=True)
    w0 = GridFunction(G, np.exp(-a * Y * Y / 2))
    assert G_map((a, 0.0), v, -1.0)[0] == pytest.approx(-inner_product(GridFunction(G, bump), w0),
                                                        rel=1e-12)


@pytest.mark.parametrize("a", np.linspace(0.3, 0.9, 5))
@pytest.mark.parametrize("b", np.linspace(0.01, 0.1, 5))
def test_jacobian_matches_fd(a, b):
    v = GridFunction(G, V(a, b).values * (1 + 0.01 * np.exp(-Y * Y / 8)), even=True)
    J = g_jacobian((a, b), v, -1.0).total
    eps = 1e-6
    fd = np.column_stack([(G_map((a + eps * e0, b + eps * e1), v, -1.0)
                           - G_map((a - eps * e0, b - eps * e1), v, -1.0)) / (2 * eps)
                          for e0, e1 in ((1, 0), (0, 1))])
    assert np.max(np.abs(fd - J)) / np.max(np.abs(J)) < 1e-6


def test_A2_vanishes_on_manifold():
    assert np.array_equal(g_jacobian((0.5, 0.05), V(0.5, 0.05), -1.0).A2, np.zeros((2, 2)))


def test_A1_factorization_error_is_order_b():
    errs = []
    bs = (0.004, 0.008, 0.016)
    for b in bs:
        jac = g_jacobian((0.5, b), V(0.5, b), -1.0)
        errs.append(np.linalg.norm(jac.A1 - jac.G1 @ jac.G2))
    slope = np.polyfit(np.log(bs), np.log(errs), 1)[0]
    assert 0.8 < slope < 1.2
    jac0 = g_jacobian((0.5, 0.0), V(0.5, 0.0), -1.0)
    assert np.allclose(jac0.A1, jac0.G1 @ jac0.G2, rtol=1e-12, atol=1e-14)
    assert all(np.isfinite(list(jac0.condition.values())))


@pytest.mark.parametrize("p", [-0.5, -1.0, -3.0])
def test_fixed_points_on_grid(p):
    worst = 0.0
    for a in np.linspace(0.25, 1.0, 5):
        for b in np.linspace(0.0, 0.1, 5):
            r = extract_params(V(a, b, p), (0.5, 0.05), p)
            worst = max(worst, abs(r.a - a), abs(r.b - b))
            assert max(abs(r.residual_0), abs(r.residual_2)) <= 1e-10
            assert np.max(np.abs(r.xi.values)) < 1e-12
    assert worst < 1e-9


def test_orthogonal_perturbation_keeps_parameters():
    d = 1e-3 * hermite4_shape(Y)
    v = GridFunction(G, V(0.5, 0.02).values + d, even=True)
    r = extract_params(v, (0.45, 0.03), -1.0)
    assert abs(r.a - 0.5) < 1e-8 and abs(r.b - 0.02) < 1e-8
    assert np.allclose(r.xi.values, np.exp(-0.5 * Y * Y / 4) * d, atol=1e-10)


def test_uniqueness_and_inverse_jacobian_bound(rng):
    star = (0.5, 0.02)
    delta = 1e-4
    v = GridFunction(G, V(*star).values + delta * np.exp(-Y * Y / 8), even=True)
    ref = extract_params(v, star, -1.0)
    for _ in range(100):
        ang, rad = rng.uniform(0, 2 * math.pi), 0.05 * math.sqrt(rng.uniform())
        r = extract_params(v, (star[0] + rad * math.cos(ang), max(0.0, star[1] + rad * math.sin(ang))),
                           -1.0)
        assert abs(r.a - ref.a) < 1e-8 and abs(r.b - ref.b) < 1e-8
    J = g_jacobian(star, V(*star), -1.0).total
    # |g(v) - mu| <~ ||J^{-1}|| * |G(mu, v)|
    Gv = G_map(star, v, -1.0)
    bound = np.linalg.norm(np.linalg.inv(J), 2) * np.linalg.norm(Gv)
    assert math.hypot(ref.a - star[0], ref.b - star[1]) <= 2 * bound
    assert math.hypot(ref.a - star[0], ref.b - star[1]) <= 50 * delta


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 0.9), st.floats(0.0, 0.1), st.floats(-1e-3, 1e-3))
def test_extraction_is_orthogonal(a, b, eps):
    v = GridFunction(G, V(a, b).values * (1 + eps * np.cos(Y) * np.exp(-Y * Y / 16)), even=True)
    r = extract_params(v, (a, b), -1.0)
    scale = max(1.0, float(np.sqrt(inner_product(r.xi, r.xi))))
    if r.b > 0:
        assert max(abs(r.residual_0), abs(r.residual_2)) <= 1e-10 * scale
    assert r.b >= 0 and 0 < r.a < 2
    assert np.array_equal(r.xi.values, r.xi.values[::-1])


def test_b_clamped_at_zero():
    # lowering the far field below V_{a,0} pushes the root to b < 0; the face b = 0 is kept
    v = GridFunction(G, V(0.5, 0.0).values * (1 - 1e-3 * Y * Y / (1 + Y * Y)), even=True)
    r = extract_params(v, (0.5, 0.01), -1.0)
    assert r.b == 0.0
    assert abs(r.residual_0) < 1e-10


def test_fluctuation_definition():
    v = V(0.5, 0.03)
    xi = fluctuation(GridFunction(G, v.values + 1e-3, even=True), 0.5, 0.03, -1.0)
    assert np.allclose(xi.values, 1e-3 * np.exp(-0.5 * Y * Y / 4), atol=1e-15)


def test_failure_outside_neighbourhood():
    far = GridFunction(G, 5.0 + np.cos(Y) ** 2, even=True)
    with pytest.raises(SplittingFailure):
        extract_params(far, (0.5, 0.05), -1.0, max_iter=3)


def test_short_domain_breaks_orthogonality_tolerance():
    g = Grid(2.0, 81)
    y = g.nodes
    v = GridFunction(g, v_profile(ProfileParams(0.5, 0.02), -1.0, y) + 1e-2 * np.cos(y), even=True)
    r = extract_params(v, (0.5, 0.02), -1.0)
    phi_res = orthogonality_residuals(r.xi, r.a)
    assert max(map(abs, phi_res)) < 1e-10  # roots exist, but on a truncated quadrature


def test_ic_bounds_report():
    from quench.model import InitialDataSpec, generate_initial_data
    spec = InitialDataSpec(0.05, 0.5, 0.1, "hermite4-mode")
    u0 = generate_initial_data(spec, G, -1.0)
    mu0 = (0.5, 0.05)
    rep = verify_ic_bounds(u0, mu0, -1.0, 0.05, 0.1)
    for key in ("param_shift", "weighted_n3", "weighted_n2"):
        assert rep[key][2] <= 10
    zero = verify_ic_bounds(V(*mu0), mu0, -1.0, 0.05, 0.0)
    assert all(zero[k][0] < 1e-12 for k in ("param_shift", "weighted_n3", "weighted_n2"))
