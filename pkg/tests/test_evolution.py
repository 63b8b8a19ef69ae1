import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agebif.errors import NegativeDensity
from agebif.evolution import (evolve_coupled, evolve_linear, evolve_nonlinear,
                              evolve_with_source, linear_residual, resolution_indicator)
from agebif.grid import build_grid, principal_eigenpair


@pytest.fixture(scope="module")
def setup():
    sg, ag = build_grid(1.0, 32, 1.0, 64)
    return sg, ag, principal_eigenpair(sg)


def _cn_factor(k, da):
    return (1 - 0.5 * da * k) / (1 + 0.5 * da * k)


@pytest.mark.parametrize("c", [-2.0, 0.0, 5.0])
def test_constant_potential_is_geometric(setup, c):
    # phi1 is a discrete eigenvector, so each step multiplies by the CN factor
    sg, ag, eig = setup
    z = evolve_linear(sg, ag, c, eig.phi1)
    rho = _cn_factor(eig.lambda1 + c, ag.da)
    expected = np.outer(rho ** np.arange(ag.n_a + 1), eig.phi1)
    np.testing.assert_allclose(z, expected, rtol=1e-9, atol=1e-12)


def test_constant_potential_close_to_exponential(setup):
    sg, ag, eig = setup
    z = evolve_linear(sg, ag, 1.0, eig.phi1)
    exact = np.outer(np.exp(-(eig.lambda1 + 1.0) * ag.ages), eig.phi1)
    assert np.max(np.abs(z - exact)) < 2e-3


def test_constant_source_recursion(setup):
    sg, ag, eig = setup
    k, g0 = eig.lambda1 + 1.0, 3.0
    z = evolve_with_source(sg, ag, 1.0, np.zeros(sg.n_x), np.tile(g0 * eig.phi1, (ag.n_a + 1, 1)))
    p, q = 1 + 0.5 * ag.da * k, 1 - 0.5 * ag.da * k
    amp = [0.0]
    for _ in range(ag.n_a):
        amp.append((q * amp[-1] + ag.da * g0) / p)
    np.testing.assert_allclose(z, np.outer(amp, eig.phi1), rtol=1e-9, atol=1e-12)
    # approaches the steady amplitude g0 / k
    assert amp[-1] == pytest.approx(g0 / k, rel=1e-3)


def test_residual_at_roundoff(setup):
    sg, ag, eig = setup
    rng = np.random.default_rng(3)
    h = rng.uniform(-1, 4, size=(ag.n_a + 1, sg.n_x))
    g = rng.uniform(0, 2, size=h.shape)
    z = evolve_with_source(sg, ag, h, eig.phi1, g)
    assert linear_residual(sg, ag, h, z, g) < 1e-9


def test_semigroup(setup):
    sg, ag, eig = setup
    rng = np.random.default_rng(4)
    h = rng.uniform(0, 3, size=(ag.n_a + 1, sg.n_x))
    full = evolve_linear(sg, ag, h, eig.phi1)
    half_sg, half_ag = build_grid(1.0, 32, 0.5, 32)
    first = evolve_linear(half_sg, half_ag, h[:33], eig.phi1)
    second = evolve_linear(half_sg, half_ag, h[32:], first[-1])
    np.testing.assert_allclose(np.vstack([first, second[1:]]), full, rtol=1e-12, atol=1e-14)


def test_batched_columns_match_single(setup):
    sg, ag, eig = setup
    P = np.stack([eig.phi1, eig.phi1 ** 2, np.ones(sg.n_x)], axis=1)
    out = evolve_linear(sg, ag, 2.0, P)
    assert out.shape == (ag.n_a + 1, sg.n_x, 3)
    for j in range(3):
        np.testing.assert_allclose(out[:, :, j], evolve_linear(sg, ag, 2.0, P[:, j]))


def test_nonlinear_equals_linear_with_frozen_potential(setup):
    # the semi-implicit quadratic term makes the march linear in the
    # potential c u + w evaluated on the computed solution
    sg, ag, eig = setup
    w = np.full((ag.n_a + 1, sg.n_x), 0.5)
    u = evolve_nonlinear(sg, ag, 2.0, w, 5.0 * eig.phi1)
    assert linear_residual(sg, ag, 2.0 * u + w, u) < 1e-9
    np.testing.assert_allclose(evolve_linear(sg, ag, 2.0 * u + w, u[0]), u, rtol=1e-10,
                               atol=1e-13)


def test_nonlinear_with_zero_quadratic_is_linear(setup):
    sg, ag, eig = setup
    np.testing.assert_allclose(evolve_nonlinear(sg, ag, 0.0, 1.5, eig.phi1),
                               evolve_linear(sg, ag, 1.5, eig.phi1), rtol=1e-13)


def test_negative_density_raises(setup):
    sg, ag, eig = setup
    with pytest.raises(NegativeDensity):
        evolve_nonlinear(sg, ag, 1.0, 0.0, eig.phi1, source=-50.0)


def test_coupled_decouples_without_interaction(setup):
    sg, ag, eig = setup
    U, V = 3 * eig.phi1, 2 * eig.phi1 ** 2
    u, v = evolve_coupled(sg, ag, (1.0, 0.0, 2.0, 0.0), (-1, -1), U, V)
    # the coupled march has no positivity guard; compare like with like
    np.testing.assert_allclose(u, evolve_nonlinear(sg, ag, 1.0, 0.0, U, guard=False, check=False),
                               rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(v, evolve_nonlinear(sg, ag, 2.0, 0.0, V, guard=False,
                                                check=False),
                               rtol=1e-10, atol=1e-14)


def test_coupled_consistent_with_frozen_partner(setup):
    sg, ag, eig = setup
    U, V = 3 * eig.phi1, 2 * eig.phi1
    for signs in [(1, 1), (-1, -1), (-1, 1)]:
        u, v = evolve_coupled(sg, ag, (1.0, 0.7, 1.2, 0.4), signs, U, V)
        assert linear_residual(sg, ag, u - signs[0] * 0.7 * v, u) < 1e-9
        assert linear_residual(sg, ag, 1.2 * v - signs[1] * 0.4 * u, v) < 1e-9


def test_cooperation_raises_competition_lowers(setup):
    sg, ag, eig = setup
    U, V = 3 * eig.phi1, 2 * eig.phi1
    alone, _ = evolve_coupled(sg, ag, (1.0, 0.0, 1.0, 0.0), (1, 1), U, V)
    coop, _ = evolve_coupled(sg, ag, (1.0, 1.0, 1.0, 1.0), (1, 1), U, V)
    comp, _ = evolve_coupled(sg, ag, (1.0, 1.0, 1.0, 1.0), (-1, -1), U, V)
    assert np.all(coop >= alone - 1e-14) and np.all(comp <= alone + 1e-14)


def test_guard_keeps_positivity_on_stiff_potential(setup):
    sg, ag, eig = setup
    z = evolve_linear(sg, ag, 400.0, eig.phi1)
    assert z.min() >= 0.0
    raw = evolve_linear(sg, ag, 400.0, eig.phi1, guard=False)
    assert raw.min() < 0.0


def test_resolution_indicator(setup):
    _, ag, _ = setup
    assert resolution_indicator(ag, np.array([1.0, -64.0]), None) == pytest.approx(1.0)
    assert resolution_indicator(ag) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(-2.0, 6.0), st.integers(0, 10 ** 6))
def test_comparison_of_initial_data(a, b, c, seed):
    # Crank-Nicolson preserves order only while da / h^2 stays below about 1/2
    sg, ag = build_grid(1.0, 7, 1.0, 128)
    rng = np.random.default_rng(seed)
    low = rng.uniform(0, 1, sg.n_x) * a
    high = low + rng.uniform(0, 1, sg.n_x) * b
    h = c + rng.uniform(0, 1, (ag.n_a + 1, sg.n_x))
    zl, zh = evolve_linear(sg, ag, h, low), evolve_linear(sg, ag, h, high)
    assert np.all(zl >= -1e-14)
    assert np.all(zh - zl >= -1e-12 * max(1.0, float(np.max(zh))))
