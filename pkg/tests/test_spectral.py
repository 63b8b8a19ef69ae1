import math

import numpy as np
import pytest

from agebif.errors import TailVanishes, ZeroProfile
from agebif.grid import age_integral, build_grid, principal_eigenpair
from agebif.model import make_model
from agebif.spectral import (PROFILE_FAMILIES, assemble_birth_operator, birth_matrix,
                             constant_potential_radius, normalize_profile, potential_hash,
                             profile_samples, radius_of_potential, spectral_radius)


@pytest.fixture(scope="module")
def parts():
    sg, ag = build_grid(1.0, 32, 1.0, 64)
    eig = principal_eigenpair(sg)
    prof = normalize_profile(profile_samples("constant", ag), eig, ag, "constant")
    return sg, ag, eig, prof


def test_power_iteration_matches_dense_eigensolver():
    rng = np.random.default_rng(7)
    for n in (5, 20, 60):
        M = rng.uniform(0, 1, (n, n))
        res = spectral_radius(M)
        assert res.radius == pytest.approx(max(abs(np.linalg.eigvals(M))), rel=1e-10)
        assert np.all(res.eigvec > 0)
        assert res.residual < 1e-10 * res.radius


def test_power_iteration_diagonal_with_close_gap():
    M = np.diag([1.0, 0.9, 0.5]) + 1e-3
    assert spectral_radius(M).radius == pytest.approx(max(np.linalg.eigvals(M).real), rel=1e-10)


@pytest.mark.parametrize("kind", PROFILE_FAMILIES)
def test_normalized_profiles_have_unit_moment(parts, kind):
    sg, ag, eig, _ = parts
    prof = normalize_profile(profile_samples(kind, ag), eig, ag, kind)
    assert age_integral(ag, prof.samples * np.exp(-eig.lambda1 * ag.ages)) == pytest.approx(1.0)
    assert prof.scale > 0 and prof.name == kind


def test_constant_scale_closed_form(parts):
    _, ag, eig, prof = parts
    lam = eig.lambda1
    assert prof.scale == pytest.approx(lam / -math.expm1(-lam), rel=5e-3)


def test_profile_rejections(parts):
    _, ag, eig, _ = parts
    with pytest.raises(ZeroProfile):
        normalize_profile(np.zeros(ag.n_a + 1), eig, ag)
    early = profile_samples("truncated-gaussian-bump", ag, center=0.3, width=0.1)
    with pytest.raises(TailVanishes):
        normalize_profile(early, eig, ag)
    with pytest.raises(TailVanishes):
        normalize_profile(profile_samples("linear-ramp", ag, start=1.0, end=0.0), eig, ag)
    with pytest.raises(ValueError):
        normalize_profile(-np.ones(ag.n_a + 1), eig, ag)
    with pytest.raises(ValueError):
        profile_samples("sawtooth", ag)


def test_birth_matrix_positive_and_radius_one_at_zero(parts):
    sg, ag, eig, prof = parts
    M = birth_matrix(sg, ag, 0.0, prof)
    assert M.shape == (sg.n_x, sg.n_x) and np.all(M > 0)
    assert spectral_radius(M).radius == pytest.approx(1.0, abs=3e-3)


def test_birth_matrix_symmetric_for_constant_potential(parts):
    # the march of a constant potential commutes with the symmetric Laplacian
    sg, ag, _, prof = parts
    M = birth_matrix(sg, ag, 2.0, prof)
    np.testing.assert_allclose(M, M.T, atol=1e-13)


@pytest.mark.parametrize("c", [-2.0, 0.0, 5.0])
def test_constant_potential_closed_form(parts, c):
    sg, ag, eig, prof = parts
    r = radius_of_potential(sg, ag, c, prof).radius
    exact = constant_potential_radius(prof, ag, eig.lambda1, c)
    assert abs(r - exact) / r < 5e-3


def test_constant_potential_error_second_order():
    errs = []
    for n_x, n_a in ((16, 32), (33, 64), (67, 128)):
        m = make_model(n_x=n_x, n_a=n_a)
        r = m.radius(5.0).radius
        errs.append(abs(r - constant_potential_radius(m.b1, m.ag, m.eig.lambda1, 5.0)) / r)
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_radius_decreases_with_potential(parts):
    sg, ag, eig, prof = parts
    radii = [radius_of_potential(sg, ag, c, prof).radius for c in (-2.0, -1.0, 0.0, 1.0, 5.0)]
    assert np.all(np.diff(radii) < 0)


def test_assemble_records_hash(parts):
    sg, ag, _, prof = parts
    h = np.full((ag.n_a + 1, sg.n_x), 0.5)
    op = assemble_birth_operator(sg, ag, h, prof)
    assert op.potential_hash == potential_hash(h)
    assert potential_hash(h) != potential_hash(h + 1e-9)
    np.testing.assert_allclose(op.matrix, birth_matrix(sg, ag, h, prof))
