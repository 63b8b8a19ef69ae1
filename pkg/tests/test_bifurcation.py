import numpy as np
import pytest

from agebif.bifurcation import (BifurcationPoint, find_eta0, find_eta1, find_eta2, find_eta3,
                                locate, recheck, tangent_at)
from agebif.errors import NoBracket, NoPositiveSolution
from agebif.model import make_model


@pytest.fixture(scope="module")
def sym():
    return make_model("competing", n_x=32, n_a=64)


@pytest.mark.parametrize("xi", [1.5, 2.0, 3.0])
def test_symmetric_model_eta2_eta3_equal_xi(sym, xi):
    # equal coefficients and profiles: v_xi = u_xi, so both conditions reduce
    # to the semi-trivial identity xi r(H[u_xi]) = 1
    assert find_eta2(sym, xi).eta == pytest.approx(xi, rel=1e-9)
    assert find_eta3(sym, xi).eta == pytest.approx(xi, rel=1e-9)


def test_eta1_in_unit_interval_and_decreasing(sym):
    vals = [find_eta1(sym, xi).eta for xi in (1.5, 2.0, 3.0)]
    assert all(0 < v < 1 for v in vals)
    assert vals[0] > vals[1] > vals[2]


def test_eta0_above_one_and_decreasing(sym):
    vals = [find_eta0(sym, xi).eta for xi in (0.6, 0.8, 0.95)]
    assert all(v > 1 for v in vals)
    assert vals[0] > vals[1] > vals[2]


def test_condition_residuals_and_recheck(sym):
    for p in [find_eta0(sym, 0.9), find_eta1(sym, 2.0), find_eta2(sym, 2.0), find_eta3(sym, 2.0)]:
        assert p.condition_residual < 1e-8
        assert recheck(sym, p) < 1e-8
    bogus = BifurcationPoint("eta3", 1.7, 2.0, "B1", 0.0, "competing")
    assert recheck(sym, bogus) > 1e-3


def test_domain_errors(sym):
    with pytest.raises(NoBracket):
        find_eta0(sym, 1.5)
    with pytest.raises(NoBracket):
        find_eta3(sym, 0.9)
    with pytest.raises(NoPositiveSolution):
        find_eta1(sym, 1.0)
    with pytest.raises(NoPositiveSolution):
        find_eta2(sym, 0.5)


def test_eta0_unbracketed_for_small_xi(sym):
    # xi r(H_hat[-u_eta]) stays below 1 on the resolved range
    with pytest.raises(NoBracket):
        find_eta0(sym, 0.05)


def test_locate_kinds_per_case(sym):
    assert [p.kind for p in locate(sym, 2.0)] == ["eta2", "eta3"]
    assert locate(sym, 0.9) == []
    coop = sym.with_case("cooperative")
    assert [p.kind for p in locate(coop, 2.0)] == ["eta1"]
    assert [p.kind for p in locate(coop, 0.9)] == ["eta0"]
    pp = sym.with_case("predator_prey")
    assert [p.kind for p in locate(pp, 2.0)] == ["eta2"]
    assert [p.kind for p in locate(pp, 0.9)] == ["eta0"]
    d = locate(pp, 0.9)[0].as_dict()
    assert set(d) == {"kind", "eta", "xi", "base", "case", "residual"}


@pytest.mark.parametrize("case,xi,finder", [
    ("cooperative", 0.95, find_eta0), ("cooperative", 2.0, find_eta1),
    ("competing", 2.0, find_eta2), ("competing", 2.0, find_eta3),
    ("predator_prey", 0.9, find_eta0), ("predator_prey", 2.0, find_eta2)])
def test_tangent_residuals(sym, case, xi, finder):
    m = sym.with_case(case)
    t = tangent_at(m, finder(m, xi))
    assert t.residual < 1e-6
    lead = t.Psi0 if t.point.base == "B1" else t.Phi0
    assert np.all(lead > 0)
    np.testing.assert_allclose(t.phi_star[0], t.Phi0)
    np.testing.assert_allclose(t.psi_star[0], t.Psi0)
