import pytest

from agebif.bifurcation import find_eta0, find_eta1, find_eta2, tangent_at
from agebif.coexistence import continue_branch
from agebif.model import make_model


@pytest.fixture(scope="session")
def competing():
    return make_model("competing")


@pytest.fixture(scope="session")
def cooperative():
    return make_model("cooperative")


@pytest.fixture(scope="session")
def predator_prey():
    return make_model("predator_prey")


@pytest.fixture(scope="session")
def small():
    return make_model("competing", n_x=16, n_a=32)


@pytest.fixture(scope="session")
def competing_branch(competing):
    point = find_eta2(competing, 2.0)
    tangent = tangent_at(competing, point)
    return tangent, continue_branch(competing, tangent)


@pytest.fixture(scope="session")
def cooperative_branch_xi2(cooperative):
    point = find_eta1(cooperative, 2.0)
    tangent = tangent_at(cooperative, point)
    return tangent, continue_branch(cooperative, tangent)


@pytest.fixture(scope="session")
def cooperative_branch_xi095(cooperative):
    point = find_eta0(cooperative, 0.95)
    tangent = tangent_at(cooperative, point)
    return tangent, continue_branch(cooperative, tangent)
