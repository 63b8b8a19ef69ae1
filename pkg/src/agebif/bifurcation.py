"""Bifurcation values off the semi-trivial branches and the kernel tangents.

Along ``B1 = {(eta, u_eta, 0)}`` the ``v``-equation linearizes to a march
under ``-s_v beta2 u_eta``; a bifurcation occurs where
``xi r(H_hat[-s_v beta2 u_eta]) = 1``. Along ``B2 = {(eta, 0, v_xi)}`` the
``u``-equation linearizes under ``-s_u alpha2 v_xi`` and the value is
``eta = 1 / r(H[-s_u alpha2 v_xi])``.

Naming by sign pattern: ``eta0`` (root on B1 with growth potential,
cooperative or predator-prey, ``xi < 1``), ``eta1`` (B2, cooperative,
``xi > 1``), ``eta2`` (B2, competing), ``eta3`` (root on B1 with decay
potential, competing).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq

from .errors import (NoBracket, NoPositiveSolution, SingularResolvent, Stagnation)
from .evolution import _march_linear, linear_residual
from .grid import age_integral
from .model import InteractionCase, Model
from .semitrivial import RESOLUTION_LIMIT, semitrivial_field, solve_semitrivial
from .spectral import spectral_radius

LADDER_RATIO = 1.5
ROOT_XTOL = 1e-12


@dataclass(frozen=True)
class BifurcationPoint:
    kind: str
    eta: float
    xi: float
    base: str
    condition_residual: float
    case: str = ""

    def as_dict(self) -> dict:
        return {"kind": self.kind, "eta": self.eta, "xi": self.xi, "base": self.base,
                "case": self.case, "residual": self.condition_residual}


@dataclass(frozen=True)
class Tangent:
    """Kernel direction ``(phi, psi)`` of the linearization at a bifurcation
    point, with traces ``Phi0 = phi(0)`` and ``Psi0 = psi(0)``.

    At B1 the ``psi`` trace has sup-norm 1; at B2 the ``phi`` trace does.
    """

    point: BifurcationPoint
    phi_star: np.ndarray = dc_field(repr=False)
    psi_star: np.ndarray = dc_field(repr=False)
    Phi0: np.ndarray = dc_field(repr=False)
    Psi0: np.ndarray = dc_field(repr=False)
    residual: float = 0.0


def _b1_potential_sign(kind: str) -> float:
    return -1.0 if kind == "eta0" else 1.0


def _b1_condition(model: Model, eta: float, xi: float, sign: float) -> float:
    u = semitrivial_field(model, eta, "b1")
    return xi * model.radius(sign * model.beta2 * u, "b2").radius - 1.0


def _resolved(model: Model, eta: float) -> bool:
    try:
        sup = solve_semitrivial(model, eta, which="b1").sup
    except Stagnation:
        return False
    load = model.ag.da * max(model.alpha1, model.beta2) * sup
    return load <= RESOLUTION_LIMIT


def _locate_on_b1(model: Model, xi: float, kind: str,
                  eta_max: float | None = None) -> BifurcationPoint:
    eta_max = model.eta_max if eta_max is None else eta_max
    sign = _b1_potential_sign(kind)

    def g(eta):
        return _b1_condition(model, eta, xi, sign)

    lo, g_lo = 1.0, g(1.0)
    if g_lo == 0.0:
        return BifurcationPoint(kind, 1.0, xi, "B1", 0.0, model.case.value)
    # the root exists only where g changes sign; g is monotone in eta
    hi = LADDER_RATIO
    while True:
        if hi > eta_max:
            raise NoBracket(f"{kind}: no sign change of the condition up to "
                            f"eta_max = {eta_max:g} (xi = {xi:g})")
        if not _resolved(model, hi):
            raise NoBracket(f"{kind}: no sign change before the age grid stops "
                            f"resolving the semi-trivial state (eta = {hi:g})")
        g_hi = g(hi)
        if g_hi == 0.0 or np.sign(g_hi) != np.sign(g_lo):
            break
        lo, g_lo = hi, g_hi
        hi *= LADDER_RATIO
    eta = hi if g_hi == 0.0 else brentq(g, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    res = abs(g(eta))
    return BifurcationPoint(kind, float(eta), float(xi), "B1", float(res), model.case.value)


def find_eta0(model: Model, xi: float, eta_max: float | None = None) -> BifurcationPoint:
    """Root of ``xi r(H_hat[-beta2 u_eta]) = 1`` (increasing in ``eta``).

    Raises
    ------
    NoBracket
        When ``xi`` is at or below the finite-cutoff threshold; the condition
        has no sign change up to ``eta_max`` or the resolution limit.
    """
    if not 0.0 < xi < 1.0:
        raise NoBracket(f"eta0 requires 0 < xi < 1, got {xi}")
    return _locate_on_b1(model, xi, "eta0", eta_max)


def find_eta3(model: Model, xi: float, eta_max: float | None = None) -> BifurcationPoint:
    """Root of ``xi r(H_hat[+beta2 u_eta]) = 1`` (decreasing in ``eta``)."""
    if not xi > 1.0:
        raise NoBracket(f"eta3 requires xi > 1, got {xi}")
    return _locate_on_b1(model, xi, "eta3", eta_max)


def _locate_on_b2(model: Model, xi: float, kind: str) -> BifurcationPoint:
    v = semitrivial_field(model, xi, "b2")
    sign = -1.0 if kind == "eta1" else 1.0
    r = model.radius(sign * model.alpha2 * v, "b1").radius
    eta = 1.0 / r
    # re-assemble from scratch for an independent residual
    res = abs(eta * model.radius(sign * model.alpha2 * v, "b1").radius - 1.0)
    return BifurcationPoint(kind, float(eta), float(xi), "B2", float(res), model.case.value)


def find_eta1(model: Model, xi: float) -> BifurcationPoint:
    """``1 / r(H[-alpha2 v_xi])``, in ``(0, 1)`` for ``xi > 1``."""
    if not xi > 1.0:
        raise NoPositiveSolution(f"B2 is empty for xi = {xi} <= 1")
    return _locate_on_b2(model, xi, "eta1")


def find_eta2(model: Model, xi: float) -> BifurcationPoint:
    """``1 / r(H[+alpha2 v_xi])``, above 1 for ``xi > 1``."""
    if not xi > 1.0:
        raise NoPositiveSolution(f"B2 is empty for xi = {xi} <= 1")
    return _locate_on_b2(model, xi, "eta2")


def locate(model: Model, xi: float) -> list[BifurcationPoint]:
    """All bifurcation values of the model's case at this ``xi``.

    Values that cannot be bracketed at the cutoff are omitted.
    """
    case = model.case
    out = []
    kinds = []
    if case is InteractionCase.COOPERATIVE:
        kinds = ["eta0"] if xi < 1 else ["eta1"] if xi > 1 else []
    elif case is InteractionCase.COMPETING:
        kinds = ["eta2", "eta3"] if xi > 1 else []
    else:
        kinds = ["eta0"] if xi < 1 else ["eta2"] if xi > 1 else []
    finders = {"eta0": find_eta0, "eta1": find_eta1, "eta2": find_eta2, "eta3": find_eta3}
    for k in kinds:
        try:
            out.append(finders[k](model, xi))
        except NoBracket:
            continue
    return out


def recheck(model: Model, point: BifurcationPoint) -> float:
    """Recompute the defining condition of ``point`` from scratch."""
    if point.base == "B1":
        return abs(_b1_condition(model, point.eta, point.xi,
                                 _b1_potential_sign(point.kind)))
    v = semitrivial_field(model, point.xi, "b2")
    sign = -1.0 if point.kind == "eta1" else 1.0
    return abs(point.eta * model.radius(sign * model.alpha2 * v, "b1").radius - 1.0)


def _resolvent_solve(M: np.ndarray, c: float, rhs: np.ndarray) -> np.ndarray:
    A = np.eye(M.shape[0]) - c * M
    if np.linalg.cond(A) > 1e12:
        raise SingularResolvent("I - c H is numerically singular")
    return np.linalg.solve(A, rhs)


def _march(model: Model, h, Z0, g=None) -> np.ndarray:
    return _march_linear(model.sg, model.ag, h, np.asarray(Z0, float)[:, None],
                         g=g)[:, :, 0]


def linearized_residual(model: Model, eta: float, xi: float, u, v, phi, psi) -> float:
    """Sup-norm defect of ``(phi, psi)`` in the linearization at ``(u, v)``.

    Equations: ``dphi/da - Delta phi + (2 a1 u - s_u a2 v) phi = s_u a2 u psi``,
    ``dpsi/da - Delta psi + (2 b1 v - s_v b2 u) psi = s_v b2 v phi``, with
    ``phi(0) = eta int b1 phi`` and ``psi(0) = xi int b2 psi``.
    """
    a1, a2, b1, b2 = model.coeffs
    s_u, s_v = model.signs
    ag, sg = model.ag, model.sg
    r1 = linear_residual(sg, ag, 2 * a1 * u - s_u * a2 * v, phi, s_u * a2 * u * psi)
    r2 = linear_residual(sg, ag, 2 * b1 * v - s_v * b2 * u, psi, s_v * b2 * v * phi)
    r3 = np.max(np.abs(phi[0] - eta * age_integral(ag, model.b1.samples[:, None] * phi)))
    r4 = np.max(np.abs(psi[0] - xi * age_integral(ag, model.b2.samples[:, None] * psi)))
    return float(max(r1, r2, r3, r4))


def tangent_at_B1(model: Model, point: BifurcationPoint) -> Tangent:
    """Kernel direction at ``(eta, u_eta, 0)``.

    ``Psi0`` is the positive eigenvector of ``xi H_hat[-s_v b2 u]``; ``psi`` is
    its march; ``phi`` solves the sourced ``u``-linearization with the
    renewal condition enforced through the resolvent of ``H[2 a1 u]``.
    """
    a1, a2, b1, b2 = model.coeffs
    s_u, s_v = model.signs
    eta, xi = point.eta, point.xi
    u = semitrivial_field(model, eta, "b1")
    zero = model.zeros()
    h_v = -s_v * b2 * u
    Psi0 = spectral_radius(model.birth_matrix(h_v, "b2")).eigvec
    psi = _march(model, h_v, Psi0)
    h_u = 2 * a1 * u
    g = s_u * a2 * u * psi
    S = _march(model, h_u, np.zeros(model.sg.n_x), g)
    rhs = age_integral(model.ag, model.b1.samples[:, None] * S)
    Phi0 = eta * _resolvent_solve(model.birth_matrix(h_u, "b1"), eta, rhs)
    phi = _march(model, h_u, Phi0, g)
    res = linearized_residual(model, eta, xi, u, zero, phi, psi)
    return Tangent(point, phi, psi, phi[0].copy(), Psi0, res)


def tangent_at_B2(model: Model, point: BifurcationPoint) -> Tangent:
    """Kernel direction at ``(eta, 0, v_xi)``; ``Phi0`` is the positive
    eigenvector of ``H[-s_u a2 v]``."""
    a1, a2, b1, b2 = model.coeffs
    s_u, s_v = model.signs
    eta, xi = point.eta, point.xi
    v = semitrivial_field(model, xi, "b2")
    zero = model.zeros()
    h_u = -s_u * a2 * v
    Phi0 = spectral_radius(model.birth_matrix(h_u, "b1")).eigvec
    phi = _march(model, h_u, Phi0)
    h_v = 2 * b1 * v
    g = s_v * b2 * v * phi
    S = _march(model, h_v, np.zeros(model.sg.n_x), g)
    rhs = age_integral(model.ag, model.b2.samples[:, None] * S)
    Psi0 = xi * _resolvent_solve(model.birth_matrix(h_v, "b2"), xi, rhs)
    psi = _march(model, h_v, Psi0, g)
    res = linearized_residual(model, eta, xi, zero, v, phi, psi)
    return Tangent(point, phi, psi, Phi0, psi[0].copy(), res)


def tangent_at(model: Model, point: BifurcationPoint) -> Tangent:
    return tangent_at_B1(model, point) if point.base == "B1" else tangent_at_B2(model, point)
