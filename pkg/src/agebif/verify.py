"""Randomized property checks of comparison principles and operator orderings.

Every check draws its random data from ``numpy.random.default_rng(seed)`` and
returns a :class:`PropertyReport` that records the seed and the model
fingerprint, so any run can be replayed exactly.

Random fields are nonnegative combinations of products of a spatial factor
in ``{1, phi1, phi1^2}`` and an age factor in ``{1, a/a_m, 1 - a/a_m}`` with
coefficients drawn from ``[0, 5]``.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .evolution import evolve_nonlinear
from .model import Model
from .semitrivial import RESOLUTION_LIMIT, solve_renewal, solve_semitrivial
from .spectral import spectral_radius

STRICT_MARGIN = 1e-12
COMPARE_TOL = 1e-9


@dataclass(frozen=True)
class PropertyReport:
    name: str
    trials: int
    failures: int
    worst_violation: float
    seed: int
    config_hash: str

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def as_dict(self) -> dict:
        return asdict(self)


def _basis(model: Model, boundary_free: bool = False) -> np.ndarray:
    phi = np.asarray(model.eig.phi1)
    spatial = [phi, phi ** 2] if boundary_free else [np.ones_like(phi), phi, phi ** 2]
    s = model.ag.ages / model.ag.a_m
    ages = [np.ones_like(s), s, 1.0 - s]
    return np.array([np.outer(t, x) for x in spatial for t in ages])


def random_field(model: Model, rng: np.random.Generator, scale: float = 1.0,
                 boundary_free: bool = False) -> np.ndarray:
    """Nonnegative random field; ``boundary_free`` drops the constant spatial
    factor so the field vanishes at the Dirichlet boundary."""
    B = _basis(model, boundary_free)
    c = rng.uniform(0.0, 5.0, size=len(B))
    c[rng.random(len(B)) < 0.3] = 0.0
    if not np.any(c):
        c[rng.integers(len(B))] = rng.uniform(0.5, 5.0)
    return scale * np.tensordot(c, B, axes=1)


def random_trace(model: Model, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    phi = np.asarray(model.eig.phi1)
    c = rng.uniform(0.0, 5.0, size=2)
    return scale * (c[0] * phi + c[1] * phi ** 2 + 1e-3 * phi)


def _report(name, trials, failures, worst, seed, model):
    return PropertyReport(name, trials, failures, float(worst), seed, model.fingerprint())


def resolved_eta_range(model: Model, lo: float = 1.5, hi: float = 4.0) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` until the age grid resolves ``u_eta`` at the top end."""
    for _ in range(40):
        sup = solve_semitrivial(model, hi, which="b1").sup
        if model.ag.da * model.alpha1 * sup <= RESOLUTION_LIMIT:
            break
        hi = lo + 0.8 * (hi - lo)
    return lo, hi


def check_comparison_A3(model: Model, trials: int = 50, seed: int = 0) -> PropertyReport:
    """Renewal problems with a source, or with a relaxed renewal inequality,
    bracket the semi-trivial state.

    Per trial, with ``eta`` drawn from ``[1.5, 4]`` (capped to the range the
    age grid resolves): the solution with source
    ``+F`` and trace excess ``E >= 0`` must dominate ``u_eta``; the solution
    with sink ``-F`` (small, vanishing at the boundary) and trace deficit
    ``E`` must lie below it. The violation is the largest amount by which an
    inequality fails.
    """
    rng = np.random.default_rng(seed)
    a1 = model.alpha1
    lo, hi = resolved_eta_range(model)
    failures, worst = 0, -np.inf
    for _ in range(trials):
        eta = float(rng.uniform(lo, hi))
        base = solve_semitrivial(model, eta, which="b1")
        u_eta = base.field
        F = random_field(model, rng, scale=float(rng.uniform(0.0, 1.0)))
        E = random_trace(model, rng, scale=float(rng.uniform(0.0, 0.2)))
        upper, _ = solve_renewal(model, eta, a1, "b1", base.trace, source=F, offset=E)
        sink = random_field(model, rng, scale=0.02, boundary_free=True)
        dE = random_trace(model, rng, scale=0.01)
        lower, _ = solve_renewal(model, eta, a1, "b1", base.trace, source=-sink,
                                 offset=-dE)
        scale = max(1.0, float(np.max(u_eta)))
        viol = max(float(np.max(u_eta - upper)), float(np.max(lower - u_eta))) / scale
        worst = max(worst, viol)
        failures += viol > COMPARE_TOL
    return _report("comparison_source", trials, failures, worst, seed, model)


def check_comparison_A3a(model: Model, trials: int = 50, seed: int = 0) -> PropertyReport:
    """The capped problem stays below the problem with the true competitor.

    Per trial: a random ``v >= 0`` with cap ``R >= max v``; ``u`` solves the
    renewal problem damped by ``alpha2 v``; ``w`` solves it damped by
    ``alpha2 R`` with an extra sink ``-F`` and a trace deficit. The renewal
    parameter is ``1.5 / r(H[alpha2 R])`` so both problems have positive
    solutions. Checks ``u >= w``.
    """
    rng = np.random.default_rng(seed)
    a1, a2 = model.alpha1, model.alpha2
    failures, worst = 0, -np.inf
    for _ in range(trials):
        v = random_field(model, rng, scale=float(rng.uniform(0.05, 0.5)))
        R = float(np.max(v)) * float(rng.uniform(1.0, 1.5))
        capped = np.full_like(v, R)
        eta = 1.5 / model.radius(a2 * capped, "b1").radius
        guess = solve_semitrivial(model, eta, which="b1").trace
        u, _ = solve_renewal(model, eta, a1, "b1", guess, w_lin=a2 * v)
        F = random_field(model, rng, scale=0.02, boundary_free=True)
        dE = random_trace(model, rng, scale=0.01)
        w, _ = solve_renewal(model, eta, a1, "b1", u[0], w_lin=a2 * capped,
                             source=-F, offset=-dE)
        viol = float(np.max(w - u)) / max(1.0, float(np.max(u)))
        worst = max(worst, viol)
        failures += viol > COMPARE_TOL
    return _report("comparison_capped", trials, failures, worst, seed, model)


def check_radius_monotonicity(model: Model, trials: int = 100, seed: int = 0) -> PropertyReport:
    """Adding a nonnegative, nonzero bump to the potential strictly lowers the
    principal radius.

    Potentials are random fields shifted by a random constant in ``[-3, 0]``
    so that both signs occur. The violation is ``r(h + bump) - r(h)`` (should
    be negative); strictness is required with margin ``1e-12`` when the bump
    exceeds ``1e-6``.
    """
    rng = np.random.default_rng(seed)
    failures, worst = 0, -np.inf
    for _ in range(trials):
        h = random_field(model, rng) - rng.uniform(0.0, 3.0)
        bump = random_field(model, rng, scale=float(rng.uniform(1e-3, 1.0)))
        r_h = model.radius(h, "b1").radius
        r_g = model.radius(h + bump, "b1").radius
        viol = r_g - r_h
        worst = max(worst, viol)
        strict = float(np.max(bump)) > 1e-6
        failures += viol >= (-STRICT_MARGIN if strict else 0.0)
    return _report("radius_monotonicity", trials, failures, worst, seed, model)


def check_dominated_ordering(model: Model, trials: int = 50, seed: int = 0) -> PropertyReport:
    """Operator ordering under dominated parameters.

    Per trial: coefficients with ``beta2 >= alpha1`` and ``beta1 >= alpha2``,
    ``b2 = theta b1`` with ``theta`` in ``[0.5, 1]``, random ``u, v >= 0``.
    The birth matrix of ``alpha1 u + alpha2 v`` with ``b1`` must dominate the
    one of ``beta1 v + beta2 u`` with ``b2`` entrywise (up to ``1e-10``
    relative to the largest entry) and in principal radius (up to ``1e-10``).
    """
    rng = np.random.default_rng(seed)
    failures, worst = 0, -np.inf
    for _ in range(trials):
        a1, a2 = rng.uniform(0.2, 2.0, size=2)
        b2 = a1 + rng.uniform(0.0, 1.0)
        b1 = a2 + rng.uniform(0.0, 1.0)
        theta = float(rng.uniform(0.5, 1.0))
        u = random_field(model, rng, scale=float(rng.uniform(0.1, 2.0)))
        v = random_field(model, rng, scale=float(rng.uniform(0.1, 2.0)))
        H = model.birth_matrix(a1 * u + a2 * v, "b1")
        H_hat = theta * model.birth_matrix(b1 * v + b2 * u, "b1")
        top = float(np.max(np.abs(H)))
        ent = float(np.max(H_hat - H)) / top
        rad = spectral_radius(H_hat).radius - spectral_radius(H).radius
        viol = max(ent, rad)
        worst = max(worst, viol)
        failures += (ent > 1e-10) or (rad > 1e-10)
    return _report("dominated_ordering", trials, failures, worst, seed, model)


def supersolution_f(a: np.ndarray, v0: float, beta1: float, m: float) -> np.ndarray:
    """``f(a) = m v0 / (beta1 v0 (1 - e^{-m a}) + m e^{-m a})``."""
    e = np.exp(-m * a)
    return m * v0 / (beta1 * v0 * (1.0 - e) + m * e)


def supersolution_f_prime(a: np.ndarray, v0: float, beta1: float, m: float) -> np.ndarray:
    """Closed-form derivative of :func:`supersolution_f`."""
    e = np.exp(-m * a)
    den = beta1 * v0 * (1.0 - e) + m * e
    return -m * v0 * (beta1 * v0 * m * e - m * m * e) / den ** 2


def check_supersolution_f(model: Model, trials: int = 50, seed: int = 0) -> PropertyReport:
    """Logistic supersolution for the predator equation with bounded prey.

    Per trial: random ``u`` with ``||u||_inf <= M`` and a random trace
    ``V``; ``v`` marches ``dv/da - Delta v = -beta1 v^2 + beta2 u v``. With
    ``m = beta2 M`` the closed-form ``f`` must bound ``v`` nodewise and
    satisfy ``f' = -beta1 f^2 + m f`` to ``1e-8`` at every age node.
    """
    rng = np.random.default_rng(seed)
    b1, b2 = model.beta1, model.beta2
    ages = model.ag.ages
    failures, worst = 0, -np.inf
    for _ in range(trials):
        u = random_field(model, rng, scale=float(rng.uniform(0.1, 3.0)))
        M = float(np.max(u)) * float(rng.uniform(1.0, 1.5))
        V = random_trace(model, rng, scale=float(rng.uniform(0.1, 3.0)))
        v = evolve_nonlinear(model.sg, model.ag, b1, -b2 * u, V)
        v0 = float(np.max(V))
        m = b2 * M
        f = supersolution_f(ages, v0, b1, m)
        ode = supersolution_f_prime(ages, v0, b1, m) - (-b1 * f * f + m * f)
        ode_res = float(np.max(np.abs(ode))) / max(1.0, float(np.max(np.abs(m * f))))
        gap = float(np.max(v - f[:, None])) / max(1.0, v0)
        worst = max(worst, gap)
        failures += (gap > COMPARE_TOL) or (ode_res > 1e-8)
    return _report("supersolution_f", trials, failures, worst, seed, model)


CHECKS = {
    "comparison_source": check_comparison_A3,
    "comparison_capped": check_comparison_A3a,
    "radius_monotonicity": check_radius_monotonicity,
    "dominated_ordering": check_dominated_ordering,
    "supersolution_f": check_supersolution_f,
}


def run_all(model: Model, trials: int = 50, seed: int = 0) -> list[PropertyReport]:
    """Run every check; radius monotonicity uses at least 100 trials."""
    out = []
    for name, fn in CHECKS.items():
        n = max(trials, 100) if name == "radius_monotonicity" else trials
        out.append(fn(model, n, seed))
    return out
