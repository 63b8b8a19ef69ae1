"""Single-species renewal problems, their analytic bounds and ladders.

For a coefficient ``alpha`` and birth profile ``b`` the semi-trivial state
``u_eta`` solves ``du/da - Delta u = -alpha u^2`` with the renewal condition
``u(0) = eta int b u da``. The unknown is the trace ``T = u(0)``; the field is
recovered by one nonlinear march.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import EtaBelowThreshold, NoPositiveSolution, Stagnation
from .evolution import _march_decoupled
from .grid import AgeGrid, Eigenpair
from .model import Model

RESIDUAL_TOL = 1e-10
RESOLUTION_LIMIT = 2.0
ROUNDOFF_TOL = 1e-13


@dataclass(frozen=True)
class SemitrivialSolution:
    eta: float
    field: np.ndarray = dc_field(repr=False)
    trace: np.ndarray = dc_field(repr=False)
    residual: float
    picard_iters: int
    newton_iters: int

    @property
    def sup(self) -> float:
        return float(np.max(self.field))


@dataclass(frozen=True)
class CompetingLowerBound:
    """Explicit subsolution ``z(a, x) = f(a) phi1(x)`` for the competing case."""

    mu1: float
    m0: float
    c_eta: float
    f_eta: np.ndarray = dc_field(repr=False)
    z: np.ndarray = dc_field(repr=False)


@dataclass(frozen=True)
class LadderEstimate:
    """Finite-cutoff estimate of a limit along an increasing ``eta`` ladder.

    ``cutoff`` is the last ``eta`` actually used; it is below the requested
    maximum when the age grid stops resolving the semi-trivial state.
    """

    value: float
    etas: np.ndarray
    values: np.ndarray
    cutoff: float
    truncated: bool
    flag: str = "ESTIMATE"


def _params(model: Model, which: str) -> tuple[float, np.ndarray]:
    prof = model.profile(which)
    return prof.samples * model.ag.weights, prof


def trace_map(model: Model, T: np.ndarray, eta: float, alpha: float,
              which: str = "b1", w_lin=None, source=None, offset=None) -> np.ndarray:
    """``T - eta int b u(T) da - offset`` for a batch of traces (columns).

    ``u`` marches ``du/da - Delta u = -alpha u^2 - w_lin u + source``; both
    extra terms default to zero.
    """
    w, _ = _params(model, which)
    T = np.asarray(T, dtype=float)
    cols = T if T.ndim == 2 else T[:, None]
    pot = model.zeros() if w_lin is None else np.asarray(w_lin, float)
    img = _march_decoupled(model.sg, model.ag, alpha, pot, cols, g=source, weights=w)
    out = cols - eta * img
    if offset is not None:
        out = out - (offset[:, None] if out.ndim == 2 else offset)
    return out if T.ndim == 2 else out[:, 0]


def lower_bound_we(eta: float, alpha1: float, eig: Eigenpair, a: float,
                   a_m: float = 1.0) -> np.ndarray:
    """Explicit lower bound of ``u_eta(a)`` for ``eta > 1``.

    ``(lambda1/alpha1) (eta - 1) / (eta (e^{lambda1 a} - 1) + 1 - e^{-lambda1 (a_m - a)}) phi1``
    """
    lam = eig.lambda1
    den = eta * math.expm1(lam * a) - math.expm1(-lam * (a_m - a))
    return (lam / alpha1) * (eta - 1.0) / den * np.asarray(eig.phi1)


def picard(model: Model, eta: float, alpha: float, which: str, T0: np.ndarray,
           damping: float = 0.5, maxiter: int = 500,
           tol: float = RESIDUAL_TOL,
           relative: bool = False, **extra) -> tuple[np.ndarray, int, float]:
    """Damped Picard iteration ``T <- (1-d) T + d eta int b u(T)``.

    Returns ``(trace, iterations, residual)``; stops when the residual is
    below ``tol`` (times ``||T||`` if ``relative``) or after ``maxiter``
    sweeps.
    """
    T = np.array(T0, dtype=float)
    res = np.inf
    for it in range(1, maxiter + 1):
        F = trace_map(model, T, eta, alpha, which, **extra)
        res = float(np.max(np.abs(F)))
        scale = float(np.max(np.abs(T))) if relative else 1.0
        if res <= tol * scale:
            return T, it - 1, res
        T = T - damping * F
    return T, maxiter, res


def _fd_jacobian(model, T, eta, alpha, which, **extra):
    n = T.size
    step = 1e-6 * (1.0 + float(np.max(np.abs(T))))
    cols = np.empty((n, n + 1))
    cols[:, 0] = T
    cols[:, 1:] = T[:, None] + step * np.eye(n)
    Fs = trace_map(model, cols, eta, alpha, which, **extra)
    return (Fs[:, 1:] - Fs[:, :1]) / step, Fs[:, 0]


def newton(model: Model, eta: float, alpha: float, which: str, T0: np.ndarray,
           tol: float = RESIDUAL_TOL, maxiter: int = 40,
           **extra) -> tuple[np.ndarray, int, float]:
    """Chord-Newton on the trace map with a forward-difference Jacobian.

    The Jacobian is refreshed whenever the residual contracts by less than a
    factor 10 in one step. Steps are shortened so the trace stays
    nonnegative. ``extra`` keywords are forwarded to :func:`trace_map`.
    Converged means ``residual <= tol``, or, once a fresh
    Jacobian no longer helps, a residual at round-off level relative to the
    trace.
    """
    T = np.array(T0, dtype=float)
    J, F = _fd_jacobian(model, T, eta, alpha, which, **extra)
    res = float(np.max(np.abs(F)))
    lu = lu_factor(J, check_finite=False)
    fresh = True
    for it in range(1, maxiter + 1):
        if res <= tol:
            return T, it - 1, res
        d = lu_solve(lu, F, check_finite=False)
        T_new = T - d
        if np.any(T_new < 0):
            # largest step keeping every entry at least a tenth of its value
            shrink = np.where(d > 0, 0.9 * T / np.where(d > 0, d, 1.0), 1.0)
            T_new = T - min(1.0, float(shrink.min())) * d
        F_new = trace_map(model, T_new, eta, alpha, which, **extra)
        new = float(np.max(np.abs(F_new)))
        if new > 0.5 * res and fresh:
            if res <= ROUNDOFF_TOL * max(1.0, float(np.max(np.abs(T)))):
                return T, it - 1, res
            if new >= res:
                break
        T, F = T_new, F_new
        fresh = False
        if new > 0.1 * res:
            J, F = _fd_jacobian(model, T, eta, alpha, which, **extra)
            lu = lu_factor(J, check_finite=False)
            fresh = True
        res = new
    if res <= tol:
        return T, maxiter, res
    raise Stagnation(f"Newton stalled at residual {res:.3e} for eta={eta}")


def _lift_above(model: Model, eta: float, alpha: float, which: str,
                T: np.ndarray, factor: float = 1.25, maxiter: int = 200,
                **extra) -> np.ndarray:
    """Scale ``T`` up until its defect points outward along ``phi1``.

    The trace map is convex in the order sense, so Newton started above the
    positive fixed point decreases monotonically onto it, whereas from well
    below it can be drawn to the zero solution.
    """
    phi = np.asarray(model.eig.phi1)
    for _ in range(maxiter):
        if float(phi @ trace_map(model, T, eta, alpha, which, **extra)) >= 0.0:
            return T
        T = factor * T
    raise Stagnation(f"no supersolution found along the ray at eta = {eta}; "
                     "the age grid does not resolve this parameter")


def _cache_key(which, alpha):
    return ("semitrivial", which, float(alpha))


def _warm_start(model: Model, eta: float, alpha: float, which: str):
    store = model.cache.get(_cache_key(which, alpha))
    if not store:
        return None
    near = min(store, key=lambda e: abs(math.log(e / eta)))
    if abs(math.log(near / eta)) > 0.5:
        return None
    return store[near].trace


def solve_semitrivial(model: Model, eta: float, alpha: float | None = None,
                      which: str = "b1", warm: bool = True) -> SemitrivialSolution:
    """Positive solution of the single-species renewal problem.

    ``alpha`` defaults to ``alpha1`` for ``b1`` and ``beta1`` for ``b2``.
    Initialized from ``0.9`` times the explicit lower bound at age 0 (or the
    nearest cached solution when ``warm``), damped Picard until the residual
    is moderate, then chord-Newton to ``1e-10``.

    Raises
    ------
    NoPositiveSolution
        For ``eta <= 1``, or when the iteration collapses onto zero (possible
        only just above 1, below the discrete threshold).
    Stagnation
        When neither iteration reaches the tolerance.
    """
    if alpha is None:
        alpha = model.alpha1 if which == "b1" else model.beta1
    alpha = float(alpha)
    eta = float(eta)
    if not eta > 1.0:
        raise NoPositiveSolution(f"no positive solution for eta = {eta} <= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    key = _cache_key(which, alpha)
    store = model.cache.setdefault(key, {})
    if eta in store:
        return store[eta]
    T0 = _warm_start(model, eta, alpha, which) if warm else None
    if T0 is None:
        T0 = 0.9 * lower_bound_we(eta, alpha, model.eig, 0.0, model.ag.a_m)
    T, n_pic, res = picard(model, eta, alpha, which, T0, damping=0.5,
                           maxiter=60, tol=1e-3, relative=True)
    if not np.all(np.isfinite(T)) or res > 1e3 * max(1.0, float(np.max(np.abs(T0)))):
        raise Stagnation(f"Picard iteration diverges at eta = {eta}; the age grid "
                         "does not resolve this parameter")
    T = _lift_above(model, eta, alpha, which, T)
    T, n_new, res = newton(model, eta, alpha, which, T)
    if float(np.max(T)) < 1e-10:
        raise NoPositiveSolution(f"iteration collapsed to zero at eta = {eta}")
    zero = np.zeros((model.ag.n_a + 1, model.sg.n_x))
    fld = _march_decoupled(model.sg, model.ag, alpha, zero, T[:, None])[:, :, 0]
    fld.setflags(write=False)
    T = fld[0].copy()
    T.setflags(write=False)
    sol = SemitrivialSolution(eta, fld, T, res, n_pic, n_new)
    store[eta] = sol
    return sol


def solve_renewal(model: Model, eta: float, alpha: float, which: str,
                  T0: np.ndarray, w_lin=None, source=None, offset=None,
                  tol: float = RESIDUAL_TOL) -> tuple[np.ndarray, float]:
    """Solve a perturbed single-species renewal problem from a positive guess.

    The trace satisfies ``T = eta int b u da + offset`` where ``u`` marches
    ``du/da - Delta u = -alpha u^2 - w_lin u + source``. Returns the field and
    the final residual.
    """
    extra = {"w_lin": w_lin, "source": source, "offset": offset}
    T = _lift_above(model, eta, alpha, which, np.asarray(T0, float), **extra)
    T, _, res = newton(model, eta, alpha, which, T, tol=tol, **extra)
    pot = model.zeros() if w_lin is None else np.asarray(w_lin, float)
    fld = _march_decoupled(model.sg, model.ag, alpha, pot, T[:, None], g=source)[:, :, 0]
    return fld, res


def semitrivial_field(model: Model, eta: float, which: str = "b1") -> np.ndarray:
    """``u_eta`` (``which='b1'``) or ``v_xi`` (``'b2'``); zero when the
    parameter is at most 1."""
    if eta <= 1.0:
        return model.zeros()
    try:
        return solve_semitrivial(model, eta, which=which).field
    except NoPositiveSolution:
        return model.zeros()


def branch_sweep(model: Model, etas, alpha: float | None = None, which: str = "b1",
                 warm: bool = True) -> list[SemitrivialSolution]:
    """Solve along a list of parameters, warm-starting each from the last."""
    return [solve_semitrivial(model, e, alpha, which, warm=warm) for e in etas]


def calibrate_kappa(model: Model, alpha: float | None = None, which: str = "b2",
                    etas=(1.5, 2.0, 3.0, 4.0)) -> float:
    """Empirical constant for ``||u_eta||_inf <= kappa eta^2``:
    twice the largest observed ratio on a coarse ladder."""
    ratios = [solve_semitrivial(model, e, alpha, which).sup / e ** 2 for e in etas]
    return 2.0 * max(ratios)


def competing_lower_bound_z(eta: float, xi: float, alpha1: float, alpha2: float,
                            kappa: float, eig: Eigenpair,
                            ag: AgeGrid) -> CompetingLowerBound:
    """Subsolution ``f_eta(a) phi1`` for ``u`` in the competing case.

    ``mu1 = lambda1 + alpha2 kappa xi^2``, ``m0 = exp(alpha2 kappa xi^2 a_m)``
    and ``f = mu1 / (c mu1 e^{mu1 a} - alpha1)`` with
    ``c = (alpha1/mu1)(eta - e^{-lambda1 a_m})/(eta - m0)``.
    """
    lam = eig.lambda1
    load = alpha2 * kappa * xi ** 2
    mu1 = lam + load
    m0 = math.exp(load * ag.a_m)
    if not eta > m0:
        raise EtaBelowThreshold(f"eta = {eta} must exceed m0 = {m0:.6g}")
    c = (alpha1 / mu1) * (eta - math.exp(-lam * ag.a_m)) / (eta - m0)
    f = mu1 / (c * mu1 * np.exp(mu1 * ag.ages) - alpha1)
    f.setflags(write=False)
    z = np.outer(f, eig.phi1)
    z.setflags(write=False)
    return CompetingLowerBound(mu1, m0, c, f, z)


def _ladder(eta_max: float, count: int, start: float = 1.05) -> np.ndarray:
    return np.geomspace(start, eta_max, count)


def _radius_ladder(model: Model, sign: float, eta_max: float, count: int,
                   resolution_limit: float):
    etas, vals = [], []
    truncated = False
    for e in _ladder(eta_max, count):
        u = solve_semitrivial(model, e, which="b1").field
        load = model.ag.da * max(model.alpha1, model.beta2) * float(u.max())
        if load > resolution_limit:
            truncated = True
            break
        r = model.radius(sign * model.beta2 * u, "b2").radius
        etas.append(e)
        vals.append(1.0 / r)
    if not etas:
        raise Stagnation("the age grid does not resolve any point of the ladder")
    return np.array(etas), np.array(vals), truncated


def estimate_nu(model: Model, eta_max: float | None = None, count: int = 24,
                resolution_limit: float = RESOLUTION_LIMIT) -> LadderEstimate:
    """Finite-cutoff estimate of ``lim 1/r(H_hat[-beta2 u_eta])``.

    The ladder values decrease in ``eta``; the last resolved value is
    returned. Only an estimate: the limit itself is not computable.
    """
    eta_max = model.eta_max if eta_max is None else eta_max
    etas, vals, trunc = _radius_ladder(model, -1.0, eta_max, count, resolution_limit)
    return LadderEstimate(float(vals[-1]), etas, vals, float(etas[-1]), trunc)


def estimate_N(model: Model, eta_max: float | None = None, count: int = 24,
               resolution_limit: float = RESOLUTION_LIMIT) -> LadderEstimate:
    """Finite-cutoff estimate of ``lim 1/r(H_hat[+beta2 u_eta])`` (increasing)."""
    eta_max = model.eta_max if eta_max is None else eta_max
    etas, vals, trunc = _radius_ladder(model, 1.0, eta_max, count, resolution_limit)
    return LadderEstimate(float(vals[-1]), etas, vals, float(etas[-1]), trunc)
