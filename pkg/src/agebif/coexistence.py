"""Coexistence states of the coupled system and their continuation in ``eta``.

The unknowns are the two age-zero traces ``(U, V)``. For fixed ``(eta, xi)``
the trace map is

    F(U, V) = (U - eta int b1 u da,  V - xi int b2 v da),

with ``(u, v)`` the coupled march from ``(U, V)``. The march is monolithic
(one block-banded solve per age step), so the map is evaluated without inner
splitting iterations and its finite-difference Jacobian costs one batched
march.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad
from scipy.linalg import lu_factor, lu_solve

from .bifurcation import (BifurcationPoint, Tangent, find_eta0, find_eta1, find_eta2,
                          find_eta3)
from .errors import NewtonDivergence, NoBracket, NotUnbounded
from .evolution import _march_coupled
from .grid import AgeGrid
from .model import InteractionCase, Model
from .semitrivial import RESOLUTION_LIMIT, semitrivial_field

NEWTON_TOL = 1e-10
ROUNDOFF_TOL = 1e-13
COLLAPSE_TOL = 1e-10
NEAR_ZERO = 1e-8
# refresh the chord Jacobian when an iteration contracts the defect less than this
CHORD_CONTRACTION = 0.05


@dataclass(frozen=True)
class CoexistencePoint:
    """A solution of the coupled renewal system.

    ``status`` is ``"coexistence"`` when both traces are positive, otherwise
    ``"collapsed_u"``, ``"collapsed_v"`` (that component is exactly zero, the
    other is the semi-trivial state) or ``"trivial"``.
    """

    eta: float
    xi: float
    u: np.ndarray = dc_field(repr=False)
    v: np.ndarray = dc_field(repr=False)
    U0: np.ndarray = dc_field(repr=False)
    V0: np.ndarray = dc_field(repr=False)
    newton_residual: float
    sp_residuals: tuple[float, float]
    status: str = "coexistence"
    iterations: int = 0

    @property
    def collapsed(self) -> bool:
        return self.status != "coexistence"

    @property
    def u_sup(self) -> float:
        return float(np.max(np.abs(self.u)))

    @property
    def v_sup(self) -> float:
        return float(np.max(np.abs(self.v)))


@dataclass(frozen=True)
class Endpoint:
    """How a branch ended.

    ``kind`` is one of ``JoinsB1``, ``JoinsB2``, ``ReachedEtaMax``,
    ``ReachedNormCap``, ``StepFailure``. For joins, ``eta_hat`` is the
    interpolated crossing and ``reference`` the independently located
    bifurcation value it was matched against (if any).
    """

    kind: str
    eta_hat: float | None = None
    reason: str = ""
    reference: float | None = None
    reference_kind: str | None = None

    @property
    def relative_mismatch(self) -> float | None:
        if self.eta_hat is None or self.reference is None:
            return None
        return abs(self.eta_hat - self.reference) / abs(self.reference)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "eta_hat": self.eta_hat, "reason": self.reason,
                "reference": self.reference, "reference_kind": self.reference_kind}


@dataclass
class Branch:
    start: BifurcationPoint
    points: list[CoexistencePoint]
    endpoint: Endpoint
    arclength_steps: int
    first_step_iterations: int
    max_secant_angle: float = 0.0
    max_step_ratio: float = 0.0

    @property
    def etas(self) -> np.ndarray:
        return np.array([p.eta for p in self.points])


@dataclass(frozen=True)
class ContinuationControls:
    """Step control for :func:`continue_branch`.

    Distances are measured in the scaled metric: ``eta`` unscaled, each trace
    divided by its sup-norm at the current point and RMS-normalized.
    """

    eps0: float = 1e-3
    ds0: float = 0.05
    ds_max: float = 1.0
    ds_min_halvings: int = 10
    grow: float = 1.3
    easy_iters: int = 3
    easy_steps: int = 3
    max_newton: int = 8
    max_steps: int = 400
    max_angle_deg: float = 60.0
    eta_max: float | None = None
    norm_cap: float | None = None
    resolution_limit: float = RESOLUTION_LIMIT
    match_endpoint: bool = True


def _weights(model: Model):
    w = model.ag.weights
    return model.b1.samples * w, model.b2.samples * w


def coupled_images(model: Model, U: np.ndarray, V: np.ndarray):
    """Batched ``(int b1 u, int b2 v)`` for trace columns ``U``, ``V``."""
    return _march_coupled(model.sg, model.ag, model.coeffs, model.signs, U, V,
                          weights=_weights(model))


def trace_residual(model: Model, eta: float, xi: float, U, V) -> np.ndarray:
    """Stacked defect ``(U - eta int b1 u, V - xi int b2 v)``."""
    U = np.asarray(U, float)[:, None]
    V = np.asarray(V, float)[:, None]
    iu, iv = coupled_images(model, U, V)
    return np.concatenate([U[:, 0] - eta * iu[:, 0], V[:, 0] - xi * iv[:, 0]])


def _jacobian(model: Model, eta: float, xi: float, W: np.ndarray):
    """Forward-difference Jacobian of the trace map in ``(U, V)``, the
    analytic ``eta`` column, and the base defect."""
    n = model.sg.n_x
    step = 1e-6 * (1.0 + float(np.max(np.abs(W))))
    cols = np.repeat(W[:, None], 2 * n + 1, axis=1)
    cols[:, 1:] += step * np.eye(2 * n)
    iu, iv = coupled_images(model, cols[:n], cols[n:])
    F = np.concatenate([cols[:n] - eta * iu, cols[n:] - xi * iv])
    J = (F[:, 1:] - F[:, :1]) / step
    d_eta = np.concatenate([-iu[:, 0], np.zeros(n)])
    return J, d_eta, F[:, 0]


def _fields(model: Model, U, V):
    fu, fv = _march_coupled(model.sg, model.ag, model.coeffs, model.signs,
                            np.asarray(U, float)[:, None], np.asarray(V, float)[:, None])
    return fu[:, :, 0], fv[:, :, 0]


def spectral_residuals(model: Model, eta: float, xi: float, u, v) -> tuple[float, float]:
    """``(|eta r(H[a1 u - s_u a2 v]) - 1|, |xi r(H_hat[b1 v - s_v b2 u]) - 1|)``.

    A component that vanishes identically gets ``nan`` (its condition does
    not apply).
    """
    a1, a2, b1, b2 = model.coeffs
    s_u, s_v = model.signs
    ru = rv = float("nan")
    if np.max(np.abs(u)) > 0:
        ru = abs(eta * model.radius(a1 * u - s_u * a2 * v, "b1").radius - 1.0)
    if np.max(np.abs(v)) > 0:
        rv = abs(xi * model.radius(b1 * v - s_v * b2 * u, "b2").radius - 1.0)
    return ru, rv


def _make_point(model, eta, xi, U, V, res, status, iters, spectral=True):
    u, v = _fields(model, U, V)
    sp = spectral_residuals(model, eta, xi, u, v) if spectral else (float("nan"),) * 2
    for arr in (u, v):
        arr.setflags(write=False)
    return CoexistencePoint(float(eta), float(xi), u, v, u[0].copy(), v[0].copy(),
                            float(res), sp, status, iters)


def _status(U, V) -> str:
    su, sv = float(np.max(np.abs(U))), float(np.max(np.abs(V)))
    if su < COLLAPSE_TOL and sv < COLLAPSE_TOL:
        return "trivial"
    if sv < COLLAPSE_TOL:
        return "collapsed_v"
    if su < COLLAPSE_TOL:
        return "collapsed_u"
    return "coexistence"


def solve_coexistence(model: Model, eta: float, xi: float, guess,
                      picard_sweeps: int = 30, tol: float = NEWTON_TOL,
                      maxiter: int = 40) -> CoexistencePoint:
    """Solve the coupled trace system at fixed ``(eta, xi)`` from a guess.

    A few undamped Picard sweeps ``(U, V) <- (eta int b1 u, xi int b2 v)``
    precede Newton with a finite-difference Jacobian. A component whose trace
    falls below ``1e-10`` is set to zero and the point is reported with a
    collapsed status rather than as an error.

    Raises
    ------
    NewtonDivergence
        If Newton fails to reach the tolerance.
    """
    n = model.sg.n_x
    U = np.maximum(np.asarray(guess[0], float), 0.0)
    V = np.maximum(np.asarray(guess[1], float), 0.0)
    if np.max(U) == 0 and np.max(V) == 0:
        return _make_point(model, eta, xi, U, V, 0.0, "trivial", 0)
    for _ in range(picard_sweeps):
        iu, iv = coupled_images(model, U[:, None], V[:, None])
        U, V = eta * iu[:, 0], xi * iv[:, 0]
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise NewtonDivergence("Picard sweeps blew up")
        U = np.where(np.abs(U) < COLLAPSE_TOL * 1e-2, 0.0, U)
        V = np.where(np.abs(V) < COLLAPSE_TOL * 1e-2, 0.0, V)
    W = np.concatenate([U, V])
    res = np.inf
    for it in range(1, maxiter + 1):
        J, _, F = _jacobian(model, eta, xi, W)
        res = float(np.max(np.abs(F)))
        if res <= tol:
            break
        d = np.linalg.solve(J, F)
        W_new = W - d
        # keep the iterate in the positive cone; components hitting zero collapse
        neg = (W_new < 0) & (d > 0)
        if np.any(neg):
            t = float(np.min(np.where(neg, W / np.where(d > 0, d, 1.0), np.inf)))
            t = min(1.0, max(t, 0.0))
            W_new = W - t * d
            W_new[np.abs(W_new) < COLLAPSE_TOL * 1e-2] = 0.0
            W_new = np.maximum(W_new, 0.0)
        W = W_new
        W[:n] = np.where(np.max(W[:n]) < COLLAPSE_TOL, 0.0, W[:n])
        W[n:] = np.where(np.max(W[n:]) < COLLAPSE_TOL, 0.0, W[n:])
    else:
        F = trace_residual(model, eta, xi, W[:n], W[n:])
        res = float(np.max(np.abs(F)))
        if res > tol:
            raise NewtonDivergence(f"coupled Newton stalled at residual {res:.3e}")
    U, V = W[:n], W[n:]
    status = _status(U, V)
    if status == "collapsed_v":
        V = np.zeros(n)
    elif status == "collapsed_u":
        U = np.zeros(n)
    elif status == "trivial":
        U, V = np.zeros(n), np.zeros(n)
    res = float(np.max(np.abs(trace_residual(model, eta, xi, U, V))))
    return _make_point(model, eta, xi, U, V, res, status, it)


def _augmented(J, d_eta, row):
    m = J.shape[0]
    A = np.empty((m + 1, m + 1))
    A[:m, 0] = d_eta
    A[:m, 1:] = J
    A[m] = row
    return lu_factor(A, check_finite=False)


def _corrector(model, xi, X, constraint, max_iter, tol=NEWTON_TOL, lu=None):
    """Chord-Newton on ``F(eta, W) = 0`` plus one linear constraint
    ``row . X = c``.

    ``lu`` may carry a factorized augmented Jacobian from a nearby point; it
    is refreshed whenever an iteration contracts the defect by less than a
    factor 20. Returns ``(X, iterations, residual, lu)`` or ``None``.
    """
    row, c = constraint
    n = (X.size - 1) // 2
    res_prev = np.inf
    fresh = False
    if lu is None:
        J, d_eta, F = _jacobian(model, X[0], xi, X[1:])
        lu, fresh = _augmented(J, d_eta, row), True
    else:
        F = trace_residual(model, X[0], xi, X[1:1 + n], X[1 + n:])
    for it in range(1, max_iter + 1):
        g = float(row @ X - c)
        res = float(np.max(np.abs(F)))
        if not np.isfinite(res):
            return None
        if res <= tol and abs(g) <= 1e-12 * max(1.0, abs(c)):
            return X, it - 1, res, lu
        if res > CHORD_CONTRACTION * res_prev and not fresh:
            J, d_eta, F = _jacobian(model, X[0], xi, X[1:])
            lu, fresh = _augmented(J, d_eta, row), True
        elif (res > CHORD_CONTRACTION * res_prev
              and res <= ROUNDOFF_TOL * max(1.0, float(np.max(np.abs(X))))):
            # fresh Jacobian no longer helps: round-off floor reached
            return X, it - 1, res, lu
        else:
            fresh = False
        dX = lu_solve(lu, np.concatenate([F, [g]]), check_finite=False)
        X = X - dX
        res_prev = res
        if not np.all(np.isfinite(X)):
            return None
        F = trace_residual(model, X[0], xi, X[1:1 + n], X[1 + n:])
    res = float(np.max(np.abs(F)))
    g = float(row @ X - c)
    if res <= tol and abs(g) <= 1e-12 * max(1.0, abs(c)):
        return X, max_iter, res, lu
    return None


def _start_state(model: Model, tangent: Tangent) -> np.ndarray:
    pt = tangent.point
    n = model.sg.n_x
    if pt.base == "B1":
        U = semitrivial_field(model, pt.eta, "b1")[0]
        V = np.zeros(n)
    else:
        U = np.zeros(n)
        V = semitrivial_field(model, pt.xi, "b2")[0]
    return np.concatenate([[pt.eta], U, V])


def first_step(model: Model, tangent: Tangent, eps: float | None = None,
               max_iter: int = 8):
    """Leave the semi-trivial state along the tangent by ``eps``.

    The projection of ``(U, V) - (U_0, V_0)`` onto the normalized tangent
    traces is pinned at ``eps``; ``eta`` is free. Returns
    ``(X0, X1, iterations, residual)``.

    Raises
    ------
    NewtonDivergence
        If the corrector does not converge.
    """
    eps = ContinuationControls.eps0 if eps is None else eps
    X0 = _start_state(model, tangent)
    t = np.concatenate([tangent.Phi0, tangent.Psi0])
    t = t / np.linalg.norm(t)
    row = np.concatenate([[0.0], t])
    X_pred = X0 + eps * row
    out = _corrector(model, tangent.point.xi, X_pred, (row, float(row @ X0) + eps), max_iter)
    if out is None:
        raise NewtonDivergence("first continuation step did not converge")
    X1, iters, res, _ = out
    return X0, X1, iters, res


def _scale_vector(X: np.ndarray, n: int) -> np.ndarray:
    su = max(float(np.max(np.abs(X[1:1 + n]))), 1e-6)
    sv = max(float(np.max(np.abs(X[1 + n:]))), 1e-6)
    rms = math.sqrt(n)
    return np.concatenate([[1.0], np.full(n, 1.0 / (su * rms)), np.full(n, 1.0 / (sv * rms))])


def _amplitude(trace: np.ndarray, ref: np.ndarray) -> float:
    nrm = np.linalg.norm(ref)
    return float(trace @ ref / nrm) if nrm > 0 else 0.0


def _match_reference(model: Model, xi: float, kind: str):
    """Independent bifurcation value for a join endpoint, or ``(None, None)``."""
    if kind != "JoinsB1":
        finder = find_eta1 if model.signs[0] > 0 else find_eta2
        pt = finder(model, xi)
        return pt.eta, pt.kind
    try:
        pt = find_eta0(model, xi) if model.signs[1] > 0 else find_eta3(model, xi)
    except NoBracket:
        return None, None
    return pt.eta, pt.kind


def continue_branch(model: Model, tangent: Tangent,
                    controls: ContinuationControls | None = None) -> Branch:
    """Pseudo-arclength continuation of the coexistence branch leaving the
    bifurcation point of ``tangent``.

    After the first pinned step, each step uses a secant predictor and an
    arclength constraint in the scaled metric. Steps are halved on corrector
    failure, on overly long or sharply turning secants, and grown by 1.3
    after three easy steps in a row. The run ends when a trace crosses zero
    (a join with a semi-trivial branch, with the crossing ``eta`` obtained by
    linear interpolation of the signed amplitude), when ``eta`` leaves
    ``(0, eta_max]``, when a sup-norm exceeds ``norm_cap`` or the age grid no
    longer resolves the state, or when ten consecutive halvings fail.
    """
    c = controls or ContinuationControls()
    eta_max = model.eta_max if c.eta_max is None else c.eta_max
    norm_cap = model.norm_cap if c.norm_cap is None else c.norm_cap
    xi = tangent.point.xi
    n = model.sg.n_x
    a1, a2, b1, b2 = model.coeffs
    load_u, load_v = max(a1, b2), max(b1, a2)

    X0, X1, it0, res1 = first_step(model, tangent, c.eps0, c.max_newton)
    points = [_make_point(model, X1[0], xi, X1[1:1 + n], X1[1 + n:], res1,
                          "coexistence", it0)]
    X_prev, X_cur = X0, X1
    lu_prev = None
    ds = c.ds0
    easy = 0
    halvings = 0
    steps = 0
    max_angle = 0.0
    max_ratio = 0.0
    endpoint = None
    cos_limit = math.cos(math.radians(c.max_angle_deg))
    while endpoint is None:
        if steps >= c.max_steps:
            endpoint = Endpoint("StepFailure", reason="max_steps")
            break
        D = _scale_vector(X_cur, n)
        sec = D * (X_cur - X_prev)
        tau = sec / np.linalg.norm(sec)
        row = tau * D
        X_pred = X_cur + ds * tau / D
        out = _corrector(model, xi, X_pred, (row, float(row @ X_cur) + ds),
                         c.max_newton, lu=lu_prev)
        accepted = False
        if out is not None:
            X_new, iters, res, lu_new = out
            step_vec = D * (X_new - X_cur)
            length = float(np.linalg.norm(step_vec))
            cosang = float(step_vec @ tau) / length if length > 0 else -1.0
            if length <= 2.0 * ds and cosang > cos_limit:
                accepted = True
        if not accepted:
            lu_prev = None
            ds *= 0.5
            easy = 0
            halvings += 1
            if halvings >= c.ds_min_halvings:
                endpoint = Endpoint("StepFailure", reason="step underflow")
            continue
        halvings = 0
        steps += 1
        max_angle = max(max_angle, math.degrees(math.acos(min(1.0, max(-1.0, cosang)))))
        max_ratio = max(max_ratio, length / ds)
        U_new, V_new = X_new[1:1 + n], X_new[1 + n:]
        U_cur, V_cur = X_cur[1:1 + n], X_cur[1 + n:]
        # joins: a trace reaches zero or turns negative
        for kind, T_new, T_cur in (("JoinsB1", V_new, V_cur), ("JoinsB2", U_new, U_cur)):
            if np.min(T_new) <= 0.0 or np.max(np.abs(T_new)) < NEAR_ZERO:
                a_cur = _amplitude(T_cur, T_cur)
                a_new = _amplitude(T_new, T_cur)
                frac = a_cur / (a_cur - a_new) if a_cur != a_new else 1.0
                frac = min(max(frac, 0.0), 1.0)
                eta_hat = float(X_cur[0] + frac * (X_new[0] - X_cur[0]))
                ref = ref_kind = None
                if c.match_endpoint:
                    ref, ref_kind = _match_reference(model, xi, kind)
                endpoint = Endpoint(kind, eta_hat, "trace crossed zero", ref, ref_kind)
                break
        if endpoint is not None:
            break
        eta_new = float(X_new[0])
        if eta_new > eta_max:
            endpoint = Endpoint("ReachedEtaMax", reason=f"eta > {eta_max:g}")
            break
        if eta_new <= 0.0:
            endpoint = Endpoint("ReachedEtaMax", reason="eta <= 0")
            break
        point = _make_point(model, eta_new, xi, U_new, V_new, res, "coexistence", iters)
        sup_u, sup_v = point.u_sup, point.v_sup
        if max(sup_u, sup_v) > norm_cap:
            endpoint = Endpoint("ReachedNormCap", reason=f"sup-norm > {norm_cap:g}")
            break
        if model.ag.da * max(load_u * sup_u, load_v * sup_v) > c.resolution_limit:
            endpoint = Endpoint("ReachedNormCap", reason="resolution")
            break
        points.append(point)
        X_prev, X_cur = X_cur, X_new
        lu_prev = lu_new
        if iters <= c.easy_iters:
            easy += 1
            if easy >= c.easy_steps:
                ds = min(ds * c.grow, c.ds_max)
                easy = 0
        else:
            easy = 0
    return Branch(tangent.point, points, endpoint, steps, it0, max_angle, max_ratio)


@dataclass(frozen=True)
class UnboundednessReport:
    eta_grows: bool
    u_grows: bool
    v_grows: bool
    condition_B: bool
    s: float
    endpoint: str


def condition_B(samples: np.ndarray, ag: AgeGrid, s: float = 1.0,
                levels: int = 30, ratio: float = 0.75) -> bool:
    """Integrability of ``b(a) / (1 - e^{-s a})`` at ``a = 0``.

    Refinement study: the contributions of the dyadic shells
    ``[a_m 2^{-j-1}, a_m 2^{-j}]`` are computed by quadrature of the linear
    interpolant of ``b``; the integral converges when they shrink
    geometrically.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    samples = np.asarray(samples, float)

    def f(a):
        return np.interp(a, ag.ages, samples) / -math.expm1(-s * a)

    shells = []
    for j in range(levels):
        hi = ag.a_m * 2.0 ** (-j)
        lo = 0.5 * hi
        val, _ = quad(f, lo, hi, limit=200)
        shells.append(val)
    last, prev = abs(shells[-1]), abs(shells[-2])
    total = sum(abs(x) for x in shells)
    return bool(last <= ratio * prev and last <= 1e-6 * max(total, 1e-300))


def classify_unboundedness(branch: Branch, model: Model, s: float = 1.0,
                           tail: float = 0.3) -> UnboundednessReport:
    """Which of ``eta``, ``||u||``, ``||v||`` grow along the branch tail.

    Raises
    ------
    NotUnbounded
        For join endpoints or step failures.
    """
    if branch.endpoint.kind not in ("ReachedEtaMax", "ReachedNormCap"):
        raise NotUnbounded(f"branch ended with {branch.endpoint.kind}")
    pts = branch.points
    k = max(2, int(math.ceil(tail * len(pts))))
    seg = pts[-k:]

    def grows(vals):
        return bool(vals[-1] > vals[0] * (1 + 1e-3) and vals[-1] >= max(vals) * (1 - 1e-9))

    return UnboundednessReport(
        grows([p.eta for p in seg]), grows([p.u_sup for p in seg]),
        grows([p.v_sup for p in seg]), condition_B(model.b2.samples, model.ag, s), s,
        branch.endpoint.kind)


@dataclass(frozen=True)
class ResidualReport:
    sp_residuals: tuple[float, float]
    newton_residual: float
    u_sup_over_eta: float
    v_sup: float
    order_violation: float
    order_relation: str


def residual_report(model: Model, point: CoexistencePoint) -> ResidualReport:
    """Fresh spectral residuals and a-priori norm diagnostics.

    ``order_violation`` is the largest violation of the comparison with the
    semi-trivial states expected for the case: ``u >= u_eta`` (cooperative),
    ``u <= u_eta`` and ``v <= v_xi`` (competing), ``v >= v_xi`` and
    ``u <= u_eta`` (predator-prey); zero or negative means it holds.
    """
    sp = spectral_residuals(model, point.eta, point.xi, point.u, point.v)
    u_eta = semitrivial_field(model, point.eta, "b1")
    v_xi = semitrivial_field(model, point.xi, "b2")
    case = model.case
    if case is InteractionCase.COOPERATIVE:
        viol = float(np.max(u_eta - point.u))
        rel = "u >= u_eta"
    elif case is InteractionCase.COMPETING:
        viol = float(max(np.max(point.u - u_eta), np.max(point.v - v_xi)))
        rel = "u <= u_eta, v <= v_xi"
    else:
        viol = float(max(np.max(point.u - u_eta), np.max(v_xi - point.v)))
        rel = "u <= u_eta, v >= v_xi"
    return ResidualReport(sp, point.newton_residual, point.u_sup / (point.eta + 1.0),
                          point.v_sup, viol, rel)
