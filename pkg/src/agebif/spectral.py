"""Birth profiles, birth operators on traces and their principal spectral radius.

A birth operator maps an age-zero trace ``phi`` to ``int_0^{a_m} b(a) z(a) da``
where ``z`` is the linear march of ``phi`` under a potential ``h``. It is
assembled densely by marching the identity matrix once, with only the
weighted age integral kept in memory.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, TailVanishes, ZeroProfile
from .evolution import _as_field, _march_linear
from .grid import AgeGrid, Eigenpair, SpatialGrid, age_integral

PROFILE_FAMILIES = ("constant", "linear-ramp", "truncated-gaussian-bump")


@dataclass(frozen=True)
class BirthProfile:
    """Normalized age samples of a birth rate.

    ``samples = scale * raw`` and ``int b(a) exp(-lambda1 a) da = 1`` under
    the trapezoidal rule.
    """

    samples: np.ndarray = field(repr=False)
    scale: float
    name: str = "custom"


@dataclass(frozen=True)
class BirthOperator:
    matrix: np.ndarray = field(repr=False)
    profile_id: str
    potential_hash: str


@dataclass(frozen=True)
class SpectralResult:
    radius: float
    eigvec: np.ndarray = field(repr=False)
    iterations: int
    residual: float


def profile_samples(kind: str, ag: AgeGrid, **params) -> np.ndarray:
    """Raw (unnormalized) samples of a built-in profile family.

    ``constant``: ``value`` (default 1).
    ``linear-ramp``: linear from ``start`` (default 0) at age 0 to ``end``
    (default 1) at ``a_m``.
    ``truncated-gaussian-bump``: Gaussian with ``center`` (default
    ``0.7 a_m``) and ``width`` (default ``0.15 a_m``), cut to zero beyond
    ``cutoff`` widths (default 3).
    """
    a = ag.ages
    if kind == "constant":
        return np.full(a.shape, float(params.get("value", 1.0)))
    if kind == "linear-ramp":
        start = float(params.get("start", 0.0))
        end = float(params.get("end", 1.0))
        return start + (end - start) * a / ag.a_m
    if kind == "truncated-gaussian-bump":
        center = float(params.get("center", 0.7 * ag.a_m))
        width = float(params.get("width", 0.15 * ag.a_m))
        cutoff = float(params.get("cutoff", 3.0))
        if width <= 0:
            raise ValueError("bump width must be positive")
        t = (a - center) / width
        return np.where(np.abs(t) <= cutoff, np.exp(-0.5 * t * t), 0.0)
    raise ValueError(f"unknown profile family {kind!r}; expected one of {PROFILE_FAMILIES}")


def normalize_profile(raw, eig: Eigenpair, ag: AgeGrid,
                      name: str = "custom") -> BirthProfile:
    """Scale ``raw`` so that the trapezoidal ``int b e^{-lambda1 a}`` equals 1.

    Raises
    ------
    ZeroProfile
        If the samples are identically zero.
    TailVanishes
        If the profile is not strictly positive on the last 10% of ages.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (ag.n_a + 1,):
        raise ValueError(f"expected {ag.n_a + 1} age samples, got {raw.shape}")
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValueError("birth profile must be finite and nonnegative")
    if not np.any(raw > 0):
        raise ZeroProfile("birth profile vanishes identically")
    tail = ag.ages >= 0.9 * ag.a_m - 1e-12 * ag.a_m
    if not np.all(raw[tail] > 0):
        raise TailVanishes("birth profile must be positive near the maximal age")
    moment = age_integral(ag, raw * np.exp(-eig.lambda1 * ag.ages))
    scale = 1.0 / moment
    samples = scale * raw
    samples.setflags(write=False)
    return BirthProfile(samples, float(scale), name)


def potential_hash(h: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(h, dtype=float).tobytes()).hexdigest()[:16]


def birth_matrix(sg: SpatialGrid, ag: AgeGrid, h, profile: BirthProfile) -> np.ndarray:
    """Dense birth operator for potential ``h``; column ``j`` is the image of
    the ``j``-th unit trace."""
    h = _as_field(ag, sg, h, "h")
    w = profile.samples * ag.weights
    return _march_linear(sg, ag, h, np.eye(sg.n_x), weights=w)


def assemble_birth_operator(sg: SpatialGrid, ag: AgeGrid, h, profile: BirthProfile,
                            which: str | None = None) -> BirthOperator:
    h = _as_field(ag, sg, h, "h")
    M = birth_matrix(sg, ag, h, profile)
    return BirthOperator(M, which or profile.name, potential_hash(h))


def spectral_radius(M, tol: float = 1e-13, maxiter: int = 100_000) -> SpectralResult:
    """Principal radius of a nonnegative matrix by power iteration.

    Starts from the all-ones vector and normalizes in the sup-norm. The
    radius is the sup-norm growth of one application; the result is
    certified by ``||M v - r v||_inf < 1e-10 r``.
    """
    A = M.matrix if isinstance(M, BirthOperator) else np.asarray(M, dtype=float)
    n = A.shape[0]
    x = np.ones(n)
    r, res, best = 0.0, np.inf, np.inf
    stall = 0
    for it in range(1, maxiter + 1):
        y = A @ x
        r = float(np.max(np.abs(y)))
        if r == 0.0:
            raise NoConvergence("birth operator annihilates the positive cone")
        x_new = y / r
        res = float(np.max(np.abs(A @ x_new - r * x_new)))
        x = x_new
        if res <= tol * r:
            break
        if res < 0.5 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall > 50 and res < 1e-10 * r:
                break
    if not res < 1e-10 * r:
        raise NoConvergence(f"power iteration residual {res:.3e} after {it} iterations")
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    return SpectralResult(r, x, it, res)


def radius_of_potential(sg: SpatialGrid, ag: AgeGrid, h, profile: BirthProfile) -> SpectralResult:
    return spectral_radius(birth_matrix(sg, ag, h, profile))


def constant_potential_radius(profile: BirthProfile, ag: AgeGrid, lambda1: float,
                              c: float) -> float:
    """Continuum radius ``int b(a) exp(-(lambda1 + c) a) da`` for a constant
    potential ``c``, with the integral evaluated exactly for a constant
    profile and by the trapezoidal rule otherwise."""
    s = profile.samples
    if np.all(s == s[0]):
        k = lambda1 + c
        if k == 0:
            return float(s[0] * ag.a_m)
        return float(s[0] * (1.0 - np.exp(-k * ag.a_m)) / k)
    return age_integral(ag, s * np.exp(-(lambda1 + c) * ag.ages))
