"""Model bundle: grids, interaction case, coefficients and birth profiles."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import AgeGrid, Eigenpair, SpatialGrid, build_grid, principal_eigenpair
from .spectral import (BirthProfile, SpectralResult, birth_matrix, normalize_profile,
                       profile_samples, spectral_radius)


class InteractionCase(str, Enum):
    """Sign pattern ``(s_u, s_v)`` multiplying ``alpha2 v u`` and ``beta2 u v``."""

    COOPERATIVE = "cooperative"
    COMPETING = "competing"
    PREDATOR_PREY = "predator_prey"

    @property
    def signs(self) -> tuple[int, int]:
        return {"cooperative": (1, 1), "competing": (-1, -1),
                "predator_prey": (-1, 1)}[self.value]


@dataclass
class Model:
    """Everything needed to evaluate the coupled system on a fixed grid.

    The ``cache`` dict holds warm starts for semi-trivial solves; it only
    affects initial guesses, never converged results beyond solver tolerance.
    """

    sg: SpatialGrid
    ag: AgeGrid
    eig: Eigenpair
    b1: BirthProfile
    b2: BirthProfile
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    case: InteractionCase = InteractionCase.COMPETING
    eta_max: float = 1e3
    norm_cap: float = 1e6
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.case = InteractionCase(self.case)
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            val = float(getattr(self, name))
            if not val >= 0:
                raise ValueError(f"{name} must be nonnegative, got {val}")
            setattr(self, name, val)

    @property
    def signs(self) -> tuple[int, int]:
        return self.case.signs

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.beta1, self.beta2)

    def profile(self, which: str) -> BirthProfile:
        if which not in ("b1", "b2"):
            raise ValueError(f"which must be 'b1' or 'b2', got {which!r}")
        return self.b1 if which == "b1" else self.b2

    def zeros(self) -> np.ndarray:
        return np.zeros((self.ag.n_a + 1, self.sg.n_x))

    def birth_matrix(self, h, which: str = "b1") -> np.ndarray:
        return birth_matrix(self.sg, self.ag, h, self.profile(which))

    def radius(self, h, which: str = "b1") -> SpectralResult:
        """Principal radius of the birth operator with potential ``h``."""
        return spectral_radius(self.birth_matrix(h, which))

    def fingerprint(self) -> str:
        """Stable hash of everything that determines results."""
        desc = {
            "grid": [self.sg.L, self.sg.n_x, self.ag.a_m, self.ag.n_a],
            "coeffs": list(self.coeffs), "case": self.case.value,
            "b1": hashlib.sha256(self.b1.samples.tobytes()).hexdigest(),
            "b2": hashlib.sha256(self.b2.samples.tobytes()).hexdigest(),
            "eta_max": self.eta_max, "norm_cap": self.norm_cap,
        }
        blob = json.dumps(desc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_case(self, case) -> "Model":
        """Same grids and profiles under another sign pattern (fresh cache)."""
        return Model(self.sg, self.ag, self.eig, self.b1, self.b2, self.alpha1,
                     self.alpha2, self.beta1, self.beta2, InteractionCase(case),
                     self.eta_max, self.norm_cap)


def make_model(case="competing", L: float = 1.0, n_x: int = 64, a_m: float = 1.0,
               n_a: int = 128, alpha1: float = 1.0, alpha2: float = 1.0,
               beta1: float = 1.0, beta2: float = 1.0, b1="constant", b2="constant",
               b1_params: dict | None = None, b2_params: dict | None = None,
               eta_max: float = 1e3, norm_cap: float = 1e6) -> Model:
    """Build a model with normalized profiles.

    ``b1``/``b2`` may be a family name (see :func:`profile_samples`) or an
    array of raw age samples.
    """
    sg, ag = build_grid(L, n_x, a_m, n_a)
    eig = principal_eigenpair(sg)

    def _profile(spec, params):
        if isinstance(spec, str):
            raw = profile_samples(spec, ag, **(params or {}))
            return normalize_profile(raw, eig, ag, name=spec)
        return normalize_profile(np.asarray(spec, dtype=float), eig, ag)

    return Model(sg, ag, eig, _profile(b1, b1_params), _profile(b2, b2_params),
                 alpha1, alpha2, beta1, beta2, InteractionCase(case), eta_max, norm_cap)
