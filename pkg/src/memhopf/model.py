"""Predator-prey model variants, steady state, linearization, derivatives.

The system lives on the interval (0, ell*pi) with no-flux boundaries:

    du/dt = d11*Lap(u) + u*(1-u) - beta*u^2*v/(u^2 + m*v^2)
    dv/dt = d22*Lap(v) - d21*(v*u_x(t-tau))_x + gamma*v*(1 - v/U)

where the ratio argument ``U`` is ``u(t)`` for the memory-only variant
and the delayed density ``u(t-tau)`` when a gestation delay is present.
The cross-diffusion term transports predators along the remembered prey
gradient with rate ``d21``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .config import MODEL_KEYS, get_float, get_str, parse_kv
from .errors import ConfigError, DivisionHazardError, ParameterError

#: Ratio arguments at or below this value trip the division-hazard guard.
UNDERFLOW_THRESHOLD = 1e-12


class Variant(enum.Enum):
    """Which equation carries the delay besides the cross-diffusion flux."""

    MEMORY_ONLY = "memory_only"
    MEMORY_PLUS_GESTATION = "memory_plus_gestation"


@dataclass(frozen=True)
class ModelParams:
    """Biological and diffusion parameters.

    Parameters
    ----------
    beta : float
        Predation rate, ``0 < beta < m + 1`` (positivity of the steady state).
    m : float
        Shape parameter of the ratio-dependent functional response.
    gamma : float
        Predator growth rate.
    d11, d22 : float
        Random (Fickian) diffusion rates of prey and predator.
    d21 : float
        Memory-based cross-diffusion rate.
    ell : float
        Domain scale; the domain is the interval (0, ell*pi).
    variant : Variant
        Placement of the reaction delay.
    """

    beta: float
    m: float
    gamma: float
    d11: float
    d22: float
    d21: float
    ell: float
    variant: Variant = Variant.MEMORY_ONLY

    def __post_init__(self):
        for name in ("beta", "m", "gamma", "ell"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("d11", "d22", "d21"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if not self.beta < self.m + 1:
            raise ParameterError(
                "no positive steady state: requires beta < m + 1 "
                f"(beta={self.beta}, m={self.m})"
            )


@dataclass(frozen=True)
class SteadyState:
    u_star: float
    v_star: float


@dataclass(frozen=True)
class Linearization:
    """Jacobian blocks of the reaction at the steady state.

    ``a_ij`` differentiates with respect to the instantaneous fields,
    ``b_ij`` with respect to the delayed fields.  ``d1`` is the random
    diffusion block diag(d11, d22); ``d2`` the cross-diffusion block
    whose only entry couples the delayed prey Laplacian into the
    predator equation with weight ``-d21*v_star``.
    """

    a11: float
    a12: float
    a21: float
    a22: float
    b11: float
    b12: float
    b21: float
    b22: float
    u_star: float
    v_star: float
    params: ModelParams

    @property
    def a1(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def a2(self) -> np.ndarray:
        return np.array([[self.b11, self.b12], [self.b21, self.b22]])

    @property
    def d1(self) -> np.ndarray:
        return np.diag([self.params.d11, self.params.d22])

    @property
    def d2(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [-self.params.d21 * self.v_star, 0.0]])

    @property
    def det_a1(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21


def steady_state(params: ModelParams) -> SteadyState:
    """Positive constant steady state ``u* = v* = 1 - beta/(m+1)``."""
    s = 1.0 - params.beta / (params.m + 1.0)
    return SteadyState(s, s)


def linearize(params: ModelParams) -> Linearization:
    """Closed-form Jacobian entries at the steady state."""
    ss = steady_state(params)
    mp1 = params.m + 1.0
    a11 = 2.0 * params.beta / mp1**2 - 1.0
    a12 = params.beta * (params.m - 1.0) / mp1**2
    if params.variant is Variant.MEMORY_ONLY:
        a21, a22 = params.gamma, -params.gamma
        b21 = 0.0
    else:
        a21, a22 = 0.0, -params.gamma
        b21 = params.gamma
    return Linearization(
        a11=a11, a12=a12, a21=a21, a22=a22,
        b11=0.0, b12=0.0, b21=b21, b22=0.0,
        u_star=ss.u_star, v_star=ss.v_star, params=params,
    )


# ---------------------------------------------------------------------------
# Partial derivatives of the reaction terms.
# ---------------------------------------------------------------------------

def prey_partials(beta: float, m: float, u: float, v: float) -> dict:
    """Partials of f(u, v) = u(1-u) - beta*u^2*v/(u^2+m*v^2), orders 1-3.

    Keys are ``(i, j)`` for d^(i+j) f / du^i dv^j.
    """
    d = u * u + m * v * v
    g3 = 3 * u * u - m * v * v  # shared quadratic factor of the 2nd order terms
    return {
        (1, 0): 1 - 2 * u - 2 * beta * m * u * v**3 / d**2,
        (0, 1): -beta * u * u * (u * u - m * v * v) / d**2,
        (2, 0): -2 + 2 * beta * m * v**3 * g3 / d**3,
        (1, 1): -2 * beta * m * u * v * v * g3 / d**3,
        (0, 2): 2 * beta * m * u * u * v * g3 / d**3,
        (3, 0): -24 * beta * m * u * v**3 * (u * u - m * v * v) / d**4,
        (2, 1): 2 * beta * m * v * v * (m * m * v**4 - 14 * m * u * u * v * v + 9 * u**4) / d**4,
        (1, 2): -4 * beta * m * u * v * (m * m * v**4 - 8 * m * u * u * v * v + 3 * u**4) / d**4,
        (0, 3): 6 * beta * m * u * u * (m * m * v**4 - 6 * m * u * u * v * v + u**4) / d**4,
    }


def prey_partials_published(beta: float, m: float, u: float, v: float) -> dict:
    """The coefficient table as published in the source literature.

    Two mixed entries, (1, 1) and (1, 2), differ from the exact partial
    derivatives of f (they fail a finite-difference check); the rest
    coincide with :func:`prey_partials` on the diagonal u = v.  This
    table exists solely to reproduce reported normal-form values; it is
    never the default.  First-order entries are not part of the
    published table and are taken from the exact forms.
    """
    d = u * u + m * v * v
    exact = prey_partials(beta, m, u, v)
    return {
        (1, 0): exact[(1, 0)],
        (0, 1): exact[(0, 1)],
        (2, 0): -2 - 2 * beta * v / d + 10 * beta * u * u * v / d**2 - 8 * beta * u**4 * v / d**3,
        (1, 1): -2 * beta * u / d + 4 * beta * m * u * v * v / d**2,
        (0, 2): 6 * beta * m * u * u * v / d**2 - 8 * beta * m * m * u * u * v**3 / d**3,
        (3, 0): 24 * beta * u * v / d**2 - 72 * beta * u**3 * v / d**3 + 48 * beta * u**5 * v / d**4,
        (2, 1): (-2 * beta / d + 4 * beta * m * v * v / d**2 + 10 * beta * u * u / d**2
                 - 40 * beta * m * u * u * v * v / d**3 - 8 * beta * u**4 / d**3
                 + 48 * beta * m * u**4 * v * v / d**4),
        (1, 2): 12 * beta * m * u * v / d**2 - 16 * beta * m * m * u * v**3 / d**3,
        (0, 3): (6 * beta * m * u * u / d**2 - 48 * beta * m * m * u * u * v * v / d**3
                 + 48 * beta * m**3 * u * u * v**4 / d**4),
    }


def predator_partials(gamma: float, v: float, w: float) -> dict:
    """Partials of g(v, w) = gamma*v*(1 - v/w), orders 1-3.

    ``w`` is the prey density in the ratio (instantaneous or delayed,
    depending on the variant).  Keys ``(i, j)`` give
    d^(i+j) g / dw^i dv^j.
    """
    return {
        (1, 0): gamma * v * v / w**2,
        (0, 1): gamma * (1 - 2 * v / w),
        (2, 0): -2 * gamma * v * v / w**3,
        (1, 1): 2 * gamma * v / w**2,
        (0, 2): -2 * gamma / w,
        (3, 0): 6 * gamma * v * v / w**4,
        (2, 1): -4 * gamma * v / w**3,
        (1, 2): 2 * gamma / w**2,
        (0, 3): 0.0,
    }


@dataclass(frozen=True)
class DerivativeTable:
    """Taylor coefficients of the reaction at the steady state, times tau_c.

    ``coeffs[(j1, j2, j3)]`` is the pair of raw partial derivatives
    (prey component, predator component) with respect to
    ``u(0)^j1 v(0)^j2 u(-1)^j3``, each multiplied by ``tau_c``.
    Coefficients carrying a power of the delay perturbation (the fourth
    index in the general expansion) vanish identically for both model
    variants and are reported as zero.
    """

    variant: Variant
    tau_c: float
    coeffs: dict = field(repr=False)

    def coeff(self, j1: int, j2: int, j3: int, j4: int = 0) -> np.ndarray:
        if j4 > 0:
            return np.zeros(2)
        return np.asarray(self.coeffs.get((j1, j2, j3), (0.0, 0.0)), dtype=float)

    # Two-argument shorthand used by the memory-only route: the pair for
    # the monomial u(0)^i v(0)^j.
    def f_pair(self, i: int, j: int) -> np.ndarray:
        return self.coeff(i, j, 0)


def derivative_table(params: ModelParams, tau_c: float,
                     source: str = "analytic") -> DerivativeTable:
    """Build the order-2/3 reaction coefficient table scaled by ``tau_c``.

    Parameters
    ----------
    params : ModelParams
    tau_c : float
        Critical delay; the time rescaling multiplies every coefficient.
    source : str
        ``"analytic"`` (default) uses exact closed-form partials,
        validated against a finite-difference oracle.  ``"published"``
        substitutes the prey table exactly as printed in the source
        literature (see :func:`prey_partials_published`).
    """
    if tau_c <= 0:
        raise ParameterError("tau_c must be positive")
    if source not in ("analytic", "published"):
        raise ParameterError(f"unknown coefficient source {source!r}")
    ss = steady_state(params)
    s = ss.u_star
    prey = (prey_partials if source == "analytic" else prey_partials_published)(
        params.beta, params.m, s, s)
    pred = predator_partials(params.gamma, s, s)
    coeffs = {}
    for order in (2, 3):
        for j1 in range(order + 1):
            for j2 in range(order + 1 - j1):
                j3 = order - j1 - j2
                c1 = prey[(j1, j2)] if j3 == 0 else 0.0
                if params.variant is Variant.MEMORY_ONLY:
                    c2 = pred[(j1, j2)] if j3 == 0 else 0.0
                else:
                    c2 = pred[(j3, j2)] if j1 == 0 else 0.0
                if c1 != 0.0 or c2 != 0.0:
                    coeffs[(j1, j2, j3)] = (tau_c * c1, tau_c * c2)
    return DerivativeTable(variant=params.variant, tau_c=tau_c, coeffs=coeffs)


def reaction_rhs(u, v, u_delayed, params: ModelParams):
    """Pointwise reaction terms (f, g); accepts scalars or arrays.

    The predator ratio uses ``u`` for the memory-only variant and
    ``u_delayed`` when the gestation delay is present.  Raises
    :class:`DivisionHazardError` if the ratio argument is at or below
    the underflow threshold.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u_delayed = np.asarray(u_delayed, dtype=float)
    ratio_arg = u if params.variant is Variant.MEMORY_ONLY else u_delayed
    if np.any(ratio_arg <= UNDERFLOW_THRESHOLD):
        raise DivisionHazardError(
            "prey density in the predator ratio fell below "
            f"{UNDERFLOW_THRESHOLD:g}"
        )
    f = u * (1.0 - u) - params.beta * u * u * v / (u * u + params.m * v * v)
    g = params.gamma * v * (1.0 - v / ratio_arg)
    return f, g


# ---------------------------------------------------------------------------
# Config loading.
# ---------------------------------------------------------------------------

def load_model_params(text: str) -> ModelParams:
    """Construct :class:`ModelParams` from flat ``key=value`` config text.

    Only the model keys are consumed here; dotted keys belong to command
    blocks and are ignored.  Unknown bare keys are errors.
    """
    entries = parse_kv(text)
    model_entries = {k: v for k, v in entries.items() if "." not in k}
    for key, (_, lineno) in model_entries.items():
        if key not in MODEL_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
    variant_name = get_str(model_entries, "variant",
                           choices={v.value for v in Variant})
    kwargs = {k: get_float(model_entries, k) for k in MODEL_KEYS if k != "variant"}
    try:
        return ModelParams(variant=Variant(variant_name), **kwargs)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def wave_factor(params: ModelParams, n: int) -> float:
    """Squared spatial eigenvalue (n/ell)^2 of mode cos(n x / ell)."""
    return (n / params.ell) ** 2


def turning_index(lin: Linearization) -> float:
    """Real-valued index where the d21 threshold curve turns from
    decreasing to increasing: ell * (det A1 / (d11 d22))^(1/4)."""
    p = lin.params
    if p.d11 <= 0 or p.d22 <= 0:
        raise ParameterError("threshold analysis requires d11 > 0 and d22 > 0")
    return p.ell * (lin.det_a1 / (p.d11 * p.d22)) ** 0.25
