"""Third-order Hopf normal form at a critical delay.

The reduced flow on the center manifold, written in polar coordinates
after removing the phase, is

    rho' = K1 * mu * rho + K2 * rho^3 + h.o.t.,   mu = tau - tau_c.

``K1*K2 < 0`` marks a supercritical bifurcation, ``K2 < 0`` a stable
bifurcating orbit.  The chain runs: eigenvectors of the critical mode,
quadratic/cubic coefficient vectors of the reaction, quadratic
center-manifold corrections, then the five B-coefficients assembled
into K1 and K2.

All theta-dependent objects are exponentials in theta; they are carried
as (constant vector, rate) pairs plus closed-form integral corrections,
so every evaluation at theta in {0, -1} is exact.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import InconclusiveError, NoHopfPointError, SingularSolveError
from .model import DerivativeTable, Linearization, Variant, wave_factor
from .spectral import HopfPoint

#: Condition-number guard for the 2x2 center-manifold solves.
SOLVE_COND_LIMIT = 1e12


def solve2(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a complex 2x2 system by the adjugate formula.

    Raises :class:`SingularSolveError` when the condition estimate
    (max-norm based) exceeds ``SOLVE_COND_LIMIT``; for the
    center-manifold solves that signals a violated non-resonance
    condition.
    """
    a, b = mat[0]
    c, d = mat[1]
    det = a * d - b * c
    norm = max(abs(a) + abs(b), abs(c) + abs(d))
    adj_norm = max(abs(d) + abs(b), abs(c) + abs(a))
    if det == 0 or norm * adj_norm / abs(det) > SOLVE_COND_LIMIT:
        raise SingularSolveError("2x2 solve is numerically singular "
                                 "(non-resonance condition violated)")
    return np.array([(d * rhs[0] - b * rhs[1]) / det,
                     (-c * rhs[0] + a * rhs[1]) / det])


@dataclass(frozen=True)
class EigenData:
    """Right/adjoint eigenvectors of the critical mode.

    ``phi`` solves the rescaled mode matrix at +i*omega_c with first
    component 1; ``psi`` is the adjoint row vector scaled by ``eta`` so
    that the adjoint pairing of (psi, phi) equals 1 and cross terms
    vanish.  Time dependence is phi(theta) = phi*e^{i omega_c theta},
    psi(s) = psi*e^{-i omega_c s}.
    """

    phi: np.ndarray
    psi: np.ndarray
    eta: complex
    k1: complex
    k2: complex

    def phi_pair(self, omega_c: float):
        """(phi(0), phi(-1)) evaluations."""
        return self.phi, self.phi * cmath.exp(-1j * omega_c)

    def phi_bar_pair(self, omega_c: float):
        em1 = cmath.exp(-1j * omega_c)
        return np.conj(self.phi), np.conj(self.phi * em1)


@dataclass(frozen=True)
class CoeffSet:
    """Quadratic/cubic reaction coefficient vectors on the critical mode."""

    A20: np.ndarray
    A11: np.ndarray
    A02: np.ndarray
    A30: np.ndarray
    A21: np.ndarray
    A12: np.ndarray
    A03: np.ndarray
    A20_d: np.ndarray
    A11_d: np.ndarray
    A02_d: np.ndarray
    Atilde20: np.ndarray
    Atilde11: np.ndarray


@dataclass(frozen=True)
class HComponent:
    """One center-manifold correction h(theta), theta in [-1, 0].

    h(theta) = e^{rate*theta} * C
             + sum_j  e^{rate*theta} * (e^{(k_j-rate)*theta} - 1)/(k_j-rate) * vec_j

    The forcing list is empty except for the spatially flat critical
    mode, where the projected inhomogeneity contributes exponential
    integral terms.
    """

    C: np.ndarray
    rate: complex
    forcing: tuple = ()   # of (vec, k) pairs

    def eval(self, theta: float) -> np.ndarray:
        out = cmath.exp(self.rate * theta) * self.C
        for vec, k in self.forcing:
            mu = k - self.rate
            out = out + cmath.exp(self.rate * theta) * (
                (cmath.exp(mu * theta) - 1.0) / mu) * vec
        return out

    def deriv0(self) -> np.ndarray:
        """d h / d theta at theta = 0."""
        out = self.rate * self.C
        for vec, _k in self.forcing:
            out = out + vec
        return out

    @property
    def at0(self) -> np.ndarray:
        return self.eval(0.0)

    @property
    def atm1(self) -> np.ndarray:
        return self.eval(-1.0)

    def pair(self):
        return self.at0, self.atm1


@dataclass(frozen=True)
class CenterManifoldH:
    h020: HComponent
    h011: HComponent
    h2nc20: HComponent | None
    h2nc11: HComponent | None


@dataclass(frozen=True)
class NormalFormResult:
    """B-coefficients and the reduced-flow classification."""

    n_c: int
    omega_nc: float
    tau_c: float
    B1: complex
    B21: complex
    B22: complex
    B23: complex
    B24: complex
    B2: complex
    K1: float
    K2: float
    direction: str        # "supercritical" | "subcritical"
    orbit_stability: str  # "stable" | "unstable"


def classify(K1: float, K2: float):
    """Direction/stability from the reduced-flow coefficient signs."""
    if K1 == 0.0 or K2 == 0.0:
        raise InconclusiveError("degenerate normal form (K1*K2 == 0)")
    direction = "supercritical" if K1 * K2 < 0 else "subcritical"
    stability = "stable" if K2 < 0 else "unstable"
    return direction, stability


def eigen_data(lin: Linearization, hp: HopfPoint) -> EigenData:
    """Closed-form eigenvectors and adjoint normalization at a Hopf point."""
    p = lin.params
    nu = wave_factor(p, hp.n_c)
    ee = cmath.exp(-1j * hp.omega_c)
    den1 = lin.a12 + lin.b12 * ee
    if abs(den1) < 1e-12:
        raise SingularSolveError("eigenvector denominator a12 + b12*e^{-i w} "
                                 "is numerically zero")
    k1 = (1j * hp.omega_nc + p.d11 * nu - lin.a11 - lin.b11 * ee) / den1
    den2 = 1j * hp.omega_nc + p.d22 * nu - lin.a22 - lin.b22 * ee
    if abs(den2) < 1e-12:
        raise SingularSolveError("adjoint eigenvector denominator is "
                                 "numerically zero")
    k2 = den1 / den2
    eta = 1.0 / (1.0 + k1 * k2 + ee * hp.tau_c * lin.b11
                 + ee * k2 * (hp.tau_c * lin.b21
                              + hp.tau_c * p.d21 * lin.v_star * nu))
    phi = np.array([1.0 + 0j, k1])
    psi = eta * np.array([1.0 + 0j, k2])
    return EigenData(phi=phi, psi=psi, eta=eta, k1=k1, k2=k2)


def adjoint_pairing(lin: Linearization, hp: HopfPoint, ed: EigenData,
                    n_nodes: int = 200) -> np.ndarray:
    """Adjoint-basis pairing matrix computed by Gauss-Legendre quadrature.

    Independent of the closed-form normalization; must equal the 2x2
    identity.  The pairing of row r(s) with column c(theta) is
    r(0)c(0) + integral_{-1}^{0} r(xi+1) N c(xi) dxi with N the delayed
    linear-part mass tau_c*(A2 - (n_c/ell)^2 D2).
    """
    p = lin.params
    nu = wave_factor(p, hp.n_c)
    nmass = hp.tau_c * (lin.a2 - nu * lin.d2)
    xs, ws = np.polynomial.legendre.leggauss(n_nodes)
    xs = 0.5 * (xs - 1.0)   # map to [-1, 0]
    ws = 0.5 * ws
    wc = hp.omega_c

    cols = [(ed.phi, 1j * wc), (np.conj(ed.phi), -1j * wc)]
    rows = [(ed.psi, -1j * wc), (np.conj(ed.psi), 1j * wc)]
    out = np.zeros((2, 2), dtype=complex)
    for i, (rvec, rrate) in enumerate(rows):
        for jcol, (cvec, crate) in enumerate(cols):
            val = rvec @ cvec
            integrand = np.exp(rrate * (xs + 1.0)) * np.exp(crate * xs)
            val += (rvec @ nmass @ cvec) * np.sum(ws * integrand)
            out[i, jcol] = val
    return out


def mode_matrix(lin: Linearization, hp: HopfPoint, n: int, lam: complex) -> np.ndarray:
    """Rescaled characteristic matrix of mode ``n`` at eigenvalue ``lam``."""
    p = lin.params
    nu = wave_factor(p, n)
    ee = cmath.exp(-lam)
    return (lam * np.eye(2)
            + hp.tau_c * nu * (lin.d1 + ee * lin.d2)
            - hp.tau_c * lin.a1 - hp.tau_c * lin.a2 * ee)


# ---------------------------------------------------------------------------
# Coefficient vectors.
# ---------------------------------------------------------------------------

def _z_coefficient(factors, q1: int) -> complex:
    """Coefficient of z1^q1 z2^(len-q1) in a product of (a*z1 + b*z2)."""
    poly = np.array([1.0 + 0j])
    for a, b in factors:
        poly = np.convolve(poly, np.array([b, a]))
    return poly[q1]


def _field_coefficient(table: DerivativeTable, phi: np.ndarray, em1: complex,
                       order: int, q1: int, q2: int) -> np.ndarray:
    """Coefficient vector of z1^q1 z2^q2 in the order-``order`` reaction term.

    The three argument slots carry (phi1(0), phi2(0), phi1(-1)) paired
    with their conjugates for the z2 direction.
    """
    slots = (
        (phi[0], np.conj(phi[0])),
        (phi[1], np.conj(phi[1])),
        (phi[0] * em1, np.conj(phi[0] * em1)),
    )
    total = np.zeros(2, dtype=complex)
    for j1 in range(order + 1):
        for j2 in range(order + 1 - j1):
            j3 = order - j1 - j2
            fc = table.coeff(j1, j2, j3)
            if not fc.any():
                continue
            mult = factorial(order) // (factorial(j1) * factorial(j2) * factorial(j3))
            factors = [slots[0]] * j1 + [slots[1]] * j2 + [slots[2]] * j3
            total = total + mult * fc * _z_coefficient(factors, q1)
    return total


def coeff_set(table: DerivativeTable, ed: EigenData, hp: HopfPoint,
              lin: Linearization) -> CoeffSet:
    """All quadratic/cubic coefficient vectors at the Hopf point."""
    p = lin.params
    em1 = cmath.exp(-1j * hp.omega_c)
    phi = ed.phi
    A = lambda order, q1, q2: _field_coefficient(table, phi, em1, order, q1, q2)
    A20, A11, A02 = A(2, 2, 0), A(2, 1, 1), A(2, 0, 2)
    A30, A21, A12, A03 = A(3, 3, 0), A(3, 2, 1), A(3, 1, 2), A(3, 0, 3)

    scale = -2.0 * p.d21 * hp.tau_c
    A20_d = scale * np.array([0.0, phi[0] * em1 * phi[1]])
    A02_d = np.conj(A20_d)
    A11_d = 2.0 * scale * np.array([0.0, np.real(phi[0] * em1 * np.conj(phi[1]))])

    nu = wave_factor(p, hp.n_c)
    return CoeffSet(A20=A20, A11=A11, A02=A02, A30=A30, A21=A21, A12=A12,
                    A03=A03, A20_d=A20_d, A11_d=A11_d, A02_d=A02_d,
                    Atilde20=A20 - 2.0 * nu * A20_d,
                    Atilde11=A11 - 2.0 * nu * A11_d)


# ---------------------------------------------------------------------------
# Center-manifold corrections.
# ---------------------------------------------------------------------------

def center_manifold_h(cs: CoeffSet, ed: EigenData, hp: HopfPoint,
                      lin: Linearization) -> CenterManifoldH:
    """Quadratic corrections h_{0,20}, h_{0,11}, h_{2nc,20}, h_{2nc,11}.

    For a spatially structured critical mode (n_c >= 1) each correction
    is a pure exponential solved from a 2x2 system.  For the flat mode
    (n_c = 0) the n=0 corrections acquire closed-form exponential
    integral terms from the projected part of the inhomogeneity.
    """
    lp = lin.params.ell * math.pi
    wc = hp.omega_c
    tau_c = hp.tau_c
    two_iw = 2j * wc
    e2m = cmath.exp(-two_iw)

    if hp.n_c >= 1:
        c1 = solve2(mode_matrix(lin, hp, 0, two_iw), cs.A20 / math.sqrt(lp))
        c2 = solve2(mode_matrix(lin, hp, 0, 0.0), cs.A11 / math.sqrt(lp))
        c3 = solve2(mode_matrix(lin, hp, 2 * hp.n_c, two_iw),
                    cs.Atilde20 / math.sqrt(2.0 * lp))
        c4 = solve2(mode_matrix(lin, hp, 2 * hp.n_c, 0.0),
                    cs.Atilde11 / math.sqrt(2.0 * lp))
        return CenterManifoldH(
            h020=HComponent(C=c1, rate=two_iw),
            h011=HComponent(C=c2, rate=0.0),
            h2nc20=HComponent(C=c3, rate=two_iw),
            h2nc11=HComponent(C=c4, rate=0.0),
        )

    # Flat critical mode: the inhomogeneity keeps its projection on the
    # center subspace, contributing Phi(t)Psi(0) integral terms.
    phi, psi = ed.phi, ed.psi
    proj = np.outer(phi, psi) + np.outer(np.conj(phi), np.conj(psi))  # Phi(0)Psi(0)

    def exp_int(k: complex) -> complex:
        """integral over [-1, 0] of e^{k t} dt."""
        return (1.0 - cmath.exp(-k)) / k

    # forcing of h020: (1/sqrt(lp)) Phi(t)Psi(0) A20 e^{-2 i wc t}
    f20_1 = (np.outer(phi, psi) @ cs.A20) / math.sqrt(lp)        # rate +i wc
    f20_2 = (np.outer(np.conj(phi), np.conj(psi)) @ cs.A20) / math.sqrt(lp)
    int20 = f20_1 * exp_int(-1j * wc) + f20_2 * exp_int(-3j * wc)
    rhs20 = ((np.eye(2) - proj) @ cs.A20 / math.sqrt(lp)
             - tau_c * (lin.a2 @ int20) * e2m)
    c5 = solve2(mode_matrix(lin, hp, 0, two_iw), rhs20)
    h020 = HComponent(C=c5, rate=two_iw,
                      forcing=((f20_1, 1j * wc - two_iw),
                               (f20_2, -1j * wc - two_iw)))

    f11_1 = (np.outer(phi, psi) @ cs.A11) / math.sqrt(lp)        # rate +i wc
    f11_2 = (np.outer(np.conj(phi), np.conj(psi)) @ cs.A11) / math.sqrt(lp)
    int11 = f11_1 * exp_int(1j * wc) + f11_2 * exp_int(-1j * wc)
    rhs11 = ((np.eye(2) - proj) @ cs.A11 / math.sqrt(lp)
             - tau_c * (lin.a2 @ int11))
    c6 = solve2(mode_matrix(lin, hp, 0, 0.0), rhs11)
    h011 = HComponent(C=c6, rate=0.0,
                      forcing=((f11_1, 1j * wc), (f11_2, -1j * wc)))
    return CenterManifoldH(h020=h020, h011=h011, h2nc20=None, h2nc11=None)


def h_jump_residual(hc: HComponent, lin: Linearization, hp: HopfPoint,
                    n: int, rhs: np.ndarray) -> np.ndarray:
    """Residual of the theta=0 matching condition defining ``hc``.

    The correction must satisfy dh/dtheta(0) - L_n(h) = rhs, where L_n
    applies the rescaled linear part of mode ``n`` to (h(0), h(-1)).
    """
    p = lin.params
    nu = wave_factor(p, n)
    h0, hm1 = hc.pair()
    lin_part = (-hp.tau_c * nu * (lin.d1 @ h0 + lin.d2 @ hm1)
                + hp.tau_c * (lin.a1 @ h0 + lin.a2 @ hm1))
    return hc.deriv0() - lin_part - rhs


# ---------------------------------------------------------------------------
# Bilinear products with the corrections.
# ---------------------------------------------------------------------------

def s2_product(table: DerivativeTable, a, y) -> np.ndarray:
    """Bilinear cross term of the quadratic reaction between ``a`` and ``y``.

    Both arguments are (value at theta=0, value at theta=-1) pairs of
    complex 2-vectors; only the u-component of the delayed slot enters.
    """
    a0, am1 = a
    y0, ym1 = y
    out = (table.coeff(2, 0, 0) * a0[0] * y0[0]
           + table.coeff(0, 2, 0) * a0[1] * y0[1]
           + table.coeff(0, 0, 2) * am1[0] * ym1[0]
           + table.coeff(1, 1, 0) * (a0[0] * y0[1] + a0[1] * y0[0])
           + table.coeff(1, 0, 1) * (a0[0] * ym1[0] + am1[0] * y0[0])
           + table.coeff(0, 1, 1) * (a0[1] * ym1[0] + am1[0] * y0[1]))
    return 2.0 * out


def s2_flux_product(kind: int, d21: float, tau_c: float, a, y) -> np.ndarray:
    """Cross terms of the quadratic flux nonlinearity (three argument patterns).

    kind=1 pairs a_u(-1) with y_v(0); kind=3 pairs a_v(0) with y_u(-1);
    kind=2 is their sum.
    """
    a0, am1 = a
    y0, ym1 = y
    scale = -2.0 * d21 * tau_c
    if kind == 1:
        val = am1[0] * y0[1]
    elif kind == 3:
        val = a0[1] * ym1[0]
    elif kind == 2:
        val = am1[0] * y0[1] + a0[1] * ym1[0]
    else:
        raise ValueError(f"kind must be 1, 2 or 3, got {kind}")
    return scale * np.array([0.0, val])


# ---------------------------------------------------------------------------
# B-coefficients and the normal form.
# ---------------------------------------------------------------------------

def b_coefficients(cs: CoeffSet, hh: CenterManifoldH, ed: EigenData,
                   hp: HopfPoint, lin: Linearization,
                   table: DerivativeTable) -> NormalFormResult:
    """Assemble B1, B21..B24 and classify the bifurcation."""
    p = lin.params
    lp = p.ell * math.pi
    nu = wave_factor(p, hp.n_c)
    em1 = cmath.exp(-1j * hp.omega_c)
    phi, psi = ed.phi, ed.psi
    phi_m1 = phi * em1

    B1 = 2.0 * psi @ (lin.a1 @ phi + lin.a2 @ phi_m1
                      - nu * (lin.d1 @ phi + lin.d2 @ phi_m1))

    ph = ed.phi_pair(hp.omega_c)
    phb = ed.phi_bar_pair(hp.omega_c)

    if hp.n_c >= 1:
        B21 = 1.5 / lp * (psi @ cs.A21)
        B22 = 0.0 + 0j
        B23 = (psi @ (s2_product(table, ph, hh.h011.pair())
                      + s2_product(table, phb, hh.h020.pair())) / math.sqrt(lp)
               + psi @ (s2_product(table, ph, hh.h2nc11.pair())
                        + s2_product(table, phb, hh.h2nc20.pair()))
               / math.sqrt(2.0 * lp))
        d21, tau_c = p.d21, hp.tau_c
        weights = (-nu, 2.0 * nu, -4.0 * nu)
        double_mode = np.zeros(2, dtype=complex)
        for kind, w in zip((1, 2, 3), weights):
            double_mode = double_mode + w * (
                s2_flux_product(kind, d21, tau_c, ph, hh.h2nc11.pair())
                + s2_flux_product(kind, d21, tau_c, phb, hh.h2nc20.pair()))
        B24 = (-nu / math.sqrt(lp) * psi
               @ (s2_flux_product(1, d21, tau_c, ph, hh.h011.pair())
                  + s2_flux_product(1, d21, tau_c, phb, hh.h020.pair()))
               + psi @ double_mode / math.sqrt(2.0 * lp))
    else:
        B21 = 1.0 / lp * (psi @ cs.A21)
        pa20, pa11, pa02 = psi @ cs.A20, psi @ cs.A11, psi @ cs.A02
        B22 = (1.0 / (1j * hp.omega_c * lp)) * (
            -pa20 * pa11 + abs(pa11) ** 2 + (2.0 / 3.0) * abs(pa02) ** 2)
        B23 = (psi @ (s2_product(table, ph, hh.h011.pair())
                      + s2_product(table, phb, hh.h020.pair()))
               / math.sqrt(lp))
        B24 = 0.0 + 0j

    B2 = B21 + 1.5 * (B22 + B23 + B24)
    K1 = 0.5 * float(np.real(B1))
    K2 = float(np.real(B2)) / 6.0
    direction, stability = classify(K1, K2)
    return NormalFormResult(n_c=hp.n_c, omega_nc=hp.omega_nc, tau_c=hp.tau_c,
                            B1=complex(B1), B21=complex(B21), B22=complex(B22),
                            B23=complex(B23), B24=complex(B24), B2=complex(B2),
                            K1=K1, K2=K2, direction=direction,
                            orbit_stability=stability)


def normal_form(params, n_c: int | None = None, j: int = 0,
                source: str = "analytic") -> NormalFormResult:
    """One-call pipeline: Hopf point -> eigen data -> corrections -> K1, K2."""
    from .model import derivative_table, linearize
    from .spectral import hopf_point

    lin = linearize(params)
    hp = hopf_point(params, n_c=n_c, j=j)
    table = derivative_table(params, hp.tau_c, source=source)
    ed = eigen_data(lin, hp)
    cs = coeff_set(table, ed, hp, lin)
    hh = center_manifold_h(cs, ed, hp, lin)
    return b_coefficients(cs, hh, ed, hp, lin, table)


# ---------------------------------------------------------------------------
# Independent memory-only route (two-argument reaction table).
# ---------------------------------------------------------------------------

def b_coefficients_memory_only(lin: Linearization, hp: HopfPoint,
                               table: DerivativeTable) -> NormalFormResult:
    """Specialized route for the memory-only variant, n_c >= 1.

    Implements the reduced closed forms that apply when the reaction
    carries no delayed argument (every delayed-slot coefficient is
    zero).  Kept textually independent of :func:`b_coefficients` so the
    two routes cross-validate each other where they overlap.
    """
    p = lin.params
    if p.variant is not Variant.MEMORY_ONLY:
        raise NoHopfPointError("reduced route applies to the memory-only variant")
    if hp.n_c < 1:
        raise NoHopfPointError("reduced route requires a spatial mode n_c >= 1")
    nu = wave_factor(p, hp.n_c)
    w = hp.omega_nc
    wc = hp.omega_c
    tau_c = hp.tau_c
    lp = p.ell * math.pi
    em1 = cmath.exp(-1j * wc)

    k1 = (1j * w + nu * p.d11 - lin.a11) / lin.a12
    k2 = lin.a12 / (1j * w + nu * p.d22 - lin.a22)
    eta = ((1j * w + nu * p.d22 - lin.a22)
           / (2j * w + nu * p.d11 - lin.a11 + nu * p.d22 - lin.a22
              + tau_c * lin.a12 * p.d21 * lin.v_star * nu * em1))
    phi1, phi2 = 1.0 + 0j, k1
    psi = eta * np.array([1.0, k2])

    d1m = lin.d1
    d2m = lin.d2
    B1 = 2.0 * psi @ (lin.a1 @ np.array([phi1, phi2])
                      - nu * (d1m @ np.array([phi1, phi2])
                              + d2m @ np.array([phi1 * em1, phi2 * em1])))

    f20, f11, f02 = table.f_pair(2, 0), table.f_pair(1, 1), table.f_pair(0, 2)
    f30, f21 = table.f_pair(3, 0), table.f_pair(2, 1)
    f12, f03 = table.f_pair(1, 2), table.f_pair(0, 3)

    A20 = f20 * phi1**2 + f02 * phi2**2 + 2.0 * f11 * phi1 * phi2
    A11 = (2.0 * f20 * phi1 * np.conj(phi1) + 2.0 * f02 * phi2 * np.conj(phi2)
           + 2.0 * f11 * (phi1 * np.conj(phi2) + np.conj(phi1) * phi2))
    A21 = (3.0 * f30 * phi1**2 * np.conj(phi1)
           + 3.0 * f03 * phi2**2 * np.conj(phi2)
           + 3.0 * f21 * (phi1**2 * np.conj(phi2)
                          + 2.0 * phi1 * np.conj(phi1) * phi2)
           + 3.0 * f12 * (2.0 * phi1 * phi2 * np.conj(phi2)
                          + np.conj(phi1) * phi2**2))
    A20_d = -2.0 * p.d21 * tau_c * np.array([0.0, phi1 * em1 * phi2])
    A11_d = (-2.0 * p.d21 * tau_c
             * np.array([0.0, 2.0 * np.real(phi1 * em1 * np.conj(phi2))]))
    At20 = A20 - 2.0 * nu * A20_d
    At11 = A11 - 2.0 * nu * A11_d

    def msolve(n, lam, rhs):
        nun = (n / p.ell) ** 2
        mat = (lam * np.eye(2) + tau_c * nun * (d1m + cmath.exp(-lam) * d2m)
               - tau_c * lin.a1)
        return solve2(mat, rhs)

    h020_0 = msolve(0, 2j * wc, A20 / math.sqrt(lp))
    h011_0 = msolve(0, 0.0, A11 / math.sqrt(lp))
    h2n20_0 = msolve(2 * hp.n_c, 2j * wc, At20 / math.sqrt(2.0 * lp))
    h2n11_0 = msolve(2 * hp.n_c, 0.0, At11 / math.sqrt(2.0 * lp))
    e2m = cmath.exp(-2j * wc)

    def s2_classic(a1c, a2c, y):
        return 2.0 * (f20 * a1c * y[0] + f02 * a2c * y[1]
                      + f11 * (a1c * y[1] + a2c * y[0]))

    B21 = 1.5 / lp * (psi @ A21)
    B23 = (psi @ (s2_classic(phi1, phi2, h011_0)
                  + s2_classic(np.conj(phi1), np.conj(phi2), h020_0))
           / math.sqrt(lp)
           + psi @ (s2_classic(phi1, phi2, h2n11_0)
                    + s2_classic(np.conj(phi1), np.conj(phi2), h2n20_0))
           / math.sqrt(2.0 * lp))

    scale = -2.0 * p.d21 * tau_c
    # flux cross terms for the single-mode corrections (pattern 1 only)
    sd1_h011 = scale * np.array([0.0, phi1 * em1 * h011_0[1]])
    sd1_h020 = scale * np.array([0.0, np.conj(phi1 * em1) * h020_0[1]])
    # and for the doubled-mode corrections (all three patterns)
    h2n11_m1 = h2n11_0          # flat in theta
    h2n20_m1 = h2n20_0 * e2m
    sd1_a = scale * np.array([0.0, phi1 * em1 * h2n11_0[1]])
    sd3_a = scale * np.array([0.0, phi2 * h2n11_m1[0]])
    sd1_b = scale * np.array([0.0, np.conj(phi1 * em1) * h2n20_0[1]])
    sd3_b = scale * np.array([0.0, np.conj(phi2) * h2n20_m1[0]])
    b_1, b_2, b_3 = -nu, 2.0 * nu, -4.0 * nu
    B24 = (-nu / math.sqrt(lp) * psi @ (sd1_h011 + sd1_h020)
           + psi @ (b_1 * (sd1_a + sd1_b)
                    + b_2 * ((sd1_a + sd3_a) + (sd1_b + sd3_b))
                    + b_3 * (sd3_a + sd3_b)) / math.sqrt(2.0 * lp))

    B22 = 0.0 + 0j
    B2 = B21 + 1.5 * (B22 + B23 + B24)
    K1 = 0.5 * float(np.real(B1))
    K2 = float(np.real(B2)) / 6.0
    direction, stability = classify(K1, K2)
    return NormalFormResult(n_c=hp.n_c, omega_nc=hp.omega_nc, tau_c=hp.tau_c,
                            B1=complex(B1), B21=complex(B21), B22=complex(B22),
                            B23=complex(B23), B24=complex(B24), B2=complex(B2),
                            K1=K1, K2=K2, direction=direction,
                            orbit_stability=stability)
