"""Per-wave-number characteristic analysis and stability classification.

For each spatial mode cos(n x / ell) the linearized system has the
transcendental characteristic function

    Gamma_n(lam) = det( lam*I + (n/ell)^2 * (D1 + e^{-lam tau} D2)
                        - A1 - A2 e^{-lam tau} ).

Purely imaginary roots lam = i*omega_n exist when the quartic
omega^4 + P_n omega^2 + Q_n has a positive root, and the delays at which
they occur form the arithmetic ladder tau_{n,j} = tau_{n,0} + 2*pi*j/omega_n.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass

import numpy as np

from .errors import (BranchConditionError, InconclusiveError, NoHopfPointError,
                     ParameterError)
from .model import (Linearization, ModelParams, Variant, linearize,
                    turning_index, wave_factor)

#: tau is considered "exactly on" a Hopf curve within this margin.
ON_CURVE_TOL = 1e-9


@dataclass(frozen=True)
class SpectralSlice:
    """Characteristic data of one wave number.

    ``t_n`` is the trace term, ``j_n`` the delay-free determinant part,
    ``r_n`` the delayed coupling amplitude, and ``p_n``/``q_n`` the
    coefficients of the frequency quartic.  ``omega_n`` is the unique
    positive crossing frequency, present exactly when ``q_n < 0``.
    """

    n: int
    t_n: float
    j_n: float
    r_n: float
    p_n: float
    q_n: float
    omega_n: float | None

    def tau(self, j: int) -> float:
        """j-th critical delay of this mode (principal arccos branch)."""
        if self.omega_n is None:
            raise NoHopfPointError(f"mode n={self.n} has no crossing frequency")
        arg = (self.j_n - self.omega_n**2) / self.r_n
        if abs(arg) > 1 + 1e-9:
            raise BranchConditionError(
                f"arccos argument {arg} out of range for mode n={self.n}")
        sin_val = self.t_n * self.omega_n / self.r_n
        if sin_val <= 0:
            raise BranchConditionError(
                "positive-sine branch violated (stability preconditions "
                f"not met for mode n={self.n})")
        return (math.acos(min(1.0, max(-1.0, arg))) + 2.0 * math.pi * j) / self.omega_n


@dataclass(frozen=True)
class HopfPoint:
    """A verified crossing of eigenvalues through the imaginary axis."""

    n_c: int
    omega_nc: float
    tau_c: float
    omega_c: float          # rescaled frequency tau_c * omega_nc
    transversality: float   # closed-form crossing-speed surrogate, > 0


@dataclass(frozen=True)
class ConditionReport:
    """Literal evaluation of the classification inequalities."""

    c0: bool
    c1: bool
    c11: bool
    c2: bool
    c21: bool
    c3: bool
    c_star: float
    d21_thresholds: dict | None     # n -> threshold rate (memory-only)
    d21_star: float | None
    index_set: tuple | None         # modes currently above threshold
    n_star: int | None              # largest unstable mode (gestation, C2)
    n1: float | None                # real mode-window bounds (C3)
    n2: float | None


@dataclass(frozen=True)
class Verdict:
    """Outcome of the delay-stability test at a given (params, tau)."""

    state: str                      # "stable" | "unstable" | "on_hopf_curve"
    tau_star: float | None = None
    n: int | None = None            # populated for on_hopf_curve
    j: int | None = None
    minimizers: tuple = ()          # all (n, tau_{n,0}) attaining tau_star
    double_hopf: bool = False


def char_residual(lin: Linearization, n: int, tau: float, lam: complex) -> complex:
    """Value of the mode-n characteristic function at ``lam``."""
    p = lin.params
    nu = wave_factor(p, n)
    ee = np.exp(-lam * tau)
    m11 = lam + nu * p.d11 - lin.a11 - lin.b11 * ee
    m12 = -lin.a12 - lin.b12 * ee
    m21 = nu * (-p.d21 * lin.v_star) * ee - lin.a21 - lin.b21 * ee
    m22 = lam + nu * p.d22 - lin.a22 - lin.b22 * ee
    return m11 * m22 - m12 * m21


def slice_at(lin: Linearization, n: int) -> SpectralSlice:
    """Characteristic quartic data for wave number ``n``.

    The quartic constant term factors as
    q_n = (j_n + r_n)(j_n - r_n) with r_n the delayed coupling
    d21*a12*v_star*(n/ell)^2 + a12*b21; a crossing frequency exists
    exactly when q_n < 0.
    """
    p = lin.params
    nu = wave_factor(p, n)
    t_n = (lin.a11 + lin.a22) - (p.d11 + p.d22) * nu
    j_n = (p.d11 * p.d22 * nu**2
           - (p.d11 * lin.a22 + p.d22 * lin.a11) * nu
           + lin.det_a1)
    r_n = p.d21 * lin.a12 * lin.v_star * nu + lin.a12 * lin.b21
    p_n = t_n**2 - 2.0 * j_n
    q_n = j_n**2 - r_n**2
    omega_n = None
    if q_n < 0.0:
        omega_n = math.sqrt((-p_n + math.sqrt(p_n**2 - 4.0 * q_n)) / 2.0)
    return SpectralSlice(n=n, t_n=t_n, j_n=j_n, r_n=r_n, p_n=p_n, q_n=q_n,
                         omega_n=omega_n)


def hopf_frequency(sl: SpectralSlice) -> float | None:
    """Unique positive root of the frequency quartic, or None."""
    return sl.omega_n


def critical_delays(lin: Linearization, sl: SpectralSlice, j_max: int) -> list:
    """Delays tau_{n,0} < ... < tau_{n,j_max}, spaced by 2*pi/omega_n."""
    return [sl.tau(j) for j in range(j_max + 1)]


def d21_thresholds(lin: Linearization, n_max: int):
    """Cross-diffusion rates at which each mode first destabilizes.

    Returns ``(thresholds, d21_star)`` where ``thresholds[n]`` is the
    rate above which mode n gains a crossing frequency, and ``d21_star``
    is the minimum over n >= 1.  ``n_max`` must bracket the minimizer.
    """
    p = lin.params
    if p.variant is not Variant.MEMORY_ONLY:
        raise ParameterError("thresholds are defined for the memory-only variant")
    if lin.a12 >= 0:
        raise ParameterError("thresholds require a12 < 0 (0 < m <= 1)")
    n_turn = turning_index(lin)
    if n_max < math.ceil(n_turn) + 1:
        raise ParameterError(
            f"n_max={n_max} too small to bracket the threshold minimizer "
            f"(needs at least {math.ceil(n_turn) + 1})")
    thresholds = {}
    for n in range(1, n_max + 1):
        nu = wave_factor(p, n)
        j_n = (p.d11 * p.d22 * nu**2
               - (p.d11 * lin.a22 + p.d22 * lin.a11) * nu
               + lin.det_a1)
        thresholds[n] = -j_n / (lin.a12 * lin.v_star * nu)
    d21_star = min(thresholds.values())
    return thresholds, d21_star


def default_n_max(lin: Linearization) -> int:
    """Scan window guaranteed to bracket the threshold minimizer."""
    return max(32, 4 * math.ceil(turning_index(lin)))


def c_star_value(params: ModelParams) -> float:
    """Sign indicator of the quartic quadratic coefficient at large n=0."""
    b, m, g = params.beta, params.m, params.gamma
    mp1 = m + 1.0
    return (4 * b * b - 4 * b * mp1**2 + mp1**4 + g * g * mp1**4
            + 2 * b * g * (m - 1) * mp1**2) / mp1**4


def classify_conditions(lin: Linearization, params: ModelParams) -> ConditionReport:
    """Evaluate every classification inequality from its literal form."""
    p = params
    half = (p.m + 1.0) ** 2 / 2.0
    if p.variant is Variant.MEMORY_ONLY:
        c0 = (0.0 < p.beta <= half) and (0.0 < p.m <= 1.0)
    else:
        c0 = (0.0 < p.beta < half) and (0.0 < p.m < 1.0)

    bcoef = p.d11 * lin.a22 + p.d22 * lin.a11 - p.d21 * lin.a12 * lin.v_star
    ccoef = lin.a11 * lin.a22 + lin.a12 * lin.b21
    disc = bcoef**2 - 4.0 * p.d11 * p.d22 * ccoef

    c1 = bcoef < 0.0 and ccoef > 0.0
    c11 = disc < 0.0
    c2 = ccoef < 0.0
    c21 = bcoef > 0.0 and disc == 0.0
    c3 = bcoef > 0.0 and ccoef > 0.0 and disc > 0.0

    thresholds = d21_star = index_set = None
    if p.variant is Variant.MEMORY_ONLY and lin.a12 < 0 and p.d11 > 0 and p.d22 > 0:
        thresholds, d21_star = d21_thresholds(lin, default_n_max(lin))
        index_set = tuple(n for n, thr in sorted(thresholds.items())
                          if thr < p.d21)

    n_star = None
    n1 = n2 = None
    if p.d11 > 0 and p.d22 > 0 and disc >= 0:
        root = math.sqrt(disc)
        if c2 or c21:
            x_star = (bcoef + root) / (2.0 * p.d11 * p.d22)
            if x_star > 0:
                n0 = p.ell * math.sqrt(x_star)
                if abs(n0 - round(n0)) < 1e-9 and round(n0) >= 1:
                    n_star = int(round(n0)) - 1
                else:
                    n_star = math.floor(n0)
        if c3:
            x1 = (bcoef - root) / (2.0 * p.d11 * p.d22)
            x2 = (bcoef + root) / (2.0 * p.d11 * p.d22)
            n1 = p.ell * math.sqrt(max(x1, 0.0))
            n2 = p.ell * math.sqrt(max(x2, 0.0))

    return ConditionReport(c0=c0, c1=c1, c11=c11, c2=c2, c21=c21, c3=c3,
                           c_star=c_star_value(params),
                           d21_thresholds=thresholds, d21_star=d21_star,
                           index_set=index_set, n_star=n_star, n1=n1, n2=n2)


def transversality(lin: Linearization, sl: SpectralSlice, tau_nj: float) -> float:
    """Crossing-speed surrogate sqrt(p_n^2 - 4 q_n) / r_n^2 at a critical delay.

    Positive whenever a crossing frequency exists, which certifies that
    eigenvalues cross the imaginary axis from left to right as tau
    increases through ``tau_nj``.
    """
    if sl.omega_n is None:
        raise NoHopfPointError(f"mode n={sl.n} has no crossing frequency")
    w = sl.omega_n
    res_re = sl.j_n - w * w - sl.r_n * math.cos(w * tau_nj)
    res_im = sl.t_n * w - sl.r_n * math.sin(w * tau_nj)
    if max(abs(res_re), abs(res_im)) > 1e-8 * max(1.0, abs(sl.j_n)):
        raise ParameterError(
            f"tau={tau_nj} is not a critical delay of mode n={sl.n}")
    return math.sqrt(sl.p_n**2 - 4.0 * sl.q_n) / sl.r_n**2


def _unstable_modes(lin: Linearization, report: ConditionReport) -> list:
    """Modes with a crossing frequency under the current parameters."""
    p = lin.params
    if p.variant is Variant.MEMORY_ONLY:
        return list(report.index_set or ())
    if report.c1 or report.c11 or report.c21:
        return []
    if report.c2:
        return list(range(0, (report.n_star or 0) + 1))
    if report.c3:
        lo = math.floor(report.n1) + 1
        hi = math.ceil(report.n2) - 1
        return [n for n in range(max(lo, 0), hi + 1)]
    return []


def stability_verdict(params: ModelParams, tau: float) -> Verdict:
    """Delay-stability of the steady state at the given tau.

    Memory-only: stable for every tau while d21 is at or below the
    threshold minimum, otherwise stable below the first critical delay
    and unstable above it.  With the gestation delay the admissible
    mode range follows the condition flags.
    """
    if tau < 0:
        raise ParameterError("tau must be non-negative")
    lin = linearize(params)
    report = classify_conditions(lin, params)
    if not report.c0:
        raise InconclusiveError("parameters violate the baseline condition "
                                "(0 < beta <= (m+1)^2/2 and 0 < m <= 1)")
    if params.variant is Variant.MEMORY_ONLY and report.c_star <= 0:
        raise InconclusiveError("quartic coefficient sign indeterminate "
                                "(c_star <= 0)")
    modes = _unstable_modes(lin, report)
    if not modes:
        return Verdict(state="stable")

    firsts = []
    for n in modes:
        sl = slice_at(lin, n)
        if sl.omega_n is None:
            continue
        # on-curve test against the whole ladder up to tau
        j = 0
        while True:
            t_j = sl.tau(j)
            if abs(tau - t_j) <= ON_CURVE_TOL:
                return Verdict(state="on_hopf_curve", n=n, j=j, tau_star=t_j)
            if t_j > tau:
                break
            j += 1
        firsts.append((n, sl.tau(0)))
    if not firsts:
        return Verdict(state="stable")
    tau_star = min(t for _, t in firsts)
    minimizers = tuple((n, t) for n, t in firsts if abs(t - tau_star) <= 1e-12)
    state = "stable" if tau < tau_star else "unstable"
    return Verdict(state=state, tau_star=tau_star, minimizers=minimizers,
                   double_hopf=len(minimizers) > 1)


def hopf_point(params: ModelParams, n_c: int | None = None, j: int = 0) -> HopfPoint:
    """First (or requested) Hopf point for the given parameters.

    Without ``n_c`` the governing mode is the one whose first critical
    delay is smallest.  Raises :class:`NoHopfPointError` when no mode
    has a crossing frequency.
    """
    lin = linearize(params)
    report = classify_conditions(lin, params)
    if n_c is None:
        candidates = _unstable_modes(lin, report)
        best = None
        for n in candidates:
            sl = slice_at(lin, n)
            if sl.omega_n is None:
                continue
            t0 = sl.tau(0)
            if best is None or t0 < best[1]:
                best = (n, t0, sl)
        if best is None:
            raise NoHopfPointError("no mode has a crossing frequency at these "
                                   "parameters (coupling below threshold)")
        n_c, _, sl = best
    else:
        sl = slice_at(lin, n_c)
        if sl.omega_n is None:
            raise NoHopfPointError(f"mode n={n_c} has no crossing frequency")
    tau_c = sl.tau(j)
    return HopfPoint(n_c=n_c, omega_nc=sl.omega_n, tau_c=tau_c,
                     omega_c=tau_c * sl.omega_n,
                     transversality=transversality(lin, sl, tau_c))


# ---------------------------------------------------------------------------
# Bifurcation-curve scan over the cross-diffusion rate.
# ---------------------------------------------------------------------------

def _scan_sample(params: ModelParams, d21: float):
    from dataclasses import replace
    p = replace(params, d21=d21)
    lin = linearize(p)
    thresholds, _ = d21_thresholds(lin, default_n_max(lin))
    rows = []
    for n in sorted(thresholds):
        if thresholds[n] < d21:
            sl = slice_at(lin, n)
            if sl.omega_n is not None:
                rows.append((d21, n, sl.tau(0)))
    return rows


def hopf_curve_scan(params: ModelParams, d21_range, step: float,
                    threads: int = 1, crossing_tol: float = 1e-6):
    """Tabulate tau_{n,0}(d21) curves and locate curve crossings.

    Parameters
    ----------
    params : ModelParams
        Memory-only parameter set; its ``d21`` field is ignored.
    d21_range : (float, float)
        Inclusive scan interval.
    step : float
        Sample spacing.
    threads : int
        Worker threads for sample evaluation; output is identical for
        any thread count.
    crossing_tol : float
        Bisection width (in d21) for refining curve crossings.

    Returns
    -------
    rows : list of (d21, n, tau_n0)
    crossings : list of (d21, tau, n_a, n_b)
    """
    if params.variant is not Variant.MEMORY_ONLY:
        raise ParameterError("curve scan is defined for the memory-only variant")
    lo, hi = d21_range
    if hi < lo:
        raise ParameterError("empty d21 range")
    n_samples = int(math.floor((hi - lo) / step + 1e-9)) + 1
    samples = [lo + i * step for i in range(n_samples)]

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            per_sample = list(ex.map(lambda d: _scan_sample(params, d), samples))
    else:
        per_sample = [_scan_sample(params, d) for d in samples]

    rows = [row for sample_rows in per_sample for row in sample_rows]

    def tau_gap(d21, n_a, n_b):
        by_n = {n: t for _, n, t in _scan_sample(params, d21)}
        if n_a not in by_n or n_b not in by_n:
            return None
        return by_n[n_a] - by_n[n_b]

    crossings = []
    for (d_left, left_rows), (d_right, right_rows) in zip(
            zip(samples, per_sample), zip(samples[1:], per_sample[1:])):
        left = {n: t for _, n, t in left_rows}
        right = {n: t for _, n, t in right_rows}
        common = sorted(set(left) & set(right))
        for i, n_a in enumerate(common):
            for n_b in common[i + 1:]:
                g_left = left[n_a] - left[n_b]
                g_right = right[n_a] - right[n_b]
                if g_left == 0.0:
                    crossings.append((d_left, left[n_a], n_a, n_b))
                    continue
                if g_left * g_right >= 0.0:
                    continue
                a, b, ga = d_left, d_right, g_left
                while b - a > crossing_tol:
                    mid = 0.5 * (a + b)
                    gm = tau_gap(mid, n_a, n_b)
                    if gm is None:
                        break
                    if ga * gm <= 0.0:
                        b = mid
                    else:
                        a, ga = mid, gm
                d_cross = 0.5 * (a + b)
                by_n = {n: t for _, n, t in _scan_sample(params, d_cross)}
                crossings.append((d_cross, 0.5 * (by_n[n_a] + by_n[n_b]),
                                  n_a, n_b))
    return rows, crossings


def fmt_csv_float(x: float) -> str:
    """Deterministic 12-significant-digit CSV float format."""
    return f"{x:.12g}"


def write_curve_csv(rows, path) -> None:
    """Write scan rows with the fixed header ``d21,n,tau_n0``."""
    with open(path, "w") as fh:
        fh.write("d21,n,tau_n0\n")
        for d21, n, tau0 in rows:
            fh.write(f"{fmt_csv_float(d21)},{n},{fmt_csv_float(tau0)}\n")


def write_crossings_csv(crossings, path) -> None:
    """Write curve crossings with the fixed header ``d21,tau,n_a,n_b``."""
    with open(path, "w") as fh:
        fh.write("d21,tau,n_a,n_b\n")
        for d21, tau, n_a, n_b in crossings:
            fh.write(f"{fmt_csv_float(d21)},{fmt_csv_float(tau)},{n_a},{n_b}\n")
