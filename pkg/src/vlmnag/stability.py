"""Consistency, zero-stability and absolute-stability analysis for two-step VLMs.

Dahlquist's test equation x' = lam x applied to a two-step method gives a
recursion whose limiting characteristic polynomial is

    R(z) = z^2 + (a - mu c_hat) z + (b + mu d_hat),

with mu = lam (h_{n+1} - h_n) and c_hat = c w/(w-1), d_hat = d w/(w-1)
(w = h_{n+1}/h_n). For linearly growing steps w -> 1 while mu stays fixed, so
c_hat and d_hat have finite limits even though c and d vanish.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import StepSchedule, TwoStepCoefficients
from .methods import MethodSpec, nag_c_vlm_coefficients, proposed_coefficients

# limits (b, c_hat, d_hat) as w -> 1
NAG_C_LIMITS = (1.0, 8.0, 4.0)
PROPOSED_LIMITS = (1.0, 4.0, 0.0)
ADAMS2_LIMITS = (0.0, 1.5, 0.5)


@dataclass(frozen=True)
class QuadraticPoly:
    """Monic z^2 + b z + c."""

    b: complex
    c: complex

    def __post_init__(self):
        if not (cmath.isfinite(self.b) and cmath.isfinite(self.c)):
            raise ValueError(f"non-finite polynomial coefficients {self}")

    @property
    def is_real(self) -> bool:
        return complex(self.b).imag == 0 and complex(self.c).imag == 0

    def roots(self) -> tuple:
        """Both roots, larger magnitude first.

        The larger root is formed without cancellation and the other follows
        from Vieta (z1 z2 = c). For real coefficients the discriminant is
        formed in the coefficients' own arithmetic, so exact rationals give
        exact double roots.
        """
        if self.is_real and not isinstance(self.b, complex) and not isinstance(self.c, complex):
            b, c = self.b, self.c
            disc = b * b - 4 * c
            if disc >= 0:
                sq = math.sqrt(disc)
                big = -(float(b) + math.copysign(sq, float(b))) / 2
                if big == 0:
                    return 0j, 0j
                return complex(big), complex(float(c) / big)
            half = math.sqrt(-disc) / 2
            return complex(-float(b) / 2, half), complex(-float(b) / 2, -half)
        b, c = complex(self.b), complex(self.c)
        sq = cmath.sqrt(b * b - 4 * c)
        s1, s2 = b + sq, b - sq
        big = s1 if abs(s1) >= abs(s2) else s2
        if big == 0:
            return 0j, 0j
        z1 = -big / 2
        z2 = c / z1
        if abs(z2) > abs(z1):
            z1, z2 = z2, z1
        return z1, z2


@dataclass(frozen=True)
class StabilityReport:
    mu: complex
    poly: QuadraticPoly
    root_magnitudes: tuple
    stable: bool
    status: str  # "stable", "boundary" or "unstable"


@dataclass(frozen=True)
class RegionBoundary:
    """Root-locus curve mu(theta) with R(e^{i theta}) = 0."""

    thetas: np.ndarray
    samples: np.ndarray
    gaps: tuple = ()

    def contains(self, mu: complex) -> bool:
        """Point-in-curve test by winding number."""
        d = self.samples - mu
        ang = np.angle(np.concatenate([d, d[:1]]))
        winding = np.sum(np.angle(np.exp(1j * np.diff(ang)))) / (2 * np.pi)
        return abs(round(winding)) >= 1

    def real_intercepts(self, tol: float = 1e-12) -> np.ndarray:
        """Samples lying on the real axis (theta = 0 and theta = pi)."""
        on_axis = np.abs(self.samples.imag) <= tol
        return np.sort(self.samples.real[on_axis])


def _hat(v: float, w: float) -> float:
    return v * w / (w - 1)


def hat_coefficients(co: TwoStepCoefficients, w: float) -> tuple:
    """(c_hat, d_hat) = (c, d) * w/(w-1)."""
    if w == 1:
        raise ValueError("c_hat/d_hat are undefined at w = 1; supply the limits instead")
    return _hat(co.c, w), _hat(co.d, w)


def characteristic_poly(co: TwoStepCoefficients, mu: complex, w: float,
                        limits: Optional[tuple] = None) -> QuadraticPoly:
    """R_n(z) for the coefficients at ratio ``w``.

    At ``w == 1`` the caller must pass ``limits=(c_hat, d_hat)``.
    """
    if limits is not None:
        c_hat, d_hat = limits
    else:
        c_hat, d_hat = hat_coefficients(co, w)
    return QuadraticPoly(co.a - mu * c_hat, co.b + mu * d_hat)


def limit_poly(limits: tuple, mu: complex) -> QuadraticPoly:
    """R(z) from the limits (b, c_hat, d_hat) of an order-0 consistent method."""
    b, c_hat, d_hat = limits
    return QuadraticPoly(-(1 + b + mu * c_hat), b + mu * d_hat)


def roots_in_unit_circle(p: QuadraticPoly, tol: float = 1e-12) -> bool:
    """True iff both roots have modulus < 1.

    Real coefficients use |c| < 1 and |b| < 1 + c; complex ones fall back to
    the roots themselves. Cases within ``tol`` of the boundary count as outside.
    """
    if p.is_real:
        b, c = complex(p.b).real, complex(p.c).real
        return abs(c) < 1 - tol and abs(b) < 1 + c - tol
    return spectral_radius(p) < 1 - tol


def spectral_radius(p: QuadraticPoly) -> float:
    return abs(p.roots()[0])


def analyze(p: QuadraticPoly, mu: complex = 0.0, tol: float = 1e-12) -> StabilityReport:
    """Root magnitudes and a stable/boundary/unstable verdict.

    Within ``tol`` of modulus one the verdict is "boundary": the root condition
    does not decide stability there.
    """
    mags = tuple(sorted((abs(z) for z in p.roots()), reverse=True))
    if abs(mags[0] - 1) <= tol:
        status = "boundary"
    elif mags[0] < 1:
        status = "stable"
    else:
        status = "unstable"
    return StabilityReport(mu, p, mags, mags[0] < 1, status)


def consistency_residual(method: MethodSpec, grid, p: int) -> float:
    """Worst defect of the method on polynomials of degree <= p over ``grid``."""
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or len(t) < 3:
        raise ValueError("grid needs at least three points")
    if p not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    h = np.diff(t)
    if np.any(h <= 0):
        raise ValueError("grid must be strictly increasing")
    worst = 0.0
    for n in range(len(t) - 2):
        h0, h1 = h[n], h[n + 1]
        co = method.coefficients(h1 / h0, n)
        worst = max(worst, abs(1 + co.a + co.b))
        if p == 1:
            # q(t) = t - t_{n+1}: q(t_{n+2}) = h1, q(t_{n+1}) = 0, q(t_n) = -h0, q' = 1
            worst = max(worst, abs(h1 - co.b * h0 - h1 * (co.c - co.d)))
    return worst


class ZeroStabilityBounds(NamedTuple):
    prod_bound: float
    sum_bound: float

    def bounded(self, threshold: float = 1e6) -> bool:
        return self.prod_bound <= threshold and self.sum_bound <= threshold


def zero_stability_profile(b_seq: Callable[[int], float], n_max: int, cap: float = math.inf):
    """Per start index n: max_l |prod b_i| and max_l |sum_j prod (-b_i)|, n+l <= n_max.

    Once a product bound exceeds ``cap`` the scan stops; the remaining
    entries are NaN and the returned maxima are lower bounds.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    neg_b = -np.array([b_seq(i) for i in range(n_max + 1)], dtype=float)
    prod_max = np.full(n_max + 1, np.nan)
    sum_max = np.full(n_max + 1, np.nan)
    terms = np.empty(n_max + 2)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_max + 1):
            m = n_max + 1 - n
            terms[0] = 1.0
            np.cumprod(neg_b[n:], out=terms[1:m + 1])
            # |prod b| = |prod (-b)|
            pm = np.max(np.abs(terms[1:m + 1]))
            prod_max[n] = np.inf if np.isnan(pm) else pm
            sm = np.max(np.abs(np.cumsum(terms[:m])))
            sum_max[n] = np.inf if np.isnan(sm) else sm
            if prod_max[n] > cap:
                break
    return prod_max, sum_max


def zero_stability_bounds(b_seq: Callable[[int], float], n_max: int,
                          cap: float = math.inf) -> ZeroStabilityBounds:
    """Empirical M_1, M_2 for the scalar companion recursion of a two-step method."""
    prod_max, sum_max = zero_stability_profile(b_seq, n_max, cap)
    return ZeroStabilityBounds(float(np.nanmax(prod_max)), float(np.nanmax(sum_max)))


def b_sequence(method: MethodSpec, s: StepSchedule) -> Callable[[int], float]:
    return lambda n: method.coefficients(s.ratio(n), n).b


def region_boundary(limit_coeffs: tuple, num_samples: int) -> RegionBoundary:
    """Trace mu(theta) = (z^2 - (1+b) z + b) / (c_hat z - d_hat), z = e^{i theta}."""
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    b, c_hat, d_hat = limit_coeffs
    thetas = 2 * np.pi * np.arange(num_samples) / num_samples
    z = np.exp(1j * thetas)
    # exact values on the real axis keep the intercepts free of rounding
    z[thetas == 0] = 1.0
    if num_samples % 2 == 0:
        z[num_samples // 2] = -1.0
    den = c_hat * z - d_hat
    ok = np.abs(den) >= 1e-12
    gaps = tuple(float(th) for th in thetas[~ok])
    mu = (z[ok] ** 2 - (1 + b) * z[ok] + b) / den[ok]
    return RegionBoundary(thetas[ok], mu, gaps)


def _check_r_domain(w, mu):
    if not (1 < w < 5 / 3):
        raise ValueError("w must lie in (1, 5/3)")
    if not (-1 <= mu <= 0):
        raise ValueError("mu must lie in [-1, 0]")


def mu_star(w: float) -> float:
    """Junction between complex and real roots: -(3w-3)^2 / (5-3w)^2."""
    return -((3 * w - 3) ** 2) / (5 - 3 * w) ** 2


def nag_r_curve(w: float, mu: float) -> float:
    """Largest root modulus of NAG-c's R_n, with mu normalised to [-1, 0].

    The normalisation here has NAG-c's gradient terms scaled so that its
    largest stable step maps to mu = -1; in the raw variable of
    :func:`characteristic_poly` this is mu / 4.
    """
    _check_r_domain(w, mu)
    ms = mu_star(w)
    if mu <= ms:
        return math.sqrt((4 - 3 * w) * (1 + mu))
    return (5 - 3 * w) / 2 * (1 + mu + math.sqrt((1 + mu) * (mu - ms)))


def proposed_r_curve(w: float, mu: float) -> float:
    """Largest root modulus of the proposed method's R_n."""
    _check_r_domain(w, mu)
    root_b = abs(4 - 3 * w)
    if mu <= mu_star(w):
        # complex pair: modulus sqrt(b) by Vieta
        return root_b
    f = 5 - 3 * w
    q = f * f
    one_minus = f if w >= 4 / 3 else 3 * w - 3  # 1 - sqrt(b)
    p = 1 + root_b * root_b + mu * q
    # p^2 - 4b factored so that the double root at (1 - sqrt(b))^2 = -mu q is exact
    disc = (one_minus * one_minus + mu * q) * (p + 2 * root_b)
    return (p + math.sqrt(max(disc, 0.0))) / 2


def _reference_radius(coeff_fn, w: float, mu: float, mu_scale: int) -> float:
    # Float evaluation, redone in exact rationals when the roots nearly
    # coincide: there a rounding of d in the discriminant moves the roots by
    # sqrt(d), about 1e-8, instead of d / sqrt(disc).
    p = characteristic_poly(coeff_fn(w), mu / mu_scale, w)
    b, c = complex(p.b).real, complex(p.c).real
    if abs(b * b - 4 * c) >= 1e-6 * max(1.0, b * b):
        return spectral_radius(p)
    wq, muq = Fraction(w), Fraction(mu)
    return spectral_radius(characteristic_poly(coeff_fn(wq), muq / mu_scale, wq))


def nag_r_reference(w: float, mu: float) -> float:
    """nag_r_curve via the generic polynomial machinery."""
    return _reference_radius(nag_c_vlm_coefficients, w, mu, 4)


def proposed_r_reference(w: float, mu: float) -> float:
    return _reference_radius(proposed_coefficients, w, mu, 1)


class DahlquistRun(NamedTuple):
    magnitudes: np.ndarray
    diverged: bool


def dahlquist_run(method: MethodSpec, s: StepSchedule, lam: complex, n_iters: int,
                  x0: complex = 1.0, overflow: float = 1e100) -> DahlquistRun:
    """Apply ``method`` to x' = lam x with x_1 = x_0 and return |x_n|, n = 0..n_iters.

    Stops early (diverged=True) once |x_n| exceeds ``overflow``.
    """
    if not complex(lam).real < 0:
        raise ValueError("lam must have negative real part")
    if n_iters < 1:
        raise ValueError("n_iters must be positive")
    xs = [complex(x0), complex(x0)]
    if method.needs_order1_start:
        xs[1] = xs[0] * (1 + lam * s.step(0))
    for n in range(n_iters - 1):
        co = method.coefficients(s.ratio(n), n)
        hl = s.step(n + 1) * lam
        x_next = (-co.a + hl * co.c) * xs[-1] + (-co.b - hl * co.d) * xs[-2]
        xs.append(x_next)
        if not abs(x_next) <= overflow:
            return DahlquistRun(np.abs(np.array(xs)), True)
    return DahlquistRun(np.abs(np.array(xs)), False)


def adams_characteristic(mu_next: float, w: float) -> QuadraticPoly:
    """Variable-step explicit two-step Adams on x' = lam x, mu_next = lam h_{n+1}."""
    if not w > 0:
        raise ValueError("w must be positive")
    return QuadraticPoly(-(1 + mu_next / 2 * (2 + w)), mu_next / 2 * w)


def tech_lemma_sums(gamma_hat: float, n: int, l_max: int) -> np.ndarray:
    """S_{n,l} for l = 0..l_max by a rolling product."""
    if gamma_hat <= 0:
        raise ValueError("gamma_hat must be positive")
    i = np.arange(n, n + l_max, dtype=float)
    ratios = -(i - 3 + gamma_hat) / (i + gamma_hat)
    terms = np.empty(l_max + 1)
    terms[0] = 1.0
    terms[1:] = np.cumprod(ratios)
    # overall sign (-1)^{-1} does not affect the modulus
    return np.abs(np.cumsum(terms))


def tech_lemma_sum(gamma_hat: float, n: int, l: int) -> float:
    return float(tech_lemma_sums(gamma_hat, n, l)[l])
