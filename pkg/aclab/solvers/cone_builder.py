"""O(m) x O(k)-invariant one-homogeneous cones U = r g(theta).

Points of R^d = R^m x R^k are parametrized by (rho, sigma) = (|x'|, |x''|) and on
the unit sphere by theta with rho = cos(theta), sigma = sin(theta). Harmonicity of
r g(theta) reduces to

    g'' + [(k-1) cot(theta) - (m-1) tan(theta)] g' + (d-1) g = 0,

which is shot from the regular singular point theta = pi/2 towards theta = 0.
The positive set is {theta > theta_fb} and g'(theta_fb) = 1 makes |grad U| = 1
on the free boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import special
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from aclab.solvers.errors import NoZeroCrossing, NonConvergent, QuadratureFailure
from utils.logger import log_event

SERIES_START = 1e-6
THETA_FLOOR = 1e-7
BASE_STEPS = 256
MAX_HALVINGS = 9
GAUSS_ORDER = 8
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


@dataclass(frozen=True)
class SymmetrySplit:
    m: int
    k: int

    def __post_init__(self):
        if self.m < 1 or self.k < 1:
            raise ValueError(f"split factors must be >= 1, got ({self.m}, {self.k})")

    @property
    def d(self) -> int:
        return self.m + self.k

    @property
    def is_flat(self) -> bool:
        return self.k == 1

    def __str__(self) -> str:
        return f"{self.m},{self.k}"


def sphere_area(n: int) -> float:
    """|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0)


def section_constant(split: SymmetrySplit) -> float:
    """Area constant of the product of spheres; a k = 1 factor counts one side only."""
    second = 1.0 if split.k == 1 else sphere_area(split.k)
    return sphere_area(split.m) * second


def weight(theta, split: SymmetrySplit):
    """w(theta) = cos^{m-1} sin^{k-1}."""
    theta = np.asarray(theta, dtype=float)
    return np.cos(theta) ** (split.m - 1) * np.sin(theta) ** (split.k - 1)


def drift(theta, split: SymmetrySplit):
    """(k-1) cot(theta) - (m-1) tan(theta); the k = 1 term is dropped at theta = 0."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = np.where(split.k > 1, (split.k - 1) / np.tan(theta), 0.0)
        tan = np.where(split.m > 1, (split.m - 1) * np.tan(theta), 0.0)
    return cot - tan


def mean_curvature(theta_fb: float, split: SymmetrySplit) -> float:
    cot = 0.0 if split.k == 1 else (split.k - 1) / math.tan(theta_fb)
    return cot - (split.m - 1) * math.tan(theta_fb)


@dataclass(frozen=True, eq=False)
class ConeProfile:
    d: int
    split: SymmetrySplit
    theta_fb: float
    theta: np.ndarray
    g: np.ndarray
    g_prime: np.ndarray
    H: float
    weiss_density: float
    admissible: bool
    certified_error: float = 0.0
    residual: float = 0.0

    @property
    def is_flat(self) -> bool:
        return abs(self.H) <= 1e-9 and self.theta_fb <= 1e-9

    @cached_property
    def spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.theta, self.g, self.g_prime)

    @property
    def g_second(self) -> np.ndarray:
        return second_derivative(self.theta, self.g, self.g_prime, self.split)

    def header(self) -> Dict[str, object]:
        return {
            "d": self.d,
            "m": self.split.m,
            "k": self.split.k,
            "theta_fb": self.theta_fb,
            "H": self.H,
            "weiss_density": self.weiss_density,
            "admissible": self.admissible,
        }


@dataclass(frozen=True)
class SectionIntegrals:
    hessian_sq: float
    mean_curv_total: float
    section_area: float


def second_derivative(theta, g, g_prime, split: SymmetrySplit) -> np.ndarray:
    """g'' read off the ODE; the limit at theta = pi/2 is 2a g(pi/2)."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g, dtype=float)
    g_prime = np.asarray(g_prime, dtype=float)
    at_pole = np.isclose(theta, math.pi / 2, rtol=0.0, atol=1e-14)
    safe = np.where(at_pole, math.pi / 4, theta)
    out = -drift(safe, split) * g_prime - (split.d - 1) * g
    a = -(split.d - 1) / (2.0 * split.m)
    return np.where(at_pole, 2.0 * a * g, out)


# --- shooting -----------------------------------------------------------------


def _rhs(s: float, y: np.ndarray, m: int, k: int, d: int) -> List[float]:
    # ODE in s = pi/2 - theta: h_ss = (k-1) tan(s) h_s - (m-1) cot(s) h_s - (d-1) h
    h, hs = y
    acc = -(d - 1) * h
    if m > 1:
        acc -= (m - 1) * hs / math.tan(s)
    if k > 1:
        acc += (k - 1) * math.tan(s) * hs
    return [hs, acc]


def _crossing(s: float, y: np.ndarray, *args) -> float:
    return y[0]


_crossing.terminal = True
_crossing.direction = -1


def _series_start(split: SymmetrySplit, s0: float = SERIES_START) -> Tuple[float, float]:
    """h = 1 + a s^2 + b s^4 near s = 0, with h_s from the same series."""
    m, k, d = split.m, split.k, split.d
    a = -(d - 1) / (2.0 * m)
    b = a * (2.0 * (m - 1) / 3.0 + 2.0 * (k - 1) - (d - 1)) / (4.0 * (m + 2))
    return 1.0 + a * s0**2 + b * s0**4, 2.0 * a * s0 + 4.0 * b * s0**3


class _Shooter:
    """DOP853 march in s for one refinement level; each level halves the step cap."""

    def __init__(self, split: SymmetrySplit, level: int):
        self.split = split
        self.level = level
        scale = 2.0**level
        self.max_step = (math.pi / 2) / (BASE_STEPS * scale)
        self.q_m = 0.5 / max(split.m - 1, 1) / scale
        self.q_k = 0.5 / max(split.k - 1, 1) / scale
        self.s_end = math.pi / 2 if split.k == 1 else math.pi / 2 - THETA_FLOOR

    def step_size(self, s: float) -> float:
        step = min(self.max_step, self.q_m * s)
        if self.split.k > 1:
            step = min(step, self.q_k * (math.pi / 2 - s))
        return step

    def _solve(self, target: float, stop_on_zero: bool):
        m, k, d = self.split.m, self.split.k, self.split.d
        sol = solve_ivp(
            _rhs,
            (SERIES_START, target),
            _series_start(self.split),
            method="DOP853",
            args=(m, k, d),
            rtol=ODE_RTOL,
            atol=ODE_ATOL,
            max_step=self.max_step,
            events=_crossing if stop_on_zero else None,
            dense_output=True,
        )
        if sol.status < 0:
            raise NonConvergent(f"split ({self.split}): {sol.message}")
        return sol

    def samples(self, stop: float) -> np.ndarray:
        """Graded sample points on [SERIES_START, stop], denser near both singular ends."""
        s = SERIES_START
        out = [s]
        while stop - s > 1e-15:
            s = min(s + self.step_size(s), stop)
            out.append(s)
        out[-1] = stop
        return np.asarray(out)

    def march(self, stop_at: float | None = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integrate to ``stop_at`` (or to the first sign change, when None)."""
        target = self.s_end if stop_at is None else stop_at
        sol = self._solve(target, stop_on_zero=stop_at is None)
        ss = self.samples(float(sol.t[-1]))
        h, hs = sol.sol(ss)
        return ss, h, hs

    def first_zero(self, tol: float) -> float:
        """s of the first zero of h, located by the integrator's event search."""
        sol = self._solve(self.s_end, stop_on_zero=True)
        if sol.t_events[0].size:
            return min(float(sol.t_events[0][0]), math.pi / 2)
        h_end = float(sol.y[0, -1])
        if self.split.k == 1 and math.isfinite(h_end) and abs(h_end) <= 100.0 * tol:
            return math.pi / 2
        raise NoZeroCrossing(f"split ({self.split}) keeps h > 0 on (0, pi/2]")


def _five_point_derivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative at x[2:-2] from centred 5-point Lagrange stencils (nonuniform)."""
    n = len(x)
    centre = x[2 : n - 2]
    stencil = [x[j : n - 4 + j] for j in range(5)]
    values = [y[j : n - 4 + j] for j in range(5)]
    out = np.zeros_like(centre)
    for j in range(5):
        wj = np.zeros_like(centre)
        for i in range(5):
            if i == j:
                continue
            term = 1.0 / (stencil[j] - stencil[i])
            for l in range(5):
                if l in (i, j):
                    continue
                term = term * (centre - stencil[l]) / (stencil[j] - stencil[l])
            wj = wj + term
        out = out + wj * values[j]
    return out


def ode_residual(theta: np.ndarray, g: np.ndarray, g_prime: np.ndarray, split: SymmetrySplit) -> float:
    """max |g'' + drift g' + (d-1) g| over interior samples, g'' by 5-point stencils of g'."""
    if len(theta) < 7:
        return 0.0
    g2 = _five_point_derivative(theta, g_prime)
    inner = slice(2, len(theta) - 2)
    th = theta[inner]
    # skip the pole sample, where drift * g' is a 0 * inf limit
    keep = th < math.pi / 2 - 0.5 * SERIES_START
    res = g2 + drift(th, split) * g_prime[inner] + (split.d - 1) * g[inner]
    return float(np.max(np.abs(res[keep]))) if np.any(keep) else 0.0


def shoot_profile(d: int, split: SymmetrySplit, tol: float = 1e-10) -> ConeProfile:
    """Shoot the angular ODE, certify theta_fb by step halving and normalize g'(theta_fb) = 1."""
    if not 3 <= d <= 32:
        raise ValueError(f"d must lie in 3..32, got {d}")
    if split.d != d:
        raise ValueError(f"split {split} does not sum to d = {d}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    previous = None
    zero_s = None
    level = 0
    for level in range(MAX_HALVINGS):
        current = _Shooter(split, level).first_zero(tol)
        if previous is not None and abs(current - previous) < tol:
            zero_s = current
            break
        previous = current
    if zero_s is None:
        raise NonConvergent(f"split ({split}): theta_fb not certified to {tol:g} after {MAX_HALVINGS} halvings")
    certified = abs(zero_s - previous)

    shooter = _Shooter(split, level)
    ss, hh, hd = shooter.march(stop_at=zero_s)
    s_arr = np.asarray(ss)
    h_arr = np.asarray(hh)
    hs_arr = np.asarray(hd)
    scale = -hs_arr[-1]
    if not scale > 0.0:
        raise NonConvergent(f"split ({split}): non-positive slope at the free boundary")

    theta = np.concatenate([[math.pi / 2], math.pi / 2 - s_arr])[::-1].copy()
    g = np.concatenate([[1.0], h_arr])[::-1] / scale
    g_prime = np.concatenate([[0.0], -hs_arr])[::-1] / scale
    theta_fb = float(math.pi / 2 - zero_s)
    if theta_fb < tol:
        theta_fb = 0.0
    theta[0] = theta_fb
    g[0] = 0.0
    g_prime[0] = 1.0

    H = 0.0 if theta_fb == 0.0 else mean_curvature(theta_fb, split)
    positive = bool(np.all(g[1:] > 0.0))
    admissible = positive and H >= -tol
    residual = ode_residual(theta, g, g_prime, split)

    density = float(section_constant(split) * _weight_integral(theta_fb, split) / d)
    profile = ConeProfile(
        d=d,
        split=split,
        theta_fb=theta_fb,
        theta=theta,
        g=g,
        g_prime=g_prime,
        H=float(H),
        weiss_density=density,
        admissible=admissible,
        certified_error=float(certified),
        residual=residual,
    )
    log_event(
        "cone",
        "profile certified",
        {"d": d, "split": str(split)},
        theta_fb=theta_fb,
        H=H,
        admissible=admissible,
        halvings=level,
    )
    return profile


def enumerate_splits(d: int) -> List[SymmetrySplit]:
    return [SymmetrySplit(m, d - m) for m in range(1, d)]


def shoot_all(d: int, tol: float = 1e-10) -> Dict[SymmetrySplit, ConeProfile]:
    """Profiles for every split of d that admits a zero crossing."""
    out: Dict[SymmetrySplit, ConeProfile] = {}
    for split in enumerate_splits(d):
        try:
            out[split] = shoot_profile(d, split, tol)
        except (NoZeroCrossing, NonConvergent) as e:
            log_event("cone", "split skipped", {"d": d, "split": str(split)}, reason=str(e))
    return out


# --- quadrature on the section -------------------------------------------------


def _weight_integral(theta_fb: float, split: SymmetrySplit) -> float:
    """Closed form of int_{theta_fb}^{pi/2} cos^{m-1} sin^{k-1} via the incomplete Beta."""
    a, b = split.k / 2.0, split.m / 2.0
    full = special.beta(a, b)
    return 0.5 * full * (1.0 - special.betainc(a, b, math.sin(theta_fb) ** 2))


def gauss_panels(
    fn: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    panels: int,
    order: int = GAUSS_ORDER,
) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    vals = np.asarray(fn(x), dtype=float).reshape(panels, order)
    return float(np.sum(vals * weights[None, :] * half[:, None]))


def refined_quad(
    fn: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    rtol: float = 1e-10,
    panels: int = 128,
    max_panels: int = 8192,
) -> float:
    """Composite Gauss-Legendre, doubling panels until two levels agree."""
    coarse = gauss_panels(fn, lo, hi, panels)
    while panels < max_panels:
        panels *= 2
        fine = gauss_panels(fn, lo, hi, panels)
        if abs(fine - coarse) <= rtol * max(1.0, abs(fine)):
            return fine
        coarse = fine
    raise QuadratureFailure(f"quadrature on [{lo:.6g}, {hi:.6g}] did not settle to {rtol:g}")


def _profile_values(profile: ConeProfile, theta: np.ndarray):
    th = np.clip(theta, profile.theta_fb, math.pi / 2)
    g = profile.spline(th)
    gp = profile.spline(th, 1)
    g2 = second_derivative(th, g, gp, profile.split)
    return th, g, gp, g2


def hessian_sq_density(profile: ConeProfile, theta: np.ndarray) -> np.ndarray:
    """|D^2 U|^2 at r = 1 in the orthonormal frame.

    e_theta: g'' + g; (k-1) directions: cot g' + g; (m-1) directions: -tan g' + g;
    radial: 0. The trace is the ODE left side.
    """
    m, k = profile.split.m, profile.split.k
    th, g, gp, g2 = _profile_values(profile, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        second = np.where(k > 1, g + gp / np.tan(th), 0.0)
        first = np.where(m > 1, g - np.tan(th) * gp, 0.0)
    return (g2 + g) ** 2 + (k - 1) * second**2 + (m - 1) * first**2


def section_integrals(profile: ConeProfile, rtol: float = 1e-10) -> SectionIntegrals:
    split = profile.split
    const = section_constant(split)
    lo, hi = profile.theta_fb, math.pi / 2
    hess = refined_quad(lambda t: hessian_sq_density(profile, t) * weight(t, split), lo, hi, rtol)
    area = refined_quad(lambda t: weight(t, split), lo, hi, rtol)
    w_fb = float(weight(profile.theta_fb, split))
    return SectionIntegrals(
        hessian_sq=const * hess,
        mean_curv_total=const * profile.H * w_fb,
        section_area=const * area,
    )


def weiss_density_report(profile: ConeProfile, rtol: float = 1e-11) -> Tuple[float, float]:
    """(|{U>0} cap B_1| by quadrature, E(U;B_1) - int_{dB_1} U^2 by quadrature)."""
    split, d = profile.split, profile.d
    const = section_constant(split)
    lo, hi = profile.theta_fb, math.pi / 2

    def grad_sq(t):
        _, g, gp, _ = _profile_values(profile, t)
        return (g**2 + gp**2) * weight(t, split)

    def trace_sq(t):
        _, g, _, _ = _profile_values(profile, t)
        return g**2 * weight(t, split)

    area = const * refined_quad(lambda t: weight(t, split), lo, hi, rtol)
    volume = area / d
    # int_{B_1} |grad U|^2 = (1/d) int_S (g^2 + g'^2) for 1-homogeneous U
    energy = const * refined_quad(grad_sq, lo, hi, rtol) / d + volume
    boundary = const * refined_quad(trace_sq, lo, hi, rtol)
    return volume, energy - boundary


def weiss_density(profile: ConeProfile, agreement: float = 1e-8) -> float:
    volume, weiss = weiss_density_report(profile)
    if abs(volume - weiss) > agreement * max(1.0, volume):
        raise QuadratureFailure(
            f"density {volume:.12g} and Weiss evaluation {weiss:.12g} disagree beyond {agreement:g}"
        )
    return volume


def evaluate_cone(profile: ConeProfile, rho, sigma):
    """U(rho, sigma) = r g(theta) on {theta >= theta_fb}, else 0."""
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    r = np.hypot(rho, sigma)
    theta = np.arctan2(sigma, rho)
    inside = theta >= profile.theta_fb
    vals = profile.spline(np.clip(theta, profile.theta_fb, math.pi / 2))
    out = np.where(inside, r * vals, 0.0)
    return float(out) if out.ndim == 0 else out


def gradient_norm_sq(profile: ConeProfile) -> np.ndarray:
    """|grad U|^2 = g^2 + g'^2 on the unit sphere, per sample."""
    return profile.g**2 + profile.g_prime**2


__all__ = [
    "SymmetrySplit",
    "ConeProfile",
    "SectionIntegrals",
    "sphere_area",
    "ball_volume",
    "section_constant",
    "weight",
    "mean_curvature",
    "second_derivative",
    "ode_residual",
    "shoot_profile",
    "enumerate_splits",
    "shoot_all",
    "gauss_panels",
    "refined_quad",
    "hessian_sq_density",
    "section_integrals",
    "weiss_density_report",
    "weiss_density",
    "evaluate_cone",
    "gradient_norm_sq",
]
