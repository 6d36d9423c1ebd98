"""Linearized probe, zero counting and the weights H, π.

The probe solves

    f'' + ((n+1)/ρ + ρ/2 + 2ρu) f' + (1 − λ) f + μ(4n u + 2ρ u') f = 0,
    f(0) = 1, f'(0) = 0,

with u the profile at the same α.  The profile is re-integrated alongside f
from the same series launch, so the coefficients are exact to the step
tolerance rather than interpolated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .profile import ProfileSolution, _cumulative_hermite
from .radial_ivp import (DEFAULT_LAUNCH_RADIUS, DEFAULT_ORDER, IvpResult, find_sign_changes,
                         integrate, launch_series, probe_ode)

DEFAULT_PROBE_RMAX = 50.0
RMAX_CAP = 800.0


class CountNotStabilizedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EigenProbe:
    n: int
    alpha: float
    lam: float
    mu: float
    grid: np.ndarray
    f: np.ndarray
    df: np.ndarray
    zeros: tuple
    rmax: float
    ivp: IvpResult = field(repr=False, compare=False)

    @property
    def count(self) -> int:
        return len(self.zeros)

    def at(self, rho):
        """(f, f') at radii in [0, rmax]; the series covers the launch disc."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        f, df = np.empty_like(rho), np.empty_like(rho)
        inner = rho < self.ivp.grid[0]
        if np.any(~inner):
            f[~inner], df[~inner] = self.ivp.evaluate(rho[~inner], 2)
        for k in np.nonzero(inner)[0]:
            s = self.ivp.launch.evaluate(rho[k])
            f[k], df[k] = s[2], s[3]
        return f, df


def probe(n: int, alpha: float, lam: float = 0.0, mu: float = 1.0,
          rmax: float = DEFAULT_PROBE_RMAX, tol: float = 1e-10, scale: float = 1.0,
          f0: float = 1.0, backend=None) -> EigenProbe:
    """Shooting solution for (α, λ, μ) without building a ProfileSolution first."""
    ode = probe_ode(n, lam, mu, scale)
    launch = launch_series(ode, (alpha, f0), DEFAULT_ORDER, DEFAULT_LAUNCH_RADIUS)
    res = integrate(ode, launch, rmax, tol, atol=tol * 1e-14 * max(alpha, abs(f0), 1.0),
                    backend=backend)
    if res.termination_reason != "reached_rmax":
        raise ArithmeticError(f"probe integration stopped: {res.termination_reason} "
                              f"at rho = {res.terminated_at:.6g}")
    zeros = tuple(find_sign_changes(res, 2))
    grid = np.concatenate([[0.0], res.grid])
    f = np.concatenate([[f0], res.states[:, 2]])
    df = np.concatenate([[0.0], res.states[:, 3]])
    return EigenProbe(int(n), float(alpha), float(lam), float(mu), grid, f, df, zeros,
                      float(rmax), res)


def solve_linearized(sol: ProfileSolution, lam: float = 0.0, mu: float = 1.0,
                     rmax: float | None = None, tol: float | None = None) -> EigenProbe:
    """Probe at the profile's (n, α); rmax defaults to the profile's range."""
    return probe(sol.n, sol.alpha, lam, mu, sol.rmax if rmax is None else rmax,
                 sol.tol if tol is None else tol)


@dataclass(frozen=True)
class StabilizedCount:
    count: int
    rmax: float
    counts: tuple  # (rmax, count) per tried radius
    tail_sign: int
    stabilized: bool

    def as_dict(self) -> dict:
        return {"count": self.count, "rmax": self.rmax,
                "counts": [list(c) for c in self.counts], "tail_sign": self.tail_sign,
                "stabilized": self.stabilized}


def _tail_sign(p: EigenProbe, lo: float) -> int:
    seg = p.f[p.grid >= lo]
    s = np.sign(seg)
    if s.size == 0 or np.any(s == 0) or not (np.all(s > 0) or np.all(s < 0)):
        return 0
    return int(s[0])


def stabilized_count(n: int, alpha: float, lam: float = 0.0, mu: float = 1.0,
                     rmax: float = DEFAULT_PROBE_RMAX, cap: float = RMAX_CAP,
                     tol: float = 1e-10) -> StabilizedCount:
    """Zero count that is unchanged when rmax doubles and whose tail keeps one sign.

    The count at rmax is compared with a run to 2·rmax; the fixed-sign
    requirement applies to the last decade [rmax/10, rmax] of the longer run.
    Radii double up to ``cap``.
    """
    tried = []
    r = float(rmax)
    longer = probe(n, alpha, lam, mu, 2 * r, tol)
    while True:
        c_short = sum(1 for z in longer.zeros if z <= r)
        c_long = longer.count
        tried.append((r, c_short))
        sign = _tail_sign(longer, r / 5)
        if c_short == c_long and sign != 0:
            return StabilizedCount(c_long, r, tuple(tried + [(2 * r, c_long)]), sign, True)
        if 2 * r >= cap:
            return StabilizedCount(c_long, 2 * r, tuple(tried + [(2 * r, c_long)]), sign, False)
        r *= 2
        longer = probe(n, alpha, lam, mu, 2 * r, tol)


def count_unstable_eigenvalues(sol: ProfileSolution, lam: float = 0.0,
                               rmax: float = DEFAULT_PROBE_RMAX) -> int:
    """Number of eigenvalues of the weighted realization of L_α strictly above λ.

    By oscillation theory this is the zero count of the λ-shifted probe.
    """
    sc = stabilized_count(sol.n, sol.alpha, lam, 1.0, rmax, max(2 * rmax, RMAX_CAP), sol.tol)
    if not sc.stabilized:
        raise CountNotStabilizedError(
            f"zero count not stable up to rmax = {sc.rmax:g}; increase rmax")
    return sc.count


@dataclass(frozen=True)
class WeightFunctions:
    """log H(ρ) = ∫₁^ρ ((n+1)/s + s/2 + s u) ds and log π(ρ) = ∫₀^ρ (s/2 + s u) ds.

    Both are tabulated on the profile nodes; ``logH``/``logpi`` evaluate them
    anywhere in range by integrating the cubic Hermite interpolant of s·u.
    """

    n: int
    grid: np.ndarray
    log_H: np.ndarray
    log_pi: np.ndarray
    su_integral: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    du: np.ndarray = field(repr=False)

    def integral_su(self, rho):
        """∫₀^ρ s u(s) ds."""
        rho = np.asarray(rho, dtype=float)
        g = self.grid
        j = np.clip(np.searchsorted(g, rho, side="right") - 1, 0, g.size - 2)
        h = g[j + 1] - g[j]
        x = (rho - g[j]) / h
        y0, y1 = g[j] * self.u[j], g[j + 1] * self.u[j + 1]
        d0 = self.u[j] + g[j] * self.du[j]
        d1 = self.u[j + 1] + g[j + 1] * self.du[j + 1]
        x2, x3, x4 = x * x, x ** 3, x ** 4
        return self.su_integral[j] + h * ((x4 / 2 - x3 + x) * y0
                                          + (x4 / 4 - 2 * x3 / 3 + x2 / 2) * h * d0
                                          + (-x4 / 2 + x3) * y1
                                          + (x4 / 4 - x3 / 3) * h * d1)

    def logH(self, rho):
        rho = np.asarray(rho, dtype=float)
        return ((self.n + 1) * np.log(rho) + (rho ** 2 - 1) / 4
                + self.integral_su(rho) - self.integral_su(1.0))

    def logpi(self, rho):
        rho = np.abs(np.asarray(rho, dtype=float))
        return rho ** 2 / 4 + self.integral_su(rho)

    def H(self, rho):
        return np.exp(self.logH(rho))

    def pi(self, rho):
        return np.exp(self.logpi(rho))


def weights_from_nodes(n: int, grid, u, du) -> WeightFunctions:
    grid, u, du = (np.asarray(v, dtype=float) for v in (grid, u, du))
    I = _cumulative_hermite(grid, grid * u, u + grid * du)
    w = WeightFunctions(n, grid, np.empty(0), grid ** 2 / 4 + I, I, u, du)
    one = float(w.integral_su(1.0))
    with np.errstate(divide="ignore"):
        logH = (n + 1) * np.log(grid) + (grid ** 2 - 1) / 4 + I - one
    object.__setattr__(w, "log_H", logH)
    return w


def weights(sol: ProfileSolution) -> WeightFunctions:
    return weights_from_nodes(sol.n, sol.grid, sol.u, sol.du)


class MuClass(str, enum.Enum):
    SUBCRITICAL_POSITIVE = "subcritical_positive"
    CRITICAL_CANDIDATE = "critical_candidate"
    SUPERCRITICAL_OSCILLATING = "supercritical_oscillating"


def green_integral(p: EigenProbe, lo: float = 1.0) -> tuple[float, float]:
    """(∫_lo^rmax dρ/(H f²), tail estimate beyond rmax).

    Far out 1/(H f²) behaves like e^{-ρ²/4} times a power, so the tail beyond
    R is bounded by g(R)·2/R.
    """
    u = np.concatenate([[p.alpha], p.ivp.states[:, 0]])
    du = np.concatenate([[0.0], p.ivp.states[:, 1]])
    w = weights_from_nodes(p.n, p.grid, u, du)
    r = p.grid
    sel = r >= lo
    rr = r[sel]
    with np.errstate(divide="ignore", over="ignore"):
        logg = -w.log_H[sel] - 2 * np.log(np.abs(p.f[sel]))
    shift = np.max(logg)
    if not np.isfinite(shift):
        return float("inf"), float("inf")
    gs = np.exp(logg - shift)
    total = np.trapezoid(gs, rr) if hasattr(np, "trapezoid") else np.trapz(gs, rr)
    R = rr[-1]
    tail = gs[-1] * 2 / R
    return float(total * np.exp(shift)), float(tail * np.exp(shift))


def classify_mu(sol: ProfileSolution, lam: float, mu: float,
                rmax: float = DEFAULT_PROBE_RMAX) -> MuClass:
    """Position of μ relative to the principal coupling μ̄ at shift λ > 0."""
    if not lam > 0:
        raise ValueError("classification needs lambda > 0")
    p = solve_linearized(sol, lam, mu, rmax)
    if p.count:
        return MuClass.SUPERCRITICAL_OSCILLATING
    total, tail = green_integral(p)
    if np.isfinite(total) and tail < 0.01 * total:
        return MuClass.SUBCRITICAL_POSITIVE
    return MuClass.CRITICAL_CANDIDATE
