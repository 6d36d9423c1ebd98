"""Series launch and adaptive integration for radial ODEs singular at the origin.

Every system is written in first-order form.  Second-order radial unknowns
occupy consecutive slots ``(value, derivative)``; the profile/probe systems
carry ``(u, u', f, f')``.  The stepping itself lives in the compiled core
(``ksi._core``) with a pure-Python twin selected at import.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _backend
from ._pycore import rhs as _py_rhs

FLAT, PROFILE, PROBE, EMDEN, ZETA = range(5)

DEFAULT_LAUNCH_RADIUS = 1e-2
DEFAULT_ORDER = 12
BLOWUP_CEILING = 1e8
ROOT_XTOL = 1e-10


class SeriesDivergenceError(ArithmeticError):
    """Power series coefficients grow too fast for the requested launch radius."""


@dataclass(frozen=True)
class RadialOdeSpec:
    """A system known to the integration core.

    ``scale`` multiplies the Ornstein-Uhlenbeck part (drift ρ/2 and the zeroth
    order term); 1 gives the profile equation, 1/α the rescaled one and 0 the
    limit system.
    """

    system: int
    n: int
    scale: float = 1.0
    lam: float = 0.0
    mu: float = 1.0
    singular: bool = True

    @property
    def params(self) -> np.ndarray:
        return np.array([self.scale, self.lam, self.mu], dtype=float)

    @property
    def dim(self) -> int:
        return 4 if self.system == PROBE else 2

    @property
    def value_index(self) -> int:
        return 2 if self.system == PROBE else 0

    def rhs(self, rho: float, y: Sequence[float]) -> list[float]:
        return _py_rhs(self.system, self.n, list(self.params), rho, list(y))

    def series(self, initial: Sequence[float], order: int) -> np.ndarray:
        """Taylor coefficients about ρ=0 of the even smooth solution.

        Returns an array of shape (components, order+1).
        """
        n, s = self.n, self.scale
        K = order
        if self.system == FLAT:
            a = np.zeros(K + 1)
            a[0] = initial[0]
            return a[None, :]
        if self.system not in (PROFILE, PROBE):
            raise ValueError("series launch needs a system singular at the origin")
        a = np.zeros(K + 1)
        a[0] = initial[0]
        for k in range(0, K - 1):
            conv = sum((2 * n + 2 * j) * a[k - j] * a[j] for j in range(k + 1))
            a[k + 2] = -(s * (k / 2 + 1) * a[k] + conv) / ((k + 2) * (k + n + 2))
        if self.system == PROFILE:
            return a[None, :]
        b = np.zeros(K + 1)
        b[0] = initial[1] if len(initial) > 1 else 1.0
        lam, mu = self.lam, self.mu
        for k in range(0, K - 1):
            conv = sum((2 * j + mu * (4 * n + 2 * (k - j))) * a[k - j] * b[j]
                       for j in range(k + 1))
            b[k + 2] = -(s * (k / 2 + 1 - lam) * b[k] + conv) / ((k + 2) * (k + n + 2))
        return np.vstack([a, b])


def flat_ode(n: int) -> RadialOdeSpec:
    return RadialOdeSpec(FLAT, n)


def profile_ode(n: int, scale: float = 1.0) -> RadialOdeSpec:
    return RadialOdeSpec(PROFILE, n, scale=scale)


def probe_ode(n: int, lam: float = 0.0, mu: float = 1.0, scale: float = 1.0) -> RadialOdeSpec:
    return RadialOdeSpec(PROBE, n, scale=scale, lam=lam, mu=mu)


def emden_ode(n: int) -> RadialOdeSpec:
    return RadialOdeSpec(EMDEN, n, singular=False)


def zeta_ode() -> RadialOdeSpec:
    return RadialOdeSpec(ZETA, 3, singular=False)


def _poly_eval(c: np.ndarray, rho: float) -> tuple[float, float, float]:
    k = np.arange(c.size)
    p = rho ** k
    v = float(c @ p)
    d = float((k[1:] * c[1:]) @ p[:-1])
    dd = float((k[2:] * (k[2:] - 1) * c[2:]) @ p[:-2]) if c.size > 2 else 0.0
    return v, d, dd


@dataclass(frozen=True)
class SeriesLaunch:
    """Truncated power series at the origin and the state it hands to the stepper.

    ``coefficients`` has one row per second-order unknown.
    """

    ode: RadialOdeSpec
    coefficients: np.ndarray
    launch_radius: float
    truncation_order: int
    state: tuple
    residual: float

    def evaluate(self, rho: float) -> np.ndarray:
        """State vector of the truncated series at ρ (only sensible for ρ ≤ launch radius)."""
        out = []
        for row in self.coefficients:
            v, d, _ = _poly_eval(row, rho)
            out += [v, d]
        return np.array(out)


def launch_series(ode: RadialOdeSpec, initial_value, order: int = DEFAULT_ORDER,
                  launch_radius: float = DEFAULT_LAUNCH_RADIUS,
                  residual_tol: float = 1e-12) -> SeriesLaunch:
    """Build the series at the origin and pick a launch radius where it is trustworthy.

    The radius is halved until the truncated series satisfies the ODE to
    ``residual_tol`` (relative) and the tail coefficients decay geometrically.
    """
    if order < 4:
        raise ValueError("truncation order must be at least 4")
    if not ode.singular:
        raise ValueError("series launch only applies to systems singular at the origin")
    init = np.atleast_1d(np.asarray(initial_value, dtype=float))
    coeffs = ode.series(init, order)
    scale = max(float(np.max(np.abs(coeffs[:, 0]))), 1e-300)
    # convergence radius estimate from the even coefficients
    ratios = []
    for row in coeffs:
        for k in range(2, order + 1, 2):
            if row[k] != 0 and row[k - 2] != 0:
                ratios.append(abs(row[k] / row[k - 2]))
    grow = math.sqrt(max(ratios)) if ratios else 0.0
    r0 = launch_radius
    for _ in range(60):
        if grow * r0 < 0.25:
            res = _series_residual(ode, coeffs, r0, scale)
            if res < residual_tol:
                state = tuple(SeriesLaunch(ode, coeffs, r0, order, (), res).evaluate(r0))
                return SeriesLaunch(ode, coeffs, r0, order, state, res)
        r0 /= 2
    raise SeriesDivergenceError(
        f"series does not converge at any launch radius down to {r0:.3e} "
        f"(coefficient ratio bound {grow:.3e})")


def _series_residual(ode: RadialOdeSpec, coeffs: np.ndarray, rho: float, scale: float) -> float:
    state, second = [], []
    for row in coeffs:
        v, d, dd = _poly_eval(row, rho)
        state += [v, d]
        second.append(dd)
    if ode.system == FLAT:
        state = state[:2]
    f = ode.rhs(rho, state)
    res = max(abs(second[i] - f[2 * i + 1]) for i in range(len(second)))
    # the second derivative is O(scale), the residual is O(rho^(K-1))
    return res / max(scale, max(abs(x) for x in second))


@dataclass(frozen=True)
class IvpResult:
    """Accepted integration nodes with dense (Hermite) interpolation.

    ``states`` and ``slopes`` hold the full first-order state and its
    ρ-derivative at every node; ``value``/``derivative`` expose the primary
    unknown.
    """

    grid: np.ndarray
    states: np.ndarray
    slopes: np.ndarray | None
    terminated_at: float
    termination_reason: str
    value_index: int = 0
    second_order: bool = True
    launch: SeriesLaunch | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, grid, value, derivative) -> "IvpResult":
        g = np.asarray(grid, dtype=float)
        st = np.column_stack([value, derivative]).astype(float)
        return cls(g, st, None, float(g[-1]), "reached_rmax")

    @property
    def value(self) -> np.ndarray:
        return self.states[:, self.value_index]

    @property
    def derivative(self) -> np.ndarray:
        return self.states[:, self.value_index + 1]

    def component(self, index: int) -> np.ndarray:
        return self.states[:, index]

    def evaluate(self, rho, index: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Dense value and derivative of slot ``index`` (a value slot) at ρ."""
        i = self.value_index if index is None else index
        rho = np.asarray(rho, dtype=float)
        g = self.grid
        if np.any(rho < g[0] - 1e-14) or np.any(rho > g[-1] + 1e-12 * max(1.0, g[-1])):
            raise ValueError("evaluation point outside the integrated range")
        j = np.clip(np.searchsorted(g, rho, side="right") - 1, 0, g.size - 2)
        h = g[j + 1] - g[j]
        x = (rho - g[j]) / h
        y0, y1 = self.states[j, i], self.states[j + 1, i]
        if not self.second_order:
            d0, d1 = self.slopes[j, i], self.slopes[j + 1, i]
            return _hermite3(x, h, y0, y1, d0, d1)
        d0, d1 = self.states[j, i + 1], self.states[j + 1, i + 1]
        if self.slopes is None:
            return _hermite3(x, h, y0, y1, d0, d1)
        s0, s1 = self.slopes[j, i + 1], self.slopes[j + 1, i + 1]
        return _hermite5(x, h, y0, y1, d0, d1, s0, s1)


def _hermite3(x, h, y0, y1, d0, d1):
    x2, x3 = x * x, x * x * x
    v = ((2 * x3 - 3 * x2 + 1) * y0 + (x3 - 2 * x2 + x) * h * d0
         + (-2 * x3 + 3 * x2) * y1 + (x3 - x2) * h * d1)
    dv = ((6 * x2 - 6 * x) * y0 + (3 * x2 - 4 * x + 1) * h * d0
          + (-6 * x2 + 6 * x) * y1 + (3 * x2 - 2 * x) * h * d1) / h
    return v, dv


def _hermite5(x, h, y0, y1, d0, d1, s0, s1):
    # quintic Hermite basis on [0, 1]
    x2 = x * x
    x3 = x2 * x
    x4 = x3 * x
    x5 = x4 * x
    h0 = 1 - 10 * x3 + 15 * x4 - 6 * x5
    h1 = x - 6 * x3 + 8 * x4 - 3 * x5
    h2 = 0.5 * x2 - 1.5 * x3 + 1.5 * x4 - 0.5 * x5
    h3 = 0.5 * x3 - x4 + 0.5 * x5
    h4 = -4 * x3 + 7 * x4 - 3 * x5
    h5 = 10 * x3 - 15 * x4 + 6 * x5
    g0 = -30 * x2 + 60 * x3 - 30 * x4
    g1 = 1 - 18 * x2 + 32 * x3 - 15 * x4
    g2 = x - 4.5 * x2 + 6 * x3 - 2.5 * x4
    g3 = 1.5 * x2 - 4 * x3 + 2.5 * x4
    g4 = -12 * x2 + 28 * x3 - 15 * x4
    g5 = 30 * x2 - 60 * x3 + 30 * x4
    hh = h * h
    v = h0 * y0 + h1 * h * d0 + h2 * hh * s0 + h3 * hh * s1 + h4 * h * d1 + h5 * y1
    dv = (g0 * y0 + g1 * h * d0 + g2 * hh * s0 + g3 * hh * s1 + g4 * h * d1 + g5 * y1) / h
    return v, dv


_REASONS = {0: "reached_rmax", 1: "blowup_guard", 2: "tolerance_failure", 3: "tolerance_failure"}


def integrate(ode: RadialOdeSpec, launch: SeriesLaunch, rmax: float, tol: float = 1e-10,
              atol: float | None = None, ceiling: float = BLOWUP_CEILING,
              max_steps: int = 5_000_000, backend=None) -> IvpResult:
    """Continue the series launch adaptively out to ``rmax``."""
    if not (0 < tol <= 1e-3):
        raise ValueError("tol must lie in (0, 1e-3]")
    if rmax <= launch.launch_radius:
        raise ValueError("rmax must exceed the launch radius")
    return integrate_from(ode, launch.launch_radius, np.asarray(launch.state), rmax, tol,
                          atol=atol, ceiling=ceiling, max_steps=max_steps, backend=backend,
                          launch=launch)


def integrate_from(ode: RadialOdeSpec, t0: float, y0, t1: float, tol: float = 1e-10,
                   atol: float | None = None, ceiling: float = BLOWUP_CEILING,
                   max_steps: int = 5_000_000, backend=None, launch=None,
                   h0: float | None = None) -> IvpResult:
    """Integrate an arbitrary initial state (regular starting point)."""
    stepper = backend or _backend.dopri5
    y0 = np.ascontiguousarray(y0, dtype=float)
    if atol is None:
        atol = tol * 1e-12 * max(1.0, float(np.max(np.abs(y0))))
    if h0 is None:
        h0 = min(0.1 * max(abs(t0), 1e-6), 1e-3 * max(abs(t1 - t0), 1.0))
        if not ode.singular:
            h0 = 1e-3
    ts, ys, fs, status = stepper(ode.system, ode.n, np.ascontiguousarray(ode.params),
                                 y0, float(t0), float(t1), float(tol), float(atol),
                                 float(h0), float(ceiling), int(max_steps))
    return IvpResult(np.asarray(ts), np.asarray(ys), np.asarray(fs), float(ts[-1]),
                     _REASONS[int(status)], ode.value_index, ode.system != ZETA, launch)


def find_sign_changes(result: IvpResult, index: int | None = None,
                      lo: float | None = None, hi: float | None = None) -> list[float]:
    """Sign changes of a value slot, refined on the dense interpolant."""
    i = result.value_index if index is None else index
    g = result.grid
    v = result.states[:, i]
    sel = np.ones(g.size, bool)
    if lo is not None:
        sel &= g >= lo
    if hi is not None:
        sel &= g <= hi
    idx = np.nonzero(sel)[0]
    roots = []
    if idx.size < 2:
        return roots
    sv = np.sign(v[idx])
    # walk through nodes, skipping exact zeros so that a touch without crossing is ignored
    last_k, last_s = None, 0.0
    for k, s in zip(idx, sv):
        if s == 0:
            continue
        if last_s and s != last_s:
            a, b = g[last_k], g[k]
            if k == last_k + 1:
                r = brentq(lambda x: float(result.evaluate(x, i)[0]), a, b,
                           xtol=ROOT_XTOL * 1e-2, rtol=4 * np.finfo(float).eps)
            else:  # exact zero(s) on nodes in between
                r = float(g[last_k + 1])
            roots.append(float(r))
        last_k, last_s = k, s
    return roots
