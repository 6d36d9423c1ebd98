"""Self-similar expander profile u_α and its diagnostics.

The profile solves

    u'' + (n+1)/ρ u' + u + (ρ/2) u' + 2n u² + 2ρ u u' = 0,   u(0) = α, u'(0) = 0.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .radial_ivp import (DEFAULT_LAUNCH_RADIUS, DEFAULT_ORDER, IvpResult, integrate,
                         launch_series, profile_ode)

DEFAULT_RMAX = 50.0
DEFAULT_TOL = 1e-10
POSITIVITY_SLACK = 1e-12


class ProfileInvariantError(ArithmeticError):
    """A proven property of the profile failed numerically."""

    def __init__(self, what: str, radius: float):
        super().__init__(f"{what} fails at rho = {radius:.17g}")
        self.what = what
        self.radius = radius


class TailNotConvergedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ProfileSolution:
    """Profile on the accepted integration nodes, plus ρ=0."""

    n: int
    alpha: float
    grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    rmax: float
    tol: float
    ivp: IvpResult = field(repr=False, compare=False)

    def at(self, rho):
        """Dense (u, u') at arbitrary radii in [0, rmax]."""
        rho = np.asarray(rho, dtype=float)
        r0 = self.ivp.grid[0]
        inner = rho < r0
        u, du = np.empty_like(rho), np.empty_like(rho)
        if np.any(~inner):
            u[~inner], du[~inner] = self.ivp.evaluate(rho[~inner], 0)
        if np.any(inner):
            for k, r in zip(np.nonzero(inner.ravel())[0], rho[inner].ravel()):
                s = self.ivp.launch.evaluate(r)
                u.flat[k], du.flat[k] = s[0], s[1]
        return u, du

    @property
    def G(self) -> np.ndarray:
        return 2 * self.n * self.u + 2 * self.grid * self.du

    @property
    def energy(self) -> np.ndarray:
        return energy(self.n, self.u, self.du)

    @property
    def J(self) -> np.ndarray:
        return j_function(self.n, self.grid, self.u, self.du)

    @property
    def potential(self) -> np.ndarray:
        """𝒱_α = 4n u + 2ρ u' on the grid."""
        return 4 * self.n * self.u + 2 * self.grid * self.du

    def diagnostic_grid(self, core_step: float = 0.01, ratio: float = 1.01) -> np.ndarray:
        """Uniform on [0, 1] (refined for narrow cores), geometric beyond."""
        h = min(core_step, core_step / np.sqrt(max(self.alpha, 1.0)))
        inner = np.linspace(0.0, 1.0, int(round(1.0 / h)) + 1)
        k = int(np.floor(np.log(self.rmax) / np.log(ratio)))
        outer = ratio ** np.arange(1, k + 1)
        g = np.concatenate([inner, outer[outer > 1.0]])
        if g[-1] < self.rmax:
            g = np.append(g, self.rmax)
        return g


def energy(n, u, du):
    return du ** 2 / 2 + u ** 2 / 2 + 2 * n * u ** 3 / 3


def j_function(n, rho, u, du):
    """J = ρ^{n+1} e^{ρ²/4} (u' + ρ u²); overflows to -inf far out, which keeps its sign."""
    core = du + rho * u ** 2
    with np.errstate(over="ignore", divide="ignore"):
        mag = np.exp((n + 1) * np.log(np.where(rho > 0, rho, 1.0)) + rho ** 2 / 4)
        out = np.where(rho > 0, mag * core, 0.0)
    return out


def solve_profile(n: int, alpha: float, rmax: float = DEFAULT_RMAX, tol: float = DEFAULT_TOL,
                  launch_radius: float = DEFAULT_LAUNCH_RADIUS, order: int = DEFAULT_ORDER,
                  check: bool = True, backend=None) -> ProfileSolution:
    if not (isinstance(n, (int, np.integer)) and n >= 3):
        raise ValueError("n must be an integer >= 3")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not rmax >= 10:
        raise ValueError("rmax must be at least 10")
    ode = profile_ode(n)
    launch = launch_series(ode, alpha, order, launch_radius)
    res = integrate(ode, launch, rmax, tol, atol=tol * 1e-12 * alpha, backend=backend)
    if res.termination_reason != "reached_rmax":
        raise ArithmeticError(f"profile integration stopped: {res.termination_reason} "
                              f"at rho = {res.terminated_at:.6g}")
    grid = np.concatenate([[0.0], res.grid])
    u = np.concatenate([[alpha], res.states[:, 0]])
    du = np.concatenate([[0.0], res.states[:, 1]])
    sol = ProfileSolution(int(n), float(alpha), grid, u, du, float(rmax), float(tol), res)
    if check:
        check_invariants(sol)
    return sol


def check_invariants(sol: ProfileSolution, rel: float = 1e-10) -> None:
    """Raise on the first radius where a proven profile property fails."""
    r, u, du, a = sol.grid, sol.u, sol.du, sol.alpha
    amp = POSITIVITY_SLACK * a

    def first(mask, what):
        bad = np.nonzero(mask)[0]
        if bad.size:
            raise ProfileInvariantError(what, float(r[bad[0]]))

    first(u <= -amp, "u > 0")
    first((r > 0) & (du >= amp), "u' < 0")
    G = sol.G
    first(G <= -POSITIVITY_SLACK * a, "G > 0")
    env = a / (1 + a * r ** 2 / 2)
    first(u >= env * (1 + rel) + POSITIVITY_SLACK * a, "u < alpha/(1 + alpha rho^2/2)")
    q = r ** 2 * u
    first((q < -rel) | (q > 2 + rel), "0 <= rho^2 u <= 2")
    E = sol.energy
    slack = 1e-8 + rel * abs(E[0])
    first(E > np.minimum.accumulate(E) + slack, "energy non-increasing")


@dataclass(frozen=True)
class ProfileDiagnostics:
    ell_alpha: float
    ell_ci: float
    energy_samples: np.ndarray
    g_samples: np.ndarray
    j_samples: np.ndarray
    ell_direct: float = float("nan")
    tail_ratio: float = float("nan")


def _cumulative_hermite(x, g, dg):
    """Cumulative integral from the data (g, g') on nodes, cubic Hermite rule."""
    h = np.diff(x)
    piece = h / 2 * (g[:-1] + g[1:]) + h ** 2 / 12 * (dg[:-1] - dg[1:])
    return np.concatenate([[0.0], np.cumsum(piece)])


def mass_integral(sol: ProfileSolution) -> np.ndarray:
    """∫₀^ρ 2 s u G ds on the solution grid."""
    n, r, u, du = sol.n, sol.grid, sol.u, sol.du
    G = 2 * n * u + 2 * r * du
    dG = -2 * r * (G * (u + 0.25) + (1 - n / 2) * u)
    g = 2 * r * u * G
    dg = 2 * u * G + 2 * r * du * G + 2 * r * u * dG
    return _cumulative_hermite(r, g, dg)


def tail_coefficients(n: int, ell: float, terms: int = 5) -> np.ndarray:
    """Coefficients c_m of the algebraic tail u ~ Σ_{m≥1} c_m ρ^{-2m}, c_1 = ℓ.

    Substituting the expansion into the profile ODE gives
    (m−1)c_m = 2(m−1)(2m−2−n)c_{m−1} + (2n−2m) Σ_{i+j=m} c_i c_j.
    """
    c = np.zeros(terms + 1)
    c[1] = ell
    for m in range(2, terms + 1):
        conv = sum(c[i] * c[m - i] for i in range(1, m))
        c[m] = (2 * (m - 1) * (2 * m - 2 - n) * c[m - 1] + (2 * n - 2 * m) * conv) / (m - 1)
    return c


def _tail_integral(n, ell, R, terms=5):
    """∫_R^∞ 2s u G ds from the algebraic tail; G = Σ (2n−4k) c_k ρ^{-2k}."""
    c = tail_coefficients(n, ell, terms)
    total = 0.0
    for m in range(2, 2 * terms + 1):
        w = sum(2 * c[i] * c[m - i] * (2 * n - 4 * (m - i))
                for i in range(max(1, m - terms), min(terms, m - 1) + 1))
        term = w * R ** (2 - 2 * m) / (2 * m - 2)
        total += term
    return total


def _ell_from_identity(n, alpha, I, R):
    base = 2 * n * alpha - I
    g = lambda l: l + _tail_integral(n, l, R) - base
    hi = 4.0
    if g(1e-300) >= 0 or g(hi) <= 0:
        return base
    return brentq(g, 1e-300, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _ell_direct(n, q, R):
    """Solve R²u(R) = Σ c_m(ℓ) R^{2−2m} for ℓ."""
    def g(l):
        c = tail_coefficients(n, l)
        return sum(c[m] * R ** (2 - 2 * m) for m in range(1, c.size)) - q
    try:
        return brentq(g, 1e-300, 4.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    except ValueError:
        return q


def estimate_tail(sol: ProfileSolution, drift_tol: float = 1e-4) -> ProfileDiagnostics:
    """Tail limit ℓ_α = lim ρ²u through the integral identity, with a direct cross-check.

    ρ²u = −2ρu' + 2nα − 2nu − ∫₀^ρ 2s u G ds, so ℓ_α = 2nα − ∫₀^∞ 2s u G ds.
    The integral beyond the last node is closed with the algebraic tail
    expansion (``tail_coefficients``).
    """
    n, r, u, du, a = sol.n, sol.grid, sol.u, sol.du, sol.alpha
    R = r[-1]
    I = mass_integral(sol)
    ell = _ell_from_identity(n, a, I[-1], R)
    # below ρ≈10 the e^{-ρ²/4} corrections are not yet negligible
    i10 = int(np.searchsorted(r, min(max(R / 10, 10.0), R / 2)))
    ell10 = _ell_from_identity(n, a, I[i10], r[i10])
    drift = abs(ell - ell10) / abs(ell)
    if drift > drift_tol:
        raise TailNotConvergedError(
            f"tail limit estimate drifts by {drift:.2e} over the last decade; increase rmax")
    q = R ** 2 * u[-1]
    direct = _ell_direct(n, q, R)
    ci = abs(direct - ell) + abs(ell - ell10) + 64 * np.finfo(float).eps * 2 * n * a
    tail_ratio = R ** 3 * du[-1] / q
    samp = sol.diagnostic_grid()
    us, dus = sol.at(samp)
    E = energy(n, us, dus)
    G = 2 * n * us + 2 * samp * dus
    J = j_function(n, samp, us, dus)
    return ProfileDiagnostics(float(ell), float(ci), np.column_stack([samp, E]),
                              np.column_stack([samp, G]), np.column_stack([samp, J]),
                              float(direct), float(tail_ratio))


@dataclass(frozen=True)
class RadialCoefficient:
    """Dense-interpolable coefficient ρ ↦ c(ρ)."""

    grid: np.ndarray
    values: np.ndarray
    _eval: object = field(repr=False, compare=False)

    def __call__(self, rho):
        return self._eval(rho)


def potential_V(sol: ProfileSolution) -> RadialCoefficient:
    """𝒱_α = 4n u + 2ρ u' as a dense coefficient."""

    def ev(rho):
        rho = np.asarray(rho, dtype=float)
        u, du = sol.at(rho)
        return 4 * sol.n * u + 2 * rho * du

    return RadialCoefficient(sol.grid, sol.potential, ev)


class ProfileCache:
    """Thread-safe memo of profiles keyed by (n, α, tol, rmax); optional on-disk layer.

    The disk layer is active when ``KSI_CACHE_DIR`` is set (or a directory is
    passed) and stores the node arrays as ``.npz``.
    """

    def __init__(self, directory: str | os.PathLike | None = None, maxsize: int = 512):
        self._lock = threading.Lock()
        self._mem: dict = {}
        self._order: list = []
        self.maxsize = maxsize
        d = directory if directory is not None else os.environ.get("KSI_CACHE_DIR")
        self.directory = Path(d) if d else None
        self.hits = 0
        self.misses = 0

    def _path(self, key):
        h = hashlib.sha1(repr(key).encode()).hexdigest()[:20]
        return self.directory / f"profile_{h}.npz"

    def get(self, n: int, alpha: float, tol: float = DEFAULT_TOL,
            rmax: float = DEFAULT_RMAX) -> ProfileSolution:
        key = (int(n), float(alpha).hex(), float(tol).hex(), float(rmax).hex())
        with self._lock:
            if key in self._mem:
                self.hits += 1
                return self._mem[key]
        sol = None
        if self.directory is not None and self._path(key).exists():
            sol = self._load(key, n, alpha, tol, rmax)
        if sol is None:
            sol = solve_profile(n, alpha, rmax, tol)
            if self.directory is not None:
                self._store(key, sol)
        with self._lock:
            self.misses += 1
            if key not in self._mem:
                self._mem[key] = sol
                self._order.append(key)
                if len(self._order) > self.maxsize:
                    self._mem.pop(self._order.pop(0), None)
            return self._mem[key]

    def _store(self, key, sol):
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self._path(key).with_suffix(".tmp.npz")
        iv = sol.ivp
        np.savez(tmp, grid=iv.grid, states=iv.states, slopes=iv.slopes)
        os.replace(tmp, self._path(key))

    def _load(self, key, n, alpha, tol, rmax):
        try:
            with np.load(self._path(key)) as z:
                grid, states, slopes = z["grid"], z["states"], z["slopes"]
        except (OSError, KeyError, ValueError):
            return None
        ode = profile_ode(n)
        launch = launch_series(ode, alpha, DEFAULT_ORDER, DEFAULT_LAUNCH_RADIUS)
        if abs(grid[0] - launch.launch_radius) > 1e-15:
            return None
        res = IvpResult(grid, states, slopes, float(grid[-1]), "reached_rmax", 0, True, launch)
        return ProfileSolution(int(n), float(alpha), np.concatenate([[0.0], grid]),
                               np.concatenate([[alpha], states[:, 0]]),
                               np.concatenate([[0.0], states[:, 1]]), float(rmax),
                               float(tol), res)

    def clear(self):
        with self._lock:
            self._mem.clear()
            self._order.clear()


_default_cache: ProfileCache | None = None


def default_cache() -> ProfileCache:
    global _default_cache
    if _default_cache is None:
        _default_cache = ProfileCache()
    return _default_cache
