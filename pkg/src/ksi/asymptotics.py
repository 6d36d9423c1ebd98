"""Large-α behaviour: rescaled and limit systems, the Emden phase plane and the
Euler comparison that predicts oscillation of f̃ for 3 ≤ n ≤ 9.

With ũ_α(ρ) = u_α(ρ/√α)/α and f̃_α(ρ) = f_α(ρ/√α) the Ornstein-Uhlenbeck
terms pick up a factor 1/α; at α = ∞ they drop out and

    ũ'' + (n+1)/ρ ũ' + 2n ũ² + 2ρ ũ ũ' = 0,
    f̃'' + (n+1)/ρ f̃' + 4n ũ f̃ + 2ρ ũ f̃' + 2ρ ũ' f̃ = 0.

The tail z(t) = e^{2t} ũ(e^t) solves z̈ + (n−4+2z)ż − 2(n−2)(z − z²) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .radial_ivp import (DEFAULT_LAUNCH_RADIUS, DEFAULT_ORDER, IvpResult, emden_ode,
                         find_sign_changes, integrate, integrate_from, launch_series,
                         probe_ode, zeta_ode)

EPS_PRIME_LADDER = (0.0, 1e-3, 1e-2, 1e-1)
KEY_EPS = 0.05


class TrajectoryError(ArithmeticError):
    pass


class TailNotConvergedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RescaledSolution:
    n: int
    alpha: float  # math.inf for the limit system
    grid: np.ndarray
    u_tilde: np.ndarray
    du_tilde: np.ndarray
    f_tilde: np.ndarray
    df_tilde: np.ndarray
    ivp: IvpResult = field(repr=False, compare=False)

    def at(self, rho):
        """Dense (ũ, ũ', f̃, f̃') at radii in the integrated range (series inside the launch)."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        out = np.empty((4, rho.size))
        r0 = self.ivp.grid[0]
        inner = rho < r0
        if np.any(~inner):
            out[0, ~inner], out[1, ~inner] = self.ivp.evaluate(rho[~inner], 0)
            out[2, ~inner], out[3, ~inner] = self.ivp.evaluate(rho[~inner], 2)
        for k in np.nonzero(inner)[0]:
            out[:, k] = self.ivp.launch.evaluate(rho[k])
        return out

    @property
    def rho2u(self):
        return self.grid ** 2 * self.u_tilde

    @property
    def rho3du(self):
        return self.grid ** 3 * self.du_tilde

    def zeros(self) -> list[float]:
        return find_sign_changes(self.ivp, 2)


def solve_rescaled(n: int, alpha: float = math.inf, rmax: float = 100.0,
                   tol: float = 1e-10) -> RescaledSolution:
    """Coupled (ũ_α, f̃_α) from ũ = f̃ = 1, ũ' = f̃' = 0; α = ∞ gives the limit system."""
    if n < 3:
        raise ValueError("n must be at least 3")
    if not alpha > 0:
        raise ValueError("alpha must be positive or infinite")
    scale = 0.0 if math.isinf(alpha) else 1.0 / alpha
    ode = probe_ode(n, 0.0, 1.0, scale)
    launch = launch_series(ode, (1.0, 1.0), DEFAULT_ORDER, DEFAULT_LAUNCH_RADIUS)
    res = integrate(ode, launch, rmax, tol, atol=tol * 1e-14)
    if res.termination_reason != "reached_rmax":
        raise ArithmeticError(f"rescaled integration stopped: {res.termination_reason}")
    g = np.concatenate([[0.0], res.grid])
    st = np.vstack([[1.0, 0.0, 1.0, 0.0], res.states])
    sol = RescaledSolution(int(n), float(alpha), g, st[:, 0], st[:, 1], st[:, 2], st[:, 3], res)
    if np.any(sol.u_tilde <= 0):
        raise ArithmeticError("rescaled profile lost positivity")
    return sol


@dataclass(frozen=True)
class PhaseTrajectory:
    n: int
    t_grid: np.ndarray
    z: np.ndarray
    zdot: np.ndarray
    zeta: np.ndarray | None
    energy: np.ndarray
    ivp: IvpResult = field(repr=False, compare=False)
    zeta_ivp: IvpResult | None = field(default=None, repr=False, compare=False)

    @property
    def terminal_distance(self) -> float:
        return float(math.hypot(self.z[-1] - 1.0, self.zdot[-1]))


def emden_energy(n, z, zdot):
    return zdot ** 2 / 2 + 2 * (n - 2) * (z ** 3 / 3 - z ** 2 / 2)


def emden_trajectory(n: int, t0: float = -8.0, t1: float = 30.0, tol: float = 1e-11,
                     terminal_tol: float | None = 1e-3) -> PhaseTrajectory:
    """Tail trajectory of the limit profile in the (z, ż) plane.

    The start is pinned to the limit solution at ρ₀ = e^{t₀}:
    z = ρ₀²ũ(ρ₀), ż = 2z + ρ₀³ũ'(ρ₀).  For n = 3 the (z, ζ) form with
    ζ = ż + z is integrated alongside.
    """
    if t0 > -5:
        raise ValueError("t0 must be <= -5 so the start sits near the saddle")
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    rho0 = math.exp(t0)
    lim = solve_rescaled(n, math.inf, rmax=max(1.0, 2 * rho0), tol=tol)
    u, du = lim.at(rho0)[:2, 0]
    z0 = rho0 ** 2 * u
    zd0 = 2 * z0 + rho0 ** 3 * du
    res = integrate_from(emden_ode(n), t0, [z0, zd0], t1, tol, atol=tol * z0 * 1e-3)
    if res.termination_reason != "reached_rmax":
        raise TrajectoryError(f"Emden integration stopped: {res.termination_reason}")
    z, zd = res.states[:, 0], res.states[:, 1]
    zeta, zres = None, None
    if n == 3:
        zres = integrate_from(zeta_ode(), t0, [z0, zd0 + z0], t1, tol, atol=tol * z0 * 1e-3)
        # report ζ on the Emden nodes
        zeta = zres.evaluate(res.grid, 1)[0]
    traj = PhaseTrajectory(int(n), res.grid, z, zd, zeta, emden_energy(n, z, zd), res, zres)
    if np.any(z <= 0) or np.any(np.abs(z) > 10) or np.any(np.abs(zd) > 10):
        raise TrajectoryError("trajectory left the bounded region around the saddle and sink")
    if terminal_tol is not None and traj.terminal_distance > terminal_tol:
        raise TrajectoryError(
            f"terminal state ({z[-1]:.6g}, {zd[-1]:.6g}) is {traj.terminal_distance:.3g} "
            f"away from the sink (1, 0)")
    return traj


def emden_residual(traj: PhaseTrajectory) -> np.ndarray:
    """Residual of the Emden ODE using z̈ reconstructed from the (z, ζ) system (n = 3)."""
    if traj.zeta_ivp is None:
        raise ValueError("only available for n = 3")
    zi = traj.zeta_ivp
    z, zeta = zi.states[:, 0], zi.states[:, 1]
    zdot = zeta - z
    zetadot = 2 * (1 - z) * zeta
    zddot = zetadot - zdot
    n = traj.n
    return zddot + (n - 4 + 2 * z) * zdot - 2 * (n - 2) * (z - z ** 2)


def segments_self_intersect(x: np.ndarray, y: np.ndarray, chunk: int = 512) -> bool:
    """True if any two non-adjacent segments of the polyline cross transversally."""
    px, py = x[:-1], y[:-1]
    qx, qy = x[1:], y[1:]
    m = px.size
    for a in range(0, m, chunk):
        b = min(m, a + chunk)
        ax, ay, bx, by = px[a:b, None], py[a:b, None], qx[a:b, None], qy[a:b, None]

        def orient(ox, oy, ux, uy, vx, vy):
            return (ux - ox) * (vy - oy) - (uy - oy) * (vx - ox)

        d1 = orient(ax, ay, bx, by, px[None, :], py[None, :])
        d2 = orient(ax, ay, bx, by, qx[None, :], qy[None, :])
        d3 = orient(px[None, :], py[None, :], qx[None, :], qy[None, :], ax, ay)
        d4 = orient(px[None, :], py[None, :], qx[None, :], qy[None, :], bx, by)
        cross = (d1 * d2 < 0) & (d3 * d4 < 0)
        i = np.arange(a, b)[:, None]
        j = np.arange(m)[None, :]
        cross &= np.abs(i - j) > 1
        if np.any(cross):
            return True
    return False


@dataclass(frozen=True)
class ComparisonSetup:
    n: int
    eps_prime: float
    A: int
    B: float
    discriminant: float
    discriminant_exact: Fraction
    mu_osc: float | None
    rho_eps: float | None = None

    @property
    def oscillating(self) -> bool:
        return self.discriminant_exact < 0

    @property
    def normal_form_constant(self) -> float:
        """ρ²V = B + A/2 − A²/4."""
        return self.B + self.A / 2 - self.A ** 2 / 4

    def euler_zeros(self, rmax: float, rho_eps: float | None = None) -> np.ndarray:
        """Zeros ρ_ε e^{kπ/μ}, k = 0, 1, ... of the comparison solution sin(μ log(ρ/ρ_ε))."""
        r = self.rho_eps if rho_eps is None else rho_eps
        if self.mu_osc is None or r is None:
            return np.empty(0)
        kmax = int(math.floor(self.mu_osc * math.log(rmax / r) / math.pi))
        return r * np.exp(np.arange(0, kmax + 1) * math.pi / self.mu_osc)


def window_discriminant(n: int) -> int:
    """(n+2)² − 16(n−1), exact."""
    return (n + 2) ** 2 - 16 * (n - 1)


def euler_oracle(n: int, eps_prime: float = 0.0) -> ComparisonSetup:
    """Euler equation y'' + (A/ρ) y' + (B/ρ²) y = 0 with A = n+3, B = 4(n−1) − ε'."""
    if eps_prime < 0:
        raise ValueError("eps_prime must be non-negative")
    A = n + 3
    e = Fraction(eps_prime)
    B = 4 * (n - 1) - e
    disc = (A - 1) ** 2 - 4 * B
    mu = 0.5 * math.sqrt(float(-disc)) if disc < 0 else None
    return ComparisonSetup(int(n), float(eps_prime), A, float(B), float(disc), disc, mu)


@dataclass(frozen=True)
class NormalForm:
    grid: np.ndarray
    V_tilde: np.ndarray
    V: np.ndarray
    rho_eps: float
    setup: ComparisonSetup


def tilde_potential(n, rho, u, du):
    """Normal-form potential of the limit f̃ equation."""
    return (4 * n * u + 2 * rho * du + (n + 1) / (2 * rho ** 2) - u - rho * du
            - (n + 1) ** 2 / (4 * rho ** 2) - (n + 1) * u - rho ** 2 * u ** 2)


def key_radius(limit: RescaledSolution, eps: float = KEY_EPS) -> float | None:
    """Smallest node beyond which |ρ²ũ − 1| < ε and |ρ³ũ' + 2| < 2ε."""
    ok = (np.abs(limit.rho2u - 1) < eps) & (np.abs(limit.rho3du + 2) < 2 * eps)
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(limit.grid[1])
    if bad[-1] + 1 >= limit.grid.size:
        return None
    return float(limit.grid[bad[-1] + 1])


def normal_form_potentials(limit: RescaledSolution, setup: ComparisonSetup | None = None,
                           ladder=EPS_PRIME_LADDER) -> NormalForm:
    """Tabulate Ṽ and V and pick (ε', ρ_ε) so that Ṽ ≥ V on [ρ_ε, rmax].

    ρ_ε starts at the key-assumption radius and moves outward if needed; the
    smallest ε' in the ladder that works with ρ_ε ≤ rmax/2 is used.  A given
    ``setup`` restricts the choice to its ε'.
    """
    if not math.isinf(limit.alpha):
        raise ValueError("normal forms are defined for the limit system")
    n = limit.n
    r = limit.grid[1:]
    Vt = tilde_potential(n, r, limit.u_tilde[1:], limit.du_tilde[1:])
    r_key = key_radius(limit)
    rmax = float(limit.grid[-1])
    if r_key is None or r_key > rmax / 2:
        raise TailNotConvergedError("no radius below rmax/2 where the tail assumption holds")
    choices = ladder if setup is None else (setup.eps_prime,)
    for ep in choices:
        s = euler_oracle(n, ep)
        V = s.normal_form_constant / r ** 2
        bad = np.nonzero((Vt < V) & (r >= r_key))[0]
        rho_eps = r_key if bad.size == 0 else (float(r[bad[-1] + 1]) if bad[-1] + 1 < r.size
                                              else math.inf)
        if rho_eps <= rmax / 2:
            s = ComparisonSetup(s.n, s.eps_prime, s.A, s.B, s.discriminant,
                                s.discriminant_exact, s.mu_osc, rho_eps)
            return NormalForm(r, Vt, V, rho_eps, s)
    raise TailNotConvergedError("potential ordering does not hold below rmax/2 for any eps'")


def verify_zero_window(n: int, rmax: float = 1e3, tol: float = 1e-10) -> dict:
    """Zeros of the limit f̃ against the Euler-comparison prediction.

    For 3 ≤ n ≤ 9 every interval between consecutive comparison zeros beyond
    ρ_ε must contain a sign change of f̃; the radius is extended so that at
    least one full interval is covered.  For n ≥ 10 the zeros found on
    [0, rmax] are only recorded.
    """
    if not 3 <= n <= 12:
        raise ValueError("n must lie in 3..12")
    disc = window_discriminant(n)
    report = {"n": n, "discriminant": disc, "oscillating": disc < 0}
    if disc >= 0:
        lim = solve_rescaled(n, math.inf, rmax, tol)
        z = lim.zeros()
        report.update(mu_osc=None, zeros_found=z, count=len(z), rmax=rmax)
        return report
    R = rmax
    for _ in range(8):
        lim = solve_rescaled(n, math.inf, R, tol)
        try:
            nf = normal_form_potentials(lim)
        except TailNotConvergedError:
            R *= 4
            continue
        s = nf.setup
        need = s.rho_eps * math.exp(math.pi / s.mu_osc) * 1.01
        if need <= R:
            break
        R = max(4 * R, 2 * need)
    else:
        raise TailNotConvergedError("could not reach one full comparison interval")
    z = np.array(lim.zeros())
    ez = s.euler_zeros(R)
    intervals = []
    for a, b in zip(ez[:-1], ez[1:]):
        intervals.append({"lo": float(a), "hi": float(b),
                          "zeros": int(np.sum((z >= a) & (z <= b)))})
    report.update(mu_osc=s.mu_osc, eps_prime=s.eps_prime, rho_eps=s.rho_eps,
                  zeros_found=z.tolist(), count=int(z.size), euler_zeros=ez.tolist(),
                  intervals=intervals, rmax=R,
                  bracketed=bool(intervals) and all(iv["zeros"] >= 1 for iv in intervals))
    return report
