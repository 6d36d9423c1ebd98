import math
from fractions import Fraction

import numpy as np
import pytest

from ksi.asymptotics import (TrajectoryError, emden_energy, emden_residual, emden_trajectory,
                             euler_oracle, key_radius, normal_form_potentials,
                             segments_self_intersect, solve_rescaled, tilde_potential,
                             verify_zero_window, window_discriminant)
from ksi.profile import solve_profile


def test_window_discriminant_exact_signs():
    neg = [n for n in range(3, 13) if window_discriminant(n) < 0]
    assert neg == list(range(3, 10))
    assert window_discriminant(10) == 0
    assert all(isinstance(window_discriminant(n), int) for n in range(3, 13))


@pytest.mark.parametrize("n", [3, 5, 9])
def test_euler_oracle_matches_hand_values(n):
    s = euler_oracle(n)
    assert s.A == n + 3 and s.B == 4 * (n - 1)
    assert s.discriminant_exact == Fraction(window_discriminant(n))
    assert s.mu_osc == pytest.approx(0.5 * math.sqrt(-window_discriminant(n)))
    assert s.normal_form_constant == pytest.approx(4 * (n - 1) + (n + 3) / 2 - (n + 3) ** 2 / 4)


def test_euler_zeros_solve_the_euler_equation():
    s = euler_oracle(5, 1e-3)
    mu = s.mu_osc
    rho_eps = 7.0
    z = s.euler_zeros(1e4, rho_eps)
    assert z[0] == rho_eps
    # y = ρ^{-(A-1)/2} sin(μ log(ρ/ρ_ε)) satisfies the Euler equation
    r = np.geomspace(8.0, 900.0, 7)
    p = -(s.A - 1) / 2
    th = mu * np.log(r / rho_eps)
    y = r ** p * np.sin(th)
    dy = r ** (p - 1) * (p * np.sin(th) + mu * np.cos(th))
    d2y = r ** (p - 2) * ((p * (p - 1) - mu ** 2) * np.sin(th) + (2 * p - 1) * mu * np.cos(th))
    res = d2y + s.A / r * dy + s.B / r ** 2 * y
    assert np.max(np.abs(res) / (r ** (p - 2))) < 1e-10
    assert np.allclose(np.sin(mu * np.log(z / rho_eps)), 0.0, atol=1e-9)


def test_euler_oracle_rejects_negative_eps():
    with pytest.raises(ValueError):
        euler_oracle(5, -0.1)
    assert euler_oracle(10).mu_osc is None


@pytest.mark.parametrize("alpha", [1.0, 30.0])
def test_rescaled_matches_profile_by_scaling(alpha):
    n = 5
    sol = solve_profile(n, alpha)
    resc = solve_rescaled(n, alpha, rmax=40 * math.sqrt(alpha))
    r = np.array([0.2, 1.0, 3.0])
    u, _ = sol.at(r)
    ut = resc.at(math.sqrt(alpha) * r)[0]
    assert np.allclose(ut, u / alpha, rtol=1e-8)


def test_rescaled_converges_like_one_over_alpha():
    n = 5
    lim = solve_rescaled(n, math.inf, rmax=20.0)
    r = np.array([1.0, 5.0])
    base = lim.at(r)[0]
    errs = [np.max(np.abs(solve_rescaled(n, a, rmax=20.0).at(r)[0] - base))
            for a in (1e2, 1e3, 1e4)]
    assert errs[0] / errs[1] == pytest.approx(10, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(10, rel=0.2)


@pytest.mark.parametrize("n", range(4, 10))
def test_limit_tail_approaches_inverse_square(n):
    lim = solve_rescaled(n, math.inf, rmax=100.0)
    assert abs(lim.rho2u[-1] - 1) < 0.02
    assert abs(lim.rho3du[-1] + 2) < 0.05


def test_limit_tail_is_slow_in_three_dimensions():
    # the sink is approached like ρ^{-1/2} for n = 3
    lim = solve_rescaled(3, math.inf, rmax=400.0)
    e100 = abs(np.interp(100.0, lim.grid, lim.rho2u) - 1)
    e400 = abs(lim.rho2u[-1] - 1)
    assert 0.02 < e100 < 0.05
    assert e400 < e100


def test_key_radius_and_normal_form():
    lim = solve_rescaled(6, math.inf, rmax=1000.0)
    rk = key_radius(lim)
    assert rk is not None and rk < 200
    nf = normal_form_potentials(lim)
    sel = nf.grid >= nf.rho_eps
    assert np.all(nf.V_tilde[sel] >= nf.V[sel])
    # ρ²Ṽ tends to the normal-form constant of the unperturbed Euler equation
    assert nf.grid[-1] ** 2 * nf.V_tilde[-1] == pytest.approx(
        euler_oracle(6).normal_form_constant, abs=0.05)


def test_tilde_potential_on_exact_inverse_square():
    n = 6
    r = np.array([50.0, 500.0])
    v = tilde_potential(n, r, 1 / r ** 2, -2 / r ** 3)
    c = euler_oracle(n).normal_form_constant
    assert np.allclose(r ** 2 * v, c, atol=1e-12)


@pytest.mark.parametrize("n", range(3, 10))
def test_emden_trajectory_reaches_the_sink(n):
    tr = emden_trajectory(n)
    assert tr.terminal_distance < 1e-3
    assert abs(tr.z[0]) < 1e-5
    assert np.all(tr.z > 0)


@pytest.mark.parametrize("n", [4, 6, 9])
def test_emden_energy_decreases_when_damped(n):
    tr = emden_trajectory(n)
    assert np.all(np.diff(tr.energy) <= 1e-9)


@pytest.mark.parametrize("n", [3, 5])
def test_emden_energy_identity(n):
    tr = emden_trajectory(n)
    t = np.linspace(tr.t_grid[0], tr.t_grid[-1], 200001)
    z, zd = tr.ivp.evaluate(t, 0)
    lhs = emden_energy(n, z[-1], zd[-1]) - emden_energy(n, z[0], zd[0])
    rhs = -np.trapezoid((n - 4 + 2 * z) * zd ** 2, t)
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_three_dimensional_energy_is_not_monotone():
    tr = emden_trajectory(3)
    assert np.any(np.diff(tr.energy) > 1e-6)


def test_zeta_form_reproduces_emden_equation():
    tr = emden_trajectory(3)
    assert np.max(np.abs(emden_residual(tr))) < 1e-9
    assert np.allclose(tr.zeta, tr.zdot + tr.z, atol=1e-7)
    with pytest.raises(ValueError):
        emden_residual(emden_trajectory(5))


@pytest.mark.parametrize("n", [3, 6, 9])
def test_trajectory_does_not_self_intersect(n):
    tr = emden_trajectory(n, t1=12.0, terminal_tol=None)
    step = max(1, tr.z.size // 3000)
    assert not segments_self_intersect(tr.z[::step], tr.zdot[::step])


def test_self_intersection_detector():
    th = np.linspace(0, 4 * np.pi, 400)
    assert segments_self_intersect(np.cos(th) + th / 100, np.sin(2 * th))
    assert not segments_self_intersect(th, np.sin(th))


def test_trajectory_argument_checks():
    with pytest.raises(ValueError):
        emden_trajectory(5, t0=-1.0)
    with pytest.raises(TrajectoryError):
        emden_trajectory(5, t1=-3.0, terminal_tol=1e-3)


@pytest.mark.parametrize("n", range(3, 10))
def test_zero_window_is_bracketed(n):
    rep = verify_zero_window(n)
    assert rep["oscillating"] and rep["count"] >= 1
    assert rep["bracketed"]
    assert all(iv["zeros"] >= 1 for iv in rep["intervals"])


@pytest.mark.parametrize("n", [10, 11, 12])
def test_no_zeros_outside_window(n):
    rep = verify_zero_window(n)
    assert not rep["oscillating"] and rep["count"] == 0


def test_window_rejects_out_of_range_dimension():
    with pytest.raises(ValueError):
        verify_zero_window(13)
