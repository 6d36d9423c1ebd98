import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ksi.profile import (ProfileCache, ProfileInvariantError, check_invariants, energy,
                         estimate_tail, potential_V, solve_profile, tail_coefficients)

# ℓ_α from the integral identity, frozen; cross-checked below against a direct scipy shot
FROZEN_ELL = {
    (3, 1.0): 1.017299436213978,
    (5, 1.0): 0.9666474834036572,
    (5, 10.0): 1.0064761521266459,
    (9, 100.0): 1.0000091419987747,
    (3, 10.0): 1.098337722241951,
    (3, 100.0): 0.9882919502059011,
}


def scipy_ell(n, alpha, R=40.0):
    """Independent shot: two-term launch, DOP853, then strip the ρ⁻⁴ tail term."""
    r0 = 1e-4
    a2 = -(alpha + 2 * n * alpha ** 2) / (2 * (n + 2))

    def rhs(r, y):
        u, du = y
        return [du, -((n + 1) / r * du + u + r / 2 * du + 2 * n * u * u + 2 * r * u * du)]

    s = solve_ivp(rhs, (r0, R), [alpha + a2 * r0 ** 2, 2 * a2 * r0], method="DOP853",
                  rtol=1e-13, atol=1e-16 * alpha)
    q = R ** 2 * s.y[0, -1]
    ell = q
    for _ in range(5):
        ell = q - 2 * (n - 2) * ell * (ell - 1) / R ** 2
    return ell


@pytest.mark.parametrize("n", range(3, 10))
@pytest.mark.parametrize("alpha", [0.01, 1.0, 100.0])
def test_invariants_hold_across_the_grid(n, alpha):
    sol = solve_profile(n, alpha)
    r, u = sol.grid, sol.u
    assert np.all(u > 0)
    assert np.all(sol.G > 0)
    assert np.all(u <= alpha / (1 + alpha * r ** 2 / 2) * (1 + 1e-10))
    assert np.all((r ** 2 * u >= 0) & (r ** 2 * u <= 2))
    E = sol.energy
    assert np.all(np.diff(E) <= 1e-8 + 1e-10 * E[0])


@pytest.mark.parametrize("key", sorted(FROZEN_ELL))
def test_tail_limit_matches_frozen_value(key):
    n, alpha = key
    d = estimate_tail(solve_profile(n, alpha))
    assert d.ell_alpha == pytest.approx(FROZEN_ELL[key], abs=1e-9)


@pytest.mark.parametrize("key", sorted(FROZEN_ELL))
def test_tail_limit_agrees_with_scipy_shot(key):
    n, alpha = key
    d = estimate_tail(solve_profile(n, alpha))
    assert abs(d.ell_alpha - scipy_ell(n, alpha)) < 2 * d.ell_ci + 1e-6 + 5e-6


def test_tail_limit_is_not_monotone_in_alpha():
    ells = [FROZEN_ELL[(3, a)] for a in (1.0, 10.0, 100.0)]
    assert ells[1] > ells[0] and ells[2] < ells[1]


def test_second_tail_coefficient():
    n, ell = 6, 0.8
    c = tail_coefficients(n, ell, 3)
    assert c[1] == ell
    assert c[2] == pytest.approx(2 * (n - 2) * ell * (ell - 1), rel=1e-14)


def test_tail_series_solves_the_ode_far_out():
    n, ell = 5, 1.2
    c = tail_coefficients(n, ell, 6)
    r = 60.0
    m = np.arange(1, c.size)
    u = np.sum(c[1:] * r ** (-2.0 * m))
    du = np.sum(-2 * m * c[1:] * r ** (-2.0 * m - 1))
    d2u = np.sum(2 * m * (2 * m + 1) * c[1:] * r ** (-2.0 * m - 2))
    res = d2u + (n + 1) / r * du + u + r / 2 * du + 2 * n * u * u + 2 * r * u * du
    assert abs(res) < 1e-12 * u


def test_dense_output_matches_nodes_and_series():
    sol = solve_profile(4, 2.0)
    u, du = sol.at(sol.grid[5:9])
    assert np.allclose(u, sol.u[5:9], rtol=1e-13)
    u0, du0 = sol.at(np.array([0.0, 1e-3]))
    assert u0[0] == 2.0 and du0[0] == 0.0
    a2 = -(2.0 + 32.0) / 12
    assert u0[1] == pytest.approx(2.0 + a2 * 1e-6, rel=1e-10)


def test_potential_coefficient():
    sol = solve_profile(5, 1.0)
    V = potential_V(sol)
    r = np.array([0.5, 3.0, 20.0])
    u, du = sol.at(r)
    assert np.allclose(V(r), 20 * u + 2 * r * du, rtol=1e-14)
    assert V(np.array([0.0]))[0] == pytest.approx(20.0)


def test_energy_formula():
    assert energy(3, 1.0, 2.0) == pytest.approx(2 + 0.5 + 2)


@pytest.mark.parametrize("bad", [dict(n=2, alpha=1.0), dict(n=5, alpha=0.0),
                                 dict(n=5, alpha=-1.0), dict(n=5, alpha=1.0, rmax=5.0)])
def test_invalid_arguments(bad):
    with pytest.raises(ValueError):
        solve_profile(**bad)


def test_invariant_violation_reports_radius():
    sol = solve_profile(5, 1.0)
    sol.u[10] = -1.0
    with pytest.raises(ProfileInvariantError) as e:
        check_invariants(sol)
    assert e.value.radius == sol.grid[10]


def test_memory_cache_returns_same_object():
    cache = ProfileCache()
    a = cache.get(5, 1.0)
    b = cache.get(5, 1.0)
    assert a is b and cache.hits == 1 and cache.misses == 1


def test_disk_cache_round_trip(tmp_path):
    c1 = ProfileCache(tmp_path)
    a = c1.get(6, 3.0)
    assert list(tmp_path.glob("profile_*.npz"))
    c2 = ProfileCache(tmp_path)
    b = c2.get(6, 3.0)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.grid, b.grid)
    r = np.array([0.3, 7.0])
    assert np.array_equal(a.at(r)[0], b.at(r)[0])


def test_corrupt_cache_file_is_ignored(tmp_path):
    c1 = ProfileCache(tmp_path)
    a = c1.get(5, 2.0)
    for p in tmp_path.glob("profile_*.npz"):
        p.write_bytes(b"garbage")
    b = ProfileCache(tmp_path).get(5, 2.0)
    assert np.array_equal(a.u, b.u)
