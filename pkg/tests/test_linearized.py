import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ksi.linearized import (MuClass, classify_mu,
                            count_unstable_eigenvalues, probe, solve_linearized,
                            stabilized_count, weights)
from ksi.profile import estimate_tail, solve_profile

FROZEN_COUNT_AT_100 = {3: 1, 4: 1, 5: 1, 6: 1, 7: 1, 8: 1, 9: 0}


def scipy_zero_count(n, alpha, lam, rmax=30.0):
    r0 = 1e-4
    a2 = -(alpha + 2 * n * alpha ** 2) / (2 * (n + 2))
    b2 = -((1 - lam) + 4 * n * alpha + 2 * n * alpha) / (2 * (n + 2))  # f'' ≈ 2b₂ at 0

    def rhs(r, y):
        u, du, f, df = y
        d2u = -((n + 1) / r * du + u + r / 2 * du + 2 * n * u * u + 2 * r * u * du)
        d2f = -(((n + 1) / r + r / 2 + 2 * r * u) * df + ((1 - lam) + 4 * n * u + 2 * r * du) * f)
        return [du, d2u, df, d2f]

    y0 = [alpha + a2 * r0 ** 2, 2 * a2 * r0, 1 + b2 * r0 ** 2, 2 * b2 * r0]
    s = solve_ivp(rhs, (r0, rmax), y0, method="DOP853", rtol=1e-12, atol=1e-14, max_step=0.05)
    f = s.y[2]
    return int(np.sum(np.sign(f[1:]) != np.sign(f[:-1])))


@pytest.mark.parametrize("n", range(3, 10))
@pytest.mark.parametrize("lam", [0.0, 0.05])
def test_small_alpha_has_no_zeros(n, lam):
    sc = stabilized_count(n, 1 / (32 * n), lam)
    assert sc.stabilized and sc.count == 0 and sc.tail_sign == 1


@pytest.mark.parametrize("n", range(3, 10))
def test_frozen_counts_at_alpha_100(n):
    sc = stabilized_count(n, 100.0, 0.0)
    assert sc.stabilized and sc.count == FROZEN_COUNT_AT_100[n]


@pytest.mark.parametrize("n,alpha,lam", [(5, 10.0, 0.0), (4, 100.0, 0.0), (6, 1e4, 0.0),
                                         (5, 10.0, 1.0)])
def test_counts_agree_with_scipy(n, alpha, lam):
    assert probe(n, alpha, lam, rmax=30.0).count == scipy_zero_count(n, alpha, lam)


def test_large_alpha_counts_are_frozen():
    assert stabilized_count(5, 1e6, 0.0).count == 4
    assert stabilized_count(9, 1e6, 0.0).count == 2


def test_count_is_nonincreasing_in_lambda():
    counts = [stabilized_count(5, 1e4, lam).count for lam in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] >= 1


def test_probe_starts_at_one_and_resolves_the_launch_disc():
    p = probe(5, 10.0)
    f, df = p.at([0.0, 1e-3, 1.0])
    assert f[0] == 1.0 and df[0] == 0.0
    assert np.all(np.isfinite(f))
    f1, _ = p.at(p.ivp.grid[3])
    assert f1[0] == pytest.approx(p.ivp.states[3, 2], rel=1e-13)


def test_zero_count_scales_out_of_initial_value():
    a = probe(5, 10.0, f0=1.0)
    b = probe(5, 10.0, f0=-3.0)
    assert np.allclose(a.zeros, b.zeros, rtol=1e-8)


def test_count_unstable_eigenvalues():
    assert count_unstable_eigenvalues(solve_profile(5, 10.0)) == 1
    assert count_unstable_eigenvalues(solve_profile(5, 0.1)) == 0


def test_unstabilized_count_raises_for_tiny_cap():
    sc = stabilized_count(5, 1e6, 0.0, rmax=1.0, cap=2.0)
    assert not sc.stabilized and sc.rmax == 2.0


def test_log_weight_growth_rate():
    sol = solve_profile(5, 1.0)
    ell = estimate_tail(sol).ell_alpha
    w = weights(sol)
    # log H − ρ²/4 ~ (n+1+ℓ) log ρ far out
    r1, r2 = 20.0, 40.0
    slope = ((w.logH(r2) - r2 ** 2 / 4) - (w.logH(r1) - r1 ** 2 / 4)) / np.log(r2 / r1)
    assert slope == pytest.approx(5 + 1 + ell, abs=1e-2)
    assert w.logH(1.0) == pytest.approx(0.0, abs=1e-14)
    assert w.logpi(0.0) == 0.0


def test_weight_integral_against_quadrature():
    sol = solve_profile(4, 3.0)
    w = weights(sol)
    from scipy.integrate import quad
    ref, _ = quad(lambda s: s * sol.at(np.array([s]))[0][0], 0, 5.0, epsabs=1e-13, limit=200)
    assert float(w.integral_su(5.0)) == pytest.approx(ref, rel=1e-8)


def test_mu_classification():
    sol = solve_profile(5, 0.1)
    assert classify_mu(sol, 0.1, 0.5) is MuClass.SUBCRITICAL_POSITIVE
    assert classify_mu(sol, 0.1, 50.0) is MuClass.SUPERCRITICAL_OSCILLATING
    with pytest.raises(ValueError):
        classify_mu(sol, 0.0, 1.0)


def test_solve_linearized_uses_profile_range():
    sol = solve_profile(5, 10.0, rmax=30.0)
    p = solve_linearized(sol)
    assert p.rmax == 30.0 and p.grid[-1] == pytest.approx(30.0)
