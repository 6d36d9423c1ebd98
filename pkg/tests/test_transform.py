import math

import numpy as np
import pytest
from scipy.special import gamma, gammainc

from ksi.transform import (Ambient, NonIntegrableError, NormSpec, RadialField, apply_A,
                           apply_A_inverse, derivative, geometric_grid, norm, norm_detail,
                           power_field, sphere_area)

P, R = Ambient.PHYSICAL, Ambient.REDUCED


def gaussian_mass_average(n, r):
    """A[e^{-|x|²}] in closed form via the incomplete gamma function."""
    return gammainc(n / 2, r ** 2) * gamma(n / 2) / (4 * r ** n)


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(7) == pytest.approx(16 * math.pi ** 3 / 15)


@pytest.mark.parametrize("n", [3, 5, 9])
def test_inverse_square_density_maps_to_inverse_square_field(n):
    ell = 0.87
    g = geometric_grid(1e-3, 10.0, 2001)
    c = power_field(P, n, g, 2 * ell * (n - 2), 2)
    w = apply_A(c)
    sel = (g >= 0.1) & (g <= 10)
    rel = np.abs(w.values[sel] * g[sel] ** 2 / ell - 1)
    assert rel.max() < 1e-8
    assert w.ambient is R and w.tail_exponent == 2


@pytest.mark.parametrize("n", [3, 6])
@pytest.mark.parametrize("kind", ["geometric", "uniform"])
def test_gaussian_average_matches_closed_form(n, kind):
    g = geometric_grid(1e-3, 8.0, 2001) if kind == "geometric" else np.linspace(0, 8.0, 1601)
    w = apply_A(RadialField(P, n, g, np.exp(-g ** 2)))
    ref = np.where(g > 0, gaussian_mass_average(n, np.where(g > 0, g, 1.0)), 1 / (2 * n))
    assert np.max(np.abs(w.values - ref)) < 1e-9


@pytest.mark.parametrize("kind", ["geometric", "uniform"])
@pytest.mark.parametrize("f", [lambda r: np.exp(-r ** 2),
                               lambda r: (1 + r ** 2) ** -3,
                               lambda r: np.cos(r) * np.exp(-r ** 2 / 4)])
def test_round_trip_identities(kind, f):
    n = 5
    g = geometric_grid(1e-3, 10.0, 2001) if kind == "geometric" else np.linspace(0, 10.0, 2001)
    c = RadialField(P, n, g, f(g))
    back = apply_A_inverse(apply_A(c))
    assert np.max(np.abs(back.values - c.values)) < 1e-6
    w = RadialField(R, n, g, f(g))
    again = apply_A(apply_A_inverse(w))
    assert np.max(np.abs(again.values - w.values)) < 1e-6


def test_derivative_is_exact_on_polynomials():
    g = np.sort(np.concatenate([[0.0], geometric_grid(1e-2, 3.0, 40)]))
    d = derivative(g, g ** 5 - 2 * g ** 3)
    assert np.allclose(d, 5 * g ** 4 - 6 * g ** 2, atol=1e-9)


def test_gaussian_norm_closed_forms():
    n = 5
    g = np.linspace(0, 8, 4001)
    f = np.exp(-g ** 2)
    d = n + 2
    unweighted = norm(RadialField(R, n, g, f), NormSpec(2, R, False))
    assert unweighted == pytest.approx((math.pi / 2) ** (d / 4), rel=1e-10)
    weighted = norm(RadialField(R, n, g, f), NormSpec(3, R, True))
    ref = sphere_area(d) * gamma((d - 2) / 2) / (2 * 3 ** ((d - 2) / 2))
    assert weighted == pytest.approx(ref ** (1 / 3), rel=1e-8)
    phys = norm(RadialField(P, n, g, f), NormSpec(1, P))
    assert phys == pytest.approx(math.pi ** (n / 2), rel=1e-10)


def test_power_tail_is_extrapolated():
    n = 5
    g = geometric_grid(1e-3, 50.0, 3001)
    w = power_field(R, n, g, 1.0, 2)
    with pytest.raises(NonIntegrableError):
        norm(w, NormSpec(2, R))
    # ρ^{-2} on ℝ^7 with the |ξ|^{-2} weight is q-integrable at infinity for q > 2.5
    tail_only = RadialField(R, n, g, np.minimum(1.0, g ** -2.0) * (g >= 1), 2)
    d = norm_detail(tail_only, NormSpec(3, R))
    ref = sphere_area(7) * (1 / (6 - 5) - 0.0)
    assert d.value == pytest.approx(ref ** (1 / 3), rel=1e-3)
    assert 0 < d.tail_fraction < 1


def test_field_validation():
    g = np.linspace(0, 1, 10)
    with pytest.raises(ValueError):
        RadialField(P, 5, g[::-1], g)
    with pytest.raises(ValueError):
        RadialField(P, 5, g + 0.5, g)
    with pytest.raises(ValueError):
        RadialField(P, 5, g, np.full(10, np.nan))
    with pytest.raises(ValueError):
        RadialField(P, 5, g[:3], g[:3])
    gg = geometric_grid(1e-3, 10.0, 200)
    with pytest.raises(ValueError):
        RadialField(R, 5, gg, (1 + gg ** 2) ** -1.0, tail_exponent=3)


def test_wrong_ambient_is_rejected():
    g = np.linspace(0, 5, 101)
    with pytest.raises(ValueError):
        apply_A(RadialField(R, 5, g, np.exp(-g ** 2)))
    with pytest.raises(ValueError):
        apply_A_inverse(RadialField(P, 5, g, np.exp(-g ** 2)))
    with pytest.raises(ValueError):
        norm(RadialField(P, 5, g, np.exp(-g ** 2)), NormSpec(2, R))


def test_non_integrable_origin():
    g = geometric_grid(1e-3, 5.0, 500)
    with pytest.raises(NonIntegrableError):
        apply_A(RadialField(P, 3, g, g ** -3.5))


def test_norm_spec_parsing():
    s = NormSpec.parse("q=3, ambient=physical, weighted=false")
    assert s == NormSpec(3.0, P, False)
    assert NormSpec.parse("") == NormSpec()
    for bad in ("q=0.5", "weighted=maybe", "colour=red", "q=inf"):
        with pytest.raises(ValueError):
            NormSpec.parse(bad)
