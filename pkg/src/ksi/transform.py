"""Reduced-mass transform between radial densities on ℝⁿ and fields on ℝ^{n+2}.

    A[c](r) = (1/(2rⁿ)) ∫₀^r c(s) s^{n−1} ds,     A⁻¹[w](r) = 2n w(r) + 2r w'(r).

Norms are radial quadratures of |f|^q with the ambient surface measure; reduced
fields may carry the |ξ|^{-2} weight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.integrate import simpson
from scipy.special import gammaln


class Ambient(str, enum.Enum):
    PHYSICAL = "physical_n"
    REDUCED = "reduced_n_plus_2"


class NonIntegrableError(ValueError):
    pass


def sphere_area(dim: int) -> float:
    """|S^{dim−1}| = 2π^{dim/2}/Γ(dim/2), the unit sphere in ℝ^dim."""
    if dim < 1:
        raise ValueError("dim must be positive")
    return 2.0 * math.exp(0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim))


@dataclass(frozen=True)
class RadialField:
    ambient: Ambient
    n: int
    grid: np.ndarray
    values: np.ndarray
    tail_exponent: float | None = None  # values ~ ρ^{-tail_exponent} beyond the grid

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ambient", Ambient(self.ambient))
        if g.ndim != 1 or g.shape != v.shape or g.size < 5:
            raise ValueError("grid and values must be matching 1-d arrays of length >= 5")
        if not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")
        if g[0] < 0 or g[0] > 1e-3:
            raise ValueError("grid must start in [0, 1e-3]")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.tail_exponent is not None:
            d = self.tail_drift()
            if d > 0.05:
                raise ValueError(f"tail does not follow rho^-{self.tail_exponent:g} "
                                 f"(drift {d:.3g} over the last decade)")

    @property
    def dim(self) -> int:
        return self.n if self.ambient is Ambient.PHYSICAL else self.n + 2

    def tail_drift(self) -> float:
        """Relative spread of values·ρ^{tail_exponent} over [rmax/10, rmax]."""
        g = self.grid
        sel = g >= g[-1] / 10
        scaled = self.values[sel] * g[sel] ** self.tail_exponent
        ref = abs(scaled[-1])
        if ref == 0:
            return 0.0 if np.all(scaled == 0) else math.inf
        return float(np.max(np.abs(scaled - scaled[-1])) / ref)

    def with_values(self, values, ambient=None, tail_exponent=None) -> "RadialField":
        return RadialField(ambient or self.ambient, self.n, self.grid, values, tail_exponent)


@dataclass(frozen=True)
class NormSpec:
    exponent: float = 2.0
    ambient: Ambient = Ambient.REDUCED
    weighted: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ambient", Ambient(self.ambient))
        if not self.exponent >= 1 or math.isinf(self.exponent):
            raise ValueError("norm exponent must lie in [1, inf)")

    @classmethod
    def parse(cls, text: str) -> "NormSpec":
        """Read "q=2,ambient=reduced,weighted=true"."""
        kw = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, val = part.partition("=")
            key, val = key.strip().lower(), val.strip().lower()
            if key in ("q", "exponent"):
                kw["exponent"] = float(val)
            elif key == "ambient":
                kw["ambient"] = Ambient.REDUCED if val.startswith("reduced") else Ambient.PHYSICAL
            elif key == "weighted":
                if val not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"weighted must be a boolean, got {val!r}")
                kw["weighted"] = val in ("true", "1", "yes")
            else:
                raise ValueError(f"unknown norm key {key!r}")
        return cls(**kw)

    @property
    def key(self) -> str:
        return f"q={self.exponent:g},{self.ambient.value},{'w' if self.weighted else 'u'}"


def _origin_exponent(r0, r1, c0, c1) -> float:
    if c0 == 0 or c1 == 0 or np.sign(c0) != np.sign(c1):
        return 0.0
    return math.log(c1 / c0) / math.log(r1 / r0)


def _cumulative_mass(n: int, grid: np.ndarray, c: np.ndarray) -> np.ndarray:
    """∫₀^r c(s) s^{n−1} ds at every node."""
    if grid[0] == 0.0:
        # spline c itself; s^{n-1} times a quintic piece is integrated exactly by Gauss
        spl = make_interp_spline(grid, c, k=5)
        xg, wg = np.polynomial.legendre.leggauss(8 + n // 2)
        a, b = grid[:-1, None], grid[1:, None]
        s = 0.5 * (a + b) + 0.5 * (b - a) * xg[None, :]
        piece = 0.5 * (b[:, 0] - a[:, 0]) * ((spl(s) * s ** (n - 1)) @ wg)
        return np.concatenate([[0.0], np.cumsum(piece)])
    p = _origin_exponent(grid[0], grid[1], c[0], c[1])
    if p <= -n:
        raise NonIntegrableError(f"origin behaviour rho^{p:.3g} is not integrable against rho^{n - 1}")
    r0, r1 = grid[0], grid[1]
    if abs(p) < 0.5:
        # regular at the origin: c ≈ a + b s²
        b = (c[1] - c[0]) / (r1 ** 2 - r0 ** 2)
        a = c[0] - b * r0 ** 2
        head = a * r0 ** n / n + b * r0 ** (n + 2) / (n + 2)
    else:
        head = c[0] * r0 ** n / (n + p)
    x = np.log(grid)
    spl = make_interp_spline(x, c * grid ** n, k=5).antiderivative()
    return head + spl(x) - spl(x[0])


def apply_A(c: RadialField) -> RadialField:
    if c.ambient is not Ambient.PHYSICAL:
        raise ValueError("apply_A expects a physical density")
    n = c.n
    M = _cumulative_mass(n, c.grid, c.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = M / (2 * c.grid ** n)
    if c.grid[0] == 0.0:
        w[0] = c.values[0] / (2 * n)
    tail = None
    if c.tail_exponent is not None and c.tail_exponent != n:
        tail = min(c.tail_exponent, float(n))
    return RadialField(Ambient.REDUCED, n, c.grid, w, tail)


def _fornberg(x0: float, xs: np.ndarray, order: int = 1) -> np.ndarray:
    """Finite-difference weights at x0 from nodes xs (Fornberg's recursion)."""
    m = xs.size
    c = np.zeros((m, order + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, m):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def derivative(grid: np.ndarray, values: np.ndarray, width: int = 7) -> np.ndarray:
    """First derivative from ``width``-point stencils, centred where the grid allows."""
    m = grid.size
    width = min(width, m)
    half = width // 2
    out = np.empty(m)
    for i in range(m):
        lo = min(max(i - half, 0), m - width)
        w = _fornberg(grid[i], grid[lo:lo + width])
        out[i] = w @ values[lo:lo + width]
    return out


def apply_A_inverse(w: RadialField) -> RadialField:
    if w.ambient is not Ambient.REDUCED:
        raise ValueError("apply_A_inverse expects a reduced field")
    n = w.n
    c = 2 * n * w.values + 2 * w.grid * derivative(w.grid, w.values)
    tail = w.tail_exponent if w.tail_exponent not in (None, float(n)) else None
    return RadialField(Ambient.PHYSICAL, n, w.grid, c, tail)


@dataclass(frozen=True)
class NormValue:
    value: float
    tail_fraction: float  # share of |f|^q mass attributed to the extrapolated tail


def norm_detail(field: RadialField, spec: NormSpec) -> NormValue:
    if field.ambient is not spec.ambient:
        raise ValueError(f"norm spec is for {spec.ambient.value}, field is {field.ambient.value}")
    q = spec.exponent
    d = field.dim
    # integrand |f|^q ρ^{k} with k = d − 1 (minus 2 for the |ξ|^{-2} weight)
    k = d - 1 - (2 if spec.weighted and field.ambient is Ambient.REDUCED else 0)
    g = field.grid
    a = np.abs(field.values) ** q
    body = simpson(a * g ** k, x=g)
    head = 0.0
    if g[0] > 0:
        if k <= -1:
            raise NonIntegrableError(f"weight rho^{k} is not integrable at the origin")
        head = a[0] * g[0] ** (k + 1) / (k + 1)
    tail = 0.0
    if field.tail_exponent is not None:
        decay = q * field.tail_exponent - (k + 1)
        if decay <= 0:
            raise NonIntegrableError(
                f"tail rho^-{field.tail_exponent:g} is not integrable in the q={q:g} norm "
                f"(needs exponent > {(k + 1) / q:g})")
        tail = a[-1] * g[-1] ** (k + 1) / decay
    total = head + body + tail
    omega = sphere_area(d)
    return NormValue(float((omega * total) ** (1 / q)), float(tail / total) if total else 0.0)


def norm(field: RadialField, spec: NormSpec) -> float:
    return norm_detail(field, spec).value


def power_field(ambient, n, grid, coefficient, exponent) -> RadialField:
    """coefficient·ρ^{-exponent} tagged with its tail exponent."""
    grid = np.asarray(grid, dtype=float)
    return RadialField(ambient, n, grid, coefficient * grid ** (-float(exponent)), float(exponent))


def geometric_grid(r0: float = 1e-3, r1: float = 10.0, points: int = 2001) -> np.ndarray:
    return np.geomspace(r0, r1, points)
