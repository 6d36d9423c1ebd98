"""Bracketed searches over α and λ driven by stabilized zero counts."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .linearized import stabilized_count
from .profile import ProfileCache, ProfileSolution, default_cache

ALPHA_MAX = 1e6
LAMBDA_CAP = 1e4


class SearchError(ArithmeticError):
    pass


class SpectrallyStableError(SearchError):
    pass


@dataclass(frozen=True)
class SearchResult:
    n: int
    target: str
    value: float
    bracket: tuple
    evaluations: int
    certificate: dict
    wall_time: float = 0.0
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"n": self.n, "target": self.target, "value": self.value,
                "bracket": list(self.bracket), "certificate": self.certificate,
                "evaluations": self.evaluations, "wall_time": self.wall_time,
                "params": self.params}


class _Counter:
    """Zero-count oracle at fixed (n, λ) that records every probe."""

    def __init__(self, n, lam, cache: ProfileCache, rmax=50.0, cap=800.0):
        self.n, self.lam, self.cache = n, lam, cache
        self.rmax, self.cap = rmax, cap
        self.evaluations = 0
        self.log = {}

    def __call__(self, alpha: float):
        # the profile solve doubles as a validity gate for the trial α
        self.cache.get(self.n, alpha)
        sc = stabilized_count(self.n, alpha, self.lam, 1.0, self.rmax, self.cap)
        self.evaluations += 1
        if not sc.stabilized:
            raise SearchError(f"zero count not stabilized at alpha = {alpha:.17g}")
        self.log[alpha] = sc
        return sc


def _bisect(pred, lo, hi, tol):
    """Shrink [lo, hi] with pred(lo) false and pred(hi) true until hi − lo ≤ tol."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def _alpha_search(n, k, lam, tol, alpha_max, cache, target):
    if not 3 <= n <= 9:
        raise ValueError("n must lie in 3..9 for the instability searches")
    if k < 1:
        raise ValueError("k must be at least 1")
    t0 = time.perf_counter()
    count = _Counter(n, lam, cache or default_cache())
    pred = lambda a: count(a).count >= k
    lo = 1.0 / (16 * n)
    if pred(lo):
        raise SearchError(f"already {k} zeros at the lower bound alpha = {lo:.6g}")
    hi = 2 * lo
    while not pred(hi):
        lo, hi = hi, 2 * hi
        if hi > alpha_max:
            raise SearchError(f"no alpha below {alpha_max:g} with {k} zeros at lambda = {lam:g}")
    lo, hi = _bisect(pred, lo, hi, tol)
    cert = {"low": {"alpha": lo, **count.log[lo].as_dict()},
            "high": {"alpha": hi, **count.log[hi].as_dict()},
            "k": k, "lambda": lam}
    return SearchResult(n, target, hi, (lo, hi), count.evaluations, cert,
                        time.perf_counter() - t0, {"k": k, "lambda": lam, "tol": tol})


def find_alpha_with_k_zeros(n: int, k: int = 1, tol: float = 1e-6,
                            alpha_max: float = ALPHA_MAX,
                            cache: ProfileCache | None = None) -> SearchResult:
    """Lowest α in the first doubling bracket where the λ=0 probe has ≥ k zeros.

    Doubling starts at 1/(16n); the count is not assumed monotone in α, so the
    result is the lowest crossing inside the acquired bracket.  The returned
    value is the bracket's upper end, a point certified to carry ≥ k zeros.
    """
    return _alpha_search(n, k, 0.0, tol, alpha_max, cache, "alpha_k")


def find_alpha_bar(n: int, lambda_bar: float, tol: float = 1e-6,
                   alpha_max: float = ALPHA_MAX,
                   cache: ProfileCache | None = None) -> SearchResult:
    """ᾱ = inf{α : the λ̄-shifted probe has a positive zero}, bracketed from 1/(16n)."""
    if not lambda_bar > 0:
        raise ValueError("lambda_bar must be positive")
    res = _alpha_search(n, 1, lambda_bar, tol, alpha_max, cache, "alpha_bar")
    floor = 1.0 / (16 * n)
    if res.value < floor:
        raise SearchError(f"alpha_bar = {res.value:.6g} below the proven bound {floor:.6g}")
    below = stabilized_count(n, 1.0 / (32 * n), lambda_bar)
    res.certificate["stable_reference"] = {"alpha": 1.0 / (32 * n), **below.as_dict()}
    return res


def find_lambda_max(sol: ProfileSolution, tol: float = 1e-8) -> SearchResult:
    """Largest eigenvalue: the λ where the shifted zero count drops from ≥ 1 to 0."""
    t0 = time.perf_counter()
    n, alpha = sol.n, sol.alpha
    evals = 0
    log = {}

    def count(lam):
        nonlocal evals
        sc = stabilized_count(n, alpha, lam, 1.0)
        evals += 1
        if not sc.stabilized:
            raise SearchError(f"zero count not stabilized at lambda = {lam:.17g}")
        log[lam] = sc
        return sc.count

    if count(0.0) < 1:
        raise SpectrallyStableError(f"profile is spectrally stable at alpha = {alpha:.6g}")
    lo, hi = 0.0, 1.0
    while count(hi) >= 1:
        lo, hi = hi, 2 * hi
        if hi > LAMBDA_CAP:
            raise SearchError("no upper bracket for lambda_max")
    lo, hi = _bisect(lambda lam: count(lam) == 0, lo, hi, tol)
    cert = {"low": {"lambda": lo, **log[lo].as_dict()},
            "high": {"lambda": hi, **log[hi].as_dict()}, "alpha": alpha}
    return SearchResult(n, "lambda_max", 0.5 * (lo + hi), (lo, hi), evals, cert,
                        time.perf_counter() - t0, {"alpha": alpha, "tol": tol})


def verify_certificate(res: SearchResult) -> bool:
    """Re-run the two bracket probes and confirm their counts still differ as recorded."""
    c = res.certificate
    if res.target == "lambda_max":
        a = c["alpha"]
        lo = stabilized_count(res.n, a, c["low"]["lambda"]).count
        hi = stabilized_count(res.n, a, c["high"]["lambda"]).count
        return lo >= 1 and hi == 0 and lo == c["low"]["count"] and hi == c["high"]["count"]
    k, lam = c["k"], c["lambda"]
    lo = stabilized_count(res.n, c["low"]["alpha"], lam).count
    hi = stabilized_count(res.n, c["high"]["alpha"], lam).count
    return lo < k <= hi and lo == c["low"]["count"] and hi == c["high"]["count"]


def check_localization_condition(n: int, r: float, lambda_max: float) -> bool:
    """λ_max < 1 − n/(2r), for r in the admissible window n/2 < r < 2n/3."""
    if not n / 2 < r < 2 * n / 3:
        raise ValueError(f"r = {r:g} outside the window ({n / 2:g}, {2 * n / 3:g})")
    return lambda_max < 1 - n / (2 * r)
