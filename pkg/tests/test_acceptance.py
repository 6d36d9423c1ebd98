"""The ten acceptance criteria; each prints one CRITERION line whether it passes or not."""

import math
import time

import numpy as np
import pytest

from ksi import similarity_pde as sp
from ksi.asymptotics import emden_trajectory, solve_rescaled, verify_zero_window, window_discriminant
from ksi.linearized import stabilized_count
from ksi.profile import ProfileInvariantError, solve_profile
from ksi.spectral_search import (check_localization_condition, find_alpha_bar,
                                 find_alpha_with_k_zeros, find_lambda_max, verify_certificate)
from ksi.transform import (Ambient, RadialField, apply_A, apply_A_inverse, geometric_grid,
                           power_field)

DIMS = range(3, 10)


def record(log, k, ok, detail, elapsed, limit):
    within = elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    line = f"CRITERION {k:2d}: {status} {detail} [{elapsed:.2f}s / {limit:g}s]"
    log.append(line)
    print(line)
    assert ok, line
    assert within, line


def test_criterion_01_profile_invariants(acceptance_log):
    t = time.perf_counter()
    bad = []
    for n in DIMS:
        for a in (0.01, 0.1, 1.0, 10.0, 100.0):
            try:
                solve_profile(n, a)  # invariants are checked at 1e-10 relative
            except ProfileInvariantError as e:
                bad.append(f"n={n},alpha={a}:{e}")
    record(acceptance_log, 1, not bad, f"35 solves, violations={bad or 'none'}",
           time.perf_counter() - t, 10)


def test_criterion_02_tail_limits(acceptance_log):
    t = time.perf_counter()
    fails, worst = [], 0.0
    for n in DIMS:
        lim = solve_rescaled(n, math.inf, rmax=100.0)
        e1, e2 = abs(lim.rho2u[-1] - 1), abs(lim.rho3du[-1] + 2)
        d = emden_trajectory(n, terminal_tol=None).terminal_distance
        worst = max(worst, d)
        if e1 >= 0.02 or e2 >= 0.05 or d >= 1e-3:
            fails.append(f"n={n}:|rho2u-1|={e1:.3g},|rho3du+2|={e2:.3g}")
    record(acceptance_log, 2, not fails,
           f"emden max terminal distance={worst:.2g}, failing={fails or 'none'}",
           time.perf_counter() - t, 5)


def test_criterion_03_dimension_window(acceptance_log):
    t = time.perf_counter()
    neg = [n for n in range(3, 13) if window_discriminant(n) < 0]
    ok = neg == list(DIMS)
    notes = []
    for n in range(3, 13):
        rep = verify_zero_window(n)
        if n <= 9:
            good = rep["count"] >= 1 and rep["bracketed"]
            ok &= good
            notes.append(f"{n}:{rep['count']}z{'' if good else '!'}")
        else:
            notes.append(f"{n}:{rep['count']}z(recorded)")
    record(acceptance_log, 3, ok, f"negative discriminant n={neg}; " + " ".join(notes),
           time.perf_counter() - t, 10)


def test_criterion_04_stability_threshold(acceptance_log):
    t = time.perf_counter()
    bad = []
    for n in DIMS:
        for lam in (0.0, 0.05):
            sc = stabilized_count(n, 1 / (32 * n), lam)
            if sc.count != 0 or not sc.stabilized:
                bad.append((n, lam, sc.count))
    record(acceptance_log, 4, not bad, f"14 probes at alpha=1/(32n), nonzero={bad or 'none'}",
           time.perf_counter() - t, 5)


@pytest.mark.parametrize("n", DIMS)
def test_criterion_05_instability_existence(acceptance_log, n):
    t = time.perf_counter()
    a1 = find_alpha_with_k_zeros(n, 1)
    ab = find_alpha_bar(n, 0.1)
    lm = find_lambda_max(solve_profile(n, ab.value + 1e-6)).value
    cert = verify_certificate(ab)
    ok = a1.value < 1e6 and ab.value >= 1 / (16 * n) and cert and 0 < lm <= 0.12
    record(acceptance_log, 5, ok,
           f"n={n} alpha_1={a1.value:.6g} alpha_bar={ab.value:.6g} cert={cert} "
           f"lambda_max(alpha_bar+tol)={lm:.6g}", time.perf_counter() - t, 120)


def test_criterion_06_localization_gate(acceptance_log):
    t = time.perf_counter()
    n = 5
    r = 0.55 * n
    lam_bar = (1 - n / (2 * r)) / 2
    ab = find_alpha_bar(n, lam_bar)
    lm = find_lambda_max(solve_profile(n, ab.value)).value
    ok = check_localization_condition(n, r, lm)
    record(acceptance_log, 6, ok,
           f"n=5 r={r:g} lambda_bar={lam_bar:.6g} alpha_bar={ab.value:.6g} "
           f"lambda_max={lm:.6g} < {1 - n / (2 * r):.6g}", time.perf_counter() - t, 120)


def test_criterion_07_semigroup_oracle(acceptance_log):
    t = time.perf_counter()
    n = 5
    cfg = sp.EvolutionConfig(n, "free")
    g = cfg.grid
    fields = {"gauss": np.exp(-g ** 2 / 4), "ring": g ** 2 * np.exp(-g ** 2 / 2),
              "osc": np.cos(g) * np.exp(-g ** 2 / 8)}
    errs = {}
    for name, v in fields.items():
        st = sp.evolve(cfg, sp.state_from(cfg, v), 1.0)
        ref = sp.free_step_reference(st[0].field, 1.0)
        errs[name] = sp.y_norm(n, g, st[-1].values - ref.values) / sp.y_norm(n, g, ref.values)
    q = 3.0
    rate = 1 - n / (2 * q)
    pc = sp.EvolutionConfig(n, "free", boundary="asymptotic_power", norm_r=q)
    safe = np.where(g > 0, g, 1.0)
    tail = np.where(g > 0, -np.expm1(-safe ** 2) / safe ** 2, 1.0)
    st = sp.evolve(pc, sp.state_from(pc, tail), 3.0)
    taus = np.array([s.tau for s in st])
    ratio = np.array([s.norms["Yr"] for s in st]) * np.exp(-rate * taus)
    C = ratio[taus <= 1.5].max()
    bound_ok = bool(np.all(ratio <= C * (1 + 1e-12)))
    ok = max(errs.values()) < 0.01 and bound_ok
    detail = " ".join(f"{k}={v:.2e}" for k, v in errs.items())
    record(acceptance_log, 7, ok, f"Y2 rel err at tau=1 {detail}; growth bound C={C:.4g} "
           f"holds on [0,3]={bound_ok}", time.perf_counter() - t, 30)


def test_criterion_08_eigenvalue_cross_validation(acceptance_log):
    t = time.perf_counter()
    out = []
    for a in (4.97, 10.0):
        rep = sp.eigen_growth_check(5, a)
        out.append((a, rep["measured_rate"], rep["lambda_max"], rep["relative_error"]))
    ok = all(e < 0.05 for *_, e in out)
    detail = "; ".join(f"alpha={a:g} rate={r:.5f} lambda_max={l:.5f} err={e:.2%}"
                       for a, r, l, e in out)
    record(acceptance_log, 8, ok, detail, time.perf_counter() - t, 120)


def test_criterion_09_ancient_dichotomy(acceptance_log):
    t = time.perf_counter()
    rep = sp.ancient_dichotomy_demo(5, 10.0, 1e-3)
    halving = rep["residual_halving_ratio"]
    ok = (rep["separated"] and rep["lower_bound_holds"] and rep["residual_ratio_start"] < 0.1
          and 4 / 1.5 <= halving <= 4 * 1.5)
    record(acceptance_log, 9, ok,
           f"separated={rep['separated']} lower_bound={rep['lower_bound_holds']} "
           f"residual@tau0+1={rep['residual_ratio_start']:.2e} halving={halving:.3f}",
           time.perf_counter() - t, 300)


def test_criterion_10_transform_identities(acceptance_log):
    t = time.perf_counter()
    n = 5
    worst_rt = 0.0
    for grid in (geometric_grid(1e-3, 10.0, 2001), np.linspace(0, 10.0, 2001)):
        for f in (np.exp(-grid ** 2), (1 + grid ** 2) ** -3, np.cos(grid) * np.exp(-grid ** 2 / 4)):
            c = RadialField(Ambient.PHYSICAL, n, grid, f)
            back = apply_A_inverse(apply_A(c))
            worst_rt = max(worst_rt, float(np.max(np.abs(back.values - f))))
    worst_pw = 0.0
    g = geometric_grid(1e-3, 10.0, 2001)
    for dim in DIMS:
        ell = 0.9
        w = apply_A(power_field(Ambient.PHYSICAL, dim, g, 2 * ell * (dim - 2), 2))
        sel = (g >= 0.1) & (g <= 10)
        worst_pw = max(worst_pw, float(np.max(np.abs(w.values[sel] * g[sel] ** 2 / ell - 1))))
    ok = worst_rt < 1e-6 and worst_pw < 1e-8
    record(acceptance_log, 10, ok, f"round trip sup err={worst_rt:.2e}; "
           f"inverse-square rel err={worst_pw:.2e}", time.perf_counter() - t, 10)
