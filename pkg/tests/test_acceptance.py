"""Acceptance criteria, one test (or parametrized group) per criterion.

Each check records a PASS/FAIL line that pytest prints in the
"acceptance criteria" terminal section.
"""

import math
import time

import numpy as np
import pytest

from threshold_probe.analytics import (
    check_dominance,
    exact_policy_value,
    min_ratio,
    optimize_alphas,
    positive_counts_exact,
    prob_e10,
    prob_e110,
)
from threshold_probe.distributions import (
    DiscreteDistribution,
    counterexample3,
    expected_max,
    golden_nugget,
    quantile_of,
    uniform01,
)
from threshold_probe.dp_optimal import brute_force_optimal, dominance_vs_randomized, ratio, solve
from threshold_probe.multi_test import (
    Budget,
    TypedBox,
    _binary_search_type,
    multitest_runner,
    type_of,
    type_quantile,
)
from threshold_probe.policies import TABULATED_ALPHAS, QuantilePolicy, quantile_runner
from threshold_probe.sim import SimConfig, estimate


def _pieces(k):
    return {p["piece"]: p for p in min_ratio(TABULATED_ALPHAS[k]).pieces}


# ------------------------------------------------------------------ 1


@pytest.mark.parametrize(
    "k,check",
    [
        (1, lambda c: abs(c - 0.63212) <= 1e-5),
        (2, lambda c: c >= 0.84005 - 1e-5),
        (3, lambda c: c >= 0.86933 - 1e-5),
        (4, lambda c: c >= 0.86956 - 5e-4),
    ],
)
def test_c1_tabulated_alphas(k, check, report):
    t0 = time.perf_counter()
    c = min_ratio(TABULATED_ALPHAS[k], "limit").c_star
    dt = time.perf_counter() - t0
    ok = report(f"C1 tabulated alphas k={k}", check(c) and dt < 1.0, f"c*={c:.7f} ({dt * 1e3:.1f} ms)")
    assert ok


# ------------------------------------------------------------------ 2

C2_CHECKS = [
    # (label, k, piece, field, target, tol)
    ("k=2 c_2 bound", 2, 2, "c", 0.8400637, 1e-6),
    ("k=2 c_0 bound", 2, 0, "c", 0.8400564, 1e-6),
    ("k=2 c_1 min", 2, 1, "c", 0.8400569, 1e-6),
    ("k=2 alpha*", 2, 1, "alpha", 0.832961, 1e-4),
    ("k=3 c_3(0)", 3, 3, "c", 0.8693380, 1e-5),
    ("k=3 c_0(inf)", 3, 0, "c", 0.8693371, 1e-5),
    ("k=3 c_2 min", 3, 2, "c", 0.8693454, 1e-5),
    ("k=3 alpha_2*", 3, 2, "alpha", 0.1162634, 1e-5),
    ("k=3 c_1 min", 3, 1, "c", 0.8693365, 1e-5),
    ("k=3 alpha_1*", 3, 1, "alpha", 1.0351330, 1e-5),
]


@pytest.mark.parametrize("label,k,piece,field,target,tol", C2_CHECKS, ids=[c[0] for c in C2_CHECKS])
def test_c2_piece_numbers(label, k, piece, field, target, tol, report):
    got = _pieces(k)[piece][field]
    ok = report(f"C2 {label}", abs(got - target) <= tol, f"got {got:.7f}, want {target} +- {tol:g}")
    assert ok


def test_c2_k2_bounds_with_labels_swapped():
    """The two k=2 end-piece numbers appear with their labels exchanged; this is the assignment the formulas give."""
    p = _pieces(2)
    assert p[2]["c"] == pytest.approx((1 - math.exp(-0.35932)) / 0.35932, abs=1e-12)
    assert p[0]["c"] == pytest.approx(1 - math.exp(-1.83298), abs=1e-12)
    assert abs(p[2]["c"] - 0.8400564) <= 1e-6
    assert abs(p[0]["c"] - 0.8400637) <= 1e-6


# ------------------------------------------------------------------ 3


@pytest.mark.parametrize("k,floor", [(2, 0.8400), (3, 0.8690)])
def test_c3_optimizer(k, floor, report):
    t0 = time.perf_counter()
    res = optimize_alphas(k, starts=20, seed=0)
    dt = time.perf_counter() - t0
    ok = report(
        f"C3 optimize k={k}",
        res.c_star >= floor and dt < 120,
        f"c*={res.c_star:.7f} alphas={[round(a, 5) for a in res.alphas]} ({dt:.1f} s)",
    )
    assert ok


# ------------------------------------------------------------------ 4


def test_c4_closed_forms(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 100_000))
        a = np.sort(rng.uniform(0.01, min(8.0, n / 2), size=3))[::-1]
        if min(a[0] - a[1], a[1] - a[2]) < 1e-3:
            a[1] = (a[0] + a[2]) / 2
        p2 = positive_counts_exact(a[:2], n)
        p3 = positive_counts_exact(a, n)
        worst = max(worst, abs(prob_e10(a[0], a[1], n) - p2[1]), abs(prob_e110(*a, n) - p3[2]))
    dt = time.perf_counter() - t0
    ok = report("C4 closed forms vs chain", worst <= 1e-9 and dt < 60, f"max err {worst:.2e} ({dt:.2f} s)")
    assert ok


def test_c4_dp_vs_brute_force(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(1, 4))
        n = int(rng.integers(1, 5))
        values = np.sort(rng.choice(np.arange(0, 20), size=m, replace=False)).astype(float)
        w = rng.integers(1, 10, size=m).astype(float)
        probs = w / w.sum()
        probs[-1] = 1.0 - probs[:-1].sum()
        d = DiscreteDistribution(tuple(values), tuple(probs))
        worst = max(worst, abs(solve(d, n).value - brute_force_optimal(d, n)))
    dt = time.perf_counter() - t0
    ok = report("C4 solve vs brute force", worst <= 1e-12 and dt < 60, f"max err {worst:.2e} ({dt:.2f} s)")
    assert ok


# ------------------------------------------------------------------ 5


def test_c5_impossibility(report):
    t0 = time.perf_counter()
    r1000 = ratio(counterexample3(1000), 1000)
    sweep = [ratio(counterexample3(n), n) for n in range(3, 201)]
    dt = time.perf_counter() - t0
    mono = all(b <= a + 1e-12 for a, b in zip(sweep, sweep[1:]))
    ok1 = report("C5 ratio at n=1000", abs(r1000 - 0.9799) <= 1e-3, f"{r1000:.7f}")
    ok2 = report("C5 monotone n=3..200", mono, "(counterexample3 needs n >= 3)")
    ok3 = report("C5 ratio 1 at n=3", abs(sweep[0] - 1.0) <= 1e-12, f"{sweep[0]:.15f}")
    ok4 = report("C5 runtime", dt < 30, f"{dt:.2f} s")
    assert ok1 and ok2 and ok3 and ok4


# ------------------------------------------------------------------ 6


@pytest.mark.parametrize("n", [100, 1000])
@pytest.mark.parametrize("alpha", [0.05, 0.5, 1.0, 2.0])
def test_c6_discrete_corollary(alpha, n, report):
    bound = min_ratio(TABULATED_ALPHAS[3], "finite", n).c_star
    r = ratio(golden_nugget(alpha, n), n)
    ok = report(f"C6 golden_nugget({alpha}, {n})", r >= bound - 1e-9, f"dp ratio {r:.6f} >= {bound:.6f}")
    assert ok


# ------------------------------------------------------------------ 7


def test_c7_monte_carlo(report):
    n = 1000
    d = golden_nugget(0.5, n)
    pol = QuantilePolicy.tabulated(3)
    t0 = time.perf_counter()
    res = estimate(quantile_runner(pol), d, n, SimConfig(10**6, seed=12345), keep_values=False)
    dt = time.perf_counter() - t0
    exact = exact_policy_value(pol, d, n) / expected_max(d, n)
    z = (res.ratio - exact) / res.ratio_stderr
    ok = report(
        "C7 Monte Carlo vs exact",
        abs(z) <= 3 and dt < 120,
        f"mc {res.ratio:.5f} +- {res.ratio_stderr:.5f}, exact {exact:.5f}, z={z:+.2f} ({dt:.1f} s)",
    )
    assert ok


# ------------------------------------------------------------------ 8


@pytest.mark.parametrize("k,c", [(2, 0.84), (3, 0.869)])
def test_c8_dominance(k, c, report):
    rep = check_dominance(TABULATED_ALPHAS[k], 10**5, c, grid_size=10_000)
    ok = report(f"C8 dominance k={k} c={c}", rep.holds, f"worst {rep.worst_ratio:.7f} at alpha={rep.worst_alpha:.3g}")
    assert ok


# ------------------------------------------------------------------ 9


def test_c9_multitest(report):
    dist = uniform01()
    t0 = time.perf_counter()
    # budget: 10^4 runs in total across sizes
    used_ok = True
    for n, reps in ((100, 4000), (1000, 4000), (10_000, 2000)):
        res = estimate(multitest_runner(), dist, n, SimConfig(reps, seed=1))
        used_ok &= int(res.extras["budget_used"].max()) <= n
    ok_budget = report("C9 budget never exceeded (10^4 runs)", used_ok)

    # binary search vs scan oracle
    rng = np.random.default_rng(5)
    n = 10_000
    lo = float(type_quantile(0, n))
    mismatches = 0
    for u in rng.uniform(lo, 1.0, size=1000):
        x = float(quantile_of(dist, u))
        got = _binary_search_type(x, dist, n, Budget(10**6), TypedBox(0, True), [])
        mismatches += got != type_of(x, dist, n)
    ok_scan = report("C9 binary search == scan (10^3 points)", mismatches == 0, f"{mismatches} mismatches")

    # hit rate, seed 0 as in the documented pre-run
    hits = []
    for n in (100, 1000, 10_000):
        res = estimate(multitest_runner(), dist, n, SimConfig(1000, seed=0))
        hits.append(float(np.mean(res.extras["hit_max"])))
    mono = all(b >= a for a, b in zip(hits, hits[1:]))
    ok_mono = report("C9 Pr[hit max] non-decreasing", mono, f"{hits}")
    ok_top = report("C9 Pr[hit max] >= 0.9 at n=1e4", hits[-1] >= 0.9, f"{hits[-1]:.3f}")
    dt = time.perf_counter() - t0
    ok_time = report("C9 runtime", dt < 300, f"{dt:.1f} s")
    assert ok_budget and ok_scan and ok_mono and ok_top and ok_time


# ------------------------------------------------------------------ 10


def test_c10_randomized_dominance(report):
    rep = dominance_vs_randomized(counterexample3(4), 4, samples=100, seed=0)
    ok = report(
        "C10 probability-testing mixtures <= DP",
        len(rep.margins) == 100 and rep.min_margin >= -1e-12,
        f"min margin {rep.min_margin:.3e}",
    )
    assert ok
