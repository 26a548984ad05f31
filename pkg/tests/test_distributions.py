import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_probe.distributions import (
    DiscreteDistribution,
    atom_frequencies,
    ccdf,
    cond_exp,
    counterexample3,
    expected_max,
    f_a,
    f_b,
    golden_nugget,
    parse_dist,
    quantile_of,
    sample,
    smooth,
    uniform01,
)
from threshold_probe.errors import BadParameter, EmptyCondition


@st.composite
def discrete(draw, max_m=4):
    m = draw(st.integers(1, max_m))
    values = sorted(draw(st.sets(st.integers(0, 20), min_size=m, max_size=m)))
    w = draw(st.lists(st.integers(1, 10), min_size=m, max_size=m))
    probs = [x / sum(w) for x in w]
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    return DiscreteDistribution(tuple(float(v) for v in values), tuple(probs))


def brute_expected_max(dist, n):
    total = 0.0
    for idx in itertools.product(range(dist.m), repeat=n):
        p = math.prod(dist.probs[i] for i in idx)
        total += p * max(dist.values[i] for i in idx)
    return total


def test_validation():
    with pytest.raises(BadParameter):
        DiscreteDistribution((0.0, 1.0), (0.5, 0.6))
    with pytest.raises(BadParameter):
        DiscreteDistribution((1.0, 0.0), (0.5, 0.5))
    with pytest.raises(BadParameter):
        DiscreteDistribution((-1.0, 0.0), (0.5, 0.5))
    with pytest.raises(BadParameter):
        DiscreteDistribution((0.0,), (0.5, 0.5))


def test_zero_atoms_dropped():
    d = DiscreteDistribution((0.0, 1.0, 2.0), (0.5, 0.0, 0.5))
    assert d.values == (0.0, 2.0)
    assert d.m == 2


def test_ccdf_examples():
    d = counterexample3(1000)
    assert ccdf(d, 2.0) == pytest.approx(0.002, abs=1e-15)
    assert ccdf(d, 2.5) == pytest.approx(0.001, abs=1e-15)
    assert ccdf(d, 0.0) == 1.0
    assert ccdf(d, 3.5) == 0.0
    assert ccdf(uniform01(), 0.3) == pytest.approx(0.7, abs=1e-10)


def test_expected_max_golden_nugget():
    d = golden_nugget(1.0, 1000)
    assert expected_max(d, 1000) == pytest.approx(1 - (1 - 1e-3) ** 1000, abs=1e-15)
    assert expected_max(d, 1000) == pytest.approx(0.6323046, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(discrete(), st.integers(1, 4))
def test_expected_max_matches_enumeration(d, n):
    assert expected_max(d, n) == pytest.approx(brute_expected_max(d, n), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(discrete(), st.integers(1, 6))
def test_expected_max_bounds(d, n):
    em = expected_max(d, n)
    assert d.mean() - 1e-12 <= em <= d.values[-1] + 1e-12
    assert expected_max(d, n + 1) >= em - 1e-12


@settings(max_examples=60, deadline=None)
@given(discrete())
def test_cond_exp_direct(d):
    for k in range(d.m):
        above = sum(v * p for v, p in zip(d.values[k:], d.probs[k:])) / sum(d.probs[k:])
        assert cond_exp(d, k, "above") == pytest.approx(above, rel=1e-12)
        assert d.values[k] - 1e-12 <= cond_exp(d, k, "above")
        if k > 0:
            below = sum(v * p for v, p in zip(d.values[:k], d.probs[:k])) / sum(d.probs[:k])
            assert cond_exp(d, k, "below") == pytest.approx(below, rel=1e-12)
            assert cond_exp(d, k, "below") < d.values[k]
    with pytest.raises(EmptyCondition):
        cond_exp(d, 0, "below")


def test_sampling_frequencies():
    d = counterexample3(10)
    rng = np.random.default_rng(1)
    freq = atom_frequencies(d, sample(d, rng, 200_000))
    se = np.sqrt(np.asarray(d.probs) * (1 - np.asarray(d.probs)) / 200_000)
    assert np.all(np.abs(freq - np.asarray(d.probs)) < 5 * se)


def test_quantile_of_discrete_edges():
    d = DiscreteDistribution((0.0, 1.0), (0.25, 0.75))
    assert quantile_of(d, 0.0) == 0.0
    assert quantile_of(d, 0.2499) == 0.0
    assert quantile_of(d, 0.25) == 1.0
    assert quantile_of(d, 1.0) == 1.0


def test_builders():
    assert f_b(10).probs == pytest.approx((0.99, 0.01))
    fa = f_a(100, 0.1, width=0.0)
    assert quantile_of(fa, 0.5) == 0.0
    assert 0.9 <= quantile_of(fa, 0.95) <= 1.1
    with pytest.raises(BadParameter):
        counterexample3(2)
    with pytest.raises(BadParameter):
        golden_nugget(5.0, 5)


def test_smooth_preserves_atoms():
    d = counterexample3(10)
    s = smooth(d, 1e-6)
    rng = np.random.default_rng(0)
    x = sample(s, rng, 10_000)
    snapped = np.floor(x)
    assert np.all((x - snapped) <= 1e-6 + 1e-12)
    assert abs(np.mean(snapped == 3.0) - 0.1) < 0.02


def test_parse_dist_forms(tmp_path):
    d = parse_dist("counterexample3:n=1000")
    assert d == counterexample3(1000)
    j = parse_dist('{"values":[0,5],"probs":[0.5,0.5]}')
    assert j.values == (0.0, 5.0)
    path = tmp_path / "d.json"
    path.write_text(j.to_json())
    assert parse_dist(f"@{path}") == j
    assert parse_dist("uniform01").name == "uniform01"
    assert parse_dist("smooth:golden_nugget:alpha=1,n=10").name.startswith("smooth")
    for bad in ("nope:n=3", "counterexample3:m=3", "counterexample3:n=x"):
        with pytest.raises(BadParameter):
            parse_dist(bad)


@settings(max_examples=40, deadline=None)
@given(discrete())
def test_json_round_trip(d):
    back = DiscreteDistribution.from_json(d.to_json())
    assert back == d
    assert json.loads(d.to_json())["values"] == list(d.values)
