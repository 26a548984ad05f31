"""Executable testing policies.

Box indices are 0-based: the "fallback box" is box 0.

Every ``play_*`` function runs one realization and returns a :class:`PlayResult`
with the full test history.  The ``*_runner`` factories return batched
equivalents used by :mod:`threshold_probe.sim`; a batched runner has the
signature ``runner(dist, n, rng, size) -> (chosen_values, max_values)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .distributions import (
    ContinuousDistribution,
    DiscreteDistribution,
    Distribution,
    quantile_of,
    sample,
)
from .errors import BadParameter

#: Reference parameters for k = 1..4 (limit ratios 0.632, 0.840, 0.869, 0.8696).
TABULATED_ALPHAS = {
    1: (1.0,),
    2: (1.83298, 0.35932),
    3: (2.035135, 0.5063, 0.05701),
    4: (2.038, 0.508, 0.058, 0.0002),
}


@dataclass(frozen=True)
class QuantilePolicy:
    """Adaptive k-threshold policy: after j positives, test at quantile alphas[j]/n."""

    alphas: tuple

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise BadParameter("a quantile policy needs at least one parameter")
        if any(a <= 0 for a in alphas):
            raise BadParameter("all alphas must be positive")
        if any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise BadParameter(f"alphas must be strictly decreasing: {alphas}")
        object.__setattr__(self, "alphas", alphas)

    @property
    def k(self) -> int:
        return len(self.alphas)

    def check_n(self, n: int) -> None:
        if not self.alphas[0] < n:
            raise BadParameter(f"alpha_1={self.alphas[0]} must be below n={n}")

    def to_json(self) -> str:
        return json.dumps({"alphas": list(self.alphas)})

    @classmethod
    def from_json(cls, text: str) -> "QuantilePolicy":
        return cls(tuple(json.loads(text)["alphas"]))

    @classmethod
    def parse(cls, text: str) -> "QuantilePolicy":
        """Parse ``"2.035135,0.5063,0.05701"``."""
        try:
            return cls(tuple(float(t) for t in text.split(",") if t.strip()))
        except ValueError as exc:
            raise BadParameter(f"cannot parse alphas {text!r}") from exc

    @classmethod
    def tabulated(cls, k: int) -> "QuantilePolicy":
        return cls(TABULATED_ALPHAS[k])


@dataclass(frozen=True)
class TestRecord:
    box: int
    quantile: Optional[float]  # None for plain threshold tests
    threshold: Optional[float]
    positive: bool


@dataclass
class TestHistory:
    records: List[TestRecord] = field(default_factory=list)
    allow_repeats: bool = False

    @property
    def positives_count(self) -> int:
        return sum(r.positive for r in self.records)

    def add(self, record: TestRecord) -> None:
        if not self.allow_repeats and any(r.box == record.box for r in self.records):
            raise RuntimeError(f"box {record.box} tested twice")
        self.records.append(record)


@dataclass
class PlayResult:
    chosen_index: int
    chosen_value: float
    history: TestHistory
    realizations: Optional[np.ndarray] = None

    @property
    def max_value(self) -> float:
        return float(np.max(self.realizations))


def next_quantile(policy: QuantilePolicy, positives_so_far: int, n: int) -> float:
    """Quantile for the next test; 0 (always negative) once k positives were seen."""
    if positives_so_far < 0:
        raise BadParameter("positives_so_far must be >= 0")
    if positives_so_far >= policy.k:
        return 0.0
    return policy.alphas[positives_so_far] / n


# ------------------------------------------------------------ continuous play


def play_continuous(
    policy: QuantilePolicy,
    dist: ContinuousDistribution,
    n: int,
    rng: np.random.Generator,
    realizations: Optional[Sequence[float]] = None,
) -> PlayResult:
    """Run the quantile policy with plain threshold tests Q(1 - q).

    The box chosen at the end is the one whose positive test used the smallest
    quantile, i.e. the most recent positive.  With no positive test box 0 is
    chosen.
    """
    policy.check_n(n)
    x = np.asarray(sample(dist, rng, n) if realizations is None else realizations, dtype=float)
    history = TestHistory()
    chosen = 0
    j = 0
    for i in range(n):
        q = next_quantile(policy, j, n)
        if q == 0.0:
            history.add(TestRecord(i, 0.0, math.inf, False))
            continue
        tau = float(quantile_of(dist, 1.0 - q))
        positive = bool(x[i] >= tau)
        history.add(TestRecord(i, q, tau, positive))
        if positive:
            chosen = i
            j += 1
    return PlayResult(chosen, float(x[chosen]), history, x)


# -------------------------------------------------------- probability testing


def boundary_atom(dist: DiscreteDistribution, q: float):
    """Return ``(k, p_q)`` with Pr[X > v_k] < q <= Pr[X >= v_k].

    ``p_q`` is the probability that a box holding exactly v_k tests positive.
    """
    if not 0.0 < q <= 1.0:
        raise BadParameter(f"boundary atom needs 0 < q <= 1, got {q}")
    k = dist.m - 1
    while k > 0 and dist.tail(k) < q:
        k -= 1
    p_q = (q - dist.tail(k + 1)) / dist.probs[k]
    return k, min(1.0, max(0.0, p_q))


def probability_test(dist: DiscreteDistribution, q: float, x: float, rng: np.random.Generator) -> bool:
    """Is ``x`` in the top-q fraction of the mass of ``dist``?  Randomized on the boundary atom."""
    if not 0.0 <= q <= 1.0:
        raise BadParameter(f"q must lie in [0, 1], got {q}")
    if q == 0.0:
        return False
    k, p_q = boundary_atom(dist, q)
    v_k = dist.values[k]
    if x > v_k:
        return True
    if x < v_k:
        return False
    return bool(rng.random() < p_q)


def positive_probability(dist: DiscreteDistribution, q: float) -> float:
    """Analytic Pr[positive] of :func:`probability_test` averaged over X ~ dist."""
    if q == 0.0:
        return 0.0
    k, p_q = boundary_atom(dist, q)
    return math.fsum([dist.tail(k + 1), dist.probs[k] * p_q])


def play_discrete(
    policy: QuantilePolicy,
    dist: DiscreteDistribution,
    n: int,
    rng: np.random.Generator,
    realizations: Optional[Sequence[float]] = None,
) -> PlayResult:
    """Same state machine as :func:`play_continuous`, using probability tests."""
    policy.check_n(n)
    x = np.asarray(sample(dist, rng, n) if realizations is None else realizations, dtype=float)
    history = TestHistory()
    chosen = 0
    j = 0
    for i in range(n):
        q = next_quantile(policy, j, n)
        positive = probability_test(dist, q, float(x[i]), rng)
        history.add(TestRecord(i, q, None, positive))
        if positive:
            chosen = i
            j += 1
    return PlayResult(chosen, float(x[chosen]), history, x)


def quantile_runner(policy: QuantilePolicy):
    """Batched version of :func:`play_discrete` / :func:`play_continuous`."""

    def run(dist: Distribution, n: int, rng: np.random.Generator, size: int):
        policy.check_n(n)
        k = policy.k
        discrete = isinstance(dist, DiscreteDistribution)
        if discrete:
            # per state j: boundary value and randomization; state k never passes
            bound_v = np.empty(k + 1)
            bound_p = np.zeros(k + 1)
            for j, a in enumerate(policy.alphas):
                kk, p_q = boundary_atom(dist, a / n)
                bound_v[j], bound_p[j] = dist.values[kk], p_q
            bound_v[k] = math.inf
        else:
            thr = np.array([quantile_of(dist, 1.0 - a / n) for a in policy.alphas] + [math.inf])
        state = np.zeros(size, dtype=np.int64)
        chosen = None
        best = None
        for i in range(n):
            x = sample(dist, rng, size)
            if discrete:
                v = bound_v[state]
                tie = (x == v) & (rng.random(size) < bound_p[state])
                positive = (x > v) | tie
            else:
                positive = x >= thr[state]
            if i == 0:
                chosen = x.copy()
                best = x.copy()
            else:
                np.maximum(best, x, out=best)
                chosen = np.where(positive, x, chosen)
            state += positive
        return chosen, best

    run.describe = {"policy": "quantile", "alphas": list(policy.alphas)}
    return run


# ----------------------------------------------------------- gambler baseline


def gambler_value(dist: DiscreteDistribution, n: int) -> float:
    """Expected reward of the optimal online gambler with n boxes."""
    w = 0.0
    for r in range(n):
        w = dist.mean() if r == 0 else math.fsum(p * max(v, w) for v, p in zip(dist.values, dist.probs))
    return w


def gambler_thresholds(dist: DiscreteDistribution, n: int) -> List[float]:
    """Backward-induction thresholds t_1 >= ... >= t_n with t_n = 0.

    t_i is the optimal gambler's expected reward on the boxes after i.
    """
    if n < 1:
        raise BadParameter("n must be >= 1")
    ts = [0.0] * n
    w = 0.0
    for i in range(n - 1, -1, -1):
        ts[i] = w
        w = math.fsum(p * max(v, w) for v, p in zip(dist.values, dist.probs)) if i < n - 1 else dist.mean()
    return ts


def _check_thresholds(thresholds: Sequence[float], n: int) -> None:
    if len(thresholds) != n:
        raise BadParameter(f"need {n} thresholds, got {len(thresholds)}")
    if any(b > a for a, b in zip(thresholds, thresholds[1:])):
        raise BadParameter("thresholds must be non-increasing")


def play_nonadaptive(
    thresholds: Sequence[float],
    dist: Distribution,
    n: int,
    rng: np.random.Generator,
    realizations: Optional[Sequence[float]] = None,
) -> PlayResult:
    """Test box i at t_i; keep the earliest positive box, else box 0."""
    _check_thresholds(thresholds, n)
    x = np.asarray(sample(dist, rng, n) if realizations is None else realizations, dtype=float)
    history = TestHistory()
    chosen = None
    for i in range(n):
        positive = bool(x[i] >= thresholds[i])
        history.add(TestRecord(i, None, float(thresholds[i]), positive))
        if positive and chosen is None:
            chosen = i
    chosen = 0 if chosen is None else chosen
    return PlayResult(chosen, float(x[chosen]), history, x)


def nonadaptive_runner(thresholds: Sequence[float]):
    t = np.asarray(thresholds, dtype=float)

    def run(dist: Distribution, n: int, rng: np.random.Generator, size: int):
        _check_thresholds(t, n)
        chosen = None
        done = np.zeros(size, dtype=bool)
        for i in range(n):
            x = sample(dist, rng, size)
            if i == 0:
                chosen = x.copy()
                best = x.copy()
                done = x >= t[0]
                continue
            np.maximum(best, x, out=best)
            take = ~done & (x >= t[i])
            chosen = np.where(take, x, chosen)
            done |= take
        return chosen, best

    run.describe = {"policy": "nonadaptive", "n_thresholds": len(t)}
    return run


def play_runner(play, *args):
    """Wrap a scalar ``play(*args, dist, n, rng)`` into a batched runner (slow; for tests)."""

    def run(dist, n, rng, size):
        chosen = np.empty(size)
        best = np.empty(size)
        for r in range(size):
            res = play(*args, dist, n, rng)
            chosen[r] = res.chosen_value
            best[r] = res.max_value
        return chosen, best

    return run
