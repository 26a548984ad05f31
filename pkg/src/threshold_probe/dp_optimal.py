"""Optimal threshold testing for finite discrete distributions.

Backward induction over boxes.  The only information that matters before
box i is the highest conditional expectation among the boxes tested so far,
and each tested box carries one of ``2m`` conditional expectations
``E[X | X >= v_k]`` or ``E[X | X < v_k]``.  States are keyed symbolically as
``("+", k)`` / ``("-", k)`` plus the ``("init", -1)`` state before any test,
so no floating-point value is ever used as a key.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .analytics import posterior_mean
from .distributions import DiscreteDistribution, cond_exp, expected_max, sample
from .errors import BadParameter, TooLarge
from .policies import PlayResult, TestHistory, TestRecord

BRUTE_FORCE_LIMIT = 10**6


class DPState(NamedTuple):
    sign: str  # "init", "+" or "-"
    k: int


INITIAL = DPState("init", -1)


def _states(dist: DiscreteDistribution):
    states = [INITIAL]
    values = [dist.mean()]
    for k in range(dist.m):
        states.append(DPState("+", k))
        values.append(cond_exp(dist, k, "above"))
        if dist.head(k) > 0:
            states.append(DPState("-", k))
            values.append(cond_exp(dist, k, "below"))
    return states, np.array(values)


@dataclass
class DPTable:
    """Optimal test per (box, state) and the expected final reward from there.

    ``cont_value[i, s]`` is the optimal expected reward when boxes i..n-1 are
    still untested and the best tested box so far is in state s;
    ``cont_value[n, s]`` is the state's own conditional expectation.
    """

    dist: DiscreteDistribution
    n: int
    states: List[DPState]
    state_values: np.ndarray
    best_test: np.ndarray  # (n, S) support index
    cont_value: np.ndarray  # (n + 1, S)
    next_pos: np.ndarray  # (S, m) successor state after a positive test at v_k
    next_neg: np.ndarray  # (S, m)

    @property
    def value(self) -> float:
        return float(self.cont_value[0, 0])

    def state_index(self, state: DPState) -> int:
        return self.states.index(state)

    def to_dict(self, include_table: bool = True) -> dict:
        out = {
            "n": self.n,
            "values": list(self.dist.values),
            "probs": list(self.dist.probs),
            "value": self.value,
        }
        if include_table:
            out["states"] = [f"{s.sign}{s.k}" if s.k >= 0 else "init" for s in self.states]
            out["state_values"] = self.state_values.tolist()
            out["best_test"] = self.best_test.tolist()
            out["cont_value"] = self.cont_value.tolist()
        return out

    def to_json(self, include_table: bool = True) -> str:
        return json.dumps(self.to_dict(include_table))


def solve(dist: DiscreteDistribution, n: int) -> DPTable:
    """Backward induction over boxes n-1..0; O(n m^2) with 2m+1 states.

    Testing at v_k is positive with probability Pr[X >= v_k].  The new state is
    the better of the current state and the tested box's conditional
    expectation; from the initial state the tested box always becomes the
    state.  Ties between tests go to the lowest support index.
    """
    if n < 1:
        raise BadParameter("n must be >= 1")
    states, vals = _states(dist)
    index = {s: i for i, s in enumerate(states)}
    S, m = len(states), dist.m
    next_pos = np.zeros((S, m), dtype=np.int64)
    next_neg = np.zeros((S, m), dtype=np.int64)
    for si, s in enumerate(states):
        for k in range(m):
            for table, cand in ((next_pos, DPState("+", k)), (next_neg, DPState("-", k))):
                if cand not in index:
                    table[si, k] = si  # unreachable branch (probability 0)
                elif s == INITIAL or vals[index[cand]] > vals[si]:
                    table[si, k] = index[cand]
                else:
                    table[si, k] = si
    p_pos = np.array([dist.tail(k) for k in range(m)])
    p_neg = np.array([dist.head(k) for k in range(m)])
    cont = np.empty((n + 1, S))
    best = np.empty((n, S), dtype=np.int64)
    cont[n] = vals
    for i in range(n - 1, -1, -1):
        after = cont[i + 1]
        options = p_pos[None, :] * after[next_pos] + p_neg[None, :] * after[next_neg]
        best[i] = np.argmax(options, axis=1)
        cont[i] = options[np.arange(S), best[i]]
    return DPTable(dist, n, states, vals, best, cont, next_pos, next_neg)


def ratio(dist: DiscreteDistribution, n: int) -> float:
    """Optimal competitive ratio E[X_sigma] / E[max] for n boxes."""
    return solve(dist, n).value / expected_max(dist, n)


def ratio_sweep(builder, ns) -> List[tuple]:
    """[(n, ratio(builder(n), n)) for n in ns]."""
    return [(n, ratio(builder(n), n)) for n in ns]


# ---------------------------------------------------------------- oracles


def brute_force_optimal(dist: DiscreteDistribution, n: int) -> float:
    """Best adaptive test tree by exhaustive enumeration over all realizations.

    Every node picks a support value to test the next box at and branches on
    the outcome; every leaf picks the box with the largest expected value over
    the realizations consistent with the observed outcomes.  Works directly
    on the m^n realization vectors, without conditional-expectation states.
    """
    m = dist.m
    if (2 * m) ** n > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"(2m)^n = {(2 * m) ** n} leaves exceeds {BRUTE_FORCE_LIMIT}")
    vals = np.array(dist.values)
    probs = np.array(dist.probs)
    idx = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64).reshape(-1, n)
    R = vals[idx]
    P = np.prod(probs[idx], axis=1)
    weighted = R * P[:, None]

    def node(i: int, mask: np.ndarray) -> float:
        if not mask.any():
            return 0.0
        if i == n:
            return float(weighted[mask].sum(axis=0).max())
        col = R[:, i]
        return max(node(i + 1, mask & (col >= v)) + node(i + 1, mask & (col < v)) for v in vals)

    return node(0, np.ones(len(P), dtype=bool))


# ------------------------------------------------------------- execution


def simulate_dp_policy(
    table: DPTable,
    dist: DiscreteDistribution,
    n: int,
    rng: np.random.Generator,
    realizations=None,
) -> PlayResult:
    """Play the solved policy once; the pick is the box that defines the final state."""
    if table.n != n:
        raise BadParameter(f"table solved for n={table.n}, not {n}")
    x = np.asarray(sample(dist, rng, n) if realizations is None else realizations, dtype=float)
    history = TestHistory()
    s = 0
    chosen = 0
    for i in range(n):
        k = int(table.best_test[i, s])
        v = dist.values[k]
        positive = bool(x[i] >= v)
        history.add(TestRecord(i, None, v, positive))
        nxt = int((table.next_pos if positive else table.next_neg)[s, k])
        if nxt != s:
            chosen = i
        s = nxt
    return PlayResult(chosen, float(x[chosen]), history, x)


def dp_runner(table: DPTable):
    """Batched :func:`simulate_dp_policy` for :mod:`threshold_probe.sim`."""
    values = np.array(table.dist.values)

    def run(dist, n, rng, size):
        if table.n != n:
            raise BadParameter(f"table solved for n={table.n}, not {n}")
        s = np.zeros(size, dtype=np.int64)
        chosen = np.zeros(size)
        best = None
        for i in range(n):
            x = sample(dist, rng, size)
            best = x.copy() if i == 0 else np.maximum(best, x)
            k = table.best_test[i, s]
            positive = x >= values[k]
            nxt = np.where(positive, table.next_pos[s, k], table.next_neg[s, k])
            chosen = np.where(nxt != s, x, chosen)
            s = nxt
        return chosen, best

    run.describe = {"policy": "dp", "n": table.n}
    return run


# ------------------------------------------------- randomized probability tests


@dataclass
class DominanceMargin:
    policy_value: float
    margin: float
    deterministic: bool


@dataclass
class RandomizedDominanceReport:
    dp_value: float
    margins: List[DominanceMargin]

    @property
    def min_margin(self) -> float:
        return min(m.margin for m in self.margins)

    def as_dict(self) -> dict:
        return {
            "dp_value": self.dp_value,
            "min_margin": self.min_margin,
            "margins": [m.margin for m in self.margins],
            "deterministic": [m.deterministic for m in self.margins],
        }


def _box_posterior(dist: DiscreteDistribution, q: float, positive: bool) -> float:
    if q <= 0.0 or q >= 1.0:
        return dist.mean()
    return posterior_mean(dist, q, positive)


def probability_policy_value(dist: DiscreteDistribution, n: int, rule) -> float:
    """Exact value of an adaptive probability-testing policy.

    ``rule(outcomes)`` maps the tuple of earlier outcomes to the next test's
    mass q.  Each box tests positive with probability exactly q; at the end
    the box with the largest posterior mean is picked.
    """
    if n > 16:
        raise TooLarge("enumeration over 2^n outcome histories limited to n <= 16")
    total = []
    for outcomes in itertools.product((True, False), repeat=n):
        prob = 1.0
        best = -math.inf
        for i in range(n):
            q = rule(outcomes[:i])
            pr = q if outcomes[i] else 1.0 - q
            if pr == 0.0:
                prob = 0.0
                break
            prob *= pr
            best = max(best, _box_posterior(dist, q, outcomes[i]))
        if prob > 0.0:
            total.append(prob * best)
    return math.fsum(total)


def random_probability_policy(dist: DiscreteDistribution, n: int, rng: np.random.Generator, deterministic: bool = False):
    """Sample a rule assigning a test mass q to every outcome history.

    Half of the nodes (all, if ``deterministic``) use a mass equal to some
    Pr[X >= v_k], which makes that probability test a plain threshold test.
    """
    tails = [dist.tail(k) for k in range(dist.m)]
    table = {}
    for i in range(n):
        for prefix in itertools.product((True, False), repeat=i):
            if deterministic or rng.random() < 0.5:
                table[prefix] = tails[int(rng.integers(dist.m))]
            else:
                table[prefix] = float(rng.random())
    return table.__getitem__


def dominance_vs_randomized(
    dist: DiscreteDistribution, n: int, samples: int = 100, seed: int = 0
) -> RandomizedDominanceReport:
    """Compare the DP optimum with sampled probability-testing policies.

    A probability test can be simulated by a randomized threshold test, and
    randomized threshold tests never beat the best deterministic ones, so every
    margin ``dp_value - policy_value`` should be non-negative.
    """
    if n > 12:
        raise TooLarge("dominance check limited to n <= 12")
    rng = np.random.default_rng(seed)
    dp_value = solve(dist, n).value
    margins = []
    for r in range(samples):
        det = r % 10 == 0
        rule = random_probability_policy(dist, n, rng, deterministic=det)
        v = probability_policy_value(dist, n, rule)
        margins.append(DominanceMargin(v, dp_value - v, det))
    return RandomizedDominanceReport(dp_value, margins)
