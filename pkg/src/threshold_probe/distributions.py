"""Value distributions for the boxes.

Two representations are supported:

* :class:`DiscreteDistribution` -- a finite list of ``(value, probability)``
  atoms with strictly increasing values.
* :class:`ContinuousDistribution` -- a distribution given only by its quantile
  function ``Q(p) = F^{-1}(p)``.  Thresholds are always built as ``Q(1 - q)``.

Support indices are 0-based throughout the package.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import BadParameter, EmptyCondition

PROB_TOL = 1e-12
SMOOTH_WIDTH = 1e-9


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution on non-negative reals.

    Zero-probability atoms are dropped at construction so that every support
    index carries positive mass.
    """

    values: tuple
    probs: tuple
    name: str = field(default="discrete", compare=False)
    _tail: tuple = field(init=False, repr=False, compare=False)
    _head: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = [float(v) for v in self.values]
        probs = [float(p) for p in self.probs]
        if len(values) != len(probs) or not values:
            raise BadParameter("values and probs must be non-empty and of equal length")
        if any(p < 0 for p in probs):
            raise BadParameter("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise BadParameter(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        kept = [(v, p) for v, p in zip(values, probs) if p > 0]
        values = [v for v, _ in kept]
        probs = [p for _, p in kept]
        if any(v < 0 for v in values):
            raise BadParameter("values must be non-negative")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise BadParameter("values must be strictly increasing")
        object.__setattr__(self, "values", tuple(values))
        object.__setattr__(self, "probs", tuple(probs))
        m = len(probs)
        # _tail[k] = Pr[X >= v_k], _head[k] = Pr[X < v_k]; both length m + 1
        tail = tuple(math.fsum(probs[k:]) for k in range(m)) + (0.0,)
        head = tuple(math.fsum(probs[:k]) for k in range(m + 1))
        object.__setattr__(self, "_tail", tail)
        object.__setattr__(self, "_head", head)

    @property
    def m(self) -> int:
        return len(self.values)

    def tail(self, k: int) -> float:
        """Pr[X >= v_k]; ``k == m`` gives 0."""
        return self._tail[k]

    def head(self, k: int) -> float:
        """Pr[X < v_k]; ``k == m`` gives 1."""
        return self._head[k]

    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def to_json(self) -> str:
        return json.dumps({"values": list(self.values), "probs": list(self.probs)})

    @classmethod
    def from_json(cls, text: str, name: str = "discrete") -> "DiscreteDistribution":
        data = json.loads(text)
        return cls(tuple(data["values"]), tuple(data["probs"]), name=name)


@dataclass(frozen=True)
class ContinuousDistribution:
    """Distribution described by a non-decreasing quantile function on [0, 1]."""

    quantile: Callable
    name: str = "continuous"

    def q(self, p):
        return self.quantile(p)


Distribution = Union[DiscreteDistribution, ContinuousDistribution]


def ccdf(dist: Distribution, x: float) -> float:
    """Return Pr[X >= x]."""
    if isinstance(dist, DiscreteDistribution):
        return dist.tail(bisect.bisect_left(dist.values, x))
    # G(x) = 1 - sup{p : Q(p) < x}
    if float(dist.q(0.0)) >= x:
        return 1.0
    if float(dist.q(1.0)) < x:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if float(dist.q(mid)) < x:
            lo = mid
        else:
            hi = mid
    return 1.0 - lo


def expected_max(dist: DiscreteDistribution, n: int) -> float:
    """E[max of n i.i.d. draws], summed as v_j (F(<=v_j)^n - F(<v_j)^n)."""
    if n < 1:
        raise BadParameter("n must be >= 1")
    terms = []
    for k, v in enumerate(dist.values):
        terms.append(v * (dist.head(k + 1) ** n - dist.head(k) ** n))
    return math.fsum(terms)


def cond_exp(dist: DiscreteDistribution, k: int, side: str) -> float:
    """E[X | X >= v_k] for ``side="above"``, E[X | X < v_k] for ``side="below"``."""
    if not 0 <= k < dist.m:
        raise BadParameter(f"support index {k} out of range")
    if side == "above":
        idx = range(k, dist.m)
        mass = dist.tail(k)
    elif side == "below":
        idx = range(0, k)
        mass = dist.head(k)
    else:
        raise BadParameter(f"side must be 'above' or 'below', got {side!r}")
    if mass <= 0 or not idx:
        raise EmptyCondition(f"Pr[X {'>=' if side == 'above' else '<'} v_{k}] = 0")
    return math.fsum(dist.values[j] * dist.probs[j] for j in idx) / mass


def sample(dist: Distribution, rng: np.random.Generator, size=None):
    """Inverse-transform sample; one float when ``size`` is None, else an array."""
    u = rng.random(size)
    return quantile_of(dist, u)


def quantile_of(dist: Distribution, u):
    """Evaluate the quantile function at ``u`` (scalar or array)."""
    if isinstance(dist, DiscreteDistribution):
        cum = np.asarray(dist._head[1:])
        idx = np.searchsorted(cum, u, side="right")
        idx = np.minimum(idx, dist.m - 1)
        vals = np.asarray(dist.values)[idx]
        return float(vals) if np.ndim(vals) == 0 else vals
    out = dist.q(u)
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


# ---------------------------------------------------------------- builders


def golden_nugget(alpha: float, n: int) -> DiscreteDistribution:
    """Value 1 with probability alpha/n, else 0."""
    if not (0 < alpha < n):
        raise BadParameter(f"golden_nugget needs 0 < alpha < n, got alpha={alpha}, n={n}")
    q = alpha / n
    return DiscreteDistribution((0.0, 1.0), (1.0 - q, q), name=f"golden_nugget(alpha={alpha},n={n})")


def counterexample3(n: int) -> DiscreteDistribution:
    """Values 1, 2, 3 with probability 1/n each, 0 otherwise."""
    if n < 3:
        raise BadParameter("counterexample3 needs n >= 3")
    p = 1.0 / n
    return DiscreteDistribution(
        (0.0, 1.0, 2.0, 3.0), (1.0 - 3.0 * p, p, p, p), name=f"counterexample3(n={n})"
    )


def f_b(n: int) -> DiscreteDistribution:
    """Value 1 with probability 1/n^2, else 0."""
    if n < 1:
        raise BadParameter("f_b needs n >= 1")
    q = 1.0 / n**2
    return DiscreteDistribution((0.0, 1.0), (1.0 - q, q), name=f"f_b(n={n})")


def f_a(n: int, eps: float, width: float = SMOOTH_WIDTH) -> ContinuousDistribution:
    """With probability 1/sqrt(n) uniform on [1-eps, 1+eps], else 0.

    The atom at 0 is spread over ``[0, width]``; ``width=0`` gives the exact
    mixed distribution.
    """
    if n < 2 or not (0 < eps < 1) or width < 0:
        raise BadParameter(f"f_a needs n >= 2, 0 < eps < 1, width >= 0")
    s = 1.0 / math.sqrt(n)
    low = 1.0 - s

    def quantile(p):
        p = np.asarray(p, dtype=float)
        atom = width * np.clip(p / low, 0.0, 1.0)
        cont = 1.0 - eps + 2.0 * eps * np.clip((p - low) / s, 0.0, 1.0)
        return np.where(p <= low, atom, cont)

    return ContinuousDistribution(quantile, name=f"f_a(n={n},eps={eps})")


def uniform01() -> ContinuousDistribution:
    return ContinuousDistribution(lambda p: np.asarray(p, dtype=float) * 1.0, name="uniform01")


def smooth(dist: DiscreteDistribution, width: float = SMOOTH_WIDTH) -> ContinuousDistribution:
    """Continuous approximation spreading each atom v_j uniformly over [v_j, v_j + width]."""
    gaps = np.diff(dist.values)
    if width <= 0 or (gaps.size and width >= gaps.min()):
        raise BadParameter("width must be positive and below the smallest support gap")
    cum = np.asarray(dist._head)
    probs = np.asarray(dist.probs)
    values = np.asarray(dist.values)

    def quantile(p):
        p = np.asarray(p, dtype=float)
        idx = np.minimum(np.searchsorted(cum[1:], p, side="right"), dist.m - 1)
        frac = np.clip((p - cum[idx]) / probs[idx], 0.0, 1.0)
        return values[idx] + width * frac

    return ContinuousDistribution(quantile, name=f"smooth({dist.name})")


BUILDERS = {
    "golden_nugget": (golden_nugget, {"alpha": float, "n": int}),
    "counterexample3": (counterexample3, {"n": int}),
    "f_a": (f_a, {"n": int, "eps": float, "width": float}),
    "f_b": (f_b, {"n": int}),
    "uniform01": (uniform01, {}),
}


def parse_dist(text: str) -> Distribution:
    """Build a distribution from ``name:key=val,...``, a JSON object, or ``@path.json``.

    ``smooth:`` may prefix a discrete spec, e.g. ``smooth:golden_nugget:alpha=1,n=1000``.
    """
    text = text.strip()
    if text.startswith("@"):
        with open(text[1:]) as fh:
            return DiscreteDistribution.from_json(fh.read(), name=text[1:])
    if text.startswith("{"):
        return DiscreteDistribution.from_json(text)
    if text.startswith("smooth:"):
        inner = parse_dist(text[len("smooth:"):])
        if not isinstance(inner, DiscreteDistribution):
            raise BadParameter("smooth: applies to discrete distributions only")
        return smooth(inner)
    name, _, params = text.partition(":")
    if name not in BUILDERS:
        raise BadParameter(f"unknown distribution {name!r}; known: {sorted(BUILDERS)}")
    fn, types = BUILDERS[name]
    kwargs = {}
    for item in filter(None, params.split(",")):
        key, sep, val = item.partition("=")
        if not sep or key not in types:
            raise BadParameter(f"bad parameter {item!r} for {name}")
        try:
            kwargs[key] = types[key](float(val)) if types[key] is int else types[key](val)
        except ValueError as exc:
            raise BadParameter(f"bad value in {item!r}") from exc
    try:
        return fn(**kwargs)
    except TypeError as exc:
        raise BadParameter(str(exc)) from exc


def atom_frequencies(dist: DiscreteDistribution, draws: Sequence[float]) -> np.ndarray:
    """Empirical frequency of each support atom among ``draws``."""
    draws = np.asarray(draws)
    return np.array([(draws == v).mean() for v in dist.values])
