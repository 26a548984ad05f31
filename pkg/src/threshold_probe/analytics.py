"""Exact and limiting analysis of adaptive quantile policies.

Quantities are expressed in "alpha space": a threshold t with Pr[X >= t] = q
corresponds to alpha = n q.  For a policy with parameters
``alpha_1 > ... > alpha_k`` the interval ``[0, n]`` splits into
``I_j = [alpha_{j+1}, alpha_j]`` (``alpha_0 = n``, ``alpha_{k+1} = 0``).

With ``p[i]`` the probability of seeing exactly i positive tests, the chosen
box has complementary CDF

    A(alpha) = sum_{i>=1} p[i] * min(1, alpha / alpha_i)
               + p[0] * max(0, (alpha - alpha_1) / (n - alpha_1))

and the ratio curve is ``c(alpha) = A(alpha) / G_m(alpha)`` with
``G_m(alpha) = 1 - (1 - alpha/n)^n``.  In limit mode ``n -> inf``: the
fallback term vanishes and ``G_m(alpha) = 1 - exp(-alpha)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .distributions import DiscreteDistribution, expected_max
from .errors import BadParameter, DegenerateParameters
from .policies import QuantilePolicy, boundary_atom, positive_probability

CONFLUENT_GAP = 1e-6
DEGENERATE_GAP = 1e-10
GRID_POINTS = 1000
GOLDEN_TOL = 1e-8
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def survival_pow(alpha, n):
    """(1 - alpha/n)^n evaluated as exp(n log1p(-alpha/n))."""
    with np.errstate(divide="ignore"):
        return np.exp(n * np.log1p(-np.asarray(alpha, dtype=float) / n))


def g_max(alpha, n: Optional[int] = None):
    """Pr[max >= tau] for the threshold at alpha; ``n=None`` is the limit 1 - e^-alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if n is None:
        return -np.expm1(-alpha)
    with np.errstate(divide="ignore"):
        return -np.expm1(n * np.log1p(-alpha / n))


def _as_alphas(alphas) -> Tuple[float, ...]:
    if isinstance(alphas, QuantilePolicy):
        return alphas.alphas
    return QuantilePolicy(tuple(alphas)).alphas


def _min_gap(alphas: Sequence[float]) -> float:
    a = sorted(alphas)
    return min((b - x for x, b in zip(a, a[1:])), default=math.inf)


# ------------------------------------------------------- positive-count laws


@dataclass(frozen=True)
class PositiveCountDist:
    """probs[i] = Pr[exactly i positive tests]; i = 0..k."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))

    def __getitem__(self, i):
        return self.probs[i]

    def __len__(self):
        return len(self.probs)


def _transition(alphas: Sequence[float], n: int) -> np.ndarray:
    k = len(alphas)
    P = np.zeros((k + 1, k + 1))
    for j, a in enumerate(alphas):
        P[j, j] = 1.0 - a / n
        P[j, j + 1] = a / n
    P[k, k] = 1.0
    return P


def positive_counts_exact(alphas, n: int, method: str = "doubling") -> PositiveCountDist:
    """Exact distribution of the number of positive tests over n boxes.

    Forward DP over boxes: state j = positives so far, a box tests positive
    with probability alpha_{j+1}/n (never once j = k).  ``method="loop"``
    advances one box at a time (O(n k)); ``"doubling"`` composes the per-box
    transition with itself by repeated squaring (O(k^3 log n)).  All entries
    are non-negative so squaring does not cancel.
    """
    alphas = [float(a) for a in alphas]
    if alphas and not alphas[0] < n:
        raise BadParameter(f"alpha_1={alphas[0]} must be below n={n}")
    P = _transition(alphas, n)
    state = np.zeros(len(alphas) + 1)
    state[0] = 1.0
    if method == "loop":
        for _ in range(n):
            state = state @ P
    elif method == "doubling":
        m = n
        while m:
            if m & 1:
                state = state @ P
            m >>= 1
            if m:
                P = P @ P
    else:
        raise BadParameter(f"unknown method {method!r}")
    return PositiveCountDist(state)


def positive_counts_limit(alphas, closed_form: bool = True) -> PositiveCountDist:
    """n -> inf law of the positive count.

    For k <= 3 (and well-separated parameters) the closed forms of
    :func:`prob_e10_limit` / :func:`prob_e110_limit` are used; otherwise the
    matrix exponential of the continuous-time chain generator, which also
    covers coincident parameters exactly.
    """
    alphas = [float(a) for a in alphas]
    k = len(alphas)
    if closed_form and k <= 3 and _min_gap(alphas + [0.0]) >= CONFLUENT_GAP:
        p = [math.exp(-alphas[0])]
        if k >= 2:
            p.append(prob_e10_limit(alphas[0], alphas[1]))
        if k >= 3:
            p.append(prob_e110_limit(*alphas))
        p.append(1.0 - math.fsum(p))
        return PositiveCountDist(np.array(p))
    Q = np.zeros((k + 1, k + 1))
    for j, a in enumerate(alphas):
        Q[j, j] = -a
        Q[j, j + 1] = a
    return PositiveCountDist(expm(Q)[0])


def prob_e10(alpha1: float, alpha2: float, n: int) -> float:
    """Pr[exactly one positive] for a two-threshold policy (positive at tau_1, none at tau_2)."""
    if not (0 <= alpha2 < alpha1 < n) and not (alpha1 == alpha2 and 0 < alpha1 < n):
        raise BadParameter(f"need 0 <= alpha2 < alpha1 < n, got {alpha1}, {alpha2}, {n}")
    if alpha2 == 0.0:
        return float(-np.expm1(n * math.log1p(-alpha1 / n)))
    if alpha1 - alpha2 < CONFLUENT_GAP:
        if alpha1 == alpha2:
            return alpha1 * math.exp((n - 1) * math.log1p(-alpha1 / n))
        return float(positive_counts_exact([alpha1, alpha2], n)[1])
    s1, s2 = survival_pow([alpha1, alpha2], n)
    return alpha1 * (s2 - s1) / (alpha1 - alpha2)


def prob_e110(alpha1: float, alpha2: float, alpha3: float, n: int) -> float:
    """Pr[exactly two positives] for a three-threshold policy."""
    if not (0 <= alpha3 <= alpha2 <= alpha1 < n):
        raise BadParameter(f"need 0 <= alpha3 < alpha2 < alpha1 < n")
    if _min_gap([alpha1, alpha2, alpha3]) < DEGENERATE_GAP:
        raise DegenerateParameters(f"coincident alphas {alpha1}, {alpha2}, {alpha3}")
    if _min_gap([alpha1, alpha2, alpha3]) < CONFLUENT_GAP:
        return float(positive_counts_exact([alpha1, alpha2, alpha3], n)[2])
    s1, s2, s3 = survival_pow([alpha1, alpha2, alpha3], n)
    num = (alpha2 - alpha3) * s1 - (alpha1 - alpha3) * s2 + (alpha1 - alpha2) * s3
    den = (alpha1 - alpha2) * (alpha1 - alpha3) * (alpha2 - alpha3)
    return alpha1 * alpha2 * num / den


def prob_e10_limit(alpha1: float, alpha2: float) -> float:
    return alpha1 * (math.exp(-alpha2) - math.exp(-alpha1)) / (alpha1 - alpha2)


def prob_e110_limit(alpha1: float, alpha2: float, alpha3: float) -> float:
    e1, e2, e3 = math.exp(-alpha1), math.exp(-alpha2), math.exp(-alpha3)
    num = (alpha2 - alpha3) * e1 - (alpha1 - alpha3) * e2 + (alpha1 - alpha2) * e3
    den = (alpha1 - alpha2) * (alpha1 - alpha3) * (alpha2 - alpha3)
    return alpha1 * alpha2 * num / den


# ---------------------------------------------------------------- A and c


def _ccdf_from_counts(alphas, p, alpha, n: Optional[int]):
    alpha = np.asarray(alpha, dtype=float)
    a = np.asarray(alphas)
    out = np.zeros_like(alpha)
    for i in range(1, len(a) + 1):
        out = out + p[i] * np.minimum(1.0, alpha / a[i - 1])
    if n is not None:
        out = out + p[0] * np.clip((alpha - a[0]) / (n - a[0]), 0.0, None)
    return out


def algo_ccdf(alphas, n: int, alpha):
    """A(alpha) = Pr[X_sigma >= tau(alpha)] for the quantile policy with n boxes."""
    alphas = _as_alphas(alphas)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0) or np.any(alpha > n):
        raise BadParameter("alpha must lie in (0, n]")
    p = positive_counts_exact(alphas, n)
    out = _ccdf_from_counts(alphas, p, alpha, n)
    return float(out) if out.ndim == 0 else out


@dataclass
class RatioCurve:
    """Piecewise ratio c(alpha) = A(alpha) / G_m(alpha) of a quantile policy.

    ``mode`` is ``"finite"`` (with ``n``) or ``"limit"``.  ``closed_form``
    records whether the limit probabilities came from the closed forms
    (k <= 3) or from the generator's matrix exponential.
    """

    alphas: Tuple[float, ...]
    mode: str
    n: Optional[int]
    counts: PositiveCountDist
    closed_form: bool = False

    @property
    def k(self) -> int:
        return len(self.alphas)

    @property
    def alpha_max(self) -> float:
        return math.inf if self.n is None else float(self.n)

    def interval(self, j: int) -> Tuple[float, float]:
        """I_j = [alpha_{j+1}, alpha_j] for j = 0..k."""
        ext = (self.alpha_max,) + tuple(self.alphas) + (0.0,)
        return ext[j + 1], ext[j]

    def piece_index(self, alpha: float) -> int:
        for j in range(self.k, -1, -1):
            lo, hi = self.interval(j)
            if alpha <= hi:
                return j
        return 0

    def ccdf(self, alpha):
        return _ccdf_from_counts(self.alphas, self.counts.probs, alpha, self.n)

    def piece_ccdf(self, j: int, alpha):
        """A on I_j written as that interval's own expression.

        sum_{i<=j} p[i] alpha/alpha_i + sum_{i>j} p[i] (+ fallback term on I_0).
        """
        alpha = np.asarray(alpha, dtype=float)
        p = self.counts.probs
        out = np.zeros_like(alpha)
        for i in range(1, self.k + 1):
            out = out + (p[i] * alpha / self.alphas[i - 1] if i <= j else p[i])
        if j == 0 and self.n is not None:
            out = out + p[0] * (alpha - self.alphas[0]) / (self.n - self.alphas[0])
        return out

    def piece(self, j: int, alpha):
        return self.piece_ccdf(j, alpha) / g_max(alpha, self.n)

    def __call__(self, alpha):
        out = self.ccdf(alpha) / g_max(alpha, self.n)
        return float(out) if np.ndim(out) == 0 else out

    eval = __call__

    def scalar(self, alpha: float) -> float:
        """Fast pure-float evaluation used inside optimizers."""
        p = self.counts.probs
        s = 0.0
        for i, a in enumerate(self.alphas, start=1):
            s += p[i] * (alpha / a if alpha < a else 1.0)
        if self.n is None:
            return s / -math.expm1(-alpha)
        if alpha > self.alphas[0]:
            s += p[0] * (alpha - self.alphas[0]) / (self.n - self.alphas[0])
        if alpha >= self.n:
            return s
        return s / -math.expm1(self.n * math.log1p(-alpha / self.n))

    def infimum_at_zero(self) -> float:
        """lim_{alpha -> 0} c(alpha) = sum_i p[i] / alpha_i (both modes)."""
        p = self.counts.probs
        return math.fsum(p[i] / a for i, a in enumerate(self.alphas, start=1))

    def tail_infimum(self) -> float:
        """Limit-mode infimum of c on I_0, reached as alpha -> inf."""
        return 1.0 - float(self.counts.probs[0])


def ratio_curve(alphas, mode: str = "limit", n: Optional[int] = None) -> RatioCurve:
    alphas = _as_alphas(alphas)
    if mode == "limit":
        closed = len(alphas) <= 3 and _min_gap(list(alphas) + [0.0]) >= CONFLUENT_GAP
        if len(alphas) == 3 and _min_gap(alphas) < DEGENERATE_GAP:
            raise DegenerateParameters(f"coincident alphas {alphas}")
        return RatioCurve(alphas, "limit", None, positive_counts_limit(alphas), closed)
    if mode == "finite":
        if n is None:
            raise BadParameter("finite mode needs n")
        if not alphas[0] < n:
            raise BadParameter(f"alpha_1={alphas[0]} must be below n={n}")
        return RatioCurve(alphas, "finite", int(n), positive_counts_exact(alphas, n))
    raise BadParameter(f"mode must be 'limit' or 'finite', got {mode!r}")


# ------------------------------------------------------------ minimization


def golden_section(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> Tuple[float, float]:
    """Minimize a unimodal scalar function on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    candidates = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    fx, x = min(candidates)
    return x, fx


def _grid_then_golden(curve: RatioCurve, lo: float, hi: float, log: bool = False, points: int = GRID_POINTS):
    grid = np.geomspace(lo, hi, points) if log else np.linspace(lo, hi, points)
    vals = curve(grid)
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, points - 1)]
    x, fx = golden_section(curve.scalar, float(a), float(b))
    if vals[i] < fx:
        return float(grid[i]), float(vals[i])
    return x, fx


@dataclass
class MinRatio:
    c_star: float
    alpha_star: float
    pieces: List[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"c_star": self.c_star, "alpha_star": self.alpha_star, "pieces": self.pieces}


def min_ratio(alphas, mode: str = "limit", n: Optional[int] = None, points: int = GRID_POINTS) -> MinRatio:
    """Minimum of the ratio curve over all intervals, with per-piece minima.

    I_k: the infimum is the alpha -> 0 limit (c is increasing there).
    I_{k-1}..I_1: grid of ``points`` seeds a golden-section search.
    I_0: limit mode reports the closed bound 1 - e^{-alpha_1} at alpha = inf;
    finite mode searches [alpha_1, n] on a log grid.
    """
    curve = alphas if isinstance(alphas, RatioCurve) else ratio_curve(alphas, mode, n)
    k = curve.k
    pieces = [{"piece": k, "alpha": 0.0, "c": curve.infimum_at_zero()}]
    for j in range(k - 1, 0, -1):
        lo, hi = curve.interval(j)
        x, fx = _grid_then_golden(curve, lo, hi, points=points)
        pieces.append({"piece": j, "alpha": float(x), "c": float(fx)})
    if curve.n is None:
        pieces.append({"piece": 0, "alpha": math.inf, "c": curve.tail_infimum()})
    else:
        lo, hi = curve.interval(0)
        x, fx = _grid_then_golden(curve, lo, hi, log=True, points=points)
        pieces.append({"piece": 0, "alpha": float(x), "c": float(fx)})
    best = min(pieces, key=lambda d: d["c"])
    return MinRatio(best["c"], best["alpha"], pieces)


# ------------------------------------------------------------ optimization


@dataclass
class OptimizeResult:
    alphas: Tuple[float, ...]
    c_star: float
    pieces: List[dict]
    starts: int
    evaluations: int

    def as_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "c_star": self.c_star,
            "pieces": self.pieces,
            "starts": self.starts,
            "evaluations": self.evaluations,
        }


def _objective(log_alphas: np.ndarray) -> float:
    a = np.exp(log_alphas)
    if np.any(np.diff(a) >= 0) or (len(a) >= 2 and _min_gap(a) < CONFLUENT_GAP):
        return -math.inf
    try:
        return min_ratio(tuple(a), "limit").c_star
    except (DegenerateParameters, BadParameter):
        return -math.inf


def pattern_search(
    f,
    x0: np.ndarray,
    rng: np.random.Generator,
    step: float = 0.5,
    shrink: float = 0.5,
    expand: float = 2.0,
    max_step: float = 1.0,
    min_step: float = 1e-6,
):
    """Maximize f by opportunistic pattern search; returns (x, f(x), evaluations).

    Each poll tries the last successful direction, then the normalized
    vectors of {-1, 0, 1}^k, then a fresh random orthonormal basis and its
    negation.  Random directions keep the search from stalling on the kinks
    of a max-min objective.  Success expands the step, a failed poll shrinks
    it; the search ends once the step drops below ``min_step``.
    """
    x = np.array(x0, dtype=float)
    k = x.size
    lattice = [np.array(d, dtype=float) for d in itertools.product((-1, 0, 1), repeat=k) if any(d)]
    lattice = [d / np.linalg.norm(d) for d in lattice]
    fx = f(x)
    evals = 1
    last = None
    while step >= min_step:
        basis, _ = np.linalg.qr(rng.standard_normal((k, k)))
        dirs = ([last] if last is not None else []) + lattice
        dirs += [sign * basis[:, i] for i in range(k) for sign in (1.0, -1.0)]
        for d in dirs:
            y = x + step * d
            fy = f(y)
            evals += 1
            if fy > fx:
                x, fx, last = y, fy, d
                step = min(step * expand, max_step)
                break
        else:
            step *= shrink
            last = None
    return x, fx, evals


def optimize_alphas(k: int, starts: int = 20, seed: int = 0, min_step: float = 1e-6) -> OptimizeResult:
    """Maximize the limit min-ratio over alpha_1 > ... > alpha_k > 0.

    Multi-start pattern search in log(alpha) coordinates; starts are drawn
    log-uniformly from [1e-4, 4]^k and sorted decreasing.
    """
    if not 1 <= k <= 5:
        raise BadParameter("k must be in 1..5")
    rng = np.random.default_rng(seed)
    best = None
    total = 0
    for _ in range(starts):
        x0 = np.sort(rng.uniform(math.log(1e-4), math.log(4.0), size=k))[::-1]
        while k > 1 and np.min(-np.diff(x0)) < 1e-3:
            x0 = np.sort(rng.uniform(math.log(1e-4), math.log(4.0), size=k))[::-1]
        x, fx, evals = pattern_search(_objective, x0, rng, min_step=min_step)
        total += evals
        if best is None or fx > best[1]:
            best = (x, fx)
    alphas = tuple(float(a) for a in np.exp(best[0]))
    final = min_ratio(alphas, "limit")
    return OptimizeResult(alphas, final.c_star, final.pieces, starts, total)


# ------------------------------------------------------------- dominance


@dataclass
class DominanceReport:
    holds: bool
    worst_alpha: float
    worst_ratio: float
    first_violation: Optional[float]

    def as_dict(self) -> dict:
        return {
            "holds": self.holds,
            "worst_alpha": self.worst_alpha,
            "worst_ratio": self.worst_ratio,
            "first_violation": self.first_violation,
        }


def check_dominance(alphas, n: int, c: float, grid_size: int = 10_000, lower: float = 1e-6) -> DominanceReport:
    """Check A(alpha) >= c G_m(alpha) on a log grid over (0, n] plus the breakpoints."""
    if grid_size < 100:
        raise BadParameter("grid_size must be >= 100")
    alphas = _as_alphas(alphas)
    grid = np.unique(np.concatenate([np.geomspace(min(lower, alphas[-1] / 10), n, grid_size), alphas]))
    p = positive_counts_exact(alphas, n)
    A = _ccdf_from_counts(alphas, p, grid, n)
    G = g_max(grid, n)
    ratios = A / G
    bad = np.nonzero(A < c * G)[0]
    w = int(np.argmin(ratios))
    return DominanceReport(
        holds=bad.size == 0,
        worst_alpha=float(grid[w]),
        worst_ratio=float(ratios[w]),
        first_violation=float(grid[bad[0]]) if bad.size else None,
    )


# ------------------------------------------------------ exact policy value


def posterior_mean(dist: DiscreteDistribution, q: float, positive: bool) -> float:
    """E[X | probability test at q returned ``positive``]."""
    k, p_q = boundary_atom(dist, q)
    v, pr = dist.values, dist.probs
    if positive:
        terms = [v[j] * pr[j] for j in range(k + 1, dist.m)] + [v[k] * pr[k] * p_q]
        mass = q
    else:
        terms = [v[j] * pr[j] for j in range(k)] + [v[k] * pr[k] * (1.0 - p_q)]
        mass = 1.0 - q
    return math.fsum(terms) / mass


def exact_policy_value(policy, dist: DiscreteDistribution, n: int) -> float:
    """E[X_sigma] of the quantile policy under probability testing.

    Forward DP over boxes on (positives so far); the chosen box is the last
    positive one, whose value is distributed as X given a positive test at that
    state's quantile, or box 0 (negative at q_1) when nothing tested positive.
    """
    policy = policy if isinstance(policy, QuantilePolicy) else QuantilePolicy(tuple(policy))
    policy.check_n(n)
    k = policy.k
    qs = [a / n for a in policy.alphas]
    pos = np.array([positive_probability(dist, q) for q in qs] + [0.0])
    state = np.zeros(k + 1)
    state[0] = 1.0
    for _ in range(n):
        moved = state * pos
        state = state - moved
        state[1:] += moved[:-1]
    value = state[0] * posterior_mean(dist, qs[0], False)
    for j in range(1, k + 1):
        value += state[j] * posterior_mean(dist, qs[j - 1], True)
    return float(value)


def exact_policy_ratio(policy, dist: DiscreteDistribution, n: int) -> float:
    return exact_policy_value(policy, dist, n) / expected_max(dist, n)
