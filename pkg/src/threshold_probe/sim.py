"""Monte Carlo estimation of E[X_sigma] and competitive ratios.

Replicates are processed in fixed-size blocks.  Block b draws from a
generator seeded by ``SeedSequence(seed, spawn_key=(b,))``, so the output
depends only on ``(seed, replicates, block)`` and never on the number of
workers or on scheduling order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .distributions import DiscreteDistribution, Distribution, expected_max
from .errors import BadParameter

Z95 = 1.959963984540054
DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class SimConfig:
    replicates: int
    seed: int = 0
    workers: int = 1
    block: int = DEFAULT_BLOCK

    def __post_init__(self):
        if self.replicates < 1 or self.workers < 1 or self.block < 1:
            raise BadParameter("replicates, workers and block must be >= 1")

    def block_rng(self, b: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(b,)))

    def block_sizes(self):
        full, rest = divmod(self.replicates, self.block)
        return [self.block] * full + ([rest] if rest else [])


@dataclass
class SimResult:
    mean: float
    stderr: float
    ci95: Tuple[float, float]
    expected_max: float
    ratio: Optional[float]
    ratio_stderr: Optional[float]
    paired_ratio: Optional[float]
    replicates: int
    seed: int
    max_exact: bool
    values: Optional[np.ndarray] = field(default=None, repr=False)
    maxes: Optional[np.ndarray] = field(default=None, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        out = {
            "mean": self.mean,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "expected_max": self.expected_max,
            "ratio": self.ratio,
            "ratio_stderr": self.ratio_stderr,
            "paired_ratio": self.paired_ratio,
            "replicates": self.replicates,
            "seed": self.seed,
            "max_exact": self.max_exact,
        }
        for key, arr in self.extras.items():
            out[f"mean_{key}"] = float(np.mean(arr))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SimResult":
        return cls(
            mean=d["mean"],
            stderr=d["stderr"],
            ci95=tuple(d["ci95"]),
            expected_max=d["expected_max"],
            ratio=d["ratio"],
            ratio_stderr=d["ratio_stderr"],
            paired_ratio=d["paired_ratio"],
            replicates=d["replicates"],
            seed=d["seed"],
            max_exact=d["max_exact"],
        )


def _mean_stderr(x: np.ndarray) -> Tuple[float, float]:
    mean = math.fsum(x) / x.size
    if x.size < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (x.size - 1)
    return mean, math.sqrt(var / x.size)


def estimate(runner, dist: Distribution, n: int, cfg: SimConfig, keep_values: bool = True) -> SimResult:
    """Estimate E[X_sigma] of a batched runner.

    For discrete distributions the ratio uses the exact E[max]; otherwise the
    maximum of the same realizations is averaged (paired estimator) and the
    ratio's standard error comes from the delta method.
    """
    sizes = cfg.block_sizes()

    def one(b):
        out = runner(dist, n, cfg.block_rng(b), sizes[b])
        return out if len(out) == 3 else (out[0], out[1], {})

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            blocks = list(pool.map(one, range(len(sizes))))
    else:
        blocks = [one(b) for b in range(len(sizes))]
    values = np.concatenate([np.asarray(v, dtype=float) for v, _, _ in blocks])
    maxes = np.concatenate([np.asarray(m, dtype=float) for _, m, _ in blocks])
    extras = {}
    for key in blocks[0][2]:
        extras[key] = np.concatenate([e[key] for _, _, e in blocks])

    mean, stderr = _mean_stderr(values)
    ci = (mean - Z95 * stderr, mean + Z95 * stderr)
    max_mean, _ = _mean_stderr(maxes)
    paired = mean / max_mean if max_mean > 0 else None
    if isinstance(dist, DiscreteDistribution):
        emax = expected_max(dist, n)
        exact = True
        ratio = mean / emax if emax > 0 else None
        ratio_se = stderr / emax if emax > 0 else None
    else:
        emax = max_mean
        exact = False
        ratio = paired
        if max_mean > 0 and values.size > 1:
            resid = values - paired * maxes
            _, se = _mean_stderr(resid)
            ratio_se = se / max_mean
        else:
            ratio_se = None if max_mean <= 0 else 0.0
    return SimResult(
        mean=mean,
        stderr=stderr,
        ci95=ci,
        expected_max=emax,
        ratio=ratio,
        ratio_stderr=ratio_se,
        paired_ratio=paired,
        replicates=cfg.replicates,
        seed=cfg.seed,
        max_exact=exact,
        values=values if keep_values else None,
        maxes=maxes if keep_values else None,
        extras=extras,
    )
