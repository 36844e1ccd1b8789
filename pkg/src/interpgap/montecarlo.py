"""Seeded Monte Carlo harness.

Trial ``t`` always receives ``substream(seed, t, *keys)`` and results are
collected in trial order, so estimates are bitwise reproducible whatever the
worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MonteCarloError
from .rng import substream


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int
    seed: int

    @classmethod
    def from_samples(cls, samples, seed: int) -> "McEstimate":
        x = np.asarray(samples, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("need at least two scalar samples")
        return cls(float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size)), int(x.size), seed)

    def tolerance(self, target: float, rel: float, k_se: float = 3.0) -> float:
        """``max(k_se * SE, rel * |target|)``."""
        return max(k_se * self.std_error, rel * abs(target))

    def agrees(self, target: float, rel: float = 0.0, k_se: float = 3.0) -> bool:
        return abs(self.mean - target) <= self.tolerance(target, rel, k_se)


def run_trials(task: Callable[[np.random.Generator, int], object], trials: int, seed: int, *,
               keys: Sequence[int] = (), workers: int = 1) -> list:
    """Evaluate ``task(rng, t)`` for ``t`` in ``range(trials)``; results in trial order.

    Any failing trials are collected and re-raised together as ``MonteCarloError``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")

    def one(t):
        try:
            return True, task(substream(seed, t, *keys), t)
        except Exception as exc:  # noqa: BLE001  aggregated and re-raised below
            return False, exc

    if workers <= 1:
        out = [one(t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(trials)))
    failures = {t: r for t, (ok, r) in enumerate(out) if not ok}
    if failures:
        raise MonteCarloError(failures)
    return [r for _, r in out]


def run_monte_carlo(task, trials: int, seed: int, *, keys: Sequence[int] = (),
                    workers: int = 1) -> McEstimate:
    """Mean and standard error of a scalar estimator over independent substreams."""
    if trials < 2:
        raise ValueError("trials must be at least 2")
    return McEstimate.from_samples(run_trials(task, trials, seed, keys=keys, workers=workers), seed)


def summarize(rows, seed: int) -> list:
    """Column-wise ``McEstimate`` for a list of equal-length per-trial tuples."""
    arr = np.asarray(rows, dtype=float)
    return [McEstimate.from_samples(arr[:, j], seed) for j in range(arr.shape[1])]
