"""Randomised consistency suite: dual solver against the primal oracle, plus
the exact identities the worst-case gap must satisfy."""

from dataclasses import dataclass

import numpy as np

from .fuzz import random_instance
from .gap import (KernelView, brute_force_gap_oracle, gap_decomposition_ball, gap_decomposition_mr,
                  worst_case_gap)
from .interpolators import min_norm
from .model import population_risk
from .montecarlo import run_trials


@dataclass(frozen=True)
class CheckResult:
    check: str
    instances: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)


def _duality(method):
    def task(rng, _):
        spec, S = random_instance(rng)
        mn = min_norm(S)
        B = mn.norm * float(rng.uniform(1.0, 3.0))
        got = worst_case_gap(S, spec, mn, B, method=method).value
        ref = brute_force_gap_oracle(S, spec, spec.w_star, B)
        return abs(got - ref) / abs(ref)
    return task


def _medium(rng):
    return random_instance(rng, n_max=20, kernel_dims=tuple(range(1, 31)), p_max=50)


def _mn_identity(rng, _):
    spec, S = _medium(rng)
    mn = min_norm(S)
    ref = population_risk(mn.w, spec)
    return abs(worst_case_gap(S, spec, mn, mn.norm).value - ref) / ref


def _mr(rng, _):
    spec, S = _medium(rng)
    d = gap_decomposition_mr(S, spec, method="dense")
    outside = 0.0 if d.degenerate else max(0.0, 1.0 - d.gamma_n, d.gamma_n - 4.0)
    return outside, d.orthogonality


def _ball(rng, _):
    spec, S = _medium(rng)
    mn = min_norm(S)
    d = gap_decomposition_ball(S, spec, 1.5 * mn.norm, anchor=mn)
    viol = max(0.0, -d.remainder, d.remainder - d.remainder_bound) / (1.0 + d.value)
    kernel = float(np.linalg.norm(KernelView(S, "matrix-free").project(mn.w))) / (1.0 + mn.norm)
    return viol, kernel


def run_selfcheck(seed: int, instances: int = 200, workers: int = 1) -> list:
    kw = dict(workers=workers)
    out = []
    for i, (name, task, tol) in enumerate([("duality_dense", _duality("dense"), 1e-6),
                                           ("duality_structured", _duality("structured"), 1e-6),
                                           ("mn_identity", _mn_identity, 1e-10)]):
        errs = run_trials(task, instances, seed, keys=(i,), **kw)
        out.append(CheckResult(name, instances, float(max(errs)), tol))
    mr = np.array(run_trials(_mr, instances, seed, keys=(3,), **kw))
    out.append(CheckResult("mr_bracket", instances, float(mr[:, 0].max()), 1e-9))
    out.append(CheckResult("mr_orthogonality", instances, float(mr[:, 1].max()), 1e-8))
    ball = np.array(run_trials(_ball, instances, seed, keys=(4,), **kw))
    out.append(CheckResult("ball_remainder", instances, float(ball[:, 0].max()), 1e-9))
    out.append(CheckResult("mn_kernel", instances, float(ball[:, 1].max()), 1e-8))
    return out
