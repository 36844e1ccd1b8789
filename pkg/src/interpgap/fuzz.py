"""Random problem instances for self-checks and property tests."""

import numpy as np

from .model import ProblemSpec, SampleSet, sample_dataset


def random_instance(rng: np.random.Generator, *, n_max: int = 4, kernel_dims=(1, 2),
                    p_max: int = 6, lam_range=(0.1, 10.0), sigma2_range=(0.1, 3.0)):
    """Draw ``(spec, S)`` with ``n <= n_max``, ``p - n`` in ``kernel_dims``, ``p <= p_max``
    and at least one junk coordinate."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        k = int(rng.choice(kernel_dims))
        p = n + k
        if p <= p_max:
            break
    d_S = int(rng.integers(0, p))  # leaves d_J >= 1
    spec = ProblemSpec(d_S=d_S, d_J=p - d_S,
                       lam=float(np.exp(rng.uniform(*np.log(lam_range)))),
                       sigma2=float(rng.uniform(*sigma2_range)),
                       w_star_S=rng.standard_normal(d_S))
    S: SampleSet = sample_dataset(spec, n, rng)
    return spec, S
