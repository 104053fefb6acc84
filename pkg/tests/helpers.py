"""Shared draw helpers for randomized cross-method tests."""

import numpy as np

from chaoskit import dynsys
from chaoskit.errors import ChaoskitError


def random_bounded_spec(family, rng, sigma=0.0, probe_len=400):
    """Draw parameters whose deterministic orbit stays bounded.

    Rejection-samples until a short probe orbit survives the divergence
    guard, so quadmap coefficient draws are usable.
    """
    while True:
        if family == dynsys.KCC:
            spec = dynsys.kcc(-0.5, rng.uniform(0.0, 14.0), rng.uniform(5.5, 21.0),
                              sigma=sigma)
            x0 = np.array([rng.uniform(0, 24.0), spec.params.tau0])
        elif family == dynsys.ZMAP:
            spec = dynsys.zmap(rng.uniform(0.1, 2.0), rng.choice([1.0, 1.5, 2.0, 3.0]),
                               sigma=sigma)
            x0 = np.array([rng.uniform(-1.0, 1.0)])
        elif family == dynsys.GLM:
            z = int(rng.choice([2, 3]))
            hi = 3.99 if z == 2 else 2.59
            spec = dynsys.glm(rng.uniform(0.5, hi), z, sigma=sigma)
            x0 = np.array([rng.uniform(0.05, 0.95)])
        else:
            spec = dynsys.quadmap(rng.uniform(-1.2, 1.2, size=12), sigma=sigma)
            x0 = rng.uniform(-0.2, 0.2, size=2)
        try:
            dynsys.generate_sequence(spec, x0, n=probe_len, n_transient=100,
                                     seed=int(rng.integers(2**32)))
        except ChaoskitError:
            continue
        return spec, x0
