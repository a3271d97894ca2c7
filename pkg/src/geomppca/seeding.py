"""Deterministic derivation of independent random streams.

All Monte Carlo entry points take a single integer seed; per-sample and
per-datum streams are derived from it with ``numpy.random.SeedSequence`` so
results are reproducible bitwise and independent of any execution schedule.
"""

from __future__ import annotations

import numpy as np


def derived_seed(seed: int, *key: int) -> int:
    """A child seed keyed by (seed, *key), stable across platforms."""
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in key])
    state = ss.generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def datum_seed(seed: int, point) -> int:
    """A child seed keyed by the coordinate values of a data point.

    Identical points map to identical streams, so a duplicated datum
    contributes exactly twice to a likelihood.
    """
    bits = np.asarray(point, dtype=np.float64).reshape(-1).view(np.uint64)
    return derived_seed(seed, *(int(b) for b in bits))
