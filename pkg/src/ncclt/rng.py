"""Deterministic seed derivation for replicated experiments.

Every replication owns a counter-based stream derived from (master_seed,
domain, replication index). Streams are independent of chunking and worker
count by construction, which is what makes reports byte-identical across
``--workers`` values.

Domains keep seed streams disjoint between phases:
  0  evaluation replications
  1  calibration replications (variance estimation)
  2  auxiliary draws (instance generation, Monte Carlo centering)
"""

from __future__ import annotations

import numpy as np

DOMAIN_EVAL = 0
DOMAIN_CALIBRATION = 1
DOMAIN_AUX = 2


def replication_seed(master_seed: int, domain: int, index: int) -> np.random.SeedSequence:
    """Seed for one replication; distinct (domain, index) pairs never collide."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(domain), int(index)))


def replication_generator(master_seed: int, domain: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(replication_seed(master_seed, domain, index)))


def single_generator(seed) -> np.random.Generator:
    """Generator from a raw integer seed or a prepared SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed))))
