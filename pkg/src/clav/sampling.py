"""Unbiased sampling estimator of the number of long-aggregate users.

Each triplet of the query regions carries weight ``phi / c`` where ``phi``
says whether its user qualifies and ``c`` is how many query regions the user
visits; the weights sum to the exact answer. Sampling ``s`` triplets
uniformly with replacement and rescaling by ``N_Q / s`` gives an unbiased
estimate whose additive error is at most ``epsilon * n_Q`` with probability
``1 - delta`` once ``s >= r^2 / (2 epsilon^2) * ln(2 / delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import ValidationError
from .model import RegionQuery, TripletStore


@dataclass(frozen=True)
class SamplingConfig:
    epsilon: float
    delta: float
    seed: int = 0
    override_s: int | None = None

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not (0 < self.delta < 1):
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.override_s is not None and self.override_s < 1:
            raise ValidationError(f"sample size must be positive, got {self.override_s}")


@dataclass(frozen=True)
class Estimate:
    value: Fraction
    s_used: int
    n_q_triplets: int


def sample_size(epsilon: float, delta: float, r: int) -> int:
    if not (0 < epsilon < 1) or not (0 < delta < 1) or r < 1:
        raise ValidationError("need 0 < epsilon < 1, 0 < delta < 1, r >= 1")
    return max(1, math.ceil(r * r / (2 * epsilon * epsilon) * math.log(2 / delta)))


def _rng(seed: int) -> np.random.Generator:
    # counter-based, so streams are reproducible and cheap to split
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def draw_sample(store: TripletStore, regions, s: int, seed: int):
    """Draw ``s`` triplets of ``regions`` uniformly with replacement.

    Region ``j`` is chosen with probability ``|R_j| / N_Q`` and then one of
    its triplets uniformly, without materialising the union.
    """
    sizes = np.array([store.region_size(j) for j in regions], dtype=np.int64)
    cum = np.cumsum(sizes)
    n_q = int(cum[-1]) if len(cum) else 0
    rng = _rng(seed)
    flat = rng.integers(0, n_q, size=s, dtype=np.int64)
    which = np.searchsorted(cum, flat, side="right")
    offset = flat - (cum[which] - sizes[which])
    starts = store.region_ptr[np.asarray(regions, dtype=np.int64)]
    pos = starts[which] + offset
    return (np.ascontiguousarray(store.region_users[pos]),
            np.asarray(regions, dtype=np.int64)[which],
            np.ascontiguousarray(store.region_times[pos]))


def estimate_count(store: TripletStore, q: RegionQuery, cfg: SamplingConfig) -> Estimate:
    store.validate_query(q)
    n_q = store.query_triplet_count(q.regions)
    if n_q == 0:
        return Estimate(Fraction(0), 0, 0)
    s = cfg.override_s or sample_size(cfg.epsilon, cfg.delta, q.r)
    users, regions, times = draw_sample(store, q.regions, s, cfg.seed)
    hist = kernels.sample_hits(users, regions, times, np.asarray(q.regions, dtype=np.int64),
                               store.keys, store.times, store.m, store.k_units(q.k))
    z = sum((Fraction(int(h), c) for c, h in enumerate(hist) if c and h), Fraction(0))
    return Estimate(z * n_q / s, s, n_q)


def estimate_with_guarantee(store: TripletStore, q: RegionQuery, epsilon: float, delta: float,
                            seed: int = 0) -> Estimate:
    return estimate_count(store, q, SamplingConfig(epsilon, delta, seed))


def triplet_weights(store: TripletStore, q: RegionQuery) -> list[Fraction]:
    """``phi / c`` for every triplet of the query regions, in region order.

    Each is the contribution of that triplet when it is the one sampled, so
    ``N_Q * mean(weights)`` is the estimator's exact expectation.
    """
    store.validate_query(q)
    k = store.k_units(q.k)
    out = []
    for j in q.regions:
        for user in store.region(j)[0].tolist():
            found = [store.lookup_units(user, other) for other in q.regions]
            c = sum(1 for t in found if t > 0)
            out.append(Fraction(1, c) if sum(found) >= k else Fraction(0))
    return out
