"""Provider-side location distribution generation (LDG).

A provider classifies the request against its own database, enlarges the
result with zero-mass decoy labels drawn from its area-level region,
perturbs every mass with Gaussian noise and returns only the top ``k``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from collabloc.classifier import (
    DEFAULT_WEIGHTS,
    Classifier,
    LabelDistribution,
    two_step_classify,
)
from collabloc.errors import InvalidArgument
from collabloc.fingerprint import FeatureVector, LocalDatabase, LocationLabel, WifiScan
from collabloc.regions import AreaLevel

TopK = list[tuple[LocationLabel, float]]


@dataclass(frozen=True)
class PrivacyParams:
    p1: int = 0
    p2: float = 0.0
    k: int = 25
    area_level: AreaLevel = AreaLevel.CELL_TOWER

    def __post_init__(self):
        if self.p1 < 0 or int(self.p1) != self.p1:
            raise InvalidArgument("p1 must be a non-negative integer")
        if self.p2 < 0:
            raise InvalidArgument("p2 must be non-negative")
        if self.k < 1:
            raise InvalidArgument("k must be at least 1")
        object.__setattr__(self, "area_level", AreaLevel.parse(self.area_level))


class LabelPool:
    """Public labels of a provider's area-level region, used as decoys."""

    def __init__(self, labels: Sequence[LocationLabel]):
        self.labels = tuple(dict.fromkeys(labels))
        if not self.labels:
            raise InvalidArgument("label pool is empty")
        self._index = {l: i for i, l in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def sample_excluding(self, count: int, exclude, rng: np.random.Generator) -> list[LocationLabel]:
        """Uniform sample without replacement from the pool minus ``exclude``.

        Draws a random prefix long enough to survive removal of the excluded
        labels, which keeps the draw uniform over the filtered pool without
        materialising it.
        """
        if count <= 0:
            return []
        n_excluded = sum(1 for l in exclude if l in self._index)
        available = len(self.labels) - n_excluded
        if count >= available:
            return [l for l in self.labels if l not in exclude]
        picks = rng.choice(len(self.labels), size=count + n_excluded, replace=False)
        out = []
        for i in picks:
            label = self.labels[i]
            if label not in exclude:
                out.append(label)
                if len(out) == count:
                    break
        return out


def add_decoys(dist: LabelDistribution, p1: int, pool: LabelPool, rng: np.random.Generator) -> LabelDistribution:
    decoys = pool.sample_excluding(p1, dist, rng)
    return dist.padded(decoys)


def perturb(dist: LabelDistribution, p2: float, rng: np.random.Generator) -> LabelDistribution:
    """Add N(0, p2) noise per label, clamp negatives to zero and renormalize.

    If every mass clamps to zero the result is uniform over the support.
    """
    if len(dist) == 0:
        raise InvalidArgument("cannot perturb an empty distribution")
    labels = list(dist)
    values = np.fromiter(dist.values(), dtype=np.float64, count=len(labels))
    if p2 > 0:
        values = np.maximum(values + rng.normal(0.0, p2, size=len(labels)), 0.0)
    total = values.sum()
    values = np.full(len(labels), 1.0 / len(labels)) if total <= 0.0 else values / total
    return LabelDistribution._trusted(dict(zip(labels, values.tolist())))


def top_k(dist: LabelDistribution, k: int) -> TopK:
    """The ``k`` heaviest labels, heaviest first; ties go to the smaller label.

    Masses are not renormalized after truncation.
    """
    if k < 1:
        raise InvalidArgument("k must be at least 1")
    return heapq.nsmallest(k, dist.items(), key=lambda item: (-item[1], item[0]))


def generate_location_distribution(db: LocalDatabase, scan: WifiScan, features: FeatureVector,
                                   params: PrivacyParams, pool: LabelPool, rng: np.random.Generator,
                                   r1: float = DEFAULT_WEIGHTS[0], r2: float = DEFAULT_WEIGHTS[1],
                                   classifier: Union[str, Classifier] = "nfm") -> Optional[TopK]:
    """Run the full provider pipeline; ``None`` is the NA answer."""
    dist = two_step_classify(db, scan, features, r1, r2, classifier)
    if dist is None:
        return None
    dist = add_decoys(dist, params.p1, pool, rng)
    dist = perturb(dist, params.p2, rng)
    return top_k(dist, params.k)
