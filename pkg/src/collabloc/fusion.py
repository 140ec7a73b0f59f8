"""CTPM-side fusion of provider answers and utility bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from collabloc.classifier import LabelDistribution
from collabloc.errors import InvalidArgument, NoInformation
from collabloc.fingerprint import LocationLabel

ACCEPT_THRESHOLD = 0.5
DEFAULT_HALF_LIFE_DAYS = 30.0
DEFAULT_SMOOTHING = 0.2


@dataclass(frozen=True)
class Utility:
    """Fusion weight of one provider: noise reputation times freshness."""

    noise_component: float = 1.0
    time_component: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.noise_component <= 1.0):
            raise InvalidArgument("noise component must lie in [0, 1]")
        if not (0.0 < self.time_component <= 1.0):
            raise InvalidArgument("time component must lie in (0, 1]")

    @property
    def weight(self) -> float:
        return self.noise_component * self.time_component


@dataclass(frozen=True)
class ProviderResponse:
    provider_id: str
    labels: Optional[list[tuple[LocationLabel, float]]]
    utility: Utility = field(default_factory=Utility)

    def __post_init__(self):
        if self.labels is not None and len(self.labels) == 0:
            raise InvalidArgument("a non-NA response must carry at least one label")

    @property
    def is_na(self) -> bool:
        return self.labels is None

    @classmethod
    def na(cls, provider_id: str, utility: Utility = Utility()) -> "ProviderResponse":
        return cls(provider_id, None, utility)


def weighted_average_fusion(responses: Sequence[ProviderResponse]) -> LabelDistribution:
    """Utility-weighted average of the non-NA responses.

    A label missing from a response counts as zero mass there. Responses of
    weight zero are ignored entirely, support included.
    """
    used = [r for r in responses if not r.is_na and r.utility.weight > 0.0]
    if not used:
        raise NoInformation("no non-NA response with positive weight")
    total_w = sum(r.utility.weight for r in used)
    mass: dict[LocationLabel, float] = {}
    for r in used:
        w = r.utility.weight
        for label, p in r.labels:
            mass[label] = mass.get(label, 0.0) + w * p
    return LabelDistribution((l, m / total_w) for l, m in mass.items()).normalized()


def accept_label(dist: LabelDistribution, threshold: float = ACCEPT_THRESHOLD) -> Optional[LocationLabel]:
    """The argmax label if its mass exceeds ``threshold``; ties yield ``None``."""
    if len(dist) == 0:
        return None
    best = max(dist.values())
    winners = [l for l, p in dist.items() if p == best]
    if len(winners) != 1 or best <= threshold:
        return None
    return winners[0]


def time_utility(entry_age: float, half_life: float = DEFAULT_HALF_LIFE_DAYS) -> float:
    if half_life <= 0:
        raise InvalidArgument("half_life must be positive")
    if entry_age < 0:
        raise InvalidArgument("entry_age must be non-negative")
    return 2.0 ** (-entry_age / half_life)


def update_noise_utility(current: float, feedback: float, smoothing: float = DEFAULT_SMOOTHING) -> float:
    if not (0.0 <= current <= 1.0) or not (0.0 <= feedback <= 1.0):
        raise InvalidArgument("utility and feedback must lie in [0, 1]")
    if not (0.0 < smoothing < 1.0):
        raise InvalidArgument("smoothing must lie in (0, 1)")
    return min(1.0, max(0.0, (1.0 - smoothing) * current + smoothing * feedback))


def consistency_feedback(response: ProviderResponse, accepted: LocationLabel) -> float:
    """Mass a response gave the accepted label, relative to its own top mass.

    This is computable without ground truth; it stands in for the unknown
    quality signal a CTPM would report.
    """
    if response.is_na:
        raise InvalidArgument("NA responses receive no feedback")
    top = max(p for _, p in response.labels)
    if top <= 0.0:
        return 0.0
    given = dict(response.labels).get(accepted, 0.0)
    return min(1.0, given / top)


class UtilityBook:
    """Noise utilities kept by a CTPM, one per provider id."""

    def __init__(self, smoothing: float = DEFAULT_SMOOTHING, initial: float = 1.0):
        self.smoothing = smoothing
        self.initial = initial
        self._noise: dict[str, float] = {}

    def noise(self, provider_id: str) -> float:
        return self._noise.get(provider_id, self.initial)

    def set_noise(self, provider_id: str, value: float) -> None:
        if not (0.0 <= value <= 1.0):
            raise InvalidArgument("noise utility must lie in [0, 1]")
        self._noise[provider_id] = value

    def utility(self, provider_id: str, entry_age: float = 0.0,
                half_life: float = DEFAULT_HALF_LIFE_DAYS) -> Utility:
        return Utility(self.noise(provider_id), time_utility(entry_age, half_life))

    def record(self, responses: Sequence[ProviderResponse], accepted: LocationLabel) -> None:
        for r in responses:
            if r.is_na:
                continue
            fb = consistency_feedback(r, accepted)
            self._noise[r.provider_id] = update_noise_utility(self.noise(r.provider_id), fb, self.smoothing)
