"""Synthetic worlds: buildings, rooms, access points and a tower layout.

Received power follows the log-distance model
``P0 - 10 * gamma * log10(d)`` plus static log-normal shadowing drawn once
per (access point, room) pair.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from collabloc.errors import GenerationError, InvalidArgument
from collabloc.fingerprint import LocationLabel
from collabloc.privacy import LabelPool
from collabloc.regions import Level

AUDIBLE_DBM = -100.0
ROOM_TYPES = (
    # name, median sound level (amplitude counts)
    ("office", 400.0),
    ("lab", 900.0),
    ("lecture", 1800.0),
    ("lobby", 4000.0),
    ("cafe", 7000.0),
)


@dataclass(frozen=True)
class WorldConfig:
    n_buildings: int = 15
    rooms_per_building: tuple[int, int] = (3, 4)
    campus_buildings: int = 4
    n_towers: int = 2
    aps_per_room: float = 2.0
    path_loss_exponent: float = 3.0
    p0_dbm: float = -40.0
    shadowing_db: float = 4.0
    room_size_m: float = 10.0
    campus_spacing_m: float = 150.0
    downtown_spacing_m: float = 70.0
    region_gap_m: float = 5000.0
    public_labels_per_tower: int = 5000
    test_places: int = 15
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.rooms_per_building
        positive = [self.n_buildings, lo, self.n_towers, self.aps_per_room, self.path_loss_exponent,
                    self.room_size_m, self.campus_spacing_m, self.downtown_spacing_m]
        if any(v <= 0 for v in positive) or hi < lo:
            raise InvalidArgument("world parameters must be positive")
        if self.shadowing_db < 0:
            raise InvalidArgument("shadowing must be non-negative")
        if self.seed is None:
            raise InvalidArgument("a world needs a seed")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        if "rooms_per_building" in d:
            d["rooms_per_building"] = tuple(d["rooms_per_building"])
        return cls(**d)


@dataclass(frozen=True)
class Place:
    index: int
    label: LocationLabel
    building: int
    tower: str
    position: tuple[float, float]
    room_type: str
    sound_level: float
    cell_signal_dbm: float
    cell_id: str
    lac: str


@dataclass(frozen=True)
class AccessPoint:
    bssid: str
    building: int
    position: tuple[float, float]


def path_loss_rssi(distance_m, p0_dbm: float, gamma: float, shadowing=0.0):
    """Mean received power in dBm at ``distance_m`` (clipped below at 1 m)."""
    d = np.maximum(np.asarray(distance_m, dtype=np.float64), 1.0)
    return p0_dbm - 10.0 * gamma * np.log10(d) + shadowing


@dataclass
class World:
    config: WorldConfig
    places: list[Place]
    aps: list[AccessPoint]
    rssi: np.ndarray  # places x aps, ground-truth dBm
    towers: list[str]
    public_labels: dict[str, list[LocationLabel]]
    test_places: list[int]
    topology: dict = field(repr=False, default_factory=dict)

    def audible(self, place: int) -> np.ndarray:
        return np.flatnonzero(self.rssi[place] >= AUDIBLE_DBM)

    def places_in_tower(self, tower: str) -> list[int]:
        return [p.index for p in self.places if p.tower == tower]

    def label_pool(self, tower: str, area_level: Level) -> LabelPool:
        """Public labels of the area-level region around ``tower``."""
        towers = [tower] if Level.parse(area_level) == Level.CELL_TOWER else self.towers
        labels = []
        for t in towers:
            labels.extend(self.places[i].label for i in self.places_in_tower(t))
            labels.extend(self.public_labels[t])
        return LabelPool(labels)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(sorted(asdict(self.config).items())).encode())
        for p in self.places:
            h.update(repr((p.label.building, p.label.room, p.tower, p.position, p.sound_level,
                           p.cell_signal_dbm, p.cell_id, p.lac)).encode())
        for a in self.aps:
            h.update(repr((a.bssid, a.position)).encode())
        h.update(np.ascontiguousarray(self.rssi).tobytes())
        h.update(repr(self.test_places).encode())
        return h.hexdigest()


def desk_topology(towers: list[str]) -> dict:
    """One country, state, county and city above the given towers."""
    return {"name": "Country", "children": [{"name": "State", "children": [
        {"name": "County", "children": [{"name": "City", "children": [{"name": t} for t in towers]}]}]}]}


def generate_world(config: WorldConfig) -> World:
    rng = np.random.default_rng([config.seed, 0x5EED])
    towers = [f"Tower-{t}" for t in range(config.n_towers)]
    tower_signal = {t: -65.0 - 10.0 * i for i, t in enumerate(towers)}

    places: list[Place] = []
    aps: list[AccessPoint] = []
    room_centers = []
    lo, hi = config.rooms_per_building
    n_campus = min(config.campus_buildings, config.n_buildings)
    for b in range(config.n_buildings):
        campus = b < n_campus
        if config.n_towers == 1:
            tower = towers[0]
        elif campus:
            tower = towers[0]
        else:
            # downtown buildings share the remaining towers in contiguous blocks
            k = b - n_campus
            per = math.ceil((config.n_buildings - n_campus) / (config.n_towers - 1))
            tower = towers[1 + min(k // per, config.n_towers - 2)]
        idx = b if campus else b - n_campus
        spacing = config.campus_spacing_m if campus else config.downtown_spacing_m
        origin = np.array([idx * spacing + (0.0 if campus else config.region_gap_m), 0.0])
        n_rooms = int(rng.integers(lo, hi + 1))
        cols = 2
        building_name = f"Bldg-{b:02d}"
        b_offset = rng.normal(0.0, 3.0)
        for r in range(n_rooms):
            center = origin + config.room_size_m * np.array([r % cols, r // cols])
            rtype, sound_median = ROOM_TYPES[int(rng.integers(len(ROOM_TYPES)))]
            sound = float(sound_median * math.exp(rng.normal(0.0, 0.25)))
            cell = float(tower_signal[tower] + b_offset + rng.normal(0.0, 4.0))
            places.append(Place(
                index=len(places), label=LocationLabel(building_name, f"Room-{r + 1:02d}"), building=b,
                tower=tower, position=(float(center[0]), float(center[1])), room_type=rtype,
                sound_level=round(sound, 1), cell_signal_dbm=round(cell, 1),
                cell_id=f"cid-{4100 + towers.index(tower)}", lac=f"lac-{20 + towers.index(tower)}",
            ))
            room_centers.append(center)
        n_aps = max(n_rooms, int(round(config.aps_per_room * n_rooms)))
        for a in range(n_aps):
            # APs are spread over the rooms round-robin
            pos = room_centers[-n_rooms + a % n_rooms] + rng.uniform(-3.0, 3.0, size=2)
            aps.append(AccessPoint(f"ap-{b:02d}-{a:02d}", b, (float(pos[0]), float(pos[1]))))

    P = np.array([p.position for p in places])
    A = np.array([a.position for a in aps])
    dist = np.linalg.norm(P[:, None, :] - A[None, :, :], axis=2)
    shadow = rng.normal(0.0, config.shadowing_db, size=dist.shape) if config.shadowing_db > 0 else 0.0
    rssi = np.minimum(path_loss_rssi(dist, config.p0_dbm, config.path_loss_exponent, shadow), 0.0)
    rssi[rssi < AUDIBLE_DBM] = -np.inf
    if not np.all(np.isfinite(rssi).any(axis=1)):
        bad = [places[i].label for i in np.flatnonzero(~np.isfinite(rssi).any(axis=1))]
        raise GenerationError(f"no audible access point at {bad}")

    public = {t: [LocationLabel(f"{t}-Place-{i:05d}", "Main") for i in range(config.public_labels_per_tower)]
              for t in towers}
    n_test = min(config.test_places, len(places))
    tests = sorted(int(i) for i in rng.choice(len(places), size=n_test, replace=False))
    return World(config, places, aps, rssi, towers, public, tests, desk_topology(towers))
