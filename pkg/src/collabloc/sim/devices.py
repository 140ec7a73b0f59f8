"""Simulated devices: noisy sensing and local database building."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from collabloc.errors import InvalidArgument
from collabloc.fingerprint import (
    DEFAULT_SIM_THRESHOLD,
    MAX_APS,
    Entry,
    FeatureVector,
    LocalDatabase,
    WifiScan,
    is_new_location,
)
from collabloc.privacy import PrivacyParams
from collabloc.rng import stream
from collabloc.sim.world import AUDIBLE_DBM, World

# sensing noise defaults, fixed by scripts/calibrate.py (see calibration/defaults.json)
DETECTION_PROB = 0.95
RSSI_JITTER_DB = 3.0
SOUND_NOISE_REL = 0.15
CELL_NOISE_DB = 2.0


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    detection_prob: float = DETECTION_PROB
    jitter_db: float = RSSI_JITTER_DB
    coverage: frozenset[int] = frozenset()
    privacy: PrivacyParams = field(default_factory=PrivacyParams)
    gain_offset_db: float = 0.0
    sound_noise: float = SOUND_NOISE_REL
    cell_noise_db: float = CELL_NOISE_DB

    def __post_init__(self):
        if not (0.0 < self.detection_prob <= 1.0):
            raise InvalidArgument("detection probability must lie in (0, 1]")
        if self.jitter_db < 0 or self.sound_noise < 0 or self.cell_noise_db < 0:
            raise InvalidArgument("noise levels must be non-negative")
        object.__setattr__(self, "coverage", frozenset(int(c) for c in self.coverage))


def sample_scan(world: World, device: DeviceProfile, place: int, rng: np.random.Generator,
                captured_at: float = 0.0) -> tuple[WifiScan, FeatureVector]:
    """One observation of ``place`` by ``device``.

    Each audible AP is detected independently; detected RSSI gets the
    device's gain offset plus Gaussian jitter and readings falling below
    the audibility floor are dropped. Only the 15 strongest are kept. The
    scan may come back empty, in which case callers resample.
    """
    if not (0 <= place < len(world.places)):
        raise InvalidArgument(f"unknown place {place}")
    idx = world.audible(place)
    truth = world.rssi[place, idx]
    detected = rng.random(len(idx)) < device.detection_prob
    noisy = truth + device.gain_offset_db + rng.normal(0.0, device.jitter_db, size=len(idx))
    keep = detected & (noisy >= AUDIBLE_DBM)
    pairs = [(world.aps[i].bssid, float(min(0.0, round(v, 2)))) for i, v in zip(idx[keep], noisy[keep])]
    scan = WifiScan.strongest(pairs, captured_at, MAX_APS)
    p = world.places[place]
    sound = max(0.0, p.sound_level * (1.0 + rng.normal(0.0, device.sound_noise)))
    cell = p.cell_signal_dbm + rng.normal(0.0, device.cell_noise_db)
    features = FeatureVector(
        {"sound_level": round(sound, 2), "cell_signal_dbm": round(cell, 2)},
        {"cell_tower_id": p.cell_id, "lac": p.lac},
    )
    return scan, features


def sample_nonempty(world: World, device: DeviceProfile, place: int, rng: np.random.Generator,
                    captured_at: float = 0.0, attempts: int = 20) -> tuple[WifiScan, FeatureVector]:
    for _ in range(attempts):
        scan, features = sample_scan(world, device, place, rng, captured_at)
        if len(scan):
            return scan, features
    raise InvalidArgument(f"device {device.device_id} detects no AP at place {place}")


def populate_devices(world: World, profiles: Sequence[DeviceProfile], seed: int,
                     sim_threshold: float = DEFAULT_SIM_THRESHOLD) -> dict[str, LocalDatabase]:
    """Build every device's database by local learning over its coverage.

    Places are visited in a random order; a visit adds an entry (with the
    ground-truth label) only when ``is_new_location`` fires.
    """
    dbs = {}
    for prof in profiles:
        rng = stream(seed, "populate", prof.device_id)
        db = LocalDatabase(sim_threshold=sim_threshold)
        visits = sorted(prof.coverage)
        rng.shuffle(visits)
        for t, place in enumerate(visits):
            scan, features = sample_nonempty(world, prof, place, rng, captured_at=float(t))
            if is_new_location(db, scan, features):
                db.insert(Entry(scan, features, world.places[place].label, recorded_at=float(t)))
        dbs[prof.device_id] = db
    return dbs
