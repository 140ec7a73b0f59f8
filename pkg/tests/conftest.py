import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from collabloc.fingerprint import Entry, FeatureVector, LocalDatabase, LocationLabel, WifiScan  # noqa: E402
from collabloc.sim.world import WorldConfig, generate_world  # noqa: E402


def scan(**aps) -> WifiScan:
    return WifiScan.from_pairs(aps.items())


def feats(sound=500.0, cell=-70.0, tower="t1", lac="l1") -> FeatureVector:
    return FeatureVector({"sound_level": sound, "cell_signal_dbm": cell}, {"cell_tower_id": tower, "lac": lac})


def label(b, r="R1") -> LocationLabel:
    return LocationLabel(b, r)


def random_entry(rng: np.random.Generator, n_aps=40, label_count=8) -> Entry:
    k = int(rng.integers(1, 8))
    ids = rng.choice(n_aps, size=k, replace=False)
    pairs = [(f"ap{i}", float(np.round(rng.uniform(-95, -30), 1))) for i in ids]
    lab = LocationLabel(f"B{int(rng.integers(label_count))}", "R")
    return Entry(WifiScan.from_pairs(pairs), feats(float(rng.uniform(100, 900)), float(rng.uniform(-90, -60))), lab)


@pytest.fixture
def small_db() -> LocalDatabase:
    """Four entries over three labels; AP sets overlap in a known way."""
    db = LocalDatabase()
    db.insert(Entry(scan(A=-40, B=-60), feats(400, -70), label("B1", "R1")))
    db.insert(Entry(scan(B=-50, C=-55), feats(900, -75), label("B1", "R2")))
    db.insert(Entry(scan(C=-45, D=-65), feats(400, -70, "t2"), label("B2", "R1")))
    db.insert(Entry(scan(E=-40), feats(4000, -80), label("B3", "R1")))
    return db


@pytest.fixture(scope="session")
def tiny_world():
    return generate_world(WorldConfig(n_buildings=6, campus_buildings=2, public_labels_per_tower=300,
                                      test_places=6, seed=11))
