"""Wi-Fi fingerprints, the cosine similarity measure and the local database.

Signal strengths are recorded in dBm but compared in linear milliwatts, so
the strongest access points dominate the similarity score.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

import numpy as np

from collabloc import kernels
from collabloc.errors import InvalidArgument

MAX_APS = 15
DEFAULT_SIM_THRESHOLD = 0.05
DEFAULT_NUMERIC_TOLERANCE = 0.10

_BSSID_CODES: dict[str, int] = {}


def _bssid_code(bssid: str) -> int:
    code = _BSSID_CODES.get(bssid)
    if code is None:
        code = len(_BSSID_CODES)
        _BSSID_CODES[bssid] = code
    return code


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=np.float64) / 10.0)


class LocationLabel(namedtuple("LocationLabel", ["building", "room"])):
    """A (building, room) pair; a tuple underneath so hashing stays cheap."""

    __slots__ = ()

    def __new__(cls, building: str, room: str):
        if not building or not room:
            raise InvalidArgument("location label needs a building and a room")
        return super().__new__(cls, building, room)

    def __str__(self):
        return f"{self.building}/{self.room}"


@dataclass(frozen=True)
class AccessPointReading:
    bssid: str
    rssi_dbm: float

    def __post_init__(self):
        if not self.bssid:
            raise InvalidArgument("empty bssid")
        if not (-100.0 <= self.rssi_dbm <= 0.0):
            raise InvalidArgument(f"rssi {self.rssi_dbm} dBm outside [-100, 0]")


@dataclass(frozen=True)
class WifiScan:
    """An observed access-point list.

    ``readings`` keeps capture order; bssids must be distinct and at most
    ``MAX_APS`` readings are allowed.
    """

    readings: tuple[AccessPointReading, ...]
    captured_at: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "readings", tuple(self.readings))
        if len(self.readings) > MAX_APS:
            raise InvalidArgument(f"scan holds {len(self.readings)} APs, limit is {MAX_APS}")
        seen = {r.bssid for r in self.readings}
        if len(seen) != len(self.readings):
            raise InvalidArgument("duplicate bssid in scan")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float]], captured_at: float = 0.0) -> "WifiScan":
        return cls(tuple(AccessPointReading(b, float(r)) for b, r in pairs), captured_at)

    @classmethod
    def strongest(cls, pairs: Iterable[tuple[str, float]], captured_at: float = 0.0,
                  limit: int = MAX_APS) -> "WifiScan":
        """Build a scan from the ``limit`` strongest readings, strongest first."""
        ranked = sorted(pairs, key=lambda p: (-p[1], p[0]))[:limit]
        return cls.from_pairs(ranked, captured_at)

    def __len__(self):
        return len(self.readings)

    @property
    def bssids(self) -> frozenset[str]:
        return frozenset(r.bssid for r in self.readings)

    @cached_property
    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """(sorted bssid codes, linear power in mW) for the kernels."""
        codes = np.fromiter((_bssid_code(r.bssid) for r in self.readings), dtype=np.int64,
                            count=len(self.readings))
        mw = dbm_to_mw([r.rssi_dbm for r in self.readings]) if self.readings else np.zeros(0)
        order = np.argsort(codes, kind="stable")
        return np.ascontiguousarray(codes[order]), np.ascontiguousarray(mw[order], dtype=np.float64)


@dataclass(frozen=True)
class FeatureVector:
    """Additional (non Wi-Fi) location features.

    ``numeric`` holds sound level (amplitude counts) and cell signal (dBm);
    ``categorical`` holds opaque codes such as the cell tower id and LAC.
    """

    numeric: Mapping[str, float] = field(default_factory=dict)
    categorical: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.numeric.items():
            if not math.isfinite(value):
                raise InvalidArgument(f"numeric feature {name!r} is not finite")

    @property
    def schema(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return tuple(sorted(self.numeric)), tuple(sorted(self.categorical))


@dataclass(frozen=True)
class Entry:
    scan: WifiScan
    features: FeatureVector
    label: LocationLabel
    recorded_at: float = 0.0


def _check_scan(scan: WifiScan) -> None:
    if len(scan) == 0:
        raise InvalidArgument("similarity needs a non-empty scan")


def cosine_similarity(a: WifiScan, b: WifiScan) -> float:
    """Cosine similarity of two scans over linear power, in [0, 1].

    Only access points present in both scans contribute to the numerator;
    the norms run over every reading of each scan.
    """
    _check_scan(a)
    _check_scan(b)
    a_ids, a_mw = a.packed
    b_ids, b_mw = b.packed
    offsets = np.array([0, len(b_ids)], dtype=np.int64)
    return float(kernels.batch_cosine(a_ids, a_mw, b_ids, b_mw, offsets)[0])


class LocalDatabase:
    """A device's append-only store of labeled fingerprints."""

    def __init__(self, entries: Iterable[Entry] = (), sim_threshold: float = DEFAULT_SIM_THRESHOLD,
                 numeric_tolerance: float = DEFAULT_NUMERIC_TOLERANCE,
                 schema: Optional[tuple[tuple[str, ...], tuple[str, ...]]] = None):
        if not (0.0 < sim_threshold < 1.0):
            raise InvalidArgument("sim_threshold must lie in (0, 1)")
        if numeric_tolerance < 0:
            raise InvalidArgument("numeric_tolerance must be non-negative")
        self.sim_threshold = float(sim_threshold)
        self.numeric_tolerance = float(numeric_tolerance)
        self.schema = schema
        self._entries: list[Entry] = []
        self._packed = None
        # fitted per-matched-set models; indices stay valid because entries only grow
        self.model_cache: dict = {}
        for e in entries:
            self.insert(e)

    @property
    def entries(self) -> tuple[Entry, ...]:
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, i) -> Entry:
        return self._entries[i]

    def __iter__(self):
        return iter(self._entries)

    @property
    def labels(self) -> list[LocationLabel]:
        """Distinct labels in insertion order."""
        return list(dict.fromkeys(e.label for e in self._entries))

    def check_schema(self, features: FeatureVector) -> None:
        if self.schema is not None and features.schema != self.schema:
            raise InvalidArgument(f"feature schema {features.schema} does not match database {self.schema}")

    def insert(self, entry: Entry) -> "LocalDatabase":
        self.check_schema(entry.features)
        if self.schema is None:
            self.schema = entry.features.schema
        self._entries.append(entry)
        self._packed = None
        return self

    def _pack(self):
        if self._packed is None:
            parts = [e.scan.packed for e in self._entries]
            lengths = [len(p[0]) for p in parts]
            offsets = np.zeros(len(parts) + 1, dtype=np.int64)
            np.cumsum(lengths, out=offsets[1:])
            if parts:
                ids = np.ascontiguousarray(np.concatenate([p[0] for p in parts]), dtype=np.int64)
                mw = np.ascontiguousarray(np.concatenate([p[1] for p in parts]), dtype=np.float64)
            else:
                ids = np.zeros(0, dtype=np.int64)
                mw = np.zeros(0, dtype=np.float64)
            self._packed = (ids, mw, offsets)
        return self._packed

    def similarities(self, scan: WifiScan) -> np.ndarray:
        """Similarity of ``scan`` against every entry, in entry order."""
        _check_scan(scan)
        ids, mw, offsets = self._pack()
        q_ids, q_mw = scan.packed
        return kernels.batch_cosine(q_ids, q_mw, ids, mw, offsets)


def match_entries(db: LocalDatabase, scan: WifiScan) -> list[tuple[int, float]]:
    """Indices of entries sharing at least one AP with ``scan``, with their similarity."""
    sims = db.similarities(scan)
    return [(int(i), float(sims[i])) for i in np.flatnonzero(sims > 0.0)]


def features_differ(a: FeatureVector, b: FeatureVector, tolerance: float = DEFAULT_NUMERIC_TOLERANCE) -> bool:
    for name, va in a.categorical.items():
        if b.categorical[name] != va:
            return True
    for name, va in a.numeric.items():
        vb = b.numeric[name]
        scale = max(abs(va), abs(vb))
        if scale > 0 and abs(va - vb) > tolerance * scale:
            return True
    return False


def is_new_location(db: LocalDatabase, scan: WifiScan, features: FeatureVector) -> bool:
    """Decide whether a fingerprint describes a place the database lacks.

    New when the best similarity is below the database threshold, or when
    the best-matching entry (lowest index on ties) disagrees on some
    additional feature.
    """
    db.check_schema(features)
    if len(db) == 0:
        return True
    sims = db.similarities(scan)
    best = int(np.argmax(sims))
    if sims[best] < db.sim_threshold:
        return True
    return features_differ(features, db[best].features, db.numeric_tolerance)


def insert_entry(db: LocalDatabase, entry: Entry) -> LocalDatabase:
    return db.insert(entry)
