"""JSON wire formats: database dumps, provider responses and fused results.

Field names are documented in ``docs/schemas.md``; bump ``SCHEMA_VERSION``
whenever a field changes meaning.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional, Union

from collabloc.classifier import LabelDistribution
from collabloc.errors import InvalidArgument
from collabloc.fingerprint import Entry, FeatureVector, LocalDatabase, LocationLabel, WifiScan
from collabloc.fusion import ProviderResponse, Utility

SCHEMA_VERSION = 1


def scan_to_json(scan: WifiScan) -> dict:
    return {"aps": [[r.bssid, r.rssi_dbm] for r in scan.readings], "captured_at": scan.captured_at}


def scan_from_json(obj: dict) -> WifiScan:
    return WifiScan.from_pairs(((str(b), float(r)) for b, r in obj["aps"]), float(obj.get("captured_at", 0.0)))


def features_to_json(f: FeatureVector) -> dict:
    return {"numeric": dict(f.numeric), "categorical": dict(f.categorical)}


def features_from_json(obj: dict) -> FeatureVector:
    return FeatureVector({k: float(v) for k, v in obj.get("numeric", {}).items()},
                         {k: str(v) for k, v in obj.get("categorical", {}).items()})


def entry_to_json(e: Entry) -> dict:
    return {
        "aps": [[r.bssid, r.rssi_dbm] for r in e.scan.readings],
        "captured_at": e.scan.captured_at,
        "numeric": dict(e.features.numeric),
        "categorical": dict(e.features.categorical),
        "building": e.label.building,
        "room": e.label.room,
        "recorded_at": e.recorded_at,
    }


def entry_from_json(obj: dict) -> Entry:
    return Entry(scan_from_json(obj), features_from_json(obj),
                 LocationLabel(obj["building"], obj["room"]), float(obj.get("recorded_at", 0.0)))


def dump_database(db: LocalDatabase, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in db:
            fh.write(json.dumps(entry_to_json(e)) + "\n")


def load_database(path: Union[str, Path], **kwargs) -> LocalDatabase:
    db = LocalDatabase(**kwargs)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                db.insert(entry_from_json(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidArgument(f"{path}:{line_no}: bad entry ({exc})") from exc
    return db


def labels_to_json(labels: Iterable[tuple[LocationLabel, float]]) -> list:
    return [[l.building, l.room, p] for l, p in labels]


def labels_from_json(rows) -> list[tuple[LocationLabel, float]]:
    return [(LocationLabel(b, r), float(p)) for b, r, p in rows]


def response_to_json(resp: ProviderResponse) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "provider_id": resp.provider_id,
        "na": resp.is_na,
        "labels": [] if resp.is_na else labels_to_json(resp.labels),
        "utility": {"noise": resp.utility.noise_component, "time": resp.utility.time_component},
    }


def response_from_json(obj: dict) -> ProviderResponse:
    if obj.get("version") != SCHEMA_VERSION:
        raise InvalidArgument(f"unsupported response schema version {obj.get('version')!r}")
    util = obj.get("utility", {})
    utility = Utility(float(util.get("noise", 1.0)), float(util.get("time", 1.0)))
    labels = None if obj["na"] else labels_from_json(obj["labels"])
    return ProviderResponse(str(obj["provider_id"]), labels, utility)


def fused_to_json(dist: Optional[LabelDistribution], *, collaborators: int, iterations: int,
                  contacted: int, error: Optional[str] = None) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "na": dist is None,
        "labels": [] if dist is None else labels_to_json(dist.items()),
        "collaborators": collaborators,
        "iterations": iterations,
        "contacted": contacted,
        "error": error,
    }


def fused_from_json(obj: dict) -> tuple[Optional[LabelDistribution], dict]:
    if obj.get("version") != SCHEMA_VERSION:
        raise InvalidArgument(f"unsupported result schema version {obj.get('version')!r}")
    dist = None if obj["na"] else LabelDistribution(labels_from_json(obj["labels"]))
    meta = {k: obj.get(k) for k in ("collaborators", "iterations", "contacted", "error")}
    return dist, meta
