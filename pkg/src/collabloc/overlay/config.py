"""Topology config files: region tree, replica counts and provider placement.

Example::

    key_seed: 0
    replication: {Country: 2, State: 1, County: 1, City: 2, CellTower: 1}
    regions:
      name: Country
      children:
        - name: State
          children: [...]
    providers:
      - {id: P0, home: Tower-0, area_level: City}
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Union

import yaml

from collabloc.errors import InvalidArgument
from collabloc.overlay.topology import Overlay, build_hierarchy, register_provider

TOPOLOGY_KEYS = {"regions", "replication", "providers", "key_seed"}


def overlay_from_config(cfg: Mapping) -> Overlay:
    unknown = set(cfg) - TOPOLOGY_KEYS
    if unknown:
        raise InvalidArgument(f"unknown topology keys {sorted(unknown)}")
    if "regions" not in cfg:
        raise InvalidArgument("topology config needs a region tree under 'regions'")
    overlay = build_hierarchy(cfg["regions"], cfg.get("replication"), int(cfg.get("key_seed", 0)))
    for p in cfg.get("providers") or []:
        try:
            register_provider(overlay, str(p["id"]), str(p["home"]), p.get("area_level", "CellTower"))
        except KeyError as exc:
            raise InvalidArgument(f"provider entry {p!r} lacks {exc}") from None
    return overlay


def load_topology(path: Union[str, Path]) -> Overlay:
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, Mapping):
        raise InvalidArgument(f"{path}: topology config must be a mapping")
    return overlay_from_config(cfg)


def topology_config(overlay: Overlay) -> dict:
    """Inverse of ``overlay_from_config`` (key seed aside)."""
    def tree(region):
        node = {"name": region.name}
        if region.children:
            node["children"] = [tree(c) for c in region.children]
        return node

    return {
        "regions": tree(overlay.root),
        "replication": {lvl.name: n for lvl, n in sorted(overlay.replication.items(), reverse=True)},
        "providers": [{"id": pid, "home": home, "area_level": lvl.name}
                      for pid, (home, lvl) in sorted(overlay.home.items())],
    }
