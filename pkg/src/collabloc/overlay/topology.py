"""The Phone Master hierarchy: regions, replicated PM nodes and repositories."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from collabloc.errors import InvalidArgument
from collabloc.regions import TOP_DOWN, Level

log = logging.getLogger(__name__)


@dataclass
class Region:
    name: str
    level: Level
    children: list["Region"] = field(default_factory=list)
    parent: Optional["Region"] = field(default=None, repr=False, compare=False)

    @property
    def path(self) -> str:
        return self.name if self.parent is None else f"{self.parent.path}/{self.name}"

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def towers(self) -> list["Region"]:
        return [r for r in self.walk() if r.level == Level.CELL_TOWER]

    def ancestor(self, level: Level) -> "Region":
        node = self
        while node.level < level:
            node = node.parent
        return node


def region_tree(spec: Mapping) -> Region:
    """Build a region tree from nested ``{"name": ..., "children": [...]}`` dicts.

    The root is a country and every child sits exactly one level below its
    parent, down to cell towers.
    """
    def build(node: Mapping, level: Level, parent: Optional[Region]) -> Region:
        if not isinstance(node, Mapping) or not node.get("name"):
            raise InvalidArgument(f"region at level {level.name} needs a name")
        region = Region(str(node["name"]), level, parent=parent)
        kids = node.get("children") or []
        if level == Level.CELL_TOWER:
            if kids:
                raise InvalidArgument(f"cell tower {region.name} cannot have children")
            return region
        if not kids:
            raise InvalidArgument(f"{level.name} region {region.name} has no children")
        seen = set()
        for k in kids:
            child = build(k, Level(level - 1), region)
            if child.name in seen:
                raise InvalidArgument(f"duplicate region {child.name} under {region.name}")
            seen.add(child.name)
            region.children.append(child)
        return region

    return build(spec, Level.COUNTRY, None)


@dataclass
class PmNode:
    node_id: str
    level: Level
    region: str
    key: bytes = field(repr=False)
    children: list[str] = field(default_factory=list)
    repository: list[str] = field(default_factory=list)

    @property
    def is_ctpm(self) -> bool:
        return self.level == Level.CELL_TOWER


class Overlay:
    """Overlay state: PM replicas per region and the CTPM repositories.

    Replicas of one cell tower share a single repository list, so every
    CTPM replica sees the same providers.
    """

    def __init__(self, root: Region, replication: Mapping[Level, int], key_seed: int = 0):
        self.root = root
        self.replication = dict(replication)
        self.regions: dict[str, Region] = {r.path: r for r in root.walk()}
        self.nodes: dict[str, PmNode] = {}
        self.replicas: dict[str, list[str]] = {}
        self.repositories: dict[str, list[str]] = {}
        self.home: dict[str, tuple[str, Level]] = {}
        self.down: set[str] = set()
        for region in root.walk():
            ids = []
            repo = self.repositories.setdefault(region.path, []) if region.level == Level.CELL_TOWER else None
            for i in range(self.replication[region.level]):
                node_id = f"{region.path}#{i}"
                key = hashlib.sha256(f"{key_seed}:{node_id}".encode()).digest()
                node = PmNode(node_id, region.level, region.path, key)
                if repo is not None:
                    node.repository = repo
                self.nodes[node_id] = node
                ids.append(node_id)
            self.replicas[region.path] = ids
        for region in root.walk():
            child_ids = [n for c in region.children for n in self.replicas[c.path]]
            for node_id in self.replicas[region.path]:
                self.nodes[node_id].children = list(child_ids)

    @property
    def towers(self) -> list[str]:
        return [r.path for r in self.root.towers()]

    def tower(self, tower: str) -> Region:
        region = self.regions.get(tower)
        if region is None:
            # accept a bare tower name when it is unambiguous
            hits = [r for r in self.root.towers() if r.name == tower]
            if len(hits) == 1:
                return hits[0]
            raise InvalidArgument(f"unknown cell tower {tower!r}")
        if region.level != Level.CELL_TOWER:
            raise InvalidArgument(f"{tower!r} is not a cell tower")
        return region

    def region_path(self, tower: str) -> list[Region]:
        """Regions from the country down to ``tower``."""
        region = self.tower(tower)
        chain = []
        while region is not None:
            chain.append(region)
            region = region.parent
        return chain[::-1]

    def key_of(self, node_id: str) -> bytes:
        return self.nodes[node_id].key

    def count_of(self, level: Level) -> int:
        return sum(1 for n in self.nodes.values() if n.level == level)

    def area_towers(self, tower: str, area_level: Level) -> list[str]:
        return [t.path for t in self.tower(tower).ancestor(Level.parse(area_level)).towers()]

    def repository_count(self, provider_id: str) -> int:
        return sum(repo.count(provider_id) for repo in self.repositories.values())


def build_hierarchy(topology: Mapping | Region, replication: Mapping | Iterable[int] = None,
                    key_seed: int = 0) -> Overlay:
    """Create PM replicas for every region of ``topology``.

    ``replication`` maps each level to its replica count, or is a sequence
    ordered country-first.
    """
    root = topology if isinstance(topology, Region) else region_tree(topology)
    if replication is None:
        counts = {lvl: 1 for lvl in Level}
    elif isinstance(replication, Mapping):
        counts = {Level.parse(k): int(v) for k, v in replication.items()}
    else:
        values = list(replication)
        if len(values) != len(TOP_DOWN):
            raise InvalidArgument("replication needs one count per level")
        counts = dict(zip(TOP_DOWN, (int(v) for v in values)))
    missing = [lvl.name for lvl in Level if lvl not in counts]
    if missing:
        raise InvalidArgument(f"replication missing for {missing}")
    if any(v < 1 for v in counts.values()):
        raise InvalidArgument("replica counts must be at least 1")
    ordered = [counts[lvl] for lvl in TOP_DOWN]
    if any(lo > hi for hi, lo in zip(ordered, ordered[1:])):
        log.warning("replication grows toward lower levels: %s", ordered)
    return Overlay(root, counts, key_seed)


def register_provider(overlay: Overlay, provider_id: str, home_tower: str, area_level) -> Overlay:
    """List ``provider_id`` in every CTPM repository of its area-level region.

    A provider has exactly one home tower; registering again moves it.
    """
    level = Level.parse(area_level)
    targets = overlay.area_towers(home_tower, level)
    if provider_id in overlay.home:
        for repo in overlay.repositories.values():
            while provider_id in repo:
                repo.remove(provider_id)
    for t in targets:
        overlay.repositories[t].append(provider_id)
    overlay.home[provider_id] = (overlay.tower(home_tower).path, level)
    return overlay
