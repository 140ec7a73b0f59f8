"""Discrete-event simulation of onion-routed location requests.

A request travels requester -> Country PM -> ... -> CTPM inside an onion
envelope; the CTPM collects provider answers, fuses them and seals the
result under the request's public key, and the sealed blob retraces the
same hops back. Every hop appends what it saw to the trace, which
``verify_trace`` checks against the privacy contract.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol

import numpy as np

from collabloc import io
from collabloc.classifier import LabelDistribution
from collabloc.errors import InvalidArgument, NoInformation, RoutingError, UnsealError
from collabloc.fingerprint import FeatureVector, WifiScan
from collabloc.fusion import ACCEPT_THRESHOLD, ProviderResponse, UtilityBook, accept_label, weighted_average_fusion
from collabloc.overlay import codec as onion
from collabloc.overlay.collect import batches, default_initial_pick
from collabloc.overlay.topology import Overlay
from collabloc.privacy import TopK

# keys a non-terminal hop may record
HOP_FIELDS = frozenset({"from", "to", "circuit", "bytes", "error"})


@dataclass(frozen=True)
class LocationRequest:
    scan: WifiScan
    features: FeatureVector
    tower: str
    public_key: bytes

    def to_bytes(self) -> bytes:
        return json.dumps({
            "scan": io.scan_to_json(self.scan),
            "features": io.features_to_json(self.features),
            "tower": self.tower,
            "public_key": self.public_key.hex(),
        }, sort_keys=True).encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LocationRequest":
        obj = json.loads(data)
        return cls(io.scan_from_json(obj["scan"]), io.features_from_json(obj["features"]),
                   obj["tower"], bytes.fromhex(obj["public_key"]))


class ProviderAgent(Protocol):
    provider_id: str

    def answer(self, request: LocationRequest) -> Optional[TopK]: ...


@dataclass
class RouteResult:
    request_id: str
    distribution: Optional[LabelDistribution]
    hop_path: list[str]
    iterations: int = 0
    collaborators: int = 0
    contacted: int = 0
    error: Optional[str] = None
    hops_travelled: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None and self.distribution is not None

    def raise_for_error(self) -> LabelDistribution:
        """The fused distribution, or the typed error that came back instead."""
        if self.error is None and self.distribution is not None:
            return self.distribution
        if self.error is not None and self.error.startswith("no-information"):
            raise NoInformation(self.error)
        raise RoutingError(self.error or "no distribution returned")


# --- messages ------------------------------------------------------------------

@dataclass
class _Forward:
    circuit: str
    envelope: onion.OnionEnvelope
    sender: str


@dataclass
class _Backward:
    circuit: str
    blob: bytes
    sender: str
    error: Optional[str] = None


@dataclass
class _Query:
    circuit: str
    ctpm: str
    request: LocationRequest


@dataclass
class _Answer:
    circuit: str
    provider_id: str
    labels: Optional[TopK]


@dataclass
class _Collection:
    request: LocationRequest
    prev_hop: str
    batches: object
    l: int
    answers: list = field(default_factory=list)
    outstanding: int = 0
    iterations: int = 0
    contacted: int = 0


class OverlaySimulator:
    """Single-threaded event loop over one overlay.

    ``providers`` maps provider ids to agents answering location requests.
    ``l`` is the number of non-NA answers a CTPM waits for; ``j0`` the first
    pick size (default ``ceil(l / 2)``).
    """

    def __init__(self, overlay: Overlay, providers: Mapping[str, ProviderAgent], *, l: int = 3,
                 j0: Optional[int] = None, seed: int = 0, utilities: Optional[UtilityBook] = None,
                 latency: float = 1.0, codec: onion.Codec = onion.DEFAULT_CODEC,
                 learn_utilities: bool = False):
        if l < 1:
            raise InvalidArgument("l must be at least 1")
        self.overlay = overlay
        self.providers = dict(providers)
        self.l = l
        self.j0 = j0
        self.rng = np.random.default_rng(seed)
        self.utilities = utilities if utilities is not None else UtilityBook()
        self.latency = latency
        self.codec = codec
        self.learn_utilities = learn_utilities
        self.trace: list[dict] = []
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self._ids = itertools.count()
        self._circuits: dict[tuple[str, str], str] = {}
        self._collections: dict[str, _Collection] = {}
        self._inbox: dict[str, tuple[Optional[bytes], Optional[str]]] = {}
        self._keys: dict[str, onion.RequestKeyPair] = {}
        self._hops: dict[str, int] = {}

    # -- plumbing --

    def _send(self, dst: str, msg) -> None:
        heapq.heappush(self._queue, (self.now + self.latency, next(self._seq), dst, msg))

    def _observe(self, request_id: str, node_id: str, direction: str, seen: dict) -> None:
        node = self.overlay.nodes[node_id]
        self.trace.append({
            "type": "hop", "request": request_id, "time": self.now, "node": node_id,
            "level": node.level.name, "terminal": node.is_ctpm, "direction": direction,
            "observed": seen,
        })

    def run(self) -> None:
        while self._queue:
            self.now, _, dst, msg = heapq.heappop(self._queue)
            if isinstance(msg, (_Forward, _Backward)) and dst in self.overlay.nodes:
                self._hops[msg.circuit] = self._hops.get(msg.circuit, 0) + 1
            if dst in self.overlay.nodes:
                self._on_pm(dst, msg)
            elif isinstance(msg, _Query):
                self._on_provider(dst, msg)
            else:
                self._on_requester(dst, msg)

    # -- requester side --

    def pick_path(self, tower: str, rng: Optional[np.random.Generator] = None) -> list[str]:
        """One uniformly chosen replica per level, country first."""
        rng = self.rng if rng is None else rng
        path = []
        for region in self.overlay.region_path(tower):
            replicas = self.overlay.replicas[region.path]
            path.append(replicas[int(rng.integers(len(replicas)))])
        return path

    def route_request(self, requester_id: str, scan: WifiScan, features: FeatureVector, tower: str,
                      rng: Optional[np.random.Generator] = None) -> RouteResult:
        rng = self.rng if rng is None else rng
        try:
            tower_path = self.overlay.tower(tower).path
        except InvalidArgument as exc:
            raise RoutingError(f"cannot route to {tower!r}: {exc}") from None
        circuit = f"c{next(self._ids):06d}-{rng.bytes(4).hex()}"
        keys = onion.RequestKeyPair.generate(rng.bytes(32))
        self._keys[circuit] = keys
        request = LocationRequest(scan, features, tower_path, keys.public)
        path = self.pick_path(tower_path, rng)
        hops = [(n, self.overlay.key_of(n)) for n in path]
        nonces = [rng.bytes(16) for _ in hops]
        envelope = onion.seal(request.to_bytes(), hops, nonces, self.codec)
        self.trace.append({
            "type": "request", "request": circuit, "requester": requester_id, "tower": tower_path,
            "path": path, "features": io.features_to_json(features), "scan": io.scan_to_json(scan),
        })
        self._send(path[0], _Forward(circuit, envelope, requester_id))
        self.run()
        blob, error = self._inbox.pop(circuit, (None, "lost"))
        result = RouteResult(circuit, None, path, hops_travelled=self._hops.pop(circuit, 0))
        if error is not None:
            result.error = error
        else:
            payload = json.loads(onion.open_response(blob, keys.private, self.codec))
            dist, meta = io.fused_from_json(payload)
            result.distribution = dist
            result.iterations = meta["iterations"] or 0
            result.collaborators = meta["collaborators"] or 0
            result.contacted = meta["contacted"] or 0
            result.error = meta["error"]
        self.trace.append({
            "type": "result", "request": circuit, "error": result.error,
            "labels": [] if result.distribution is None else io.labels_to_json(result.distribution.items()),
            "iterations": result.iterations, "collaborators": result.collaborators,
        })
        del self._keys[circuit]
        return result

    def _on_requester(self, requester_id: str, msg) -> None:
        if isinstance(msg, _Backward):
            self._inbox[msg.circuit] = (msg.blob, msg.error)

    # -- PM side --

    def _on_pm(self, node_id: str, msg) -> None:
        node = self.overlay.nodes[node_id]
        if isinstance(msg, _Forward):
            self._pm_forward(node_id, msg)
        elif isinstance(msg, _Backward):
            prev = self._circuits.pop((node_id, msg.circuit), None)
            self._observe(msg.circuit, node_id, "backward", {"from": msg.sender, "to": prev,
                                                                "circuit": msg.circuit, "bytes": len(msg.blob),
                                                                "error": msg.error})
            if prev is not None:
                self._send(prev, _Backward(msg.circuit, msg.blob, node_id, msg.error))
        elif isinstance(msg, _Answer) and node.is_ctpm:
            self._ctpm_answer(node_id, msg)

    def _pm_forward(self, node_id: str, msg: _Forward) -> None:
        node = self.overlay.nodes[node_id]
        try:
            layer = onion.unseal(msg.envelope, node.key, self.codec)
        except UnsealError as exc:
            self._observe(msg.circuit, node_id, "forward", {"from": msg.sender, "circuit": msg.circuit,
                                                              "bytes": len(msg.envelope), "error": "unseal"})
            self._send(msg.sender, _Backward(msg.circuit, b"", node_id, f"unseal failed at {node_id}: {exc}"))
            return
        if layer.next_hop is not None:
            nxt = layer.next_hop
            self._observe(msg.circuit, node_id, "forward", {"from": msg.sender, "to": nxt,
                                                              "circuit": msg.circuit, "bytes": len(msg.envelope)})
            if nxt not in node.children or nxt in self.overlay.down:
                err = f"unreachable next hop from {node_id}"
                self._send(msg.sender, _Backward(msg.circuit, b"", node_id, err))
                return
            self._circuits[(node_id, msg.circuit)] = msg.sender
            self._send(nxt, _Forward(msg.circuit, layer.envelope, node_id))
            return
        if not node.is_ctpm:
            self._send(msg.sender, _Backward(msg.circuit, b"", node_id, f"payload reached non-CTPM {node_id}"))
            return
        request = LocationRequest.from_bytes(layer.payload)
        # terminal hop: the CTPM is allowed to see the request features
        self._observe(msg.circuit, node_id, "forward", {"from": msg.sender, "circuit": msg.circuit,
                                                          "bytes": len(msg.envelope),
                                                          "features": io.features_to_json(request.features)})
        j0 = self.j0 if self.j0 is not None else default_initial_pick(self.l)
        coll = _Collection(request, msg.sender, batches(list(node.repository), j0, self.rng), self.l)
        self._collections[msg.circuit] = coll
        self._next_batch(node_id, msg.circuit)

    def _next_batch(self, node_id: str, circuit: str) -> None:
        coll = self._collections[circuit]
        batch = next(coll.batches, None) if len(coll.answers) < coll.l else None
        if batch is None:
            self._finish(node_id, circuit)
            return
        coll.iterations += 1
        coll.outstanding = len(batch)
        coll.contacted += len(batch)
        for pid in batch:
            self._send(pid, _Query(circuit, node_id, coll.request))

    def _on_provider(self, provider_id: str, msg: _Query) -> None:
        agent = self.providers.get(provider_id)
        labels = agent.answer(msg.request) if agent is not None else None
        self._send(msg.ctpm, _Answer(msg.circuit, provider_id, labels))

    def _ctpm_answer(self, node_id: str, msg: _Answer) -> None:
        coll = self._collections.get(msg.circuit)
        if coll is None:
            return
        if msg.labels is not None:
            coll.answers.append(ProviderResponse(msg.provider_id, msg.labels,
                                                 self.utilities.utility(msg.provider_id)))
        coll.outstanding -= 1
        if coll.outstanding == 0:
            self._next_batch(node_id, msg.circuit)

    def _finish(self, node_id: str, circuit: str) -> None:
        coll = self._collections.pop(circuit)
        error = None
        dist = None
        try:
            dist = weighted_average_fusion(coll.answers)
        except NoInformation as exc:
            error = f"no-information: {exc}"
        if dist is not None and self.learn_utilities:
            accepted = accept_label(dist, ACCEPT_THRESHOLD)
            if accepted is not None:
                self.utilities.record(coll.answers, accepted)
        self.trace.append({"type": "collect", "request": circuit, "node": node_id, "r": coll.iterations,
                           "contacted": coll.contacted, "non_na": len(coll.answers)})
        payload = io.fused_to_json(dist, collaborators=len(coll.answers), iterations=coll.iterations,
                                   contacted=coll.contacted, error=error)
        blob = onion.seal_response(json.dumps(payload).encode(), coll.request.public_key,
                                   self.rng.bytes(16), self.codec)
        self._send(coll.prev_hop, _Backward(circuit, blob, node_id))


# --- privacy contract ------------------------------------------------------------

def _secret_tokens(request_record: dict, result_record: Optional[dict]) -> set[str]:
    tokens = set()
    for bssid, rssi in request_record["scan"]["aps"]:
        tokens.add(str(bssid))
    feats = request_record["features"]
    for v in feats.get("categorical", {}).values():
        tokens.add(str(v))
    for v in feats.get("numeric", {}).values():
        tokens.add(repr(float(v)))
    if result_record:
        for b, r, _ in result_record.get("labels", []):
            tokens.add(f"{b}/{r}")
            tokens.add(json.dumps([b, r])[1:-1])
    return tokens


def verify_trace(records: list[dict]) -> list[str]:
    """Privacy-contract violations found in a trace; empty means it holds.

    A non-terminal hop may only record the fields in ``HOP_FIELDS`` and none
    of them may contain a request feature or a result label. Each request
    must also end in a result within ``2 * depth`` hop visits.
    """
    requests = {r["request"]: r for r in records if r["type"] == "request"}
    results = {r["request"]: r for r in records if r["type"] == "result"}
    violations = []
    visits: dict[str, int] = {}
    for rec in records:
        if rec["type"] != "hop":
            continue
        rid = rec["request"]
        visits[rid] = visits.get(rid, 0) + 1
        if rec["terminal"] and rec["direction"] == "forward":
            continue
        extra = set(rec["observed"]) - HOP_FIELDS
        if extra:
            violations.append(f"{rid}: {rec['node']} recorded fields {sorted(extra)}")
        if rid in requests:
            text = json.dumps(rec["observed"], sort_keys=True)
            for tok in _secret_tokens(requests[rid], results.get(rid)):
                if tok and tok in text:
                    violations.append(f"{rid}: {rec['node']} observed {tok!r}")
    for rid, req in requests.items():
        if rid not in results:
            violations.append(f"{rid}: no result recorded")
        depth = len(req["path"])
        if visits.get(rid, 0) > 2 * depth:
            violations.append(f"{rid}: {visits[rid]} hop visits exceeds {2 * depth}")
    return violations


def write_trace(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def simulate_country_load(overlay: Overlay, n_requesters: int, weekly_requests: int,
                          rng: np.random.Generator, days: int = 7) -> dict[str, float]:
    """Mean requests per day seen by each Country PM over one week.

    Each requester issues ``weekly_requests`` requests on uniformly drawn
    days and enters the overlay at a uniformly chosen Country PM replica.
    """
    countries = overlay.replicas[overlay.root.path]
    total = n_requesters * weekly_requests
    picks = rng.integers(len(countries), size=total)
    counts = np.bincount(picks, minlength=len(countries))
    return {node: counts[i] / days for i, node in enumerate(countries)}
