"""Phone Master overlay: hierarchy, onion envelopes, CTPM collection and the event loop."""

from collabloc.overlay.codec import (
    OnionEnvelope,
    ReferenceCodec,
    RequestKeyPair,
    open_response,
    seal,
    seal_response,
    unseal,
)
from collabloc.overlay.collect import (
    CollectionExhausted,
    all_na_iterations,
    ctpm_collect,
    default_initial_pick,
    expected_iterations,
)
from collabloc.overlay.network import (
    LocationRequest,
    OverlaySimulator,
    RouteResult,
    simulate_country_load,
    verify_trace,
)
from collabloc.overlay.topology import Overlay, PmNode, Region, build_hierarchy, region_tree, register_provider

__all__ = [
    "CollectionExhausted", "LocationRequest", "OnionEnvelope", "Overlay", "OverlaySimulator", "PmNode",
    "ReferenceCodec", "Region", "RequestKeyPair", "RouteResult", "all_na_iterations", "build_hierarchy",
    "ctpm_collect", "default_initial_pick", "expected_iterations", "open_response", "region_tree",
    "register_provider", "seal", "seal_response", "simulate_country_load", "unseal", "verify_trace",
]
