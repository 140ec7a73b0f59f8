"""Layered envelopes for onion routing over the PM overlay.

``ReferenceCodec`` is a stand-in cipher: a SHAKE-256 keystream with a keyed
BLAKE2b tag. It detects wrong keys and tampering, which is all the simulator
needs to enforce who can read what. It is not an audited construction; plug
a real AEAD in through the ``Codec`` protocol for anything beyond simulation.

Response sealing under a per-request key pair uses the same codec. With the
reference codec the "public" key is a hash of the private key, so holding
the public key would suffice to open; PMs in the simulator never try.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
from dataclasses import dataclass
from typing import NamedTuple, Optional, Protocol, Sequence

from collabloc.errors import InvalidArgument, UnsealError

MAGIC = b"CLO1"
_TAG_LEN = 8
_NONCE_LEN = 16
_MAC_LEN = 32


class Codec(Protocol):
    def seal_layer(self, key: bytes, plaintext: bytes, nonce: bytes) -> bytes: ...

    def open_layer(self, key: bytes, blob: bytes) -> bytes: ...


def _key_tag(key: bytes) -> bytes:
    return hashlib.sha256(b"tag" + key).digest()[:_TAG_LEN]


def _xor(data: bytes, stream: bytes) -> bytes:
    n = len(data)
    return (int.from_bytes(data, "big") ^ int.from_bytes(stream, "big")).to_bytes(n, "big")


class ReferenceCodec:
    def seal_layer(self, key: bytes, plaintext: bytes, nonce: bytes) -> bytes:
        if len(nonce) != _NONCE_LEN:
            raise InvalidArgument(f"nonce must be {_NONCE_LEN} bytes")
        stream = hashlib.shake_256(key + nonce).digest(len(plaintext))
        body = _xor(plaintext, stream)
        head = MAGIC + _key_tag(key) + nonce
        mac = hashlib.blake2b(head + body, key=key[:64], digest_size=_MAC_LEN).digest()
        return head + body + mac

    def open_layer(self, key: bytes, blob: bytes) -> bytes:
        head_len = len(MAGIC) + _TAG_LEN + _NONCE_LEN
        if len(blob) < head_len + _MAC_LEN or blob[:len(MAGIC)] != MAGIC:
            raise UnsealError("not a sealed layer")
        if not hmac.compare_digest(blob[len(MAGIC):len(MAGIC) + _TAG_LEN], _key_tag(key)):
            raise UnsealError("layer is sealed for a different key")
        head, body, mac = blob[:head_len], blob[head_len:-_MAC_LEN], blob[-_MAC_LEN:]
        expect = hashlib.blake2b(head + body, key=key[:64], digest_size=_MAC_LEN).digest()
        if not hmac.compare_digest(mac, expect):
            raise UnsealError("layer failed integrity check")
        nonce = head[-_NONCE_LEN:]
        stream = hashlib.shake_256(key + nonce).digest(len(body))
        return _xor(body, stream)


DEFAULT_CODEC = ReferenceCodec()


@dataclass(frozen=True)
class OnionEnvelope:
    blob: bytes

    def __len__(self):
        return len(self.blob)


class Layer(NamedTuple):
    """What one hop learns by opening its layer."""

    next_hop: Optional[str]
    envelope: Optional[OnionEnvelope]
    payload: Optional[bytes]


@dataclass(frozen=True)
class RequestKeyPair:
    private: bytes
    public: bytes

    @classmethod
    def generate(cls, entropy: Optional[bytes] = None) -> "RequestKeyPair":
        private = entropy if entropy is not None else os.urandom(32)
        return cls(private, public_from_private(private))


def public_from_private(private: bytes) -> bytes:
    return hashlib.sha256(b"pub" + private).digest()


def _frame(header: dict, body: bytes) -> bytes:
    return json.dumps(header, sort_keys=True).encode() + b"\n" + body


def _unframe(data: bytes) -> tuple[dict, bytes]:
    try:
        head, body = data.split(b"\n", 1)
        return json.loads(head), body
    except ValueError as exc:
        raise UnsealError("malformed layer") from exc


def seal(payload: bytes, hops: Sequence[tuple[str, bytes]], nonces: Optional[Sequence[bytes]] = None,
         codec: Codec = DEFAULT_CODEC) -> OnionEnvelope:
    """Wrap ``payload`` so that ``hops[i]`` can open only layer ``i``.

    ``hops`` lists ``(hop_id, key)`` in travel order; each layer names the
    next hop, the last one carries the payload.
    """
    if not hops:
        raise InvalidArgument("hop sequence is empty")
    if nonces is None:
        nonces = [os.urandom(_NONCE_LEN) for _ in hops]
    if len(nonces) != len(hops):
        raise InvalidArgument("need one nonce per hop")
    _, last_key = hops[-1]
    blob = codec.seal_layer(last_key, _frame({"next": None}, payload), nonces[-1])
    for i in range(len(hops) - 2, -1, -1):
        _, key = hops[i]
        blob = codec.seal_layer(key, _frame({"next": hops[i + 1][0]}, blob), nonces[i])
    return OnionEnvelope(blob)


def unseal(envelope: OnionEnvelope, hop_key: bytes, codec: Codec = DEFAULT_CODEC) -> Layer:
    header, body = _unframe(codec.open_layer(hop_key, envelope.blob))
    nxt = header.get("next")
    if nxt is None:
        return Layer(None, None, body)
    return Layer(str(nxt), OnionEnvelope(body), None)


def seal_response(payload: bytes, public_key: bytes, nonce: Optional[bytes] = None,
                  codec: Codec = DEFAULT_CODEC) -> bytes:
    return codec.seal_layer(public_key, payload, nonce if nonce is not None else os.urandom(_NONCE_LEN))


def open_response(blob: bytes, private_key: bytes, codec: Codec = DEFAULT_CODEC) -> bytes:
    return codec.open_layer(public_from_private(private_key), blob)
