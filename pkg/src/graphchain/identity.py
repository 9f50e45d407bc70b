"""Keys, addresses, signatures and the one hash function used everywhere.

Signatures are Ed25519 (32-byte keys, deterministic per key and message), so
every simulation replays bit-exactly. Addresses are the SHA-256 digest of the
raw public key.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

KEY_SIZE = 32
DIGEST_SIZE = 32
SIGNATURE_SIZE = 64

Digest = bytes
Address = bytes
Signature = bytes


class MalformedKey(ValueError):
    pass


def digest(*parts: bytes) -> Digest:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


@dataclass(frozen=True)
class Keypair:
    private_key: bytes
    public_key: bytes

    @property
    def address(self) -> Address:
        return address_of(self.public_key)

    def sign(self, message: bytes) -> Signature:
        return sign(self.private_key, message)


@lru_cache(maxsize=4096)
def _private(private_key: bytes) -> ed25519.Ed25519PrivateKey:
    return ed25519.Ed25519PrivateKey.from_private_bytes(private_key)


@lru_cache(maxsize=4096)
def _public(public_key: bytes) -> ed25519.Ed25519PublicKey:
    return ed25519.Ed25519PublicKey.from_public_bytes(public_key)


def generate_keypair(seed: bytes | None = None) -> Keypair:
    """Create a keypair; a 32-byte ``seed`` makes it fully deterministic."""
    if seed is None:
        seed = os.urandom(KEY_SIZE)
    if len(seed) != KEY_SIZE:
        raise MalformedKey(f"seed must be {KEY_SIZE} bytes, got {len(seed)}")
    public = _private(bytes(seed)).public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return Keypair(private_key=bytes(seed), public_key=public)


def address_of(public_key: bytes) -> Address:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != KEY_SIZE:
        raise MalformedKey("public key must be 32 bytes")
    try:
        _public(bytes(public_key))
    except ValueError as exc:
        raise MalformedKey(str(exc)) from exc
    return digest(bytes(public_key))


def sign(private_key: bytes, message: bytes) -> Signature:
    return _private(bytes(private_key)).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is the matching key's signature over ``message``.

    Malformed keys or signatures are a rejection, never an exception.
    """
    try:
        return _verify(bytes(public_key), bytes(message), bytes(signature))
    except TypeError:
        return False


# pure in its arguments, and histories re-verify the same blocks often
@lru_cache(maxsize=1 << 16)
def _verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    if len(public_key) != KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        _public(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def to_hex(value: bytes) -> str:
    return value.hex()


def from_hex(text: str, size: int | None = None) -> bytes:
    text = text.strip()
    if text.startswith(("0x", "0X")):
        text = text[2:]
    value = bytes.fromhex(text)
    if size is not None and len(value) != size:
        raise ValueError(f"expected {size} bytes, got {len(value)}")
    return value
