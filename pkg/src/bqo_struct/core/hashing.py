"""Deterministic feature hashing shared by all workers."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
SEPARATOR = b"\x1f"
MAX_HASH_BITS = 30

_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    """Return the 64-bit FNV-1a hash of ``data``."""
    h = FNV64_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def _as_bytes(value: Union[str, bytes]) -> bytes:
    return value.encode("utf-8") if isinstance(value, str) else value


@dataclass(frozen=True)
class FeatureKey:
    """
    Identity of one feature before hashing.

    Attributes:
        namespace: Template family, e.g. b"emit" or b"trans"
        payload: Feature identity inside the family
    """

    namespace: bytes
    payload: bytes

    @classmethod
    def of(cls, namespace: Union[str, bytes], payload: Union[str, bytes]) -> "FeatureKey":
        return cls(_as_bytes(namespace), _as_bytes(payload))

    def encode(self) -> bytes:
        return self.namespace + SEPARATOR + self.payload


@lru_cache(maxsize=1 << 20)
def _hash_encoded(encoded: bytes, hash_bits: int) -> int:
    return fnv1a_64(encoded) & ((1 << hash_bits) - 1)


def hash_feature(key: FeatureKey, hash_bits: int) -> int:
    """
    Map a feature key to an index in [0, 2**hash_bits).

    Args:
        key: Feature identity
        hash_bits: Number of low bits kept, 1 to 30

    Returns:
        Low ``hash_bits`` bits of the FNV-1a hash of the encoded key

    Raises:
        ValueError: If hash_bits is out of range
    """
    if not 1 <= hash_bits <= MAX_HASH_BITS:
        raise ValueError(f"hash_bits must be in [1, {MAX_HASH_BITS}], got {hash_bits}")
    return _hash_encoded(key.encode(), hash_bits)


def hash_parts(namespace: str, payload: str, hash_bits: int) -> int:
    """Shorthand for ``hash_feature(FeatureKey.of(namespace, payload), hash_bits)``."""
    return hash_feature(FeatureKey.of(namespace, payload), hash_bits)
