"""
Binary model file.

Layout, little-endian::

    magic "BQSM" | version u32 | hash_bits u32
    | label count u32 | per label: byte length u32 + UTF-8 bytes
    | weight count u64 | weights as binary64

Version 1 implies FNV-1a 64 with a 0x1F separator and low-bit masking for feature indices.
"""

import struct
from pathlib import Path
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from bqo_struct.core.exceptions import ModelFormatError
from bqo_struct.core.schemas import TrainConfig
from bqo_struct.core.sparse import ModelVector

MAGIC = b"BQSM"
FORMAT_VERSION = 1

_HEAD = struct.Struct("<4sII")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = np.dtype("<f8")


class SavedModel(NamedTuple):
    w: ModelVector
    hash_bits: int
    labels: List[str]


def encode_model(w: ModelVector, hash_bits: int, labels: Sequence[str]) -> bytes:
    """
    Serialize a model.

    Raises:
        ValueError: If len(w) != 2**hash_bits
    """
    weights = np.ascontiguousarray(w, dtype=_F64)
    if weights.ndim != 1 or weights.size != 1 << hash_bits:
        raise ValueError(f"Expected {1 << hash_bits} weights, got shape {weights.shape}")
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, hash_bits), _U32.pack(len(labels))]
    for label in labels:
        raw = label.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    parts.append(_U64.pack(weights.size))
    parts.append(weights.tobytes())
    return b"".join(parts)


def _take(data: bytes, offset: int, size: int) -> Tuple[bytes, int]:
    end = offset + size
    if end > len(data):
        raise ModelFormatError(f"Model file truncated at byte {len(data)}, needed {end}")
    return data[offset:end], end


def decode_model(data: bytes) -> SavedModel:
    """
    Parse a serialized model.

    Raises:
        ModelFormatError: On a wrong magic or version, truncation or trailing bytes
    """
    head, offset = _take(data, 0, _HEAD.size)
    magic, version, hash_bits = _HEAD.unpack(head)
    if magic != MAGIC:
        raise ModelFormatError(f"Not a model file: magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"Unsupported model format version {version}")

    raw, offset = _take(data, offset, _U32.size)
    (count,) = _U32.unpack(raw)
    labels = []
    for _ in range(count):
        raw, offset = _take(data, offset, _U32.size)
        (length,) = _U32.unpack(raw)
        raw, offset = _take(data, offset, length)
        try:
            labels.append(raw.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise ModelFormatError("Label is not valid UTF-8") from e

    raw, offset = _take(data, offset, _U64.size)
    (size,) = _U64.unpack(raw)
    if size != 1 << hash_bits:
        raise ModelFormatError(f"Weight count {size} does not match hash_bits {hash_bits}")
    raw, offset = _take(data, offset, 8 * size)
    if offset != len(data):
        raise ModelFormatError(f"{len(data) - offset} trailing bytes after the weights")
    w = np.frombuffer(raw, dtype=_F64).astype(np.float64)
    return SavedModel(w, hash_bits, labels)


def save_model(
    w: ModelVector, cfg: TrainConfig, path: Union[str, Path], labels: Sequence[str] = ()
) -> None:
    """Write w with the hashing parameters of ``cfg`` and the label vocabulary."""
    Path(path).write_bytes(encode_model(w, cfg.hash_bits, labels))


def load_model(path: Union[str, Path]) -> SavedModel:
    """
    Read a model file.

    Raises:
        ModelFormatError: If the contents are not a valid model
        OSError: If the file cannot be read
    """
    return decode_model(Path(path).read_bytes())
