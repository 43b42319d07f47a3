"""Binary frame codec of the TCP transport.

Frame layout, little-endian: magic ``b"BQSV"`` (4 bytes), message type (u8), rank (u32),
element count (u64), then a type-dependent payload.

====  ==========================  ==========================================================
type  meaning                     payload (count = n)
====  ==========================  ==========================================================
1     dense vector contribution   n binary64
2     reduced vector              n binary64
3     scalar contribution         n binary64, then n u8 reduction-mode codes
4     reduced scalars             n binary64
5     barrier                     none (n = 0)
6     error                       n bytes of UTF-8 text
7     sparse vector contribution  u64 dense length, n u64 indices, n binary64 values
8     join                        none (n = cluster size)
====  ==========================  ==========================================================
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence, Tuple

import numpy as np
import numpy.typing as npt

from bqo_struct.comm.base import (
    MODE_CODES,
    MODE_NAMES,
    ScalarContribution,
    VectorContribution,
)
from bqo_struct.core.exceptions import WireFormatError

MAGIC = b"BQSV"
HEADER = struct.Struct("<4sBIQ")
HEADER_SIZE = HEADER.size

_F64 = np.dtype("<f8")
_U64 = np.dtype("<u8")


class MessageType(IntEnum):
    VEC_CONTRIBUTION = 1
    VEC_REDUCED = 2
    SCALAR_CONTRIBUTION = 3
    SCALARS_REDUCED = 4
    BARRIER = 5
    ERROR = 6
    SPARSE_VEC_CONTRIBUTION = 7
    JOIN = 8


@dataclass(frozen=True)
class Frame:
    """One decoded frame."""

    kind: MessageType
    rank: int
    count: int
    payload: bytes = b""

    def encode(self) -> bytes:
        expected = payload_size(self.kind, self.count)
        if len(self.payload) != expected:
            raise WireFormatError(
                f"{self.kind.name} frame with count {self.count} needs {expected} payload "
                f"bytes, got {len(self.payload)}"
            )
        return HEADER.pack(MAGIC, int(self.kind), self.rank, self.count) + self.payload


def payload_size(kind: MessageType, count: int) -> int:
    """Return the payload byte length of a frame type with the given element count."""
    if kind in (MessageType.VEC_CONTRIBUTION, MessageType.VEC_REDUCED, MessageType.SCALARS_REDUCED):
        return 8 * count
    if kind == MessageType.SCALAR_CONTRIBUTION:
        return 9 * count
    if kind == MessageType.SPARSE_VEC_CONTRIBUTION:
        return 8 + 16 * count
    if kind == MessageType.ERROR:
        return count
    return 0


def decode_header(data: bytes) -> Tuple[MessageType, int, int]:
    """
    Decode the fixed-size frame header.

    Returns:
        Tuple of (message type, rank, element count)

    Raises:
        WireFormatError: If the magic or type is invalid
    """
    if len(data) != HEADER_SIZE:
        raise WireFormatError(f"Frame header needs {HEADER_SIZE} bytes, got {len(data)}")
    magic, kind, rank, count = HEADER.unpack(data)
    if magic != MAGIC:
        raise WireFormatError(f"Bad frame magic: {magic!r}")
    try:
        message_type = MessageType(kind)
    except ValueError as e:
        raise WireFormatError(f"Unknown message type: {kind}") from e
    return message_type, rank, count


def decode_frame(data: bytes) -> Frame:
    """Decode one complete frame from bytes."""
    kind, rank, count = decode_header(data[:HEADER_SIZE])
    payload = data[HEADER_SIZE:]
    if len(payload) != payload_size(kind, count):
        raise WireFormatError(
            f"{kind.name} frame payload has {len(payload)} bytes, "
            f"expected {payload_size(kind, count)}"
        )
    return Frame(kind, rank, count, payload)


def vector_frame(kind: MessageType, rank: int, values: npt.NDArray[np.float64]) -> Frame:
    return Frame(kind, rank, int(values.size), np.asarray(values, dtype=_F64).tobytes())


def decode_vector(frame: Frame) -> npt.NDArray[np.float64]:
    return np.frombuffer(frame.payload, dtype=_F64).astype(np.float64)


def contribution_frame(contribution: VectorContribution) -> Frame:
    """Encode a vector contribution as a dense (type 1) or sparse (type 7) frame."""
    if contribution.dense is not None:
        return vector_frame(MessageType.VEC_CONTRIBUTION, contribution.rank, contribution.dense)
    indices = np.asarray(contribution.indices, dtype=_U64)
    payload = (
        struct.pack("<Q", contribution.length)
        + indices.tobytes()
        + np.asarray(contribution.values, dtype=_F64).tobytes()
    )
    return Frame(MessageType.SPARSE_VEC_CONTRIBUTION, contribution.rank, int(indices.size), payload)


def decode_contribution(frame: Frame) -> VectorContribution:
    if frame.kind == MessageType.VEC_CONTRIBUTION:
        dense = decode_vector(frame)
        return VectorContribution(frame.rank, int(dense.size), dense=dense)
    if frame.kind != MessageType.SPARSE_VEC_CONTRIBUTION:
        raise WireFormatError(f"Expected a vector contribution, got {frame.kind.name}")
    (length,) = struct.unpack_from("<Q", frame.payload)
    split = 8 + 8 * frame.count
    indices = np.frombuffer(frame.payload[8:split], dtype=_U64).astype(np.int64)
    values = np.frombuffer(frame.payload[split:], dtype=_F64).astype(np.float64)
    if indices.size and int(indices.max()) >= length:
        raise WireFormatError(f"Sparse index out of range for length {length}")
    return VectorContribution(frame.rank, int(length), indices=indices, values=values)


def scalar_frame(contribution: ScalarContribution) -> Frame:
    values = np.asarray(contribution.values, dtype=_F64)
    codes = bytes(MODE_CODES[mode] for mode in contribution.modes)
    return Frame(
        MessageType.SCALAR_CONTRIBUTION,
        contribution.rank,
        int(values.size),
        values.tobytes() + codes,
    )


def decode_scalars(frame: Frame) -> ScalarContribution:
    if frame.kind != MessageType.SCALAR_CONTRIBUTION:
        raise WireFormatError(f"Expected a scalar contribution, got {frame.kind.name}")
    split = 8 * frame.count
    values = np.frombuffer(frame.payload[:split], dtype=_F64).astype(np.float64)
    try:
        modes: Sequence = [MODE_NAMES[code] for code in frame.payload[split:]]
    except KeyError as e:
        raise WireFormatError(f"Unknown reduction mode code: {e}") from e
    return ScalarContribution(frame.rank, values, modes)


def error_frame(rank: int, message: str) -> Frame:
    text = message.encode("utf-8")
    return Frame(MessageType.ERROR, rank, len(text), text)


def decode_error(frame: Frame) -> str:
    return frame.payload.decode("utf-8", errors="replace")


def join_frame(rank: int, size: int) -> Frame:
    return Frame(MessageType.JOIN, rank, size)


def barrier_frame(rank: int) -> Frame:
    return Frame(MessageType.BARRIER, rank, 0)
