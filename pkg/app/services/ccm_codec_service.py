"""Byte-exact codec for cooperative control messages.

Wire layout, little-endian:

    [minute_of_hour: u8][ms_of_minute: u16][ego_id: u8]
    per conflict: [neighbor_id: u8][N x float32]

The horizon N is agreed out of band.
"""

import json
import logging
import math
import struct
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.schemas.ccm import CcmConflict, CcmMessage, CcmTimestamp

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<BHB")
HEADER_SIZE = HEADER.size


class CcmCodecError(ValueError):
    """Base class for CCM codec failures."""


class CcmEncodeError(CcmCodecError):
    pass


class CcmDecodeError(CcmCodecError):
    pass


def message_size(n_conflicts: int, n: int) -> int:
    return HEADER_SIZE + n_conflicts * (1 + 4 * n)


def encode_ccm(m: CcmMessage, n: int) -> bytes:
    """
    Encode a message for horizon ``n``.

    Raises:
        CcmEncodeError: A field is out of range for its wire width or a
            distance sequence has the wrong length or is not finite
    """
    if n < 1:
        raise CcmEncodeError(f"Horizon must be at least 1, got {n}")
    if m.t_stamp.minute_of_hour > 59:
        raise CcmEncodeError(f"minute_of_hour out of range: {m.t_stamp.minute_of_hour}")
    if m.t_stamp.ms_of_minute > 59999:
        raise CcmEncodeError(f"ms_of_minute out of range: {m.t_stamp.ms_of_minute}")
    if m.ego_id > 255:
        raise CcmEncodeError(f"ego_id does not fit one byte: {m.ego_id}")

    body = bytearray(HEADER.pack(m.t_stamp.minute_of_hour, m.t_stamp.ms_of_minute, m.ego_id))
    entry = struct.Struct(f"<B{n}f")
    for conflict in m.conflicts:
        if conflict.neighbor_id > 255:
            raise CcmEncodeError(f"neighbor_id does not fit one byte: {conflict.neighbor_id}")
        if len(conflict.d_seq) != n:
            raise CcmEncodeError(
                f"Conflict {conflict.neighbor_id} has {len(conflict.d_seq)} distances, expected {n}"
            )
        if not all(math.isfinite(d) for d in conflict.d_seq):
            raise CcmEncodeError(f"Conflict {conflict.neighbor_id} has non-finite distances")
        try:
            body += entry.pack(conflict.neighbor_id, *conflict.d_seq)
        except (struct.error, OverflowError) as e:
            raise CcmEncodeError(f"Conflict {conflict.neighbor_id}: {e}") from e
    return bytes(body)


def decode_ccm(data: bytes, n: int) -> CcmMessage:
    """
    Decode a message for horizon ``n``.

    Raises:
        CcmDecodeError: Length mismatch, out-of-range header, non-finite distance
            or duplicate neighbor id
    """
    if n < 1:
        raise CcmDecodeError(f"Horizon must be at least 1, got {n}")
    entry = struct.Struct(f"<B{n}f")
    if len(data) < HEADER_SIZE or (len(data) - HEADER_SIZE) % entry.size:
        raise CcmDecodeError(
            f"Length {len(data)} is not {HEADER_SIZE} + k*{entry.size} for N={n}"
        )

    minute, ms, ego_id = HEADER.unpack_from(data, 0)
    if minute > 59 or ms > 59999:
        raise CcmDecodeError(f"Timestamp out of range: minute={minute}, ms={ms}")

    conflicts = []
    for offset in range(HEADER_SIZE, len(data), entry.size):
        neighbor_id, *d_seq = entry.unpack_from(data, offset)
        if not all(math.isfinite(d) for d in d_seq):
            raise CcmDecodeError(f"Non-finite distance for neighbor {neighbor_id}")
        conflicts.append(CcmConflict(neighbor_id=neighbor_id, d_seq=d_seq))

    try:
        return CcmMessage(
            t_stamp=CcmTimestamp(minute_of_hour=minute, ms_of_minute=ms),
            ego_id=ego_id,
            conflicts=conflicts,
        )
    except ValidationError as e:
        raise CcmDecodeError(f"Invalid CCM content: {e}") from e


def golden_vector_cases() -> list[tuple[str, int, CcmMessage]]:
    """Reference messages whose encodings are committed for interop checks."""
    return [
        (
            "empty_header",
            20,
            CcmMessage(
                t_stamp=CcmTimestamp(minute_of_hour=0, ms_of_minute=0),
                ego_id=1,
                conflicts=[],
            ),
        ),
        (
            "single_conflict_n20",
            20,
            CcmMessage(
                t_stamp=CcmTimestamp(minute_of_hour=12, ms_of_minute=34567),
                ego_id=2,
                conflicts=[
                    CcmConflict(neighbor_id=1, d_seq=[0.5 * j for j in range(1, 21)])
                ],
            ),
        ),
        (
            "two_conflicts_n5",
            5,
            CcmMessage(
                t_stamp=CcmTimestamp(minute_of_hour=59, ms_of_minute=59999),
                ego_id=3,
                conflicts=[
                    CcmConflict(neighbor_id=1, d_seq=[1.0, 2.0, 4.0, 8.0, 16.0]),
                    CcmConflict(neighbor_id=2, d_seq=[15.0, 15.25, 15.5, 15.75, 16.0]),
                ],
            ),
        ),
    ]


def build_golden_document() -> dict[str, Any]:
    vectors = []
    for name, n, message in golden_vector_cases():
        encoded = encode_ccm(message, n)
        vectors.append(
            {
                "name": name,
                "n": n,
                "minute_of_hour": message.t_stamp.minute_of_hour,
                "ms_of_minute": message.t_stamp.ms_of_minute,
                "ego_id": message.ego_id,
                "conflicts": [
                    {"neighbor_id": c.neighbor_id, "d_seq": [float(d) for d in c.d_seq]}
                    for c in message.conflicts
                ],
                "size": len(encoded),
                "hex": encoded.hex(),
            }
        )
    return {"format": "ccm", "byte_order": "little", "vectors": vectors}


def render_golden_document() -> str:
    """Golden vectors as the exact text committed under tests/golden."""
    return json.dumps(build_golden_document(), indent=2) + "\n"


def write_golden_vectors(path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_golden_document(), encoding="utf-8")
    logger.info(f"📦 Wrote {len(golden_vector_cases())} CCM vectors to {out}")
    return out
