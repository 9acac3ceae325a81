"""Binary frame codec for the acquisition link.

Each reading travels from the analog front end to the edge agent as one
18-byte frame, laid out little-endian:

    offset  size  field
    ------  ----  -----------------------------------------------
    0       1     magic, 0xE7
    1       1     protocol version, 0x01
    2       4     seq    uint32, frame index within the acquisition
    6       4     t_ms   uint32, milliseconds since acquisition start
    10      6     codes  3 x int16, differential channel ADC codes
    16      1     status flags
    17      1     CRC-8 over bytes 0..16

Status bit 0 flags ADC saturation on any channel in this frame; bit 1 is
the phase flag, clear while the array still sits in the storage solution
and set once it is immersed in the sample. Remaining bits are reserved
and must be zero.

The checksum is CRC-8 with polynomial 0x07, init 0x00, no reflection,
no final xor (the variant whose check value over b"123456789" is 0xF4).

decode_frame(encode_frame(f)) is the identity on valid frames. Decoding
rejects wrong lengths, bad magic, unsupported versions, and checksum
mismatches with distinct exception types so link-layer stats can count
them separately.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

FRAME_MAGIC = 0xE7
FRAME_VERSION = 0x01
FRAME_SIZE = 18

STATUS_SATURATED = 0x01
STATUS_SAMPLE_PHASE = 0x02
_STATUS_MASK = STATUS_SATURATED | STATUS_SAMPLE_PHASE

_HEADER = struct.Struct("<BBII3hB")  # everything but the CRC byte


class FrameError(ValueError):
    """Base class for acquisition frame encode/decode failures."""


class FrameLengthError(FrameError):
    pass


class BadMagicError(FrameError):
    pass


class UnsupportedVersionError(FrameError):
    pass


class CrcMismatchError(FrameError):
    pass


def _crc8_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return table


_CRC8_TABLE = _crc8_table()


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0x00 (check value of b'123456789' is 0xF4)."""
    crc = 0x00
    for byte in data:
        crc = _CRC8_TABLE[crc ^ byte]
    return crc


@dataclass(frozen=True)
class AcquisitionFrame:
    """One digitized reading of the three differential channels."""

    seq: int
    t_ms: int
    codes: tuple[int, int, int]
    status: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError(f"seq must fit uint32, got {self.seq}")
        if not 0 <= self.t_ms <= 0xFFFFFFFF:
            raise ValueError(f"t_ms must fit uint32, got {self.t_ms}")
        codes = tuple(int(c) for c in self.codes)
        if len(codes) != 3:
            raise ValueError(f"expected 3 channel codes, got {len(codes)}")
        for c in codes:
            if not -32768 <= c <= 32767:
                raise ValueError(f"channel code {c} does not fit int16")
        if self.status & ~_STATUS_MASK:
            raise ValueError(f"reserved status bits set: 0x{self.status:02x}")
        object.__setattr__(self, "codes", codes)

    @property
    def saturated(self) -> bool:
        return bool(self.status & STATUS_SATURATED)

    @property
    def sample_phase(self) -> bool:
        return bool(self.status & STATUS_SAMPLE_PHASE)


def encode_frame(frame: AcquisitionFrame) -> bytes:
    """Serialize to the 18-byte wire form, appending the CRC."""
    body = _HEADER.pack(
        FRAME_MAGIC,
        FRAME_VERSION,
        frame.seq,
        frame.t_ms,
        frame.codes[0],
        frame.codes[1],
        frame.codes[2],
        frame.status,
    )
    return body + bytes([crc8(body)])


def decode_frame(data: bytes) -> AcquisitionFrame:
    """Parse and verify one wire frame.

    Raises FrameLengthError, BadMagicError, UnsupportedVersionError or
    CrcMismatchError; all are subclasses of FrameError.
    """
    if len(data) != FRAME_SIZE:
        raise FrameLengthError(f"frame must be {FRAME_SIZE} bytes, got {len(data)}")
    magic, version, seq, t_ms, c0, c1, c2, status = _HEADER.unpack(data[:-1])
    if magic != FRAME_MAGIC:
        raise BadMagicError(f"bad magic 0x{magic:02x}, expected 0x{FRAME_MAGIC:02x}")
    if version != FRAME_VERSION:
        raise UnsupportedVersionError(f"unsupported frame version 0x{version:02x}")
    expected = crc8(data[:-1])
    if data[-1] != expected:
        raise CrcMismatchError(f"crc mismatch: got 0x{data[-1]:02x}, expected 0x{expected:02x}")
    if status & ~_STATUS_MASK:
        raise FrameError(f"reserved status bits set: 0x{status:02x}")
    return AcquisitionFrame(seq=seq, t_ms=t_ms, codes=(c0, c1, c2), status=status)
