"""Synchrophasor frame codec.

Implements the fixed 284-byte measurement data frame plus the short command
and configuration frames used by the PDC/PMU session protocol. The layout
follows the common IEEE C37.118-style framing: big-endian fields, a 16-bit
sync word whose second byte selects the frame kind, and a trailing CRC-CCITT
checksum over all preceding bytes.

Data frame layout (offsets in bytes):

    0-1    sync word (0xAA01)
    2-3    frame size (always 284)
    4-5    PMU/DC id
    6-9    SOC timestamp (UTC seconds)
    10     time quality flags
    11-13  fraction of second (raw, 24-bit)
    14-15  status flags
    16-271 32 phasors, each two 32-bit IEEE-754 floats (real, imaginary)
    272-275 actual frequency (float32)
    276-279 rate of change of frequency (float32)
    280-281 digital status words
    282-283 checksum (CRC-CCITT over bytes 0-281)
"""
from __future__ import annotations

import binascii
import enum
import struct
from dataclasses import dataclass, field

from .errors import (
    BadSync,
    ChecksumMismatch,
    FieldOverflow,
    PhasorCountMismatch,
    SizeMismatch,
    TooShort,
    UnknownCommandCode,
)

# -- Protocol constants -------------------------------------------------------

SYNC_LEAD = 0xAA

SYNC_DATA = 0xAA01
SYNC_CONFIG = 0xAA31
SYNC_COMMAND = 0xAA41

TYPE_BYTE_DATA = 0x01
TYPE_BYTE_CONFIG = 0x31
TYPE_BYTE_COMMAND = 0x41

PHASOR_COUNT = 32
DATA_FRAME_SIZE = 284
COMMAND_FRAME_SIZE = 18
CONFIG_FRAME_OVERHEAD = 16  # header (14) + checksum (2)

TIME_BASE = 1_000_000  # frac_sec counts microseconds

# Data frame body up to (not including) the checksum.
_DATA_BODY = struct.Struct(">HHHIB3sH64fffH")
_COMMAND_BODY = struct.Struct(">HHHIIH")
_CONFIG_HEAD = struct.Struct(">HHHII")
_CRC = struct.Struct(">H")


class CommandCode(enum.IntEnum):
    """Command codes carried by command frames."""

    DATA_OFF = 1
    DATA_ON = 2
    SEND_CONFIG = 5
    ACK = 6


# (name, offset, length, kind) for every data-frame field, in wire order.
# Phasor halves are individual entries: the field mapper treats each 4-byte
# float as its own value dictionary.
def _build_layout() -> tuple[tuple[str, int, int, str], ...]:
    rows: list[tuple[str, int, int, str]] = [
        ("sync_word", 0, 2, "uint"),
        ("frame_size", 2, 2, "uint"),
        ("pmu_id", 4, 2, "uint"),
        ("soc", 6, 4, "uint"),
        ("time_quality", 10, 1, "uint"),
        ("frac_sec", 11, 3, "uint"),
        ("stat_flags", 14, 2, "uint"),
    ]
    for i in range(PHASOR_COUNT):
        rows.append((f"phasor{i:02d}_re", 16 + 8 * i, 4, "float"))
        rows.append((f"phasor{i:02d}_im", 20 + 8 * i, 4, "float"))
    rows += [
        ("frequency", 272, 4, "float"),
        ("rocof", 276, 4, "float"),
        ("digital_status", 280, 2, "uint"),
        ("checksum", 282, 2, "uint"),
    ]
    return tuple(rows)


FIELD_LAYOUT: tuple[tuple[str, int, int, str], ...] = _build_layout()


# -- CRC -----------------------------------------------------------------------

def crc16(data: bytes) -> int:
    """CRC-CCITT: polynomial 0x1021, init 0xFFFF, no reflection, no final XOR.

    crc16(b"123456789") == 0x29B1 and crc16(b"") == 0xFFFF.
    """
    return binascii.crc_hqx(data, 0xFFFF)


# -- Frame types ----------------------------------------------------------------

@dataclass
class DataFrame:
    """One synchrophasor measurement frame.

    ``phasors`` holds exactly 32 complex values; each serializes as two
    big-endian float32 words (real, imaginary). ``checksum`` is informational:
    encoding always recomputes it from the serialized bytes.
    """

    soc: int = 0
    time_quality: int = 0
    frac_sec: int = 0
    stat_flags: int = 0
    phasors: tuple[complex, ...] = field(default=(0j,) * PHASOR_COUNT)
    frequency: float = 0.0
    rocof: float = 0.0
    digital_status: int = 0
    pmu_id: int = 0
    sync_word: int = SYNC_DATA
    frame_size: int = DATA_FRAME_SIZE
    checksum: int = 0


@dataclass
class CommandFrame:
    """Control frame: stop/start/config-request plus the session ack."""

    command_code: CommandCode = CommandCode.DATA_OFF
    pmu_id: int = 0
    soc: int = 0
    frac_sec: int = 0
    sync_word: int = SYNC_COMMAND
    frame_size: int = COMMAND_FRAME_SIZE
    checksum: int = 0


@dataclass
class ConfigFrame:
    """Configuration frame with an opaque payload blob."""

    payload: bytes = b""
    pmu_id: int = 0
    soc: int = 0
    frac_sec: int = 0
    sync_word: int = SYNC_CONFIG
    frame_size: int = 0  # 0 means "derive from payload" on encode
    checksum: int = 0


# -- Field validation -----------------------------------------------------------

def _check_uint(name: str, value: int, bits: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise FieldOverflow(f"{name} must be an int, got {type(value).__name__}")
    if not 0 <= value < (1 << bits):
        raise FieldOverflow(f"{name}={value!r} does not fit {bits} unsigned bits")
    return value


# -- Data frames ------------------------------------------------------------------

def encode_data_frame(frame: DataFrame) -> bytes:
    """Serialize a data frame to exactly 284 bytes, recomputing the checksum.

    Raises:
        FieldOverflow: an integer field is out of range or a float cannot be
            represented as float32.
        PhasorCountMismatch: ``frame.phasors`` is not exactly 32 entries.
        SizeMismatch: ``frame.frame_size`` is not 284.
    """
    if len(frame.phasors) != PHASOR_COUNT:
        raise PhasorCountMismatch(
            f"need exactly {PHASOR_COUNT} phasors, got {len(frame.phasors)}"
        )
    if frame.frame_size != DATA_FRAME_SIZE:
        raise SizeMismatch(
            f"data frame_size must be {DATA_FRAME_SIZE}, got {frame.frame_size}"
        )
    _check_uint("sync_word", frame.sync_word, 16)
    _check_uint("pmu_id", frame.pmu_id, 16)
    _check_uint("soc", frame.soc, 32)
    _check_uint("time_quality", frame.time_quality, 8)
    _check_uint("frac_sec", frame.frac_sec, 24)
    _check_uint("stat_flags", frame.stat_flags, 16)
    _check_uint("digital_status", frame.digital_status, 16)

    halves: list[float] = []
    for ph in frame.phasors:
        c = complex(ph)
        halves.append(c.real)
        halves.append(c.imag)
    try:
        body = _DATA_BODY.pack(
            frame.sync_word,
            DATA_FRAME_SIZE,
            frame.pmu_id,
            frame.soc,
            frame.time_quality,
            frame.frac_sec.to_bytes(3, "big"),
            frame.stat_flags,
            *halves,
            frame.frequency,
            frame.rocof,
            frame.digital_status,
        )
    except (struct.error, OverflowError) as exc:
        raise FieldOverflow(f"float field not representable as float32: {exc}") from exc
    return body + _CRC.pack(crc16(body))


def decode_data_frame(buf: bytes) -> DataFrame:
    """Parse 284 bytes into a DataFrame, verifying sync, size and checksum.

    Raises:
        TooShort: fewer bytes than a complete data frame.
        BadSync: bytes 0-1 are not the data sync word.
        SizeMismatch: the frame_size field or the buffer length is not 284.
        ChecksumMismatch: trailing CRC does not match bytes 0-281.
    """
    if len(buf) < 4:
        raise TooShort(f"need at least 4 bytes for a frame header, got {len(buf)}")
    sync = (buf[0] << 8) | buf[1]
    if sync != SYNC_DATA:
        raise BadSync(f"expected data sync 0x{SYNC_DATA:04X}, got 0x{sync:04X}")
    declared = (buf[2] << 8) | buf[3]
    if declared != DATA_FRAME_SIZE:
        raise SizeMismatch(f"frame_size field says {declared}, expected {DATA_FRAME_SIZE}")
    if len(buf) < DATA_FRAME_SIZE:
        raise TooShort(f"buffer holds {len(buf)} bytes of a {DATA_FRAME_SIZE}-byte frame")
    if len(buf) != DATA_FRAME_SIZE:
        raise SizeMismatch(f"buffer holds {len(buf)} bytes, expected {DATA_FRAME_SIZE}")
    expect = crc16(buf[:-2])
    (got,) = _CRC.unpack_from(buf, DATA_FRAME_SIZE - 2)
    if got != expect:
        raise ChecksumMismatch(f"checksum 0x{got:04X} != computed 0x{expect:04X}")

    vals = _DATA_BODY.unpack(buf[:-2])
    halves = vals[7:71]
    phasors = tuple(complex(halves[2 * i], halves[2 * i + 1]) for i in range(PHASOR_COUNT))
    return DataFrame(
        sync_word=vals[0],
        frame_size=vals[1],
        pmu_id=vals[2],
        soc=vals[3],
        time_quality=vals[4],
        frac_sec=int.from_bytes(vals[5], "big"),
        stat_flags=vals[6],
        phasors=phasors,
        frequency=vals[71],
        rocof=vals[72],
        digital_status=vals[73],
        checksum=got,
    )


# -- Command frames ----------------------------------------------------------------

def encode_command_frame(frame: CommandFrame) -> bytes:
    """Serialize a command frame to exactly 18 bytes."""
    if frame.frame_size != COMMAND_FRAME_SIZE:
        raise SizeMismatch(
            f"command frame_size must be {COMMAND_FRAME_SIZE}, got {frame.frame_size}"
        )
    _check_uint("sync_word", frame.sync_word, 16)
    _check_uint("pmu_id", frame.pmu_id, 16)
    _check_uint("soc", frame.soc, 32)
    _check_uint("frac_sec", frame.frac_sec, 32)
    code = int(frame.command_code)
    if code not in CommandCode._value2member_map_:
        raise UnknownCommandCode(f"command code {code} not in {list(CommandCode)}")
    body = _COMMAND_BODY.pack(
        frame.sync_word,
        COMMAND_FRAME_SIZE,
        frame.pmu_id,
        frame.soc,
        frame.frac_sec,
        code,
    )
    return body + _CRC.pack(crc16(body))


def decode_command_frame(buf: bytes) -> CommandFrame:
    """Parse an 18-byte command frame.

    Raises:
        TooShort, BadSync, SizeMismatch, ChecksumMismatch: as for data frames.
        UnknownCommandCode: code outside the CommandCode enumeration.
    """
    if len(buf) < 4:
        raise TooShort(f"need at least 4 bytes for a frame header, got {len(buf)}")
    sync = (buf[0] << 8) | buf[1]
    if sync != SYNC_COMMAND:
        raise BadSync(f"expected command sync 0x{SYNC_COMMAND:04X}, got 0x{sync:04X}")
    declared = (buf[2] << 8) | buf[3]
    if declared != COMMAND_FRAME_SIZE:
        raise SizeMismatch(
            f"frame_size field says {declared}, expected {COMMAND_FRAME_SIZE}"
        )
    if len(buf) < COMMAND_FRAME_SIZE:
        raise TooShort(f"buffer holds {len(buf)} bytes of an {COMMAND_FRAME_SIZE}-byte frame")
    if len(buf) != COMMAND_FRAME_SIZE:
        raise SizeMismatch(f"buffer holds {len(buf)} bytes, expected {COMMAND_FRAME_SIZE}")
    expect = crc16(buf[:-2])
    (got,) = _CRC.unpack_from(buf, COMMAND_FRAME_SIZE - 2)
    if got != expect:
        raise ChecksumMismatch(f"checksum 0x{got:04X} != computed 0x{expect:04X}")
    vals = _COMMAND_BODY.unpack(buf[:-2])
    try:
        code = CommandCode(vals[5])
    except ValueError as exc:
        raise UnknownCommandCode(f"command code {vals[5]} unknown") from exc
    return CommandFrame(
        sync_word=vals[0],
        frame_size=vals[1],
        pmu_id=vals[2],
        soc=vals[3],
        frac_sec=vals[4],
        command_code=code,
        checksum=got,
    )


# -- Config frames --------------------------------------------------------------------

def encode_config_frame(frame: ConfigFrame) -> bytes:
    """Serialize a config frame; the payload is carried verbatim."""
    size = CONFIG_FRAME_OVERHEAD + len(frame.payload)
    if frame.frame_size not in (0, size):
        raise SizeMismatch(
            f"config frame_size {frame.frame_size} != header+payload+crc = {size}"
        )
    if size > 0xFFFF:
        raise FieldOverflow(f"config payload too large ({len(frame.payload)} bytes)")
    _check_uint("sync_word", frame.sync_word, 16)
    _check_uint("pmu_id", frame.pmu_id, 16)
    _check_uint("soc", frame.soc, 32)
    _check_uint("frac_sec", frame.frac_sec, 32)
    body = (
        _CONFIG_HEAD.pack(frame.sync_word, size, frame.pmu_id, frame.soc, frame.frac_sec)
        + frame.payload
    )
    return body + _CRC.pack(crc16(body))


def decode_config_frame(buf: bytes) -> ConfigFrame:
    """Parse a config frame, returning the opaque payload."""
    if len(buf) < 4:
        raise TooShort(f"need at least 4 bytes for a frame header, got {len(buf)}")
    sync = (buf[0] << 8) | buf[1]
    if sync != SYNC_CONFIG:
        raise BadSync(f"expected config sync 0x{SYNC_CONFIG:04X}, got 0x{sync:04X}")
    declared = (buf[2] << 8) | buf[3]
    if declared < CONFIG_FRAME_OVERHEAD:
        raise SizeMismatch(f"config frame_size {declared} below minimum {CONFIG_FRAME_OVERHEAD}")
    if len(buf) < declared:
        raise TooShort(f"buffer holds {len(buf)} bytes of a {declared}-byte frame")
    if len(buf) != declared:
        raise SizeMismatch(f"buffer holds {len(buf)} bytes, expected {declared}")
    expect = crc16(buf[:-2])
    (got,) = _CRC.unpack_from(buf, declared - 2)
    if got != expect:
        raise ChecksumMismatch(f"checksum 0x{got:04X} != computed 0x{expect:04X}")
    vals = _CONFIG_HEAD.unpack(buf[: _CONFIG_HEAD.size])
    return ConfigFrame(
        sync_word=vals[0],
        frame_size=vals[1],
        pmu_id=vals[2],
        soc=vals[3],
        frac_sec=vals[4],
        payload=bytes(buf[_CONFIG_HEAD.size : -2]),
        checksum=got,
    )


# -- Generic dispatch -----------------------------------------------------------------

def frame_kind(buf: bytes) -> str:
    """Classify a buffer by its sync word: 'data', 'config' or 'command'.

    Raises BadSync when the first two bytes are not a recognized sync word.
    """
    if len(buf) < 2:
        raise TooShort("need 2 bytes to classify a frame")
    if buf[0] != SYNC_LEAD:
        raise BadSync(f"lead byte 0x{buf[0]:02X} != 0x{SYNC_LEAD:02X}")
    kind = {TYPE_BYTE_DATA: "data", TYPE_BYTE_CONFIG: "config", TYPE_BYTE_COMMAND: "command"}.get(buf[1])
    if kind is None:
        raise BadSync(f"unknown frame type byte 0x{buf[1]:02X}")
    return kind


def decode_frame(buf: bytes) -> DataFrame | CommandFrame | ConfigFrame:
    """Decode any frame, dispatching on the sync word's second byte."""
    kind = frame_kind(buf)
    if kind == "data":
        return decode_data_frame(buf)
    if kind == "command":
        return decode_command_frame(buf)
    return decode_config_frame(buf)
