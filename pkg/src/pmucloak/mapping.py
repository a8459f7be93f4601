"""Map hex symbols onto data-frame field values drawn from observed traffic.

A mapping is learned from a corpus of genuine data frames.  Every mutable
field (everything except the sync word, the frame size, and the checksum)
gets a value dictionary.  Fields with at least 16 distinct observed values
become carriers: their sorted value range is cut into 16 contiguous groups
of near-equal size, and each group stands for one hex symbol.  Encoding a
symbol draws a uniform value from the matching group's range, so carried
bytes stay inside the envelope of values the corpus actually exhibited.
Fields with fewer distinct values stay passive and are resampled uniformly
from their observed values, carrying nothing.

Float fields are handled through an order-preserving integer key for the
raw float32 bit pattern, so group ranges follow numeric order and NaN or
infinity received on the wire falls outside every group learned from a
finite-valued corpus.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCorpus,
    FormatError,
    InvalidFrame,
    NonHexSymbol,
    PmuCloakError,
    SymbolCountMismatch,
    ValueOutOfDictionary,
)
from .frames import (
    DATA_FRAME_SIZE,
    FIELD_LAYOUT,
    SYNC_DATA,
    crc16,
    decode_data_frame,
)

GROUP_COUNT = 16
SYMBOLS = "0123456789abcdef"
_SYMBOL_VALUE = {ch: i for i, ch in enumerate(SYMBOLS)}

# Fields that are fixed by the protocol or recomputed at encode time.
_EXCLUDED = frozenset({"sync_word", "frame_size", "checksum"})

_MUTABLE_ROWS: tuple[tuple[str, int, int, str], ...] = tuple(
    row for row in FIELD_LAYOUT if row[0] not in _EXCLUDED
)
_ROW_BY_NAME = {name: (offset, length, kind) for name, offset, length, kind in FIELD_LAYOUT}


# -- Order-preserving keys ------------------------------------------------------

def float_key(raw: int) -> int:
    """Map a float32 bit pattern to an integer that sorts in numeric order.

    Flipping the sign bit shifts non-negative floats above every negative
    one; complementing negative patterns reverses their descending order.
    """
    if raw < 0x8000_0000:
        return raw | 0x8000_0000
    return 0xFFFF_FFFF - raw


def float_raw(key: int) -> int:
    if key >= 0x8000_0000:
        return key ^ 0x8000_0000
    return 0xFFFF_FFFF - key


def _to_key(raw: int, kind: str) -> int:
    return float_key(raw) if kind == "float" else raw


def _to_raw(key: int, kind: str) -> int:
    return float_raw(key) if kind == "float" else key


# -- Mapping model --------------------------------------------------------------

@dataclass(frozen=True)
class CarrierField:
    """One carrier field: 16 inclusive [lo, hi] group ranges in key space."""

    name: str
    lo_keys: tuple[int, ...]
    hi_keys: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.lo_keys) != GROUP_COUNT or len(self.hi_keys) != GROUP_COUNT:
            raise ValueError(f"{self.name}: need {GROUP_COUNT} groups")


@dataclass(frozen=True)
class PassiveField:
    """One passive field: the distinct raw values seen in the corpus."""

    name: str
    values: tuple[int, ...]


@dataclass(frozen=True)
class FieldMapping:
    """A learned mapping: carriers and passives in wire order."""

    carriers: tuple[CarrierField, ...]
    passives: tuple[PassiveField, ...]
    soc_mode: str
    corpus_digest: str

    @property
    def symbols_per_frame(self) -> int:
        return len(self.carriers)

    @property
    def bits_per_frame(self) -> int:
        return 4 * len(self.carriers)


# -- Learning -------------------------------------------------------------------

def build_mapping(
    frames: Iterable[bytes], soc_mode: str = "carrier"
) -> FieldMapping:
    """Learn a mapping from a corpus of genuine data frames.

    soc_mode "carrier" treats the second-of-century field like any other;
    "wallclock" removes it from the mapping entirely so the sender can stamp
    real time into outgoing frames.

    Raises:
        EmptyCorpus: no frames supplied.
        InvalidFrame: a corpus frame fails to decode.
        ConfigError-like ValueError: unknown soc_mode.
    """
    if soc_mode not in ("carrier", "wallclock"):
        raise ValueError(f"soc_mode must be 'carrier' or 'wallclock', got {soc_mode!r}")
    digest = hashlib.sha256()
    observed: dict[str, set[int]] = {name: set() for name, *_ in _MUTABLE_ROWS}
    count = 0
    for i, buf in enumerate(frames):
        try:
            decode_data_frame(buf)
        except PmuCloakError as exc:
            raise InvalidFrame(f"corpus frame {i}: {exc}") from exc
        digest.update(buf)
        for name, offset, length, _kind in _MUTABLE_ROWS:
            observed[name].add(int.from_bytes(buf[offset : offset + length], "big"))
        count += 1
    if count == 0:
        raise EmptyCorpus("corpus holds no data frames")

    carriers: list[CarrierField] = []
    passives: list[PassiveField] = []
    for name, _offset, _length, kind in _MUTABLE_ROWS:
        if name == "soc" and soc_mode == "wallclock":
            continue
        raws = observed[name]
        if len(raws) >= GROUP_COUNT:
            keys = sorted(_to_key(r, kind) for r in raws)
            d = len(keys)
            bounds = [k * d // GROUP_COUNT for k in range(GROUP_COUNT + 1)]
            carriers.append(
                CarrierField(
                    name=name,
                    lo_keys=tuple(keys[bounds[g]] for g in range(GROUP_COUNT)),
                    hi_keys=tuple(keys[bounds[g + 1] - 1] for g in range(GROUP_COUNT)),
                )
            )
        else:
            passives.append(PassiveField(name=name, values=tuple(sorted(raws))))
    return FieldMapping(
        carriers=tuple(carriers),
        passives=tuple(passives),
        soc_mode=soc_mode,
        corpus_digest=digest.hexdigest(),
    )


# -- Frame encode / decode ------------------------------------------------------

class FrameMapper:
    """Compiled form of a FieldMapping for per-frame encode and decode."""

    def __init__(self, mapping: FieldMapping):
        self.mapping = mapping
        rows = [_ROW_BY_NAME[c.name] for c in mapping.carriers]
        self._c_offsets = [r[0] for r in rows]
        self._c_lengths = [r[1] for r in rows]
        self._c_float = np.array([r[2] == "float" for r in rows], dtype=bool)
        # (carrier, group) bound matrices for vectorised draws
        self._lo = np.array([c.lo_keys for c in mapping.carriers], dtype=np.uint64)
        self._hi = np.array([c.hi_keys for c in mapping.carriers], dtype=np.uint64)
        self._arange = np.arange(len(mapping.carriers))
        self._passive_rows = [
            (_ROW_BY_NAME[p.name][0], _ROW_BY_NAME[p.name][1], p.values)
            for p in mapping.passives
        ]
        self._p_high = np.array([len(p.values) for p in mapping.passives], dtype=np.int64)
        self._c_kinds = [r[2] for r in rows]

    # -- encode --

    def map_symbols(
        self, symbols: str, rng: np.random.Generator, soc: int | None = None
    ) -> bytes:
        """Build one wire frame whose carrier fields encode ``symbols``.

        Raises:
            SymbolCountMismatch: wrong symbol count for this mapping.
            NonHexSymbol: a symbol outside 0-9a-f (lowercase only).
        """
        m = self.mapping
        if len(symbols) != m.symbols_per_frame:
            raise SymbolCountMismatch(
                f"mapping carries {m.symbols_per_frame} symbols per frame, got {len(symbols)}"
            )
        try:
            groups = [_SYMBOL_VALUE[ch] for ch in symbols]
        except KeyError as exc:
            raise NonHexSymbol(f"symbol {exc.args[0]!r} is not a lowercase hex digit") from None

        buf = bytearray(DATA_FRAME_SIZE)
        buf[0:2] = SYNC_DATA.to_bytes(2, "big")
        buf[2:4] = DATA_FRAME_SIZE.to_bytes(2, "big")

        if groups:
            lo = self._lo[self._arange, groups]
            hi = self._hi[self._arange, groups]
            keys = rng.integers(lo, hi + 1, dtype=np.uint64, endpoint=False)
            raws = np.where(
                self._c_float,
                np.where(keys >= 0x8000_0000, keys ^ 0x8000_0000, 0xFFFF_FFFF - keys),
                keys,
            )
            for off, length, raw in zip(self._c_offsets, self._c_lengths, raws.tolist()):
                buf[off : off + length] = raw.to_bytes(length, "big")

        if self._passive_rows:
            picks = rng.integers(0, self._p_high)
            for (off, length, values), i in zip(self._passive_rows, picks.tolist()):
                buf[off : off + length] = values[i].to_bytes(length, "big")

        if m.soc_mode == "wallclock":
            if soc is None:
                raise ValueError("soc required when soc_mode is 'wallclock'")
            buf[6:10] = int(soc).to_bytes(4, "big")

        buf[282:284] = crc16(bytes(buf[:282])).to_bytes(2, "big")
        return bytes(buf)

    # -- decode --

    def unmap_frame(self, frame: bytes) -> str:
        """Recover the symbol string carried by one wire frame.

        Raises:
            InvalidFrame: the frame fails basic decode (size, sync, checksum).
            ValueOutOfDictionary: a carrier value lies outside every group.
        """
        try:
            decode_data_frame(frame)
        except PmuCloakError as exc:
            raise InvalidFrame(str(exc)) from exc
        out = []
        for c, off, length, kind in zip(
            self.mapping.carriers, self._c_offsets, self._c_lengths, self._c_kinds
        ):
            raw = int.from_bytes(frame[off : off + length], "big")
            key = _to_key(raw, kind)
            g = bisect_right(c.lo_keys, key) - 1
            if g < 0 or key > c.hi_keys[g]:
                raise ValueOutOfDictionary(
                    f"{c.name}: value 0x{raw:0{2 * length}x} outside every learned group"
                )
            out.append(SYMBOLS[g])
        return "".join(out)


def map_symbols_to_frame(
    mapping: FieldMapping,
    symbols: str,
    rng: np.random.Generator,
    soc: int | None = None,
) -> bytes:
    return FrameMapper(mapping).map_symbols(symbols, rng, soc=soc)


def unmap_frame_to_symbols(mapping: FieldMapping, frame: bytes) -> str:
    return FrameMapper(mapping).unmap_frame(frame)


def frame_capacity(mapping: FieldMapping) -> int:
    """Payload capacity of one frame in bits: four per carrier symbol."""
    return mapping.bits_per_frame


# -- File format ----------------------------------------------------------------

_MAGIC = "pmucloak mapping v1"


def save_mapping(mapping: FieldMapping, path: str) -> None:
    """Write a mapping as versioned text; load_mapping inverts it exactly."""
    lines = [_MAGIC, f"soc_mode {mapping.soc_mode}", f"corpus sha256 {mapping.corpus_digest}"]
    by_name: dict[str, CarrierField | PassiveField] = {}
    for c in mapping.carriers:
        by_name[c.name] = c
    for p in mapping.passives:
        by_name[p.name] = p
    for name, offset, length, kind in _MUTABLE_ROWS:
        entry = by_name.get(name)
        if entry is None:
            continue
        width = 2 * length
        head = f"{name} {offset} {length}"
        if isinstance(entry, CarrierField):
            pairs = " ".join(
                f"{_to_raw(lo, kind):0{width}x}:{_to_raw(hi, kind):0{width}x}"
                for lo, hi in zip(entry.lo_keys, entry.hi_keys)
            )
            lines.append(f"carrier {head} {pairs}")
        else:
            vals = " ".join(f"{v:0{width}x}" for v in entry.values)
            lines.append(f"passive {head} {vals}")
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mapping(path: str) -> FieldMapping:
    """Read a mapping written by save_mapping.

    Raises:
        FormatError: wrong magic, unknown field, malformed line, or a
            truncated file (missing ``end``).
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise FormatError(f"{path}: not a '{_MAGIC}' file")
    if len(lines) < 4:
        raise FormatError(f"{path}: truncated header")
    if not lines[1].startswith("soc_mode "):
        raise FormatError(f"{path}: missing soc_mode line")
    soc_mode = lines[1].split(" ", 1)[1]
    if soc_mode not in ("carrier", "wallclock"):
        raise FormatError(f"{path}: unknown soc_mode {soc_mode!r}")
    if not lines[2].startswith("corpus sha256 "):
        raise FormatError(f"{path}: missing corpus digest line")
    digest = lines[2].split(" ")[2]

    carriers: list[CarrierField] = []
    passives: list[PassiveField] = []
    saw_end = False
    for ln in lines[3:]:
        if ln == "end":
            saw_end = True
            break
        parts = ln.split(" ")
        if len(parts) < 5 or parts[0] not in ("carrier", "passive"):
            raise FormatError(f"{path}: malformed line {ln!r}")
        name = parts[1]
        row = _ROW_BY_NAME.get(name)
        if row is None or name in _EXCLUDED:
            raise FormatError(f"{path}: unknown field {name!r}")
        if parts[2:4] != [str(row[0]), str(row[1])]:
            raise FormatError(
                f"{path}: field {name!r} offset/length disagree with the wire layout"
            )
        kind = row[2]
        try:
            if parts[0] == "carrier":
                if len(parts) != 4 + GROUP_COUNT:
                    raise FormatError(
                        f"{path}: field {name!r} needs {GROUP_COUNT} group ranges"
                    )
                los, his = [], []
                for pair in parts[4:]:
                    lo_s, hi_s = pair.split(":")
                    los.append(_to_key(int(lo_s, 16), kind))
                    his.append(_to_key(int(hi_s, 16), kind))
                for g in range(GROUP_COUNT):
                    if los[g] > his[g] or (g and his[g - 1] >= los[g]):
                        raise FormatError(
                            f"{path}: field {name!r} groups out of order"
                        )
                carriers.append(CarrierField(name, tuple(los), tuple(his)))
            else:
                passives.append(
                    PassiveField(name, tuple(int(v, 16) for v in parts[4:]))
                )
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: malformed line {ln!r}: {exc}") from None
    if not saw_end:
        raise FormatError(f"{path}: missing end line")
    return FieldMapping(
        carriers=tuple(carriers),
        passives=tuple(passives),
        soc_mode=soc_mode,
        corpus_digest=digest,
    )
