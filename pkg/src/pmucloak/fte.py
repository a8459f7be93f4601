"""Format-transforming slice codec.

Payload bytes are carried inside fixed-length strings of a regular language:
each slice packs a 16-bit length header plus up to ``payload_bytes`` of data
into one integer, which ``RankedLanguage.unrank`` turns into a string the
pattern accepts. The integer is whitened first with a keyed keystream that
depends on the slice index, so identical payload chunks never produce
identical slices and a receiver without the key cannot strip the framing.

The length header counts the meaningful payload bytes in the slice (0 for a
keep-alive). Header and payload are whitened together; after unwhitening, a
header value above ``payload_bytes`` marks the slice as corrupt or foreign.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import (
    BadSliceLength,
    EmptyCapacity,
    KeyMissing,
    LengthHeaderCorrupt,
)
from .ranking import RankedLanguage, compile_pattern

HEADER_BITS = 16

Keystream = Callable[[bytes, int, int], bytes]


def default_keystream(key: bytes, slice_index: int, length: int) -> bytes:
    """SHA-256 counter-mode keystream, deterministic per (key, slice_index)."""
    out = bytearray()
    counter = 0
    prefix = key + slice_index.to_bytes(8, "big")
    while len(out) < length:
        out += hashlib.sha256(prefix + counter.to_bytes(8, "big")).digest()
        counter += 1
    return bytes(out[:length])


@dataclass
class FteConfig:
    """Slice codec parameters.

    Attributes:
        fixed_slice: output string length in characters.
        key: whitening key; required.
        keystream: pluggable deterministic generator f(key, slice_index, n).
    """

    fixed_slice: int = 512
    key: bytes | None = None
    keystream: Keystream = field(default=default_keystream, repr=False)


class SliceCodec:
    """Binds a ranked language to an FteConfig and codes individual slices."""

    def __init__(self, language: RankedLanguage, config: FteConfig):
        if language.length != config.fixed_slice:
            raise ValueError(
                f"language length {language.length} != fixed_slice {config.fixed_slice}"
            )
        if config.key is None:
            raise KeyMissing("FteConfig.key is required for slice coding")
        capacity = language.capacity_bits
        if capacity < HEADER_BITS + 8:
            raise EmptyCapacity(
                f"pattern {language.pattern!r} at length {language.length} yields "
                f"{capacity} capacity bits; need at least {HEADER_BITS + 8} "
                "(16-bit header plus one payload byte)"
            )
        self.language = language
        self.config = config
        self.payload_bytes = (capacity - HEADER_BITS) // 8
        self._buf_len = self.payload_bytes + HEADER_BITS // 8

    def _whiten(self, buf: bytes, slice_index: int) -> bytes:
        ks = self.config.keystream(self.config.key, slice_index, len(buf))
        return bytes(a ^ b for a, b in zip(buf, ks))

    def encode_slice(self, chunk: bytes, slice_index: int) -> str:
        """Encode up to ``payload_bytes`` bytes as one language string."""
        if len(chunk) > self.payload_bytes:
            raise ValueError(
                f"chunk of {len(chunk)} bytes exceeds slice payload {self.payload_bytes}"
            )
        buf = (
            len(chunk).to_bytes(2, "big")
            + chunk
            + bytes(self.payload_bytes - len(chunk))
        )
        value = int.from_bytes(self._whiten(buf, slice_index), "big")
        return self.language.unrank(value)

    def decode_slice(self, slice_str: str, slice_index: int) -> bytes:
        """Recover the chunk carried by one slice.

        Raises:
            BadSliceLength: slice string is not fixed_slice characters.
            NotInLanguage: slice does not match the pattern.
            LengthHeaderCorrupt: rank value or header impossible for this
                codec (wrong key, corruption, or a non-tunnel source).
        """
        if len(slice_str) != self.config.fixed_slice:
            raise BadSliceLength(
                f"slice holds {len(slice_str)} characters, expected {self.config.fixed_slice}"
            )
        value = self.language.rank(slice_str)
        if value.bit_length() > 8 * self._buf_len:
            raise LengthHeaderCorrupt(
                f"rank value needs {value.bit_length()} bits, "
                f"slice carries at most {8 * self._buf_len}"
            )
        buf = self._whiten(value.to_bytes(self._buf_len, "big"), slice_index)
        k = int.from_bytes(buf[:2], "big")
        if k > self.payload_bytes:
            raise LengthHeaderCorrupt(
                f"length header says {k} bytes, slice carries at most {self.payload_bytes}"
            )
        return buf[2 : 2 + k]


def fte_encode(payload: bytes, language: RankedLanguage, config: FteConfig) -> list[str]:
    """Encode a payload as a list of slices (empty payload -> empty list)."""
    codec = SliceCodec(language, config)
    m = codec.payload_bytes
    return [
        codec.encode_slice(payload[off : off + m], idx)
        for idx, off in enumerate(range(0, len(payload), m))
    ]


def fte_decode(slices: Iterable[str], language: RankedLanguage, config: FteConfig) -> bytes:
    """Decode slices produced by :func:`fte_encode` back into the payload."""
    codec = SliceCodec(language, config)
    out = bytearray()
    for idx, s in enumerate(slices):
        out += codec.decode_slice(s, idx)
    return bytes(out)


def make_codec(pattern: str, config: FteConfig) -> SliceCodec:
    """Compile the pattern at fixed_slice length and wrap it in a SliceCodec."""
    return SliceCodec(compile_pattern(pattern, config.fixed_slice), config)
