"""Turn an arbitrary secret into strings that match a chosen regex.

The payload is whitened with a keyed stream, cut into fixed-capacity
slices, and each slice is unranked into a word of the language. Anyone
holding the key reverses the steps; anyone else sees well-formed text.
"""

from pmucloak.fte import (
    FteConfig,
    LengthHeaderCorrupt,
    fte_decode,
    fte_encode,
    make_codec,
)
from pmucloak.ranking import compile_pattern

KEY = bytes.fromhex("000102030405060708090a0b0c0d0e0f")


def main() -> None:
    secret = b"meter readings are boring on purpose " * 9
    lang = compile_pattern("^[0-9a-f]+$", 512)
    cfg = FteConfig(fixed_slice=512, key=KEY)

    slices = fte_encode(secret, lang, cfg)
    print(f"{len(secret)} payload bytes -> {len(slices)} slices of "
          f"{len(slices[0])} hex characters")
    print(f"first slice starts: {slices[0][:64]}...")
    assert all(lang.accepts(s) for s in slices)
    print("every slice is a member of ^[0-9a-f]+$: ok")
    print()

    back = fte_decode(slices, lang, cfg)
    print(f"decode with the right key: {back == secret} "
          f"({back[:22]!r}...)")

    wrong = FteConfig(fixed_slice=512, key=b"\xff" * 16)
    try:
        out = fte_decode(slices, lang, wrong)
    except LengthHeaderCorrupt as exc:
        print(f"decode with the wrong key -> {type(exc).__name__}: {exc}")
    else:
        print(f"decode with the wrong key -> {len(out)} bytes of noise, "
              f"matches secret: {out == secret}")
    print()

    codec = make_codec("^[0-9a-f]+$", cfg)
    one = codec.encode_slice(secret[:200], 0)
    print(f"SliceCodec view: one 200-byte chunk -> {len(one)} chars, "
          f"round trip ok: {codec.decode_slice(one, 0) == secret[:200]}")


if __name__ == "__main__":
    main()
