"""Build one synchrophasor data frame and take it apart byte by byte.

Shows the fixed 284-byte layout, the CRC check, and what the decoder
does when a single byte is flipped.
"""

import math

from pmucloak.frames import (
    ChecksumMismatch,
    CommandCode,
    CommandFrame,
    DataFrame,
    crc16,
    decode_command_frame,
    decode_data_frame,
    encode_command_frame,
    encode_data_frame,
    frame_kind,
)


def hexdump(buf: bytes, width: int = 16) -> str:
    out = []
    for i in range(0, len(buf), width):
        chunk = buf[i : i + width]
        out.append(f"{i:5d}  {chunk.hex(' ')}")
    return "\n".join(out)


def main() -> None:
    phasors = tuple(
        complex(120.0 * math.cos(k / 5.0), 120.0 * math.sin(k / 5.0))
        for k in range(32)
    )
    frame = DataFrame(
        soc=1_600_000_000,
        frac_sec=250_000,
        stat_flags=0,
        phasors=phasors,
        frequency=60.01,
        rocof=-0.002,
        digital_status=0x0001,
        pmu_id=7,
    )
    raw = encode_data_frame(frame)
    print(f"encoded data frame: {len(raw)} bytes, kind={frame_kind(raw)!r}")
    print()
    print("first 32 bytes (header + status + first phasor):")
    print(hexdump(raw[:32]))
    print()
    print("field walk:")
    print(f"  sync_word      {raw[0:2].hex()}   (data frame marker)")
    print(f"  frame_size     {int.from_bytes(raw[2:4], 'big')}")
    print(f"  pmu_id         {int.from_bytes(raw[4:6], 'big')}")
    print(f"  soc            {int.from_bytes(raw[6:10], 'big')}")
    print(f"  frac_sec       {int.from_bytes(raw[11:14], 'big')}")
    print(f"  phasors        bytes 16..271 (32 complex values)")
    print(f"  frequency      bytes 272..275")
    print(f"  checksum       {raw[282:284].hex()} "
          f"(crc16 over the rest = {crc16(raw[:282]):04x})")
    print()

    back = decode_data_frame(raw)
    assert (back.soc, back.pmu_id, back.frac_sec) == (
        frame.soc, frame.pmu_id, frame.frac_sec)
    assert abs(back.frequency - frame.frequency) < 1e-4
    assert all(abs(a - b) < 1e-3 for a, b in zip(back.phasors, frame.phasors))
    print("decode(encode(frame)) recovers every field "
          "(floats to 32-bit precision)")

    corrupted = bytearray(raw)
    corrupted[100] ^= 0xFF
    try:
        decode_data_frame(bytes(corrupted))
    except ChecksumMismatch as exc:
        print(f"one flipped byte -> {type(exc).__name__}: {exc}")

    cmd = CommandFrame(command_code=CommandCode.DATA_ON, pmu_id=7, soc=1)
    wire = encode_command_frame(cmd)
    print()
    print(f"command frame: {len(wire)} bytes, kind={frame_kind(wire)!r}, "
          f"code={decode_command_frame(wire).command_code.name}")


if __name__ == "__main__":
    main()
