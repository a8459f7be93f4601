"""Hide hex symbols inside the value fields of plausible PMU frames.

A mapping is learned from an observed frame corpus: fields with enough
distinct values become symbol carriers (16 value groups = 1 hex digit
each), the rest replay observed values. Encoding picks a random member
of the right group, so carried values stay inside observed ranges.
"""

import math
import struct

import numpy as np

from pmucloak.corpus import CorpusParams, generate_corpus
from pmucloak.frames import crc16, decode_data_frame
from pmucloak.mapping import (
    ValueOutOfDictionary,
    build_mapping,
    frame_capacity,
    map_symbols_to_frame,
    unmap_frame_to_symbols,
)


def main() -> None:
    rng = np.random.default_rng(0)
    log = generate_corpus(CorpusParams(duration=60.0), rng)
    raw_frames = [rec.data for rec in log.records]
    print(f"corpus: {len(raw_frames)} observed data frames")

    mapping = build_mapping(raw_frames)
    carriers = [f.name for f in mapping.carriers]
    print(f"carrier fields ({len(carriers)}): "
          f"{', '.join(carriers[:5])}, ... ")
    print(f"passive fields: {[f.name for f in mapping.passives]}")
    cap = len(mapping.carriers)
    print(f"capacity: {cap} hex symbols = {frame_capacity(mapping)} bits "
          f"per frame\n")

    symbols = "deadbeef" * (cap // 8) + "0" * (cap % 8)
    frame = map_symbols_to_frame(mapping, symbols, rng)
    decoded = decode_data_frame(frame)
    print(f"mapped {cap} symbols into a frame; it decodes cleanly:")
    print(f"  soc={decoded.soc} frequency={decoded.frequency:.4f} "
          f"|phasor0|={abs(decoded.phasors[0]):.2f}")

    back = unmap_frame_to_symbols(mapping, frame)
    print(f"unmapped symbols match: {back == symbols}\n")

    # a frame whose frequency was never observed is not in the dictionary
    alien = bytearray(frame)
    alien[272:276] = struct.pack(">f", math.nan)
    alien[282:284] = crc16(bytes(alien[:282])).to_bytes(2, "big")
    try:
        unmap_frame_to_symbols(mapping, bytes(alien))
    except ValueOutOfDictionary as exc:
        print(f"frequency = NaN -> {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    main()
