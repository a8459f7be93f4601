"""Regenerate the golden frame files in this directory.

The .bin files are frozen regression anchors: tests compare codec output
against them byte for byte. Only rerun this script for a deliberate,
reviewed wire-format change.
"""
from pathlib import Path

from pmucloak.frames import (
    CommandCode,
    CommandFrame,
    ConfigFrame,
    DataFrame,
    encode_command_frame,
    encode_config_frame,
    encode_data_frame,
)

HERE = Path(__file__).parent


def sample_data_frame() -> DataFrame:
    phasors = tuple(complex(100.0 + i, -0.5 * i) for i in range(32))
    return DataFrame(
        pmu_id=7777,
        soc=1_600_000_000,
        time_quality=0x02,
        frac_sec=0x0ABCDE,
        stat_flags=0x0001,
        phasors=phasors,
        frequency=60.5,
        rocof=-0.25,
        digital_status=0xBEEF,
    )


def main() -> None:
    zero = encode_data_frame(DataFrame())
    sample = encode_data_frame(sample_data_frame())
    dataoff = encode_command_frame(
        CommandFrame(
            command_code=CommandCode.DATA_OFF,
            pmu_id=7777,
            soc=1_600_000_000,
            frac_sec=0x00123456,
        )
    )
    dataon = encode_command_frame(
        CommandFrame(
            command_code=CommandCode.DATA_ON,
            pmu_id=7777,
            soc=1_600_000_000,
            frac_sec=0x00123457,
        )
    )
    sendconfig = encode_command_frame(
        CommandFrame(
            command_code=CommandCode.SEND_CONFIG,
            pmu_id=7777,
            soc=1_600_000_000,
            frac_sec=0x00123458,
        )
    )
    config = encode_config_frame(
        ConfigFrame(
            pmu_id=7777,
            soc=1_600_000_000,
            frac_sec=0x00123459,
            payload=b"STATION-7777/PH32" + bytes(range(16)),
        )
    )
    (HERE / "data_zero.bin").write_bytes(zero)
    (HERE / "data_sample.bin").write_bytes(sample)
    (HERE / "cmd_dataoff.bin").write_bytes(dataoff)
    (HERE / "cmd_dataon.bin").write_bytes(dataon)
    (HERE / "cmd_sendconfig.bin").write_bytes(sendconfig)
    (HERE / "config_sample.bin").write_bytes(config)
    # Two valid data frames with three junk bytes between them: exercises
    # the tunnel's resynchronizing frame scanner.
    (HERE / "stream_junk.bin").write_bytes(zero + b"\x11\x22\x33" + sample)
    for name in sorted(p.name for p in HERE.glob("*.bin")):
        print(name, (HERE / name).stat().st_size, "bytes")


if __name__ == "__main__":
    main()
