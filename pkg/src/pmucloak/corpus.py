"""Synthetic synchrophasor corpus generation.

Produces frame logs that look like a steady PMU-to-PDC capture: ~30
frames per second, sinusoid-plus-noise phasors, grid frequency wobbling
around 60 Hz, valid checksums throughout. Inter-packet delays are
bimodal: most frames go out right away, some wait for an aggregation
tick, and a delayed frame is always followed by an immediate catch-up
send so the nominal rate holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams
from .framelog import FrameLog, make_record
from .frames import DataFrame, PHASOR_COUNT, TIME_BASE, encode_data_frame

# Delay modes at the nominal 30 fps rate, scaled for other rates. A short
# send repeats with probability _REPEAT_SHORT; a long (aggregation) gap is
# always followed by a short catch-up. Stationary split is then 10/13 short,
# 3/13 long, and 10/13 * 0.031 + 3/13 * 37/900 = 1/30 exactly.
_SHORT = 0.031
_LONG = 37.0 / 900.0
_REPEAT_SHORT = 0.7
_JITTER = 0.002


# -- inter-packet delay processes -------------------------------------------------

def genuine_deltas(n: int, rng: np.random.Generator, rate: float = 30.0) -> np.ndarray:
    """Bimodal delays from the two-mode send process described above."""
    if n < 0:
        raise InvalidParams("delta count must be >= 0")
    if rate <= 0:
        raise InvalidParams("frame rate must be > 0")
    scale = 30.0 / rate
    short, long_, jitter = _SHORT * scale, _LONG * scale, _JITTER * scale
    out = np.empty(n)
    was_short = True
    for i in range(n):
        was_short = bool(rng.random() < _REPEAT_SHORT) if was_short else True
        out[i] = (short if was_short else long_) + rng.uniform(-jitter, jitter)
    return out


def constant_rate_deltas(
    n: int, rng: np.random.Generator, rate: float = 30.0, jitter: float = _JITTER
) -> np.ndarray:
    """Unimodal delays: a fixed-rate sender with bounded uniform jitter."""
    if n < 0:
        raise InvalidParams("delta count must be >= 0")
    if rate <= 0:
        raise InvalidParams("frame rate must be > 0")
    if not 0 <= jitter < 1.0 / rate:
        raise InvalidParams("jitter must be >= 0 and below the frame period")
    return 1.0 / rate + rng.uniform(-jitter, jitter, n)


# -- frame content -------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusParams:
    """Knobs for generate_corpus; defaults give the standard 60 s capture."""

    duration: float = 60.0
    frame_rate: float = 30.0
    pmu_id: int = 7
    start_soc: int = 1_600_000_000
    amp_noise: float = 0.5
    freq_noise: float = 0.002

    def __post_init__(self):
        if not math.isfinite(self.duration) or self.duration < 0:
            raise InvalidParams("duration must be a finite number of seconds >= 0")
        if not math.isfinite(self.frame_rate) or self.frame_rate <= 0:
            raise InvalidParams("frame_rate must be > 0")
        if not 0 <= self.pmu_id <= 0xFFFF:
            raise InvalidParams("pmu_id must fit 16 bits")
        if not 0 <= self.start_soc <= 0xFFFF_FFFF - int(self.duration) - 1:
            raise InvalidParams("start_soc + duration must fit 32 bits")
        if self.amp_noise < 0 or self.freq_noise < 0:
            raise InvalidParams("noise levels must be >= 0")


def _frame_at(t: float, i: int, params: CorpusParams, rng: np.random.Generator) -> DataFrame:
    # 32 rotating phasors with distinct amplitudes and phase offsets
    phasors = []
    for p in range(PHASOR_COUNT):
        amp = 90.0 + 2.0 * p
        theta = 2.0 * math.pi * 0.2 * t + p * math.pi / 16.0
        re = amp * math.cos(theta) + rng.normal(0.0, params.amp_noise)
        im = amp * math.sin(theta) + rng.normal(0.0, params.amp_noise)
        phasors.append(complex(re, im))
    freq = 60.0 + 0.02 * math.sin(2.0 * math.pi * 0.05 * t) + rng.normal(0.0, params.freq_noise)
    rocof = (
        0.02 * 2.0 * math.pi * 0.05 * math.cos(2.0 * math.pi * 0.05 * t)
        + rng.normal(0.0, params.freq_noise)
    )
    whole = math.floor(t)
    return DataFrame(
        soc=params.start_soc + whole,
        time_quality=0,
        frac_sec=min(int((t - whole) * TIME_BASE), TIME_BASE - 1),
        stat_flags=0,
        phasors=tuple(phasors),
        frequency=freq,
        rocof=rocof,
        digital_status=0,
        pmu_id=params.pmu_id,
    )


def generate_corpus(params: CorpusParams, rng: np.random.Generator) -> FrameLog:
    """Synthesize a capture of round(duration * frame_rate) data frames.

    Timestamps start at 0.0 and advance by the bimodal delay process, so
    the log is ready for both build_mapping (frame bytes) and the timing
    pipeline (inter-packet deltas).
    """
    n = round(params.duration * params.frame_rate)
    log = FrameLog()
    if n == 0:
        return log
    deltas = genuine_deltas(n - 1, rng, params.frame_rate)
    t = 0.0
    for i in range(n):
        if i > 0:
            t += deltas[i - 1]
        frame = _frame_at(t, i, params, rng)
        log.append(make_record(t, "out", encode_data_frame(frame)))
    return log
