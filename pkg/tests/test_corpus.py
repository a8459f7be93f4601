"""Synthetic corpus generation tests."""

import numpy as np
import pytest

from pmucloak.corpus import (
    CorpusParams,
    constant_rate_deltas,
    generate_corpus,
    genuine_deltas,
)
from pmucloak.errors import InvalidParams
from pmucloak.framelog import save_framelog
from pmucloak.mapping import build_mapping
from pmucloak.timing import extract_deltas, infer_hmm, learn_alphabet, symbolize


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(CorpusParams(), np.random.default_rng(0))


# -- parameters -----------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"duration": -1.0},
    {"frame_rate": 0.0},
    {"pmu_id": 70000},
    {"start_soc": 2**32 - 10},
    {"amp_noise": -0.1},
    {"freq_noise": -0.1},
])
def test_params_validation(kwargs):
    with pytest.raises(InvalidParams):
        CorpusParams(**kwargs)


def test_zero_duration_gives_empty_log():
    log = generate_corpus(CorpusParams(duration=0.0), np.random.default_rng(0))
    assert log.records == []


# -- delay processes ---------------------------------------------------------------

def test_genuine_deltas_bimodal_and_rate():
    d = genuine_deltas(20_000, np.random.default_rng(1))
    assert d.min() > 0
    # stationary mean is exactly 1/30; allow sampling noise
    assert abs(d.mean() - 1 / 30) < 5e-4
    short = d < 0.036
    assert 0.72 < short.mean() < 0.82  # 10/13 of sends are short
    # a long gap is always followed by a catch-up send
    long_idx = np.nonzero(~short[:-1])[0]
    assert short[long_idx + 1].all()


def test_genuine_deltas_rate_scaling():
    d = genuine_deltas(10_000, np.random.default_rng(2), rate=60.0)
    assert abs(d.mean() - 1 / 60) < 3e-4


def test_constant_rate_deltas_bounds():
    d = constant_rate_deltas(10_000, np.random.default_rng(3))
    assert abs(d.mean() - 1 / 30) < 1e-4
    assert (d >= 1 / 30 - 0.002).all() and (d <= 1 / 30 + 0.002).all()


def test_delta_process_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidParams):
        genuine_deltas(-1, rng)
    with pytest.raises(InvalidParams):
        constant_rate_deltas(10, rng, jitter=0.5)


# -- corpus structure ---------------------------------------------------------------

def test_frame_count_and_decodability(corpus):
    assert len(corpus.records) == 1800
    frames = corpus.frames()  # propagates checksum/layout errors
    assert len(frames) == 1800
    assert all(f.pmu_id == 7 for f in frames)


def test_timestamps_monotonic_and_rate(corpus):
    ts = corpus.timestamps("out")
    deltas = extract_deltas(ts)
    assert (deltas > 0).all()
    rate = 1 / deltas.mean()
    assert 28.0 < rate < 32.0


def test_clock_fields_track_timestamps(corpus):
    frames = corpus.frames()
    socs = [f.soc for f in frames]
    assert socs == sorted(socs)
    assert len(set(socs)) >= 16
    assert all(0 <= f.frac_sec < 1_000_000 for f in frames)


def test_field_plausibility(corpus):
    frames = corpus.frames()
    freqs = [f.frequency for f in frames]
    assert all(59.9 < f < 60.1 for f in freqs)
    mags = [abs(f.phasors[0]) for f in frames]
    assert all(80.0 < m < 100.0 for m in mags)


def test_default_corpus_yields_68_carriers(corpus):
    mapping = build_mapping([r.data for r in corpus.records])
    assert len(mapping.carriers) == 68
    assert {p.name for p in mapping.passives} == {
        "pmu_id", "time_quality", "stat_flags", "digital_status",
    }
    assert mapping.bits_per_frame == 272


def test_timing_pipeline_recovers_two_state_model(corpus):
    deltas = extract_deltas(corpus.timestamps("out"))
    alphabet = learn_alphabet(deltas, 2)
    boundary = alphabet.boundaries()[0]
    assert 0.033 < boundary < 0.0392  # inside the gap between the modes
    model = infer_hmm(symbolize(alphabet, deltas), window=1)
    assert model.state_count == 2
    rows = {s: dict() for s in range(model.state_count)}
    for (s, sym), (t, p) in model.transitions.items():
        rows[s][sym] = p
    by_size = sorted(rows.values(), key=len)
    assert by_size[0] == {"a": 1.0}  # catch-up state is deterministic
    assert abs(by_size[1]["a"] - 0.7) < 0.05
    assert abs(by_size[1]["b"] - 0.3) < 0.05


def test_generation_is_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.flog", tmp_path / "b.flog"
    params = CorpusParams(duration=5.0)
    save_framelog(generate_corpus(params, np.random.default_rng(9)), p1)
    save_framelog(generate_corpus(params, np.random.default_rng(9)), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_short_corpus_still_decodes():
    log = generate_corpus(CorpusParams(duration=1.0), np.random.default_rng(4))
    assert len(log.records) == 30
    assert len(log.frames()) == 30
