"""Timing-model tests: deltas, alphabet learning, HMM inference, shaping."""

import math

import numpy as np
import pytest

from pmucloak.errors import (
    AbsorbingDeadEnd,
    DegenerateTraceWarning,
    FormatError,
    InsufficientData,
    NonMonotonicTimestamps,
    TooFewPackets,
)
from pmucloak.timing import (
    AlphabetBin,
    DeterministicHmm,
    SymbolAlphabet,
    TimingModel,
    extract_deltas,
    infer_hmm,
    learn_alphabet,
    load_model,
    sample_symbols,
    save_model,
    shape_schedule,
    symbolize,
)


def two_state_model(pa0=0.7, pa1=0.4):
    """Ground truth whose states are the last emitted symbol."""
    return DeterministicHmm(
        state_count=2,
        transitions={
            (0, "a"): (0, pa0),
            (0, "b"): (1, 1.0 - pa0),
            (1, "a"): (0, pa1),
            (1, "b"): (1, 1.0 - pa1),
        },
        start_states=(0, 1),
    )


def bimodal_trace(rng, n=2000, centers=(0.01, 0.03), jitter=0.002):
    half = n // 2
    a = centers[0] + rng.uniform(-jitter, jitter, half)
    b = centers[1] + rng.uniform(-jitter, jitter, n - half)
    out = np.empty(n)
    out[0::2] = a[: len(out[0::2])]
    out[1::2] = b[: len(out[1::2])]
    return out


# -- extract_deltas ---------------------------------------------------------

def test_extract_deltas_arithmetic():
    assert np.allclose(extract_deltas([0.0, 0.1, 0.3]), [0.1, 0.2])


def test_extract_deltas_too_few():
    with pytest.raises(TooFewPackets):
        extract_deltas([1.0])


def test_extract_deltas_non_monotonic():
    with pytest.raises(NonMonotonicTimestamps, match="2"):
        extract_deltas([0.0, 1.0, 0.5, 2.0])


def test_extract_deltas_30hz():
    ts = [i / 30.0 for i in range(300)]
    deltas = extract_deltas(ts)
    assert len(deltas) == 299
    assert np.all(np.abs(deltas - 1 / 30.0) < 1e-9)


def test_deltas_invert_cumulative_sum():
    rng = np.random.default_rng(1)
    delays = rng.uniform(0.01, 0.05, 500)
    ts = 100.0 + np.concatenate([[0.0], np.cumsum(delays)])
    assert np.max(np.abs(extract_deltas(ts) - delays)) < 1e-12


# -- learn_alphabet ---------------------------------------------------------

def test_bimodal_boundary_lands_in_gap():
    rng = np.random.default_rng(2)
    alphabet = learn_alphabet(bimodal_trace(rng), k=2)
    assert alphabet.labels == ("a", "b")
    boundary = alphabet.bins[0].hi
    assert alphabet.bins[1].lo == boundary
    assert 0.012 < boundary < 0.028
    assert alphabet.bins[0].lo == 0.0
    assert math.isinf(alphabet.bins[1].hi)


def test_trimodal_three_bins():
    rng = np.random.default_rng(3)
    n = 3000
    parts = [
        c + rng.uniform(-0.002, 0.002, n // 3) for c in (0.01, 0.03, 0.05)
    ]
    trace = np.concatenate(parts)
    rng.shuffle(trace)
    alphabet = learn_alphabet(trace, k=3)
    assert alphabet.labels == ("a", "b", "c")
    b1, b2 = alphabet.bins[0].hi, alphabet.bins[1].hi
    assert 0.012 < b1 < 0.028
    assert 0.032 < b2 < 0.048


def test_constant_trace_falls_back_with_warning():
    with pytest.warns(DegenerateTraceWarning):
        alphabet = learn_alphabet([0.02] * 100, k=2)
    assert len(alphabet.bins) == 2
    assert symbolize(alphabet, [0.02] * 3) == "bbb"


def test_degenerate_two_cluster_k3_falls_back():
    rng = np.random.default_rng(4)
    with pytest.warns(DegenerateTraceWarning):
        alphabet = learn_alphabet(bimodal_trace(rng), k=3)
    assert len(alphabet.bins) == 3


def test_learn_alphabet_bad_args():
    with pytest.raises(ValueError):
        learn_alphabet([], k=2)
    with pytest.raises(ValueError):
        learn_alphabet([0.1, 0.2], k=1)


def test_alphabet_validation():
    with pytest.raises(ValueError, match="cover"):
        SymbolAlphabet(bins=(AlphabetBin(0.0, 1.0, "a"),))
    with pytest.raises(ValueError, match="gap"):
        SymbolAlphabet(
            bins=(AlphabetBin(0.0, 1.0, "a"), AlphabetBin(2.0, math.inf, "b"))
        )


# -- symbolize ----------------------------------------------------------------

def ab_alphabet(boundary=0.02):
    return SymbolAlphabet(
        bins=(AlphabetBin(0.0, boundary, "a"), AlphabetBin(boundary, math.inf, "b"))
    )


def test_symbolize_basics():
    alphabet = ab_alphabet()
    assert symbolize(alphabet, [0.01]) == "a"
    assert symbolize(alphabet, []) == ""
    assert symbolize(alphabet, [0.02]) == "b"  # half-open bins
    assert symbolize(alphabet, [0.01, 0.05, 0.019999]) == "aba"


def test_symbolized_deltas_fall_in_their_bins():
    rng = np.random.default_rng(5)
    trace = bimodal_trace(rng, 500)
    alphabet = learn_alphabet(trace, k=2)
    by_label = {b.label: b for b in alphabet.bins}
    for delta, sym in zip(trace, symbolize(alphabet, trace)):
        b = by_label[sym]
        assert b.lo <= delta < b.hi


# -- DeterministicHmm validation -----------------------------------------------

def test_hmm_rejects_dead_end_state():
    with pytest.raises(AbsorbingDeadEnd):
        DeterministicHmm(
            state_count=2,
            transitions={(0, "a"): (1, 1.0)},
            start_states=(0,),
        )


@pytest.mark.parametrize(
    "transitions",
    [
        {(0, "a"): (0, 0.5)},  # probabilities sum to 0.5
        {(0, "a"): (0, 0.0), (0, "b"): (0, 1.0)},  # zero probability
        {(0, "a"): (0, 1.5)},  # above one
        {(0, "a"): (1, 1.0)},  # target outside state set
    ],
)
def test_hmm_rejects_invalid_transitions(transitions):
    with pytest.raises(ValueError):
        DeterministicHmm(state_count=1, transitions=transitions, start_states=(0,))


def test_hmm_rejects_bad_start_states():
    with pytest.raises(ValueError):
        DeterministicHmm(
            state_count=1, transitions={(0, "a"): (0, 1.0)}, start_states=()
        )
    with pytest.raises(ValueError):
        DeterministicHmm(
            state_count=1, transitions={(0, "a"): (0, 1.0)}, start_states=(3,)
        )


# -- infer_hmm --------------------------------------------------------------------

def test_alternating_stream_gives_two_certain_states():
    m = infer_hmm("ab" * 5000)
    assert m.state_count == 2
    assert m.transitions == {
        (0, "b"): (1, 1.0),
        (1, "a"): (0, 1.0),
    }
    assert m.start_states == (0, 1)


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        infer_hmm("ababa")
    with pytest.raises(InsufficientData):
        infer_hmm("")


def test_recovers_two_state_probabilities():
    truth = two_state_model(0.7, 0.4)
    rng = np.random.default_rng(6)
    stream = sample_symbols(truth, 100_000, rng)
    m = infer_hmm(stream)
    assert m.state_count == 2
    for key, (target, p) in truth.transitions.items():
        got_target, got_p = m.transitions[key]
        assert got_target == target
        assert abs(got_p - p) < 0.02


def test_iid_stream_merges_to_one_state():
    # alpha=0.05 falsely rejects a true merge ~5% of the time by design;
    # seed 0 draws a representative (mergeable) sample
    rng = np.random.default_rng(0)
    stream = "".join(rng.choice(["a", "b"], 10_000))
    m = infer_hmm(stream)
    assert m.state_count == 1
    assert abs(m.transitions[(0, "a")][1] - 0.5) < 0.05
    assert abs(m.transitions[(0, "b")][1] - 0.5) < 0.05


def test_dead_end_tail_is_removed_and_renormalized():
    # 'b' occurs only as the final symbol: its state cannot continue, so the
    # a-state's dangling transition is dropped and probability renormalizes
    m = infer_hmm("a" * 30 + "b")
    assert m.state_count == 1
    assert m.transitions == {(0, "a"): (0, 1.0)}


def test_incompatible_forced_successors_reject_merge():
    # "aab" cycle at window 2: states (a,b) and (b,a) emit identical rows
    # {'a': n}, but merging them forces (b,a) and (a,a) together, whose rows
    # {'a': n} vs {'b': n} are incompatible, so the merge must be rejected.
    stream = "aab" * 400
    m = infer_hmm(stream, window=2)
    assert m.state_count == 3
    certain = {k: v for k, v in m.transitions.items()}
    assert all(abs(p - 1.0) < 1e-12 for (_t, p) in certain.values())


def test_window_two_alternating():
    m = infer_hmm("ab" * 2000, window=2)
    assert m.state_count == 2
    assert all(p == 1.0 for (_t, p) in m.transitions.values())


# -- sampling and shaping ----------------------------------------------------------

def test_sample_symbols_zero_and_alphabet():
    truth = two_state_model()
    rng = np.random.default_rng(8)
    assert sample_symbols(truth, 0, rng) == ""
    stream = sample_symbols(truth, 1000, rng)
    assert set(stream) <= {"a", "b"}
    assert len(stream) == 1000


def test_shape_schedule_empty():
    truth = two_state_model()
    alphabet = ab_alphabet()
    assert shape_schedule(truth, alphabet, 0, np.random.default_rng(0)).size == 0


def test_deterministic_cycle_schedule_symbolizes_to_cycle():
    cycle = DeterministicHmm(
        state_count=2,
        transitions={(0, "a"): (1, 1.0), (1, "b"): (0, 1.0)},
        start_states=(0,),
    )
    alphabet = ab_alphabet()
    delays = shape_schedule(cycle, alphabet, 10, np.random.default_rng(9))
    assert symbolize(alphabet, delays) == "ababababab"


def test_schedule_delays_fall_in_bins():
    truth = two_state_model()
    alphabet = ab_alphabet()
    delays = shape_schedule(truth, alphabet, 2000, np.random.default_rng(10))
    syms = symbolize(alphabet, delays)
    # catch-all bin samples within one median-bin-width above its floor
    assert np.all(delays >= 0.0)
    assert np.all(delays[np.array(list(syms)) == "b"] < 0.02 + 0.02)
    assert np.all(delays[np.array(list(syms)) == "a"] < 0.02)


def test_closed_loop_reinference():
    truth = two_state_model(0.7, 0.4)
    alphabet = ab_alphabet()
    rng = np.random.default_rng(11)
    n = 20_000
    delays = shape_schedule(truth, alphabet, n, rng)
    m = infer_hmm(symbolize(alphabet, delays))
    assert m.state_count == truth.state_count
    for key, (target, p) in truth.transitions.items():
        got_target, got_p = m.transitions[key]
        assert got_target == target
        # within three standard errors of a frequency estimate
        se = math.sqrt(p * (1.0 - p) / (n / 2))
        assert abs(got_p - p) <= 3 * se + 1e-9


# -- model file ---------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    stream = sample_symbols(two_state_model(), 50_000, rng)
    hmm = infer_hmm(stream)
    model = TimingModel(hmm=hmm, alphabet=ab_alphabet(0.0213))
    p = tmp_path / "m.hmm"
    save_model(model, str(p))
    loaded = load_model(str(p))
    assert loaded == model
    assert loaded.hmm.transitions == model.hmm.transitions  # exact floats


def test_save_load_catchall_infinity(tmp_path):
    model = TimingModel(hmm=two_state_model(), alphabet=ab_alphabet())
    p = tmp_path / "m.hmm"
    save_model(model, str(p))
    assert math.isinf(load_model(str(p)).alphabet.bins[-1].hi)


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "m.hmm"
    p.write_text("nope\n")
    with pytest.raises(FormatError):
        load_model(str(p))


def test_load_rejects_truncation(tmp_path):
    model = TimingModel(hmm=two_state_model(), alphabet=ab_alphabet())
    p = tmp_path / "m.hmm"
    save_model(model, str(p))
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(FormatError):
        load_model(str(p))


def test_load_rejects_invalid_model(tmp_path):
    model = TimingModel(hmm=two_state_model(), alphabet=ab_alphabet())
    p = tmp_path / "m.hmm"
    save_model(model, str(p))
    text = p.read_text().replace("0.7", "0.9")  # break the probability sum
    p.write_text(text)
    with pytest.raises(FormatError, match="invalid model"):
        load_model(str(p))
