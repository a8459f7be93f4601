"""Inter-packet delay symbolization and deterministic-HMM timing models.

The pipeline: receive timestamps become a delta trace; a symbol alphabet is
learned by cutting the delta histogram at the valleys between its strongest
modes; the symbol stream is fed to a zero-knowledge inference step that
builds a deterministic HMM (window-gram states, frequency transition
probabilities, chi-squared merging of statistically indistinguishable
states).  The same model then runs forward to shape outgoing traffic:
walking the HMM emits symbols, and each symbol is turned into a concrete
delay drawn uniformly from its bin.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import chi2_contingency

from .errors import (
    AbsorbingDeadEnd,
    DegenerateTraceWarning,
    FormatError,
    InsufficientData,
    NonMonotonicTimestamps,
    TooFewPackets,
)

_HIST_BINS = 128
_MAX_ALPHABET = 26  # labels a..z


# -- Delta extraction -----------------------------------------------------------

def extract_deltas(timestamps: Sequence[float]) -> np.ndarray:
    """Consecutive differences of a non-decreasing timestamp sequence.

    Raises:
        TooFewPackets: fewer than two timestamps.
        NonMonotonicTimestamps: a timestamp precedes its predecessor.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.ndim != 1 or ts.size < 2:
        raise TooFewPackets(f"need at least 2 timestamps, got {ts.size}")
    deltas = np.diff(ts)
    if np.any(deltas < 0):
        i = int(np.argmax(deltas < 0))
        raise NonMonotonicTimestamps(f"timestamp {i + 1} precedes timestamp {i}")
    return deltas


# -- Symbol alphabet ------------------------------------------------------------

@dataclass(frozen=True)
class AlphabetBin:
    """Half-open delay range [lo, hi) labeled with one symbol."""

    lo: float
    hi: float
    label: str


@dataclass(frozen=True)
class SymbolAlphabet:
    """Ordered bins covering [0, inf); the last bin is the catch-all."""

    bins: tuple[AlphabetBin, ...]

    def __post_init__(self) -> None:
        if not self.bins:
            raise ValueError("alphabet needs at least one bin")
        if self.bins[0].lo != 0.0 or not math.isinf(self.bins[-1].hi):
            raise ValueError("bins must cover [0, inf)")
        for a, b in zip(self.bins, self.bins[1:]):
            if a.hi != b.lo:
                raise ValueError(f"gap between bins {a.label!r} and {b.label!r}")
            if not a.lo < a.hi:
                raise ValueError(f"bin {a.label!r} is empty")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.bins)

    def boundaries(self) -> np.ndarray:
        """Finite upper edges, one per bin except the catch-all."""
        return np.array([b.hi for b in self.bins[:-1]], dtype=np.float64)

    def catchall_width(self) -> float:
        """Sampling width for the unbounded bin: median finite bin width."""
        widths = [b.hi - b.lo for b in self.bins[:-1]]
        if not widths:
            return 1.0
        return float(np.median(widths))


def _quantile_boundaries(deltas: np.ndarray, k: int) -> list[float]:
    bounds = [float(np.quantile(deltas, j / k)) for j in range(1, k)]
    out: list[float] = []
    prev = 0.0
    for b in bounds:
        b = max(b, np.nextafter(prev, math.inf))
        out.append(b)
        prev = b
    return out


def learn_alphabet(deltas: Sequence[float], k: int = 2) -> SymbolAlphabet:
    """Cut the delta distribution into ``k`` bins labeled a, b, c, ...

    Builds a histogram, keeps the ``k`` most populated non-adjacent local
    maxima, and places each boundary at the emptiest bin between neighboring
    peaks.  When fewer than ``k`` separated modes exist the boundaries fall
    back to k-quantiles and a DegenerateTraceWarning is issued.
    """
    arr = np.asarray(deltas, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot learn an alphabet from an empty trace")
    if not 2 <= k <= _MAX_ALPHABET:
        raise ValueError(f"bin count must be in [2, {_MAX_ALPHABET}], got {k}")

    bounds: list[float] | None = None
    if arr.min() < arr.max():
        n_bins = min(_HIST_BINS, max(16, arr.size // 8))
        hist, edges = np.histogram(arr, bins=n_bins)
        # A mode is a maximal run of occupied bins; runs tolerate sparse
        # stray counts in the gaps via a small relative floor.
        floor = hist.max() * 0.01
        occupied = hist > floor
        runs: list[tuple[int, int, int]] = []  # (start, end inclusive, mass)
        i = 0
        while i < n_bins:
            if occupied[i]:
                j = i
                while j + 1 < n_bins and occupied[j + 1]:
                    j += 1
                runs.append((i, j, int(hist[i : j + 1].sum())))
                i = j + 1
            else:
                i += 1
        if len(runs) >= k:
            # k most massive modes, then back in delay order
            chosen = sorted(sorted(runs, key=lambda r: (-r[2], r[0]))[:k])
            bounds = []
            for (_s1, end1, _m1), (start2, _e2, _m2) in zip(chosen, chosen[1:]):
                gap = hist[end1 + 1 : start2]
                valley = end1 + 1 + int(np.argmin(gap)) if gap.size else start2
                bounds.append(float((edges[valley] + edges[valley + 1]) / 2))

    if bounds is None:
        warnings.warn(
            f"trace has fewer than {k} separated modes; using quantile boundaries",
            DegenerateTraceWarning,
            stacklevel=2,
        )
        bounds = _quantile_boundaries(arr, k)

    lows = [0.0] + bounds
    highs = bounds + [math.inf]
    return SymbolAlphabet(
        bins=tuple(
            AlphabetBin(lo, hi, chr(ord("a") + i))
            for i, (lo, hi) in enumerate(zip(lows, highs))
        )
    )


def symbolize(alphabet: SymbolAlphabet, deltas: Sequence[float]) -> str:
    """Label each delta with the bin containing it; length-preserving."""
    arr = np.asarray(deltas, dtype=np.float64)
    if arr.size == 0:
        return ""
    idx = np.searchsorted(alphabet.boundaries(), arr, side="right")
    labels = alphabet.labels
    return "".join(labels[i] for i in idx)


# -- Deterministic HMM -----------------------------------------------------------

@dataclass(frozen=True)
class DeterministicHmm:
    """Finite model with at most one transition per (state, symbol).

    transitions maps (state, symbol) -> (next_state, probability); outgoing
    probabilities from every state sum to one.
    """

    state_count: int
    transitions: Mapping[tuple[int, str], tuple[int, float]]
    start_states: tuple[int, ...]
    _outgoing: dict = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        sums = [0.0] * self.state_count
        outgoing: dict[int, list[tuple[str, int, float]]] = {
            s: [] for s in range(self.state_count)
        }
        for (s, sym), (t, p) in self.transitions.items():
            if not 0 <= s < self.state_count or not 0 <= t < self.state_count:
                raise ValueError(f"transition ({s},{sym!r})->{t} leaves the state set")
            if not 0.0 < p <= 1.0:
                raise ValueError(f"probability {p} of ({s},{sym!r}) outside (0, 1]")
            sums[s] += p
            outgoing[s].append((sym, t, p))
        for s, total in enumerate(sums):
            if not outgoing[s]:
                raise AbsorbingDeadEnd(f"state {s} has no outgoing transitions")
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"state {s} outgoing probabilities sum to {total}")
        for s in self.start_states:
            if not 0 <= s < self.state_count:
                raise ValueError(f"start state {s} outside the state set")
        if not self.start_states:
            raise ValueError("need at least one start state")
        for s in outgoing:
            outgoing[s].sort()
        self._outgoing.update(outgoing)

    def alphabet_used(self) -> tuple[str, ...]:
        return tuple(sorted({sym for (_s, sym) in self.transitions}))

    def outgoing(self, state: int) -> list[tuple[str, int, float]]:
        """Transitions leaving ``state`` as (symbol, target, probability)."""
        return self._outgoing[state]


# -- Inference --------------------------------------------------------------------

def _chi2_compatible(
    row_a: dict[str, int], row_b: dict[str, int], alpha: float
) -> bool:
    """True when two outgoing count rows are statistically indistinguishable."""
    symbols = sorted(set(row_a) | set(row_b))
    table = np.array(
        [[row_a.get(c, 0) for c in symbols], [row_b.get(c, 0) for c in symbols]]
    )
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return True  # both states emit a single identical symbol
    _stat, p, _dof, _exp = chi2_contingency(table, correction=False)
    return bool(p >= alpha)


def infer_hmm(symbols: str, window: int = 1, alpha: float = 0.05) -> DeterministicHmm:
    """Build a deterministic HMM from a symbol stream.

    States start as the distinct ``window``-grams of the stream; transition
    probabilities come from frequency counts; states whose outgoing symbol
    distributions pass a chi-squared indistinguishability test at
    significance ``alpha`` are merged greedily until fixpoint.  A merge that
    would force two different successors onto one (state, symbol) pair is
    checked recursively: the successor pair must itself be mergeable, and
    the whole merge is rejected if any forced pair is incompatible.

    Raises:
        InsufficientData: stream shorter than 10 * |alphabet| ** window.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    distinct = len(set(symbols))
    need = 10 * max(distinct, 1) ** window
    if len(symbols) < need:
        raise InsufficientData(
            f"{len(symbols)} symbols < {need} required for "
            f"{distinct}-symbol alphabet at window {window}"
        )

    # -- count w-gram transitions
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    succ: dict[tuple[tuple[str, ...], str], tuple[str, ...]] = {}
    for i in range(len(symbols) - window):
        u = tuple(symbols[i : i + window])
        c = symbols[i + window]
        counts.setdefault(u, {})
        counts[u][c] = counts[u].get(c, 0) + 1
        succ[(u, c)] = tuple(symbols[i + 1 : i + window + 1])

    # -- drop states that never continue (at most the final w-gram), and any
    #    state whose transitions all funnel into dropped states
    states = set(counts)
    changed = True
    while changed:
        changed = False
        for u in list(states):
            live = {c: n for c, n in counts[u].items() if succ[(u, c)] in states}
            if not live:
                states.discard(u)
                changed = True
        if not states:
            raise InsufficientData("every candidate state is a dead end")
    for u in states:
        for c in list(counts[u]):
            if succ[(u, c)] not in states:
                del counts[u][c]

    # -- union-find over candidate states
    parent: dict[tuple[str, ...], tuple[str, ...]] = {u: u for u in states}

    def find(u: tuple[str, ...]) -> tuple[str, ...]:
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    def class_counts() -> dict[tuple[str, ...], dict[str, int]]:
        merged: dict[tuple[str, ...], dict[str, int]] = {}
        for u in states:
            r = find(u)
            row = merged.setdefault(r, {})
            for c, n in counts[u].items():
                row[c] = row.get(c, 0) + n
        return merged

    def class_succ(rep: tuple[str, ...], c: str) -> set[tuple[str, ...]]:
        outs = set()
        for u in states:
            if find(u) == rep and c in counts[u]:
                outs.add(find(succ[(u, c)]))
        return outs

    def forced_merge(a: tuple[str, ...], b: tuple[str, ...], rows) -> bool:
        """Merge classes a and b plus every successor pair the merge forces.

        Compatibility is judged on the class count rows as of the start of
        this merge attempt.  Commits the union-find only when the whole
        closure is compatible; returns False (state untouched) when any
        forced pair fails the test.
        """
        saved = dict(parent)
        pending = [(a, b)]
        processed: set[frozenset] = set()
        while pending:
            x, y = pending.pop()
            x, y = find(x), find(y)
            if x == y:
                continue
            key = frozenset((x, y))
            if key in processed:
                continue
            processed.add(key)
            if not _chi2_compatible(rows.get(x, {}), rows.get(y, {}), alpha):
                parent.clear()
                parent.update(saved)
                return False
            parent[y] = x
            # every symbol of the merged class must keep a single successor
            # class, so pair up all distinct successor reps per symbol
            merged_syms: set[str] = set()
            for u in states:
                if find(u) == x:
                    merged_syms.update(counts[u])
            for c in sorted(merged_syms):
                succs = sorted(class_succ(x, c))
                for m in range(len(succs)):
                    for n in range(m + 1, len(succs)):
                        pending.append((succs[m], succs[n]))
        return True

    while True:
        rows = class_counts()
        reps = sorted(rows)
        best: tuple[float, tuple[str, ...], tuple[str, ...]] | None = None
        merged_any = False
        for i in range(len(reps)):
            for j in range(i + 1, len(reps)):
                a, b = reps[i], reps[j]
                if _chi2_compatible(rows[a], rows[b], alpha):
                    if forced_merge(a, b, rows):
                        merged_any = True
                        break
            if merged_any:
                break
        if not merged_any:
            break

    # -- emit canonical model
    rows = class_counts()
    reps = sorted(rows)
    index = {r: i for i, r in enumerate(reps)}
    transitions: dict[tuple[int, str], tuple[int, float]] = {}
    for r in reps:
        total = sum(rows[r].values())
        for c, n in sorted(rows[r].items()):
            targets = class_succ(r, c)
            if len(targets) != 1:
                raise AssertionError(
                    f"class {r} has {len(targets)} successors on {c!r}"
                )
            (t,) = targets
            transitions[(index[r], c)] = (index[t], n / total)
    return DeterministicHmm(
        state_count=len(reps),
        transitions=transitions,
        start_states=tuple(range(len(reps))),
    )


# -- Sampling / shaping -----------------------------------------------------------

def sample_symbols(
    hmm: DeterministicHmm, n: int, rng: np.random.Generator
) -> str:
    """Walk the model for ``n`` steps, starting from a random start state."""
    if n <= 0:
        return ""
    state = int(rng.choice(hmm.start_states))
    out = []
    for _ in range(n):
        choices = hmm.outgoing(state)
        if len(choices) == 1:
            sym, state, _p = choices[0]
        else:
            r = float(rng.random())
            acc = 0.0
            sym, state = choices[-1][0], choices[-1][1]
            for c_sym, c_t, c_p in choices:
                acc += c_p
                if r < acc:
                    sym, state = c_sym, c_t
                    break
        out.append(sym)
    return "".join(out)


def shape_schedule(
    hmm: DeterministicHmm,
    alphabet: SymbolAlphabet,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample ``n`` inter-packet delays that mimic the model's timing.

    Each emitted symbol turns into a delay drawn uniformly from its bin;
    the catch-all bin uses [lo, lo + median finite bin width).
    """
    symbols = sample_symbols(hmm, n, rng)
    by_label = {b.label: b for b in alphabet.bins}
    width = alphabet.catchall_width()
    delays = np.empty(n, dtype=np.float64)
    u = rng.random(n)
    for i, sym in enumerate(symbols):
        b = by_label[sym]
        hi = b.lo + width if math.isinf(b.hi) else b.hi
        delays[i] = b.lo + u[i] * (hi - b.lo)
    return delays


# -- Model file -------------------------------------------------------------------

@dataclass(frozen=True)
class TimingModel:
    """An inferred HMM together with the alphabet it speaks."""

    hmm: DeterministicHmm
    alphabet: SymbolAlphabet
    corpus_digest: str = ""  # sha256 of the frames the model was trained on


_MAGIC = "pmucloak hmm v1"


def save_model(model: TimingModel, path: str) -> None:
    """Write alphabet bins and transitions as text; exact round trip."""
    lines = [_MAGIC]
    if model.corpus_digest:
        lines.append(f"corpus sha256 {model.corpus_digest}")
    lines.append(f"bins {len(model.alphabet.bins)}")
    for b in model.alphabet.bins:
        lines.append(f"bin {b.lo!r} {b.hi!r} {b.label}")
    lines.append(f"states {model.hmm.state_count}")
    lines.append("start " + " ".join(str(s) for s in model.hmm.start_states))
    for (s, sym), (t, p) in sorted(model.hmm.transitions.items()):
        lines.append(f"trans {s} {sym} {t} {p!r}")
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> TimingModel:
    """Read a model written by save_model.

    Raises:
        FormatError: wrong magic, malformed line, or truncated file.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise FormatError(f"{path}: not a '{_MAGIC}' file")
    try:
        pos = 1
        digest = ""
        if lines[pos].startswith("corpus "):
            digest = lines[pos].split(" ")[2]
            pos += 1
        n_bins = int(lines[pos].split()[1])
        pos += 1
        bins = []
        for _ in range(n_bins):
            _tag, lo, hi, label = lines[pos].split()
            bins.append(AlphabetBin(float(lo), float(hi), label))
            pos += 1
        alphabet = SymbolAlphabet(bins=tuple(bins))
        state_count = int(lines[pos].split()[1])
        pos += 1
        start = tuple(int(x) for x in lines[pos].split()[1:])
        pos += 1
        transitions: dict[tuple[int, str], tuple[int, float]] = {}
        while lines[pos] != "end":
            tag, s, sym, t, p = lines[pos].split()
            if tag != "trans":
                raise ValueError(f"unexpected line {lines[pos]!r}")
            transitions[(int(s), sym)] = (int(t), float(p))
            pos += 1
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed model file: {exc}") from None
    try:
        hmm = DeterministicHmm(
            state_count=state_count, transitions=transitions, start_states=start
        )
    except (ValueError, AbsorbingDeadEnd) as exc:
        raise FormatError(f"{path}: invalid model: {exc}") from None
    return TimingModel(hmm=hmm, alphabet=alphabet, corpus_digest=digest)
