"""Confidence-interval detector: does an observed flow walk like the model?

The detector traces a symbol stream through a reference deterministic HMM,
counting every transition it takes.  Each reference transition probability
is then checked against the Wald confidence interval of its observed
frequency; the fraction of reference probabilities inside their intervals
is the match percentage, and a flow is accepted when that percentage
exceeds the threshold.  An evaluation harness sweeps thresholds over
labeled flows and reports TPR/FPR rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from scipy.stats import norm

from .errors import EmptyObservation, NoFlowsForLabel
from .timing import DeterministicHmm

GENUINE = "genuine"
COUNTERFEIT = "counterfeit"


# -- Tracing ----------------------------------------------------------------------

@dataclass(frozen=True)
class TraceResult:
    """Transition counts from walking a stream through the model."""

    counts: Mapping[tuple[int, str], int]
    consumed: int
    total: int
    breaks: int

    @property
    def traced_fraction(self) -> float:
        return self.consumed / self.total if self.total else 0.0


def _walk_length(hmm: DeterministicHmm, symbols: str, start: int, state: int) -> int:
    """How many symbols from ``start`` a walk beginning at ``state`` consumes."""
    n = len(symbols)
    i = start
    while i < n:
        nxt = hmm.transitions.get((state, symbols[i]))
        if nxt is None:
            break
        state = nxt[0]
        i += 1
    return i - start


def trace(hmm: DeterministicHmm, symbols: str) -> TraceResult:
    """Consume ``symbols`` along deterministic paths, counting transitions.

    Starts from the state consuming the longest prefix (every state is a
    candidate; ties go to the lowest state id).  When no transition exists
    for the next symbol, a break is recorded and the state search restarts
    at the failure point; if no state can consume the symbol at all, it is
    skipped.

    Raises:
        EmptyObservation: empty symbol stream.
    """
    if not symbols:
        raise EmptyObservation("cannot trace an empty symbol stream")
    counts: dict[tuple[int, str], int] = {}
    i = 0
    n = len(symbols)
    consumed = 0
    breaks = 0
    fresh = True
    while i < n:
        best_state = -1
        best_len = -1
        for s in range(hmm.state_count):
            length = _walk_length(hmm, symbols, i, s)
            if length > best_len:
                best_state, best_len = s, length
        if best_len <= 0:
            # no state accepts this symbol: skip it and try the next
            if not fresh:
                breaks += 1
                fresh = True
            i += 1
            continue
        if not fresh:
            breaks += 1
        state = best_state
        for _ in range(best_len):
            key = (state, symbols[i])
            counts[key] = counts.get(key, 0) + 1
            state = hmm.transitions[key][0]
            i += 1
            consumed += 1
        fresh = False
    return TraceResult(counts=counts, consumed=consumed, total=n, breaks=breaks)


# -- Confidence intervals -----------------------------------------------------------

@dataclass(frozen=True)
class TransitionCheck:
    """One reference transition against its observed frequency interval."""

    state: int
    symbol: str
    reference_p: float
    observed_p: float | None
    ci_lo: float | None
    ci_hi: float | None
    in_interval: bool
    evaluable: bool


def wald_interval(count: int, total: int, confidence: float) -> tuple[float, float]:
    """Wald interval for a frequency estimate, clipped to [0, 1].

    At the degenerate endpoints (count 0 or count == total) the raw width
    collapses to zero; the half-width is widened to 1/(2 total) so a single
    run of observations cannot assert certainty.
    """
    if total <= 0:
        raise ValueError("total must be positive")
    p = count / total
    z = float(norm.ppf((1.0 + confidence) / 2.0))
    half = z * math.sqrt(p * (1.0 - p) / total)
    if count == 0 or count == total:
        half = 1.0 / (2.0 * total)
    return max(0.0, p - half), min(1.0, p + half)


def confidence_intervals(
    hmm: DeterministicHmm,
    counts: Mapping[tuple[int, str], int],
    confidence: float = 0.95,
) -> list[TransitionCheck]:
    """Check every reference transition against its observed Wald interval.

    A state never visited by the trace has no frequency estimates; its
    transitions are marked not evaluable and count as misses.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    state_totals: dict[int, int] = {}
    for (s, _c), k in counts.items():
        state_totals[s] = state_totals.get(s, 0) + k
    checks = []
    for (s, c), (_t, ref_p) in sorted(hmm.transitions.items()):
        total = state_totals.get(s, 0)
        if total == 0:
            checks.append(
                TransitionCheck(s, c, ref_p, None, None, None, False, False)
            )
            continue
        k = counts.get((s, c), 0)
        lo, hi = wald_interval(k, total, confidence)
        checks.append(
            TransitionCheck(
                s, c, ref_p, k / total, lo, hi, lo <= ref_p <= hi, True
            )
        )
    return checks


# -- Detection -----------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionReport:
    """Outcome of matching one flow against the reference model."""

    traced_fraction: float
    breaks: int
    per_transition: tuple[TransitionCheck, ...]
    match_percentage: float
    threshold: float
    verdict: bool

    def verdict_at(self, threshold: float) -> bool:
        return self.match_percentage > threshold


def detect(
    hmm: DeterministicHmm,
    symbols: str,
    threshold: float,
    confidence: float = 0.95,
) -> DetectionReport:
    """Trace, interval-check, and accept iff match percentage > threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    result = trace(hmm, symbols)
    checks = confidence_intervals(hmm, result.counts, confidence)
    hits = sum(1 for c in checks if c.in_interval)
    match = hits / len(checks) if checks else 0.0
    return DetectionReport(
        traced_fraction=result.traced_fraction,
        breaks=result.breaks,
        per_transition=tuple(checks),
        match_percentage=match,
        threshold=threshold,
        verdict=match > threshold,
    )


# -- Evaluation harness ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    threshold: float
    tpr: float
    fpr: float
    n_genuine: int
    n_counterfeit: int


def evaluate(
    flows: Iterable[tuple[str, str]],
    hmm: DeterministicHmm,
    thresholds: Sequence[float],
    confidence: float = 0.95,
) -> list[SweepRow]:
    """TPR/FPR over labeled flows for each threshold.

    ``flows`` yields (label, symbol-stream) pairs labeled "genuine" or
    "counterfeit".  The match percentage of each flow is computed once and
    swept against all thresholds.

    Raises:
        NoFlowsForLabel: a label has no flows (its rate would be 0/0).
        ValueError: unknown label.
    """
    matches: dict[str, list[float]] = {GENUINE: [], COUNTERFEIT: []}
    for label, symbols in flows:
        if label not in matches:
            raise ValueError(f"flow label must be genuine/counterfeit, got {label!r}")
        report = detect(hmm, symbols, 0.0, confidence)
        matches[label].append(report.match_percentage)
    for label, scores in matches.items():
        if not scores:
            raise NoFlowsForLabel(f"no flows labeled {label!r}")
    rows = []
    for l in thresholds:
        tpr = sum(1 for m in matches[GENUINE] if m > l) / len(matches[GENUINE])
        fpr = sum(1 for m in matches[COUNTERFEIT] if m > l) / len(
            matches[COUNTERFEIT]
        )
        rows.append(
            SweepRow(
                threshold=float(l),
                tpr=tpr,
                fpr=fpr,
                n_genuine=len(matches[GENUINE]),
                n_counterfeit=len(matches[COUNTERFEIT]),
            )
        )
    return rows


def sweep_to_csv(rows: Iterable[SweepRow]) -> str:
    """Serialize sweep rows as the canonical CSV table."""
    out = ["threshold,tpr,fpr,n_genuine,n_counterfeit"]
    for r in rows:
        out.append(
            f"{r.threshold!r},{r.tpr!r},{r.fpr!r},{r.n_genuine},{r.n_counterfeit}"
        )
    return "\n".join(out) + "\n"
