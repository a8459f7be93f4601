"""Threshold-sweep evaluation of the timing detector on synthetic cohorts.

Pipeline: load a corpus flow log, fit the timing model, generate N
model-shaped flows and N constant-rate counterfeit flows per seed, sweep the
detector across all thresholds, and write one CSV per seed plus a plain-text
report that places the results next to the reference operating points of the
three threshold regimes.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .config import ExperimentConfig
from .corpus import constant_rate_deltas
from .detector import COUNTERFEIT, GENUINE, SweepRow, evaluate, sweep_to_csv
from .errors import ConfigError
from .framelog import FrameLog, load_framelog
from .timing import (
    TimingModel,
    extract_deltas,
    infer_hmm,
    learn_alphabet,
    save_model,
    shape_schedule,
    symbolize,
)

# Reference operating points for the three threshold regimes of a two-state
# timing detector: accept-all at l = 0, mostly-accept up to 0.5, reject above.
REFERENCE_BANDS = (
    ("l = 0", 0.0, 0.0, 1.0, 1.0),
    ("0 < l <= 0.5", 0.0, 0.5, 1.0, 0.9611),
    ("0.5 < l <= 1", 0.5, 1.0, 0.0193, 0.0352),
)


# -- model construction ------------------------------------------------------------

def corpus_digest(frames: Iterable[bytes]) -> str:
    """sha256 over the concatenated frame bytes, hex encoded."""
    h = hashlib.sha256()
    for buf in frames:
        h.update(buf)
    return h.hexdigest()


def build_timing_model(
    log: FrameLog, bins: int = 2, window: int = 1, alpha: float = 0.05
) -> TimingModel:
    """Fit alphabet and HMM to the outbound timing of a flow log."""
    deltas = extract_deltas(log.timestamps("out"))
    alphabet = learn_alphabet(deltas, bins)
    hmm = infer_hmm(symbolize(alphabet, deltas), window=window, alpha=alpha)
    digest = corpus_digest(r.data for r in log.by_direction("out"))
    return TimingModel(hmm=hmm, alphabet=alphabet, corpus_digest=digest)


# -- flow cohorts ---------------------------------------------------------------------

def generate_flows(
    model: TimingModel,
    count: int,
    length: int,
    rate: float,
    rng: np.random.Generator,
) -> list[tuple[str, str]]:
    """``count`` model-shaped flows plus ``count`` constant-rate ones.

    Genuine flows replay the covert sender: delays drawn from the model,
    then symbolized back the way an observer would.  Counterfeit flows tick
    at the corpus mean rate with uniform jitter and no mode structure.
    """
    flows = []
    for _ in range(count):
        delays = shape_schedule(model.hmm, model.alphabet, length, rng)
        flows.append((GENUINE, symbolize(model.alphabet, delays)))
    for _ in range(count):
        deltas = constant_rate_deltas(length, rng, rate=rate)
        flows.append((COUNTERFEIT, symbolize(model.alphabet, deltas)))
    return flows


# -- report assembly ------------------------------------------------------------------

@dataclass(frozen=True)
class BandSummary:
    """Mean TPR/FPR of all sweep rows whose threshold falls in one band."""

    label: str
    tpr: float | None
    fpr: float | None
    ref_tpr: float
    ref_fpr: float
    row_count: int


@dataclass(frozen=True)
class ExperimentReport:
    out_dir: str
    model_path: str
    report_path: str
    csv_paths: dict[int, str]
    sweeps: dict[int, list[SweepRow]]
    bands: tuple[BandSummary, ...]


def summarize_bands(sweeps: Iterable[list[SweepRow]]) -> tuple[BandSummary, ...]:
    """Pool sweep rows from all seeds into the three threshold bands."""
    rows = [r for sweep in sweeps for r in sweep]
    out = []
    for label, lo, hi, ref_tpr, ref_fpr in REFERENCE_BANDS:
        if lo == hi:
            members = [r for r in rows if r.threshold == lo]
        else:
            members = [r for r in rows if lo < r.threshold <= hi]
        if members:
            tpr = sum(r.tpr for r in members) / len(members)
            fpr = sum(r.fpr for r in members) / len(members)
        else:
            tpr = fpr = None
        out.append(BandSummary(label, tpr, fpr, ref_tpr, ref_fpr, len(members)))
    return tuple(out)


def _fmt(value: float | None) -> str:
    return "   n/a" if value is None else f"{value:.4f}"


def _report_text(
    config: ExperimentConfig,
    model: TimingModel,
    rate: float,
    n_frames: int,
    mean_delta: float,
    sweeps: dict[int, list[SweepRow]],
    bands: tuple[BandSummary, ...],
) -> str:
    lines = [
        "timing detector threshold sweep",
        "===============================",
        "",
        f"corpus: {config.corpus} ({n_frames} frames out, "
        f"mean delta {mean_delta * 1000:.3f} ms, {rate:.1f} fps)",
        "alphabet: " + "; ".join(
            f"{b.label} [{b.lo:.6f}, {'inf' if b.hi == float('inf') else format(b.hi, '.6f')}) s"
            for b in model.alphabet.bins
        ),
        f"model: {model.hmm.state_count} states, corpus sha256 {model.corpus_digest}",
        f"cohorts per seed: {config.flow_count} genuine (model shaped) + "
        f"{config.flow_count} counterfeit (constant rate)",
        f"flow length: {config.flow_length} delays; confidence {config.confidence}",
        "",
    ]
    for seed in sorted(sweeps):
        lines.append(f"seed {seed} (sweep_{seed}.csv)")
        lines.append("  threshold     tpr     fpr")
        for r in sweeps[seed]:
            lines.append(f"  {r.threshold:9.2f}  {r.tpr:.4f}  {r.fpr:.4f}")
        lines.append("")
    lines.append("threshold bands (all seeds pooled, reference points beside)")
    lines.append("  band           tpr     fpr     ref tpr  ref fpr")
    for b in bands:
        lines.append(
            f"  {b.label:<13} {_fmt(b.tpr)}  {_fmt(b.fpr)}   "
            f"{b.ref_tpr:.4f}   {b.ref_fpr:.4f}"
        )
    lines.append("")
    return "\n".join(lines)


# -- driver ------------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, out_dir: str) -> ExperimentReport:
    """Run the full sweep described by ``config``, writing into ``out_dir``.

    Writes ``model.hmm``, one ``sweep_<seed>.csv`` per seed, and
    ``report.txt``.  Identical config and seeds give byte-identical files.

    Raises:
        NoFlowsForLabel: flow_count is 0.
        FormatError / TimingError subclasses: bad corpus or degenerate timing.
    """
    if not os.path.exists(config.corpus):
        raise ConfigError(f"corpus file not found: {config.corpus}")
    log = load_framelog(config.corpus)
    model = build_timing_model(log, config.bins, config.window, config.alpha)
    deltas = extract_deltas(log.timestamps("out"))
    mean_delta = float(np.mean(deltas))
    rate = 1.0 / mean_delta

    os.makedirs(out_dir, exist_ok=True)
    model_path = os.path.join(out_dir, "model.hmm")
    save_model(model, model_path)

    sweeps: dict[int, list[SweepRow]] = {}
    csv_paths: dict[int, str] = {}
    for seed in config.seeds:
        rng = np.random.default_rng(seed)
        flows = generate_flows(model, config.flow_count, config.flow_length, rate, rng)
        rows = evaluate(flows, model.hmm, config.thresholds, config.confidence)
        path = os.path.join(out_dir, f"sweep_{seed}.csv")
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(sweep_to_csv(rows))
        sweeps[seed] = rows
        csv_paths[seed] = path

    bands = summarize_bands(sweeps.values())
    report_path = os.path.join(out_dir, "report.txt")
    text = _report_text(
        config, model, rate, len(log.by_direction("out")), mean_delta, sweeps, bands
    )
    with open(report_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)

    return ExperimentReport(
        out_dir=out_dir,
        model_path=model_path,
        report_path=report_path,
        csv_paths=csv_paths,
        sweeps=sweeps,
        bands=bands,
    )
