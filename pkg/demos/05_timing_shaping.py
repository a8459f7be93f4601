"""Learn a timing model from a frame capture, then use it both ways.

Forward: shape outbound delays so they sample from the learned model.
Reverse: run the confidence-interval detector over a delay stream and
see whether every learned transition probability sits inside its
interval. Shaped traffic scores 1.0; a naive constant-rate sender does
not.
"""

import numpy as np

from pmucloak.corpus import CorpusParams, constant_rate_deltas, generate_corpus
from pmucloak.detector import detect
from pmucloak.timing import (
    extract_deltas,
    infer_hmm,
    learn_alphabet,
    shape_schedule,
    symbolize,
)


def main() -> None:
    rng = np.random.default_rng(1)
    log = generate_corpus(CorpusParams(duration=120.0), rng)
    deltas = extract_deltas([rec.seconds for rec in log.records])
    print(f"capture: {len(deltas)} inter-frame delays, "
          f"mean {deltas.mean() * 1000:.2f} ms")

    alphabet = learn_alphabet(deltas, k=2)
    for b in alphabet.bins:
        hi = "inf" if b.hi == float("inf") else f"{b.hi * 1000:.1f} ms"
        print(f"  bin {b.label!r}: [{b.lo * 1000:.1f} ms, {hi})")

    hmm = infer_hmm(symbolize(alphabet, deltas))
    print(f"inferred model: {hmm.state_count} states")
    for (state, sym), (nxt, p) in sorted(hmm.transitions.items()):
        print(f"  state {state} --{sym}--> state {nxt}  p={p:.3f}")
    print()

    shaped = shape_schedule(hmm, alphabet, 10_000, rng)
    print(f"shaped schedule: {len(shaped)} delays, "
          f"mean {shaped.mean() * 1000:.2f} ms")
    report = detect(hmm, symbolize(alphabet, shaped), threshold=0.5)
    print(f"detector vs shaped sender:   match = "
          f"{report.match_percentage:.2f}  -> "
          f"{'accepted' if report.verdict else 'rejected'}")

    naive = constant_rate_deltas(10_000, rng, rate=1.0 / deltas.mean())
    report = detect(hmm, symbolize(alphabet, naive), threshold=0.5)
    print(f"detector vs constant-rate:   match = "
          f"{report.match_percentage:.2f}  -> "
          f"{'accepted' if report.verdict else 'rejected'}")
    print()
    print("per-transition checks for the constant-rate flow:")
    for c in report.per_transition:
        mark = "in " if c.in_interval else "OUT"
        print(f"  ({c.state},{c.symbol}) ref={c.reference_p:.3f} "
              f"observed={c.observed_p:.3f} "
              f"ci=[{c.ci_lo:.3f}, {c.ci_hi:.3f}]  {mark}")


if __name__ == "__main__":
    main()
