"""Command line harness.

Subcommands: gen-corpus, build, tunnel client|server, detect, experiment.
Every subcommand accepts --config (flat key=value file, see docs/config.md)
and --seed; an explicit --seed replaces the config's seed list.

Exit codes, one per error family:
    0  success
    2  usage errors, bad config values, missing input files
    3  malformed artifact or log files
    4  frame encode/decode failures
    5  language/slice codec or field mapping failures
    6  timing model or detector failures
    7  tunnel transport or protocol failures
"""

from __future__ import annotations

import argparse
import dataclasses
import signal
import sys

import numpy as np

from .config import ExperimentConfig, load_config
from .corpus import CorpusParams, generate_corpus
from .detector import detect, evaluate, sweep_to_csv
from .errors import (
    CodecError,
    ConfigError,
    DetectorError,
    FormatError,
    FteError,
    MappingError,
    PmuCloakError,
    TimingError,
    TunnelError,
)
from .experiment import build_timing_model, run_experiment
from .framelog import FrameLog, load_framelog, make_record, save_framelog
from .mapping import build_mapping, save_mapping
from .timing import extract_deltas, load_model, save_model, symbolize
from .tunnel import PdcServer, TunnelConfig, run_pmu_side

_EXIT_BY_FAMILY = (
    (ConfigError, 2),
    (FormatError, 3),
    (CodecError, 4),
    (FteError, 5),
    (MappingError, 5),
    (TimingError, 6),
    (DetectorError, 6),
    (TunnelError, 7),
)


def _exit_code(exc: PmuCloakError) -> int:
    for family, code in _EXIT_BY_FAMILY:
        if isinstance(exc, family):
            return code
    return 1


class _Terminated(Exception):
    """Raised by the SIGTERM handler to unwind a tunnel session cleanly."""


def _sigterm(_signum, _frame):
    raise _Terminated


# -- shared option plumbing --------------------------------------------------------

def _load_experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def _first_seed(args, cfg: ExperimentConfig) -> int:
    return args.seed if args.seed is not None else cfg.seeds[0]


def _host_port(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _threshold_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated floats, got {text!r}")


def _key_bytes(text: str) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError("key must be hex digits")
    if not key:
        raise argparse.ArgumentTypeError("key must not be empty")
    return key


# -- subcommands --------------------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    cfg = _load_experiment_config(args)
    params = CorpusParams(
        duration=args.duration,
        frame_rate=args.rate,
        pmu_id=args.pmu_id,
        start_soc=args.start_soc,
        amp_noise=args.amp_noise,
        freq_noise=args.freq_noise,
    )
    rng = np.random.default_rng(_first_seed(args, cfg))
    log = generate_corpus(params, rng)
    out = args.out or cfg.corpus
    save_framelog(log, out)
    print(f"wrote {out}: {len(log.by_direction('out'))} frames at {args.rate:g} fps")
    return 0


def cmd_build(args) -> int:
    cfg = _load_experiment_config(args)
    corpus = args.corpus or cfg.corpus
    log = load_framelog(corpus)
    frames = [r.data for r in log.by_direction("out")]
    mapping = build_mapping(frames)
    save_mapping(mapping, args.mapping)
    model = build_timing_model(log, cfg.bins, cfg.window, cfg.alpha)
    save_model(model, args.hmm)
    print(
        f"wrote {args.mapping}: {len(mapping.carriers)} carriers, "
        f"{len(mapping.passives)} passive fields"
    )
    print(f"wrote {args.hmm}: {model.hmm.state_count} states over "
          f"{len(model.alphabet.bins)} bins")
    print(f"corpus sha256 {mapping.corpus_digest}")
    return 0


def _tunnel_config(args, cfg: ExperimentConfig) -> TunnelConfig:
    return TunnelConfig(
        mapping_path=args.mapping,
        hmm_path=args.hmm,
        key=args.key,
        pattern=cfg.regex,
        fixed_slice=cfg.fixed_slice,
        listen=getattr(args, "listen", None),
        connect=getattr(args, "connect", None),
        forward=getattr(args, "forward", None),
        shaped=not getattr(args, "unshaped", True),
        seed=_first_seed(args, cfg),
        stop_after=getattr(args, "stop_after", None),
        log_frames=getattr(args, "log", None) is not None,
    )


def cmd_tunnel_client(args) -> int:
    cfg = _load_experiment_config(args)
    if args.payload:
        with open(args.payload, "rb") as fh:
            payload = fh.read()
    else:
        payload = sys.stdin.buffer.read()
    old = signal.signal(signal.SIGTERM, _sigterm)
    print(f"streaming {len(payload)} bytes to {args.connect}",
          file=sys.stderr, flush=True)
    try:
        report = run_pmu_side(_tunnel_config(args, cfg), payload)
    except _Terminated:
        print("terminated by signal, shutting down", file=sys.stderr)
        return 0
    finally:
        signal.signal(signal.SIGTERM, old)
    print(f"sent {report.data_frames} frames, {report.acks} acks, "
          f"phase {report.phase.value}")
    if report.stopped_by_peer:
        print("peer stopped the stream early", file=sys.stderr)
    return 0


def cmd_tunnel_server(args) -> int:
    cfg = _load_experiment_config(args)
    server = PdcServer(_tunnel_config(args, cfg))
    host = server.cfg.listen[0]
    print(f"listening on {host}:{server.port}", flush=True)
    old = signal.signal(signal.SIGTERM, _sigterm)
    terminated = False
    try:
        report = server.serve_one()
    except _Terminated:
        # partial session: keep whatever arrived before the signal
        terminated = True
        report = server.last_report
    finally:
        signal.signal(signal.SIGTERM, old)
        server.close()
    if report is None:
        print("terminated before any connection", file=sys.stderr)
        return 0
    if args.out and not report.passthrough_only:
        with open(args.out, "wb") as fh:
            fh.write(report.payload)
    if args.log and report.frames:
        flow = FrameLog()
        for ts, frame in zip(report.frame_times, report.frames):
            flow.append(make_record(ts, "in", frame))
        save_framelog(flow, args.log)
    if terminated:
        print("terminated by signal, shutting down", file=sys.stderr)
    print(f"received {report.data_frames} frames, {report.slices} slices, "
          f"{report.payload_bytes} payload bytes")
    if report.passthrough_only:
        print(f"flow flagged passthrough-only: {report.passthrough_reason}",
              file=sys.stderr)
    if report.gap:
        print(f"warning: {report.gap}", file=sys.stderr)
    if args.out and not report.passthrough_only:
        print(f"wrote {args.out}")
    if args.log and report.frames:
        print(f"wrote {args.log}")
    return 0


def _flow_symbols(path: str, direction: str, model) -> str:
    log = load_framelog(path)
    if direction == "auto":
        counts = {d: len(log.by_direction(d)) for d in ("in", "out")}
        nonempty = [d for d, n in counts.items() if n >= 2]
        if len(nonempty) != 1:
            raise ConfigError(
                f"{path}: cannot infer direction (in={counts['in']}, "
                f"out={counts['out']}); pass --direction"
            )
        direction = nonempty[0]
    deltas = extract_deltas(log.timestamps(direction))
    return symbolize(model.alphabet, deltas)


def cmd_detect(args) -> int:
    cfg = _load_experiment_config(args)
    model = load_model(args.hmm)
    thresholds = args.thresholds or cfg.thresholds
    confidence = args.confidence if args.confidence is not None else cfg.confidence
    if args.genuine or args.counterfeit:
        if not (args.genuine and args.counterfeit):
            raise ConfigError("labeled mode needs both --genuine and --counterfeit")
        flows = [("genuine", _flow_symbols(p, args.direction, model))
                 for p in args.genuine]
        flows += [("counterfeit", _flow_symbols(p, args.direction, model))
                  for p in args.counterfeit]
        rows = evaluate(flows, model.hmm, thresholds, confidence)
        csv = sweep_to_csv(rows)
        if args.csv:
            with open(args.csv, "w", encoding="ascii", newline="\n") as fh:
                fh.write(csv)
            print(f"wrote {args.csv}")
        else:
            print(csv, end="")
        return 0
    if not args.flow:
        raise ConfigError("pass --flow, or --genuine/--counterfeit pairs")
    symbols = _flow_symbols(args.flow, args.direction, model)
    report = detect(model.hmm, symbols, thresholds[0], confidence)
    print(f"match_percentage {report.match_percentage:.4f}")
    print(f"traced fraction {report.traced_fraction:.4f}, "
          f"{report.breaks} trace breaks")
    for l in thresholds:
        word = "genuine" if report.verdict_at(l) else "counterfeit"
        print(f"threshold {l:g}: {word}")
    return 0


def cmd_experiment(args) -> int:
    if not args.config:
        raise ConfigError("experiment needs --config")
    cfg = _load_experiment_config(args)
    result = run_experiment(cfg, args.out)
    with open(result.report_path, encoding="ascii") as fh:
        text = fh.read()
    tail = text[text.index("threshold bands"):]
    print(tail, end="")
    print(f"report directory: {result.out_dir}")
    return 0


# -- parser -----------------------------------------------------------------------------

def _add_common(sub) -> None:
    sub.add_argument("--config", help="experiment config file")
    sub.add_argument("--seed", type=int, help="override the config seed list")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmucloak",
        description="Disguise byte streams as synchrophasor telemetry and "
                    "measure how detectable the disguise is.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-corpus", help="synthesize a PMU traffic corpus")
    p.add_argument("--out", help="output flow log (default: config corpus path)")
    p.add_argument("--duration", type=float, default=60.0, help="seconds of traffic")
    p.add_argument("--rate", type=float, default=30.0, help="nominal frames per second")
    p.add_argument("--pmu-id", type=int, default=7)
    p.add_argument("--start-soc", type=int, default=1_600_000_000)
    p.add_argument("--amp-noise", type=float, default=0.5)
    p.add_argument("--freq-noise", type=float, default=0.002)
    _add_common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = subs.add_parser("build", help="fit field mapping and timing model to a corpus")
    p.add_argument("--corpus", help="corpus flow log (default: config corpus path)")
    p.add_argument("--mapping", default="fields.map", help="mapping output path")
    p.add_argument("--hmm", default="timing.hmm", help="timing model output path")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = subs.add_parser("tunnel", help="run one side of the covert channel")
    roles = p.add_subparsers(dest="role", required=True)

    c = roles.add_parser("client", help="send a payload disguised as PMU traffic")
    c.add_argument("--mapping", required=True)
    c.add_argument("--hmm", required=True)
    c.add_argument("--key", required=True, type=_key_bytes, help="hex whitening key")
    c.add_argument("--connect", required=True, type=_host_port, metavar="HOST:PORT")
    c.add_argument("--payload", help="payload file (default: stdin)")
    c.add_argument("--unshaped", action="store_true",
                   help="send frames back to back instead of model-shaped")
    _add_common(c)
    c.set_defaults(func=cmd_tunnel_client)

    s = roles.add_parser("server", help="decode a disguised stream")
    s.add_argument("--mapping", required=True)
    s.add_argument("--hmm", required=True)
    s.add_argument("--key", required=True, type=_key_bytes, help="hex whitening key")
    s.add_argument("--listen", required=True, type=_host_port, metavar="HOST:PORT")
    s.add_argument("--forward", type=_host_port, metavar="HOST:PORT",
                   help="forward the recovered payload over TCP")
    s.add_argument("--out", help="write the recovered payload to a file")
    s.add_argument("--log", help="write received frames as a flow log")
    s.add_argument("--stop-after", type=int, help="send a stop after N data frames")
    _add_common(s)
    s.set_defaults(func=cmd_tunnel_server)

    p = subs.add_parser("detect", help="score flows against a timing model")
    p.add_argument("--hmm", required=True, help="timing model file")
    p.add_argument("--flow", help="a single flow log to score")
    p.add_argument("--genuine", action="append", help="labeled genuine flow log")
    p.add_argument("--counterfeit", action="append", help="labeled counterfeit flow log")
    p.add_argument("--csv", help="write the sweep table here (labeled mode)")
    p.add_argument("--thresholds", type=_threshold_list,
                   help="comma separated thresholds")
    p.add_argument("--confidence", type=float)
    p.add_argument("--direction", choices=("in", "out", "auto"), default="auto")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = subs.add_parser("experiment", help="run the full detector sweep")
    p.add_argument("--out", default="experiment-out", help="report directory")
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except PmuCloakError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
