"""TCP session tunnel: carries an arbitrary payload as synchrophasor traffic.

The sending side (PMU role) connects out, completes the standard command
handshake, then streams data frames built by the slice codec and the
field mapper, with inter-frame gaps drawn from the timing model. The
receiving side (PDC role) listens, drives the handshake, checksums and
acknowledges every data frame, reassembles slices and forwards the
decoded payload.

Wire framing: each ciphertext slice of ``fixed_slice`` symbols plus a
one-symbol continuation marker ('1' = more slices follow, '0' = final)
is split across ceil((fixed_slice + 1) / symbols_per_frame) data frames;
leftover symbol positions in the last frame of a group are padded with
random symbols that decode positions past the marker simply ignore.
"""

from __future__ import annotations

import enum
import logging
import math
import os
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    BadSliceLength,
    ConfigError,
    HandshakeTimeout,
    LengthHeaderCorrupt,
    NotInLanguage,
    PeerProtocolViolation,
    TransportFailure,
    UnknownCommandCode,
    ValueOutOfDictionary,
)
from .frames import (
    PHASOR_COUNT,
    SYNC_LEAD,
    TIME_BASE,
    TYPE_BYTE_COMMAND,
    TYPE_BYTE_CONFIG,
    TYPE_BYTE_DATA,
    CommandCode,
    CommandFrame,
    ConfigFrame,
    crc16,
    decode_command_frame,
    decode_config_frame,
    encode_command_frame,
    encode_config_frame,
    frame_kind,
)
from .fte import FteConfig, make_codec
from .mapping import SYMBOLS, FieldMapping, FrameMapper, load_mapping
from .timing import TimingModel, load_model

log = logging.getLogger("pmucloak.tunnel")

MARKER_MORE = "1"
MARKER_FINAL = "0"

_TYPE_BYTES = (TYPE_BYTE_DATA, TYPE_BYTE_CONFIG, TYPE_BYTE_COMMAND)
_MIN_FRAME = 8  # sync + size + id + crc
_RECV_SIZE = 65536
_SEND_BATCH = 16384  # unshaped mode coalesces frame writes up to this size
_SPIN = 0.0015  # sleep undershoot absorbed by spinning, seconds


def _log_event(event: str, session: str, **kv) -> None:
    extra = "".join(f" {k}={v}" for k, v in kv.items())
    log.info("event=%s session=%s%s", event, session, extra)


# -- frame delimiting over a byte stream ----------------------------------------

@dataclass(frozen=True)
class ResyncEvent:
    """One contiguous run of discarded bytes, by absolute stream offset."""

    offset: int
    skipped: int


class FrameScanner:
    """Splits a TCP byte stream into checksum-valid frames.

    Hunts for a sync word, reads the declared frame size, and accepts the
    candidate only if its trailing CRC checks out; anything else slides
    one byte. Consecutive slides coalesce into a single ResyncEvent.
    """

    def __init__(self):
        self._buf = bytearray()
        self._base = 0  # absolute offset of _buf[0]
        self._skip_start: int | None = None
        self.events: list[ResyncEvent] = []
        self.checksum_failures = 0

    def _mark_skip(self, pos: int) -> None:
        if self._skip_start is None:
            self._skip_start = self._base + pos

    def _close_skip(self, pos: int) -> None:
        if self._skip_start is not None:
            absolute = self._base + pos
            self.events.append(ResyncEvent(self._skip_start, absolute - self._skip_start))
            self._skip_start = None

    def feed(self, data: bytes) -> list[bytes]:
        """Consume bytes, return every complete valid frame found."""
        self._buf += data
        buf = self._buf
        frames: list[bytes] = []
        pos = 0
        while len(buf) - pos >= 4:
            if buf[pos] != SYNC_LEAD or buf[pos + 1] not in _TYPE_BYTES:
                self._mark_skip(pos)
                pos += 1
                continue
            size = (buf[pos + 2] << 8) | buf[pos + 3]
            if size < _MIN_FRAME:
                self._mark_skip(pos)
                pos += 1
                continue
            if len(buf) - pos < size:
                break  # wait for the rest of the candidate
            candidate = bytes(buf[pos : pos + size])
            if crc16(candidate[:-2]) == int.from_bytes(candidate[-2:], "big"):
                self._close_skip(pos)
                frames.append(candidate)
                pos += size
            else:
                self.checksum_failures += 1
                self._mark_skip(pos)
                pos += 1
        del buf[:pos]
        self._base += pos
        return frames


def framing_read(source: Iterable[bytes]) -> Iterator[bytes]:
    """Yield valid frames from an iterable of byte chunks (files, sockets)."""
    scanner = FrameScanner()
    for chunk in source:
        yield from scanner.feed(chunk)


# -- session configuration ---------------------------------------------------------

class Phase(enum.Enum):
    AWAIT_STOP = "AwaitStop"
    AWAIT_CONFIG_REQUEST = "AwaitConfigRequest"
    CONFIG_SENT = "ConfigSent"
    AWAIT_START = "AwaitStart"
    STREAMING = "Streaming"
    STOPPED = "Stopped"


@dataclass(frozen=True)
class TunnelConfig:
    """Everything a session endpoint needs; endpoints are (host, port)."""

    mapping_path: str
    hmm_path: str
    key: bytes
    pattern: str = "^[0-9a-f]+$"
    fixed_slice: int = 512
    listen: tuple[str, int] | None = None
    connect: tuple[str, int] | None = None
    forward: tuple[str, int] | None = None
    shaped: bool = True
    seed: int | None = None
    handshake_timeout: float = 10.0
    stream_timeout: float = 30.0
    stop_after: int | None = None  # pdc side: send a stop after N data frames
    log_frames: bool = False  # pdc side: keep received data frame bytes


class TunnelContext:
    """Loaded artifacts plus the derived slice-group geometry."""

    def __init__(self, cfg: TunnelConfig):
        self.cfg = cfg
        self.mapping: FieldMapping = load_mapping(cfg.mapping_path)
        self.model: TimingModel = load_model(cfg.hmm_path)
        self.codec = make_codec(cfg.pattern, FteConfig(cfg.fixed_slice, cfg.key))
        foreign = set(self.codec.language.alphabet) - set(SYMBOLS)
        if foreign:
            raise ConfigError(
                f"pattern emits {sorted(foreign)}; slice characters must stay "
                f"within the field symbol set {SYMBOLS!r}"
            )
        spf = self.mapping.symbols_per_frame
        if spf == 0:
            raise ConfigError("mapping has no carrier fields, frames cannot carry data")
        # slice + 1 marker symbol, split across whole frames
        self.frames_per_slice = -(-(cfg.fixed_slice + 1) // spf)
        self.group_symbols = self.frames_per_slice * spf
        if self.codec.language.capacity_bits > self.frames_per_slice * self.mapping.bits_per_frame:
            raise ConfigError("slice capacity exceeds what one frame group carries")

    def soc_now(self) -> int | None:
        if self.mapping.soc_mode == "wallclock":
            return int(time.time())
        return None

    def corpus_pmu_id(self) -> int:
        for p in self.mapping.passives:
            if p.name == "pmu_id":
                return int(p.values[0])
        return 0


@dataclass
class SessionReport:
    """Outcome of one session, either role."""

    role: str
    session_id: str
    phase: Phase = Phase.AWAIT_STOP
    config: ConfigFrame | None = None
    data_frames: int = 0
    acks: int = 0
    slices: int = 0
    payload_bytes: int = 0
    stray_frames: int = 0
    resync_events: int = 0
    checksum_failures: int = 0
    stopped_by_peer: bool = False
    passthrough_only: bool = False
    passthrough_reason: str = ""
    gap: str = ""
    frame_times: list[float] = field(default_factory=list)
    frames: list[bytes] = field(default_factory=list)  # kept only when log_frames
    payload: bytes = b""


# -- shaped sending ------------------------------------------------------------------

class _ShapedDelays:
    """Stateful per-frame delay sampler; same draw rules as shape_schedule."""

    def __init__(self, model: TimingModel, rng: np.random.Generator):
        self._hmm = model.hmm
        self._bins = {b.label: b for b in model.alphabet.bins}
        self._width = model.alphabet.catchall_width()
        self._rng = rng
        self._state = int(rng.choice(self._hmm.start_states))

    def next_delay(self) -> float:
        row = self._hmm.outgoing(self._state)
        symbol, target, _ = row[-1]
        r = self._rng.random()
        acc = 0.0
        for s, t, p in row:
            acc += p
            if r < acc:
                symbol, target = s, t
                break
        self._state = target
        b = self._bins[symbol]
        hi = b.lo + self._width if math.isinf(b.hi) else b.hi
        return b.lo + float(self._rng.random()) * (hi - b.lo)


def _sleep_until(target: float) -> None:
    # schedule against absolute monotonic time so sleep overshoot cannot
    # accumulate; the last _SPIN seconds busy-wait for sub-ms precision
    while True:
        dt = target - time.monotonic()
        if dt <= 0:
            return
        if dt > _SPIN:
            time.sleep(dt - _SPIN)
        else:
            while time.monotonic() < target:
                pass
            return


# -- socket plumbing ----------------------------------------------------------------

def _new_session_id() -> str:
    return os.urandom(4).hex()


def _send_command(sock: socket.socket, code: CommandCode, pmu_id: int) -> None:
    now = time.time()
    frame = CommandFrame(
        command_code=code,
        pmu_id=pmu_id,
        soc=int(now),
        frac_sec=int((now % 1.0) * TIME_BASE),
    )
    try:
        sock.sendall(encode_command_frame(frame))
    except OSError as exc:
        raise TransportFailure(f"sending {code.name}: {exc}") from exc


class _SessionIO:
    """Blocking frame reader over one socket, shared scanner state."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.scanner = FrameScanner()
        self.pending: deque[bytes] = deque()

    def next_frame(self, deadline: float, stage: str) -> bytes:
        while not self.pending:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise HandshakeTimeout(f"timed out waiting for {stage}")
            self.sock.settimeout(remaining)
            try:
                data = self.sock.recv(_RECV_SIZE)
            except socket.timeout:
                raise HandshakeTimeout(f"timed out waiting for {stage}") from None
            except OSError as exc:
                raise TransportFailure(f"receive failed during {stage}: {exc}") from exc
            if not data:
                raise TransportFailure(f"connection closed during {stage}")
            self.pending.extend(self.scanner.feed(data))
        return self.pending.popleft()


def _expect_command(io: _SessionIO, deadline: float, code: CommandCode) -> CommandFrame:
    frame = io.next_frame(deadline, f"command {code.name}")
    kind = frame_kind(frame)
    if kind != "command":
        raise PeerProtocolViolation(f"expected {code.name}, peer sent a {kind} frame")
    try:
        cmd = decode_command_frame(frame)
    except UnknownCommandCode as exc:
        raise PeerProtocolViolation(f"unparseable command: {exc}") from exc
    if cmd.command_code != code:
        raise PeerProtocolViolation(
            f"expected {code.name}, peer sent {cmd.command_code.name}"
        )
    return cmd


def _connect(endpoint: tuple[str, int], timeout: float) -> socket.socket:
    try:
        sock = socket.create_connection(endpoint, timeout=timeout)
    except OSError as exc:
        raise TransportFailure(f"cannot connect to {endpoint[0]}:{endpoint[1]}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


# -- PMU side (sender) ----------------------------------------------------------------

def _config_blob(pmu_id: int) -> bytes:
    name = f"STATION-{pmu_id}".encode("ascii")[:16].ljust(16, b"\x00")
    return struct.pack(">16sHI", name, PHASOR_COUNT, TIME_BASE)


def _payload_frames(ctx: TunnelContext, payload: bytes, rng: np.random.Generator):
    """Yield the wire bytes of every data frame carrying the payload."""
    size = ctx.codec.payload_bytes
    chunks = [payload[i : i + size] for i in range(0, len(payload), size)] or [b""]
    spf = ctx.mapping.symbols_per_frame
    mapper = FrameMapper(ctx.mapping)
    for index, chunk in enumerate(chunks):
        marker = MARKER_FINAL if index == len(chunks) - 1 else MARKER_MORE
        symbols = ctx.codec.encode_slice(chunk, index) + marker
        pad = ctx.group_symbols - len(symbols)
        if pad:
            symbols += "".join(SYMBOLS[j] for j in rng.integers(0, len(SYMBOLS), pad))
        for f in range(ctx.frames_per_slice):
            yield mapper.map_symbols(symbols[f * spf : (f + 1) * spf], rng, soc=ctx.soc_now())


def _pmu_reader(
    sock: socket.socket,
    io: _SessionIO,
    stop: threading.Event,
    finished: threading.Event,
    report: SessionReport,
) -> None:
    sock.settimeout(0.2)
    while True:
        try:
            data = sock.recv(_RECV_SIZE)
        except socket.timeout:
            if finished.is_set():
                return
            continue
        except OSError:
            return
        if not data:
            return
        io.pending.extend(io.scanner.feed(data))
        while io.pending:
            frame = io.pending.popleft()
            if frame_kind(frame) != "command":
                continue  # nothing else is legal PDC->PMU; ignore, not fatal
            try:
                cmd = decode_command_frame(frame)
            except UnknownCommandCode:
                continue
            if cmd.command_code == CommandCode.ACK:
                report.acks += 1
            elif cmd.command_code == CommandCode.DATA_OFF:
                report.stopped_by_peer = True
                stop.set()
                _log_event("stop_command", report.session_id, acks=report.acks)


def run_pmu_side(cfg: TunnelConfig, payload: bytes) -> SessionReport:
    """Stream ``payload`` to the PDC endpoint as shaped synchrophasor frames.

    Completes the stop / config-request / config / start handshake first,
    then sends data frames until the payload (plus final marker) is out or
    a stop command arrives. Raises HandshakeTimeout, PeerProtocolViolation
    or TransportFailure; a peer-initiated stop is a normal outcome.
    """
    if cfg.connect is None:
        raise ConfigError("pmu side needs a connect endpoint")
    ctx = TunnelContext(cfg)
    rng = np.random.default_rng(cfg.seed)
    report = SessionReport(role="pmu-side", session_id=_new_session_id())
    sock = _connect(cfg.connect, cfg.handshake_timeout)
    try:
        io = _SessionIO(sock)
        deadline = time.monotonic() + cfg.handshake_timeout
        report.phase = Phase.AWAIT_STOP
        _expect_command(io, deadline, CommandCode.DATA_OFF)
        report.phase = Phase.AWAIT_CONFIG_REQUEST
        _expect_command(io, deadline, CommandCode.SEND_CONFIG)
        pmu_id = ctx.corpus_pmu_id()
        now = time.time()
        config = ConfigFrame(
            payload=_config_blob(pmu_id),
            pmu_id=pmu_id,
            soc=int(now),
            frac_sec=int((now % 1.0) * TIME_BASE),
        )
        sock.sendall(encode_config_frame(config))
        report.config = config
        report.phase = Phase.CONFIG_SENT
        report.phase = Phase.AWAIT_START
        _expect_command(io, deadline, CommandCode.DATA_ON)
        report.phase = Phase.STREAMING
        _log_event("streaming", report.session_id, payload_bytes=len(payload))

        stop = threading.Event()
        finished = threading.Event()
        reader = threading.Thread(
            target=_pmu_reader, args=(sock, io, stop, finished, report), daemon=True
        )
        reader.start()
        shaper = _ShapedDelays(ctx.model, rng) if cfg.shaped else None
        next_send = time.monotonic()
        batch = bytearray()  # unshaped frames are coalesced per write
        try:
            for wire in _payload_frames(ctx, payload, rng):
                if stop.is_set():
                    break
                if shaper is not None and report.data_frames > 0:
                    next_send += shaper.next_delay()
                    _sleep_until(next_send)
                    if stop.is_set():  # the reader halts us between frames
                        break
                if shaper is None:
                    batch.extend(wire)
                    report.data_frames += 1
                    if len(batch) < _SEND_BATCH:
                        continue
                    wire = bytes(batch)
                    batch.clear()
                else:
                    report.data_frames += 1
                try:
                    sock.sendall(wire)
                except OSError as exc:
                    raise TransportFailure(f"sending data frame: {exc}") from exc
            if batch:
                try:
                    sock.sendall(batch)
                except OSError as exc:
                    raise TransportFailure(f"sending data frame: {exc}") from exc
        finally:
            report.phase = Phase.STOPPED
            finished.set()
        try:
            sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        reader.join(timeout=2.0)
        _log_event(
            "session_end", report.session_id,
            role=report.role, frames=report.data_frames, acks=report.acks,
            stopped_by_peer=report.stopped_by_peer,
        )
        return report
    finally:
        sock.close()


# -- PDC side (receiver/decoder) -------------------------------------------------------

class PdcServer:
    """Listening PDC endpoint; binds immediately so tests can read the port."""

    def __init__(self, cfg: TunnelConfig):
        if cfg.listen is None:
            raise ConfigError("pdc side needs a listen endpoint")
        self.cfg = cfg
        self.ctx = TunnelContext(cfg)
        try:
            self._server = socket.create_server(cfg.listen)
        except OSError as exc:
            raise TransportFailure(f"cannot listen on {cfg.listen}: {exc}") from exc
        self.port = self._server.getsockname()[1]
        self.last_report: SessionReport | None = None

    def close(self) -> None:
        self._server.close()

    def _open_forward(self, sink, report: SessionReport):
        if sink is not None:
            return sink, lambda: None
        if self.cfg.forward is not None:
            fsock = _connect(self.cfg.forward, self.cfg.handshake_timeout)

            def send(chunk: bytes) -> None:
                try:
                    fsock.sendall(chunk)
                except OSError as exc:
                    raise TransportFailure(f"forward endpoint: {exc}") from exc

            return send, fsock.close
        collected = bytearray()

        def keep(chunk: bytes) -> None:
            collected.extend(chunk)
            report.payload = bytes(collected)

        return keep, lambda: None

    def serve_one(self, sink=None) -> SessionReport:
        """Accept one connection and run a full session on it.

        ``sink`` overrides the forward endpoint with an in-process callable
        taking byte chunks (used by tests and the experiment driver).
        """
        report = SessionReport(role="pdc-side", session_id=_new_session_id())
        self.last_report = report
        self._server.settimeout(self.cfg.handshake_timeout)
        try:
            conn, peer = self._server.accept()
        except socket.timeout:
            raise HandshakeTimeout("no connection arrived") from None
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        _log_event("accepted", report.session_id, peer=f"{peer[0]}:{peer[1]}")
        forward, close_forward = self._open_forward(sink, report)
        try:
            self._run_session(conn, report, forward)
        finally:
            close_forward()
            conn.close()
        _log_event(
            "session_end", report.session_id,
            role=report.role, frames=report.data_frames, slices=report.slices,
            payload_bytes=report.payload_bytes,
            passthrough_only=report.passthrough_only, gap=bool(report.gap),
        )
        return report

    def _run_session(self, conn: socket.socket, report: SessionReport, forward) -> None:
        cfg, ctx = self.cfg, self.ctx
        io = _SessionIO(conn)
        deadline = time.monotonic() + cfg.handshake_timeout
        pmu_id = ctx.corpus_pmu_id()
        report.phase = Phase.AWAIT_STOP
        _send_command(conn, CommandCode.DATA_OFF, pmu_id)
        report.phase = Phase.AWAIT_CONFIG_REQUEST
        _send_command(conn, CommandCode.SEND_CONFIG, pmu_id)
        frame = io.next_frame(deadline, "configuration frame")
        if frame_kind(frame) != "config":
            raise PeerProtocolViolation(
                f"expected a configuration frame, got {frame_kind(frame)}"
            )
        report.config = decode_config_frame(frame)
        report.phase = Phase.CONFIG_SENT
        _send_command(conn, CommandCode.DATA_ON, pmu_id)
        report.phase = Phase.STREAMING

        mapper = FrameMapper(ctx.mapping)
        symbols = ""
        slice_index = 0
        done = False
        stop_sent = False
        conn.settimeout(cfg.stream_timeout)
        while True:
            if (
                cfg.stop_after is not None
                and not stop_sent
                and report.data_frames >= cfg.stop_after
            ):
                _send_command(conn, CommandCode.DATA_OFF, pmu_id)
                stop_sent = True
                _log_event("stop_sent", report.session_id, frames=report.data_frames)
            try:
                data = conn.recv(_RECV_SIZE)
            except socket.timeout:
                raise TransportFailure("receive timed out mid-stream") from None
            except OSError as exc:
                raise TransportFailure(f"receive failed mid-stream: {exc}") from exc
            if not data:
                break
            arrival = time.monotonic()
            for frame in io.scanner.feed(data):
                kind = frame_kind(frame)
                if kind != "data":
                    raise PeerProtocolViolation(f"{kind} frame during streaming")
                report.data_frames += 1
                report.frame_times.append(arrival)
                if self.cfg.log_frames:
                    report.frames.append(frame)
                _send_command(conn, CommandCode.ACK, pmu_id)
                if done or report.passthrough_only:
                    report.stray_frames += 1
                    continue
                try:
                    symbols += mapper.unmap_frame(frame)
                except ValueOutOfDictionary as exc:
                    self._flag_passthrough(report, f"field value outside dictionary: {exc}")
                    continue
                if len(symbols) < ctx.group_symbols:
                    continue
                slice_str = symbols[: cfg.fixed_slice]
                marker = symbols[cfg.fixed_slice]
                symbols = ""
                if marker not in (MARKER_MORE, MARKER_FINAL):
                    self._flag_passthrough(report, f"invalid slice marker {marker!r}")
                    continue
                try:
                    chunk = ctx.codec.decode_slice(slice_str, slice_index)
                except (LengthHeaderCorrupt, NotInLanguage, BadSliceLength) as exc:
                    self._flag_passthrough(report, f"slice rejected: {exc}")
                    continue
                slice_index += 1
                report.slices += 1
                if chunk:
                    forward(chunk)
                    report.payload_bytes += len(chunk)
                if marker == MARKER_FINAL:
                    done = True
        report.phase = Phase.STOPPED
        report.resync_events = len(io.scanner.events)
        report.checksum_failures = io.scanner.checksum_failures
        if not done and not report.passthrough_only:
            if symbols:
                report.gap = (
                    f"stream ended with {len(symbols)} symbols of an unfinished "
                    f"slice group: {report.payload_bytes} bytes forwarded"
                )
            else:
                report.gap = (
                    f"stream ended before the final slice marker after "
                    f"{report.slices} slices"
                )
            _log_event("reassembly_gap", report.session_id, detail=report.gap)

    def _flag_passthrough(self, report: SessionReport, reason: str) -> None:
        report.passthrough_only = True
        report.passthrough_reason = reason
        _log_event("passthrough_only", report.session_id, reason=reason)


def run_pdc_side(cfg: TunnelConfig, sink=None) -> SessionReport:
    """Listen, serve one tunnel session, and return its report."""
    server = PdcServer(cfg)
    try:
        return server.serve_one(sink)
    finally:
        server.close()
