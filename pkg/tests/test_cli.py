"""CLI tests: subcommand plumbing, exit codes, subprocess round trips."""

import os
import select
import signal
import socket
import subprocess
import sys
import time

import pytest

from pmucloak.cli import main
from pmucloak.framelog import FrameLog, load_framelog, make_record, save_framelog
from pmucloak.timing import (
    AlphabetBin,
    DeterministicHmm,
    SymbolAlphabet,
    TimingModel,
    save_model,
)

KEY = "00112233445566778899aabbccddeeff"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = str(root / "corpus.flog")
    mapping = str(root / "fields.map")
    hmm = str(root / "timing.hmm")
    assert main(["gen-corpus", "--out", corpus, "--seed", "0"]) == 0
    assert main(["build", "--corpus", corpus, "--mapping", mapping, "--hmm", hmm]) == 0
    fast = str(root / "fast.hmm")
    save_model(
        TimingModel(
            hmm=DeterministicHmm(
                state_count=2,
                transitions={
                    (0, "a"): (0, 0.75),
                    (0, "b"): (1, 0.25),
                    (1, "a"): (0, 1.0),
                },
                start_states=(0, 1),
            ),
            alphabet=SymbolAlphabet((
                AlphabetBin(0.0, 0.006, "a"),
                AlphabetBin(0.006, float("inf"), "b"),
            )),
        ),
        fast,
    )
    return {"root": root, "corpus": corpus, "mapping": mapping, "hmm": hmm, "fast": fast}


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def cli_argv(*args):
    code = "import sys; from pmucloak.cli import main; sys.exit(main())"
    return [sys.executable, "-c", code, *args]


# -- gen-corpus ---------------------------------------------------------------------

def test_gen_corpus_output(workdir, capsys):
    out = str(workdir["root"] / "again.flog")
    assert main(["gen-corpus", "--out", out, "--seed", "0"]) == 0
    printed = capsys.readouterr().out
    assert "1800 frames" in printed
    with open(out, "rb") as fh, open(workdir["corpus"], "rb") as fh2:
        assert fh.read() == fh2.read()  # same seed, same bytes


def test_gen_corpus_seed_changes_output(workdir, tmp_path):
    a, b = str(tmp_path / "a.flog"), str(tmp_path / "b.flog")
    assert main(["gen-corpus", "--out", a, "--seed", "1"]) == 0
    assert main(["gen-corpus", "--out", b, "--seed", "2"]) == 0
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() != fb.read()


def test_gen_corpus_zero_duration(tmp_path, capsys):
    out = str(tmp_path / "empty.flog")
    assert main(["gen-corpus", "--out", out, "--duration", "0", "--seed", "0"]) == 0
    assert "0 frames" in capsys.readouterr().out
    assert len(load_framelog(out).by_direction("out")) == 0


def test_gen_corpus_bad_params(tmp_path, capsys):
    out = str(tmp_path / "x.flog")
    assert main(["gen-corpus", "--out", out, "--duration", "-5", "--seed", "0"]) == 2
    assert "error" in capsys.readouterr().err


# -- build ---------------------------------------------------------------------------

def test_build_reports_artifacts(workdir, capsys, tmp_path):
    m, h = str(tmp_path / "m.map"), str(tmp_path / "h.hmm")
    assert main(["build", "--corpus", workdir["corpus"], "--mapping", m, "--hmm", h]) == 0
    printed = capsys.readouterr().out
    assert "68 carriers" in printed
    assert "2 states" in printed
    assert "corpus sha256" in printed


def test_build_missing_corpus_exit_2(tmp_path, capsys):
    rc = main(["build", "--corpus", str(tmp_path / "nope.flog"),
               "--mapping", "m", "--hmm", "h"])
    assert rc == 2


def test_build_empty_corpus_exit_5(tmp_path, capsys):
    empty = str(tmp_path / "empty.flog")
    assert main(["gen-corpus", "--out", empty, "--duration", "0", "--seed", "0"]) == 0
    rc = main(["build", "--corpus", empty,
               "--mapping", str(tmp_path / "m"), "--hmm", str(tmp_path / "h")])
    assert rc == 5


# -- detect ----------------------------------------------------------------------------

def test_detect_corpus_against_own_model(workdir, capsys):
    rc = main(["detect", "--hmm", workdir["hmm"], "--flow", workdir["corpus"],
               "--thresholds", "0.5,1.0"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "match_percentage 1.0000" in printed
    assert "threshold 0.5: genuine" in printed
    assert "threshold 1: counterfeit" in printed  # strict > at the top end


def test_detect_requires_some_flow(workdir, capsys):
    assert main(["detect", "--hmm", workdir["hmm"]]) == 2


def test_detect_labeled_mode_needs_both(workdir, capsys):
    rc = main(["detect", "--hmm", workdir["hmm"], "--genuine", workdir["corpus"]])
    assert rc == 2


def test_detect_bad_model_file_exit_3(workdir, tmp_path, capsys):
    bad = tmp_path / "junk.hmm"
    bad.write_text("not a model\n")
    rc = main(["detect", "--hmm", str(bad), "--flow", workdir["corpus"]])
    assert rc == 3


def test_detect_labeled_sweep_csv(workdir, tmp_path, capsys):
    # counterfeit: same frames re-timed to a constant 30 fps tick
    src = load_framelog(workdir["corpus"])
    fake = FrameLog()
    for i, rec in enumerate(src.by_direction("out")):
        fake.append(make_record(i / 30.0, "out", rec.data))
    fake_path = str(tmp_path / "fake.flog")
    save_framelog(fake, fake_path)
    csv_path = str(tmp_path / "sweep.csv")
    rc = main(["detect", "--hmm", workdir["hmm"],
               "--genuine", workdir["corpus"], "--counterfeit", fake_path,
               "--csv", csv_path])
    assert rc == 0
    with open(csv_path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "threshold,tpr,fpr,n_genuine,n_counterfeit"
    assert len(lines) == 12
    first = lines[1].split(",")
    assert float(first[1]) == 1.0  # corpus matches its own model at l = 0


def test_detect_ambiguous_direction(workdir, tmp_path, capsys):
    log = FrameLog()
    src = load_framelog(workdir["corpus"]).by_direction("out")
    for i, rec in enumerate(src[:6]):
        log.append(make_record(i / 30.0, "out", rec.data))
        log.append(make_record(i / 30.0, "in", rec.data))
    path = str(tmp_path / "both.flog")
    save_framelog(log, path)
    assert main(["detect", "--hmm", workdir["hmm"], "--flow", path]) == 2
    assert "cannot infer direction" in capsys.readouterr().err


# -- experiment ----------------------------------------------------------------------------

def test_experiment_requires_config(capsys):
    assert main(["experiment"]) == 2


def test_experiment_full_run(workdir, tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        f"corpus = {workdir['corpus']}\nflow_count = 4\nflow_length = 2000\nseeds = 3\n"
    )
    out = str(tmp_path / "expout")
    assert main(["experiment", "--config", str(cfg), "--out", out]) == 0
    printed = capsys.readouterr().out
    assert "threshold bands" in printed
    assert os.path.exists(os.path.join(out, "sweep_3.csv"))
    assert os.path.exists(os.path.join(out, "report.txt"))
    assert os.path.exists(os.path.join(out, "model.hmm"))


def test_experiment_seed_flag_overrides(workdir, tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        f"corpus = {workdir['corpus']}\nflow_count = 2\nflow_length = 1000\n"
        "seeds = 0, 1, 2\n"
    )
    out = str(tmp_path / "expout")
    assert main(["experiment", "--config", str(cfg), "--out", out, "--seed", "9"]) == 0
    files = sorted(os.listdir(out))
    assert "sweep_9.csv" in files
    assert "sweep_0.csv" not in files


# -- tunnel startup failures ---------------------------------------------------------------

def test_tunnel_client_missing_mapping(workdir, capsys):
    rc = main(["tunnel", "client", "--mapping", "missing.map", "--hmm", workdir["hmm"],
               "--key", KEY, "--connect", "127.0.0.1:1", "--payload", workdir["corpus"]])
    assert rc == 2


def test_tunnel_client_connection_refused(workdir, tmp_path, capsys):
    payload = tmp_path / "p.bin"
    payload.write_bytes(b"hi")
    rc = main(["tunnel", "client", "--mapping", workdir["mapping"],
               "--hmm", workdir["hmm"], "--key", KEY,
               "--connect", f"127.0.0.1:{free_port()}",
               "--payload", str(payload), "--unshaped"])
    assert rc == 7


def test_tunnel_bad_key_usage_error(workdir, capsys):
    with pytest.raises(SystemExit) as info:
        main(["tunnel", "client", "--mapping", workdir["mapping"],
              "--hmm", workdir["hmm"], "--key", "zz", "--connect", "127.0.0.1:1"])
    assert info.value.code == 2


# -- subprocess round trip and signals ---------------------------------------------------------

def wait_for_line(stream, token, timeout=30.0):
    """Block until a flushed line containing token arrives on a pipe."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        ready, _, _ = select.select([stream], [], [], deadline - time.monotonic())
        if not ready:
            break
        line = stream.readline()
        if not line:
            break  # peer exited
        if token in line:
            return line
    raise AssertionError(f"peer never printed {token!r}")


def test_subprocess_round_trip_stdin(workdir, tmp_path):
    port = free_port()
    out = str(tmp_path / "recovered.bin")
    payload = os.urandom(8192)
    server = subprocess.Popen(
        cli_argv("tunnel", "server", "--mapping", workdir["mapping"],
                 "--hmm", workdir["hmm"], "--key", KEY,
                 "--listen", f"127.0.0.1:{port}", "--out", out),
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    try:
        wait_for_line(server.stdout, b"listening on")
        client = subprocess.run(
            cli_argv("tunnel", "client", "--mapping", workdir["mapping"],
                     "--hmm", workdir["hmm"], "--key", KEY,
                     "--connect", f"127.0.0.1:{port}", "--unshaped"),
            input=payload, capture_output=True, timeout=60,
        )
        assert client.returncode == 0, client.stderr.decode()
        srv_out, srv_err = server.communicate(timeout=30)
        assert server.returncode == 0, srv_err.decode()
    finally:
        if server.poll() is None:
            server.kill()
    with open(out, "rb") as fh:
        assert fh.read() == payload
    assert b"received" in srv_out


def test_sigterm_mid_stream_clean_shutdown(workdir, tmp_path):
    port = free_port()
    out = str(tmp_path / "partial.bin")
    payload_path = tmp_path / "payload.bin"
    payload = os.urandom(120 * 254)  # 120 slices, far more than 1.5 s of shaped frames
    payload_path.write_bytes(payload)
    server = subprocess.Popen(
        cli_argv("tunnel", "server", "--mapping", workdir["mapping"],
                 "--hmm", workdir["fast"], "--key", KEY,
                 "--listen", f"127.0.0.1:{port}", "--out", out),
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    client = None
    try:
        wait_for_line(server.stdout, b"listening on")
        client = subprocess.Popen(
            cli_argv("tunnel", "client", "--mapping", workdir["mapping"],
                     "--hmm", workdir["fast"], "--key", KEY,
                     "--connect", f"127.0.0.1:{port}",
                     "--payload", str(payload_path)),
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
        # the banner means imports are done and the signal handler is armed;
        # connect + handshake are milliseconds after it
        wait_for_line(client.stderr, b"streaming")
        time.sleep(0.9)  # let a couple hundred shaped frames through
        client.send_signal(signal.SIGTERM)
        cli_out, cli_err = client.communicate(timeout=30)
        assert client.returncode == 0, cli_err.decode()
        assert b"terminated by signal" in cli_err
        srv_out, srv_err = server.communicate(timeout=30)
        assert server.returncode == 0, srv_err.decode()
    finally:
        for proc in (server, client):
            if proc is not None and proc.poll() is None:
                proc.kill()
    with open(out, "rb") as fh:
        partial = fh.read()
    assert 0 < len(partial) < len(payload)
    assert payload.startswith(partial)
    assert b"stream ended" in srv_err  # reassembly gap reported
