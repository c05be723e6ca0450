import json

import numpy as np
import pytest

from csseal import signals
from csseal.cli import main
from csseal.reconstruct import SparseBasis


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def eeg(tmp_path):
    path = tmp_path / "eeg.csv"
    assert run("gen-signal", "--kind", "eeg", "--windows", 6, "--seed", 1, "--out", path) == 0
    return path


def test_gen_signal_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b" / "b.csv"
    assert run("gen-signal", "--kind", "sparse", "--n", 256, "--windows", 3, "--seed", 4, "--out", a) == 0
    assert run("gen-signal", "--kind", "sparse", "--n", 256, "--windows", 3, "--seed", 4, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    x, rate = signals.read_csv(a)
    assert rate == 1000
    coeffs = SparseBasis("dct", 256).analyze(x.reshape(3, 256))
    assert ((np.abs(coeffs) > 1e-6).sum(axis=1) == 8).all()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["params"]["seed"] == 4
    assert "a.csv" in manifest["outputs"]


def test_gen_signal_burst_labels_and_cache(tmp_path):
    out = tmp_path / "b.csv"
    assert run("gen-signal", "--kind", "burst", "--n", 256, "--windows", 5, "--out", out, "--cache", tmp_path / "b.bin") == 0
    assert (tmp_path / "b.labels.csv").read_text().startswith("window,label")
    assert np.allclose(signals.read_cache(tmp_path / "b.bin"), signals.read_csv(out)[0], atol=1e-7)


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CS_SEAL_SEED", "5")
    assert run("gen-signal", "--kind", "eeg", "--n", 128, "--windows", 2, "--out", tmp_path / "e.csv") == 0
    monkeypatch.delenv("CS_SEAL_SEED")
    assert run("gen-signal", "--kind", "eeg", "--n", 128, "--windows", 2, "--seed", 5, "--out", tmp_path / "f.csv") == 0
    assert (tmp_path / "e.csv").read_bytes() == (tmp_path / "f.csv").read_bytes()
    monkeypatch.setenv("CS_SEAL_SEED", "x")
    assert run("gen-signal", "--kind", "eeg", "--out", tmp_path / "g.csv") == 2


def test_session_mem_and_socket_agree(tmp_path, eeg):
    assert run("session", "--input", eeg, "--out-dir", tmp_path / "m", "--seed", 3) == 0
    assert run("session", "--input", eeg, "--out-dir", tmp_path / "s", "--seed", 3, "--transport", "socket") == 0
    assert (tmp_path / "m" / "reconstructed.csv").read_bytes() == (tmp_path / "s" / "reconstructed.csv").read_bytes()
    summary = json.loads((tmp_path / "m" / "session.json").read_text())
    assert summary["windows_received"] == 6 and summary["mean_rho"] > 0.9
    for name in ("windows.csv", "session.png", "manifest.json"):
        assert (tmp_path / "m" / name).exists()


def test_session_bob_adopts_alice_m(tmp_path, eeg):
    assert run("session", "--input", eeg, "--out-dir", tmp_path / "r", "--seed", 3, "--m", 128, "--bob-m", 64) == 0
    assert json.loads((tmp_path / "r" / "session.json").read_text())["M"] == 128


def test_replay_reproduces_outputs(tmp_path, eeg):
    out = tmp_path / "r"
    assert run("session", "--input", eeg, "--out-dir", out, "--seed", 3) == 0
    first = json.loads((out / "manifest.json").read_text())["outputs"]
    assert run("replay", out / "manifest.json") == 0
    second = json.loads((out / "manifest.json").read_text())["outputs"]
    assert first["reconstructed.csv"] == second["reconstructed.csv"]
    assert first["windows.csv"] == second["windows.csv"]


def test_attack_commands(tmp_path):
    assert run("attack", "timing", "--runs", 20, "--control-runs", 5, "--out-dir", tmp_path / "t") == 0
    timing = json.loads((tmp_path / "t" / "timing.json").read_text())
    assert timing["all_equal"] is True
    assert timing["scalar_mult_original"]["all_equal"] is False

    assert run("attack", "energy", "--policy", "both", "--out-dir", tmp_path / "e") == 0
    energy = json.loads((tmp_path / "e" / "energy.json").read_text())
    assert energy["fixed"]["correlation"] >= energy["shuffled"]["correlation"]

    args = ("attack", "coa", "--segments", 3, "--attempts", 2, "--seed", 7, "--m", 64, "--cr", 4)
    assert run(*args, "--out-dir", tmp_path / "c1") == 0
    assert run(*args, "--out-dir", tmp_path / "c2") == 0
    assert (tmp_path / "c1" / "coa.csv").read_bytes() == (tmp_path / "c2" / "coa.csv").read_bytes()
    assert (tmp_path / "c1" / "coa.png").exists()


def test_exit_codes(tmp_path, eeg):
    assert run("session", "--m", 100, "--input", eeg, "--out-dir", tmp_path) == 2
    assert run("session", "--transport", "mem", "--role", "alice", "--input", eeg, "--out-dir", tmp_path) == 2
    assert run("bogus") == 2
    assert run("session", "--input", tmp_path / "missing.csv", "--out-dir", tmp_path) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("1\nfoo\n")
    assert run("session", "--input", bad, "--out-dir", tmp_path) == 4
    assert run("session", "--role", "alice", "--transport", "socket", "--addr", "127.0.0.1:1",
               "--input", eeg, "--out-dir", tmp_path / "a") == 3
    assert run("attack", "energy", "--dataset", "input", "--out-dir", tmp_path) == 2
