"""Command-line front end.

    csseal gen-signal --kind eeg --windows 100 --out sig.csv
    csseal session --input sig.csv --out-dir run/ [--transport socket]
    csseal attack coa|energy|timing --out-dir rep/
    csseal replay rep/manifest.json

Exit codes: 0 success, 2 usage, 3 protocol or transport failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, attacks, signals
from .cs_codec import DEFAULT_EPOCH_LENGTH, ConfigError
from .protocol import (
    FrameError,
    ProtocolError,
    SessionConfig,
    TransportError,
    connect,
    listen,
    run_alice,
    run_bob,
    run_loopback,
)
from .reconstruct import pearson_rho, psnr

EXIT_OK, EXIT_USAGE, EXIT_PROTOCOL, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "CS_SEAL_SEED"
DEMO_SECRET_LABEL = b"CLI-DEMO-SECRET"

log = logging.getLogger("csseal")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _seed(value: int | None, default: int | None) -> int | None:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return default


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, argv: list[str], params: dict, inputs=(), outputs=()) -> Path:
    manifest = {
        "tool": "csseal",
        "version": __version__,
        "argv": argv,
        "params": params,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {Path(p).name: _sha256(Path(p)) for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_windows(path: str, N: int) -> tuple[np.ndarray, float | None]:
    try:
        x, rate = signals.load_signal(path)
        return signals.windows_of(x, N), rate
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc}") from exc
    return out


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise UsageError(f"address must be HOST:PORT, got {text!r}") from None


def _session_config(args) -> SessionConfig:
    try:
        return SessionConfig(M=args.m, CR=args.cr, epoch_length=args.epoch_len, sample_rate=args.rate)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def demo_secret(seed: int) -> bytes:
    """Session key stand-in for attack campaigns (Eve never learns it)."""
    return hashlib.sha256(DEMO_SECRET_LABEL + seed.to_bytes(8, "big")).digest()


# ---------------------------------------------------------------------------
# gen-signal
# ---------------------------------------------------------------------------


def cmd_gen_signal(args, argv) -> int:
    seed = _seed(args.seed, 0)
    if args.n < 2 or args.windows < 1:
        raise UsageError("--n must be >= 2 and --windows >= 1")
    labels = None
    if args.kind == "sparse":
        if not 1 <= args.k <= args.n:
            raise UsageError("--k must be in [1, N]")
        x = signals.sparse_windows(args.n, args.windows, K=args.k, seed=seed)
    elif args.kind == "eeg":
        x = signals.eeg_like(args.n, args.windows, seed=seed, rate=args.rate)
    else:
        x, labels = signals.burst_windows(args.n, args.windows, seed=seed, rate=args.rate)
    out = Path(args.out)
    outputs = [out]
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        signals.write_csv(out, x, rate=args.rate)
        if labels is not None:
            lab = out.with_suffix(".labels.csv")
            with open(lab, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["window", "label"])
                w.writerows((i, "event" if v else "normal") for i, v in enumerate(labels))
            outputs.append(lab)
        if args.cache:
            signals.write_cache(args.cache, x)
            outputs.append(Path(args.cache))
    except OSError as exc:
        raise InputError(f"cannot write {exc.filename}: {exc.strerror}") from exc
    params = {"kind": args.kind, "N": args.n, "windows": args.windows, "seed": seed, "K": args.k, "rate": args.rate}
    manifest_dir = Path(args.manifest_dir) if args.manifest_dir else out.parent
    _write_manifest(manifest_dir, argv, params, outputs=outputs)
    print(f"wrote {x.size} samples to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# session
# ---------------------------------------------------------------------------


def _write_session_outputs(out: Path, windows, received, rate, tag: str) -> tuple[list[Path], dict]:
    from . import plotting

    received = sorted(received, key=lambda w: w.seq)
    N = windows.shape[1] if windows is not None else (received[0].result.x_hat.size if received else 0)
    recon = out / "reconstructed.csv"
    series = np.concatenate([w.result.x_hat for w in received]) if received else np.zeros(0)
    signals.write_csv(recon, series, rate=rate)
    per_window = out / "windows.csv"
    rhos = []
    with open(per_window, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seq", "epoch", "rho", "psnr_db", "iterations", "converged"])
        for r in received:
            rho = p = ""
            if windows is not None and r.seq < len(windows):
                rho = pearson_rho(windows[r.seq], r.result.x_hat)
                p = psnr(windows[r.seq], r.result.x_hat)
                rhos.append(rho)
            w.writerow([r.seq, r.epoch, repr(rho) if rho != "" else "", repr(p) if p != "" else "",
                        r.result.iterations, int(r.result.converged)])
    outputs = [recon, per_window]
    summary = {"role": tag, "windows_received": len(received), "N": N}
    if rhos:
        summary["mean_rho"] = float(np.mean(rhos))
        summary["min_rho"] = float(np.min(rhos))
        best = received[int(np.argmax(rhos))]
        fig = plotting.plot_reconstruction(windows[best.seq], best.result.x_hat, rhos, out / "session.png",
                                           rate=rate or signals.DEFAULT_RATE)
        outputs.append(fig)
    return outputs, summary


def cmd_session(args, argv) -> int:
    cfg = _session_config(args)
    seed = _seed(args.seed, None)
    out = _out_dir(args.out_dir)
    inputs = []
    windows = None
    if args.role in ("alice", "both") or args.reference:
        source = args.input if args.role != "bob" else args.reference
        if source is None:
            raise UsageError("--input is required for alice")
        windows, file_rate = _load_windows(source, cfg.N)
        inputs.append(source)
    rate = args.rate
    params = {"role": args.role, "transport": args.transport, "M": cfg.M, "CR": cfg.CR,
              "epoch_length": cfg.epoch_length, "seed": seed}
    if args.role == "both":
        bob_cfg = None
        if args.bob_m is not None:
            bob_cfg = SessionConfig(M=args.bob_m, CR=cfg.CR, epoch_length=cfg.epoch_length)
        result = run_loopback(windows, cfg, transport=args.transport, seed=seed, bob_config=bob_cfg)
        received, bob = result.windows, result.bob
        if args.tap_log:
            Path(out / "tap.bin").write_bytes(result.tap.log())
    elif args.transport == "mem":
        raise UsageError("the mem transport runs both roles in one process; use --role both")
    elif args.role == "alice":
        transport = connect(_addr(args.addr))
        try:
            alice = run_alice(windows, cfg, transport, seed=seed)
        finally:
            transport.close()
        summary = {"role": "alice", "windows_sent": alice.window_seq,
                   "saturated_windows": alice.diagnostics.saturated_windows}
        (out / "session.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        _write_manifest(out, argv, params, inputs, [out / "session.json"])
        print(f"alice sent {alice.window_seq} windows")
        return EXIT_OK
    else:
        transport = listen(_addr(args.addr))
        try:
            bob, received = run_bob(transport, cfg, seed=seed)
        finally:
            transport.close()
    outputs, summary = _write_session_outputs(out, windows, received, rate, "bob")
    summary.update({"M": bob.config.M, "CR": bob.config.CR, "epoch_length": bob.config.epoch_length,
                    "dropped_frames": bob.diagnostics.dropped_frames})
    (out / "session.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append(out / "session.json")
    _write_manifest(out, argv, params, inputs, outputs)
    msg = f"bob reconstructed {summary['windows_received']} windows"
    if "mean_rho" in summary:
        msg += f", mean rho {summary['mean_rho']:.4f}"
    print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# attack
# ---------------------------------------------------------------------------


def _attack_segments(args, seed: int, N: int, count: int) -> tuple[np.ndarray, list[str]]:
    if args.input:
        windows, _ = _load_windows(args.input, N)
        if len(windows) < count:
            raise InputError(f"{args.input} holds {len(windows)} windows, {count} requested")
        return windows[:count], [args.input]
    return signals.windows_of(signals.eeg_like(N, count, seed=seed), N), []


def cmd_attack_coa(args, argv) -> int:
    from . import plotting

    seed = _seed(args.seed, 0)
    if args.segments < 1 or args.attempts < 1:
        raise UsageError("--segments and --attempts must be >= 1")
    cfg = _session_config(args)
    out = _out_dir(args.out_dir)
    segments, inputs = _attack_segments(args, seed, cfg.N, args.segments)
    report = attacks.run_coa(segments, demo_secret(seed), args.attempts, seed, M=cfg.M,
                             epoch_length=cfg.epoch_length)
    csv_path, json_path = report.write(out)
    fig = plotting.plot_coa(report, out / "coa.png")
    params = {"segments": args.segments, "attempts": args.attempts, "seed": seed, "M": cfg.M, "CR": cfg.CR}
    _write_manifest(out, argv, params, inputs, [csv_path, out / "coa_segments.csv", json_path, fig])
    print(f"bob mean rho {report.bob_mean_rho:.4f}; eve mean |rho| {report.eve_mean_abs_rho:.4f}, "
          f"max rho {report.eve_max_rho:.4f}")
    return EXIT_OK


def cmd_attack_energy(args, argv) -> int:
    from . import plotting

    seed = _seed(args.seed, 0)
    cfg = _session_config(args)
    out = _out_dir(args.out_dir)
    labels = None
    inputs = []
    if args.dataset == "amplitude":
        template = signals.eeg_like(cfg.N, 1, seed=seed)
        segments = signals.amplitude_series(template, args.segments, spread=args.spread, seed=seed)
    elif args.dataset == "burst":
        stream, labels = signals.burst_windows(cfg.N, args.segments, seed=seed)
        segments = signals.windows_of(stream, cfg.N)
    elif not args.input:
        raise UsageError("--dataset input needs --input")
    else:
        segments, inputs = _attack_segments(args, seed, cfg.N, args.segments)
    policies = ("fixed", "shuffled") if args.policy == "both" else (args.policy,)
    secret = demo_secret(seed)
    reports = [attacks.run_energy_leakage(segments, secret, p, M=cfg.M, epoch_length=cfg.epoch_length,
                                          labels=labels) for p in policies]
    csv_path, json_path = attacks.write_energy_reports(reports, out)
    fig = plotting.plot_energy(reports, out / "energy.png")
    params = {"dataset": args.dataset, "segments": args.segments, "policy": args.policy, "seed": seed,
              "spread": args.spread, "M": cfg.M, "CR": cfg.CR}
    _write_manifest(out, argv, params, inputs, [csv_path, json_path, fig])
    for r in reports:
        print(f"{r.policy}: corr(|x|^2, |y|^2) = {r.correlation:.4f}")
    return EXIT_OK


def cmd_attack_timing(args, argv) -> int:
    from . import plotting

    seed = _seed(args.seed, 0)
    if args.runs < 2:
        raise UsageError("--runs must be >= 2")
    out = _out_dir(args.out_dir)
    check = attacks.run_trace_check(args.runs, seed, control_runs=args.control_runs)
    csv_path, json_path = check.write(out)
    fig = plotting.plot_traces(check, out / "timing.png")
    _write_manifest(out, argv, {"runs": args.runs, "seed": seed, "control_runs": args.control_runs},
                    outputs=[csv_path, json_path, fig])
    print(f"branch-balanced ladder: all_equal={check.ct.all_equal} over {check.ct.runs} runs; "
          f"swap ladder: all_equal={check.control.all_equal}")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read manifest {args.manifest}: {exc}") from exc
    stored = manifest.get("argv")
    if not isinstance(stored, list) or not stored or stored[0] == "replay":
        raise UsageError("manifest has no replayable command line")
    return main(stored)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, default=128, help="measurements per window (64, 96 or 128)")
    p.add_argument("--cr", type=int, default=8, help="compression ratio N/M (2..16)")
    p.add_argument("--epoch-len", type=int, default=DEFAULT_EPOCH_LENGTH, help="windows per key epoch")
    p.add_argument("--rate", type=float, default=signals.DEFAULT_RATE, help="sample rate in S/s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csseal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-signal", help="write a synthetic test signal")
    g.add_argument("--kind", choices=("sparse", "eeg", "burst"), required=True)
    g.add_argument("--n", type=int, default=1024, help="window length N")
    g.add_argument("--windows", type=int, default=100)
    g.add_argument("--k", type=int, default=8, help="nonzero DCT coefficients per window (sparse)")
    g.add_argument("--rate", type=float, default=signals.DEFAULT_RATE)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--cache", help="also write the binary cache file")
    g.add_argument("--manifest-dir", help="where to put manifest.json (default: next to --out)")
    g.set_defaults(func=cmd_gen_signal)

    s = sub.add_parser("session", help="run Alice and/or Bob")
    s.add_argument("--role", choices=("alice", "bob", "both"), default="both")
    s.add_argument("--transport", choices=("mem", "socket"), default="mem")
    s.add_argument("--addr", default="127.0.0.1:7455", help="HOST:PORT for single-role socket mode")
    s.add_argument("--input", help="signal file (CSV or binary cache) for Alice")
    s.add_argument("--reference", help="original signal, lets a lone Bob log correlations")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, help="seed the key pairs and projective randomization")
    s.add_argument("--bob-m", type=int, help="Bob's own --m before negotiation (role both)")
    s.add_argument("--tap-log", action="store_true", help="save every frame on the channel to tap.bin")
    _add_config_flags(s)
    s.set_defaults(func=cmd_session)

    a = sub.add_parser("attack", help="security evaluation campaigns")
    asub = a.add_subparsers(dest="attack", required=True)
    coa = asub.add_parser("coa", help="ciphertext-only reconstruction attempts")
    coa.add_argument("--segments", type=int, default=200)
    coa.add_argument("--attempts", type=int, default=50)
    coa.add_argument("--input", help="signal file to cut segments from (default: synthetic EEG)")
    coa.add_argument("--seed", type=int)
    coa.add_argument("--out-dir", required=True)
    _add_config_flags(coa)
    coa.set_defaults(func=cmd_attack_coa)

    en = asub.add_parser("energy", help="energy leakage under fixed and shuffled keys")
    en.add_argument("--policy", choices=("fixed", "shuffled", "both"), default="both")
    en.add_argument("--dataset", choices=("amplitude", "burst", "input"), default="amplitude")
    en.add_argument("--segments", type=int, default=200)
    en.add_argument("--spread", type=float, default=0.04, help="relative energy spread (amplitude dataset)")
    en.add_argument("--input", help="signal file (dataset input)")
    en.add_argument("--seed", type=int)
    en.add_argument("--out-dir", required=True)
    _add_config_flags(en)
    en.set_defaults(func=cmd_attack_energy)

    tm = asub.add_parser("timing", help="operation-trace equality of the scalar multiplication")
    tm.add_argument("--runs", type=int, default=10000)
    tm.add_argument("--control-runs", type=int, default=100)
    tm.add_argument("--seed", type=int)
    tm.add_argument("--out-dir", required=True)
    tm.set_defaults(func=cmd_attack_timing)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"csseal: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProtocolError, TransportError, FrameError) as exc:
        print(f"csseal: protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (InputError, OSError) as exc:
        print(f"csseal: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
