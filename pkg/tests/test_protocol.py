import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csseal import cs_codec as C
from csseal import signals
from csseal.protocol import (
    DOMAIN_ID,
    BadCRC,
    BadLength,
    BadMagic,
    BadType,
    BadVersion,
    Frame,
    FrameType,
    HandshakeError,
    Phase,
    ProtocolError,
    Role,
    Session,
    SessionConfig,
    crc16,
    frame_decode,
    frame_encode,
    memory_pair,
    run_loopback,
)
from csseal.protocol.frame import frame_size

from oracles import crc16_ccitt_false

CFG = SessionConfig(M=64, CR=4, epoch_length=4)


def windows(n, cfg=CFG, seed=1):
    return signals.windows_of(signals.eeg_like(cfg.N, n, seed=seed), cfg.N)


# frames ----------------------------------------------------------------


def test_crc_check_value():
    assert crc16(b"123456789") == 0x29B1
    assert crc16_ccitt_false(b"123456789") == 0x29B1


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_crc_matches_bitwise_reference(data):
    assert crc16(data) == crc16_ccitt_false(data)


def test_wire_layout():
    f = Frame(FrameType.DATA, epoch=0x0102, seq=0x03040506, payload=b"\xaa\xbb")
    raw = f.encode()
    head = bytes.fromhex("c5a1 01 04 0102 03040506 0002".replace(" ", ""))
    assert raw[:12] == head
    assert raw[12:14] == b"\xaa\xbb"
    assert raw[14:] == struct.pack(">H", crc16_ccitt_false(raw[:14]))
    assert frame_size(raw[:12]) == len(raw) == 16


def test_roundtrip_random_frames():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        f = Frame(
            FrameType(int(rng.integers(1, 6))),
            int(rng.integers(0, 2**16)),
            int(rng.integers(0, 2**32)),
            rng.bytes(int(rng.integers(0, 300))),
        )
        assert frame_decode(frame_encode(f)) == f


def test_decode_errors_are_distinct():
    raw = Frame(FrameType.HELLO, 1, 2, b"abc").encode()
    with pytest.raises(BadLength) as e:
        frame_decode(raw[:-1])
    assert e.value.code == 3
    with pytest.raises(BadLength):
        frame_decode(raw[:5])
    with pytest.raises(BadLength):
        frame_decode(b"")
    bad = bytearray(raw)
    bad[0] ^= 0xFF
    with pytest.raises(BadMagic) as e:
        frame_decode(bytes(bad))
    assert e.value.code == 1
    bad = bytearray(raw)
    bad[2] = 2
    with pytest.raises(BadVersion) as e:
        frame_decode(bytes(bad))
    assert e.value.code == 2
    bad = bytearray(raw)
    bad[13] ^= 1
    with pytest.raises(BadCRC) as e:
        frame_decode(bytes(bad))
    assert e.value.code == 4
    body = bytearray(raw[:-2])
    body[3] = 9
    with pytest.raises(BadType) as e:
        frame_decode(bytes(body) + struct.pack(">H", crc16(bytes(body))))
    assert e.value.code == 5
    with pytest.raises(BadLength):
        Frame(FrameType.DATA, payload=bytes(70000)).encode()


def test_session_config_pack():
    assert SessionConfig.unpack(CFG.pack()) == CFG
    with pytest.raises(C.ConfigError):
        SessionConfig(M=100)
    with pytest.raises(C.ConfigError):
        SessionConfig(epoch_length=0)
    with pytest.raises(ProtocolError):
        SessionConfig.unpack(b"\x00")


# sessions --------------------------------------------------------------


def handshake_pair(cfg=CFG, seed=3, alice_transport=None, bob_transport=None):
    from csseal.protocol.loopback import session_rngs

    a_end, b_end = memory_pair()
    ra, rb = session_rngs(seed)
    alice = Session(Role.ALICE, alice_transport or a_end, cfg, rng=ra)
    bob = Session(Role.BOB, bob_transport or b_end, rng=rb)
    err = []
    t = threading.Thread(target=lambda: _guard(bob.handshake, err))
    t.start()
    alice.handshake()
    t.join()
    assert not err, err
    return alice, bob


def _guard(fn, err):
    try:
        fn()
    except Exception as exc:  # re-raised by the test
        err.append(exc)


def test_handshake_agrees_on_keys_and_matrices():
    alice, bob = handshake_pair()
    assert alice.shared_secret == bob.shared_secret
    assert alice.phase is bob.phase is Phase.ESTABLISHED
    assert bob.config == CFG
    for k in (0, 1, 2):
        assert alice.epoch_matrix(k) == bob.epoch_matrix(k)
    assert alice.matrix.key_id == 0


def test_handshake_survives_corrupted_pubkey():
    def corrupt(n, data):
        if n == 1:  # Alice's PUBKEY
            data = bytearray(data)
            data[20] ^= 0x40
        return bytes(data)

    r = run_loopback(windows(3), CFG, seed=4, alice_fault=corrupt)
    assert r.alice.shared_secret == r.bob.shared_secret
    assert r.alice.diagnostics.retransmits >= 1
    assert r.bob.diagnostics.dropped_frames >= 1
    assert len(r.windows) == 3


def test_handshake_survives_lost_replies():
    r = run_loopback(windows(2), CFG, seed=4, bob_fault=lambda n, d: None if n in (0, 2) else d)
    assert r.alice.diagnostics.retransmits >= 2
    assert len(r.windows) == 2


def test_handshake_gives_up_after_bounded_retries():
    a_end, _ = memory_pair()
    alice = Session(Role.ALICE, a_end, CFG, timeout=0.01, max_retries=3)
    with pytest.raises(HandshakeError):
        alice.handshake()
    assert alice.phase is Phase.CLOSED
    assert alice.diagnostics.retransmits == 3


def _scripted_peer(end, replies):
    """Answer each received frame with the next scripted frame."""
    for reply in replies:
        end.recv(2.0)
        end.send(reply.encode())


def test_zero_shared_secret_aborts():
    a_end, b_end = memory_pair()
    script = [Frame(FrameType.HELLO, payload=DOMAIN_ID), Frame(FrameType.PUBKEY, seq=1, payload=bytes(32))]
    t = threading.Thread(target=_scripted_peer, args=(b_end, script))
    t.start()
    alice = Session(Role.ALICE, a_end, CFG)
    with pytest.raises(HandshakeError, match="all-zero"):
        alice.handshake()
    t.join()
    assert alice.phase is Phase.CLOSED
    assert frame_decode(b_end.recv(1.0)).type is FrameType.CLOSE


def test_domain_mismatch_aborts():
    a_end, b_end = memory_pair()
    t = threading.Thread(target=_scripted_peer, args=(b_end, [Frame(FrameType.HELLO, payload=b"other")]))
    t.start()
    with pytest.raises(HandshakeError, match="domain"):
        Session(Role.ALICE, a_end, CFG).handshake()
    t.join()


def test_bob_rejects_foreign_domain():
    a_end, b_end = memory_pair()
    a_end.send(Frame(FrameType.HELLO, payload=b"X448").encode())
    bob = Session(Role.BOB, b_end)
    with pytest.raises(HandshakeError):
        bob.handshake()


def test_data_before_handshake_is_rejected():
    _, b_end = memory_pair()
    bob = Session(Role.BOB, b_end)
    with pytest.raises(ProtocolError):
        bob.receive_window(Frame(FrameType.DATA, 0, 0, bytes(128)))
    a_end, _ = memory_pair()
    with pytest.raises(ProtocolError):
        Session(Role.ALICE, a_end, CFG).send_window(np.zeros(CFG.N))


def test_counters_and_rollover():
    alice, bob = handshake_pair()
    x = windows(6)
    frames = [alice.send_window(w) for w in x]
    assert [f.seq for f in frames] == list(range(6))
    assert [f.epoch for f in frames] == [0, 0, 0, 0, 1, 1]
    assert alice.epoch == 1 and alice.matrix.key_id == 1
    for f in frames:
        assert len(f.payload) == 2 * CFG.M
        assert bob.effective_matrix(f.epoch, f.seq) == alice.effective_matrix(f.epoch, f.seq)


def test_bob_reconstructs_out_of_order_frames_identically():
    alice, bob = handshake_pair()
    frames = [alice.send_window(w) for w in windows(6)]
    fwd = {f.seq: bob.receive_window(f).result.x_hat for f in frames}
    _, bob2 = handshake_pair()
    back = {f.seq: bob2.receive_window(f).result.x_hat for f in reversed(frames[:5])}
    for seq, xh in back.items():
        assert np.array_equal(xh, fwd[seq])


def test_epoch_checks():
    alice, bob = handshake_pair()
    good = alice.send_window(windows(1)[0])
    with pytest.raises(ProtocolError, match="does not match"):
        bob.receive_window(Frame(FrameType.DATA, 1, 0, good.payload))
    with pytest.raises(ProtocolError, match="beyond"):
        bob.receive_window(Frame(FrameType.DATA, 2, 8, good.payload))
    with pytest.raises(ProtocolError, match="payload"):
        bob.receive_window(Frame(FrameType.DATA, 0, 1, good.payload[:-2]))


def test_drop_invariance():
    cfg = SessionConfig(M=64, CR=4, epoch_length=3)
    x = windows(20, cfg)
    full = run_loopback(x, cfg, seed=8)
    drop = {2, 3, 4, 11, 17}

    def dropper(n, data):
        f = frame_decode(data)
        return None if f.type is FrameType.DATA and f.seq in drop else data

    part = run_loopback(x, cfg, seed=8, alice_fault=dropper)
    got = {w.seq: w.result.x_hat for w in part.windows}
    assert sorted(got) == sorted(set(range(20)) - drop)
    ref = {w.seq: w.result.x_hat for w in full.windows}
    for seq, xh in got.items():
        assert np.array_equal(xh, ref[seq])


def test_frames_are_deterministic_and_tap_is_complete():
    x = windows(5)
    r1 = run_loopback(x, CFG, seed=12)
    r2 = run_loopback(x, CFG, seed=12)
    assert r1.tap.log() == r2.tap.log()
    assert [f for f in r1.alice.sent] == [d for s, d in r1.tap.frames if s == "alice"]
    assert [f for f in r1.bob.sent] == [d for s, d in r1.tap.frames if s == "bob"]
    assert r1.tap.log() == b"".join(d for _, d in r1.tap.frames)
    assert r1.tap.log() != run_loopback(x, CFG, seed=13).tap.log()


def test_socket_matches_memory():
    x = windows(4)
    a = run_loopback(x, CFG, seed=2, transport="mem")
    b = run_loopback(x, CFG, seed=2, transport="socket")
    for u, v in zip(a.windows, b.windows):
        assert np.array_equal(u.result.x_hat, v.result.x_hat)
    assert a.tap.log() == b.tap.log()


def test_bob_adopts_alice_config():
    x = windows(2)
    r = run_loopback(x, CFG, seed=2, bob_config=SessionConfig(M=128, CR=2, epoch_length=10))
    assert r.bob.config == CFG
    assert len(r.windows) == 2


def test_saturation_is_reported():
    alice, _ = handshake_pair()
    alice.send_window(np.full(CFG.N, 0.9))
    assert alice.diagnostics.saturated_windows == 1
    assert alice.diagnostics.saturation_events > 0
