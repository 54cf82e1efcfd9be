import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lwecontrol import framing
from lwecontrol.controller import encrypt_controller
from lwecontrol.lwe import encrypt, keygen
from lwecontrol.netloop import (
    ControllerSession,
    MsgKind,
    ProtocolError,
    WireMessage,
    bind_listener,
    decode_ctrl_setup,
    decode_message,
    decode_params,
    encode_ctrl_setup,
    encode_hello,
    encode_message,
    encode_params,
    pipe_pair,
    run_plant_side,
    serve_connection,
    serve_listener,
)

from loops import encrypted_run, scalar_params, scalar_plant, scalar_quantized


def _same_trace(a, b):
    assert len(a) == len(b)
    assert a.y == b.y and a.u == b.u and a.ybar == b.ybar and a.ubar == b.ubar
    assert a.u_prime == b.u_prime and a.err_L == b.err_L
    assert all(x.tolist() == y.tolist() for x, y in zip(a.xi, b.xi))
    assert all(x.tolist() == y.tolist() for x, y in zip(a.Delta1, b.Delta1))
    assert a.xp_final.tolist() == b.xp_final.tolist()


def _setup(seed=0):
    P = scalar_params(seed=seed)
    qc = scalar_quantized()
    sk = keygen(P)
    return P, qc, sk


@given(st.sampled_from(list(MsgKind)), st.integers(0, 2**64 - 1), st.binary(max_size=200))
def test_frame_roundtrip(kind, seq, payload):
    msg = WireMessage(kind, seq, payload)
    blob = encode_message(msg)
    assert int.from_bytes(blob[:4], "little") == 9 + len(payload)
    assert decode_message(blob) == msg


def test_malformed_frames_rejected():
    good = encode_message(WireMessage(MsgKind.HELLO, 0, encode_hello()))
    with pytest.raises(ProtocolError):
        decode_message(good[:-1])
    with pytest.raises(ProtocolError):
        decode_message(good[:4] + bytes([99]) + good[5:])


def test_params_roundtrip_drops_seed():
    P = scalar_params(seed=42)
    back = decode_params(encode_params(P))
    assert (back.p, back.L, back.r, back.N, back.base) == (P.p, P.L, P.r, P.N, P.base)
    assert back.seed == 0


def test_ctrl_setup_roundtrip():
    P, qc, sk = _setup()
    ec = encrypt_controller(qc, sk, P, np.random.default_rng(0))
    back = decode_ctrl_setup(encode_ctrl_setup(ec, P), P)
    assert back.F_enc == ec.F_enc and back.H_enc == ec.H_enc and back.x_enc == ec.x_enc


def test_ctrl_setup_cannot_carry_key():
    P, qc, sk = _setup()
    with pytest.raises(TypeError):
        encode_ctrl_setup(sk, P)
    ec = encrypt_controller(qc, sk, P, np.random.default_rng(0))
    blob = encode_ctrl_setup(ec, P)
    x_frame = ec.x_enc.to_bytes(P)
    smuggled = blob[: -len(x_frame)] + sk.to_bytes(P)
    with pytest.raises(ProtocolError):
        decode_ctrl_setup(smuggled, P)
    with pytest.raises(ProtocolError):
        decode_ctrl_setup(blob + sk.to_bytes(P), P)


def _handshake(session, P, ec):
    session.handle(WireMessage(MsgKind.HELLO, 0, encode_hello()))
    session.handle(WireMessage(MsgKind.PARAMS, 0, encode_params(P)))
    return session.handle(WireMessage(MsgKind.CTRL_SETUP, 0, encode_ctrl_setup(ec, P)))


def test_session_order_enforced():
    P, qc, sk = _setup()
    ec = encrypt_controller(qc, sk, P, np.random.default_rng(0))
    y = WireMessage(MsgKind.Y_CIPHER, 0, encrypt(1, sk, P).to_bytes(P))
    s = ControllerSession()
    with pytest.raises(ProtocolError, match="before HELLO"):
        s.handle(y)
    s.handle(WireMessage(MsgKind.HELLO, 0, encode_hello()))
    with pytest.raises(ProtocolError, match="before CTRL_SETUP"):
        s.handle(y)
    with pytest.raises(ProtocolError, match="before PARAMS"):
        s.handle(WireMessage(MsgKind.CTRL_SETUP, 0, encode_ctrl_setup(ec, P)))
    with pytest.raises(ProtocolError):
        s.handle(WireMessage(MsgKind.HELLO, 0, b"XXXX\x01\x00"))


def test_session_lockstep_seq():
    P, qc, sk = _setup()
    rng = np.random.default_rng(0)
    ec = encrypt_controller(qc, sk, P, rng)
    s = ControllerSession()
    assert _handshake(s, P, ec).kind is MsgKind.STEP_ACK
    y = encrypt(1, sk, P, rng).to_bytes(P)
    r0 = s.handle(WireMessage(MsgKind.Y_CIPHER, 0, y))
    assert r0.kind is MsgKind.U_CIPHER and r0.seq == 0
    with pytest.raises(ProtocolError, match="expected seq 1"):
        s.handle(WireMessage(MsgKind.Y_CIPHER, 0, y))
    assert s.handle(WireMessage(MsgKind.Y_CIPHER, 1, y)).seq == 1
    # a new setup resets the state and the counter
    _handshake(s, P, ec)
    assert s.handle(WireMessage(MsgKind.Y_CIPHER, 0, y)).payload == r0.payload


def test_shutdown_discards_state():
    P, qc, sk = _setup()
    ec = encrypt_controller(qc, sk, P, np.random.default_rng(0))
    s = ControllerSession()
    _handshake(s, P, ec)
    assert s.handle(WireMessage(MsgKind.SHUTDOWN, 3)) is None
    assert s.finished and s.controller is None


def test_controller_rejects_plant_only_kinds():
    s = ControllerSession()
    s.handle(WireMessage(MsgKind.HELLO, 0, encode_hello()))
    with pytest.raises(ProtocolError):
        s.handle(WireMessage(MsgKind.U_CIPHER, 0, b""))


def _serve_in_thread(transport):
    errors = []

    def run():
        try:
            serve_connection(transport)
        except Exception as exc:  # surfaced through the list
            errors.append(exc)

    th = threading.Thread(target=run, daemon=True)
    th.start()
    return th, errors


def test_pipe_run_equals_in_process():
    P, qc, _ = _setup(seed=11)
    ref, sk, _ = encrypted_run(P, horizon=60)
    a, b = pipe_pair()
    th, errors = _serve_in_thread(b)
    tr = run_plant_side(a, scalar_plant(), qc, sk, P, 60)
    th.join(5)
    assert not errors and tr.complete
    _same_trace(ref, tr)


def test_tcp_run_equals_in_process():
    P, qc, _ = _setup(seed=12)
    ref, sk, _ = encrypted_run(P, horizon=30)
    lst = bind_listener("127.0.0.1:0")
    host, port = lst.getsockname()
    th = threading.Thread(target=serve_listener, args=(lst,), daemon=True)
    th.start()
    tr = run_plant_side(f"{host}:{port}", scalar_plant(), qc, sk, P, 30)
    th.join(5)
    _same_trace(ref, tr)


def test_horizon_zero_sends_shutdown():
    P, qc, sk = _setup()
    a, b = pipe_pair()
    tr = run_plant_side(a, scalar_plant(), qc, sk, P, 0)
    assert len(tr) == 0 and tr.complete
    assert b.recv().kind is MsgKind.SHUTDOWN


class _DropAfter:
    """Pipe end that goes dead after a fixed number of sends."""

    def __init__(self, inner, sends):
        self.inner, self.left = inner, sends

    def send(self, msg):
        if self.left == 0:
            raise ConnectionError("link down")
        self.left -= 1
        self.inner.send(msg)

    def recv(self):
        return self.inner.recv()

    def close(self):
        self.inner.close()


def test_connection_loss_gives_partial_trace():
    P, qc, sk = _setup()
    a, b = pipe_pair(timeout=5)
    th, errors = _serve_in_thread(b)
    tr = run_plant_side(_DropAfter(a, 3 + 10), scalar_plant(), qc, sk, P, 50)
    th.join(5)
    assert not tr.complete and len(tr) == 10
    assert len(tr.err_L) == 10


def test_seq_mismatch_aborts():
    P, qc, sk = _setup()
    a, b = pipe_pair(timeout=5)

    def rogue():
        s = ControllerSession()
        while True:
            try:
                msg = b.recv()
            except ConnectionError:
                return
            reply = s.handle(msg)
            if reply is None:
                return
            if reply.kind is MsgKind.U_CIPHER and reply.seq == 4:
                reply = WireMessage(MsgKind.U_CIPHER, 7, reply.payload)
            b.send(reply)

    th = threading.Thread(target=rogue, daemon=True)
    th.start()
    tr = run_plant_side(a, scalar_plant(), qc, sk, P, 20)
    assert not tr.complete and len(tr) == 4


def test_controller_closes_on_protocol_violation():
    a, b = pipe_pair(timeout=5)
    th, errors = _serve_in_thread(b)
    a.send(WireMessage(MsgKind.Y_CIPHER, 0, b""))
    th.join(5)
    assert errors and isinstance(errors[0], ProtocolError)
    with pytest.raises(ConnectionError):
        a.recv()


def test_wire_kinds_have_no_key_channel():
    assert {k.name for k in MsgKind} == {"HELLO", "PARAMS", "CTRL_SETUP", "Y_CIPHER", "U_CIPHER", "STEP_ACK", "SHUTDOWN"}
    P, _, sk = _setup()
    s = ControllerSession()
    s.handle(WireMessage(MsgKind.HELLO, 0, encode_hello()))
    s.handle(WireMessage(MsgKind.PARAMS, 0, encode_params(P)))
    with pytest.raises(ProtocolError):
        s.handle(WireMessage(MsgKind.CTRL_SETUP, 0, sk.to_bytes(P)))
    with pytest.raises((ProtocolError, framing.FrameError)):
        s.handle(WireMessage(MsgKind.Y_CIPHER, 0, sk.to_bytes(P)))
