"""Sensor/controller/actuator loop over a byte stream.

The plant side (sensor + actuator) owns the secret key.  The controller
side only ever receives ciphertexts and public parameters.

Every message is one frame, little-endian::

    length  u32   number of bytes after this field (9 + len(payload))
    kind    u8    MsgKind
    seq     u64   step counter
    payload

Payloads:

    HELLO       b"LWEC" + u16 protocol version
    PARAMS      u16 version, u16 base, u32 N, then p, L, r as u128
    CTRL_SETUP  GSW matrices F, G, H, J then the initial state ciphertext
    Y_CIPHER    one ciphertext frame (a single row)
    U_CIPHER    the output ciphertext, then the updated state ciphertext
    STEP_ACK    empty; acknowledges PARAMS and CTRL_SETUP
    SHUTDOWN    empty

The session is lockstep: after setup, each ``Y_CIPHER(seq=k)`` is answered
by ``U_CIPHER(seq=k)`` and ``k`` counts up from 0.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple, Union

from . import framing
from .controller import EncryptedController, QuantizedController, encrypt_controller
from .gsw import read_gsw_matrix
from .lwe import Ciphertext, Params, SecretKey, read_ciphertext
from .sim import LoopTrace, Plant, attach_reference, encrypted_loop, session_rngs

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HELLO_MAGIC = b"LWEC"
MAX_FRAME = 256 * 1024 * 1024

_PREFIX = struct.Struct("<I")
_KIND_SEQ = struct.Struct("<BQ")
_HELLO = struct.Struct("<4sH")
_PARAMS = struct.Struct("<HHI")


class MsgKind(IntEnum):
    HELLO = 1
    PARAMS = 2
    CTRL_SETUP = 3
    Y_CIPHER = 4
    U_CIPHER = 5
    STEP_ACK = 6
    SHUTDOWN = 7


class ProtocolError(RuntimeError):
    """A peer broke the message order or sent a malformed frame."""


@dataclass(frozen=True)
class WireMessage:
    kind: MsgKind
    seq: int = 0
    payload: bytes = b""


def encode_message(msg: WireMessage) -> bytes:
    body = _KIND_SEQ.pack(int(msg.kind), msg.seq) + msg.payload
    return _PREFIX.pack(len(body)) + body


def decode_body(body: bytes) -> WireMessage:
    """Decode the bytes that follow the length prefix."""
    if len(body) < _KIND_SEQ.size:
        raise ProtocolError("frame too short")
    kind, seq = _KIND_SEQ.unpack_from(body)
    try:
        kind = MsgKind(kind)
    except ValueError:
        raise ProtocolError(f"unknown message kind {kind}") from None
    return WireMessage(kind, seq, bytes(body[_KIND_SEQ.size :]))


def decode_message(data: bytes) -> WireMessage:
    if len(data) < _PREFIX.size:
        raise ProtocolError("missing length prefix")
    (length,) = _PREFIX.unpack_from(data)
    if len(data) != _PREFIX.size + length:
        raise ProtocolError(f"length prefix says {length} bytes, frame has {len(data) - _PREFIX.size}")
    return decode_body(data[_PREFIX.size :])


# -- payload codecs ---------------------------------------------------------


def encode_hello() -> bytes:
    return _HELLO.pack(HELLO_MAGIC, PROTOCOL_VERSION)


def check_hello(payload: bytes) -> None:
    if len(payload) != _HELLO.size:
        raise ProtocolError("bad HELLO payload")
    magic, version = _HELLO.unpack(payload)
    if magic != HELLO_MAGIC or version != PROTOCOL_VERSION:
        raise ProtocolError(f"incompatible peer {magic!r} v{version}")


def encode_params(params: Params) -> bytes:
    """Public parameters only; the seed stays on the plant side."""
    out = _PARAMS.pack(PROTOCOL_VERSION, params.base, params.N)
    for v in (params.p, params.L, params.r):
        out += v.to_bytes(16, "little")
    return out


def decode_params(payload: bytes) -> Params:
    if len(payload) != _PARAMS.size + 48:
        raise ProtocolError("bad PARAMS payload")
    version, base, N = _PARAMS.unpack_from(payload)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    off = _PARAMS.size
    p, L, r = (int.from_bytes(payload[off + 16 * i : off + 16 * (i + 1)], "little") for i in range(3))
    try:
        return Params(p=p, L=L, r=r, N=N, base=base)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid parameters: {exc}") from exc


def encode_ctrl_setup(ec: EncryptedController, params: Params) -> bytes:
    if not isinstance(ec, EncryptedController):
        raise TypeError("CTRL_SETUP carries an EncryptedController and nothing else")
    return b"".join(
        [
            ec.F_enc.to_bytes(params),
            ec.G_enc.to_bytes(params),
            ec.H_enc.to_bytes(params),
            ec.J_enc.to_bytes(params),
            ec.x_enc.to_bytes(params),
        ]
    )


def decode_ctrl_setup(payload: bytes, params: Params) -> EncryptedController:
    """Parse exactly four GSW matrices and one ciphertext; anything else
    (including a key frame) is rejected."""
    try:
        off = 0
        mats = []
        for _ in range(4):
            m, off = read_gsw_matrix(payload, off, params)
            mats.append(m)
        x_enc, off = read_ciphertext(payload, off, params)
    except framing.FrameError as exc:
        raise ProtocolError(f"malformed CTRL_SETUP: {exc}") from exc
    if off != len(payload):
        raise ProtocolError("trailing bytes in CTRL_SETUP")
    try:
        return EncryptedController(*mats, x_enc, params)
    except ValueError as exc:
        raise ProtocolError(f"inconsistent CTRL_SETUP: {exc}") from exc


def _decode_ciphertexts(payload: bytes, params: Params, count: int):
    out, off = [], 0
    try:
        for _ in range(count):
            c, off = read_ciphertext(payload, off, params)
            out.append(c)
    except framing.FrameError as exc:
        raise ProtocolError(f"malformed ciphertext payload: {exc}") from exc
    if off != len(payload):
        raise ProtocolError("trailing bytes after ciphertext payload")
    return out


# -- transports -------------------------------------------------------------


class SocketTransport:
    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, msg: WireMessage) -> None:
        self.sock.sendall(encode_message(msg))

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("peer closed the connection")
            buf += chunk
        return bytes(buf)

    def recv(self) -> WireMessage:
        (length,) = _PREFIX.unpack(self._recv_exact(_PREFIX.size))
        if length > MAX_FRAME:
            raise ProtocolError(f"frame of {length} bytes exceeds limit")
        return decode_body(self._recv_exact(length))

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class PipeTransport:
    """In-memory transport; frames still go through the byte encoding."""

    _CLOSED = object()

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: Optional[float] = 30.0):
        self.inbox, self.outbox, self.timeout = inbox, outbox, timeout

    def send(self, msg: WireMessage) -> None:
        self.outbox.put(encode_message(msg))

    def send_raw(self, data: bytes) -> None:
        self.outbox.put(data)

    def recv(self) -> WireMessage:
        try:
            data = self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ConnectionError("timed out waiting for peer") from None
        if data is self._CLOSED:
            raise ConnectionError("peer closed the pipe")
        return decode_message(data)

    def close(self) -> None:
        self.outbox.put(self._CLOSED)


def pipe_pair(timeout: Optional[float] = 30.0) -> Tuple[PipeTransport, PipeTransport]:
    a, b = queue.Queue(), queue.Queue()
    return PipeTransport(a, b, timeout), PipeTransport(b, a, timeout)


def parse_addr(addr: Union[str, Tuple[str, int]]) -> Tuple[str, int]:
    if isinstance(addr, tuple):
        return addr
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {addr!r}")
    return host, int(port)


# -- controller side --------------------------------------------------------


class ControllerSession:
    """Message handler for one controller session.

    ``handle`` returns the reply (or ``None``) and raises
    :class:`ProtocolError` on any ordering violation.
    """

    def __init__(self):
        self.greeted = False
        self.params: Optional[Params] = None
        self.controller: Optional[EncryptedController] = None
        self.next_seq = 0
        self.finished = False

    def handle(self, msg: WireMessage) -> Optional[WireMessage]:
        if msg.kind is MsgKind.SHUTDOWN:
            self.controller = None
            self.finished = True
            return None
        if msg.kind is MsgKind.HELLO:
            check_hello(msg.payload)
            self.greeted = True
            return WireMessage(MsgKind.HELLO, 0, encode_hello())
        if not self.greeted:
            raise ProtocolError(f"{msg.kind.name} before HELLO")
        if msg.kind is MsgKind.PARAMS:
            self.params = decode_params(msg.payload)
            self.controller = None
            return WireMessage(MsgKind.STEP_ACK, msg.seq)
        if msg.kind is MsgKind.CTRL_SETUP:
            if self.params is None:
                raise ProtocolError("CTRL_SETUP before PARAMS")
            self.controller = decode_ctrl_setup(msg.payload, self.params)
            self.next_seq = 0
            return WireMessage(MsgKind.STEP_ACK, msg.seq)
        if msg.kind is MsgKind.Y_CIPHER:
            if self.controller is None:
                raise ProtocolError("Y_CIPHER before CTRL_SETUP")
            if msg.seq != self.next_seq:
                raise ProtocolError(f"expected seq {self.next_seq}, got {msg.seq}")
            (y_enc,) = _decode_ciphertexts(msg.payload, self.params, 1)
            try:
                u_enc = self.controller.step(y_enc)
            except ValueError as exc:
                raise ProtocolError(f"bad Y_CIPHER: {exc}") from exc
            self.next_seq += 1
            payload = u_enc.to_bytes(self.params) + self.controller.x_enc.to_bytes(self.params)
            return WireMessage(MsgKind.U_CIPHER, msg.seq, payload)
        raise ProtocolError(f"unexpected {msg.kind.name} from plant")


def serve_connection(transport) -> None:
    """Run one session until SHUTDOWN.  Closes the transport on exit."""
    session = ControllerSession()
    try:
        while not session.finished:
            reply = session.handle(transport.recv())
            if reply is not None:
                transport.send(reply)
    except ProtocolError as exc:
        log.error("closing session: %s", exc)
        raise
    finally:
        transport.close()


def bind_listener(listen_addr) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind(parse_addr(listen_addr))
    sock.listen(1)
    return sock


def serve_listener(listener: socket.socket, sessions: Optional[int] = 1) -> int:
    """Accept and serve sessions one at a time.

    Returns the number of sessions that ended with a protocol error.
    ``sessions=None`` serves forever.
    """
    failures = 0
    served = 0
    try:
        while sessions is None or served < sessions:
            conn, peer = listener.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            log.info("session from %s:%s", *peer)
            try:
                serve_connection(SocketTransport(conn))
            except (ProtocolError, ConnectionError) as exc:
                log.error("session from %s:%s failed: %s", peer[0], peer[1], exc)
                failures += 1
            served += 1
    finally:
        listener.close()
    return failures


def serve_controller(listen_addr, sessions: Optional[int] = 1) -> int:
    """Listen on ``HOST:PORT`` and act as the encrypted controller."""
    return serve_listener(bind_listener(listen_addr), sessions)


# -- plant side -------------------------------------------------------------


def _expect(transport, kind: MsgKind, seq: int) -> WireMessage:
    msg = transport.recv()
    if msg.kind is not kind or msg.seq != seq:
        raise ProtocolError(f"expected {kind.name}(seq={seq}), got {msg.kind.name}(seq={msg.seq})")
    return msg


def run_plant_side(
    connect_addr,
    plant: Plant,
    qc: QuantizedController,
    sk: SecretKey,
    params: Params,
    horizon: int,
) -> LoopTrace:
    """Drive a remote encrypted controller and return the instrumented trace.

    ``connect_addr`` is ``HOST:PORT`` or an already-open transport.  With
    the same ``params.seed`` the trace equals :func:`sim.run_encrypted`.
    On connection loss or a sequence mismatch the partial trace is returned
    with ``complete = False``.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if isinstance(connect_addr, (str, tuple)):
        sock = socket.create_connection(parse_addr(connect_addr))
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        transport = SocketTransport(sock)
    else:
        transport = connect_addr

    trace = LoopTrace("encrypted")
    try:
        if horizon == 0:
            transport.send(WireMessage(MsgKind.SHUTDOWN))
            trace.xp_final = plant.x0.copy()
            return trace
        ctrl_rng, sensor_rng = session_rngs(params.seed)
        ec = encrypt_controller(qc, sk, params, ctrl_rng)

        transport.send(WireMessage(MsgKind.HELLO, 0, encode_hello()))
        check_hello(_expect(transport, MsgKind.HELLO, 0).payload)
        transport.send(WireMessage(MsgKind.PARAMS, 0, encode_params(params)))
        _expect(transport, MsgKind.STEP_ACK, 0)
        transport.send(WireMessage(MsgKind.CTRL_SETUP, 0, encode_ctrl_setup(ec, params)))
        _expect(transport, MsgKind.STEP_ACK, 0)

        seq = [0]

        def step(y_enc: Ciphertext):
            k = seq[0]
            transport.send(WireMessage(MsgKind.Y_CIPHER, k, y_enc.to_bytes(params)))
            reply = _expect(transport, MsgKind.U_CIPHER, k)
            seq[0] += 1
            u_enc, x_next = _decode_ciphertexts(reply.payload, params, 2)
            return u_enc, x_next

        try:
            encrypted_loop(plant, ec.x_enc, step, qc, sk, params, horizon, sensor_rng, trace=trace)
        except (ConnectionError, ProtocolError) as exc:
            log.error("aborting after %d steps: %s", len(trace), exc)
            trace.complete = False
            trace.xp_final = None
        if len(trace):
            attach_reference(trace, plant, qc, params)
        if trace.complete:
            transport.send(WireMessage(MsgKind.SHUTDOWN, seq[0]))
        return trace
    finally:
        transport.close()
