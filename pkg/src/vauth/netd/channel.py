"""Mutually authenticated, encrypted channels.

The handshake is an ephemeral X25519 exchange followed by signed identity
messages. The server reveals its blessings first. Each side signs a digest
that covers both ephemerals and everything sent so far, and identity
messages travel under keys derived from the ephemeral secret, so a recorded
handshake cannot be replayed into another connection.

Once both signatures verify and both peers pass their policies, traffic
keys are derived from the full transcript. All later frames except CLOSE
are sealed with ChaCha20-Poly1305 under counter nonces, with the frame
type as associated data.
"""

from __future__ import annotations

import hashlib
import logging
import os
import socket
import struct
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable, Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..caveats import (
    DEFAULT_REGISTRY,
    CaveatRegistry,
    Discharge,
    MAX_DISCHARGE_DEPTH,
    RequestContext,
    ThirdPartyCaveat,
    diagnose_blessing,
)
from ..credentials import Blessing
from ..encoding import EncodingError, PublicKey, decode, encode, hash_args
from ..errors import VauthError
from ..patterns import ACL, is_authorized
from .framing import MsgType, ProtocolError, read_frame, write_frame
from .messages import (
    PROTOCOL_VERSION,
    AuthBody,
    ClientAuth,
    Close,
    CloseCode,
    Hello,
    Reply,
    ServerAuth,
)

log = logging.getLogger(__name__)

MAX_BLESSINGS = 8
HANDSHAKE_TIMEOUT = 10.0
_NONCE_PREFIX = b"\x00" * 4
_SERVER_TAG = "vauth/v1 server"
_CLIENT_TAG = "vauth/v1 client"

Clock = Callable[[], datetime]
DischargeFetcher = Callable[[ThirdPartyCaveat], "Discharge | None"]


def _now() -> datetime:
    return datetime.now().astimezone()


class HandshakeError(VauthError):
    def __init__(self, code: int, reason: str) -> None:
        label = CloseCode(code).name.lower() if code in set(CloseCode) else f"code {code}"
        super().__init__(f"{label}: {reason}")
        self.code = code
        self.reason = reason


class PeerClosed(HandshakeError):
    """The peer sent CLOSE."""


def _derive(shared: bytes, transcript: bytes, info: bytes) -> tuple[bytes, bytes]:
    """Two 32-byte keys: (client-to-server, server-to-client)."""
    okm = HKDF(hashes.SHA256(), 64, hashlib.sha256(transcript).digest(), info).derive(shared)
    return okm[:32], okm[32:]


def _nonce(counter: int) -> bytes:
    return _NONCE_PREFIX + struct.pack(">Q", counter)


def _seal(key: bytes, counter: int, msg_type: int, payload: bytes) -> bytes:
    return ChaCha20Poly1305(key).encrypt(_nonce(counter), payload, bytes([msg_type]))


def _open(key: bytes, counter: int, msg_type: int, sealed: bytes) -> bytes:
    try:
        return ChaCha20Poly1305(key).decrypt(_nonce(counter), sealed, bytes([msg_type]))
    except InvalidTag:
        raise ProtocolError("frame failed authentication") from None


def server_digest(hello: bytes, ephemeral: bytes, body: AuthBody) -> bytes:
    return hash_args(_SERVER_TAG, hello, ephemeral, body.public_key,
                     list(body.blessings), list(body.discharges))


def client_digest(hello: bytes, server_auth: bytes, body: AuthBody) -> bytes:
    return hash_args(_CLIENT_TAG, hello, server_auth, body.public_key,
                     list(body.blessings), list(body.discharges))


def _signed(keys, body: AuthBody, digest_fn) -> AuthBody:
    unsigned = AuthBody(keys.public, body.blessings, body.discharges)
    return AuthBody(keys.public, body.blessings, body.discharges,
                    keys.secret.sign(digest_fn(unsigned)))


def gather_discharges(blessings: Iterable[Blessing],
                      fetch: DischargeFetcher | None) -> tuple[Discharge, ...]:
    """Fetch discharges for every third-party caveat, following nested ones."""
    if fetch is None:
        return ()
    out: list[Discharge] = []
    seen: set[bytes] = set()
    frontier = [c for b in blessings for c in b.caveats]
    for _ in range(MAX_DISCHARGE_DEPTH):
        nxt = []
        for c in frontier:
            if not isinstance(c, ThirdPartyCaveat) or c.id in seen:
                continue
            seen.add(c.id)
            d = fetch(c)
            if d is not None:
                out.append(d)
                nxt.extend(d.caveats)
        frontier = nxt
        if not frontier:
            break
    return tuple(out)


@dataclass(frozen=True)
class PeerCheck:
    """Blessings the peer presented and the names that validated."""

    blessings: tuple[Blessing, ...]
    names: tuple[str, ...]
    failures: tuple[str, ...]


def check_peer(body: AuthBody, roots, con: RequestContext,
               registry: CaveatRegistry) -> PeerCheck:
    names, failures = [], []
    for b in body.blessings:
        if b.public_key != body.public_key:
            failures.append(f"{b.name}: bound to another key")
            continue
        res = diagnose_blessing(b, roots, con.with_(remote_blessing=b), registry)
        if res:
            names.append(b.name)
        else:
            failures.append(f"{b.name}: {'; '.join(res.diagnostics)}")
    return PeerCheck(tuple(body.blessings), tuple(names), tuple(failures))


class Channel:
    """An established connection. `send`/`recv` are individually thread-safe."""

    def __init__(self, sock: socket.socket, role: str, send_key: bytes, recv_key: bytes,
                 peer_key: PublicKey, peer: PeerCheck, peer_discharges: tuple[Discharge, ...],
                 local_blessings: tuple[Blessing, ...], peer_endpoint: str = "") -> None:
        self.sock = sock
        self.role = role
        self._send_key = send_key
        self._recv_key = recv_key
        self._send_ctr = 0
        self._recv_ctr = 0
        self._send_lock = threading.Lock()
        self._recv_lock = threading.Lock()
        self.peer_key = peer_key
        self.peer_blessings = peer.blessings
        self.peer_names = peer.names
        self.peer_discharges = peer_discharges
        self.local_blessings = local_blessings
        self.peer_endpoint = peer_endpoint
        self.closed = False

    @property
    def local_names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.local_blessings)

    def send(self, msg_type: MsgType, record) -> None:
        payload = encode(record)
        with self._send_lock:
            sealed = _seal(self._send_key, self._send_ctr, msg_type, payload)
            self._send_ctr += 1
            write_frame(self.sock, msg_type, sealed)

    def recv(self, timeout: float | None = None) -> tuple[MsgType, bytes]:
        with self._recv_lock:
            self.sock.settimeout(timeout)
            msg_type, payload = read_frame(self.sock)
            if msg_type is MsgType.CLOSE:
                close = decode(Close, payload)
                self.closed = True
                raise PeerClosed(close.code, close.reason)
            body = _open(self._recv_key, self._recv_ctr, msg_type, payload)
            self._recv_ctr += 1
            return msg_type, body

    def close(self, code: int = CloseCode.NORMAL, reason: str = "") -> None:
        if self.closed:
            return
        self.closed = True
        try:
            with self._send_lock:
                write_frame(self.sock, MsgType.CLOSE, encode(Close(code, reason)))
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


def _abort(sock: socket.socket, code: CloseCode, reason: str) -> HandshakeError:
    try:
        write_frame(sock, MsgType.CLOSE, encode(Close(code, reason)))
    except OSError:
        pass
    return HandshakeError(code, reason)


def _expect(sock: socket.socket, want: MsgType, timeout: float) -> bytes:
    sock.settimeout(timeout)
    try:
        msg_type, payload = read_frame(sock)
    except socket.timeout:
        raise _abort(sock, CloseCode.TIMEOUT, f"timed out waiting for {want.name}") from None
    if msg_type is MsgType.CLOSE:
        close = decode(Close, payload)
        raise PeerClosed(close.code, close.reason)
    if msg_type is not want:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, f"expected {want.name}, got {msg_type.name}")
    return payload


def _authorized(names: Sequence[str], policy: ACL | None, resolver) -> bool:
    if policy is None:
        return True
    return any(is_authorized(n, policy, resolver) for n in names)


def _decode_body(sock, key: bytes, msg_type: MsgType, sealed: bytes) -> AuthBody:
    try:
        body = decode(AuthBody, _open(key, 0, msg_type, sealed))
    except (ProtocolError, EncodingError) as exc:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, str(exc)) from None
    if len(body.blessings) > MAX_BLESSINGS:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, f"more than {MAX_BLESSINGS} blessings")
    return body


def client_handshake(sock: socket.socket, principal, *, policy: ACL | None = None,
                     clock: Clock = _now, registry: CaveatRegistry = DEFAULT_REGISTRY,
                     resolver=None, fetch_discharge: DischargeFetcher | None = None,
                     timeout: float = HANDSHAKE_TIMEOUT, peer_endpoint: str = "",
                     blessings: Sequence[Blessing] | None = None) -> Channel:
    """Run the client side. `blessings` overrides store selection."""
    eph = X25519PrivateKey.generate()
    hello = encode(Hello(PROTOCOL_VERSION, eph.public_key().public_bytes_raw(), os.urandom(16)))
    write_frame(sock, MsgType.HELLO, hello)

    sa_bytes = _expect(sock, MsgType.SERVER_AUTH, timeout)
    try:
        sa = decode(ServerAuth, sa_bytes)
        shared = eph.exchange(X25519PublicKey.from_public_bytes(sa.ephemeral))
    except (EncodingError, ValueError) as exc:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, str(exc)) from None
    hs_c2s, hs_s2c = _derive(shared, hello + sa.ephemeral, b"vauth handshake")
    server = _decode_body(sock, hs_s2c, MsgType.SERVER_AUTH, sa.sealed)
    if not server.public_key.verify(server_digest(hello, sa.ephemeral, server), server.signature):
        raise _abort(sock, CloseCode.INVALID_SIGNATURE, "server transcript signature invalid")

    con = RequestContext(timestamp=clock(), discharges=server.discharges,
                         remote_key=server.public_key, peer_endpoint=peer_endpoint)
    peer = check_peer(server, principal.roots, con, registry)
    if not _authorized(peer.names, policy, resolver):
        detail = ", ".join(peer.names) or "; ".join(peer.failures) or "no blessings"
        raise _abort(sock, CloseCode.UNAUTHORIZED, f"server not authorized by policy ({detail})")

    if blessings is None:
        blessings = principal.store.select_for_peer(peer.names)
    mine = tuple(blessings)[:MAX_BLESSINGS]
    discharges = gather_discharges(mine, fetch_discharge)
    body = _signed(principal.keys, AuthBody(principal.public_key, mine, discharges),
                   lambda b: client_digest(hello, sa_bytes, b))
    ca_bytes = encode(ClientAuth(_seal(hs_c2s, 0, MsgType.CLIENT_AUTH, encode(body))))
    write_frame(sock, MsgType.CLIENT_AUTH, ca_bytes)

    c2s, s2c = _derive(shared, hello + sa_bytes + ca_bytes, b"vauth channel")
    ch = Channel(sock, "client", c2s, s2c, server.public_key, peer, server.discharges,
                 mine, peer_endpoint)
    try:
        msg_type, payload = ch.recv(timeout)
    except socket.timeout:
        raise _abort(sock, CloseCode.TIMEOUT, "timed out waiting for confirmation") from None
    except ProtocolError as exc:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, str(exc)) from None
    if msg_type is not MsgType.REPLY or decode(Reply, payload).id != 0:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, "bad handshake confirmation")
    sock.settimeout(None)
    return ch


def server_handshake(sock: socket.socket, principal, blessings: Sequence[Blessing], *,
                     policy: ACL | None = None, clock: Clock = _now,
                     registry: CaveatRegistry = DEFAULT_REGISTRY, resolver=None,
                     fetch_discharge: DischargeFetcher | None = None,
                     timeout: float = HANDSHAKE_TIMEOUT, peer_endpoint: str = "") -> Channel:
    hello = _expect(sock, MsgType.HELLO, timeout)
    try:
        h = decode(Hello, hello)
        if h.version != PROTOCOL_VERSION:
            raise ValueError(f"unsupported protocol version {h.version}")
        eph = X25519PrivateKey.generate()
        shared = eph.exchange(X25519PublicKey.from_public_bytes(h.ephemeral))
    except (EncodingError, ValueError) as exc:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, str(exc)) from None
    eph_pub = eph.public_key().public_bytes_raw()
    hs_c2s, hs_s2c = _derive(shared, hello + eph_pub, b"vauth handshake")

    mine = tuple(blessings)[:MAX_BLESSINGS]
    discharges = gather_discharges(mine, fetch_discharge)
    body = _signed(principal.keys, AuthBody(principal.public_key, mine, discharges),
                   lambda b: server_digest(hello, eph_pub, b))
    sa_bytes = encode(ServerAuth(eph_pub, _seal(hs_s2c, 0, MsgType.SERVER_AUTH, encode(body))))
    write_frame(sock, MsgType.SERVER_AUTH, sa_bytes)

    ca_bytes = _expect(sock, MsgType.CLIENT_AUTH, timeout)
    try:
        ca = decode(ClientAuth, ca_bytes)
    except EncodingError as exc:
        raise _abort(sock, CloseCode.PROTOCOL_ERROR, str(exc)) from None
    client = _decode_body(sock, hs_c2s, MsgType.CLIENT_AUTH, ca.sealed)
    if not client.public_key.verify(client_digest(hello, sa_bytes, client), client.signature):
        raise _abort(sock, CloseCode.INVALID_SIGNATURE, "client transcript signature invalid")

    con = RequestContext(timestamp=clock(), local_blessing_names=tuple(b.name for b in mine),
                         discharges=client.discharges, remote_key=client.public_key,
                         peer_endpoint=peer_endpoint)
    peer = check_peer(client, principal.roots, con, registry)
    if not _authorized(peer.names, policy, resolver):
        raise _abort(sock, CloseCode.UNAUTHORIZED, "no presented blessing is valid and authorized")

    c2s, s2c = _derive(shared, hello + sa_bytes + ca_bytes, b"vauth channel")
    ch = Channel(sock, "server", s2c, c2s, client.public_key, peer, client.discharges,
                 mine, peer_endpoint)
    ch.send(MsgType.REPLY, Reply(0))
    sock.settimeout(None)
    return ch

