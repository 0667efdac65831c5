"""Request/response RPC over authenticated channels.

Every CALL is authorized on its own: the peer's blessings are re-validated
against a fresh request context, the method's ACL is consulted (no entry
means deny) and the outcome is appended to the audit log before the handler
runs.
"""

from __future__ import annotations

import base64
import configparser
import enum
import itertools
import logging
import os
import socket
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, tzinfo
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence
from zoneinfo import ZoneInfo

from ..caveats import (
    DEFAULT_REGISTRY,
    CaveatRegistry,
    Discharge,
    RequestContext,
    ThirdPartyCaveat,
    diagnose_blessing,
)
from ..credentials import Blessing
from ..encoding import EncodingError, decode, encode
from ..errors import DischargeRefused, VauthError
from ..groups import GroupResolver, RemainderResult
from ..patterns import ACL, Mode, UNIVERSAL, as_components, is_authorized
from .channel import HANDSHAKE_TIMEOUT, Channel, HandshakeError, PeerClosed, client_handshake, server_handshake
from .framing import ConnectionClosed, MsgType, ProtocolError
from .messages import (
    AuditRecord,
    Call,
    CloseCode,
    DischargeReply,
    DischargeRequest,
    Grant,
    GroupQuery,
    GroupResult,
    GroupUnknown,
    Reply,
    Status,
)

log = logging.getLogger(__name__)


def _now() -> datetime:
    return datetime.now().astimezone()


class AccessDenied(VauthError):
    pass


class ApplicationError(VauthError):
    """Raised by handlers; the message is returned to the caller."""


class GrantError(VauthError):
    pass


class Decision(str, enum.Enum):
    ALLOWED = "Allowed"
    DENIED_CAVEAT = "DeniedCaveat"
    DENIED_ACL = "DeniedACL"
    DENIED_UNRECOGNIZED = "DeniedUnrecognized"


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host.strip("[]"), int(port)


def parse_duration(text: str) -> timedelta:
    """``90``, ``90s``, ``5m``, ``24h`` or ``7d``."""
    text = text.strip()
    units = {"s": 1, "m": 60, "h": 3600, "d": 86400}
    if text and text[-1] in units:
        return timedelta(seconds=float(text[:-1]) * units[text[-1]])
    return timedelta(seconds=float(text))


# -- audit log -----------------------------------------------------------------


class AuditLog:
    """Append-only record of calls; one base64url canonical record per line."""

    def __init__(self, path: str | os.PathLike | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: tuple[AuditRecord, ...] = ()
        if self.path is not None and self.path.exists():
            self._records = tuple(read_audit_file(self.path))

    def append(self, record: AuditRecord) -> None:
        with self._lock:
            if self.path is not None:
                line = base64.urlsafe_b64encode(encode(record)).decode("ascii")
                with open(self.path, "a") as fh:
                    fh.write(line + "\n")
            self._records = self._records + (record,)

    def records(self, since: datetime | None = None) -> list[AuditRecord]:
        snapshot = self._records
        if since is None:
            return list(snapshot)
        return [r for r in snapshot if r.time >= since]

    def clear(self) -> None:
        with self._lock:
            self._records = ()
            if self.path is not None and self.path.exists():
                self.path.unlink()

    def __len__(self) -> int:
        return len(self._records)


def read_audit_file(path: str | os.PathLike) -> list[AuditRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(decode(AuditRecord, base64.urlsafe_b64decode(line.strip())))
    return out


def render_audit(record: AuditRecord) -> str:
    names = ",".join(record.peer_names) or "-"
    return f"{record.time.isoformat()} {record.method} {record.decision} {names}"


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class ServiceConfig:
    acls: Mapping[str, ACL] = field(default_factory=dict)
    open_methods: frozenset[str] = frozenset()
    serving_label: str | None = None
    listen: str = "127.0.0.1:0"
    connection_acl: ACL | None = None
    group_registry: str | None = None
    skew: timedelta = timedelta(0)
    timezone: str | None = None
    audit_path: str | None = None
    timeout: float = HANDSHAKE_TIMEOUT

    @classmethod
    def parse(cls, text: str, base: str | os.PathLike | None = None) -> "ServiceConfig":
        """Read an INI-style config.

        ``[service]`` holds listen, serving, skew, timezone, audit, registry,
        timeout and open (comma-separated methods). Each ``[acl <Method>]``
        and the optional ``[connection]`` section hold ``allow``/``deny``
        lists, one pattern per line. Relative paths resolve against `base`.
        """
        cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
        cp.optionxform = str  # type: ignore[assignment]
        cp.read_string(text)
        svc = cp["service"] if cp.has_section("service") else {}

        def path(key: str) -> str | None:
            value = svc.get(key)
            if value and base is not None and not os.path.isabs(value):
                value = str(Path(base) / value)
            return value or None

        acls = {}
        connection = None
        for section in cp.sections():
            if section.startswith("acl "):
                acls[section[4:].strip()] = _section_acl(cp[section])
            elif section == "connection":
                connection = _section_acl(cp[section])
        open_methods = frozenset(m.strip() for m in svc.get("open", "").split(",") if m.strip())
        return cls(
            acls=acls,
            open_methods=open_methods,
            serving_label=svc.get("serving") or None,
            listen=svc.get("listen", "127.0.0.1:0"),
            connection_acl=connection,
            group_registry=path("registry"),
            skew=parse_duration(svc.get("skew", "0")),
            timezone=svc.get("timezone") or None,
            audit_path=path("audit"),
            timeout=float(svc.get("timeout", HANDSHAKE_TIMEOUT)),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ServiceConfig":
        p = Path(path)
        return cls.parse(p.read_text(), base=p.parent)

    def tz(self) -> tzinfo | None:
        return ZoneInfo(self.timezone) if self.timezone else None


def _section_acl(section) -> ACL:
    def lines(key: str) -> list[str]:
        return [ln.strip() for ln in section.get(key, "").splitlines() if ln.strip()]

    return ACL.of(lines("allow"), lines("deny"))


# -- server --------------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    """What a handler sees: the context plus the peer's validated names."""

    context: RequestContext
    names: tuple[str, ...]
    args: bytes
    channel: Channel

    @property
    def remote_key(self):
        return self.context.remote_key


Handler = Callable[[Request], bytes]


@dataclass(frozen=True)
class _Policy:
    acls: Mapping[str, ACL]
    open_methods: frozenset[str]
    connection_acl: ACL | None
    serving: tuple[Blessing, ...] | None


class Server:
    """Threaded service: one thread per connection, calls handled in order."""

    def __init__(self, principal, config: ServiceConfig | None = None,
                 handlers: Mapping[str, Handler] | None = None, *,
                 clock: Callable[[], datetime] = _now, resolver: GroupResolver | None = None,
                 registry: CaveatRegistry = DEFAULT_REGISTRY, audit: AuditLog | None = None,
                 discharge_service=None, group_service=None,
                 on_grant: Callable[[Grant, Channel], bool] | None = None,
                 fetch_discharge=None) -> None:
        self.principal = principal
        self.config = config or ServiceConfig()
        self.handlers = dict(handlers or {})
        self.clock = clock
        self.resolver = resolver
        self.registry = registry
        self.audit = audit if audit is not None else AuditLog(self.config.audit_path)
        self.discharge_service = discharge_service
        self.group_service = group_service
        self.on_grant = on_grant
        self.fetch_discharge = fetch_discharge
        self._tz = self.config.tz()
        self._policy = _Policy(dict(self.config.acls), self.config.open_methods,
                               self.config.connection_acl, None)
        self._write_lock = threading.Lock()
        self._listener: socket.socket | None = None
        self._channels: set[Channel] = set()
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self.endpoint: str | None = None

    # -- policy snapshots (serialized writers, lock-free readers) --

    def update(self, *, acls: Mapping[str, ACL] | None = None,
               open_methods: Iterable[str] | None = None,
               serving: Sequence[Blessing] | None = None) -> None:
        with self._write_lock:
            p = self._policy
            self._policy = _Policy(
                dict(acls) if acls is not None else p.acls,
                frozenset(open_methods) if open_methods is not None else p.open_methods,
                p.connection_acl,
                tuple(serving) if serving is not None else p.serving,
            )

    def set_acl(self, method: str, acl: ACL) -> None:
        with self._write_lock:
            p = self._policy
            self._policy = replace(p, acls={**p.acls, method: acl})

    @property
    def acls(self) -> Mapping[str, ACL]:
        return self._policy.acls

    def serving_blessings(self) -> tuple[Blessing, ...]:
        p = self._policy
        if p.serving is not None:
            return p.serving
        store = self.principal.store
        if self.config.serving_label:
            found = store.by_label(self.config.serving_label)
            if not found:
                found = [b for b in store.all_blessings() if b.name == self.config.serving_label]
            return tuple(found)
        return (store.default,) if store.default is not None else ()

    def now(self) -> datetime:
        t = self.clock()
        return t.astimezone(self._tz) if self._tz is not None else t

    # -- lifecycle --

    def start(self) -> str:
        host, port = parse_endpoint(self.config.listen)
        family = socket.AF_INET6 if ":" in host else socket.AF_INET
        sock = socket.socket(family, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(64)
        self._listener = sock
        bound = sock.getsockname()
        self.endpoint = f"{bound[0]}:{bound[1]}"
        t = threading.Thread(target=self._accept_loop, name=f"vauth-accept-{bound[1]}", daemon=True)
        t.start()
        self._threads.append(t)
        log.info("serving on %s", self.endpoint)
        return self.endpoint

    def stop(self) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._listener.close()
        for ch in list(self._channels):
            try:
                ch.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=2)

    def serve_forever(self) -> None:
        if self._listener is None:
            self.start()
        self._stopping.wait()

    def __enter__(self) -> "Server":
        if self._listener is None:
            self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stopping.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(sock, addr), daemon=True)
            t.start()
            self._threads = [x for x in self._threads if x.is_alive()] + [t]

    def _serve_conn(self, sock: socket.socket, addr) -> None:
        endpoint = f"{addr[0]}:{addr[1]}"
        policy = self._policy
        try:
            ch = server_handshake(
                sock, self.principal, self.serving_blessings(), policy=policy.connection_acl,
                clock=self.now, registry=self.registry, resolver=self.resolver,
                fetch_discharge=self.fetch_discharge, timeout=self.config.timeout,
                peer_endpoint=endpoint)
        except (HandshakeError, ProtocolError, EncodingError, OSError) as exc:
            log.info("handshake with %s failed: %s", endpoint, exc)
            sock.close()
            return
        self._channels.add(ch)
        try:
            while not self._stopping.is_set():
                try:
                    msg_type, body = ch.recv()
                except (PeerClosed, ConnectionClosed):
                    break
                self._dispatch(ch, msg_type, body)
        except (ProtocolError, EncodingError) as exc:
            log.info("protocol error from %s: %s", endpoint, exc)
            ch.close(CloseCode.PROTOCOL_ERROR, str(exc))
        except OSError:
            pass
        finally:
            ch.close()
            self._channels.discard(ch)

    # -- dispatch --

    def _dispatch(self, ch: Channel, msg_type: MsgType, body: bytes) -> None:
        if msg_type is MsgType.CALL:
            ch.send(MsgType.REPLY, self.handle_call(ch, decode(Call, body)))
        elif msg_type is MsgType.DISCHARGE_REQUEST:
            ch.send(MsgType.DISCHARGE_REPLY, self._discharge(ch, decode(DischargeRequest, body)))
        elif msg_type is MsgType.GROUP_QUERY:
            q = decode(GroupQuery, body)
            res = self.group_service.query(q) if self.group_service is not None else None
            if res is None:
                ch.send(MsgType.GROUP_UNKNOWN, GroupUnknown(q.group, "no such group here"))
            else:
                ch.send(MsgType.GROUP_RESULT, GroupResult(res))
        elif msg_type is MsgType.GRANT:
            ch.send(MsgType.REPLY, self._grant(ch, decode(Grant, body)))
        else:
            raise ProtocolError(f"unexpected {msg_type.name} from client")

    def context(self, ch: Channel, method: str = "", suffix: str = "",
                attributes: Iterable[tuple[str, str]] = ()) -> RequestContext:
        return RequestContext(
            timestamp=self.now(), method=method, suffix=suffix,
            local_blessing_names=ch.local_names, discharges=ch.peer_discharges,
            peer_endpoint=ch.peer_endpoint, remote_key=ch.peer_key,
            attributes=tuple(attributes), skew=self.config.skew)

    def authorize(self, ch: Channel, con: RequestContext) -> tuple[Decision, tuple[str, ...]]:
        """Decision for one call and the names that validated in `con`."""
        policy = self._policy
        checks = [(b, diagnose_blessing(b, self.principal.roots, con.with_(remote_blessing=b),
                                        self.registry))
                  for b in ch.peer_blessings if b.public_key == ch.peer_key]
        valid = tuple(b.name for b, c in checks if c)
        if con.method in policy.open_methods:
            return Decision.ALLOWED, valid
        acl = policy.acls.get(con.method)
        if acl is not None and any(is_authorized(n, acl, self.resolver) for n in valid):
            return Decision.ALLOWED, valid
        if valid or not checks:
            return Decision.DENIED_ACL, valid
        if any(c.failed == "caveats" for _, c in checks):
            return Decision.DENIED_CAVEAT, valid
        return Decision.DENIED_UNRECOGNIZED, valid

    def handle_call(self, ch: Channel, call: Call) -> Reply:
        con = self.context(ch, call.method, call.suffix)
        decision, names = self.authorize(ch, con)
        self.audit.append(AuditRecord(con.timestamp, call.method,
                                      tuple(b.name for b in ch.peer_blessings), decision.value))
        if decision is not Decision.ALLOWED:
            return Reply(call.id, Status.ACCESS_DENIED, message="access denied")
        handler = self.handlers.get(call.method)
        if handler is None:
            return Reply(call.id, Status.APPLICATION_ERROR, message=f"no method {call.method}")
        try:
            return Reply(call.id, Status.OK, handler(Request(con, names, call.args, ch)))
        except ApplicationError as exc:
            return Reply(call.id, Status.APPLICATION_ERROR, message=str(exc))
        except Exception:
            log.exception("handler %s failed", call.method)
            return Reply(call.id, Status.APPLICATION_ERROR, message="internal error")

    def _discharge(self, ch: Channel, req: DischargeRequest) -> DischargeReply:
        if self.discharge_service is None:
            return DischargeReply(None, "this endpoint issues no discharges")
        con = self.context(ch, "Discharge", attributes=req.attributes)
        try:
            return DischargeReply(self.discharge_service.issue(req.caveat, con))
        except (DischargeRefused, VauthError) as exc:
            return DischargeReply(None, str(exc))

    def _grant(self, ch: Channel, grant: Grant) -> Reply:
        b = grant.blessing
        if b.public_key != self.principal.public_key:
            return Reply(0, Status.APPLICATION_ERROR, message="grant is bound to another key")
        if self.on_grant is None:
            return Reply(0, Status.ACCESS_DENIED, message="grants are not accepted here")
        try:
            accepted = self.on_grant(grant, ch)
        except VauthError as exc:
            return Reply(0, Status.APPLICATION_ERROR, message=str(exc))
        if not accepted:
            return Reply(0, Status.ACCESS_DENIED, message="grant declined")
        return Reply(0, Status.OK)


def store_grant(principal) -> Callable[[Grant, Channel], bool]:
    """on_grant callback that stores every grant bound to `principal`."""

    def accept(grant: Grant, ch: Channel) -> bool:
        principal.store.add(grant.blessing, grant.peer_pattern or UNIVERSAL)
        return True

    return accept


# -- client --------------------------------------------------------------------


class Client:
    """Opens channels on behalf of `principal`.

    By default discharges for third-party caveats are fetched (and cached)
    from their dischargers during each handshake.
    """

    def __init__(self, principal, *, clock: Callable[[], datetime] = _now,
                 registry: CaveatRegistry = DEFAULT_REGISTRY,
                 resolver: GroupResolver | None = None, timeout: float = HANDSHAKE_TIMEOUT,
                 discharges="auto", attributes: Iterable[tuple[str, str]] = ()) -> None:
        self.principal = principal
        self.clock = clock
        self.registry = registry
        self.resolver = resolver
        self.timeout = timeout
        if discharges == "auto":
            from .discharge import DischargeClient

            discharges = DischargeClient(principal, clock=clock, timeout=timeout,
                                         attributes=attributes)
        self.discharges = discharges

    def connect(self, endpoint: str, policy: ACL | None = None,
                blessings: Sequence[Blessing] | None = None) -> "Connection":
        host, port = parse_endpoint(endpoint)
        sock = socket.create_connection((host, port), timeout=self.timeout)
        try:
            ch = client_handshake(
                sock, self.principal, policy=policy, clock=self.clock,
                registry=self.registry, resolver=self.resolver,
                fetch_discharge=self.discharges, timeout=self.timeout,
                peer_endpoint=endpoint, blessings=blessings)
        except BaseException:
            sock.close()
            raise
        return Connection(ch, self.timeout)


class Connection:
    def __init__(self, channel: Channel, timeout: float = HANDSHAKE_TIMEOUT) -> None:
        self.channel = channel
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    @property
    def peer_names(self) -> tuple[str, ...]:
        return self.channel.peer_names

    @property
    def peer_key(self):
        return self.channel.peer_key

    @property
    def peer_blessings(self) -> tuple[Blessing, ...]:
        return self.channel.peer_blessings

    def _roundtrip(self, msg_type: MsgType, record) -> tuple[MsgType, bytes]:
        with self._lock:
            self.channel.send(msg_type, record)
            return self.channel.recv(self.timeout)

    def call(self, method: str, args: bytes = b"", suffix: str = "") -> bytes:
        call = Call(next(self._ids), method, suffix, args)
        msg_type, body = self._roundtrip(MsgType.CALL, call)
        reply = self._reply(msg_type, body)
        if reply.id != call.id:
            raise ProtocolError(f"reply id {reply.id} does not match call {call.id}")
        return reply.body

    def _reply(self, msg_type: MsgType, body: bytes) -> Reply:
        if msg_type is not MsgType.REPLY:
            raise ProtocolError(f"expected REPLY, got {msg_type.name}")
        reply = decode(Reply, body)
        if reply.status == Status.ACCESS_DENIED:
            raise AccessDenied(reply.message or "access denied")
        if reply.status != Status.OK:
            raise ApplicationError(reply.message)
        return reply

    def request_discharge(self, tc: ThirdPartyCaveat,
                          attributes: Iterable[tuple[str, str]] = ()) -> Discharge:
        msg_type, body = self._roundtrip(MsgType.DISCHARGE_REQUEST,
                                         DischargeRequest(tc, tuple(attributes)))
        if msg_type is not MsgType.DISCHARGE_REPLY:
            raise ProtocolError(f"expected DISCHARGE_REPLY, got {msg_type.name}")
        reply = decode(DischargeReply, body)
        if reply.discharge is None:
            raise DischargeRefused(reply.diagnostic)
        return reply.discharge

    def group_query(self, group: str, name, mode: Mode,
                    assumptions: Mapping | None = None) -> RemainderResult | None:
        q = GroupQuery(group, as_components(name), mode, tuple((assumptions or {}).items()))
        msg_type, body = self._roundtrip(MsgType.GROUP_QUERY, q)
        if msg_type is MsgType.GROUP_UNKNOWN:
            return None
        if msg_type is not MsgType.GROUP_RESULT:
            raise ProtocolError(f"expected GROUP_RESULT, got {msg_type.name}")
        return decode(GroupResult, body).result

    def grant(self, blessing: Blessing, peer_pattern: str = UNIVERSAL) -> None:
        if blessing.public_key != self.peer_key:
            raise GrantError("blessing is not bound to the peer's key")
        msg_type, body = self._roundtrip(MsgType.GRANT, Grant(blessing, peer_pattern))
        try:
            self._reply(msg_type, body)
        except (AccessDenied, ApplicationError) as exc:
            raise GrantError(str(exc)) from None

    def close(self) -> None:
        self.channel.close()

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
