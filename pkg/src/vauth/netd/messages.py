"""Canonical records carried in frames."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime

from ..caveats import Discharge, ThirdPartyCaveat, read_caveat
from ..credentials import Blessing
from ..encoding import EncodingError, PublicKey, Reader, Writer, from_micros, to_micros
from ..groups import RemainderResult
from ..patterns import Mode

PROTOCOL_VERSION = 1


class CloseCode(enum.IntEnum):
    NORMAL = 0
    UNAUTHORIZED = 1
    INVALID_BLESSING = 2
    PROTOCOL_ERROR = 3
    TIMEOUT = 4
    INVALID_SIGNATURE = 5


class Status(enum.IntEnum):
    OK = 0
    ACCESS_DENIED = 1
    APPLICATION_ERROR = 2


def _pairs(w: Writer, items) -> None:
    w.list_(items, lambda w_, kv: (w_.text(kv[0]), w_.text(kv[1])))


def _read_pairs(r: Reader) -> tuple[tuple[str, str], ...]:
    return tuple(r.list_(lambda r_: (r_.text(), r_.text())))


@dataclass(frozen=True)
class Hello:
    version: int
    ephemeral: bytes
    nonce: bytes

    def write_to(self, w: Writer) -> None:
        w.int_(self.version)
        w.bytes_(self.ephemeral)
        w.bytes_(self.nonce)

    @classmethod
    def read_from(cls, r: Reader) -> "Hello":
        return cls(r.int_(), r.bytes_(), r.bytes_())


@dataclass(frozen=True)
class AuthBody:
    """Identity material sealed under the handshake key."""

    public_key: PublicKey
    blessings: tuple[Blessing, ...]
    discharges: tuple[Discharge, ...]
    signature: bytes = b""

    def write_to(self, w: Writer) -> None:
        self.public_key.write_to(w)
        w.list_(self.blessings, lambda w_, b: b.write_to(w_))
        w.list_(self.discharges, lambda w_, d: d.write_to(w_))
        w.bytes_(self.signature)

    @classmethod
    def read_from(cls, r: Reader) -> "AuthBody":
        return cls(PublicKey.read_from(r), tuple(r.list_(Blessing.read_from)),
                   tuple(r.list_(Discharge.read_from)), r.bytes_())


@dataclass(frozen=True)
class ServerAuth:
    ephemeral: bytes
    sealed: bytes

    def write_to(self, w: Writer) -> None:
        w.bytes_(self.ephemeral)
        w.bytes_(self.sealed)

    @classmethod
    def read_from(cls, r: Reader) -> "ServerAuth":
        return cls(r.bytes_(), r.bytes_())


@dataclass(frozen=True)
class ClientAuth:
    sealed: bytes

    def write_to(self, w: Writer) -> None:
        w.bytes_(self.sealed)

    @classmethod
    def read_from(cls, r: Reader) -> "ClientAuth":
        return cls(r.bytes_())


@dataclass(frozen=True)
class Call:
    id: int
    method: str
    suffix: str = ""
    args: bytes = b""

    def write_to(self, w: Writer) -> None:
        w.int_(self.id)
        w.text(self.method)
        w.text(self.suffix)
        w.bytes_(self.args)

    @classmethod
    def read_from(cls, r: Reader) -> "Call":
        return cls(r.int_(), r.text(), r.text(), r.bytes_())


@dataclass(frozen=True)
class Reply:
    id: int
    status: int = Status.OK
    body: bytes = b""
    message: str = ""

    def write_to(self, w: Writer) -> None:
        w.int_(self.id)
        w.int_(int(self.status))
        w.bytes_(self.body)
        w.text(self.message)

    @classmethod
    def read_from(cls, r: Reader) -> "Reply":
        return cls(r.int_(), r.int_(), r.bytes_(), r.text())


@dataclass(frozen=True)
class DischargeRequest:
    caveat: ThirdPartyCaveat
    attributes: tuple[tuple[str, str], ...] = ()

    def write_to(self, w: Writer) -> None:
        self.caveat.write_to(w)
        _pairs(w, self.attributes)

    @classmethod
    def read_from(cls, r: Reader) -> "DischargeRequest":
        tc = read_caveat(r)
        if not isinstance(tc, ThirdPartyCaveat):
            raise EncodingError("discharge request must carry a third-party caveat")
        return cls(tc, _read_pairs(r))


@dataclass(frozen=True)
class DischargeReply:
    discharge: Discharge | None = None
    diagnostic: str = ""

    def write_to(self, w: Writer) -> None:
        w.list_([self.discharge] if self.discharge else [], lambda w_, d: d.write_to(w_))
        w.text(self.diagnostic)

    @classmethod
    def read_from(cls, r: Reader) -> "DischargeReply":
        ds = r.list_(Discharge.read_from)
        return cls(ds[0] if ds else None, r.text())


def _write_key(w: Writer, key: tuple[str, tuple[str, ...]]) -> None:
    w.text(key[0])
    w.list_(key[1], Writer.text)


def _read_key(r: Reader) -> tuple[str, tuple[str, ...]]:
    return r.text(), tuple(r.list_(Reader.text))


def write_result(w: Writer, res: RemainderResult) -> None:
    w.int_(int(res.whole))
    w.list_(sorted(res.rests), lambda w_, rest: w_.list_(rest, Writer.text))
    w.int_(int(res.approximated))
    w.list_(sorted(res.depends_on), _write_key)


def read_result(r: Reader) -> RemainderResult:
    whole = bool(r.int_())
    rests = frozenset(r.list_(lambda r_: tuple(r_.list_(Reader.text))))
    approximated = bool(r.int_())
    depends = frozenset(r.list_(_read_key))
    return RemainderResult(whole, rests, approximated, depends)


@dataclass(frozen=True)
class GroupQuery:
    group: str
    name: tuple[str, ...]
    mode: Mode
    assumptions: tuple[tuple[tuple[str, tuple[str, ...]], RemainderResult], ...] = ()

    def write_to(self, w: Writer) -> None:
        w.text(self.group)
        w.list_(self.name, Writer.text)
        w.int_(0 if self.mode is Mode.UNDER else 1)

        def one(w_: Writer, item) -> None:
            _write_key(w_, item[0])
            write_result(w_, item[1])

        w.list_(self.assumptions, one)

    @classmethod
    def read_from(cls, r: Reader) -> "GroupQuery":
        group = r.text()
        name = tuple(r.list_(Reader.text))
        mode = Mode.UNDER if r.int_() == 0 else Mode.OVER
        assumptions = tuple(r.list_(lambda r_: (_read_key(r_), read_result(r_))))
        return cls(group, name, mode, assumptions)


@dataclass(frozen=True)
class GroupResult:
    result: RemainderResult

    def write_to(self, w: Writer) -> None:
        write_result(w, self.result)

    @classmethod
    def read_from(cls, r: Reader) -> "GroupResult":
        return cls(read_result(r))


@dataclass(frozen=True)
class GroupUnknown:
    group: str
    reason: str = ""

    def write_to(self, w: Writer) -> None:
        w.text(self.group)
        w.text(self.reason)

    @classmethod
    def read_from(cls, r: Reader) -> "GroupUnknown":
        return cls(r.text(), r.text())


@dataclass(frozen=True)
class Grant:
    blessing: Blessing
    peer_pattern: str

    def write_to(self, w: Writer) -> None:
        self.blessing.write_to(w)
        w.text(self.peer_pattern)

    @classmethod
    def read_from(cls, r: Reader) -> "Grant":
        return cls(Blessing.read_from(r), r.text())


@dataclass(frozen=True)
class Close:
    code: int = CloseCode.NORMAL
    reason: str = ""

    def write_to(self, w: Writer) -> None:
        w.int_(int(self.code))
        w.text(self.reason)

    @classmethod
    def read_from(cls, r: Reader) -> "Close":
        return cls(r.int_(), r.text())


@dataclass(frozen=True)
class AuditRecord:
    time: datetime
    method: str
    peer_names: tuple[str, ...] = ()
    decision: str = "Allowed"

    def write_to(self, w: Writer) -> None:
        w.int_(to_micros(self.time))
        w.text(self.method)
        w.list_(self.peer_names, Writer.text)
        w.text(self.decision)

    @classmethod
    def read_from(cls, r: Reader) -> "AuditRecord":
        return cls(from_micros(r.int_()), r.text(), tuple(r.list_(Reader.text)), r.text())
