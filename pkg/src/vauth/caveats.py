"""Caveats, discharges and blessing validation.

First-party caveats are opaque ``(type_id, payload)`` pairs interpreted by a
validator looked up in a :class:`CaveatRegistry`. Third-party caveats are
satisfied by a discharge signed by the named third party. Anything that
cannot be interpreted fails closed.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence, Union

from .encoding import (
    EncodingError,
    PublicKey,
    Reader,
    SecretKey,
    Writer,
    decode,
    decode_list,
    encode,
    from_micros,
    hash_args,
    to_micros,
    verify,
)
from .errors import AuthorityError, DischargeRefused, RegistryError

if TYPE_CHECKING:
    from .credentials import Blessing, RootSet

log = logging.getLogger(__name__)

EXPIRY = 0x01
METHOD = 0x02
PEER = 0x03
WEEKLY_SCHEDULE = 0x04
THIRD_PARTY = 0x7F
USER_MIN = 0x80
MAX_DISCHARGE_DEPTH = 8
NONCE_SIZE = 16
DAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass(frozen=True)
class FirstPartyCaveat:
    type_id: int
    payload: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.type_id <= 0xFF or self.type_id == THIRD_PARTY:
            raise EncodingError(f"invalid first-party caveat type 0x{self.type_id:02x}")

    def write_to(self, w: Writer) -> None:
        w.raw(bytes([self.type_id]))
        w.bytes_(self.payload)

    @classmethod
    def read_from(cls, r: Reader) -> "FirstPartyCaveat":
        c = read_caveat(r)
        if not isinstance(c, FirstPartyCaveat):
            raise EncodingError("expected a first-party caveat")
        return c

    def __str__(self) -> str:
        return describe(self)


@dataclass(frozen=True)
class ThirdPartyCaveat:
    nonce: bytes
    discharger_key: PublicKey
    check: FirstPartyCaveat
    location: str

    @classmethod
    def new(cls, discharger_key: PublicKey, check: FirstPartyCaveat,
            location: str) -> "ThirdPartyCaveat":
        return cls(os.urandom(NONCE_SIZE), discharger_key, check, location)

    @property
    def id(self) -> bytes:
        """Digest identifying this caveat; discharges carry it as a lookup hint."""
        return hash_args(self)

    def _body(self) -> bytes:
        w = Writer()
        w.bytes_(self.nonce)
        self.discharger_key.write_to(w)
        self.check.write_to(w)
        w.text(self.location)
        return w.getvalue()

    def write_to(self, w: Writer) -> None:
        w.raw(bytes([THIRD_PARTY]))
        w.bytes_(self._body())

    @classmethod
    def read_from(cls, r: Reader) -> "ThirdPartyCaveat":
        c = read_caveat(r)
        if not isinstance(c, ThirdPartyCaveat):
            raise EncodingError("expected a third-party caveat")
        return c

    @classmethod
    def _parse(cls, payload: bytes) -> "ThirdPartyCaveat":
        r = Reader(payload)
        nonce = r.bytes_()
        key = PublicKey.read_from(r)
        check = FirstPartyCaveat.read_from(r)
        location = r.text()
        r.done()
        return cls(nonce, key, check, location)

    def __str__(self) -> str:
        return f"third-party({describe(self.check)} @ {self.location})"


Caveat = Union[FirstPartyCaveat, ThirdPartyCaveat]


def read_caveat(r: Reader) -> Caveat:
    type_id = r.raw(1)[0]
    payload = r.bytes_()
    if type_id == THIRD_PARTY:
        return ThirdPartyCaveat._parse(payload)
    return FirstPartyCaveat(type_id, payload)


@dataclass(frozen=True)
class Discharge:
    """Proof that a third-party caveat's check held.

    ``caveat_id`` is an unsigned index hint; only the signature is trusted.
    """

    caveat_id: bytes
    caveats: tuple[Caveat, ...]
    signature: bytes

    def __post_init__(self) -> None:
        object.__setattr__(self, "caveats", tuple(self.caveats))

    def write_to(self, w: Writer) -> None:
        w.bytes_(self.caveat_id)
        w.list_(self.caveats, lambda w_, c: c.write_to(w_))
        w.bytes_(self.signature)

    @classmethod
    def read_from(cls, r: Reader) -> "Discharge":
        return cls(r.bytes_(), tuple(r.list_(read_caveat)), r.bytes_())

    def verifies(self, tc: ThirdPartyCaveat) -> bool:
        return verify(tc.discharger_key, hash_args(tc, list(self.caveats)), self.signature)

    def expiry(self) -> datetime | None:
        """Earliest Expiry among the discharge's own first-party caveats."""
        times = [expiry_time(c) for c in self.caveats
                 if isinstance(c, FirstPartyCaveat) and c.type_id == EXPIRY]
        return min(times) if times else None


@dataclass(frozen=True)
class RequestContext:
    """What an authorizer knows about a request."""

    timestamp: datetime
    method: str = ""
    suffix: str = ""
    local_blessing_names: tuple[str, ...] = ()
    remote_blessing: "Blessing | None" = None
    discharges: tuple[Discharge, ...] = ()
    peer_endpoint: str = ""
    remote_key: PublicKey | None = None
    attributes: tuple[tuple[str, str], ...] = ()
    skew: timedelta = timedelta(0)

    def __post_init__(self) -> None:
        if self.timestamp.tzinfo is None:
            raise ValueError("RequestContext.timestamp must be timezone-aware")
        for name in ("local_blessing_names", "discharges", "attributes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def attribute(self, key: str, default: str | None = None) -> str | None:
        return dict(self.attributes).get(key, default)

    def with_(self, **changes) -> "RequestContext":
        return replace(self, **changes)


# -- built-in first-party caveats ------------------------------------------


def expiry(not_after: datetime) -> FirstPartyCaveat:
    return FirstPartyCaveat(EXPIRY, encode(to_micros(not_after)))


def expiry_time(c: FirstPartyCaveat) -> datetime:
    return from_micros(decode(int, c.payload))


def method_caveat(*methods: str) -> FirstPartyCaveat:
    if not methods:
        raise ValueError("a method caveat needs at least one method")
    return FirstPartyCaveat(METHOD, encode(list(methods)))


def peer_caveat(*patterns: str) -> FirstPartyCaveat:
    from .patterns import BlessingPattern

    if not patterns:
        raise ValueError("a peer caveat needs at least one pattern")
    for p in patterns:
        if BlessingPattern.parse(p).groups():
            raise ValueError(f"peer caveat pattern {p!r} must not reference groups")
    return FirstPartyCaveat(PEER, encode(list(patterns)))


def weekly_schedule(day: int | str, start_hour: int, end_hour: int) -> FirstPartyCaveat:
    """Valid on `day` (0=Monday or "Mon") from start_hour until end_hour."""
    if isinstance(day, str):
        day = DAYS.index(day[:3].title())
    if not (0 <= day <= 6 and 0 <= start_hour < end_hour <= 24):
        raise ValueError("invalid weekly schedule")
    return FirstPartyCaveat(WEEKLY_SCHEDULE, encode([day, start_hour, end_hour]))


def _validate_expiry(payload: bytes, con: RequestContext) -> bool:
    return con.timestamp - con.skew <= from_micros(decode(int, payload))


def _validate_method(payload: bytes, con: RequestContext) -> bool:
    return con.method in decode_list(str, payload)


def _validate_peer(payload: bytes, con: RequestContext) -> bool:
    from .patterns import BlessingPattern, match_pattern

    patterns = [BlessingPattern.parse(p) for p in decode_list(str, payload)]
    if any(p.groups() for p in patterns):
        return False
    return any(match_pattern(p, name) for p in patterns for name in con.local_blessing_names)


def _validate_schedule(payload: bytes, con: RequestContext) -> bool:
    day, start, end = decode_list(int, payload)
    ts = con.timestamp
    return ts.weekday() == day and start <= ts.hour < end


def describe(c: Caveat) -> str:
    if isinstance(c, ThirdPartyCaveat):
        return str(c)
    try:
        if c.type_id == EXPIRY:
            return f"expiry={expiry_time(c).isoformat()}"
        if c.type_id == METHOD:
            return "methods=" + ",".join(decode_list(str, c.payload))
        if c.type_id == PEER:
            return "peers=" + "|".join(decode_list(str, c.payload))
        if c.type_id == WEEKLY_SCHEDULE:
            day, start, end = decode_list(int, c.payload)
            return f"schedule={DAYS[day]}:{start}-{end}"
    except (EncodingError, IndexError, ValueError):
        pass
    return f"caveat(0x{c.type_id:02x}, {len(c.payload)} bytes)"


# -- registry ----------------------------------------------------------------

Validator = Callable[[bytes, RequestContext], bool]


class CaveatRegistry:
    """Maps first-party caveat type ids to validators.

    A registry created with a parent falls back to it, so a service can add
    its own caveat types without touching the process-wide default.
    """

    def __init__(self, parent: "CaveatRegistry | None" = None) -> None:
        self._parent = parent
        self._validators: dict[int, Validator] = {}
        self._lock = threading.Lock()

    def _bind(self, type_id: int, validator: Validator) -> None:
        with self._lock:
            existing = self.lookup(type_id)
            if existing is not None and existing is not validator:
                raise RegistryError(f"caveat type 0x{type_id:02x} is already registered")
            self._validators[type_id] = validator

    def register(self, type_id: int, validator: Validator) -> None:
        if not USER_MIN <= type_id <= 0xFF:
            raise RegistryError(f"user caveat types must be in 0x80..0xff, got 0x{type_id:02x}")
        self._bind(type_id, validator)

    def lookup(self, type_id: int) -> Validator | None:
        v = self._validators.get(type_id)
        if v is None and self._parent is not None:
            return self._parent.lookup(type_id)
        return v

    def child(self) -> "CaveatRegistry":
        return CaveatRegistry(self)

    def validate(self, fc: FirstPartyCaveat, con: RequestContext,
                 diagnostics: list[str] | None = None) -> bool:
        validator = self.lookup(fc.type_id)
        if validator is None:
            _note(diagnostics, f"unrecognized caveat type 0x{fc.type_id:02x}")
            return False
        try:
            ok = bool(validator(fc.payload, con))
        except Exception as exc:  # malformed payloads fail closed
            _note(diagnostics, f"{describe(fc)}: {exc}")
            return False
        if not ok:
            _note(diagnostics, f"caveat not satisfied: {describe(fc)}")
        return ok


def _note(diagnostics: list[str] | None, message: str) -> None:
    log.debug(message)
    if diagnostics is not None:
        diagnostics.append(message)


DEFAULT_REGISTRY = CaveatRegistry()
DEFAULT_REGISTRY._bind(EXPIRY, _validate_expiry)
DEFAULT_REGISTRY._bind(METHOD, _validate_method)
DEFAULT_REGISTRY._bind(PEER, _validate_peer)
DEFAULT_REGISTRY._bind(WEEKLY_SCHEDULE, _validate_schedule)


def register_caveat_validator(type_id: int, validator: Validator,
                              registry: CaveatRegistry = DEFAULT_REGISTRY) -> None:
    registry.register(type_id, validator)


def validate_first_party_caveat(fc: FirstPartyCaveat, con: RequestContext,
                                registry: CaveatRegistry = DEFAULT_REGISTRY,
                                diagnostics: list[str] | None = None) -> bool:
    return registry.validate(fc, con, diagnostics)


# -- discharges and caveat lists ---------------------------------------------


def mint_discharge(sk: SecretKey, tc: ThirdPartyCaveat, caveats: Iterable[Caveat],
                   con: RequestContext,
                   registry: CaveatRegistry = DEFAULT_REGISTRY) -> Discharge:
    """Issue a discharge for `tc` if its check holds in `con`."""
    if sk.public_key() != tc.discharger_key:
        raise AuthorityError("secret key does not match the caveat's discharger key")
    diagnostics: list[str] = []
    if not registry.validate(tc.check, con, diagnostics):
        raise DischargeRefused("; ".join(diagnostics) or "check failed")
    caveats = tuple(caveats)
    return Discharge(tc.id, caveats, sk.sign(hash_args(tc, list(caveats))))


def _index(discharges: Sequence[Discharge]) -> Mapping[bytes, list[Discharge]]:
    index: dict[bytes, list[Discharge]] = {}
    for d in discharges:
        index.setdefault(d.caveat_id, []).append(d)
    return index


def validate_caveats(clist: Iterable[Caveat], con: RequestContext,
                     registry: CaveatRegistry = DEFAULT_REGISTRY,
                     diagnostics: list[str] | None = None) -> bool:
    return _validate_caveats(list(clist), con, registry, diagnostics,
                             _index(con.discharges), 0)


def _validate_caveats(clist: list[Caveat], con: RequestContext, registry: CaveatRegistry,
                      diagnostics: list[str] | None,
                      index: Mapping[bytes, list[Discharge]], depth: int) -> bool:
    if depth > MAX_DISCHARGE_DEPTH:
        _note(diagnostics, "third-party caveats nested too deeply")
        return False
    for c in clist:
        if isinstance(c, FirstPartyCaveat):
            if not registry.validate(c, con, diagnostics):
                return False
            continue
        # hinted discharges first, then every other one
        hinted = index.get(c.id, [])
        candidates = hinted + [d for d in con.discharges if d not in hinted]
        for d in candidates:
            if d.verifies(c) and _validate_caveats(list(d.caveats), con, registry,
                                                   diagnostics, index, depth + 1):
                break
        else:
            _note(diagnostics, f"no valid discharge for {c}")
            return False
    return True


@dataclass(frozen=True)
class BlessingCheck:
    """Outcome of blessing validation; `failed` names the failing conjunct."""

    ok: bool
    failed: str | None = None  # "certs", "root" or "caveats"
    diagnostics: tuple[str, ...] = field(default=())

    def __bool__(self) -> bool:
        return self.ok


def diagnose_blessing(b: "Blessing", roots: "RootSet", con: RequestContext,
                      registry: CaveatRegistry = DEFAULT_REGISTRY) -> BlessingCheck:
    from .credentials import is_recognized, verify_certs

    if not verify_certs(b):
        return BlessingCheck(False, "certs", ("certificate chain does not verify",))
    if not is_recognized(b, roots):
        return BlessingCheck(False, "root", (f"root {b.chain[0].name!r} not recognized",))
    diagnostics: list[str] = []
    if not validate_caveats(b.caveats, con, registry, diagnostics):
        return BlessingCheck(False, "caveats", tuple(diagnostics))
    return BlessingCheck(True)


def validate_blessing(b: "Blessing", roots: "RootSet", con: RequestContext,
                      registry: CaveatRegistry = DEFAULT_REGISTRY) -> bool:
    return diagnose_blessing(b, roots, con, registry).ok
