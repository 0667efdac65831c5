"""Discharge services, revocation, and the client-side discharge cache."""

from __future__ import annotations

import logging
import os
import threading
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable

from ..caveats import (
    DEFAULT_REGISTRY,
    CaveatRegistry,
    Discharge,
    FirstPartyCaveat,
    RequestContext,
    ThirdPartyCaveat,
    expiry,
    mint_discharge,
)
from ..encoding import KeyPair, PublicKey, decode, encode
from ..errors import DischargeRefused, VauthError
from ..store import _atomic_write, file_lock
from .framing import ProtocolError

log = logging.getLogger(__name__)

REVOCATION_CHECK = 0x80
PROXIMITY_CHECK = 0x81
LOCATION_ATTRIBUTE = "location"
DEFAULT_LIFETIME = timedelta(minutes=5)


def _now() -> datetime:
    return datetime.now().astimezone()


class FetchError(VauthError):
    """The discharger could not be reached."""


def revocation_check(revocation_id: str) -> FirstPartyCaveat:
    """Check caveat meaning "`revocation_id` is not on the revocation list"."""
    return FirstPartyCaveat(REVOCATION_CHECK, encode(revocation_id))


def revocable_caveat(discharger_key: PublicKey, location: str,
                     revocation_id: str) -> ThirdPartyCaveat:
    return ThirdPartyCaveat.new(discharger_key, revocation_check(revocation_id), location)


def proximity_check(place: str) -> FirstPartyCaveat:
    """Check caveat meaning "the requester reports being at `place`"."""
    return FirstPartyCaveat(PROXIMITY_CHECK, encode(place))


def proximity_caveat(discharger_key: PublicKey, location: str, place: str) -> ThirdPartyCaveat:
    return ThirdPartyCaveat.new(discharger_key, proximity_check(place), location)


def validate_proximity(payload: bytes, con: RequestContext) -> bool:
    return con.attribute(LOCATION_ATTRIBUTE) == decode(str, payload)


class RevocationList:
    """A text file of revoked ids, one per line.

    Writers serialize through a file lock and replace the file atomically,
    so readers always see a complete list.
    """

    def __init__(self, path: str | os.PathLike | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._memory: frozenset[str] = frozenset()

    def ids(self) -> frozenset[str]:
        if self.path is None:
            return self._memory
        try:
            text = self.path.read_text()
        except FileNotFoundError:
            return frozenset()
        return frozenset(ln.strip() for ln in text.splitlines() if ln.strip())

    def is_revoked(self, revocation_id: str) -> bool:
        return revocation_id in self.ids()

    def revoke(self, revocation_id: str) -> None:
        revocation_id = revocation_id.strip()
        if not revocation_id or "\n" in revocation_id:
            raise ValueError("revocation ids are single non-empty lines")
        if self.path is None:
            self._memory = self._memory | {revocation_id}
            return
        with file_lock(self.path):
            ids = sorted(self.ids() | {revocation_id})
            _atomic_write(self.path, ("\n".join(ids) + "\n").encode())


class DischargeService:
    """Mints discharges whose only caveat is an expiry `lifetime` from now."""

    def __init__(self, keys: KeyPair, *, lifetime: timedelta = DEFAULT_LIFETIME,
                 revocations: RevocationList | None = None,
                 proximity: bool = False,
                 registry: CaveatRegistry = DEFAULT_REGISTRY) -> None:
        self.keys = keys
        self.lifetime = lifetime
        self.revocations = revocations
        self.registry = registry.child()
        if revocations is not None:
            self.registry.register(REVOCATION_CHECK, self._not_revoked)
        if proximity:
            self.registry.register(PROXIMITY_CHECK, validate_proximity)

    def _not_revoked(self, payload: bytes, con: RequestContext) -> bool:
        assert self.revocations is not None
        rid = decode(str, payload)
        if self.revocations.is_revoked(rid):
            raise DischargeRefused(f"{rid} has been revoked")
        return True

    def issue(self, tc: ThirdPartyCaveat, con: RequestContext) -> Discharge:
        return mint_discharge(self.keys.secret, tc, [expiry(con.timestamp + self.lifetime)],
                              con, self.registry)


class DischargeClient:
    """Fetches discharges over the network and caches them until they expire.

    Calling the client returns None instead of raising, which is what the
    handshake wants: a blessing without its discharge simply fails
    validation on the other side.
    """

    def __init__(self, principal, *, clock: Callable[[], datetime] = _now,
                 timeout: float = 10.0, attributes: Iterable[tuple[str, str]] = ()) -> None:
        self.principal = principal
        self.clock = clock
        self.timeout = timeout
        self.attributes = tuple(attributes)
        self.fetches = 0
        self._cache: dict[bytes, Discharge] = {}
        self._lock = threading.Lock()

    def cached(self, tc: ThirdPartyCaveat) -> Discharge | None:
        with self._lock:
            d = self._cache.get(tc.id)
        if d is None:
            return None
        exp = d.expiry()
        if exp is not None and exp <= self.clock():
            with self._lock:
                self._cache.pop(tc.id, None)
            return None
        return d

    def fetch(self, tc: ThirdPartyCaveat) -> Discharge:
        d = self.cached(tc)
        if d is not None:
            return d
        from .rpc import Client

        # discharger connections do not themselves fetch discharges
        client = Client(self.principal, clock=self.clock, timeout=self.timeout, discharges=None)
        self.fetches += 1
        try:
            conn = client.connect(tc.location)
        except (OSError, ProtocolError, VauthError) as exc:
            raise FetchError(f"cannot reach discharger at {tc.location}: {exc}") from exc
        with conn:
            d = conn.request_discharge(tc, self.attributes)
        if not d.verifies(tc):
            raise DischargeRefused("discharger returned a discharge that does not verify")
        with self._lock:
            self._cache[tc.id] = d
        return d

    def invalidate(self) -> None:
        with self._lock:
            self._cache.clear()

    def __call__(self, tc: ThirdPartyCaveat) -> Discharge | None:
        try:
            return self.fetch(tc)
        except (DischargeRefused, FetchError, ProtocolError) as exc:
            log.warning("no discharge for %s: %s", tc, exc)
            return None
