"""A claimable door lock that acts as its own identity provider.

Out of the box the lock holds a manufacturer blessing and answers only
Claim and Status. The first successful Claim makes the lock self-bless with
the requested name, hands the claimer ``<name>/Key``, and locks the other
methods behind ``Allow <name>``. From then on, only blessings rooted at
the lock's own key get in.
"""

from __future__ import annotations

import enum
import json
import logging
import shlex
import subprocess
import threading
from dataclasses import asdict, dataclass, replace
from datetime import datetime
from typing import Callable

from .credentials import Blessing, bless, check_component, self_blessing
from .encoding import PublicKey, decode, decode_list, encode, from_micros, to_micros
from .errors import InvalidName, VauthError
from .netd.messages import AuditRecord
from .netd.rpc import ApplicationError, Client, Request, Server, ServiceConfig
from .patterns import ACL, EOB, SEPARATOR, BlessingPattern
from .store import _atomic_write

log = logging.getLogger(__name__)

STATE_FILE = "lockstate.json"
AUDIT_FILE = "audit.log"
MANUFACTURER_LABEL = "manufacturer"
IDENTITY_LABEL = "identity"
KEY_EXTENSION = "Key"
PROTECTED = ("Lock", "Unlock", "Status", "AuditLog")
CLAIM_DISABLED = "CLAIM_DISABLED"


def _now() -> datetime:
    return datetime.now().astimezone()


class Phase(str, enum.Enum):
    UNCLAIMED = "Unclaimed"
    CLAIMED = "Claimed"


class Physical(str, enum.Enum):
    LOCKED = "Locked"
    UNLOCKED = "Unlocked"


@dataclass(frozen=True)
class LockState:
    phase: Phase = Phase.UNCLAIMED
    lock_name: str | None = None
    physical: Physical = Physical.LOCKED
    key_root: tuple[str, str] | None = None  # (name, base64 public key)
    extra_allow: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        claimed = self.phase is Phase.CLAIMED
        if claimed != (self.lock_name is not None) or claimed != (self.key_root is not None):
            raise ValueError("lock name and key root are set exactly when claimed")

    def acls(self) -> dict[str, ACL]:
        if self.lock_name is None:
            return {}
        allow = ACL.of([self.lock_name, *self.extra_allow])
        owner = ACL.of([SEPARATOR.join([self.lock_name, KEY_EXTENSION, EOB])])
        return {**{m: allow for m in PROTECTED}, "AddACL": owner}

    def to_json(self) -> str:
        d = asdict(self)
        d["phase"] = self.phase.value
        d["physical"] = self.physical.value
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LockState":
        d = json.loads(text)
        return cls(Phase(d["phase"]), d.get("lock_name"), Physical(d["physical"]),
                   tuple(d["key_root"]) if d.get("key_root") else None,
                   tuple(d.get("extra_allow", ())))


@dataclass(frozen=True)
class Status:
    phase: str
    lock_name: str
    physical: str

    def write_to(self, w) -> None:
        w.text(self.phase)
        w.text(self.lock_name)
        w.text(self.physical)

    @classmethod
    def read_from(cls, r) -> "Status":
        return cls(r.text(), r.text(), r.text())


def provision(lock, manufacturer, serial: str) -> Blessing:
    """Give `lock` the blessing ``<manufacturer>/<serial>`` as it leaves the factory."""
    b = manufacturer.bless(lock.public_key, serial)
    lock.store.add(b, "...", label=MANUFACTURER_LABEL)
    lock.store.set_default(b)
    return b


class LockService:
    def __init__(self, principal, *, clock: Callable[[], datetime] = _now,
                 listen: str = "127.0.0.1:0", timezone: str | None = None,
                 hook: str | None = None, resolver=None) -> None:
        self.principal = principal
        self.hook = hook
        self._lock = threading.Lock()
        d = principal.directory
        self.state_path = d / STATE_FILE if d is not None else None
        self.state = self._load()
        config = ServiceConfig(listen=listen, timezone=timezone,
                               audit_path=str(d / AUDIT_FILE) if d is not None else None)
        handlers = {"Claim": self._claim, "Lock": self._lock_door, "Unlock": self._unlock,
                    "Status": self._status, "AuditLog": self._audit, "AddACL": self._add_acl}
        self.server = Server(principal, config, handlers, clock=clock, resolver=resolver)
        self._apply_policy()

    # -- state --

    def _load(self) -> LockState:
        if self.state_path is not None and self.state_path.exists():
            return LockState.from_json(self.state_path.read_text())
        return LockState()

    def _save(self, state: LockState) -> None:
        self.state = state
        if self.state_path is not None:
            _atomic_write(self.state_path, state.to_json().encode())

    def _apply_policy(self) -> None:
        store = self.principal.store
        if self.state.phase is Phase.UNCLAIMED:
            serving = store.by_label(MANUFACTURER_LABEL) or [store.default]
            self.server.update(acls={}, open_methods={"Claim", "Status"},
                               serving=[b for b in serving if b is not None])
        else:
            self.server.update(acls=self.state.acls(), open_methods=(),
                               serving=store.by_label(IDENTITY_LABEL))

    def start(self) -> str:
        return self.server.start()

    def stop(self) -> None:
        self.server.stop()

    @property
    def endpoint(self) -> str | None:
        return self.server.endpoint

    @property
    def audit(self):
        return self.server.audit

    # -- methods --

    def _claim(self, req: Request) -> bytes:
        name = decode(str, req.args)
        try:
            check_component(name)
        except InvalidName as exc:
            raise ApplicationError(f"invalid name: {exc}") from None
        with self._lock:
            if self.state.phase is Phase.CLAIMED:
                raise ApplicationError(CLAIM_DISABLED)
            identity = self_blessing(self.principal.keys, name)
            key_b = bless(req.remote_key, self.principal.keys.secret, identity, KEY_EXTENSION)
            self.principal.store.add(identity, "...", label=IDENTITY_LABEL)
            self.principal.store.set_default(identity)
            self.principal.add_root(*identity.root)
            root_name, root_key = identity.root
            self._save(replace(self.state, phase=Phase.CLAIMED, lock_name=name,
                               key_root=(root_name, root_key.b64())))
            self._apply_policy()
        log.info("claimed as %s", name)
        return encode(key_b)

    def _set_physical(self, target: Physical) -> bytes:
        with self._lock:
            if self.state.phase is not Phase.CLAIMED:
                raise ApplicationError("lock is not claimed")
            if self.state.physical is not target:
                self._save(replace(self.state, physical=target))
                self._run_hook(target)
        return encode(target.value)

    def _run_hook(self, target: Physical) -> None:
        if not self.hook:
            return
        try:
            subprocess.run([*shlex.split(self.hook), target.value.lower()], check=True, timeout=10)
        except (OSError, subprocess.SubprocessError) as exc:
            log.error("actuator hook failed: %s", exc)

    def _lock_door(self, req: Request) -> bytes:
        return self._set_physical(Physical.LOCKED)

    def _unlock(self, req: Request) -> bytes:
        return self._set_physical(Physical.UNLOCKED)

    def _status(self, req: Request) -> bytes:
        s = self.state
        return encode(Status(s.phase.value, s.lock_name or "", s.physical.value))

    def _audit(self, req: Request) -> bytes:
        since = from_micros(decode(int, req.args)) if req.args else None
        return encode(self.audit.records(since))

    def _add_acl(self, req: Request) -> bytes:
        """Args: [pattern] or [pattern, root name, root key (base64)]."""
        args = decode_list(str, req.args)
        if len(args) not in (1, 3):
            raise ApplicationError("AddACL takes a pattern and an optional root")
        pattern = str(BlessingPattern.parse(args[0]))
        with self._lock:
            if len(args) == 3:
                self.principal.add_root(args[1], PublicKey.from_b64(args[2]))
            if pattern not in self.state.extra_allow:
                self._save(replace(self.state, extra_allow=self.state.extra_allow + (pattern,)))
            self._apply_policy()
        return b""

    # -- maintenance --

    def factory_reset(self) -> None:
        reset(self.principal)
        self.audit.clear()
        self.state = LockState()
        self._apply_policy()


def reset(principal) -> None:
    """Wipe claim state, audit log, roots and acquired blessings; keep the
    key pair and the manufacturer blessing."""
    d = principal.directory
    if d is not None:
        for name in (STATE_FILE, AUDIT_FILE):
            (d / name).unlink(missing_ok=True)
    store = principal.store
    for e in store.entries:
        if e.label != MANUFACTURER_LABEL:
            store.remove(e.label)
    manufacturer = store.by_label(MANUFACTURER_LABEL)
    if manufacturer:
        store.set_default(manufacturer[0])
    principal.roots = type(principal.roots)()
    principal.save_roots(merge=False)


# -- client side -----------------------------------------------------------------


class ClaimError(VauthError):
    pass


def claim_lock(principal, endpoint: str, name: str, expect_manufacturer: str,
               client: Client | None = None) -> Blessing:
    """Claim the lock at `endpoint`, checking it presents `expect_manufacturer` exactly.

    The returned key blessing is stored for peers named `name`, and the
    lock's new root is recognized.
    """
    client = client or Client(principal)
    policy = ACL.of([SEPARATOR.join([expect_manufacturer, EOB])])
    with client.connect(endpoint, policy) as conn:
        key_b = decode(Blessing, conn.call("Claim", encode(name)))
        lock_key = conn.peer_key
    root_name, root_key = key_b.root
    if key_b.public_key != principal.public_key:
        raise ClaimError("granted blessing is not bound to our key")
    if root_name != name or root_key != lock_key:
        raise ClaimError("granted blessing is not rooted at the lock we claimed")
    principal.add_root(root_name, root_key)
    principal.store.add(key_b, name, label=key_b.name)
    return key_b


class LockClient:
    """Convenience wrapper for talking to a claimed lock named `name`."""

    def __init__(self, principal, endpoint: str, name: str, client: Client | None = None) -> None:
        self.client = client or Client(principal)
        self.endpoint = endpoint
        self.policy = ACL.of([SEPARATOR.join([name, EOB])])

    def _call(self, method: str, args: bytes = b"") -> bytes:
        with self.client.connect(self.endpoint, self.policy) as conn:
            return conn.call(method, args)

    def lock(self) -> str:
        return decode(str, self._call("Lock"))

    def unlock(self) -> str:
        return decode(str, self._call("Unlock"))

    def status(self) -> Status:
        return decode(Status, self._call("Status"))

    def audit(self, since: datetime | None = None) -> list[AuditRecord]:
        args = encode(to_micros(since)) if since is not None else b""
        return decode_list(AuditRecord, self._call("AuditLog", args))

    def add_acl(self, pattern: str, root: tuple[str, PublicKey] | None = None) -> None:
        args: list[str] = [pattern]
        if root is not None:
            args += [root[0], root[1].b64()]
        self._call("AddACL", encode(args))

