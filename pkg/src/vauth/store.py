"""The blessing store: a principal's cookie jar of acquired blessings.

Each blessing is kept with a group-free peer pattern; it is only ever
presented to peers whose names match that pattern.
"""

from __future__ import annotations

import fcntl
import os
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator

from .credentials import Blessing, verify_certs
from .encoding import EncodingError, PublicKey, Reader, Writer, from_micros, to_micros
from .errors import InvalidPattern, OwnershipError, VerificationError
from .patterns import UNIVERSAL, BlessingPattern, PatternLike, match_pattern

STORE_VERSION = 1


def _now() -> datetime:
    return datetime.now().astimezone()


@dataclass(frozen=True)
class StoreEntry:
    blessing: Blessing
    peer_pattern: BlessingPattern
    label: str
    acquired_at: datetime

    def write_to(self, w: Writer) -> None:
        self.blessing.write_to(w)
        w.text(str(self.peer_pattern))
        w.text(self.label)
        w.int_(to_micros(self.acquired_at))

    @classmethod
    def read_from(cls, r: Reader) -> "StoreEntry":
        b = Blessing.read_from(r)
        pattern = BlessingPattern.parse(r.text())
        return cls(b, pattern, r.text(), from_micros(r.int_()))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


@contextmanager
def file_lock(path: Path) -> Iterator[None]:
    with open(path.with_name(path.name + ".lock"), "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


class BlessingStore:
    """Blessings bound to `owner`, persisted to `path` when given."""

    def __init__(self, owner: PublicKey, path: str | os.PathLike | None = None,
                 clock=_now) -> None:
        self.owner = owner
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self._entries: list[StoreEntry] = []
        self._default: Blessing | None = None
        if self.path is not None and self.path.exists():
            self._load()

    @property
    def entries(self) -> list[StoreEntry]:
        return list(self._entries)

    @property
    def default(self) -> Blessing | None:
        return self._default

    def _check(self, b: Blessing) -> None:
        if b.public_key != self.owner:
            raise OwnershipError(f"blessing {b.name!r} is bound to another key")
        if not verify_certs(b):
            raise VerificationError(f"blessing {b.name!r} has an invalid certificate chain")

    def add(self, b: Blessing, peer_pattern: PatternLike, label: str = "",
            acquired_at: datetime | None = None) -> StoreEntry:
        self._check(b)
        pattern = BlessingPattern.parse(peer_pattern)
        if pattern.groups():
            raise InvalidPattern("peer patterns must not reference groups")
        entry = StoreEntry(b, pattern, label or b.name, acquired_at or self.clock())
        self._mutate(lambda: self._entries.append(entry))
        return entry

    def set_default(self, b: Blessing) -> None:
        self._check(b)

        def apply() -> None:
            self._default = b

        self._mutate(apply)

    def remove(self, label: str) -> int:
        removed = 0

        def apply() -> None:
            nonlocal removed
            kept = [e for e in self._entries if e.label != label]
            removed = len(self._entries) - len(kept)
            self._entries = kept

        self._mutate(apply)
        return removed

    def select_for_peer(self, peer_names: Iterable[str]) -> list[Blessing]:
        """Blessings whose peer pattern matches at least one of `peer_names`."""
        names = list(peer_names)
        chosen = [e for e in self._entries
                  if any(match_pattern(e.peer_pattern, n) for n in names)]
        chosen.sort(key=lambda e: (e.acquired_at, e.label))
        return [e.blessing for e in chosen]

    def by_label(self, label: str) -> list[Blessing]:
        return [e.blessing for e in self._entries if e.label == label]

    def all_blessings(self) -> list[Blessing]:
        out = [e.blessing for e in self._entries]
        if self._default is not None and self._default not in out:
            out.insert(0, self._default)
        return out

    # -- persistence --

    def write_to(self, w: Writer) -> None:
        w.raw(bytes([STORE_VERSION]))
        w.list_(self._entries, lambda w_, e: e.write_to(w_))
        w.list_([self._default] if self._default else [], lambda w_, b: b.write_to(w_))

    def _read(self, data: bytes) -> None:
        r = Reader(data)
        version = r.raw(1)[0]
        if version != STORE_VERSION:
            raise EncodingError(f"unsupported store version {version}")
        entries = r.list_(StoreEntry.read_from)
        default = r.list_(Blessing.read_from)
        r.done()
        self._entries = entries
        self._default = default[0] if default else None

    def _load(self) -> None:
        assert self.path is not None
        self._read(self.path.read_bytes())

    def _mutate(self, apply) -> None:
        """Apply a change on top of the latest on-disk state, then persist it."""
        if self.path is None:
            apply()
            return
        with file_lock(self.path):
            self.reload()
            apply()
            w = Writer()
            self.write_to(w)
            _atomic_write(self.path, w.getvalue())

    def reload(self) -> None:
        if self.path is not None and self.path.exists():
            self._load()


def universal_pattern() -> BlessingPattern:
    return BlessingPattern.parse(UNIVERSAL)
