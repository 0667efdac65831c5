"""Principals: a key pair plus recognized roots and a blessing store.

A principal directory holds three files: ``key`` (the secret key),
``roots`` and ``blessings``.
"""

from __future__ import annotations

import os
from datetime import datetime
from pathlib import Path
from typing import Iterable

from .caveats import Caveat
from .credentials import Blessing, RootSet, bless, self_blessing
from .encoding import EncodingError, KeyPair, PublicKey, Reader, Writer, read_secret_key, write_secret_key
from .patterns import UNIVERSAL
from .store import BlessingStore, _atomic_write, file_lock

ENV_VAR = "VPRINCIPAL"
KEY_FILE = "key"
ROOTS_FILE = "roots"
BLESSINGS_FILE = "blessings"
ROOTS_VERSION = 1


def _now() -> datetime:
    return datetime.now().astimezone()


class Principal:
    def __init__(self, keys: KeyPair, roots: RootSet | None = None,
                 store: BlessingStore | None = None,
                 directory: str | os.PathLike | None = None) -> None:
        self.keys = keys
        self.roots = roots if roots is not None else RootSet()
        self.store = store if store is not None else BlessingStore(keys.public)
        self.directory = Path(directory) if directory is not None else None

    @classmethod
    def create(cls, name: str | None = None,
               directory: str | os.PathLike | None = None) -> "Principal":
        """New principal; with `name` it gets a self-blessing and trusts its own root."""
        keys = KeyPair.generate()
        store_path = None
        if directory is not None:
            d = Path(directory)
            d.mkdir(parents=True, exist_ok=True)
            os.chmod(d, 0o700)
            if (d / KEY_FILE).exists():
                raise FileExistsError(f"{d} already holds a principal")
            write_secret_key(d / KEY_FILE, keys.secret)
            store_path = d / BLESSINGS_FILE
        p = cls(keys, RootSet(), BlessingStore(keys.public, store_path), directory)
        if name is not None:
            b = self_blessing(keys, name)
            p.store.set_default(b)
            p.store.add(b, UNIVERSAL, label=name)
            p.add_root(*b.root)
        p.save_roots()
        return p

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "Principal":
        d = Path(directory)
        keys = KeyPair.from_secret(read_secret_key(d / KEY_FILE))
        p = cls(keys, RootSet(), BlessingStore(keys.public, d / BLESSINGS_FILE), d)
        p.reload_roots()
        return p

    @property
    def public_key(self) -> PublicKey:
        return self.keys.public

    @property
    def default_blessing(self) -> Blessing | None:
        return self.store.default

    def blessing_names(self) -> list[str]:
        return [b.name for b in self.store.all_blessings()]

    def bless(self, delegate: PublicKey, extension: str, caveats: Iterable[Caveat] = (),
              with_: Blessing | None = None) -> Blessing:
        base = with_ or self.store.default
        if base is None:
            raise ValueError("principal has no blessing to extend")
        return bless(delegate, self.keys.secret, base, extension, caveats)

    def add_root(self, name: str, key: PublicKey) -> None:
        self.roots.add(name, key)
        self.save_roots()

    # -- persistence --

    def _roots_path(self) -> Path | None:
        return self.directory / ROOTS_FILE if self.directory is not None else None

    def save_roots(self, merge: bool = True) -> None:
        """Persist roots; with `merge`, roots added by other processes are kept."""
        path = self._roots_path()
        if path is None:
            return
        with file_lock(path):
            if merge and path.exists():
                for name, key in _read_roots(path.read_bytes()):
                    self.roots.add(name, key)
            w = Writer()
            w.raw(bytes([ROOTS_VERSION]))
            self.roots.write_to(w)
            _atomic_write(path, w.getvalue())

    def reload_roots(self) -> None:
        path = self._roots_path()
        if path is not None and path.exists():
            self.roots = _read_roots(path.read_bytes())

    def __repr__(self) -> str:
        return f"Principal({self.blessing_names()}, {self.public_key.fingerprint()})"


def _read_roots(data: bytes) -> RootSet:
    r = Reader(data)
    version = r.raw(1)[0]
    if version != ROOTS_VERSION:
        raise EncodingError(f"unsupported roots version {version}")
    roots = RootSet.read_from(r)
    r.done()
    return roots
