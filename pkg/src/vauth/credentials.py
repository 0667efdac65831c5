"""Certificates, blessings, delegation and root recognition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .caveats import Caveat, read_caveat
from .encoding import (
    EncodingError,
    KeyPair,
    PublicKey,
    Reader,
    SecretKey,
    Writer,
    b64decode,
    b64encode,
    decode,
    encode,
    hash_args,
    verify,
)
from .errors import AuthorityError, InvalidName

MAX_CHAIN = 16
BLESSING_TEXT_PREFIX = "vbless1:"
SEPARATOR = "/"
# `eob` terminates ACL patterns, `...` is the universal peer pattern and a
# `_G` suffix marks a group in pattern text; none may be minted into a name.
RESERVED = frozenset({"eob", "..."})
GROUP_SUFFIX = "_G"


def check_component(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise InvalidName("name components must be non-empty text")
    if SEPARATOR in name:
        raise InvalidName(f"name component {name!r} contains {SEPARATOR!r}")
    if name in RESERVED:
        raise InvalidName(f"{name!r} is reserved")
    if name.endswith(GROUP_SUFFIX):
        raise InvalidName(f"{name!r} ends with the group marker {GROUP_SUFFIX!r}")
    return name


def split_name(name: str) -> tuple[str, ...]:
    """Split a blessing name into validated components."""
    if not name:
        raise InvalidName("empty blessing name")
    parts = tuple(name.split(SEPARATOR))
    for part in parts:
        check_component(part)
    return parts


@dataclass(frozen=True)
class Certificate:
    name: str
    public_key: PublicKey
    caveats: tuple[Caveat, ...]
    signature: bytes

    def __post_init__(self) -> None:
        check_component(self.name)
        object.__setattr__(self, "caveats", tuple(self.caveats))

    def write_to(self, w: Writer) -> None:
        w.text(self.name)
        self.public_key.write_to(w)
        w.list_(self.caveats, lambda w_, c: c.write_to(w_))
        w.bytes_(self.signature)

    @classmethod
    def read_from(cls, r: Reader) -> "Certificate":
        name = r.text()
        key = PublicKey.read_from(r)
        caveats = r.list_(read_caveat)
        signature = r.bytes_()
        try:
            return cls(name, key, tuple(caveats), signature)
        except InvalidName as exc:
            raise EncodingError(str(exc)) from exc


def _cert_digest(prefix: "Blessing | None", name: str, key: PublicKey,
                 caveats: Sequence[Caveat]) -> bytes:
    if prefix is None:
        return hash_args(name, key, list(caveats))
    return hash_args(prefix, name, key, list(caveats))


@dataclass(frozen=True)
class Blessing:
    """A non-empty certificate chain binding a name to a public key."""

    chain: tuple[Certificate, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "chain", tuple(self.chain))
        if not self.chain:
            raise InvalidName("a blessing needs at least one certificate")
        if len(self.chain) > MAX_CHAIN:
            raise InvalidName(f"chain longer than {MAX_CHAIN} certificates")

    @property
    def name(self) -> str:
        return SEPARATOR.join(c.name for c in self.chain)

    @property
    def components(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.chain)

    @property
    def public_key(self) -> PublicKey:
        return self.chain[-1].public_key

    @property
    def root(self) -> tuple[str, PublicKey]:
        first = self.chain[0]
        return first.name, first.public_key

    @property
    def caveats(self) -> list[Caveat]:
        return [c for cert in self.chain for c in cert.caveats]

    def prefix(self, n: int) -> "Blessing":
        return Blessing(self.chain[:n])

    def write_to(self, w: Writer) -> None:
        w.list_(self.chain, lambda w_, c: c.write_to(w_))

    @classmethod
    def read_from(cls, r: Reader) -> "Blessing":
        chain = r.list_(Certificate.read_from)
        try:
            return cls(tuple(chain))
        except InvalidName as exc:
            raise EncodingError(str(exc)) from exc

    def to_text(self) -> str:
        return BLESSING_TEXT_PREFIX + b64encode(encode(self))

    @classmethod
    def from_text(cls, text: str) -> "Blessing":
        text = text.strip()
        if not text.startswith(BLESSING_TEXT_PREFIX):
            raise EncodingError(f"blessing text must start with {BLESSING_TEXT_PREFIX!r}")
        return decode(cls, b64decode(text[len(BLESSING_TEXT_PREFIX):]))

    def __str__(self) -> str:
        return self.name


def full_name(b: Blessing) -> str:
    return b.name


def bound_key(b: Blessing) -> PublicKey:
    return b.public_key


def root(b: Blessing) -> tuple[str, PublicKey]:
    return b.root


def self_blessing(keys: KeyPair, name: str) -> Blessing:
    check_component(name)
    sig = keys.secret.sign(_cert_digest(None, name, keys.public, []))
    return Blessing((Certificate(name, keys.public, (), sig),))


def bless(delegate: PublicKey, sk: SecretKey, b: Blessing, extension: str,
          caveats: Iterable[Caveat] = ()) -> Blessing:
    """Extend `b` with `extension` for `delegate`, signing with `sk`.

    A multi-component extension such as ``home/bedroom/TV`` becomes one
    certificate per component, all signed by `sk`. Intermediate links are
    therefore bound to the blesser's own key and carry no caveats; the final
    link is bound to `delegate` and carries `caveats`.
    """
    own = sk.public_key()
    if own != b.public_key:
        raise AuthorityError("secret key does not match the blessing's bound key")
    parts = split_name(extension)
    if len(b.chain) + len(parts) > MAX_CHAIN:
        raise InvalidName(f"chain would exceed {MAX_CHAIN} certificates")
    caveats = tuple(caveats)
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        key, clist = (delegate, caveats) if last else (own, ())
        sig = sk.sign(_cert_digest(b, part, key, clist))
        b = Blessing(b.chain + (Certificate(part, key, clist, sig),))
    return b


def verify_certs(b: Blessing) -> bool:
    """True iff every signature in the chain verifies over the chain prefix."""
    first = b.chain[0]
    if not verify(first.public_key, _cert_digest(None, first.name, first.public_key,
                                                 first.caveats), first.signature):
        return False
    for i in range(1, len(b.chain)):
        cert, signer = b.chain[i], b.chain[i - 1].public_key
        digest = _cert_digest(b.prefix(i), cert.name, cert.public_key, cert.caveats)
        if not verify(signer, digest, cert.signature):
            return False
    return True


class RootSet:
    """Recognized blessing roots: a set of (name, public key) pairs."""

    def __init__(self, entries: Iterable[tuple[str, PublicKey]] = ()) -> None:
        self._entries: set[tuple[str, PublicKey]] = set()
        for name, key in entries:
            self.add(name, key)

    def add(self, name: str, key: PublicKey) -> None:
        check_component(name)
        self._entries.add((name, key))

    def add_blessing_root(self, b: Blessing) -> None:
        self.add(*b.root)

    def discard(self, name: str, key: PublicKey) -> None:
        self._entries.discard((name, key))

    def __contains__(self, entry: object) -> bool:
        return entry in self._entries

    def __iter__(self) -> Iterator[tuple[str, PublicKey]]:
        return iter(sorted(self._entries, key=lambda e: (e[0], e[1].data)))

    def __len__(self) -> int:
        return len(self._entries)

    def __le__(self, other: "RootSet") -> bool:
        return self._entries <= other._entries

    def copy(self) -> "RootSet":
        return RootSet(self._entries)

    def recognizes(self, b: Blessing) -> bool:
        return b.root in self._entries

    def write_to(self, w: Writer) -> None:
        def entry(w_: Writer, e: tuple[str, PublicKey]) -> None:
            w_.text(e[0])
            e[1].write_to(w_)

        w.list_(list(self), entry)

    @classmethod
    def read_from(cls, r: Reader) -> "RootSet":
        return cls(r.list_(lambda r_: (r_.text(), PublicKey.read_from(r_))))

    def __repr__(self) -> str:
        return f"RootSet({[(n, k.fingerprint()) for n, k in self]})"


def is_recognized(b: Blessing, roots: RootSet) -> bool:
    return roots.recognizes(b)
