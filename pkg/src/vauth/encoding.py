"""Canonical byte encoding, hashing and the signature scheme.

Every signature and digest in the package is computed over the encoding
defined here:

* text and byte strings: 4-byte big-endian length, then the bytes (text is UTF-8)
* integers: 4-byte length (always 8), then 8-byte signed big-endian
* lists: 4-byte big-endian element count, then each element
* records: their fields in declared order
* caveats: 1 type byte, then a length-prefixed payload

All of these are prefix-free, so concatenations decode unambiguously.
"""

from __future__ import annotations

import base64
import hashlib
import os
import struct
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Sequence, TypeVar

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, utils

T = TypeVar("T")

SCHEME_ID = "ecdsa-p256-sha256"
DIGEST_SIZE = 32
_CURVE = ec.SECP256R1()
_ALGORITHM = ec.ECDSA(utils.Prehashed(hashes.SHA256()))
_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class EncodingError(ValueError):
    """A value could not be encoded, or bytes could not be decoded."""


class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def bytes_(self, data: bytes) -> None:
        if len(data) > 0xFFFFFFFF:
            raise EncodingError("byte string too long")
        self._parts.append(_U32.pack(len(data)))
        self._parts.append(bytes(data))

    def text(self, value: str) -> None:
        self.bytes_(value.encode("utf-8"))

    def int_(self, value: int) -> None:
        try:
            self.bytes_(_I64.pack(value))
        except struct.error as exc:
            raise EncodingError(f"integer out of range: {value}") from exc

    def count(self, n: int) -> None:
        self._parts.append(_U32.pack(n))

    def list_(self, items: Sequence[T], write: Callable[["Writer", T], None]) -> None:
        self.count(len(items))
        for item in items:
            write(self, item)

    def value(self, value: Any) -> None:
        _write_value(self, value)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self._data = memoryview(bytes(data))
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise EncodingError("truncated input")
        out = self._data[self._pos:end].tobytes()
        self._pos = end
        return out

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def count(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def bytes_(self) -> bytes:
        return self._take(self.count())

    def text(self) -> str:
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError("invalid UTF-8 text") from exc

    def int_(self) -> int:
        data = self.bytes_()
        if len(data) != 8:
            raise EncodingError("integer field must be 8 bytes")
        return _I64.unpack(data)[0]

    def list_(self, read: Callable[["Reader"], T]) -> list[T]:
        n = self.count()
        if n > len(self._data) - self._pos:
            # every element occupies at least one byte
            raise EncodingError("list count exceeds input")
        return [read(self) for _ in range(n)]

    def done(self) -> None:
        if self._pos != len(self._data):
            raise EncodingError(f"{len(self._data) - self._pos} trailing bytes")


def _write_value(w: Writer, value: Any) -> None:
    if isinstance(value, bool):
        raise EncodingError("booleans are not encodable; use an int")
    if isinstance(value, str):
        w.text(value)
    elif isinstance(value, (bytes, bytearray, memoryview)):
        w.bytes_(bytes(value))
    elif isinstance(value, int):
        w.int_(value)
    elif isinstance(value, (list, tuple)):
        w.list_(value, _write_value)
    elif hasattr(value, "write_to"):
        value.write_to(w)
    else:
        raise EncodingError(f"unencodable value of type {type(value).__name__}")


def encode(value: Any) -> bytes:
    """Return the canonical encoding of `value`."""
    w = Writer()
    _write_value(w, value)
    return w.getvalue()


_PRIMITIVE_READERS: dict[type, Callable[[Reader], Any]] = {
    str: Reader.text,
    bytes: Reader.bytes_,
    int: Reader.int_,
}


def decode(kind: type[T], data: bytes) -> T:
    """Decode `data` as a single value of type `kind`; trailing bytes are an error."""
    r = Reader(data)
    if kind in _PRIMITIVE_READERS:
        value = _PRIMITIVE_READERS[kind](r)
    elif hasattr(kind, "read_from"):
        value = kind.read_from(r)  # type: ignore[attr-defined]
    else:
        raise EncodingError(f"no decoder for {kind.__name__}")
    r.done()
    return value


def decode_list(kind: type[T], data: bytes) -> list[T]:
    r = Reader(data)
    read = _PRIMITIVE_READERS.get(kind) or kind.read_from  # type: ignore[attr-defined]
    items = r.list_(read)
    r.done()
    return items


def hash_args(*args: Any) -> bytes:
    """SHA-256 over the length-wrapped canonical encodings of `args`."""
    h = hashlib.sha256()
    for arg in args:
        data = encode(arg)
        h.update(_U32.pack(len(data)))
        h.update(data)
    return h.digest()


def b64encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64decode(text: str) -> bytes:
    text = text.strip()
    try:
        return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    except (ValueError, TypeError) as exc:
        raise EncodingError("invalid base64url text") from exc


def to_micros(when: datetime) -> int:
    if when.tzinfo is None:
        raise EncodingError("naive datetimes are not encodable")
    delta = when - _EPOCH
    return (delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds


def from_micros(micros: int) -> datetime:
    return _EPOCH + timedelta(microseconds=micros)


# -- signatures -------------------------------------------------------------


@lru_cache(maxsize=4096)
def _load_public(data: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, data)


@dataclass(frozen=True)
class PublicKey:
    """A P-256 verification key, held as a compressed SEC1 point."""

    data: bytes

    def write_to(self, w: Writer) -> None:
        w.bytes_(self.data)

    @classmethod
    def read_from(cls, r: Reader) -> "PublicKey":
        return cls(r.bytes_())

    def verify(self, digest: bytes, signature: bytes) -> bool:
        return verify(self, digest, signature)

    def b64(self) -> str:
        return b64encode(encode(self))

    @classmethod
    def from_b64(cls, text: str) -> "PublicKey":
        return decode(cls, b64decode(text))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.data).hexdigest()[:16]

    def __repr__(self) -> str:
        return f"PublicKey({self.fingerprint()})"


class SecretKey:
    """A P-256 signing key. Deliberately has no canonical encoding."""

    __slots__ = ("_key",)

    def __init__(self, key: ec.EllipticCurvePrivateKey) -> None:
        self._key = key

    @classmethod
    def from_scalar(cls, scalar: bytes | int) -> "SecretKey":
        if isinstance(scalar, bytes):
            scalar = int.from_bytes(scalar, "big")
        return cls(ec.derive_private_key(scalar, _CURVE))

    def scalar(self) -> bytes:
        return self._key.private_numbers().private_value.to_bytes(32, "big")

    def public_key(self) -> PublicKey:
        point = self._key.public_key().public_bytes(
            encoding=serialization.Encoding.X962,
            format=serialization.PublicFormat.CompressedPoint,
        )
        return PublicKey(point)

    def sign(self, digest: bytes) -> bytes:
        return sign(self, digest)

    def __repr__(self) -> str:
        return "SecretKey(<hidden>)"


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    secret: SecretKey

    @classmethod
    def generate(cls) -> "KeyPair":
        secret = SecretKey(ec.generate_private_key(_CURVE))
        return cls(secret.public_key(), secret)

    @classmethod
    def from_secret(cls, secret: SecretKey) -> "KeyPair":
        return cls(secret.public_key(), secret)


def sign(sk: SecretKey, digest: bytes) -> bytes:
    if len(digest) != DIGEST_SIZE:
        raise ValueError("sign expects a 32-byte digest")
    return sk._key.sign(digest, _ALGORITHM)


def verify(pk: PublicKey, digest: bytes, signature: bytes) -> bool:
    """True iff `signature` is a valid signature over `digest` under `pk`.

    Malformed keys, digests or signatures yield False rather than raising.
    """
    if len(digest) != DIGEST_SIZE:
        return False
    try:
        _load_public(bytes(pk.data)).verify(bytes(signature), digest, _ALGORITHM)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


# -- key files ---------------------------------------------------------------


def write_secret_key(path: str | os.PathLike, sk: SecretKey) -> None:
    w = Writer()
    w.text(SCHEME_ID)
    w.bytes_(sk.scalar())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(w.getvalue())
    os.chmod(tmp, 0o600)
    os.replace(tmp, path)


def read_secret_key(path: str | os.PathLike) -> SecretKey:
    r = Reader(Path(path).read_bytes())
    scheme = r.text()
    scalar = r.bytes_()
    r.done()
    if scheme != SCHEME_ID:
        raise EncodingError(f"unsupported key scheme {scheme!r}")
    return SecretKey.from_scalar(scalar)
