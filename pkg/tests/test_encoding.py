import os
import struct
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vauth.encoding import (
    EncodingError,
    KeyPair,
    PublicKey,
    Reader,
    SecretKey,
    b64decode,
    b64encode,
    decode,
    decode_list,
    encode,
    from_micros,
    hash_args,
    read_secret_key,
    sign,
    to_micros,
    verify,
    write_secret_key,
)

i64s = st.integers(-(2**63), 2**63 - 1)


def ref(value):
    """Reference encoder built from struct alone."""
    if isinstance(value, str):
        value = value.encode()
    if isinstance(value, bytes):
        return struct.pack(">I", len(value)) + value
    if isinstance(value, int):
        return ref(struct.pack(">q", value))
    return struct.pack(">I", len(value)) + b"".join(ref(v) for v in value)


@given(st.text())
def test_text_matches_reference(s):
    assert encode(s) == ref(s)
    assert decode(str, encode(s)) == s


@given(st.binary())
def test_bytes_round_trip(b):
    assert encode(b) == ref(b)
    assert decode(bytes, encode(b)) == b


@given(i64s)
def test_int_round_trip(n):
    assert encode(n) == ref(n)
    assert decode(int, encode(n)) == n


@given(st.lists(st.text(max_size=8), max_size=6))
def test_text_lists(items):
    assert encode(items) == ref(items)
    assert decode_list(str, encode(items)) == items


@given(st.lists(st.binary(max_size=6), min_size=1, max_size=4),
       st.lists(st.binary(max_size=6), min_size=1, max_size=4))
def test_hash_args_distinguishes_argument_lists(a, b):
    if a != b:
        assert hash_args(*a) != hash_args(*b)


def test_hash_args_separates_arguments():
    assert hash_args("ab", "c") != hash_args("a", "bc")
    assert hash_args("ab", "") != hash_args("ab")


def test_out_of_range_and_unencodable():
    with pytest.raises(EncodingError):
        encode(2**63)
    with pytest.raises(EncodingError):
        encode(True)
    with pytest.raises(EncodingError):
        encode(1.5)


@pytest.mark.parametrize("data", [b"", b"\x00\x00\x00", b"\x00\x00\x00\x05abc"])
def test_truncated_input(data):
    with pytest.raises(EncodingError):
        decode(bytes, data)


def test_trailing_bytes_rejected():
    with pytest.raises(EncodingError, match="trailing"):
        decode(str, encode("a") + b"\x00")


def test_int_must_be_eight_bytes():
    with pytest.raises(EncodingError):
        decode(int, ref(b"\x00" * 4))


def test_huge_list_count_is_rejected_early():
    with pytest.raises(EncodingError):
        decode_list(str, struct.pack(">I", 2**31))


def test_invalid_utf8():
    with pytest.raises(EncodingError):
        Reader(ref(b"\xff\xfe")).text()


@given(st.binary())
def test_b64_round_trip(b):
    text = b64encode(b)
    assert "=" not in text
    assert b64decode(text) == b


def test_micros():
    t = datetime(2026, 10, 12, 9, 0, 0, 123456, tzinfo=timezone.utc)
    assert from_micros(to_micros(t)) == t
    assert to_micros(datetime(1970, 1, 1, tzinfo=timezone.utc)) == 0
    with pytest.raises(EncodingError):
        to_micros(datetime(2026, 1, 1))
    east = t.astimezone(timezone(timedelta(hours=9)))
    assert to_micros(east) == to_micros(t)


def test_sign_and_verify():
    kp = KeyPair.generate()
    digest = hash_args("hello")
    sig = sign(kp.secret, digest)
    assert verify(kp.public, digest, sig)
    assert not verify(kp.public, hash_args("other"), sig)
    assert not verify(KeyPair.generate().public, digest, sig)
    assert not verify(PublicKey(b"\x02" + b"\x00" * 32), digest, sig)
    assert not verify(kp.public, digest[:5], sig)
    assert not verify(kp.public, digest, b"junk")
    with pytest.raises(ValueError):
        sign(kp.secret, b"short")


def test_public_key_is_compressed_point():
    kp = KeyPair.generate()
    assert len(kp.public.data) == 33 and kp.public.data[0] in (2, 3)
    assert PublicKey.from_b64(kp.public.b64()) == kp.public
    assert len(kp.public.fingerprint()) == 16


def test_secret_key_file(tmp_path):
    kp = KeyPair.generate()
    path = tmp_path / "key"
    write_secret_key(path, kp.secret)
    assert os.stat(path).st_mode & 0o777 == 0o600
    again = read_secret_key(path)
    assert again.public_key() == kp.public
    assert "hidden" in repr(again)


def test_secret_key_from_scalar_is_deterministic():
    a, b = SecretKey.from_scalar(12345), SecretKey.from_scalar((12345).to_bytes(32, "big"))
    assert a.public_key() == b.public_key()
