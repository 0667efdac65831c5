"""Regenerate vectors.json from a struct-only reference encoder.

Nothing here imports vauth. Keys come from fixed scalars and every
signature is a fixed byte string, except the two certificates of
SIGNED_CHAIN, which are signed once over digests computed below. ECDSA
signing is randomized, so re-running changes those two entries; the
checked-in file is the reference.

    python3 tests/golden/build.py
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, utils

OUT = Path(__file__).with_name("vectors.json")

SCALARS = (0x1111, 0x2222, 0x3333)
T_MICROS = 1_760_000_000_000_000  # 2025-10-09T08:53:20Z
NONCE = bytes(range(16))
EPHEMERAL = bytes([0x42]) * 32
HELLO_NONCE = bytes([0x17]) * 16
SIG_A = bytes([0x30, 0x06, 0x02, 0x01, 0x01, 0x02, 0x01, 0x02])
SIG_B = bytes([0xAB]) * 12
LOCATION = "127.0.0.1:7000"

MSG = {"HELLO": 0x01, "SERVER_AUTH": 0x02, "CLIENT_AUTH": 0x03, "CALL": 0x04,
       "REPLY": 0x05, "DISCHARGE_REQUEST": 0x06, "DISCHARGE_REPLY": 0x07,
       "GROUP_QUERY": 0x08, "GROUP_RESULT": 0x09, "GRANT": 0x0A,
       "GROUP_UNKNOWN": 0x0B, "CLOSE": 0x0F}


def u32(n):
    return struct.pack(">I", n)


def bstr(b):
    return u32(len(b)) + b


def text(s):
    return bstr(s.encode("utf-8"))


def i64(v):
    return bstr(struct.pack(">q", v))


def lst(items):
    return u32(len(items)) + b"".join(items)


def hash_args(*encodings):
    h = hashlib.sha256()
    for e in encodings:
        h.update(u32(len(e)) + e)
    return h.digest()


def private(i):
    return ec.derive_private_key(SCALARS[i], ec.SECP256R1())


def point(i):
    return private(i).public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint)


def pubkey(i):
    return bstr(point(i))


def caveat(type_id, payload):
    return bytes([type_id]) + bstr(payload)


def third_party(nonce, key_i, check, location):
    return caveat(0x7F, bstr(nonce) + pubkey(key_i) + check + text(location))


def cert(name, key_i, caveats, sig):
    return text(name) + pubkey(key_i) + lst(caveats) + bstr(sig)


def sign(i, digest):
    return private(i).sign(digest, ec.ECDSA(utils.Prehashed(hashes.SHA256())))


def fixed_inputs():
    expiry = caveat(0x01, i64(T_MICROS))
    method = caveat(0x02, lst([text("Lock"), text("Unlock")]))
    peer = caveat(0x03, lst([text("Alice/TV")]))
    schedule = caveat(0x04, lst([i64(0), i64(8), i64(10)]))
    revocation = caveat(0x80, text("r1"))
    tpc = third_party(NONCE, 1, revocation, LOCATION)
    return expiry, method, peer, schedule, revocation, tpc


def signed_chain(method):
    root_digest = hash_args(text("Alice"), pubkey(0), lst([]))
    root = cert("Alice", 0, [], sign(0, root_digest))
    leaf_digest = hash_args(lst([root]), text("TV"), pubkey(2), lst([method]))
    leaf = cert("TV", 2, [method], sign(0, leaf_digest))
    return lst([root, leaf])


def result(whole, rests, approximated, depends):
    rests = sorted(rests)
    depends = sorted(depends)
    return (i64(int(whole))
            + lst([lst([text(c) for c in r]) for r in rests])
            + i64(int(approximated))
            + lst([text(g) + lst([text(c) for c in n]) for g, n in depends]))


def build(previous: dict | None = None) -> dict:
    expiry, method, peer, schedule, revocation, tpc = fixed_inputs()
    v: dict[str, str] = {}

    def put(name, data):
        v[name] = data.hex()

    put("text_empty", text(""))
    put("text_ascii", text("Alice"))
    put("text_utf8", text("Zoë"))
    put("bytes", bstr(b"\x00\x01\xff"))
    put("int_zero", i64(0))
    put("int_minus_one", i64(-1))
    put("int_max", i64(2**63 - 1))
    put("int_time", i64(T_MICROS))
    put("list_empty", lst([]))
    put("list_text", lst([text("a"), text("bc")]))
    put("list_int", lst([i64(0), i64(8), i64(10)]))
    put("public_key", pubkey(0))
    put("caveat_expiry", expiry)
    put("caveat_method", method)
    put("caveat_peer", peer)
    put("caveat_schedule", schedule)
    put("caveat_revocation_check", revocation)
    put("caveat_third_party", tpc)
    put("certificate", cert("Alice", 0, [expiry], SIG_A))
    put("blessing_unsigned", lst([cert("Alice", 0, [], SIG_A),
                                  cert("Phone", 1, [method, tpc], SIG_B)]))
    if previous and "blessing_signed" in previous:
        chain = bytes.fromhex(previous["blessing_signed"])
    else:
        chain = signed_chain(method)
    v["blessing_signed"] = chain.hex()
    put("digest_cert_root", hash_args(text("Alice"), pubkey(0), lst([])))
    put("caveat_id", hash_args(tpc))
    discharge = bstr(hash_args(tpc)) + lst([expiry]) + bstr(SIG_B)
    put("discharge", discharge)
    put("digest_discharge", hash_args(tpc, lst([expiry])))

    rr = result(True, [("Phone",)], False, [("Friends", ("Bob", "Phone"))])
    messages = {
        "HELLO": i64(1) + bstr(EPHEMERAL) + bstr(HELLO_NONCE),
        "SERVER_AUTH": bstr(EPHEMERAL) + bstr(SIG_B),
        "CLIENT_AUTH": bstr(SIG_B),
        "CALL": i64(1) + text("Status") + text("") + bstr(b""),
        "REPLY": i64(1) + i64(1) + bstr(b"") + text("access denied"),
        "DISCHARGE_REQUEST": tpc + lst([text("location") + text("living-room")]),
        "DISCHARGE_REPLY": lst([discharge]) + text(""),
        "GROUP_QUERY": (text("Friends") + lst([text("Bob"), text("Phone")]) + i64(0)
                        + lst([text("Friends") + lst([text("Phone")])
                               + result(False, [], False, [])])),
        "GROUP_RESULT": rr,
        "GRANT": chain + text("Alice"),
        "GROUP_UNKNOWN": text("Enemies") + text("no such group"),
        "CLOSE": i64(1) + text("unauthorized"),
    }
    for name, payload in messages.items():
        put(f"msg_{name}", payload)
        put(f"frame_{name}", struct.pack(">IB", len(payload) + 1, MSG[name]) + payload)
    put("msg_DISCHARGE_REPLY_refused", lst([]) + text("r1 has been revoked"))
    put("auth_body", pubkey(0) + lst([chain]) + lst([discharge]) + bstr(SIG_A))
    put("audit_record", i64(T_MICROS) + text("Unlock") + lst([text("Alice/Key")])
        + text("Allowed"))
    return v


def main() -> None:
    previous = json.loads(OUT.read_text()) if OUT.exists() else None
    OUT.write_text(json.dumps(build(previous), indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
