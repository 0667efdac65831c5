from dataclasses import replace
from datetime import timedelta, timezone

import pytest

from support import MONDAY_9
from vauth.caveats import (
    DEFAULT_REGISTRY,
    MAX_DISCHARGE_DEPTH,
    CaveatRegistry,
    Discharge,
    FirstPartyCaveat,
    RequestContext,
    ThirdPartyCaveat,
    describe,
    diagnose_blessing,
    expiry,
    method_caveat,
    mint_discharge,
    peer_caveat,
    validate_blessing,
    validate_caveats,
    validate_first_party_caveat,
    weekly_schedule,
)
from vauth.credentials import Blessing, RootSet, bless, self_blessing
from vauth.encoding import EncodingError, KeyPair, decode, encode
from vauth.errors import AuthorityError, DischargeRefused, RegistryError

CUSTOM = 0x90


def con(**kw):
    kw.setdefault("timestamp", MONDAY_9)
    return RequestContext(**kw)


def test_expiry_with_skew():
    c = expiry(MONDAY_9)
    assert validate_first_party_caveat(c, con())
    assert not validate_first_party_caveat(c, con(timestamp=MONDAY_9 + timedelta(seconds=1)))
    assert validate_first_party_caveat(
        c, con(timestamp=MONDAY_9 + timedelta(seconds=1), skew=timedelta(seconds=2)))


def test_method():
    c = method_caveat("Lock", "Unlock")
    assert validate_first_party_caveat(c, con(method="Unlock"))
    assert not validate_first_party_caveat(c, con(method="AddACL"))
    with pytest.raises(ValueError):
        method_caveat()


def test_peer_matches_local_blessing_names():
    c = peer_caveat("Alice/TV")
    assert validate_first_party_caveat(c, con(local_blessing_names=("Alice/TV",)))
    assert validate_first_party_caveat(c, con(local_blessing_names=("Bob", "Alice/TV/app")))
    assert not validate_first_party_caveat(c, con(local_blessing_names=("Alice",)))
    assert not validate_first_party_caveat(c, con())
    with pytest.raises(ValueError):
        peer_caveat("Friends_G")


@pytest.mark.parametrize("hour,ok", [(7, False), (8, True), (9, True), (10, False)])
def test_weekly_schedule_hours(hour, ok):
    c = weekly_schedule("Mon", 8, 10)
    assert validate_first_party_caveat(c, con(timestamp=MONDAY_9.replace(hour=hour))) is ok


def test_weekly_schedule_day_and_timezone():
    c = weekly_schedule(0, 8, 10)
    assert not validate_first_party_caveat(c, con(timestamp=MONDAY_9 + timedelta(days=1)))
    # 09:00 UTC Monday is 18:00 in Tokyo: the validator reads the clock's own zone
    tokyo = MONDAY_9.astimezone(timezone(timedelta(hours=9)))
    assert not validate_first_party_caveat(c, con(timestamp=tokyo))
    with pytest.raises(ValueError):
        weekly_schedule("Mon", 10, 8)


def test_unknown_type_fails_closed():
    diagnostics = []
    assert not validate_caveats([FirstPartyCaveat(0xEE, b"")], con(), diagnostics=diagnostics)
    assert "unrecognized" in diagnostics[0]


def test_malformed_payload_fails_closed():
    assert not validate_first_party_caveat(FirstPartyCaveat(0x01, b"junk"), con())


def test_registry_rules():
    reg = CaveatRegistry()
    with pytest.raises(RegistryError):
        reg.register(0x01, lambda p, c: True)
    reg.register(CUSTOM, lambda p, c: p == b"ok")
    with pytest.raises(RegistryError):
        reg.register(CUSTOM, lambda p, c: True)
    child = reg.child()
    assert child.validate(FirstPartyCaveat(CUSTOM, b"ok"), con())
    assert not DEFAULT_REGISTRY.validate(FirstPartyCaveat(CUSTOM, b"ok"), con())


def test_third_party_type_cannot_be_first_party():
    with pytest.raises(EncodingError):
        FirstPartyCaveat(0x7F, b"")


def test_third_party_round_trip_and_id():
    k = KeyPair.generate()
    tc = ThirdPartyCaveat.new(k.public, method_caveat("X"), "127.0.0.1:1")
    again = decode(ThirdPartyCaveat, encode(tc))
    assert again == tc and again.id == tc.id
    assert ThirdPartyCaveat.new(k.public, method_caveat("X"), "127.0.0.1:1").id != tc.id


def _discharger():
    k = KeyPair.generate()
    reg = DEFAULT_REGISTRY.child()
    reg.register(CUSTOM, lambda payload, c: c.attribute("ok") == "yes")
    return k, reg


def test_mint_and_validate_discharge():
    k, reg = _discharger()
    tc = ThirdPartyCaveat.new(k.public, FirstPartyCaveat(CUSTOM, b""), "here")
    with pytest.raises(DischargeRefused):
        mint_discharge(k.secret, tc, [], con(), reg)
    d = mint_discharge(k.secret, tc, [expiry(MONDAY_9 + timedelta(minutes=1))],
                       con(attributes=[("ok", "yes")]), reg)
    assert d.verifies(tc) and d.expiry() == MONDAY_9 + timedelta(minutes=1)
    assert validate_caveats([tc], con(discharges=[d]))
    assert not validate_caveats([tc], con())
    late = con(discharges=[d], timestamp=MONDAY_9 + timedelta(minutes=2))
    assert not validate_caveats([tc], late)


def test_wrong_key_cannot_mint():
    k, reg = _discharger()
    tc = ThirdPartyCaveat.new(k.public, FirstPartyCaveat(CUSTOM, b""), "here")
    with pytest.raises(AuthorityError):
        mint_discharge(KeyPair.generate().secret, tc, [], con(), reg)


def test_caveat_id_is_only_a_hint():
    k, reg = _discharger()
    tc = ThirdPartyCaveat.new(k.public, FirstPartyCaveat(CUSTOM, b""), "here")
    d = mint_discharge(k.secret, tc, [], con(attributes=[("ok", "yes")]), reg)
    relabeled = Discharge(b"wrong id", d.caveats, d.signature)
    assert validate_caveats([tc], con(discharges=[relabeled]))
    forged = Discharge(tc.id, (), b"\x00" * 70)
    assert not validate_caveats([tc], con(discharges=[forged]))
    other = ThirdPartyCaveat.new(k.public, FirstPartyCaveat(CUSTOM, b""), "here")
    assert not validate_caveats([other], con(discharges=[d]))


def test_discharge_caveats_apply():
    k, reg = _discharger()
    tc = ThirdPartyCaveat.new(k.public, FirstPartyCaveat(CUSTOM, b""), "here")
    d = mint_discharge(k.secret, tc, [method_caveat("Get")], con(attributes=[("ok", "yes")]), reg)
    assert validate_caveats([tc], con(discharges=[d], method="Get"))
    assert not validate_caveats([tc], con(discharges=[d], method="Put"))


def _nested(depth):
    """A chain of `depth` third-party caveats, each discharge requiring the next."""
    k = KeyPair.generate()
    tcs = [ThirdPartyCaveat.new(k.public, method_caveat("Get"), f"d{i}") for i in range(depth)]
    ds = []
    for i, tc in enumerate(tcs):
        inner = [tcs[i + 1]] if i + 1 < depth else []
        ds.append(mint_discharge(k.secret, tc, inner, con(method="Get")))
    return tcs[0], ds


def test_nested_discharges_up_to_the_limit():
    tc, ds = _nested(MAX_DISCHARGE_DEPTH)
    assert validate_caveats([tc], con(discharges=ds, method="Get"))
    tc, ds = _nested(MAX_DISCHARGE_DEPTH + 1)
    diagnostics = []
    assert not validate_caveats([tc], con(discharges=ds, method="Get"), diagnostics=diagnostics)
    assert any("deeply" in d for d in diagnostics)


def test_validate_blessing_conjuncts():
    ka, kb = KeyPair.generate(), KeyPair.generate()
    alice = self_blessing(ka, "Alice")
    b = bless(kb.public, ka.secret, alice, "Bob", [method_caveat("Get")])
    roots = RootSet([alice.root])
    assert validate_blessing(b, roots, con(method="Get"))
    assert diagnose_blessing(b, roots, con(method="Put")).failed == "caveats"
    assert diagnose_blessing(b, RootSet(), con(method="Get")).failed == "root"
    stranger = self_blessing(kb, "Alice")
    assert diagnose_blessing(stranger, roots, con()).failed == "root"
    last = b.chain[-1]
    tampered = Blessing(b.chain[:-1] + (replace(last, caveats=()),))
    assert diagnose_blessing(tampered, roots, con(method="Put")).failed == "certs"


def test_describe():
    assert describe(method_caveat("a", "b")) == "methods=a,b"
    assert describe(weekly_schedule("Tue", 1, 2)) == "schedule=Tue:1-2"
    assert describe(FirstPartyCaveat(0xEE, b"xy")) == "caveat(0xee, 2 bytes)"
