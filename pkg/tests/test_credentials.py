import pytest

from vauth.caveats import method_caveat
from vauth.credentials import (
    MAX_CHAIN,
    Blessing,
    RootSet,
    bless,
    check_component,
    self_blessing,
    split_name,
    verify_certs,
)
from vauth.encoding import EncodingError, KeyPair, decode, encode
from vauth.errors import AuthorityError, InvalidName


@pytest.fixture(scope="module")
def keys():
    return [KeyPair.generate() for _ in range(3)]


@pytest.mark.parametrize("bad", ["", "a/b", "eob", "...", "Friends_G"])
def test_reserved_and_malformed_components(bad):
    with pytest.raises(InvalidName):
        check_component(bad)


def test_split_name():
    assert split_name("Alice/TV") == ("Alice", "TV")
    with pytest.raises(InvalidName):
        split_name("Alice//TV")


def test_self_blessing(keys):
    b = self_blessing(keys[0], "Alice")
    assert b.name == "Alice" and b.public_key == keys[0].public
    assert b.root == ("Alice", keys[0].public)
    assert verify_certs(b)


def test_bless_extends_and_binds(keys):
    alice = self_blessing(keys[0], "Alice")
    tv = bless(keys[1].public, keys[0].secret, alice, "TV", [method_caveat("Watch")])
    assert tv.name == "Alice/TV" and tv.public_key == keys[1].public
    assert tv.caveats == [method_caveat("Watch")]
    assert verify_certs(tv)


def test_multi_component_extension(keys):
    alice = self_blessing(keys[0], "Alice")
    b = bless(keys[1].public, keys[0].secret, alice, "home/bedroom/TV", [method_caveat("On")])
    assert b.components == ("Alice", "home", "bedroom", "TV")
    # intermediate links stay with the blesser and carry no caveats
    assert [c.public_key for c in b.chain[1:3]] == [keys[0].public] * 2
    assert b.chain[1].caveats == () and b.chain[3].caveats == (method_caveat("On"),)
    assert verify_certs(b)


def test_only_the_holder_can_extend(keys):
    alice = self_blessing(keys[0], "Alice")
    with pytest.raises(AuthorityError):
        bless(keys[2].public, keys[1].secret, alice, "Mallory")


def test_chain_length_limit(keys):
    b = self_blessing(keys[0], "r")
    for i in range(MAX_CHAIN - 1):
        b = bless(keys[0].public, keys[0].secret, b, f"c{i}")
    with pytest.raises(InvalidName):
        bless(keys[0].public, keys[0].secret, b, "one-too-many")
    with pytest.raises(InvalidName):
        Blessing(())


def test_text_and_binary_round_trip(keys):
    b = bless(keys[1].public, keys[0].secret, self_blessing(keys[0], "Alice"), "TV")
    assert Blessing.from_text(b.to_text()) == b
    assert decode(Blessing, encode(b)) == b
    with pytest.raises(EncodingError):
        Blessing.from_text("nope")


def test_decoding_rejects_reserved_names(keys):
    data = encode(self_blessing(keys[0], "Bob"))
    assert decode(Blessing, data.replace(encode("Bob"), encode("Rob"))).name == "Rob"
    with pytest.raises(EncodingError):
        decode(Blessing, data.replace(encode("Bob"), encode("eob")))


def test_prefix_of_a_valid_chain_is_valid(keys):
    b = bless(keys[2].public, keys[1].secret,
              bless(keys[1].public, keys[0].secret, self_blessing(keys[0], "A"), "B"), "C")
    assert all(verify_certs(b.prefix(n)) for n in range(1, 4))


def test_root_set(keys):
    roots = RootSet()
    alice = self_blessing(keys[0], "Alice")
    assert not roots.recognizes(alice)
    roots.add_blessing_root(alice)
    assert roots.recognizes(alice)
    # same name, different key is a different root
    assert not roots.recognizes(self_blessing(keys[1], "Alice"))
    copy = roots.copy()
    roots.discard("Alice", keys[0].public)
    assert len(roots) == 0 and len(copy) == 1
    assert list(decode(RootSet, encode(copy))) == list(copy)
