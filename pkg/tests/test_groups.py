import random
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from support import FakeClock
from vauth.errors import InvalidPattern
from vauth.groups import (
    CachedResolver,
    GroupDefinition,
    GroupUnreachable,
    LocalResolver,
    load_registry,
    membership_prefix,
)
from vauth.netd.groupserver import GroupService, RemoteResolver
from vauth.netd.rpc import Client, Server
from vauth.patterns import ACL, Mode, is_authorized, match_pattern
from vauth.principal import Principal


def consumed(r, group, name, mode):
    return r.remainders(group, name, mode).consumed(len(name))


def test_recursive_group_is_least_fixed_point():
    # L = a | L/b : members a, a/b, a/b/b, ...
    r = LocalResolver([GroupDefinition.of("L", "a", "L_G/b")])
    assert consumed(r, "L", ("a", "b", "b", "c"), Mode.UNDER) == {1, 2, 3}
    assert not membership_prefix("L", ("b",), Mode.UNDER, r)


def test_self_loop_adds_nothing():
    # S = S : the least fixed point is empty, even when over-approximating
    r = LocalResolver([GroupDefinition.of("S", "S_G")])
    assert consumed(r, "S", ("a",), Mode.UNDER) == set()
    assert consumed(r, "S", ("a",), Mode.OVER) == set()


def test_mutual_recursion():
    r = LocalResolver([GroupDefinition.of("A", "x", "B_G/y"),
                       GroupDefinition.of("B", "A_G/z")])
    assert consumed(r, "A", ("x", "z", "y"), Mode.UNDER) == {1, 3}
    assert consumed(r, "B", ("x", "z", "y"), Mode.UNDER) == {2}


def test_unreachable_approximations():
    r = LocalResolver([GroupDefinition.of("F", "Bob", "Far_G")], unreachable=["Far"])
    name = ("Carol", "Phone")
    assert consumed(r, "F", name, Mode.UNDER) == set()
    assert consumed(r, "F", name, Mode.OVER) == {1, 2}
    assert r.remainders("F", name, Mode.OVER).approximated
    with pytest.raises(GroupUnreachable):
        r.lookup("Far", name, Mode.UNDER)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_matches_span_oracle(seed):
    rng = random.Random(seed)
    defs = oracles.random_definitions(rng)
    groups = sorted(defs)
    unreachable = {g for g in groups if rng.random() < 0.3}
    r = LocalResolver([GroupDefinition.of(g, *(p if p == "..." else oracles.items_text(p)
                                               for p in prods))
                       for g, prods in defs.items()], unreachable=unreachable)
    name = oracles.random_name(rng)
    for over in (False, True):
        spans = oracles.group_spans(defs, unreachable, over, name)
        mode = Mode.OVER if over else Mode.UNDER
        for g in groups:
            want = {j for (i, j) in spans[g] if i == 0}
            assert consumed(r, g, name, mode) == want, (g, name, mode)


def test_definition_text():
    text = "group: Friends_G\n# pals\nBob\nCarol/Phone\nFamily_G\n"
    d = GroupDefinition.parse(text)
    assert d.name == "Friends" and [str(p) for p in d.patterns] == [
        "Bob", "Carol/Phone", "Family_G"]
    assert GroupDefinition.parse(d.to_text()) == d
    with pytest.raises(InvalidPattern):
        GroupDefinition.parse("Bob\n")
    with pytest.raises(InvalidPattern):
        GroupDefinition.of("X", "Bob/eob")


def test_load_registry():
    assert load_registry("Friends_G 127.0.0.1:1\n# x\n\nFamily 127.0.0.1:2\n") == {
        "Friends": "127.0.0.1:1", "Family": "127.0.0.1:2"}


def test_cached_resolver_ttl_and_staleness():
    clock = FakeClock()
    inner = LocalResolver([GroupDefinition.of("F", "Bob")])
    cache = CachedResolver(inner, timedelta(minutes=1), staleness=timedelta(minutes=10),
                           clock=clock)
    assert consumed(cache, "F", ("Bob",), Mode.UNDER) == {1}
    assert consumed(cache, "F", ("Bob",), Mode.UNDER) == {1}
    assert cache.misses == 1
    clock.advance(minutes=2)
    consumed(cache, "F", ("Bob",), Mode.UNDER)
    assert cache.misses == 2

    inner.unreachable = frozenset({"F"})
    clock.advance(minutes=5)
    stale = cache.remainders("F", ("Bob",), Mode.UNDER)
    assert stale.whole and stale.approximated
    clock.advance(minutes=20)
    assert not cache.remainders("F", ("Bob",), Mode.UNDER).matched
    with pytest.raises(ValueError):
        CachedResolver(inner, timedelta(0))


def test_remote_groups_over_the_network(servers):
    host = Principal.create("GroupHost")
    friends = GroupDefinition.of("Friends", "Bob", "Family_G")
    family_host = Principal.create("FamilyHost")
    family = Server(family_host, group_service=GroupService([GroupDefinition.of("Family", "Mom")]))
    servers.append(family)
    fam_ep = family.start()

    me = Principal.create("Me")
    client = Client(me)
    fallback = RemoteResolver({"Family": fam_ep}, Client(host))
    server = Server(host, group_service=GroupService([friends], fallback=fallback))
    servers.append(server)
    ep = server.start()

    r = RemoteResolver({"Friends": ep, "Gone": "127.0.0.1:1", "Family": fam_ep}, client)
    assert match_pattern("Friends_G", "Bob/Phone", r)
    assert match_pattern("Friends_G/eob", "Mom", r)
    assert not match_pattern("Friends_G", "Eve", r)
    # unregistered groups are unreachable
    assert not match_pattern("Nobody_G", "Bob", r)
    acl = ACL.of(["Friends_G"], ["Gone_G"])
    assert not is_authorized("Bob", acl, r)
    assert is_authorized("Bob", ACL.of(["Friends_G"]), r)
