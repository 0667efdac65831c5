"""Group definitions and membership resolution.

Group definitions are read as productions: group names are non-terminals,
name components are terminals. For a group ``g`` and a blessing name ``bn``
the resolver answers a *remainder query*: which suffixes ``y`` are left
after stripping a member of ``g`` from the front of ``bn`` (``Whole`` when a
member equals ``bn``). Pattern matching composes these answers.

A group whose definition cannot be obtained is approximated: by the empty
set when matching Allow clauses and by the set of all names when matching
Deny clauses. With every definition available both modes agree.

Recursive definitions are evaluated to their least fixed point. A query
carries the remainder sets assumed so far for the (group, suffix) pairs
currently being evaluated; hitting one of those returns the assumption and
records the dependency, and the owner of the pair iterates until its answer
stops growing.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Callable, Iterable, Mapping

from .credentials import GROUP_SUFFIX
from .errors import InvalidPattern
from .patterns import BlessingPattern, Mode, Name, PatternLike, as_components

Key = tuple[str, tuple[str, ...]]
Assumptions = Mapping[Key, "RemainderResult"]


class GroupUnreachable(Exception):
    """The definition of a group could not be obtained."""


@dataclass(frozen=True)
class RemainderResult:
    whole: bool = False
    rests: frozenset[tuple[str, ...]] = frozenset()
    approximated: bool = False
    depends_on: frozenset[Key] = frozenset()

    @classmethod
    def from_consumed(cls, name: tuple[str, ...], consumed: Iterable[int],
                      approximated: bool = False,
                      depends_on: Iterable[Key] = ()) -> "RemainderResult":
        consumed = set(consumed)
        return cls(
            whole=len(name) in consumed,
            rests=frozenset(name[k:] for k in consumed if 0 < k < len(name)),
            approximated=approximated,
            depends_on=frozenset(depends_on),
        )

    def consumed(self, n: int) -> set[int]:
        """Numbers of leading components a member can consume from an n-component name."""
        out = {n - len(r) for r in self.rests}
        if self.whole:
            out.add(n)
        return out

    @property
    def matched(self) -> bool:
        return self.whole or bool(self.rests)

    def same_members(self, other: "RemainderResult") -> bool:
        return self.whole == other.whole and self.rests == other.rests


def approximate(name: tuple[str, ...], mode: Mode) -> RemainderResult:
    """Answer for a group whose definition is unavailable."""
    if mode is Mode.UNDER:
        return RemainderResult(approximated=True)
    return RemainderResult.from_consumed(name, range(1, len(name) + 1), approximated=True)


@dataclass(frozen=True)
class GroupDefinition:
    name: str
    patterns: tuple[BlessingPattern, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns",
                           tuple(BlessingPattern.parse(p) for p in self.patterns))
        for p in self.patterns:
            if p.exact:
                raise InvalidPattern(f"group {self.name}: 'eob' is not allowed in definitions")

    @classmethod
    def of(cls, name: str, *patterns: PatternLike) -> "GroupDefinition":
        return cls(name, tuple(patterns))  # type: ignore[arg-type]

    @classmethod
    def parse(cls, text: str) -> "GroupDefinition":
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or not lines[0].lower().startswith("group:"):
            raise InvalidPattern("group definition must start with 'group: <name>'")
        name = lines[0].split(":", 1)[1].strip()
        if name.endswith(GROUP_SUFFIX):
            name = name[: -len(GROUP_SUFFIX)]
        return cls(name, tuple(BlessingPattern.parse(ln) for ln in lines[1:]))

    def to_text(self) -> str:
        return "\n".join([f"group: {self.name}"] + [str(p) for p in self.patterns]) + "\n"


def load_registry(text: str) -> dict[str, str]:
    """Parse ``<group> <host:port>`` lines."""
    registry: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        group, endpoint = line.split()
        if group.endswith(GROUP_SUFFIX):
            group = group[: -len(GROUP_SUFFIX)]
        registry[group] = endpoint
    return registry


class GroupResolver:
    """Answers remainder queries; subclasses implement :meth:`_remainders`."""

    def lookup(self, group: str, name, mode: Mode,
               assumptions: Assumptions | None = None) -> RemainderResult:
        """Like :meth:`remainders` but raises GroupUnreachable instead of approximating."""
        name = as_components(name)
        assumptions = assumptions or {}
        key = (group, name)
        if key in assumptions:
            assumed = assumptions[key]
            return replace(assumed, depends_on=frozenset({key}))
        return self._remainders(group, name, mode, assumptions)

    def remainders(self, group: str, name, mode: Mode,
                   assumptions: Assumptions | None = None) -> RemainderResult:
        name = as_components(name)
        try:
            return self.lookup(group, name, mode, assumptions)
        except GroupUnreachable:
            return approximate(name, mode)

    def _remainders(self, group: str, name: tuple[str, ...], mode: Mode,
                    assumptions: Assumptions) -> RemainderResult:
        raise NotImplementedError


def _evaluate_once(defn: GroupDefinition, name: tuple[str, ...], mode: Mode,
                   assumptions: Assumptions, resolver: GroupResolver) -> RemainderResult:
    consumed: set[int] = set()
    approximated = False
    depends: set[Key] = set()
    for p in defn.patterns:
        if p.universal:
            consumed.update(range(1, len(name) + 1))
            continue
        positions = {0}
        for comp in p.components:
            nxt: set[int] = set()
            for i in positions:
                if i >= len(name):
                    continue
                if isinstance(comp, Name):
                    if name[i] == comp.value:
                        nxt.add(i + 1)
                    continue
                sub = resolver.remainders(comp.name, name[i:], mode, assumptions)
                approximated |= sub.approximated
                depends |= sub.depends_on
                nxt.update(i + k for k in sub.consumed(len(name) - i))
            positions = nxt
            if not positions:
                break
        consumed |= positions
    return RemainderResult.from_consumed(name, consumed, approximated, depends)


def evaluate(defn: GroupDefinition, name, mode: Mode, assumptions: Assumptions,
             resolver: GroupResolver) -> RemainderResult:
    """Least-fixed-point remainders of `name` under `defn`."""
    name = as_components(name)
    key = (defn.name, name)
    current = RemainderResult()
    while True:
        trial = dict(assumptions)
        trial[key] = current
        result = _evaluate_once(defn, name, mode, trial, resolver)
        if key not in result.depends_on:
            return result
        result = replace(result, depends_on=result.depends_on - {key})
        if result.same_members(current) and result.approximated == current.approximated:
            return result
        current = result


class LocalResolver(GroupResolver):
    """Resolves from in-memory definitions.

    Groups listed in `unreachable` behave as if their server were down;
    groups without a local definition go to `fallback` (or are unreachable).
    """

    def __init__(self, definitions: Mapping[str, GroupDefinition] | Iterable[GroupDefinition] = (),
                 fallback: GroupResolver | None = None,
                 unreachable: Iterable[str] = ()) -> None:
        if not isinstance(definitions, Mapping):
            definitions = {d.name: d for d in definitions}
        self.definitions = dict(definitions)
        self.fallback = fallback
        self.unreachable = frozenset(unreachable)

    def _remainders(self, group, name, mode, assumptions):
        if group in self.unreachable:
            raise GroupUnreachable(group)
        defn = self.definitions.get(group)
        if defn is None:
            if self.fallback is None:
                raise GroupUnreachable(group)
            return self.fallback.lookup(group, name, mode, assumptions)
        return evaluate(defn, name, mode, assumptions, self)


NO_GROUPS = LocalResolver({})


def membership_prefix(group: str, name, mode: Mode,
                      resolver: GroupResolver | None = None) -> bool:
    """True iff some member of the group (under `mode`) is a prefix of `name`."""
    return (resolver or NO_GROUPS).remainders(group, name, mode).matched


def _now() -> datetime:
    return datetime.now().astimezone()


@dataclass
class _Entry:
    result: RemainderResult
    fetched: datetime


class CachedResolver(GroupResolver):
    """Memoizes top-level answers of `inner` for `ttl`.

    When `inner` is unreachable, an expired entry younger than `staleness`
    is served with ``approximated`` set.
    """

    def __init__(self, inner: GroupResolver, ttl: timedelta,
                 staleness: timedelta = timedelta(hours=24),
                 clock: Callable[[], datetime] = _now) -> None:
        if ttl <= timedelta(0):
            raise ValueError("ttl must be positive")
        self.inner = inner
        self.ttl = ttl
        self.staleness = staleness
        self.clock = clock
        self.misses = 0
        self._cache: dict[tuple, _Entry] = {}
        self._lock = threading.Lock()

    def _remainders(self, group, name, mode, assumptions):
        if assumptions:
            return self.inner.lookup(group, name, mode, assumptions)
        key = (group, name, mode)
        now = self.clock()
        with self._lock:
            entry = self._cache.get(key)
        if entry is not None and now - entry.fetched < self.ttl:
            return entry.result
        self.misses += 1
        try:
            result = self.inner.lookup(group, name, mode, assumptions)
        except GroupUnreachable:
            if entry is not None and now - entry.fetched <= self.staleness:
                return replace(entry.result, approximated=True)
            raise
        if not result.depends_on and not result.approximated:
            with self._lock:
                self._cache[key] = _Entry(result, now)
        return result


def cached_resolver(inner: GroupResolver, ttl: timedelta, **kwargs) -> CachedResolver:
    return CachedResolver(inner, ttl, **kwargs)

