"""Blessing patterns, ACLs and authorization decisions.

Pattern text is ``/``-separated. A component ending in ``_G`` names a group,
a trailing ``eob`` forces an exact match, and the lone pattern ``...``
matches every blessing name.

Patterns denote (possibly infinite) sets of blessing names. Matching never
materializes those sets: :func:`match_pattern` walks the name left to right
keeping the set of positions the pattern prefix can reach, and asks the group
resolver how far each group can consume.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from itertools import product
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence, Union

from .credentials import GROUP_SUFFIX, SEPARATOR, check_component, split_name
from .errors import InvalidName, InvalidPattern

if TYPE_CHECKING:
    from .groups import GroupResolver

log = logging.getLogger(__name__)

EOB = "eob"
UNIVERSAL = "..."


class Mode(enum.Enum):
    """Group approximation used while matching.

    Allow clauses under-approximate unreachable groups, Deny clauses
    over-approximate them.
    """

    UNDER = "under"
    OVER = "over"
    ALLOW = "under"
    DENY = "over"


@dataclass(frozen=True)
class Name:
    value: str

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Group:
    name: str

    def __str__(self) -> str:
        return self.name + GROUP_SUFFIX


Component = Union[Name, Group]


def _check_group_name(name: str) -> str:
    try:
        check_component(name)
    except InvalidName as exc:
        raise InvalidPattern(f"bad group name {name!r}: {exc}") from exc
    return name


@dataclass(frozen=True)
class BlessingPattern:
    components: tuple[Component, ...]
    exact: bool = False
    universal: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if self.universal:
            if self.components or self.exact:
                raise InvalidPattern(f"{UNIVERSAL!r} stands alone")
        elif not self.components:
            raise InvalidPattern("a pattern needs at least one name or group")

    @classmethod
    def parse(cls, text: "str | BlessingPattern") -> "BlessingPattern":
        if isinstance(text, BlessingPattern):
            return text
        text = text.strip()
        if text == UNIVERSAL:
            return cls((), universal=True)
        parts = text.split(SEPARATOR)
        exact = parts[-1] == EOB
        if exact:
            parts = parts[:-1]
        comps: list[Component] = []
        for part in parts:
            if not part:
                raise InvalidPattern(f"empty component in pattern {text!r}")
            if part == EOB:
                raise InvalidPattern(f"{EOB!r} may only end a pattern: {text!r}")
            if part.endswith(GROUP_SUFFIX) and len(part) > len(GROUP_SUFFIX):
                comps.append(Group(_check_group_name(part[: -len(GROUP_SUFFIX)])))
            else:
                try:
                    comps.append(Name(check_component(part)))
                except InvalidName as exc:
                    raise InvalidPattern(f"pattern {text!r}: {exc}") from exc
        return cls(tuple(comps), exact=exact)

    def groups(self) -> list[str]:
        return [c.name for c in self.components if isinstance(c, Group)]

    def __str__(self) -> str:
        if self.universal:
            return UNIVERSAL
        text = SEPARATOR.join(str(c) for c in self.components)
        return text + SEPARATOR + EOB if self.exact else text


PatternLike = Union[str, BlessingPattern]
NameLike = Union[str, Sequence[str]]


def as_components(name: NameLike) -> tuple[str, ...]:
    if isinstance(name, str):
        return split_name(name)
    return tuple(name)


def is_prefix(bn1: NameLike, bn2: NameLike) -> bool:
    """Component-wise prefix relation on blessing names."""
    a, b = as_components(bn1), as_components(bn2)
    return len(a) <= len(b) and b[: len(a)] == a


def _reachable(pattern: BlessingPattern, name: tuple[str, ...], resolver: "GroupResolver",
               mode: Mode) -> set[int]:
    """Lengths k such that name[:k] is in the pattern's meaning."""
    positions = {0}
    for comp in pattern.components:
        nxt: set[int] = set()
        for i in positions:
            if i >= len(name):
                continue
            if isinstance(comp, Name):
                if name[i] == comp.value:
                    nxt.add(i + 1)
            else:
                result = resolver.remainders(comp.name, name[i:], mode)
                nxt.update(i + k for k in result.consumed(len(name) - i))
        positions = nxt
        if not positions:
            break
    return positions


def _resolver(resolver: "GroupResolver | None") -> "GroupResolver":
    if resolver is not None:
        return resolver
    from .groups import NO_GROUPS

    return NO_GROUPS


def match_pattern(pattern: PatternLike, name: NameLike,
                  resolver: "GroupResolver | None" = None,
                  mode: Mode = Mode.ALLOW) -> bool:
    """True iff some member of the pattern's meaning is a prefix of `name`.

    With ``eob`` the member must equal `name`. In Deny mode every prefix of
    `name` is tried as well, so an exact deny also covers all extensions.
    """
    p = BlessingPattern.parse(pattern)
    bn = as_components(name)
    if p.universal:
        return True
    r = _resolver(resolver)
    if mode is Mode.DENY and p.exact:
        return any(k in _reachable(p, bn[:k], r, mode) for k in range(1, len(bn) + 1))
    reached = _reachable(p, bn, r, mode)
    if p.exact:
        return len(bn) in reached
    return bool(reached)


@dataclass(frozen=True)
class ACL:
    allow: tuple[BlessingPattern, ...] = ()
    deny: tuple[BlessingPattern, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "allow", tuple(BlessingPattern.parse(p) for p in self.allow))
        object.__setattr__(self, "deny", tuple(BlessingPattern.parse(p) for p in self.deny))
        for p in self.deny:
            if p.exact:
                warnings.warn(
                    f"deny pattern {p} ends in {EOB}; extensions are denied regardless",
                    stacklevel=3,
                )

    @classmethod
    def of(cls, allow: Iterable[PatternLike] = (), deny: Iterable[PatternLike] = ()) -> "ACL":
        return cls(tuple(allow), tuple(deny))  # type: ignore[arg-type]

    @classmethod
    def parse(cls, text: str) -> "ACL":
        """Parse ``allow:``/``deny:`` sections, one pattern per line.

        ``allow: Alice`` on a single line is accepted too.
        """
        allow: list[BlessingPattern] = []
        deny: list[BlessingPattern] = []
        current: list[BlessingPattern] | None = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, sep, rest = line.partition(":")
            if sep and head.strip().lower() in ("allow", "deny"):
                current = allow if head.strip().lower() == "allow" else deny
                line = rest.strip()
                if not line:
                    continue
            if current is None:
                raise InvalidPattern(f"line {lineno}: pattern outside allow:/deny: section")
            current.append(BlessingPattern.parse(line))
        return cls(tuple(allow), tuple(deny))

    def to_text(self) -> str:
        lines = ["allow:"] + [f"  {p}" for p in self.allow]
        lines += ["deny:"] + [f"  {p}" for p in self.deny]
        return "\n".join(lines) + "\n"

    def with_allowed(self, pattern: PatternLike) -> "ACL":
        return ACL(self.allow + (BlessingPattern.parse(pattern),), self.deny)


def is_authorized(name: NameLike, acl: ACL, resolver: "GroupResolver | None" = None) -> bool:
    """Allowed by some Allow pattern and denied by no Deny pattern."""
    bn = as_components(name)
    if not any(match_pattern(p, bn, resolver, Mode.ALLOW) for p in acl.allow):
        return False
    return not any(match_pattern(p, bn, resolver, Mode.DENY) for p in acl.deny)


def authorized_names(names: Iterable[str], acl: ACL,
                     resolver: "GroupResolver | None" = None) -> list[str]:
    return [n for n in names if is_authorized(n, acl, resolver)]


def meaning(pattern: PatternLike, rho: Mapping[str, Iterable[str]]) -> set[str]:
    """The set of names a pattern denotes, for a finite group semantics `rho`.

    Only usable when every referenced group maps to a finite set; matching
    goes through :func:`match_pattern` instead.
    """
    p = BlessingPattern.parse(pattern)
    if p.universal:
        raise ValueError(f"{UNIVERSAL!r} denotes an infinite set")
    choices: list[list[str]] = []
    for comp in p.components:
        if isinstance(comp, Name):
            choices.append([comp.value])
        else:
            choices.append(sorted(rho.get(comp.name, ())))
    return {SEPARATOR.join(parts) for parts in product(*choices)}


def meaning_of_list(patterns: Iterable[PatternLike], rho: Mapping[str, Iterable[str]]) -> set[str]:
    out: set[str] = set()
    for p in patterns:
        out |= meaning(p, rho)
    return out
