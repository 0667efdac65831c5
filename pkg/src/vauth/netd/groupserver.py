"""Serving group definitions and resolving groups held by other servers."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import VauthError
from ..groups import GroupDefinition, GroupResolver, GroupUnreachable, LocalResolver, RemainderResult
from ..patterns import ACL
from .framing import ProtocolError
from .messages import GroupQuery

log = logging.getLogger(__name__)


class RemoteResolver(GroupResolver):
    """Asks the server registered for each group.

    Groups missing from the registry, unknown to their server, or whose
    server cannot be reached are unreachable.
    """

    def __init__(self, registry: Mapping[str, str], client, policy: ACL | None = None) -> None:
        self.registry = dict(registry)
        self.client = client
        self.policy = policy

    def _remainders(self, group, name, mode, assumptions):
        endpoint = self.registry.get(group)
        if endpoint is None:
            raise GroupUnreachable(group)
        try:
            with self.client.connect(endpoint, self.policy) as conn:
                res = conn.group_query(group, name, mode, assumptions)
        except (OSError, ProtocolError, VauthError) as exc:
            log.info("group %s at %s unreachable: %s", group, endpoint, exc)
            raise GroupUnreachable(group) from exc
        if res is None:
            raise GroupUnreachable(group)
        return res


class GroupService:
    """Answers GROUP_QUERY for locally defined groups.

    Groups referenced by the definitions but defined elsewhere go to
    `fallback`, typically a :class:`RemoteResolver`.
    """

    def __init__(self, definitions: Iterable[GroupDefinition],
                 fallback: GroupResolver | None = None) -> None:
        self.resolver = LocalResolver(definitions, fallback=fallback)

    @property
    def definitions(self) -> Mapping[str, GroupDefinition]:
        return self.resolver.definitions

    def query(self, q: GroupQuery) -> RemainderResult | None:
        if q.group not in self.resolver.definitions:
            return None
        try:
            return self.resolver.lookup(q.group, q.name, q.mode, dict(q.assumptions))
        except GroupUnreachable:
            return None


def load_definitions(paths: Iterable[str | os.PathLike]) -> list[GroupDefinition]:
    return [GroupDefinition.parse(Path(p).read_text()) for p in paths]
