"""The ``vauth`` command line.

Exit status: 0 on success, 1 when an operation fails (bad signature,
access denied, unreachable peer, ...), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Callable, Sequence

from . import caveats as cav
from .credentials import Blessing
from .encoding import EncodingError, PublicKey
from .errors import VauthError
from .groups import GroupDefinition, load_registry
from .lockd import LockClient, LockService, claim_lock, provision, reset
from .netd.channel import HandshakeError
from .netd.discharge import (
    DischargeService,
    RevocationList,
    proximity_caveat,
    revocable_caveat,
)
from .netd.framing import ProtocolError
from .netd.groupserver import GroupService, RemoteResolver
from .netd.rpc import Client, Server, ServiceConfig, parse_duration, read_audit_file, render_audit
from .patterns import ACL, UNIVERSAL, Mode
from .principal import ENV_VAR, Principal

log = logging.getLogger("vauth")


class UsageError(Exception):
    pass


# -- clocks and output -------------------------------------------------------------


def parse_time(text: str, what: str) -> datetime:
    """RFC 3339 time with an explicit offset; a trailing Z means UTC."""
    try:
        when = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise UsageError(f"{what} must be an RFC 3339 time: {text!r}") from None
    if when.tzinfo is None:
        raise UsageError(f"{what} needs a timezone offset")
    return when


def make_clock(fixed: str | None) -> Callable[[], datetime]:
    """Real time, or time running forward from `fixed` (for scripted scenarios)."""
    if not fixed:
        return lambda: datetime.now().astimezone()
    start = parse_time(fixed, "--now")
    origin = datetime.now().astimezone()
    return lambda: start + (datetime.now().astimezone() - origin)


class Output:
    def __init__(self, as_json: bool) -> None:
        self.as_json = as_json

    def emit(self, text: str, **record) -> None:
        if self.as_json:
            print(json.dumps(record or {"text": text}, sort_keys=True, default=str), flush=True)
        else:
            print(text, flush=True)


# -- parsing helpers -----------------------------------------------------------------


def parse_caveat(spec: str, now: datetime) -> cav.Caveat:
    """``expiry=+24h|RFC3339``, ``methods=a,b``, ``peers=p1|p2``, ``schedule=Mon:8-10``,
    ``revocable=ID,ENDPOINT,KEY`` or ``proximity=PLACE,ENDPOINT,KEY``."""
    kind, sep, value = spec.partition("=")
    if not sep or not value:
        raise UsageError(f"caveat must be name=value: {spec!r}")
    kind = kind.strip().lower()
    try:
        if kind == "expiry":
            if value.startswith("+"):
                return cav.expiry(now + parse_duration(value[1:]))
            return cav.expiry(parse_time(value, "expiry"))
        if kind == "methods":
            return cav.method_caveat(*[m.strip() for m in value.split(",") if m.strip()])
        if kind == "peers":
            return cav.peer_caveat(*[p.strip() for p in value.split("|") if p.strip()])
        if kind == "schedule":
            day, _, hours = value.partition(":")
            start, _, end = hours.partition("-")
            return cav.weekly_schedule(day, int(start), int(end))
        if kind in ("revocable", "proximity"):
            arg, endpoint, key = value.split(",")
            pk = read_public_key(key)
            if kind == "revocable":
                return revocable_caveat(pk, endpoint, arg)
            return proximity_caveat(pk, endpoint, arg)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"bad caveat {spec!r}: {exc}") from None
    raise UsageError(f"unknown caveat kind {kind!r}")


def read_public_key(text_or_path: str) -> PublicKey:
    p = Path(text_or_path)
    text = p.read_text().strip() if p.exists() else text_or_path.strip()
    return PublicKey.from_b64(text)


def read_blessing(path: str) -> Blessing:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return Blessing.from_text(text.strip())


def write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        print(text, flush=True)
    else:
        Path(path).write_text(text + "\n")


def parse_attrs(items: Sequence[str]) -> list[tuple[str, str]]:
    out = []
    for item in items:
        k, sep, v = item.partition("=")
        if not sep:
            raise UsageError(f"attribute must be key=value: {item!r}")
        out.append((k, v))
    return out


def confirm(prompt: str, assume_yes: bool) -> bool:
    if assume_yes:
        return True
    if not sys.stdin.isatty():
        return False
    return input(f"{prompt} [y/N] ").strip().lower() in ("y", "yes")


# -- command context -----------------------------------------------------------------


class Ctx:
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.out = Output(args.json)
        self.clock = make_clock(args.now)
        self._principal: Principal | None = None

    @property
    def principal_dir(self) -> Path:
        d = self.args.principal or os.environ.get(ENV_VAR)
        if not d:
            raise UsageError(f"no principal: pass --principal or set {ENV_VAR}")
        return Path(d)

    @property
    def principal(self) -> Principal:
        if self._principal is None:
            self._principal = Principal.load(self.principal_dir)
        return self._principal

    def client(self, attributes: Sequence[tuple[str, str]] = ()) -> Client:
        return Client(self.principal, clock=self.clock, timeout=self.args.timeout,
                      attributes=attributes)


def serve_until_signal(ctx: Ctx, server_like, what: str) -> None:
    endpoint = server_like.start()
    ctx.out.emit(f"{what} listening on {endpoint}", event="listening", endpoint=endpoint)
    if getattr(ctx.args, "ready_file", None):
        tmp = Path(ctx.args.ready_file + ".tmp")
        tmp.write_text(endpoint + "\n")
        os.replace(tmp, ctx.args.ready_file)
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    done.wait()
    server_like.stop()


# -- principal, bless, store, roots -------------------------------------------------------


def cmd_principal_create(ctx: Ctx) -> None:
    p = Principal.create(ctx.args.name, ctx.principal_dir)
    ctx.out.emit(p.public_key.b64(), public_key=p.public_key.b64(),
                 blessings=p.blessing_names(), directory=str(p.directory))


def cmd_principal_show(ctx: Ctx) -> None:
    p = ctx.principal
    default = p.default_blessing.name if p.default_blessing else ""
    if ctx.out.as_json:
        ctx.out.emit("", public_key=p.public_key.b64(), default=default,
                     blessings=p.blessing_names(), roots=[n for n, _ in p.roots])
        return
    print(f"public key: {p.public_key.b64()}")
    print(f"default:    {default or '-'}")
    for name in p.blessing_names():
        print(f"blessing:   {name}")
    for name, key in p.roots:
        print(f"root:       {name} {key.fingerprint()}")


def cmd_principal_pubkey(ctx: Ctx) -> None:
    write_text(ctx.args.out, ctx.principal.public_key.b64())


def cmd_bless(ctx: Ctx) -> None:
    p = ctx.principal
    delegate = read_public_key(ctx.args.for_)
    base = None
    if ctx.args.with_:
        found = p.store.by_label(ctx.args.with_) or [
            b for b in p.store.all_blessings() if b.name == ctx.args.with_]
        if not found:
            raise VauthError(f"no blessing labelled {ctx.args.with_!r}")
        base = found[0]
    now = ctx.clock()
    caveats = [parse_caveat(c, now) for c in ctx.args.caveat]
    b = p.bless(delegate, ctx.args.extension, caveats, with_=base)
    write_text(ctx.args.out, b.to_text())
    if ctx.args.out not in (None, "-"):
        ctx.out.emit(f"blessed {b.name}", name=b.name, file=ctx.args.out)


def cmd_blessing_show(ctx: Ctx) -> None:
    b = read_blessing(ctx.args.file)
    caveats = [cav.describe(c) for c in b.caveats]
    ctx.out.emit(f"{b.name} key={b.public_key.fingerprint()} caveats=[{', '.join(caveats)}]",
                 name=b.name, key=b.public_key.b64(), caveats=caveats,
                 root=b.root[0])


def cmd_store_add(ctx: Ctx) -> None:
    p = ctx.principal
    b = read_blessing(ctx.args.file)
    entry = p.store.add(b, ctx.args.peers, ctx.args.label or "")
    if ctx.args.default:
        p.store.set_default(b)
    if ctx.args.trust_root:
        p.add_root(*b.root)
    ctx.out.emit(f"stored {b.name} for peers {entry.peer_pattern}",
                 name=b.name, peers=str(entry.peer_pattern), label=entry.label)


def cmd_store_list(ctx: Ctx) -> None:
    p = ctx.principal
    default = p.store.default
    for e in p.store.entries:
        mark = "*" if default is not None and e.blessing == default else " "
        ctx.out.emit(f"{mark} {e.label:<24} {e.blessing.name:<32} peers={e.peer_pattern}",
                     label=e.label, name=e.blessing.name, peers=str(e.peer_pattern),
                     default=mark == "*", acquired=e.acquired_at.isoformat())


def cmd_store_select(ctx: Ctx) -> None:
    for b in ctx.principal.store.select_for_peer(ctx.args.peer):
        ctx.out.emit(b.name, name=b.name)


def cmd_roots_add(ctx: Ctx) -> None:
    p = ctx.principal
    if ctx.args.from_blessing:
        name, key = read_blessing(ctx.args.from_blessing).root
    elif ctx.args.name and ctx.args.key:
        name, key = ctx.args.name, read_public_key(ctx.args.key)
    else:
        raise UsageError("roots add needs --from-blessing or --name with --key")
    p.add_root(name, key)
    ctx.out.emit(f"recognized root {name}", name=name, key=key.b64())


def cmd_roots_list(ctx: Ctx) -> None:
    for name, key in ctx.principal.roots:
        ctx.out.emit(f"{name} {key.b64()}", name=name, key=key.b64())


# -- services ---------------------------------------------------------------------------


def cmd_discharge_serve(ctx: Ctx) -> None:
    p = ctx.principal
    revocations = RevocationList(ctx.args.revocations) if ctx.args.revocations else None
    svc = DischargeService(p.keys, lifetime=parse_duration(ctx.args.lifetime),
                           revocations=revocations, proximity=ctx.args.proximity)
    server = Server(p, ServiceConfig(listen=ctx.args.listen), clock=ctx.clock,
                    discharge_service=svc)
    serve_until_signal(ctx, server, "discharger")


def cmd_discharge_revoke(ctx: Ctx) -> None:
    RevocationList(ctx.args.revocations).revoke(ctx.args.id)
    ctx.out.emit(f"revoked {ctx.args.id}", revoked=ctx.args.id)


def cmd_group_serve(ctx: Ctx) -> None:
    p = ctx.principal
    defs = [GroupDefinition.parse(Path(f).read_text()) for f in ctx.args.definitions]
    fallback = None
    if ctx.args.registry:
        fallback = RemoteResolver(load_registry(Path(ctx.args.registry).read_text()),
                                  ctx.client())
    server = Server(p, ServiceConfig(listen=ctx.args.listen), clock=ctx.clock,
                    group_service=GroupService(defs, fallback))
    serve_until_signal(ctx, server, "group server")


def cmd_group_query(ctx: Ctx) -> None:
    mode = Mode.UNDER if ctx.args.mode == "under" else Mode.OVER
    with ctx.client().connect(ctx.args.endpoint) as conn:
        res = conn.group_query(ctx.args.group, ctx.args.name, mode)
    if res is None:
        raise VauthError(f"group {ctx.args.group} is not served at {ctx.args.endpoint}")
    rests = sorted("/".join(r) for r in res.rests)
    text = (f"member={res.whole} prefix-of={'yes' if res.matched else 'no'} "
            f"rests={rests} approximated={res.approximated}")
    ctx.out.emit(text, whole=res.whole, matched=res.matched, rests=rests,
                 approximated=res.approximated)


def _resolver_from(ctx: Ctx, registry: str | None):
    if not registry:
        return None
    return RemoteResolver(load_registry(Path(registry).read_text()), ctx.client())


def _echo_handler(method: str):
    def handle(req) -> bytes:
        who = ",".join(req.names) or "anonymous"
        return f"{method} ok for {who}".encode()

    return handle


def cmd_serve(ctx: Ctx) -> None:
    config = ServiceConfig.load(ctx.args.config)
    if ctx.args.listen:
        config = ServiceConfig(**{**config.__dict__, "listen": ctx.args.listen})
    handlers = {m: _echo_handler(m) for m in set(config.acls) | config.open_methods}
    server = Server(ctx.principal, config, handlers, clock=ctx.clock,
                    resolver=_resolver_from(ctx, config.group_registry))
    serve_until_signal(ctx, server, "service")


def cmd_call(ctx: Ctx) -> None:
    policy = ACL.of(ctx.args.server_pattern) if ctx.args.server_pattern else None
    args = bytes.fromhex(ctx.args.args_hex) if ctx.args.args_hex else (ctx.args.args or "").encode()
    client = ctx.client(parse_attrs(ctx.args.attr))
    with client.connect(ctx.args.endpoint, policy) as conn:
        reply = conn.call(ctx.args.method, args)
        server = list(conn.peer_names)
    try:
        text = reply.decode()
    except UnicodeDecodeError:
        text = reply.hex()
    ctx.out.emit(text, reply=text, server=server)


def cmd_receive(ctx: Ctx) -> None:
    p = ctx.principal
    assume_yes = ctx.args.yes

    def on_grant(grant, ch) -> bool:
        who = ",".join(ch.peer_names) or ch.peer_key.fingerprint()
        prompt = f"accept blessing {grant.blessing.name} from {who} for peers {grant.peer_pattern}?"
        if not confirm(prompt, assume_yes):
            ctx.out.emit(f"declined {grant.blessing.name}", event="declined",
                         name=grant.blessing.name)
            return False
        p.store.add(grant.blessing, grant.peer_pattern or UNIVERSAL)
        ctx.out.emit(f"stored {grant.blessing.name} for peers {grant.peer_pattern}",
                     event="stored", name=grant.blessing.name, peers=grant.peer_pattern)
        return True

    server = Server(p, ServiceConfig(listen=ctx.args.listen), clock=ctx.clock, on_grant=on_grant)
    serve_until_signal(ctx, server, "grant receiver")


def cmd_grant(ctx: Ctx) -> None:
    b = read_blessing(ctx.args.blessing)
    with ctx.client().connect(ctx.args.endpoint) as conn:
        conn.grant(b, ctx.args.peers)
    ctx.out.emit(f"granted {b.name}", name=b.name)


def cmd_audit_render(ctx: Ctx) -> None:
    for r in read_audit_file(ctx.args.file):
        ctx.out.emit(render_audit(r), time=r.time.isoformat(), method=r.method,
                     names=list(r.peer_names), decision=r.decision)


# -- lock ---------------------------------------------------------------------------------


def cmd_lock_provision(ctx: Ctx) -> None:
    lock_dir = ctx.principal_dir
    lock = Principal.load(lock_dir) if (lock_dir / "key").exists() else Principal.create(None, lock_dir)
    b = provision(lock, Principal.load(ctx.args.manufacturer), ctx.args.serial)
    ctx.out.emit(f"provisioned {b.name}", name=b.name, public_key=lock.public_key.b64())


def cmd_lock_serve(ctx: Ctx) -> None:
    svc = LockService(ctx.principal, clock=ctx.clock, listen=ctx.args.listen,
                      timezone=ctx.args.timezone, hook=ctx.args.hook)
    serve_until_signal(ctx, svc, "lock")


def cmd_lock_claim(ctx: Ctx) -> None:
    b = claim_lock(ctx.principal, ctx.args.endpoint, ctx.args.name,
                   ctx.args.expect_manufacturer, ctx.client())
    ctx.out.emit(f"claimed; stored {b.name}", name=b.name)


def _lock_client(ctx: Ctx) -> LockClient:
    return LockClient(ctx.principal, ctx.args.endpoint, ctx.args.name, ctx.client())


def cmd_lock_lock(ctx: Ctx) -> None:
    state = _lock_client(ctx).lock()
    ctx.out.emit(state, physical=state)


def cmd_lock_unlock(ctx: Ctx) -> None:
    state = _lock_client(ctx).unlock()
    ctx.out.emit(state, physical=state)


def cmd_lock_status(ctx: Ctx) -> None:
    s = _lock_client(ctx).status()
    ctx.out.emit(f"{s.phase} {s.lock_name or '-'} {s.physical}", phase=s.phase,
                 name=s.lock_name, physical=s.physical)


def cmd_lock_audit(ctx: Ctx) -> None:
    since = parse_time(ctx.args.since, "--since") if ctx.args.since else None
    for r in _lock_client(ctx).audit(since):
        ctx.out.emit(render_audit(r), time=r.time.isoformat(), method=r.method,
                     names=list(r.peer_names), decision=r.decision)


def cmd_lock_add_acl(ctx: Ctx) -> None:
    root = read_blessing(ctx.args.root_from).root if ctx.args.root_from else None
    _lock_client(ctx).add_acl(ctx.args.pattern, root)
    ctx.out.emit(f"allowed {ctx.args.pattern}", pattern=ctx.args.pattern)


def cmd_lock_factory_reset(ctx: Ctx) -> None:
    if not confirm("wipe the lock's claim, roots and audit log?", ctx.args.yes):
        raise VauthError("factory reset not confirmed")
    reset(ctx.principal)
    ctx.out.emit("lock reset to factory state", event="reset")


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vauth", description="Blessings, caveats and ACLs.")
    parser.add_argument("--principal", help=f"principal directory (default ${ENV_VAR})")
    parser.add_argument("--timeout", type=float, default=10.0, help="seconds per network phase")
    parser.add_argument("--json", action="store_true", help="line-delimited JSON output")
    parser.add_argument("--yes", action="store_true", help="assume yes for confirmations")
    parser.add_argument("--now", help="pretend the clock starts at this RFC 3339 time")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(parent, name: str, fn, help: str):
        p = parent.add_parser(name, help=help)
        p.set_defaults(fn=fn)
        return p

    def group(name: str, help: str):
        g = sub.add_parser(name, help=help)
        return g.add_subparsers(dest="subcommand", required=True)

    pr = group("principal", "create and inspect principals")
    c = cmd(pr, "create", cmd_principal_create, "create a principal directory")
    c.add_argument("--name", help="self-blessing name")
    cmd(pr, "show", cmd_principal_show, "show key, blessings and roots")
    c = cmd(pr, "pubkey", cmd_principal_pubkey, "print the public key")
    c.add_argument("--out", help="write to this file instead of stdout")

    c = cmd(sub, "bless", cmd_bless, "extend a blessing to another key")
    c.add_argument("--for", dest="for_", required=True, help="public key file or base64 text")
    c.add_argument("--extension", required=True)
    c.add_argument("--with", dest="with_", help="label or name of the blessing to extend")
    c.add_argument("--caveat", action="append", default=[], help="name=value, repeatable")
    c.add_argument("--out", help="blessing file (default stdout)")

    bl = group("blessing", "inspect blessing files")
    c = cmd(bl, "show", cmd_blessing_show, "describe a blessing file")
    c.add_argument("file")

    st = group("store", "manage the blessing store")
    c = cmd(st, "add", cmd_store_add, "add a blessing file")
    c.add_argument("file")
    c.add_argument("--peers", required=True, help="group-free pattern of peers to present it to")
    c.add_argument("--label")
    c.add_argument("--default", action="store_true")
    c.add_argument("--trust-root", action="store_true", help="also recognize its root")
    cmd(st, "list", cmd_store_list, "list stored blessings")
    c = cmd(st, "select", cmd_store_select, "blessings presented to the named peer")
    c.add_argument("peer", nargs="+")

    ro = group("roots", "manage recognized blessing roots")
    c = cmd(ro, "add", cmd_roots_add, "recognize a root")
    c.add_argument("--from-blessing")
    c.add_argument("--name")
    c.add_argument("--key")
    cmd(ro, "list", cmd_roots_list, "list recognized roots")

    di = group("discharge", "third-party caveat dischargers")
    c = cmd(di, "serve", cmd_discharge_serve, "run a discharger")
    c.add_argument("--listen", default="127.0.0.1:0")
    c.add_argument("--lifetime", default="5m")
    c.add_argument("--revocations", help="revocation list file")
    c.add_argument("--proximity", action="store_true", help="also answer proximity checks")
    c.add_argument("--ready-file")
    c = cmd(di, "revoke", cmd_discharge_revoke, "add an id to a revocation list")
    c.add_argument("--revocations", required=True)
    c.add_argument("id")

    gr = group("group", "group servers")
    c = cmd(gr, "serve", cmd_group_serve, "serve group definitions")
    c.add_argument("--listen", default="127.0.0.1:0")
    c.add_argument("--definitions", nargs="+", required=True)
    c.add_argument("--registry", help="file of '<group> <host:port>' lines")
    c.add_argument("--ready-file")
    c = cmd(gr, "query", cmd_group_query, "ask a group server about a name")
    c.add_argument("--endpoint", required=True)
    c.add_argument("--group", required=True)
    c.add_argument("--name", required=True)
    c.add_argument("--mode", choices=("under", "over"), default="under")

    lk = group("lock", "the claimable lock")
    c = cmd(lk, "provision", cmd_lock_provision, "give a lock its manufacturer blessing")
    c.add_argument("--manufacturer", required=True, help="manufacturer principal directory")
    c.add_argument("--serial", required=True)
    c = cmd(lk, "serve", cmd_lock_serve, "run the lock")
    c.add_argument("--listen", default="127.0.0.1:0")
    c.add_argument("--timezone")
    c.add_argument("--hook", help="command run with 'locked' or 'unlocked'")
    c.add_argument("--ready-file")
    c = cmd(lk, "claim", cmd_lock_claim, "claim an unclaimed lock")
    c.add_argument("--endpoint", required=True)
    c.add_argument("--name", required=True)
    c.add_argument("--expect-manufacturer", required=True, help="e.g. PopularCorp/Lock9")
    for name, fn, help in (("lock", cmd_lock_lock, "lock the door"),
                           ("unlock", cmd_lock_unlock, "unlock the door"),
                           ("status", cmd_lock_status, "show lock state"),
                           ("audit", cmd_lock_audit, "show the access log"),
                           ("add-acl", cmd_lock_add_acl, "allow another pattern (owner only)")):
        c = cmd(lk, name, fn, help)
        c.add_argument("--endpoint", required=True)
        c.add_argument("--name", required=True, help="the lock's name")
        if name == "audit":
            c.add_argument("--since")
        if name == "add-acl":
            c.add_argument("--pattern", required=True)
            c.add_argument("--root-from", help="blessing file whose root the lock should recognize")
    cmd(lk, "factory-reset", cmd_lock_factory_reset, "wipe claim state (needs --yes)")

    c = cmd(sub, "serve", cmd_serve, "run a demo service from a config file")
    c.add_argument("--config", required=True)
    c.add_argument("--listen")
    c.add_argument("--ready-file")

    c = cmd(sub, "call", cmd_call, "call a method")
    c.add_argument("--endpoint", required=True)
    c.add_argument("--method", required=True)
    c.add_argument("--args", help="argument text")
    c.add_argument("--args-hex")
    c.add_argument("--server-pattern", action="append", help="require the server to match")
    c.add_argument("--attr", action="append", default=[], help="key=value sent to dischargers")

    c = cmd(sub, "receive", cmd_receive, "accept blessing grants")
    c.add_argument("--listen", default="127.0.0.1:0")
    c.add_argument("--ready-file")

    c = cmd(sub, "grant", cmd_grant, "send a blessing to the peer it is bound to")
    c.add_argument("--endpoint", required=True)
    c.add_argument("--blessing", required=True)
    c.add_argument("--peers", default=UNIVERSAL)

    au = group("audit", "audit logs")
    c = cmd(au, "render", cmd_audit_render, "print an audit log file")
    c.add_argument("file")
    return parser


DOMAIN_ERRORS = (VauthError, EncodingError, ProtocolError, HandshakeError, OSError, ValueError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Ctx(args)
        args.fn(ctx)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"vauth: error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        print(f"vauth: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
