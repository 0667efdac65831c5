"""Shared test helpers: a settable clock, socket recorders and the criterion log."""

from __future__ import annotations

import contextlib
import functools
import ipaddress
import os
import socket
import subprocess
import sys
import threading
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

from vauth.netd import channel, framing
from vauth.netd.framing import MsgType

# criterion number -> (title, passed, seconds, note)
RESULTS: dict[int, tuple[str, bool, float, str]] = {}

MONDAY_9 = datetime(2026, 10, 12, 9, 0, tzinfo=timezone.utc)


def criterion(number: int, title: str, limit: float | None = None):
    """Record PASS/FAIL for an acceptance test, failing it past `limit` seconds."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            passed, note = False, ""
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - start
                if limit is not None:
                    assert elapsed < limit, f"took {elapsed:.1f}s, limit {limit:g}s"
                passed = True
            except BaseException as exc:
                note = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                raise
            finally:
                RESULTS[number] = (title, passed, time.perf_counter() - start, note)

        return run

    return wrap


def summary_lines() -> list[str]:
    lines = []
    for n in sorted(RESULTS):
        title, passed, secs, note = RESULTS[n]
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title} ({secs:.2f}s)"
        if note:
            line += f"  [{note}]"
        lines.append(line)
    return lines


class FakeClock:
    def __init__(self, start: datetime = MONDAY_9) -> None:
        self._now = start
        self._lock = threading.Lock()

    def __call__(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, **kwargs) -> datetime:
        with self._lock:
            self._now += timedelta(**kwargs)
            return self._now

    def set(self, when: datetime) -> None:
        with self._lock:
            self._now = when


class FrameLog:
    """Records every frame written or read through the channel module."""

    def __init__(self) -> None:
        self.frames: list[tuple[tuple, tuple, MsgType, bytes, str]] = []
        self._lock = threading.Lock()

    def _add(self, sock, msg_type, payload, direction) -> None:
        try:
            ends = (sock.getsockname()[:2], sock.getpeername()[:2])
        except OSError:
            ends = ((), ())
        with self._lock:
            self.frames.append((ends[0], ends[1], MsgType(msg_type), bytes(payload), direction))

    @contextlib.contextmanager
    def patched(self, monkeypatch):
        real_write, real_read = framing.write_frame, framing.read_frame

        def write(sock, msg_type, payload):
            self._add(sock, msg_type, payload, "sent")
            return real_write(sock, msg_type, payload)

        def read(sock):
            msg_type, payload = real_read(sock)
            self._add(sock, msg_type, payload, "received")
            return msg_type, payload

        monkeypatch.setattr(channel, "write_frame", write)
        monkeypatch.setattr(channel, "read_frame", read)
        try:
            yield self
        finally:
            monkeypatch.setattr(channel, "write_frame", real_write)
            monkeypatch.setattr(channel, "read_frame", real_read)

    def sent(self) -> list[tuple[tuple, tuple, MsgType, bytes]]:
        with self._lock:
            return [f[:4] for f in self.frames if f[4] == "sent"]

    def conversation(self, server: str) -> list[tuple[int, str, MsgType, bytes]]:
        """Frames sent to or by the server at `server`: (index, sender, type, payload).

        Indexes count all sent frames, so conversations can be interleaved.
        """
        out = []
        for i, (src, dst, t, payload) in enumerate(self.sent()):
            if _ep(dst) == server:
                out.append((i, "client", t, payload))
            elif _ep(src) == server:
                out.append((i, "server", t, payload))
        return out

    def types(self) -> set[MsgType]:
        with self._lock:
            return {f[2] for f in self.frames}

    def clear(self) -> None:
        with self._lock:
            self.frames.clear()


def _ep(addr: tuple) -> str:
    return f"{addr[0]}:{addr[1]}" if addr else ""


class NetworkRecorder:
    """Logs every outbound connect and every bind made by this process."""

    def __init__(self) -> None:
        self.connects: list[tuple] = []
        self.binds: list[tuple] = []

    @contextlib.contextmanager
    def patched(self, monkeypatch):
        real_connect = socket.socket.connect
        real_connect_ex = socket.socket.connect_ex
        real_bind = socket.socket.bind
        real_sendto = socket.socket.sendto
        rec = self

        def connect(self_, address):
            rec.connects.append(address)
            return real_connect(self_, address)

        def connect_ex(self_, address):
            rec.connects.append(address)
            return real_connect_ex(self_, address)

        def bind(self_, address):
            rec.binds.append(address)
            return real_bind(self_, address)

        def sendto(self_, data, *args):
            rec.connects.append(args[-1])
            return real_sendto(self_, data, *args)

        monkeypatch.setattr(socket.socket, "connect", connect)
        monkeypatch.setattr(socket.socket, "connect_ex", connect_ex)
        monkeypatch.setattr(socket.socket, "bind", bind)
        monkeypatch.setattr(socket.socket, "sendto", sendto)
        yield self

    def external(self, known: set[str]) -> list:
        """Connections to anything but a known loopback endpoint."""
        bad = []
        for addr in self.connects:
            host, port = addr[0], addr[1]
            if not ipaddress.ip_address(host).is_loopback or f"{host}:{port}" not in known:
                bad.append(addr)
        for addr in self.binds:
            if addr and addr[0] and not ipaddress.ip_address(addr[0]).is_loopback:
                bad.append(addr)
        return bad


# -- CLI processes -------------------------------------------------------------

VAUTH = [sys.executable, "-m", "vauth"]


def run_cli(*args, check=True, timeout=30, env=None) -> subprocess.CompletedProcess:
    proc = subprocess.run([*VAUTH, *map(str, args)], capture_output=True, text=True,
                          timeout=timeout, env=env)
    if check and proc.returncode != 0:
        raise AssertionError(f"vauth {' '.join(map(str, args))} exited {proc.returncode}:\n"
                             f"{proc.stdout}{proc.stderr}")
    return proc


class CliServer:
    """A vauth server in its own process; the endpoint comes from --ready-file."""

    def __init__(self, *args, workdir: Path) -> None:
        self.ready = workdir / f"ready-{os.urandom(4).hex()}"
        self.proc = subprocess.Popen([*VAUTH, *map(str, args), "--ready-file", str(self.ready)],
                                     stdout=subprocess.DEVNULL, stderr=subprocess.PIPE, text=True)
        deadline = time.monotonic() + 20
        while not (self.ready.exists() and self.ready.read_text().strip()):
            if self.proc.poll() is not None:
                raise AssertionError(f"server exited early: {self.proc.stderr.read()}")
            if time.monotonic() > deadline:
                self.stop()
                raise AssertionError("server did not become ready")
            time.sleep(0.05)
        self.endpoint = self.ready.read_text().strip()

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self.proc.stderr:
            self.proc.stderr.close()

    def __enter__(self) -> "CliServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
