"""Point-to-point transports between rank contexts living in one process.

A *fabric* owns the connections for ``n`` ranks and hands each rank an
endpoint with ``send(dst, chunk_id, payload)`` and ``recv(src, chunk_id)``.
Sends never block on the receiver; ``recv`` blocks until the matching
message has arrived. Messages are matched on ``(src, chunk_id)``, and each
ordered pair delivers in order.
"""

from __future__ import annotations

import socket
import struct
import threading
from collections import deque
from typing import Protocol

# u32 src, u32 dst, u32 chunk_id, u32 payload_len
FRAME_HEADER = struct.Struct("<IIII")


class TransportError(OSError):
    pass


class Endpoint(Protocol):
    rank: int

    def send(self, dst: int, chunk_id: int, payload: bytes) -> None: ...

    def recv(self, src: int, chunk_id: int) -> bytes: ...


class _Inbox:
    """Arrived messages keyed by (src, chunk_id), FIFO per key."""

    def __init__(self, timeout: float | None):
        self._cond = threading.Condition()
        self._msgs: dict[tuple[int, int], deque] = {}
        self._error: BaseException | None = None
        self.timeout = timeout

    def put(self, src: int, chunk_id: int, payload: bytes) -> None:
        with self._cond:
            self._msgs.setdefault((src, chunk_id), deque()).append(payload)
            self._cond.notify_all()

    def fail(self, exc: BaseException) -> None:
        with self._cond:
            self._error = exc
            self._cond.notify_all()

    def take(self, src: int, chunk_id: int) -> bytes:
        key = (src, chunk_id)
        with self._cond:
            ok = self._cond.wait_for(
                lambda: self._msgs.get(key) or self._error is not None, self.timeout
            )
            if self._msgs.get(key):
                return self._msgs[key].popleft()
            if self._error is not None:
                raise TransportError(f"transport failed: {self._error}") from self._error
            if not ok:
                raise TransportError(f"timed out waiting for chunk {chunk_id} from rank {src}")
            raise AssertionError("unreachable")

    def pending(self) -> int:
        with self._cond:
            return sum(len(q) for q in self._msgs.values())


class InProcEndpoint:
    def __init__(self, fabric: "InProcFabric", rank: int):
        self.fabric = fabric
        self.rank = rank

    def send(self, dst: int, chunk_id: int, payload: bytes) -> None:
        self.fabric._check_peer(dst)
        self.fabric.inboxes[dst].put(self.rank, chunk_id, bytes(payload))

    def recv(self, src: int, chunk_id: int) -> bytes:
        self.fabric._check_peer(src)
        return self.fabric.inboxes[self.rank].take(src, chunk_id)


class InProcFabric:
    """Message channels backed by per-rank in-memory inboxes."""

    name = "inproc"

    def __init__(self, n: int, timeout: float | None = 30.0):
        self.n = n
        self.inboxes = [_Inbox(timeout) for _ in range(n)]

    def _check_peer(self, r: int) -> None:
        if not 0 <= r < self.n:
            raise TransportError(f"rank {r} outside [0, {self.n})")

    def endpoint(self, rank: int) -> InProcEndpoint:
        self._check_peer(rank)
        return InProcEndpoint(self, rank)

    def pending(self) -> int:
        return sum(box.pending() for box in self.inboxes)

    def abort(self, exc: BaseException) -> None:
        """Wake every blocked receiver with ``exc``."""
        for box in self.inboxes:
            box.fail(exc)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _recv_exact(sock: socket.socket, size: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < size:
        part = sock.recv(size - len(buf))
        if not part:
            return None if not buf else bytes(buf)
        buf += part
    return bytes(buf)


class SocketEndpoint:
    def __init__(self, fabric: "SocketFabric", rank: int):
        self.fabric = fabric
        self.rank = rank

    def send(self, dst: int, chunk_id: int, payload: bytes) -> None:
        conn, lock = self.fabric._connection(self.rank, dst)
        frame = FRAME_HEADER.pack(self.rank, dst, chunk_id, len(payload)) + bytes(payload)
        try:
            with lock:
                conn.sendall(frame)
        except OSError as exc:
            raise TransportError(f"rank {self.rank} -> {dst}: send failed: {exc}") from exc

    def recv(self, src: int, chunk_id: int) -> bytes:
        self.fabric._check_peer(src)
        return self.fabric.inboxes[self.rank].take(src, chunk_id)


class SocketFabric:
    """Loopback TCP: rank ``r`` listens on ``base_port + r`` (ephemeral ports when 0).

    Each ordered pair gets one lazily opened connection. A reader thread per
    accepted connection decodes frames into the receiver's inbox.
    """

    name = "socket"

    def __init__(self, n: int, base_port: int = 0, host: str = "127.0.0.1",
                 timeout: float | None = 30.0):
        self.n = n
        self.host = host
        self.inboxes = [_Inbox(timeout) for _ in range(n)]
        self._listeners: list[socket.socket] = []
        self._conns: dict[tuple[int, int], tuple[socket.socket, threading.Lock]] = {}
        self._conn_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._accepted: list[socket.socket] = []
        self._closed = False
        try:
            for r in range(n):
                ls = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                ls.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                ls.bind((host, base_port + r if base_port else 0))
                ls.listen(max(n, 8))
                self._listeners.append(ls)
        except OSError as exc:
            self.close()
            raise TransportError(f"cannot bind loopback listeners: {exc}") from exc
        self.ports = [ls.getsockname()[1] for ls in self._listeners]
        for r, ls in enumerate(self._listeners):
            t = threading.Thread(target=self._accept_loop, args=(r, ls), daemon=True)
            t.start()
            self._threads.append(t)

    def _check_peer(self, r: int) -> None:
        if not 0 <= r < self.n:
            raise TransportError(f"rank {r} outside [0, {self.n})")

    def _accept_loop(self, rank: int, ls: socket.socket) -> None:
        while not self._closed:
            try:
                conn, _ = ls.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._accepted.append(conn)
            t = threading.Thread(target=self._read_loop, args=(rank, conn), daemon=True)
            t.start()
            self._threads.append(t)

    def _read_loop(self, rank: int, conn: socket.socket) -> None:
        inbox = self.inboxes[rank]
        while True:
            try:
                head = _recv_exact(conn, FRAME_HEADER.size)
                if head is None:
                    return
                if len(head) < FRAME_HEADER.size:
                    raise TransportError("truncated frame header")
                src, dst, chunk_id, length = FRAME_HEADER.unpack(head)
                if dst != rank:
                    raise TransportError(f"frame for rank {dst} arrived at rank {rank}")
                payload = _recv_exact(conn, length) if length else b""
                if payload is None or len(payload) != length:
                    raise TransportError("truncated frame payload")
            except OSError as exc:
                if not self._closed:
                    inbox.fail(exc)
                return
            inbox.put(src, chunk_id, payload)

    def _connection(self, src: int, dst: int):
        self._check_peer(dst)
        key = (src, dst)
        with self._conn_lock:
            if key not in self._conns:
                try:
                    conn = socket.create_connection((self.host, self.ports[dst]))
                except OSError as exc:
                    raise TransportError(f"rank {src} cannot reach rank {dst}: {exc}") from exc
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._conns[key] = (conn, threading.Lock())
            return self._conns[key]

    def endpoint(self, rank: int) -> SocketEndpoint:
        self._check_peer(rank)
        return SocketEndpoint(self, rank)

    def pending(self) -> int:
        return sum(box.pending() for box in self.inboxes)

    def abort(self, exc: BaseException) -> None:
        """Wake every blocked receiver with ``exc``."""
        for box in self.inboxes:
            box.fail(exc)

    def close(self) -> None:
        self._closed = True
        for conn, _ in self._conns.values():
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        for s in self._listeners + self._accepted:
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                s.close()
            except OSError:
                pass
        self._conns.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_fabric(kind: str, n: int, base_port: int = 0):
    if kind == "inproc":
        return InProcFabric(n)
    if kind == "socket":
        return SocketFabric(n, base_port=base_port)
    raise ValueError(f"unknown transport {kind!r} (inproc, socket)")
