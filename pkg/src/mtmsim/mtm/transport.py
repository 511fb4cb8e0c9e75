"""Message transports between MTM workers.

``InProcessTransport`` routes messages between worker objects living in one
process.  The TCP transport runs every worker in its own process; workers
connect to a hub on the loopback interface, and the hub forwards a window's
frames only once it holds every frame of that window, which is the barrier.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import queue
import socket
import time
import traceback

from ..partition import Partition
from .protocol import (
    FLAG_HELLO,
    PortWaveformMessage,
    ProtocolError,
    StreamTracker,
    recv_frame,
    send_frame,
)
from .worker import Worker, WorkerSpec

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    pass


class WorkerFailed(RuntimeError):
    """A worker raised; carries the worker's subcircuit and window."""

    def __init__(self, subcircuit: int, window: int | None, message: str):
        self.subcircuit = subcircuit
        self.window = window
        super().__init__(f"subcircuit {subcircuit} failed at window {window}: {message}")


def _routes(partition: Partition) -> dict[tuple[int, int], int]:
    # (wire id, sending port) -> receiving subcircuit
    out = {}
    for w in partition.wires:
        out[(w.wire_id, 1)] = w.side_b.subcircuit
        out[(w.wire_id, 2)] = w.side_a.subcircuit
    return out


class InProcessTransport:
    """Ordered, exactly-once delivery between in-process workers."""

    def __init__(self, partition: Partition, check_order: bool = True):
        self.routes = _routes(partition)
        self.tracker = StreamTracker() if check_order else None
        self.delivered = 0

    def exchange(self, messages: list[PortWaveformMessage]) -> dict[int, list[PortWaveformMessage]]:
        inbox: dict[int, list[PortWaveformMessage]] = {}
        for msg in messages:
            if self.tracker is not None:
                self.tracker.check(msg)
            try:
                dest = self.routes[(msg.wire_id, msg.port)]
            except KeyError:
                raise ProtocolError(f"no route for wire {msg.wire_id} port {msg.port}") from None
            inbox.setdefault(dest, []).append(msg)
            self.delivered += 1
        return inbox


def exchange(transport: InProcessTransport, messages: list[PortWaveformMessage]) -> list[PortWaveformMessage]:
    """Deliver one round of messages; returns them in delivery order."""
    inbox = transport.exchange(messages)
    return [m for dest in sorted(inbox) for m in inbox[dest]]


# -- TCP --------------------------------------------------------------------

def _tcp_worker_main(address, spec: WorkerSpec, results, timeout: float) -> None:
    window = None
    try:
        worker = Worker(spec)
        sock = socket.create_connection(address, timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_frame(sock, PortWaveformMessage(0, 0xFFFF, spec.sub.index, (), FLAG_HELLO))
        for window in range(worker.nwindows):
            for msg in worker.solve_window(window):
                send_frame(sock, msg)
            for _ in range(worker.expected_incoming()):
                msg = recv_frame(sock)
                if msg.window != window:
                    raise ProtocolError(f"expected window {window}, got {msg.window}")
                worker.receive(msg, window)
        sock.close()
        results.put(("ok", spec.sub.index, worker.solver.result(), worker.window_iterations))
    except BaseException as exc:  # report everything to the hub, then exit
        log.debug("worker %d failed:\n%s", spec.sub.index, traceback.format_exc())
        results.put(("error", spec.sub.index, window, f"{type(exc).__name__}: {exc}"))


class TcpHub:
    """Runs workers as processes and relays their frames over loopback TCP."""

    def __init__(self, partition: Partition, specs: list[WorkerSpec], timeout: float = 120.0):
        self.partition = partition
        self.specs = specs
        self.timeout = timeout
        self.routes = _routes(partition)
        self.tracker = StreamTracker()
        self.delivered = 0
        self.exchange_time = 0.0

    def _fail(self, results, exc: Exception):
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline:
            try:
                item = results.get(timeout=0.2)
            except queue.Empty:
                continue
            if item[0] == "error":
                raise WorkerFailed(item[1], item[2], item[3]) from exc
        raise TransportError(str(exc)) from exc

    def run(self, nwindows: int):
        ctx = mp.get_context("spawn")
        results = ctx.Queue()
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind(("127.0.0.1", 0))
        server.listen(len(self.specs))
        server.settimeout(self.timeout)
        procs = [
            ctx.Process(target=_tcp_worker_main, args=(server.getsockname(), s, results, self.timeout),
                        daemon=True)
            for s in self.specs
        ]
        for p in procs:
            p.start()
        conns: dict[int, socket.socket] = {}
        try:
            try:
                while len(conns) < len(self.specs):
                    c, _ = server.accept()
                    c.settimeout(self.timeout)
                    c.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    hello = recv_frame(c)
                    if not hello.flags & FLAG_HELLO:
                        raise ProtocolError("expected a hello frame")
                    conns[hello.port] = c
                expect = {s.sub.index: len(s.wires) for s in self.specs}
                for n in range(nwindows):
                    t0 = time.perf_counter()
                    batch = []
                    for idx in sorted(conns):
                        for _ in range(expect[idx]):
                            msg = recv_frame(conns[idx])
                            self.tracker.check(msg)
                            if msg.window != n:
                                raise ProtocolError(f"frame for window {msg.window} during window {n}")
                            batch.append(msg)
                    for msg in batch:
                        send_frame(conns[self.routes[(msg.wire_id, msg.port)]], msg)
                        self.delivered += 1
                    self.exchange_time += time.perf_counter() - t0
            except (OSError, ConnectionError, ProtocolError) as exc:
                self._fail(results, exc)

            collected = {}
            while len(collected) < len(self.specs):
                try:
                    item = results.get(timeout=self.timeout)
                except queue.Empty:
                    raise TransportError("timed out waiting for worker results") from None
                if item[0] == "error":
                    raise WorkerFailed(item[1], item[2], item[3])
                collected[item[1]] = (item[2], item[3])
            for p in procs:
                p.join(timeout=self.timeout)
            return collected
        finally:
            for c in conns.values():
                c.close()
            server.close()
            for p in procs:
                if p.is_alive():
                    p.terminate()
