"""Port-waveform messages and their binary frame format.

Frame layout (header integers big-endian, samples little-endian)::

    u32 magic 0x4D544D31 ("MTM1")
    u32 window index
    u16 wire id
    u8  sending port (1 or 2)
    u8  flags
    u32 sample count K
    K x (f64 u, f64 i)
    u32 CRC32C of the K*16 sample bytes
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import crc32c
import numpy as np

MAGIC = 0x4D544D31
HEADER = struct.Struct(">IIHBBI")
TRAILER = struct.Struct(">I")

FLAG_HELLO = 0x01  # control frame: port field carries the worker id
FLAG_WR = 0x02  # waveform-relaxation iterate rather than a final window

_SAMPLE = np.dtype("<f8")


class ProtocolError(RuntimeError):
    """Malformed frame, bad checksum or out-of-order stream."""


@dataclass(frozen=True)
class PortWaveformMessage:
    window: int
    wire_id: int
    port: int
    samples: tuple[tuple[float, float], ...]
    flags: int = 0

    @property
    def count(self) -> int:
        return len(self.samples)

    @classmethod
    def from_arrays(cls, window, wire_id, port, u, i, flags=0) -> "PortWaveformMessage":
        return cls(window, wire_id, port, tuple(zip(map(float, u), map(float, i))), flags)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.samples:
            return np.zeros(0), np.zeros(0)
        a = np.array(self.samples, dtype=float)
        return a[:, 0], a[:, 1]


def encode(msg: PortWaveformMessage) -> bytes:
    if msg.port not in (1, 2) and not msg.flags & FLAG_HELLO:
        raise ProtocolError(f"port id must be 1 or 2, got {msg.port}")
    payload = np.asarray(msg.samples, dtype=_SAMPLE).reshape(-1, 2).tobytes()
    head = HEADER.pack(MAGIC, msg.window, msg.wire_id, msg.port, msg.flags, msg.count)
    return head + payload + TRAILER.pack(crc32c.crc32c(payload))


def _parse_header(head: bytes) -> tuple[int, int, int, int, int]:
    magic, window, wire, port, flags, count = HEADER.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic 0x{magic:08X}")
    return window, wire, port, flags, count


def _build(window, wire, port, flags, count, payload: bytes, crc: int) -> PortWaveformMessage:
    if crc32c.crc32c(payload) != crc:
        raise ProtocolError(f"checksum mismatch on window {window} wire {wire} port {port}")
    data = np.frombuffer(payload, dtype=_SAMPLE).reshape(count, 2)
    samples = tuple((float(u), float(i)) for u, i in data)
    return PortWaveformMessage(window, wire, port, samples, flags)


def decode(frame: bytes) -> PortWaveformMessage:
    if len(frame) < HEADER.size + TRAILER.size:
        raise ProtocolError("frame too short")
    window, wire, port, flags, count = _parse_header(frame[: HEADER.size])
    end = HEADER.size + 16 * count
    if len(frame) != end + TRAILER.size:
        raise ProtocolError(f"frame length {len(frame)} does not match sample count {count}")
    (crc,) = TRAILER.unpack(frame[end:])
    return _build(window, wire, port, flags, count, frame[HEADER.size:end], crc)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return bytes(buf)


def send_frame(sock: socket.socket, msg: PortWaveformMessage) -> None:
    sock.sendall(encode(msg))


def recv_frame(sock: socket.socket) -> PortWaveformMessage:
    head = _recv_exact(sock, HEADER.size)
    window, wire, port, flags, count = _parse_header(head)
    payload = _recv_exact(sock, 16 * count)
    (crc,) = TRAILER.unpack(_recv_exact(sock, TRAILER.size))
    return _build(window, wire, port, flags, count, payload, crc)


class StreamTracker:
    """Enforces consecutive window indices on every (wire, port) stream."""

    def __init__(self):
        self._last: dict[tuple[int, int], int] = {}

    def check(self, msg: PortWaveformMessage) -> None:
        key = (msg.wire_id, msg.port)
        expected = self._last.get(key, -1) + 1
        if msg.window != expected:
            raise ProtocolError(f"wire {msg.wire_id} port {msg.port}: got window {msg.window}, "
                                f"expected {expected}")
        self._last[key] = msg.window
