import socket
import struct
import threading

import crc32c
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtmsim.mtm.protocol import (
    FLAG_WR,
    HEADER,
    MAGIC,
    PortWaveformMessage,
    ProtocolError,
    StreamTracker,
    decode,
    encode,
    recv_frame,
    send_frame,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


def test_layout_is_bit_exact():
    msg = PortWaveformMessage(3, 7, 2, ((1.0, -2.0),), FLAG_WR)
    frame = encode(msg)
    assert frame[:4] == b"MTM1"
    assert struct.unpack(">IIHBBI", frame[:16]) == (MAGIC, 3, 7, 2, FLAG_WR, 1)
    payload = frame[16:32]
    assert payload == struct.pack("<dd", 1.0, -2.0)
    assert frame[32:] == struct.pack(">I", crc32c.crc32c(payload))
    assert HEADER.size == 16


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**16 - 1), st.sampled_from([1, 2]),
       st.lists(st.tuples(finite, finite), max_size=70))
def test_round_trip(window, wire, port, samples):
    msg = PortWaveformMessage(window, wire, port, tuple(samples))
    assert decode(encode(msg)) == msg


def test_corruption_detected():
    frame = bytearray(encode(PortWaveformMessage(0, 0, 1, ((0.5, 0.25),) * 4)))
    frame[20] ^= 0x01
    with pytest.raises(ProtocolError):
        decode(bytes(frame))
    bad = bytearray(encode(PortWaveformMessage(0, 0, 1, ())))
    bad[0] = 0
    with pytest.raises(ProtocolError):
        decode(bytes(bad))
    with pytest.raises(ProtocolError):
        decode(encode(PortWaveformMessage(0, 0, 1, ((1.0, 1.0),)))[:-1])
    with pytest.raises(ProtocolError):
        encode(PortWaveformMessage(0, 0, 3, ()))


def test_tracker_rejects_out_of_order():
    t = StreamTracker()
    t.check(PortWaveformMessage(0, 0, 1, ()))
    t.check(PortWaveformMessage(0, 0, 2, ()))
    t.check(PortWaveformMessage(1, 0, 1, ()))
    with pytest.raises(ProtocolError):
        t.check(PortWaveformMessage(3, 0, 1, ()))
    with pytest.raises(ProtocolError):
        t.check(PortWaveformMessage(0, 0, 2, ()))


def test_tcp_loopback_k64_byte_identical():
    rng = np.random.default_rng(11)
    u, i = rng.normal(size=64), rng.normal(size=64) * 1e-3
    msg = PortWaveformMessage.from_arrays(5, 1, 1, u, i)
    server = socket.create_server(("127.0.0.1", 0))
    got = {}

    def serve():
        conn, _ = server.accept()
        with conn:
            got["msg"] = recv_frame(conn)

    th = threading.Thread(target=serve)
    th.start()
    with socket.create_connection(server.getsockname()) as c:
        send_frame(c, msg)
    th.join(5)
    server.close()
    assert encode(got["msg"]) == encode(msg)
    u2, i2 = got["msg"].arrays()
    assert np.array_equal(u2, u) and np.array_equal(i2, i)


def test_truncated_stream():
    a, b = socket.socketpair()
    a.sendall(encode(PortWaveformMessage(0, 0, 1, ((1.0, 2.0),)))[:10])
    a.close()
    with pytest.raises(ConnectionError):
        recv_frame(b)
    b.close()
