"""Mimic Transmission Method: windowed distributed transient simulation."""

from .protocol import (
    FLAG_HELLO,
    FLAG_WR,
    MAGIC,
    PortWaveformMessage,
    ProtocolError,
    StreamTracker,
    decode,
    encode,
)
from .run import (
    MtmConfig,
    RunStats,
    WindowNoConvergence,
    WrNoConvergence,
    WrSettings,
    make_config,
    predict_counts,
    run_monolithic,
    run_mtm,
    run_mtm_lossy,
    run_wr_baseline,
    stitch,
)
from .transport import InProcessTransport, TcpHub, TransportError, WorkerFailed, exchange
from .worker import Worker, WorkerSpec

__all__ = [
    "FLAG_HELLO", "FLAG_WR", "MAGIC", "PortWaveformMessage", "ProtocolError", "StreamTracker",
    "decode", "encode", "MtmConfig", "RunStats", "WindowNoConvergence", "WrNoConvergence",
    "WrSettings", "make_config", "predict_counts", "run_monolithic", "run_mtm", "run_mtm_lossy",
    "run_wr_baseline", "stitch", "InProcessTransport", "TcpHub", "TransportError", "WorkerFailed",
    "exchange", "Worker", "WorkerSpec",
]
