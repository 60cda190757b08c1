"""Public init."""

from .cascade import cascade_compress, cascade_decompress
from .event_io import read_events, read_packets, write_events, write_packets
from .flow_provider_manager import get_flow_provider
from .metrics import FidelityReport, MetricParams, MetricsReport, evaluate, measure_fidelity
from .model import CodecConfig, Event, EventStream, FBCError, FlowEvent, Polarity
from .pipeline import Codec, simulate
from .receiver import predict_events, reconstruct, rx_predict_batch
from .synth import generate, generate_random_events
from .transmitter import Transmitter, tx_process_event
from .wire import decode_packets, encode_packets

__all__ = [
    "Codec",
    "CodecConfig",
    "Event",
    "EventStream",
    "FBCError",
    "FidelityReport",
    "FlowEvent",
    "MetricParams",
    "MetricsReport",
    "Polarity",
    "Transmitter",
    "cascade_compress",
    "cascade_decompress",
    "decode_packets",
    "encode_packets",
    "evaluate",
    "generate",
    "generate_random_events",
    "get_flow_provider",
    "measure_fidelity",
    "predict_events",
    "read_events",
    "read_packets",
    "reconstruct",
    "rx_predict_batch",
    "simulate",
    "tx_process_event",
    "write_events",
    "write_packets",
]

# version is a human-readable version number.

# version_info is a four-tuple for programmatic comparison. The first
# three numbers are the components of the version number. The fourth
# is zero for an official release, positive for a development branch,
# or negative for a release candidate or beta (after the base version
# number has been incremented)
__version__ = "0.1.0"
version_info = (
    int(__version__.split(".")[0]),
    int(__version__.split(".")[1]),
    int(__version__.split(".")[2]),
    0,
)
