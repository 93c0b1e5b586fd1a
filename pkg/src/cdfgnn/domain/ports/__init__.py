from .messaging import (
    Direction,
    EncodedRows,
    MessageKind,
    PayloadCodecProtocol,
    SyncMessage,
    TransportProtocol,
)

__all__ = [
    "Direction",
    "EncodedRows",
    "MessageKind",
    "PayloadCodecProtocol",
    "SyncMessage",
    "TransportProtocol",
]
