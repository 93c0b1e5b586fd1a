"""B-bit linear quantization of vertex payloads and the message-size model."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import CodeIntegrityError, NonFiniteValueError, UsageError

MIN_BITS = 1
MAX_BITS = 16

_HEADER_FORMATS = {32: "<ff", 64: "<dd"}


@dataclass(frozen=True, slots=True)
class QuantizedVector:
    """
    One quantized vector.

    `codes` is kept unpacked (uint16) in memory; `encode_wire` bit-packs it.
    """

    bits: int
    min: float
    max: float
    codes: np.ndarray
    precision_bits: int = 64

    @property
    def length(self) -> int:
        return int(self.codes.shape[0])


def _check_bits(bits: int) -> None:
    if not MIN_BITS <= bits <= MAX_BITS:
        raise UsageError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")


def quantize(m: np.ndarray, bits: int) -> QuantizedVector:
    """
    Linearly quantize a vector to `bits`-bit codes.

    q_i = floor(2^B (m_i - min) / (max - min) + 0.5), clamped to 2^B - 1.

    Args:
        m: 1-D real vector
        bits: Code width B in [1, 16]

    Returns:
        QuantizedVector with min/max kept at the input precision

    Raises:
        UsageError: If bits is out of range
        NonFiniteValueError: If m contains NaN or infinity
    """
    _check_bits(bits)
    m = np.asarray(m)
    precision_bits = 32 if m.dtype == np.float32 else 64
    if m.size == 0:
        return QuantizedVector(bits, 0.0, 0.0, np.zeros(0, dtype=np.uint16), precision_bits)
    if not np.all(np.isfinite(m)):
        raise NonFiniteValueError("cannot quantize a non-finite payload")

    values = m.astype(np.float64)
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return QuantizedVector(
            bits, lo, hi, np.zeros(values.shape[0], dtype=np.uint16), precision_bits
        )
    levels = float(1 << bits)
    raw = np.floor(levels * (values - lo) / (hi - lo) + 0.5)
    codes = np.minimum(raw, levels - 1).astype(np.uint16)
    return QuantizedVector(bits, lo, hi, codes, precision_bits)


def dequantize(qv: QuantizedVector) -> np.ndarray:
    """
    Restore a vector: m_i = (max - min) / 2^B * q_i + min.

    Returns:
        float64 vector; exactly `min` everywhere when max == min

    Raises:
        CodeIntegrityError: If a code does not fit in B bits
    """
    levels = 1 << qv.bits
    if qv.codes.size and int(qv.codes.max()) >= levels:
        raise CodeIntegrityError(
            "quantized code exceeds bit width", bits=qv.bits, code=int(qv.codes.max())
        )
    if qv.max == qv.min:
        return np.full(qv.length, qv.min, dtype=np.float64)
    step = (qv.max - qv.min) / levels
    return step * qv.codes.astype(np.float64) + qv.min


def quantize_rows(rows: np.ndarray, bits: int) -> list[QuantizedVector]:
    """Quantize each row of a matrix independently (one header per vertex)."""
    return [quantize(row, bits) for row in rows]


def dequantize_rows(vectors: list[QuantizedVector], dim: int, dtype: np.dtype) -> np.ndarray:
    out = np.empty((len(vectors), dim), dtype=dtype)
    for idx, qv in enumerate(vectors):
        out[idx] = dequantize(qv)
    return out


def message_size_bits(length: int, bits: int, precision_bits: int) -> int:
    """Quantized payload size B·L + 2T."""
    return bits * length + 2 * precision_bits


def original_size_bits(length: int, precision_bits: int) -> int:
    """Unquantized payload size T·L."""
    return precision_bits * length


def message_size_bytes(length: int, bits: int, precision_bits: int) -> int:
    return math.ceil(message_size_bits(length, bits, precision_bits) / 8)


def encode_wire(qv: QuantizedVector) -> bytes:
    """
    Serialize as [u8 B][T-bit min][T-bit max][codes packed LSB-first].

    Raises:
        CodeIntegrityError: If a code does not fit in B bits
    """
    if qv.codes.size and int(qv.codes.max()) >= (1 << qv.bits):
        raise CodeIntegrityError("quantized code exceeds bit width", bits=qv.bits)
    header = struct.pack("<B", qv.bits) + struct.pack(
        _HEADER_FORMATS[qv.precision_bits], qv.min, qv.max
    )
    shifts = np.arange(qv.bits, dtype=np.uint16)
    bit_matrix = ((qv.codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    packed = np.packbits(bit_matrix.ravel(), bitorder="little")
    return header + packed.tobytes()


def decode_wire(data: bytes, length: int, precision_bits: int = 64) -> QuantizedVector:
    """
    Parse bytes produced by `encode_wire`.

    Args:
        data: Wire bytes
        length: Number of codes L (not stored on the wire)
        precision_bits: Header precision T (32 or 64)

    Raises:
        CodeIntegrityError: On a bad bit width or a short buffer
    """
    fmt = _HEADER_FORMATS[precision_bits]
    head = 1 + struct.calcsize(fmt)
    if len(data) < head:
        raise CodeIntegrityError("wire buffer shorter than header", size=len(data))
    bits = data[0]
    if not MIN_BITS <= bits <= MAX_BITS:
        raise CodeIntegrityError("invalid bit width on wire", bits=bits)
    lo, hi = struct.unpack(fmt, data[1:head])
    needed = math.ceil(bits * length / 8)
    body = np.frombuffer(data, dtype=np.uint8, offset=head)
    if body.shape[0] < needed:
        raise CodeIntegrityError("wire buffer truncated", expected=needed, size=body.shape[0])
    flat = np.unpackbits(body[:needed], bitorder="little")[: bits * length]
    weights = (1 << np.arange(bits, dtype=np.uint32)).astype(np.uint32)
    codes = (flat.reshape(length, bits).astype(np.uint32) * weights).sum(axis=1)
    return QuantizedVector(bits, float(lo), float(hi), codes.astype(np.uint16), precision_bits)
