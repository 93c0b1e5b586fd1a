"""Payload codecs: raw rows or per-vertex linear quantization."""

from __future__ import annotations

import numpy as np

from ..domain.ports.messaging import Direction, EncodedRows
from ..domain.services.quant_codec import (
    dequantize_rows,
    message_size_bytes,
    original_size_bits,
    quantize_rows,
)


def _precision_bits(dtype: np.dtype) -> int:
    return 32 if np.dtype(dtype) == np.float32 else 64


class RawCodec:
    """Sends rows at full precision; T·L bits per vertex."""

    def encode(self, rows: np.ndarray, direction: Direction) -> EncodedRows:
        num_rows, dim = rows.shape
        nbytes = num_rows * original_size_bits(dim, _precision_bits(rows.dtype)) // 8
        return EncodedRows(data=rows.copy(), num_rows=num_rows, dim=dim, nbytes=nbytes)

    def decode(self, encoded: EncodedRows, dtype: np.dtype) -> np.ndarray:
        return np.asarray(encoded.data, dtype=dtype)


class LinearQuantCodec:
    """
    B-bit codes with a (min, max) header per vertex row.

    Forward (Z) and backward (δ) payloads may use different widths.
    """

    def __init__(self, bits_forward: int = 8, bits_backward: int = 8) -> None:
        self._bits = {Direction.FORWARD: bits_forward, Direction.BACKWARD: bits_backward}

    def bits_for(self, direction: Direction) -> int:
        return self._bits[direction]

    def encode(self, rows: np.ndarray, direction: Direction) -> EncodedRows:
        bits = self._bits[direction]
        num_rows, dim = rows.shape
        vectors = quantize_rows(rows, bits)
        nbytes = num_rows * message_size_bytes(dim, bits, _precision_bits(rows.dtype))
        return EncodedRows(data=vectors, num_rows=num_rows, dim=dim, nbytes=nbytes)

    def decode(self, encoded: EncodedRows, dtype: np.dtype) -> np.ndarray:
        return dequantize_rows(encoded.data, encoded.dim, dtype)
