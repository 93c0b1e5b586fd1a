"""Tests for raw and quantized payload codecs."""

from __future__ import annotations

import numpy as np

from cdfgnn.domain.ports.messaging import Direction
from cdfgnn.infrastructure.payload_codec import LinearQuantCodec, RawCodec


def test_raw_codec_is_lossless_and_sized_at_full_precision() -> None:
    """Test T·L bytes per row and exact decode."""
    rows = np.random.default_rng(0).standard_normal((3, 4))
    encoded = RawCodec().encode(rows, Direction.FORWARD)

    assert encoded.nbytes == 3 * 4 * 8
    assert np.array_equal(RawCodec().decode(encoded, np.float64), rows)
    assert RawCodec().encode(rows.astype(np.float32), Direction.FORWARD).nbytes == 3 * 4 * 4


def test_quant_codec_uses_direction_specific_widths() -> None:
    """Test that forward and backward payloads are sized with their own B."""
    codec = LinearQuantCodec(bits_forward=8, bits_backward=2)
    rows = np.random.default_rng(1).standard_normal((2, 64)).astype(np.float32)

    forward = codec.encode(rows, Direction.FORWARD)
    backward = codec.encode(rows, Direction.BACKWARD)

    # (8·64 + 2·32) / 8 = 72 байта на строку
    assert forward.nbytes == 2 * 72
    assert backward.nbytes == 2 * 24
    assert codec.bits_for(Direction.BACKWARD) == 2


def test_quant_codec_decode_stays_within_one_step() -> None:
    """Test per-row reconstruction error bound and output dtype."""
    codec = LinearQuantCodec(bits_forward=6, bits_backward=6)
    rows = np.random.default_rng(2).standard_normal((5, 10))

    decoded = codec.decode(codec.encode(rows, Direction.FORWARD), np.float64)

    assert decoded.dtype == np.float64
    steps = (rows.max(axis=1) - rows.min(axis=1)) / 2**6
    assert np.all(np.abs(decoded - rows).max(axis=1) <= steps * (1 + 1e-9))


def test_empty_batch() -> None:
    """Test that a batch without rows costs nothing."""
    encoded = LinearQuantCodec().encode(np.zeros((0, 4)), Direction.FORWARD)

    assert encoded.nbytes == 0
    assert LinearQuantCodec().decode(encoded, np.float64).shape == (0, 4)
