"""Tests for linear quantization and its size model."""

from __future__ import annotations

import numpy as np
import pytest

from cdfgnn.domain.errors import CodeIntegrityError, NonFiniteValueError, UsageError
from cdfgnn.domain.services.quant_codec import (
    QuantizedVector,
    decode_wire,
    dequantize,
    encode_wire,
    message_size_bits,
    message_size_bytes,
    original_size_bits,
    quantize,
    quantize_rows,
)


def test_constant_vector_is_recovered_exactly() -> None:
    """Test that max == min gives all-zero codes and exact recovery."""
    qv = quantize(np.array([5.0, 5.0, 5.0]), 4)

    assert qv.codes.tolist() == [0, 0, 0]
    assert dequantize(qv).tolist() == [5.0, 5.0, 5.0]


def test_two_bit_example_clamps_top_code() -> None:
    """Test the worked two-bit example including the clamp at 2^B - 1."""
    qv = quantize(np.array([0.0, 1.0, 2.0, 3.0]), 2)

    assert qv.codes.tolist() == [0, 1, 3, 3]
    np.testing.assert_allclose(dequantize(qv), [0.0, 0.75, 2.25, 2.25], rtol=0, atol=1e-15)


def test_one_bit_example() -> None:
    """Test that a single bit maps the endpoints to 0 and 1."""
    qv = quantize(np.array([0.0, 1.0]), 1)

    assert qv.codes.tolist() == [0, 1]
    assert dequantize(qv).tolist() == [0.0, 0.5]


def test_reconstruction_error_is_bounded_by_one_step() -> None:
    """Test |m - m̂| <= (max - min) / 2^B over random vectors and bit widths."""
    rng = np.random.default_rng(0)
    for bits in (1, 2, 4, 8, 16):
        for _ in range(50):
            m = rng.standard_normal(int(rng.integers(1, 40))) * 10 ** rng.uniform(-2, 2)
            qv = quantize(m, bits)
            step = (m.max() - m.min()) / 2**bits
            error = np.abs(dequantize(qv) - m).max()
            assert error <= step * (1 + 1e-9) + 1e-12
            assert int(qv.codes.max()) <= 2**bits - 1


@pytest.mark.slow
@pytest.mark.parametrize("bits", [1, 2, 4, 8, 16])
def test_rounded_codes_stay_within_half_step(bits: int) -> None:
    """Test half-step error for rounded codes and one step for codes clamped at the top."""
    rng = np.random.default_rng(bits)
    levels = 2**bits
    for _ in range(10_000):
        m = rng.uniform(-5.0, 5.0, size=16)
        lo, hi = m.min(), m.max()
        step = (hi - lo) / levels
        clamped = np.floor(levels * (m - lo) / (hi - lo) + 0.5) >= levels
        error = np.abs(dequantize(quantize(m, bits)) - m)

        # допуск на округление float64
        slack = 1e-12 * (hi - lo)
        assert np.all(error[~clamped] <= step / 2 + slack)
        assert np.all(error[clamped] <= step + slack)


def test_float32_payload_keeps_32_bit_header() -> None:
    """Test that single precision input is reported with T = 32."""
    qv = quantize(np.array([1.0, 2.0], dtype=np.float32), 8)
    assert qv.precision_bits == 32


def test_message_size_model() -> None:
    """Test B·L + 2T against the uncompressed T·L."""
    assert message_size_bits(64, 8, 32) == 576
    assert original_size_bits(64, 32) == 2048
    # пустой вектор: только заголовок
    assert message_size_bits(0, 8, 32) == 64
    assert message_size_bits(1, 32, 32) == 3 * 32
    assert message_size_bytes(3, 3, 64) == 18


def test_wire_encoding_layout_and_truncation() -> None:
    """Test the packed layout length, decode of the codes and short-buffer detection."""
    rng = np.random.default_rng(1)
    qv = quantize(rng.standard_normal(64), 8)

    data = encode_wire(qv)
    assert len(data) == 1 + 16 + 64

    decoded = decode_wire(data, 64)
    assert decoded.bits == 8
    assert np.array_equal(decoded.codes, qv.codes)
    assert np.array_equal(dequantize(decoded), dequantize(qv))

    with pytest.raises(CodeIntegrityError):
        decode_wire(data[:-1], 64)
    with pytest.raises(CodeIntegrityError):
        decode_wire(b"\x00" + data[1:], 64)


def test_odd_bit_width_packs_across_bytes() -> None:
    """Test a 3-bit code stream whose codes straddle byte boundaries."""
    codes = np.array([7, 0, 5, 2, 1], dtype=np.uint16)
    qv = QuantizedVector(bits=3, min=0.0, max=1.0, codes=codes)

    data = encode_wire(qv)
    assert len(data) == 17 + 2
    assert decode_wire(data, 5).codes.tolist() == [7, 0, 5, 2, 1]


def test_codes_wider_than_bit_width_are_rejected() -> None:
    """Test that an out-of-range code fails both dequantize and encode."""
    qv = QuantizedVector(bits=2, min=0.0, max=1.0, codes=np.array([4], dtype=np.uint16))

    with pytest.raises(CodeIntegrityError):
        dequantize(qv)
    with pytest.raises(CodeIntegrityError):
        encode_wire(qv)


def test_invalid_inputs() -> None:
    """Test bit-width range and non-finite payload checks."""
    with pytest.raises(UsageError):
        quantize(np.array([1.0]), 0)
    with pytest.raises(UsageError):
        quantize(np.array([1.0]), 17)
    with pytest.raises(NonFiniteValueError):
        quantize(np.array([1.0, np.nan]), 8)


def test_quantize_rows_uses_one_header_per_row() -> None:
    """Test that each row keeps its own min and max."""
    rows = np.array([[0.0, 1.0], [10.0, 30.0]])
    vectors = quantize_rows(rows, 4)

    assert [(v.min, v.max) for v in vectors] == [(0.0, 1.0), (10.0, 30.0)]
