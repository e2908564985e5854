import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scae.errors import DecodeError
from scae.rangecoder import RangeEncoder, decode_symbols, encode_symbols


def make_table(pmf, precision=16):
    p = np.asarray(pmf, dtype=np.float64)
    p = p / p.sum()
    total = 1 << precision
    scaled = np.floor(p * (total - len(p))).astype(np.int64) + 1
    scaled[0] += total - scaled.sum()
    return np.concatenate([[0], np.cumsum(scaled)])


def test_empty_stream_is_fixed_terminator():
    enc = RangeEncoder()
    data = enc.finish()
    assert data == bytes(5)
    enc2 = RangeEncoder()
    assert enc2.finish() == data


def test_single_symbol_roundtrip():
    cum = make_table([1, 1, 1, 1])
    data = encode_symbols([2], [0], [cum])
    assert decode_symbols(data, 1, [0], [cum]) == [2]


def test_roundtrip_randomized_bulk():
    """10^4 randomized encode/decode trials, exact recovery each time."""
    rng = np.random.default_rng(2024)
    for trial in range(10_000):
        S = int(rng.integers(2, 30))
        n = int(rng.integers(0, 24))
        cum = make_table(rng.random(S) + 1e-6)
        syms = rng.integers(0, S, n).tolist()
        data = encode_symbols(syms, [0] * n, [cum])
        assert decode_symbols(data, n, [0] * n, [cum]) == syms


def test_roundtrip_multiple_tables():
    rng = np.random.default_rng(7)
    tables = [make_table(rng.random(8) + 0.01) for _ in range(3)]
    ids = rng.integers(0, 3, 500).tolist()
    syms = [int(rng.integers(0, 8)) for _ in ids]
    data = encode_symbols(syms, ids, tables)
    assert decode_symbols(data, 500, ids, tables) == syms


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=7), max_size=200),
       st.integers(min_value=0, max_value=2**31 - 1))
def test_roundtrip_property(symbols, seed):
    cum = make_table(np.random.default_rng(seed).random(8) + 1e-3)
    data = encode_symbols(symbols, [0] * len(symbols), [cum])
    assert decode_symbols(data, len(symbols), [0] * len(symbols), [cum]) == symbols


def test_length_bound_flat_model():
    # 10^4 symbols from a flat 8-symbol model: ideal is 3 bits each
    rng = np.random.default_rng(11)
    cum = np.arange(9) * 8192
    syms = rng.integers(0, 8, 10_000).tolist()
    data = encode_symbols(syms, [0] * len(syms), [cum])
    ideal_bits = 3 * len(syms)
    assert len(data) * 8 <= ideal_bits * 1.02 + 64


def test_length_bound_skewed_model():
    rng = np.random.default_rng(12)
    p = np.array([0.85] + [0.15 / 15] * 15)
    cum = make_table(p)
    syms = rng.choice(16, size=20_000, p=p).tolist()
    data = encode_symbols(syms, [0] * len(syms), [cum])
    ideal_bits = float(-np.sum(np.log2(p[syms])))
    assert len(data) * 8 <= ideal_bits * 1.02 + 64


def test_truncated_stream_raises():
    cum = make_table([1] * 8)
    rng = np.random.default_rng(13)
    syms = rng.integers(0, 8, 200).tolist()
    data = encode_symbols(syms, [0] * 200, [cum])
    with pytest.raises(DecodeError):
        decode_symbols(data[:4], 200, [0] * 200, [cum])


def test_corruption_changes_output_or_raises():
    # without a checksum the coder can only promise it never silently
    # returns the original symbols for a damaged payload
    cum = make_table([3, 1, 1, 1, 2])
    rng = np.random.default_rng(14)
    syms = rng.integers(0, 5, 400).tolist()
    data = bytearray(encode_symbols(syms, [0] * 400, [cum]))
    mismatches = 0
    for pos in range(6, min(len(data), 30)):
        corrupt = bytes(data[:pos]) + bytes([data[pos] ^ 0x40]) + bytes(data[pos + 1 :])
        try:
            out = decode_symbols(corrupt, 400, [0] * 400, [cum])
            if out != syms:
                mismatches += 1
        except DecodeError:
            mismatches += 1
    assert mismatches == min(len(data), 30) - 6
