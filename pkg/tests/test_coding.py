import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactquant.coding import (
    BitBuffer,
    decode_messages,
    elias_gamma_decode,
    elias_gamma_encode,
    encode_messages,
    gamma_length,
    gamma_lengths_array,
    measure_bits,
    unzigzag,
    zigzag,
)
from exactquant.distributions import gaussian, min_step


def test_zigzag_small_values():
    assert zigzag(0) == 1
    assert zigzag(-1) == 2
    assert zigzag(1) == 3
    assert zigzag(-2) == 4


def test_zigzag_round_trip_exhaustive():
    ms = np.arange(-10**6, 10**6 + 1)
    ks = np.where(ms >= 0, 2 * ms + 1, -2 * ms)
    back = np.where(ks % 2 == 1, (ks - 1) // 2, -(ks // 2))
    assert np.array_equal(back, ms)
    assert ks.min() == 1 and len(np.unique(ks)) == len(ks)


def test_zigzag_overflow_guard():
    with pytest.raises(OverflowError):
        zigzag(1 << 62)


@given(st.integers(min_value=-(2**61), max_value=2**61))
def test_zigzag_round_trip_property(m):
    assert unzigzag(zigzag(m)) == m


def test_gamma_canonical_codes():
    assert str(elias_gamma_encode(1)) == "1"
    assert str(elias_gamma_encode(5)) == "00101"
    assert elias_gamma_encode(1).length == 1
    assert elias_gamma_encode(5).length == 5


def test_gamma_round_trip_exhaustive():
    buf = BitBuffer()
    ks = range(1, 10**4 + 1)
    for k in ks:
        elias_gamma_encode(k, buf)
    bits = buf.bits
    pos = 0
    for k in ks:
        decoded, pos = elias_gamma_decode(bits, pos)
        assert decoded == k
    assert pos == buf.length


@given(st.integers(min_value=1, max_value=2**50))
@settings(max_examples=200)
def test_gamma_round_trip_property(k):
    buf = elias_gamma_encode(k)
    decoded, pos = elias_gamma_decode(buf.bits)
    assert decoded == k and pos == buf.length == gamma_length(k)


def test_gamma_length_formula():
    for k in [1, 2, 3, 4, 7, 8, 1023, 1024, 10**6]:
        assert gamma_length(k) == 2 * int(math.floor(math.log2(k))) + 1
        assert elias_gamma_encode(k).length == gamma_length(k)


def test_gamma_lengths_array_matches_scalar():
    ms = np.array([0, 1, -1, 5, -7, 1000, -99999])
    expect = [gamma_length(zigzag(int(m))) for m in ms]
    assert np.array_equal(gamma_lengths_array(ms), expect)


def test_gamma_length_monotone_in_magnitude():
    ms = np.arange(0, 5000)
    lens_pos = gamma_lengths_array(ms)
    assert np.all(np.diff(lens_pos) >= 0)


def test_message_stream_round_trip():
    msgs = np.array([0, -3, 17, 2, -2048, 4095])
    buf = encode_messages(msgs)
    assert np.array_equal(decode_messages(buf.bits, len(msgs)), msgs)


def test_bitbuffer_bytes_msb_first_zero_padded():
    buf = BitBuffer()
    buf.extend([1, 0, 1])  # 0b1010_0000
    assert buf.to_bytes() == bytes([0xA0])
    back = BitBuffer.from_bytes(buf.to_bytes(), 3)
    assert back.bits == (1, 0, 1)
    buf2 = encode_messages([5, -1])
    rt = BitBuffer.from_bytes(buf2.to_bytes(), buf2.length)
    assert np.array_equal(decode_messages(rt.bits, 2), [5, -1])


def test_measure_bits_variable_all_zero():
    msgs = np.zeros((4, 10), dtype=np.int64)
    bits = measure_bits(msgs, "variable")
    assert np.array_equal(bits, np.full(4, 10.0))  # gamma("1") per coordinate


def test_measure_bits_fixed_mode():
    f = gaussian(1.0)
    eta = min_step(f)
    bits = measure_bits(np.zeros((3, 5), dtype=int), "fixed", eta=eta,
                        t=2.0 * eta)
    assert np.array_equal(bits, np.full(3, 10.0))  # 2 bits per coordinate


def test_measure_bits_fixed_requires_eta_and_t():
    with pytest.raises(ValueError):
        measure_bits(np.zeros((2, 2), dtype=int), "fixed")
    with pytest.raises(ValueError):
        measure_bits(np.zeros((2, 2), dtype=int), "nope")
