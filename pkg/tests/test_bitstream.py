import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scbnn import (
    Bitstream,
    Encoding,
    EncodingRangeError,
    PreScaler,
    StreamFormatError,
    StreamKey,
    concat,
    decode,
    from_hex_line,
    popcount,
    postscale,
    prescale,
    sng_encode,
    to_hex_line,
)
from scbnn.bitstream import network_prescalers, pow2_scale

KEY = StreamKey(0xC0FFEE)


class TestDecode:
    def test_worked_example_unipolar(self):
        s = Bitstream.from_bits("0100110100", Encoding.UNIPOLAR)
        assert decode(s) == 0.4

    def test_worked_example_bipolar(self):
        s = Bitstream.from_bits("1011011101", Encoding.BIPOLAR)
        assert decode(s) == 0.4

    def test_all_zeros_bipolar_is_minus_one(self):
        for M in (1, 7, 64, 129):
            assert decode(Bitstream.constant(0, M, Encoding.BIPOLAR)) == -1.0

    @given(st.integers(1, 300), st.data())
    @settings(max_examples=60)
    def test_range_closure(self, M, data):
        ones = data.draw(st.integers(0, M))
        bits = [1] * ones + [0] * (M - ones)
        for enc in Encoding:
            v = decode(Bitstream.from_bits(bits, enc))
            lo, hi = enc.value_range
            assert lo <= v <= hi


class TestSngEncode:
    def test_boundary_bipolar_one_is_all_ones(self):
        for M in (1, 10, 100):
            for seed in (0, 1, 99):
                s = sng_encode(1.0, M, Encoding.BIPOLAR, StreamKey(seed))
                assert popcount(s) == M

    def test_boundary_unipolar_zero_is_all_zeros(self):
        s = sng_encode(0.0, 50, Encoding.UNIPOLAR, KEY)
        assert popcount(s) == 0

    def test_expected_ones_count(self):
        # x=0.4 unipolar: ones-count is Binomial(M, 0.4); mean over many keys
        # concentrates on 4 for M=10
        counts = [
            popcount(sng_encode(0.4, 10, Encoding.UNIPOLAR, KEY.substream("t", t)))
            for t in range(2000)
        ]
        se = math.sqrt(10 * 0.4 * 0.6 / 2000)
        assert abs(np.mean(counts) - 4.0) < 4 * se

    def test_binomial_concentration_large_M(self):
        # Binomial(10000, 0.5): ones within 3*sqrt(M/4) of 5000
        s = sng_encode(0.5, 10000, Encoding.UNIPOLAR, StreamKey(31337))
        assert abs(popcount(s) - 5000) <= 3 * math.sqrt(10000 * 0.25)

    def test_range_error_names_value_and_encoding(self):
        with pytest.raises(EncodingRangeError, match="1.5.*unipolar"):
            sng_encode(1.5, 10, Encoding.UNIPOLAR, KEY)
        with pytest.raises(EncodingRangeError, match="-0.1"):
            sng_encode(-0.1, 10, Encoding.UNIPOLAR, KEY)
        with pytest.raises(EncodingRangeError):
            sng_encode(-1.2, 10, Encoding.BIPOLAR, KEY)

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            sng_encode(0.5, 0, Encoding.UNIPOLAR, KEY)

    def test_determinism(self):
        a = sng_encode(0.3, 777, Encoding.BIPOLAR, KEY.substream("weights", 3, 4))
        b = sng_encode(0.3, 777, Encoding.BIPOLAR, KEY.substream("weights", 3, 4))
        assert a == b

    def test_determinism_across_threads(self):
        def job(_):
            return sng_encode(0.3, 999, Encoding.BIPOLAR, KEY.substream("w", 1, 2))

        with ThreadPoolExecutor(max_workers=4) as pool:
            streams = list(pool.map(job, range(16)))
        assert all(s == streams[0] for s in streams)

    def test_distinct_substreams_differ(self):
        a = sng_encode(0.5, 512, Encoding.UNIPOLAR, KEY.substream("weights", 0, 0))
        b = sng_encode(0.5, 512, Encoding.UNIPOLAR, KEY.substream("weights", 0, 1))
        c = sng_encode(0.5, 512, Encoding.UNIPOLAR, KEY.substream("inputs", 0, 0))
        assert a != b and a != c and b != c

    def test_substreams_uncorrelated(self):
        a = sng_encode(0.5, 4096, Encoding.UNIPOLAR, KEY.substream("a")).bit_array()
        b = sng_encode(0.5, 4096, Encoding.UNIPOLAR, KEY.substream("b")).bit_array()
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.06  # ~4/sqrt(4096)

    def test_unbiasedness(self):
        x = 0.37
        vals = [
            decode(sng_encode(x, 256, Encoding.BIPOLAR, KEY.substream("u", t)))
            for t in range(3000)
        ]
        se = 1.0 / (2 * math.sqrt(256)) / math.sqrt(3000)
        assert abs(np.mean(vals) - x) < 4 * se

    def test_variance_bound(self):
        vals = np.array(
            [
                decode(sng_encode(0.5, 400, Encoding.UNIPOLAR, KEY.substream("v", t)))
                for t in range(4000)
            ]
        )
        assert vals.var() <= 1.1 / (4 * 400)


class TestPopcount:
    def test_worked_example_count(self):
        assert popcount(Bitstream.from_bits("0100110100", Encoding.UNIPOLAR)) == 4

    def test_word_boundary(self):
        assert popcount(Bitstream.constant(1, 65, Encoding.UNIPOLAR)) == 65

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=70),
           st.lists(st.integers(0, 1), min_size=1, max_size=70))
    @settings(max_examples=60)
    def test_concat_additivity(self, b1, b2):
        s1 = Bitstream.from_bits(b1, Encoding.UNIPOLAR)
        s2 = Bitstream.from_bits(b2, Encoding.UNIPOLAR)
        assert popcount(concat(s1, s2)) == popcount(s1) + popcount(s2)


class TestPreScaler:
    def test_round_trip_example(self):
        p = PreScaler(4.0, "weights")
        assert prescale(3.2, p) == 0.8
        assert postscale(prescale(3.2, p), p) == 3.2

    def test_zero_fixed_point(self):
        assert prescale(0.0, PreScaler(7.5, "bias")) == 0.0

    def test_boundary_admitted(self):
        assert prescale(-4.0, PreScaler(4.0, "weights")) == -1.0

    def test_out_of_range(self):
        with pytest.raises(EncodingRangeError, match="weights"):
            prescale(4.1, PreScaler(4.0, "weights"))

    @given(
        st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False),
        st.integers(0, 20),
    )
    @settings(max_examples=200)
    def test_pow2_round_trip_exact(self, v, k):
        scale = float(2**k)
        if abs(v) > scale or (v != 0 and abs(v) < 1e-280):
            return  # quotient must stay in the normal float range
        p = PreScaler(scale, "weights")
        assert postscale(prescale(v, p), p) == v

    def test_pow2_scale(self):
        assert pow2_scale(0.3) == 1.0
        assert pow2_scale(1.0) == 1.0
        assert pow2_scale(3.9) == 4.0
        assert pow2_scale(4.0) == 4.0
        assert pow2_scale(4.001) == 8.0

    def test_network_prescalers_cover_all_values(self):
        W = np.array([[3.7, -2.0], [0.5, 1.0]])
        b = np.array([5.5, -0.25])
        scalers = network_prescalers(W, b)
        assert scalers["inputs"].scale == 1.0
        assert scalers["weights"].scale >= np.abs(W).max()
        assert scalers["bias"].scale >= np.abs(b).max()
        assert scalers["bias"].scale == scalers["weights"].scale * scalers["inputs"].scale


class TestHexLine:
    def test_format(self):
        s = Bitstream.from_bits("0100110100", Encoding.UNIPOLAR)
        assert to_hex_line(s) == "M:10;enc:u;4d00"

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=130), st.sampled_from(list(Encoding)))
    @settings(max_examples=80)
    def test_round_trip(self, bits, enc):
        s = Bitstream.from_bits(bits, enc)
        assert from_hex_line(to_hex_line(s)) == s

    @pytest.mark.parametrize(
        "line",
        [
            "M:10;enc:u",
            "length:10;enc:u;4d00",
            "M:ten;enc:u;4d00",
            "M:10;enc:x;4d00",
            "M:10;enc:u;4d0",
            "M:10;enc:u;4d0000",
            "M:10;enc:u;4d01",  # nonzero pad bits
        ],
    )
    def test_malformed(self, line):
        with pytest.raises(StreamFormatError):
            from_hex_line(line)


class TestStreamKey:
    def test_derive_changes_master(self):
        k = StreamKey(1)
        assert k.derive(0) != k.derive(1)
        assert k.derive(2, 3) != k.derive(3, 2)

    def test_derive_deterministic(self):
        assert StreamKey(5).derive(1, 2, 3) == StreamKey(5).derive(1, 2, 3)

    def test_exact_rational_decode_semantics(self):
        # decode is a single integer quotient: matches Fraction exactly
        for bits in ("10110", "0011001", "1" * 13):
            s = Bitstream.from_bits(bits, Encoding.BIPOLAR)
            ones = popcount(s)
            assert decode(s) == float(Fraction(2 * ones - s.length, s.length))
