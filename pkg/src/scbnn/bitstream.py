"""Stochastic number representation: packed fixed-length bitstreams.

A stochastic number is the fraction of ones in an M-bit stream. Unipolar
streams carry values in [0, 1] with P(bit=1) = x; bipolar streams carry
[-1, 1] with P(bit=1) = (x+1)/2. Bit generation is a pure function of a
StreamKey, so every stream is reproducible and independently addressable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

#: Generator family recorded in output metadata. Substream keys are folded
#: into a 128-bit Philox key with a splitmix64 chain; the counter dimension
#: of Philox indexes individual bits.
GENERATOR_FAMILY = "philox4x64-keyfold"

_MASK64 = (1 << 64) - 1
_ROLE_SALT = 0xA076_1D64_78BD_642F
_DERIVE_SALT = 0xE703_7ED1_A0B4_28DB
_KEY2_SALT = 0xD6E8_FEB8_6659_FD93


class EncodingRangeError(ValueError):
    """A raw value falls outside the range an encoding or scale admits."""


class StreamMismatchError(ValueError):
    """Gate or network inputs disagree in length, encoding, or dimension."""


class StreamFormatError(ValueError):
    """A serialized bitstream line is malformed."""


class Encoding(enum.Enum):
    UNIPOLAR = "unipolar"
    BIPOLAR = "bipolar"

    @property
    def value_range(self) -> tuple[float, float]:
        return (0.0, 1.0) if self is Encoding.UNIPOLAR else (-1.0, 1.0)

    @property
    def tag(self) -> str:
        return "u" if self is Encoding.UNIPOLAR else "b"

    @classmethod
    def from_tag(cls, tag: str) -> "Encoding":
        if tag == "u":
            return cls.UNIPOLAR
        if tag == "b":
            return cls.BIPOLAR
        raise StreamFormatError(f"unknown encoding tag {tag!r} (expected 'u' or 'b')")


def _splitmix64(z: int) -> int:
    z = (z + 0x9E37_79B9_7F4A_7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & _MASK64
    return z ^ (z >> 31)


def _fold(state: int, value: int) -> int:
    return _splitmix64(state ^ (value & _MASK64))


_role_hash_cache: dict[str, int] = {}


def _role_hash(role: str) -> int:
    h = _role_hash_cache.get(role)
    if h is None:
        h = _ROLE_SALT
        for byte in role.encode("utf-8"):
            h = _fold(h, byte)
        _role_hash_cache[role] = h
    return h


@dataclass(frozen=True)
class StreamKey:
    """Deterministic substream identity: master seed plus (role, i, j).

    Distinct identities map to distinct Philox keys, giving statistically
    independent bit sequences; the same identity always reproduces the
    identical stream.
    """

    seed: int
    role: str = "master"
    i: int = 0
    j: int = 0

    def substream(self, role: str, i: int = 0, j: int = 0) -> "StreamKey":
        """Key for a named substream under the same master seed."""
        return StreamKey(self.seed, role, i, j)

    def derive(self, *indices: int) -> "StreamKey":
        """Fold indices into a fresh master key (for trials, grid points...)."""
        h = _fold(self.seed & _MASK64, _DERIVE_SALT)
        h = _fold(h, _role_hash(self.role))
        h = _fold(h, self.i)
        h = _fold(h, self.j)
        for idx in indices:
            h = _fold(h, idx)
        return StreamKey(h)

    def _philox_key(self) -> np.ndarray:
        k0 = _fold(self.seed & _MASK64, _role_hash(self.role))
        k0 = _fold(_fold(k0, self.i), self.j)
        k1 = _fold(k0, _KEY2_SALT)
        return np.array([k0, k1], dtype=np.uint64)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self._philox_key()))


# ---------------------------------------------------------------------------
# Packed bit storage (big-endian bit order, pad bits forced to zero)

def pack_bits(bits) -> np.ndarray:
    """Pack a 0/1 sequence into bytes, bit 0 in the MSB of byte 0."""
    return np.packbits(np.asarray(bits, dtype=np.uint8))


def unpack_bits(packed: np.ndarray, length: int) -> np.ndarray:
    """Unpack to a uint8 array of exactly `length` bits."""
    return np.unpackbits(packed, count=length)


def zero_pad_bits(packed: np.ndarray, length: int) -> np.ndarray:
    """Force the pad bits after `length` in the last byte to zero."""
    out = packed.copy()
    tail = length % 8
    if tail and out.size:
        out[-1] &= (0xFF << (8 - tail)) & 0xFF
    return out


@dataclass(frozen=True, eq=False)
class Bitstream:
    """Immutable M-bit stream with an encoding tag.

    `bits` is the packed byte array; pad bits in the final byte are zero,
    so popcounts over the packed words are exact.
    """

    bits: np.ndarray
    length: int
    encoding: Encoding

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"stream length must be >= 1, got {self.length}")
        expected = (self.length + 7) // 8
        if self.bits.shape != (expected,):
            raise ValueError(
                f"packed storage has {self.bits.shape[0]} bytes, "
                f"expected {expected} for length {self.length}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bitstream):
            return NotImplemented
        return (
            self.length == other.length
            and self.encoding is other.encoding
            and np.array_equal(self.bits, other.bits)
        )

    def bit_array(self) -> np.ndarray:
        return unpack_bits(self.bits, self.length)

    @classmethod
    def from_bits(cls, bits, encoding: Encoding) -> "Bitstream":
        """Build from a '0101...' string or a 0/1 sequence."""
        if isinstance(bits, str):
            bits = [int(c) for c in bits]
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1 or not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must be a flat sequence of 0s and 1s")
        return cls(pack_bits(arr), int(arr.size), encoding)

    @classmethod
    def constant(cls, bit: int, length: int, encoding: Encoding) -> "Bitstream":
        if bit not in (0, 1):
            raise ValueError(f"constant bit must be 0 or 1, got {bit}")
        nbytes = (length + 7) // 8
        if bit:
            packed = zero_pad_bits(np.full(nbytes, 0xFF, dtype=np.uint8), length)
        else:
            packed = np.zeros(nbytes, dtype=np.uint8)
        return cls(packed, length, encoding)


def sng_encode(x: float, M: int, enc: Encoding, key: StreamKey) -> Bitstream:
    """Encode a real value as M independent Bernoulli bits under `key`.

    P(bit=1) is x for unipolar and (x+1)/2 for bipolar. Boundary values
    give deterministic all-ones / all-zeros streams.
    """
    if M < 1:
        raise ValueError(f"stream length M must be >= 1, got {M}")
    lo, hi = enc.value_range
    if not (lo <= x <= hi):
        raise EncodingRangeError(
            f"value {x!r} outside {enc.value} range [{lo}, {hi}]"
        )
    p = x if enc is Encoding.UNIPOLAR else (x + 1.0) / 2.0
    draws = key.generator().random(M)
    return Bitstream(pack_bits(draws < p), M, enc)


def popcount(s: Bitstream) -> int:
    """Exact count of 1-bits."""
    return int(np.bitwise_count(s.bits).sum())


def decode(s: Bitstream) -> float:
    """Value of a stream: ones/M (unipolar) or (2*ones - M)/M (bipolar).

    Computed as a single exact integer quotient, so e.g. a bipolar stream
    with 7 ones out of 10 decodes to exactly 0.4.
    """
    ones = popcount(s)
    if s.encoding is Encoding.UNIPOLAR:
        return ones / s.length
    return (2 * ones - s.length) / s.length


def concat(a: Bitstream, b: Bitstream) -> Bitstream:
    if a.encoding is not b.encoding:
        raise StreamMismatchError(
            f"cannot concatenate {a.encoding.value} and {b.encoding.value} streams"
        )
    bits = np.concatenate([a.bit_array(), b.bit_array()])
    return Bitstream(pack_bits(bits), a.length + b.length, a.encoding)


# ---------------------------------------------------------------------------
# Pre-scaling

@dataclass(frozen=True)
class PreScaler:
    """Per-role scale mapping raw values into the encoding range."""

    scale: float
    applied_to: str

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be a positive finite real, got {self.scale!r}")


def prescale(v: float, p: PreScaler) -> float:
    if abs(v) > p.scale:
        raise EncodingRangeError(
            f"|{v!r}| exceeds the {p.applied_to} pre-scale factor {p.scale!r}"
        )
    return v / p.scale


def postscale(v: float, p: PreScaler) -> float:
    return v * p.scale


def pow2_scale(bound: float) -> float:
    """Smallest power of two >= max(1, bound).

    Power-of-two scales make prescale/postscale an exact round trip
    (pure exponent shifts, no rounding).
    """
    b = max(1.0, float(bound))
    frac, exp = math.frexp(b)
    if frac == 0.5:  # already a power of two
        exp -= 1
    return math.ldexp(1.0, exp)


def network_prescalers(weights, biases, input_bound: float = 1.0) -> dict[str, PreScaler]:
    """Per-role scales for a network whose inputs live in the unit cube.

    The bias scale is the product of the weight and input scales so the
    accumulated dot-product terms share one inversion factor; the weight
    scale is raised if needed so biases still fit.
    """
    w = np.asarray(weights, dtype=float)
    b = np.asarray(biases, dtype=float)
    s_x = pow2_scale(input_bound)
    w_bound = float(np.abs(w).max()) if w.size else 1.0
    b_bound = float(np.abs(b).max()) if b.size else 1.0
    s_w = pow2_scale(max(w_bound, b_bound / s_x))
    return {
        "weights": PreScaler(s_w, "weights"),
        "inputs": PreScaler(s_x, "inputs"),
        "bias": PreScaler(s_w * s_x, "bias"),
    }


# ---------------------------------------------------------------------------
# Hex-line serialization: M:<len>;enc:<u|b>;<hex>

def to_hex_line(s: Bitstream) -> str:
    return f"M:{s.length};enc:{s.encoding.tag};{s.bits.tobytes().hex()}"


def from_hex_line(line: str) -> Bitstream:
    parts = line.strip().split(";")
    if len(parts) != 3 or not parts[0].startswith("M:") or not parts[1].startswith("enc:"):
        raise StreamFormatError(f"malformed bitstream line {line!r}")
    try:
        length = int(parts[0][2:])
    except ValueError:
        raise StreamFormatError(f"bad length field in {line!r}") from None
    enc = Encoding.from_tag(parts[1][4:])
    try:
        raw = bytes.fromhex(parts[2])
    except ValueError:
        raise StreamFormatError(f"bad hex payload in {line!r}") from None
    packed = np.frombuffer(raw, dtype=np.uint8)
    if length < 1 or packed.size != (length + 7) // 8:
        raise StreamFormatError(
            f"payload has {packed.size} bytes, inconsistent with M={length}"
        )
    if not np.array_equal(packed, zero_pad_bits(packed, length)):
        raise StreamFormatError(f"nonzero pad bits in {line!r}")
    return Bitstream(packed.copy(), length, enc)
