"""SC arithmetic gates: AND/XNOR multipliers, MUX scaled addition, and
parallel-counter accumulation, with optional gate-operation counting.

All gates are pure functions of immutable streams. When a `counting()`
context is active, every gate tallies its abstract operation count; the
same tallies are what the closed-form energy model predicts.
"""

from __future__ import annotations

import enum
import math
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .bitstream import (
    Bitstream,
    Encoding,
    StreamKey,
    StreamMismatchError,
    decode,
    pack_bits,
    popcount,
    zero_pad_bits,
)


class AccumulationMode(enum.Enum):
    MUX = "mux"
    APC = "apc"


@dataclass
class GateCounts:
    """Tally of elementary gate operations performed during simulation."""

    xnor_ops: int = 0
    and_ops: int = 0
    mux_select_ops: int = 0
    apc_bit_adds: int = 0

    @property
    def total(self) -> int:
        return self.xnor_ops + self.and_ops + self.mux_select_ops + self.apc_bit_adds

    def as_dict(self) -> dict[str, int]:
        return {
            "xnor_ops": self.xnor_ops,
            "and_ops": self.and_ops,
            "mux_select_ops": self.mux_select_ops,
            "apc_bit_adds": self.apc_bit_adds,
        }


_active_counts: ContextVar[GateCounts | None] = ContextVar("scbnn_gate_counts", default=None)


@contextmanager
def counting() -> Iterator[GateCounts]:
    """Collect gate-operation tallies for everything run inside the block."""
    counts = GateCounts()
    token = _active_counts.set(counts)
    try:
        yield counts
    finally:
        _active_counts.reset(token)


def accumulator_width(input_bits: int) -> int:
    """Register width (bits) of a counter absorbing `input_bits` ones."""
    return math.ceil(math.log2(input_bits + 2))


def _check_pair(a: Bitstream, b: Bitstream, enc: Encoding, gate: str) -> None:
    if a.encoding is not enc or b.encoding is not enc:
        raise StreamMismatchError(
            f"{gate} requires {enc.value} streams, got "
            f"{a.encoding.value} and {b.encoding.value}"
        )
    if a.length != b.length:
        raise StreamMismatchError(
            f"{gate} requires equal lengths, got {a.length} and {b.length}"
        )


def _check_family(streams: Sequence[Bitstream], gate: str) -> tuple[int, Encoding]:
    if not streams:
        raise StreamMismatchError(f"{gate} requires at least one input stream")
    length = streams[0].length
    enc = streams[0].encoding
    for s in streams[1:]:
        if s.length != length or s.encoding is not enc:
            raise StreamMismatchError(
                f"{gate} inputs disagree: expected length {length} / {enc.value}, "
                f"got {s.length} / {s.encoding.value}"
            )
    return length, enc


def and_mult(a: Bitstream, b: Bitstream) -> Bitstream:
    """Unipolar multiply: bitwise AND, decode(out) estimates x*y."""
    _check_pair(a, b, Encoding.UNIPOLAR, "and_mult")
    counts = _active_counts.get()
    if counts is not None:
        counts.and_ops += a.length
    return Bitstream(a.bits & b.bits, a.length, Encoding.UNIPOLAR)


def xnor_mult(a: Bitstream, b: Bitstream) -> Bitstream:
    """Bipolar multiply: bitwise XNOR, decode(out) estimates a*b."""
    _check_pair(a, b, Encoding.BIPOLAR, "xnor_mult")
    counts = _active_counts.get()
    if counts is not None:
        counts.xnor_ops += a.length
    raw = np.bitwise_not(a.bits ^ b.bits)
    return Bitstream(zero_pad_bits(raw, a.length), a.length, Encoding.BIPOLAR)


def mux_add(streams: Sequence[Bitstream], key: StreamKey) -> Bitstream:
    """Scaled addition: each output bit is drawn from a uniformly selected
    input stream, so decode(out) estimates the mean of the inputs.

    A k-input selector is modeled as k-1 binary select cells per clock.
    """
    M, enc = _check_family(streams, "mux_add")
    k = len(streams)
    counts = _active_counts.get()
    if counts is not None:
        counts.mux_select_ops += (k - 1) * M
    if k == 1:
        return streams[0]
    selection = key.generator().integers(0, k, size=M)
    matrix = np.stack([s.bit_array() for s in streams])
    chosen = matrix[selection, np.arange(M)]
    return Bitstream(pack_bits(chosen), M, enc)


@dataclass(frozen=True)
class SumTrace:
    """Accumulated per-clock popcount over `width` parallel streams."""

    total: int
    clocks: int
    width: int
    encoding: Encoding

    def __post_init__(self):
        if not (0 <= self.total <= self.width * self.clocks):
            raise ValueError(
                f"total {self.total} outside [0, {self.width * self.clocks}]"
            )

    def decoded_sum(self) -> float:
        """Exact sum of the decoded input values (single integer quotient)."""
        if self.encoding is Encoding.UNIPOLAR:
            return self.total / self.clocks
        return (2 * self.total - self.width * self.clocks) / self.clocks

    def __str__(self) -> str:
        return f"{self.total}/{self.clocks}/{self.width}"


def apc_sum(streams: Sequence[Bitstream]) -> SumTrace:
    """Parallel-counter accumulation: per-clock popcount summed over all
    clocks. Unlike MUX addition this is exact: the decoded sum equals the
    sum of decoded inputs with no selection noise.

    Counted work: every input bit is added into a register wide enough for
    the full run, i.e. k*M adds through an accumulator_width(k*M) counter.
    """
    M, enc = _check_family(streams, "apc_sum")
    k = len(streams)
    counts = _active_counts.get()
    if counts is not None:
        counts.apc_bit_adds += k * M * accumulator_width(k * M)
    total = sum(popcount(s) for s in streams)
    return SumTrace(total, M, k, enc)


def dot_product_sc(
    w_streams: Sequence[Bitstream],
    x_streams: Sequence[Bitstream],
    b_stream: Bitstream,
    mode: AccumulationMode,
    key: StreamKey,
    scale: float = 1.0,
) -> float:
    """Stochastic preactivation w^T x + b over bipolar streams.

    Pairwise XNOR products are accumulated together with the bias stream
    as the (n+1)-th term. MUX mode rescales the lottery output by n+1;
    APC mode folds the constant bias stream into the counter readout (a
    known constant needs no per-bit adder work). The result is multiplied
    by `scale`, the caller's pre-scaling inversion factor.
    """
    n = len(w_streams)
    if n == 0 or n != len(x_streams):
        raise StreamMismatchError(
            f"dimension mismatch: {n} weight streams vs {len(x_streams)} input streams"
        )
    _check_family(list(w_streams) + list(x_streams) + [b_stream], "dot_product_sc")
    if b_stream.encoding is not Encoding.BIPOLAR:
        raise StreamMismatchError("dot_product_sc operates on bipolar streams")
    products = [xnor_mult(w, x) for w, x in zip(w_streams, x_streams)]
    if mode is AccumulationMode.APC:
        trace = apc_sum(products)
        folded = SumTrace(
            trace.total + popcount(b_stream),
            trace.clocks,
            trace.width + 1,
            trace.encoding,
        )
        return folded.decoded_sum() * scale
    out = mux_add(products + [b_stream], key)
    return decode(out) * (n + 1) * scale
