"""BNN <-> SCNN equivalence: chunk m binary values into n = m/M bipolar
streams of length M and back, bit-exactly.

Chunk order is storage order: stream j takes bits jM .. (j+1)M - 1. The
bias stream is the bias bit sign-extended to M clocks (a constant +/-1
stream), so the APC total over the n+1 term streams reproduces the BNN
integer preactivation with the bias weighted by M:

    2*total - (n+1)*M == w.x + M*b
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitstream import Bitstream, Encoding, pack_bits
from .bnn import BinaryNetwork, BinaryVector, binary_dot
from .netcore import Activation
from .scgates import apc_sum, xnor_mult


class ChunkError(ValueError):
    """Chunk length incompatible with the bit budget."""


@dataclass(frozen=True)
class ChunkSpec:
    """Split of m bits into n = m/M streams; M must divide m exactly."""

    m: int
    M: int

    def __post_init__(self):
        if self.m < 1 or self.M < 1:
            raise ChunkError(f"need m >= 1 and M >= 1, got m={self.m}, M={self.M}")
        if self.m % self.M != 0:
            raise ChunkError(f"chunk length M={self.M} does not divide m={self.m}")

    @property
    def n(self) -> int:
        return self.m // self.M


def split_vector(v: BinaryVector, M: int) -> list[Bitstream]:
    """Chunk a binary vector into n bipolar streams of length M."""
    spec = ChunkSpec(v.length, M)
    bits = v.bit_array()
    return [
        Bitstream(pack_bits(bits[j * M : (j + 1) * M]), M, Encoding.BIPOLAR)
        for j in range(spec.n)
    ]


def join_streams(streams: list[Bitstream]) -> BinaryVector:
    """Concatenate equal-length bipolar streams back into a binary vector."""
    if not streams:
        raise ChunkError("cannot join an empty stream list")
    M = streams[0].length
    for idx, s in enumerate(streams):
        if s.length != M:
            raise ChunkError(f"stream {idx} has length {s.length}, expected {M}")
        if s.encoding is not Encoding.BIPOLAR:
            raise ChunkError(f"stream {idx} is {s.encoding.value}, expected bipolar")
    bits = np.concatenate([s.bit_array() for s in streams])
    return BinaryVector(pack_bits(bits), len(streams) * M)


def sign_extension_stream(bias: int, M: int) -> Bitstream:
    """The bias bit repeated for M clocks (a constant +/-1 stream)."""
    if bias not in (-1, 1):
        raise ValueError(f"binary bias must be +1 or -1, got {bias}")
    return Bitstream.constant(1 if bias == 1 else 0, M, Encoding.BIPOLAR)


@dataclass
class ScnnStreamBundle:
    """SCNN-form view of a BNN: per-unit weight streams, sign-extended bias
    streams, and optionally the chunked input streams."""

    M: int
    weight_streams: list[list[Bitstream]]  # N x n
    bias_streams: list[Bitstream]  # N
    output_weights: np.ndarray
    activation: Activation
    input_streams: list[Bitstream] | None = None
    name: str = "scnn-streams"

    @property
    def N(self) -> int:
        return len(self.weight_streams)

    @property
    def n(self) -> int:
        return len(self.weight_streams[0])

    @property
    def m(self) -> int:
        return self.n * self.M


def chunk_network(bnet: BinaryNetwork, M: int) -> ScnnStreamBundle:
    """Chunk every unit's weight bits; sign-extend every bias."""
    ChunkSpec(bnet.m, M)
    return ScnnStreamBundle(
        M=M,
        weight_streams=[split_vector(w, M) for w in bnet.binary_weights],
        bias_streams=[sign_extension_stream(int(b), M) for b in bnet.binary_biases],
        output_weights=bnet.output_weights.copy(),
        activation=bnet.activation,
        name=f"{bnet.name}-M{M}",
    )


def bnn_to_scnn(bnet: BinaryNetwork, x_B: BinaryVector, M: int) -> ScnnStreamBundle:
    """Transform a BNN plus one input vector into SCNN stream form."""
    if x_B.length != bnet.m:
        raise ChunkError(f"input has {x_B.length} bits, network has m={bnet.m}")
    bundle = chunk_network(bnet, M)
    bundle.input_streams = split_vector(x_B, M)
    return bundle


def scnn_to_bnn(bundle: ScnnStreamBundle) -> tuple[BinaryNetwork, BinaryVector | None]:
    """Exact inverse of bnn_to_scnn: concatenate chunks in order.

    Bias streams must be constant (a sign extension); anything else has no
    single-bit preimage.
    """
    biases = []
    for i, b in enumerate(bundle.bias_streams):
        ones = int(np.bitwise_count(b.bits).sum())
        if ones == b.length:
            biases.append(1)
        elif ones == 0:
            biases.append(-1)
        else:
            raise ChunkError(f"bias stream {i} is not a sign extension ({ones}/{b.length} ones)")
    weights = [join_streams(unit) for unit in bundle.weight_streams]
    bnet = BinaryNetwork(
        binary_weights=weights,
        binary_biases=np.array(biases, dtype=int),
        output_weights=bundle.output_weights.copy(),
        activation=bundle.activation,
        name=bundle.name,
    )
    assert bnet.m == bundle.n * bundle.M  # total bit budget is preserved
    x_B = join_streams(bundle.input_streams) if bundle.input_streams else None
    return bnet, x_B


@dataclass(frozen=True)
class UnitEquivalence:
    unit: int
    bnn_preactivation: int  # w.x + b
    sc_total: int  # APC total over the n+1 term streams
    lhs: int  # 2*total - (n+1)*M
    rhs: int  # w.x + M*b
    passed: bool


@dataclass
class EquivalenceReport:
    m: int
    M: int
    n: int
    units: list[UnitEquivalence]

    @property
    def all_passed(self) -> bool:
        return all(u.passed for u in self.units)

    def failures(self) -> list[UnitEquivalence]:
        return [u for u in self.units if not u.passed]


def preactivation_equivalence_check(
    bnet: BinaryNetwork, x_B: BinaryVector, M: int
) -> EquivalenceReport:
    """Verify, unit by unit, that the chunked SC datapath reproduces the
    BNN integer preactivation exactly (bias entering as its sign extension).
    """
    bundle = bnn_to_scnn(bnet, x_B, M)
    spec = ChunkSpec(bnet.m, M)
    units = []
    for i in range(bnet.N):
        products = [
            xnor_mult(w, x) for w, x in zip(bundle.weight_streams[i], bundle.input_streams)
        ]
        trace = apc_sum(products + [bundle.bias_streams[i]])
        wx = binary_dot(bnet.binary_weights[i], x_B)
        b = int(bnet.binary_biases[i])
        lhs = 2 * trace.total - (spec.n + 1) * M
        rhs = wx + M * b
        units.append(
            UnitEquivalence(
                unit=i,
                bnn_preactivation=wx + b,
                sc_total=trace.total,
                lhs=lhs,
                rhs=rhs,
                passed=lhs == rhs,
            )
        )
    return EquivalenceReport(m=bnet.m, M=M, n=spec.n, units=units)
