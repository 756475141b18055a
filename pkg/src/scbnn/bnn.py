"""Binary neural networks: +/-1 inputs, weights, and biases with real
output weights, plus the stochastic binarization that produces them.

Bit convention (shared package-wide): stored bit 1 means +1, bit 0 means -1,
so the +/-1 inner product is 2*popcount(XNOR) - m.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .bitstream import (
    StreamKey,
    StreamMismatchError,
    pack_bits,
    unpack_bits,
    zero_pad_bits,
)
from .netcore import Activation, SchemaError, activate, _reject_constant, _require


@dataclass(frozen=True, eq=False)
class BinaryVector:
    """Packed vector of +/-1 values (bit 1 <-> +1)."""

    bits: np.ndarray
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"binary vector length must be >= 1, got {self.length}")
        expected = (self.length + 7) // 8
        if self.bits.shape != (expected,):
            raise ValueError(
                f"packed storage has {self.bits.shape[0]} bytes, "
                f"expected {expected} for length {self.length}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryVector):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.bits, other.bits)

    @classmethod
    def from_signs(cls, signs) -> "BinaryVector":
        arr = np.asarray(signs, dtype=int)
        if arr.ndim != 1 or not np.isin(arr, (-1, 1)).all():
            raise ValueError("signs must be a flat sequence of +1/-1")
        return cls(pack_bits(arr == 1), int(arr.size))

    @classmethod
    def from_bits(cls, bits) -> "BinaryVector":
        if isinstance(bits, str):
            bits = [int(c) for c in bits]
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1 or not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must be a flat sequence of 0s and 1s")
        return cls(pack_bits(arr), int(arr.size))

    def bit_array(self) -> np.ndarray:
        return unpack_bits(self.bits, self.length)

    def signs(self) -> np.ndarray:
        return self.bit_array().astype(np.int8) * 2 - 1

    def popcount(self) -> int:
        return int(np.bitwise_count(self.bits).sum())


def binary_dot(a: BinaryVector, b: BinaryVector) -> int:
    """+/-1 inner product via the XNOR-popcount identity."""
    if a.length != b.length:
        raise StreamMismatchError(
            f"binary vectors disagree in length: {a.length} vs {b.length}"
        )
    agreements = zero_pad_bits(np.bitwise_not(a.bits ^ b.bits), a.length)
    return 2 * int(np.bitwise_count(agreements).sum()) - a.length


def hard_sigmoid(x):
    """clip((x+1)/2, 0, 1); the binarization probability map."""
    arr = np.asarray(x, dtype=float)
    out = np.clip((arr + 1.0) / 2.0, 0.0, 1.0)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def binarize(w: float, key: StreamKey) -> int:
    """Draw +1 with probability hard_sigmoid(w), else -1. Pure in `key`."""
    p = hard_sigmoid(w)
    return 1 if key.generator().random() < p else -1


@dataclass
class BinaryNetwork:
    """Hidden layer with +/-1 weights and biases; real output weights."""

    binary_weights: list[BinaryVector]
    binary_biases: np.ndarray  # (N,) of +/-1
    output_weights: np.ndarray  # (N,)
    activation: Activation
    name: str = "binary-network"

    def __post_init__(self):
        if not self.binary_weights:
            raise ValueError("binary network needs at least one hidden unit")
        self.binary_biases = np.asarray(self.binary_biases, dtype=np.int8).reshape(-1)
        self.output_weights = np.asarray(self.output_weights, dtype=float).reshape(-1)
        m = self.binary_weights[0].length
        for idx, w in enumerate(self.binary_weights):
            if w.length != m:
                raise ValueError(
                    f"binary_weights[{idx}] has length {w.length}, expected {m}"
                )
        N = len(self.binary_weights)
        if self.binary_biases.shape != (N,) or self.output_weights.shape != (N,):
            raise ValueError(
                f"inconsistent unit count: {N} weight vectors, "
                f"{self.binary_biases.shape[0]} biases, {self.output_weights.shape[0]} outputs"
            )
        if not np.isin(self.binary_biases, (-1, 1)).all():
            raise ValueError("binary biases must be +1 or -1")
        if not np.isfinite(self.output_weights).all():
            raise ValueError("output_weights contains non-finite values")

    @property
    def m(self) -> int:
        return self.binary_weights[0].length

    @property
    def N(self) -> int:
        return len(self.binary_weights)


def binarize_network(net, key: StreamKey) -> BinaryNetwork:
    """One-shot stochastic binarization of hidden weights and biases.

    Output weights stay real. Each element gets its own substream, so the
    result is deterministic in `key`.
    """
    signs = np.empty((net.N, net.n), dtype=int)
    biases = np.empty(net.N, dtype=int)
    for i in range(net.N):
        for j in range(net.n):
            signs[i, j] = binarize(net.hidden_weights[i, j], key.substream("binweights", i, j))
        biases[i] = binarize(net.hidden_biases[i], key.substream("binbias", i))
    return BinaryNetwork(
        binary_weights=[BinaryVector.from_signs(signs[i]) for i in range(net.N)],
        binary_biases=biases,
        output_weights=net.output_weights.copy(),
        activation=net.activation,
        name=f"{net.name}-binarized",
    )


def forward_bnn(bnet: BinaryNetwork, x_B: BinaryVector) -> float:
    """Exact integer preactivations, exact activation and output layer."""
    if x_B.length != bnet.m:
        raise StreamMismatchError(
            f"input has {x_B.length} bits, network expects m={bnet.m}"
        )
    out = 0.0
    for i, w in enumerate(bnet.binary_weights):
        pre = binary_dot(w, x_B) + int(bnet.binary_biases[i])
        out += float(bnet.output_weights[i]) * activate(bnet.activation, float(pre))
    return out


# ---------------------------------------------------------------------------
# Serialization: same weight-file shape with binary: true and hex bit fields.

def binary_network_to_dict(bnet: BinaryNetwork) -> dict:
    return {
        "name": bnet.name,
        "binary": True,
        "m": bnet.m,
        "N": bnet.N,
        "activation": bnet.activation.value,
        "binary_weights": [w.bits.tobytes().hex() for w in bnet.binary_weights],
        "binary_biases": [int(b) for b in bnet.binary_biases],
        "output_weights": [float(a) for a in bnet.output_weights],
    }


def save_binary_network(bnet: BinaryNetwork, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(binary_network_to_dict(bnet), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _vector_from_hex(payload: str, m: int, where: str) -> BinaryVector:
    try:
        raw = bytes.fromhex(payload)
    except ValueError:
        raise SchemaError(f"{where}: bad hex payload") from None
    packed = np.frombuffer(raw, dtype=np.uint8).copy()
    if packed.size != (m + 7) // 8:
        raise SchemaError(f"{where}: payload has {packed.size} bytes, expected m={m}")
    if not np.array_equal(packed, zero_pad_bits(packed, m)):
        raise SchemaError(f"{where}: nonzero pad bits")
    return BinaryVector(packed, m)


def binary_network_from_dict(doc: dict, where: str = "binary weight file") -> BinaryNetwork:
    if doc.get("binary") is not True:
        raise SchemaError(f"{where}: missing \"binary\": true flag")
    name = _require(doc, "name", str, where)
    m = _require(doc, "m", int, where)
    N = _require(doc, "N", int, where)
    if m < 1 or N < 1:
        raise SchemaError(f"{where}: m and N must be >= 1, got m={m}, N={N}")
    act_name = _require(doc, "activation", str, where)
    try:
        activation = Activation(act_name)
    except ValueError:
        raise SchemaError(f"{where}: unknown activation {act_name!r}") from None
    weight_rows = _require(doc, "binary_weights", list, where)
    if len(weight_rows) != N:
        raise SchemaError(f"{where}: binary_weights has {len(weight_rows)} rows, expected N={N}")
    weights = [
        _vector_from_hex(row, m, f"{where}: binary_weights[{idx}]")
        for idx, row in enumerate(weight_rows)
    ]
    biases = _require(doc, "binary_biases", list, where)
    outputs = _require(doc, "output_weights", list, where)
    if len(biases) != N or len(outputs) != N:
        raise SchemaError(f"{where}: biases/outputs must each have N={N} entries")
    try:
        return BinaryNetwork(
            binary_weights=weights,
            binary_biases=np.array(biases, dtype=int),
            output_weights=np.array(outputs, dtype=float),
            activation=activation,
            name=name,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_binary_network(path: str | os.PathLike) -> BinaryNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: weight file must contain a JSON object")
    return binary_network_from_dict(doc, where=str(path))
