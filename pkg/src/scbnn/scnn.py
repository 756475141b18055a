"""SCNN forward pass: stochastic encoding of weights, inputs, and biases,
SC dot products, exact activation and output layer.

Independence discipline: every (role, unit i, coordinate j) triple gets its
own substream, so the same input coordinate feeding two units is re-encoded
independently per unit. Results are pure functions of (net, x, config).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitstream import Encoding, PreScaler, StreamKey, prescale, sng_encode
from .netcore import ReferenceNetwork, TargetFunction, activate, forward_reference
from .scgates import AccumulationMode, dot_product_sc


@dataclass(frozen=True)
class ScnnConfig:
    """Stream length, accumulation mode, and key space for one evaluation."""

    M: int
    key: StreamKey
    mode: AccumulationMode = AccumulationMode.APC
    prescalers: dict[str, PreScaler] | None = None  # None: use the network's

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"stream length M must be >= 1, got {self.M}")


def forward_scnn(net: ReferenceNetwork, x, cfg: ScnnConfig) -> float:
    """Evaluate the network with M-bit stochastic hidden-layer arithmetic.

    Per unit: weights, inputs, and bias are pre-scaled, encoded as bipolar
    streams, multiplied and accumulated in the SC domain, and the decoded
    preactivation is un-scaled before the exact activation. The output
    layer stays in exact reals.
    """
    point = np.asarray(x, dtype=float).reshape(-1)
    if point.size != net.n:
        raise ValueError(f"input has dimension {point.size}, network expects {net.n}")
    scalers = cfg.prescalers or net.prescalers
    s_w, s_x, s_b = (scalers[r] for r in ("weights", "inputs", "bias"))
    inv = s_w.scale * s_x.scale
    out = 0.0
    for i in range(net.N):
        w_streams = [
            sng_encode(
                prescale(float(net.hidden_weights[i, j]), s_w),
                cfg.M,
                Encoding.BIPOLAR,
                cfg.key.substream("weights", i, j),
            )
            for j in range(net.n)
        ]
        x_streams = [
            sng_encode(
                prescale(float(point[j]), s_x),
                cfg.M,
                Encoding.BIPOLAR,
                cfg.key.substream("inputs", i, j),
            )
            for j in range(net.n)
        ]
        b_stream = sng_encode(
            prescale(float(net.hidden_biases[i]), s_b),
            cfg.M,
            Encoding.BIPOLAR,
            cfg.key.substream("bias", i),
        )
        pre = dot_product_sc(
            w_streams,
            x_streams,
            b_stream,
            cfg.mode,
            cfg.key.substream("select", i),
            scale=inv,
        )
        out += float(net.output_weights[i]) * activate(net.activation, pre)
    return out


@dataclass
class ErrorProfile:
    """Per-point SCNN errors against the reference network and the target."""

    points: np.ndarray
    vs_reference: np.ndarray  # |G_SC(x) - G(x)|
    vs_target: np.ndarray  # |G_SC(x) - f(x)|

    def summary(self) -> dict[str, float]:
        return {
            "max_vs_reference": float(self.vs_reference.max()),
            "median_vs_reference": float(np.median(self.vs_reference)),
            "rms_vs_reference": float(np.sqrt(np.mean(self.vs_reference**2))),
            "max_vs_target": float(self.vs_target.max()),
            "median_vs_target": float(np.median(self.vs_target)),
            "rms_vs_target": float(np.sqrt(np.mean(self.vs_target**2))),
        }


def scnn_error_profile(
    net: ReferenceNetwork,
    f: TargetFunction,
    grid: np.ndarray,
    cfg: ScnnConfig,
) -> ErrorProfile:
    """Evaluate both error terms on every grid point.

    Each point gets a key derived from the config key by its grid index,
    so the profile is deterministic and points are independent.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    g_ref = np.atleast_1d(forward_reference(net, grid))
    g_target = np.atleast_1d(f(grid))
    g_sc = np.empty(grid.shape[0])
    for p in range(grid.shape[0]):
        point_cfg = ScnnConfig(cfg.M, cfg.key.derive(p), cfg.mode, cfg.prescalers)
        g_sc[p] = forward_scnn(net, grid[p], point_cfg)
    return ErrorProfile(grid, np.abs(g_sc - g_ref), np.abs(g_sc - g_target))
