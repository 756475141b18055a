"""Real-valued reference networks: one hidden layer of sigmoidal units,
target functions on the unit cube, a deterministic random-feature fitter,
and the JSON weight-file format.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bitstream import PreScaler, StreamKey, network_prescalers


class SchemaError(ValueError):
    """A weight file violates the expected schema."""


class Activation(enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"

    @property
    def derivative_bound(self) -> float:
        """Supremum of |derivative| over the reals."""
        return 0.25 if self is Activation.SIGMOID else 1.0


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(a: Activation, t):
    """Activation value; accepts scalars or arrays."""
    arr = np.asarray(t, dtype=float)
    if a is Activation.SIGMOID:
        out = _sigmoid(arr)
    elif a is Activation.TANH:
        out = np.tanh(arr)
    else:
        out = np.maximum(arr, 0.0)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def activate_deriv(a: Activation, t):
    """Closed-form derivative (relu uses the a.e. derivative, 0 at 0)."""
    arr = np.asarray(t, dtype=float)
    if a is Activation.SIGMOID:
        s = _sigmoid(arr)
        out = s * (1.0 - s)
    elif a is Activation.TANH:
        out = 1.0 - np.tanh(arr) ** 2
    else:
        out = (arr > 0).astype(float)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


@dataclass
class ReferenceNetwork:
    """One-hidden-layer network G(x) = sum_i alpha_i * act(w_i . x + b_i)."""

    hidden_weights: np.ndarray  # (N, n)
    hidden_biases: np.ndarray  # (N,)
    output_weights: np.ndarray  # (N,)
    activation: Activation
    prescalers: dict[str, PreScaler]
    name: str = "network"
    fit_sup_error: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.hidden_weights = np.atleast_2d(np.asarray(self.hidden_weights, dtype=float))
        self.hidden_biases = np.asarray(self.hidden_biases, dtype=float).reshape(-1)
        self.output_weights = np.asarray(self.output_weights, dtype=float).reshape(-1)
        N, n = self.hidden_weights.shape
        if N < 1 or n < 1:
            raise ValueError(f"network needs N >= 1 and n >= 1, got N={N}, n={n}")
        if self.hidden_biases.shape != (N,) or self.output_weights.shape != (N,):
            raise ValueError(
                f"inconsistent shapes: weights {self.hidden_weights.shape}, "
                f"biases {self.hidden_biases.shape}, outputs {self.output_weights.shape}"
            )
        for label, arr in (
            ("hidden_weights", self.hidden_weights),
            ("hidden_biases", self.hidden_biases),
            ("output_weights", self.output_weights),
        ):
            if not np.isfinite(arr).all():
                raise ValueError(f"{label} contains non-finite values")
        for role in ("weights", "inputs", "bias"):
            if role not in self.prescalers:
                raise ValueError(f"missing {role!r} prescaler")

    @property
    def n(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def N(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def alpha_sum(self) -> float:
        return float(np.abs(self.output_weights).sum())


def forward_reference(net: ReferenceNetwork, x) -> float | np.ndarray:
    """Exact evaluation of the network at a point (n,) or batch (P, n)."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[1] != net.n:
        raise ValueError(f"input has dimension {pts.shape[1]}, network expects {net.n}")
    z = pts @ net.hidden_weights.T + net.hidden_biases
    out = activate(net.activation, z) @ net.output_weights
    return float(out[0]) if single else out


@dataclass(frozen=True)
class TargetFunction:
    """Named continuous function on the unit cube [0, 1]^n."""

    name: str
    n: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x) -> float | np.ndarray:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        pts = np.atleast_2d(arr)
        if pts.shape[1] != self.n:
            raise ValueError(f"point has dimension {pts.shape[1]}, target expects {self.n}")
        vals = np.asarray(self.fn(pts), dtype=float).reshape(-1)
        return float(vals[0]) if single else vals


def make_target(name: str, n: int = 1, **params) -> TargetFunction:
    """Target registry; raises ValueError for unknown names."""
    if name == "constant":
        c = float(params.get("value", 0.3))
        return TargetFunction(name, n, lambda pts: np.full(pts.shape[0], c))
    if name == "linear":
        return TargetFunction(name, n, lambda pts: pts.mean(axis=1))
    if name == "sine":
        cycles = float(params.get("cycles", 1.0))
        return TargetFunction(
            name, n, lambda pts: np.sin(2.0 * math.pi * cycles * pts.mean(axis=1))
        )
    if name == "bump":
        width = float(params.get("width", 0.15))
        return TargetFunction(
            name,
            n,
            lambda pts: np.exp(-((pts - 0.5) ** 2).sum(axis=1) / (2.0 * width**2)),
        )
    raise ValueError(f"unknown target function {name!r}")


_DEFAULT_GRID_POINTS = {1: 256, 2: 64, 3: 16}


def unit_grid(n: int, points_per_axis: int | None = None) -> np.ndarray:
    """Uniform grid over [0, 1]^n as a (points^n, n) array."""
    if n < 1:
        raise ValueError(f"grid dimension must be >= 1, got {n}")
    p = points_per_axis or _DEFAULT_GRID_POINTS.get(n, 8)
    if p < 1:
        raise ValueError(f"points per axis must be >= 1, got {p}")
    axis = np.linspace(0.0, 1.0, p)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


#: Hidden parameters are drawn from this symmetric range. 4 with tanh gives
#: the same feature geometry as 8 with sigmoid but halves the pre-scale
#: factor, and with it the stochastic-arithmetic noise of fitted networks.
HIDDEN_PARAM_RANGE = 4.0
FIT_RIDGE = 1e-8
FIT_NOISE_PENALTY = 1e-3
_NOISE_BALANCE_ITERS = 12
#: Stream length the noise-balancing penalty is normalized at; only sets
#: the meaning of FIT_NOISE_PENALTY, not which M the network runs at.
_NOISE_REF_M = 4096


def _draw_hidden(N: int, n: int, key: StreamKey, edge_fraction: float):
    """Hidden-parameter draw: edge units then plain units.

    Edge units are steep (|w| in the top 20% of the range) with their
    transition anchored at a stratified point of the unit cube, which
    spreads activation edges evenly; plain units are uniform draws and
    mostly saturate, carrying constant components almost noise-free.
    """
    gen = key.substream("fit").generator()
    hi = HIDDEN_PARAM_RANGE
    W = np.empty((N, n))
    b = np.empty(N)
    n_edge = int(round(edge_fraction * N))
    for i in range(n_edge):
        w = gen.choice([-1.0, 1.0], size=n) * gen.uniform(0.8 * hi, hi, size=n)
        anchor = (i + gen.uniform(0.0, 1.0, size=n)) / n_edge
        W[i] = w
        b[i] = -float(w @ anchor)
    for i in range(n_edge, N):
        W[i] = gen.uniform(-hi, hi, size=n)
        b[i] = gen.uniform(-hi, hi)
    return W, b


def _noise_coefficients(W, b, grid, activation, s_w, s_b, M):
    """Per (grid point, unit): variance that one unit of output weight
    would add to the stochastic forward pass, from the encoding variances
    of the product and bias streams and the activation slope."""
    z = grid @ W.T + b
    d = activate_deriv(activation, z)  # (P, N)
    wv = W / s_w  # encoded weight values
    bv = b / s_b
    prod_var = ((1.0 - (wv[None, :, :] * grid[:, None, :]) ** 2)).sum(axis=2)  # (P, N)
    v = prod_var + (1.0 - bv**2)[None, :]
    return d**2 * v * (s_w**2) / M


def fit_reference(
    f: TargetFunction,
    N: int,
    grid: np.ndarray,
    key: StreamKey,
    activation: Activation = Activation.TANH,
    ridge: float = FIT_RIDGE,
    noise_penalty: float = FIT_NOISE_PENALTY,
    edge_fraction: float = 0.5,
) -> ReferenceNetwork:
    """Noise-balanced random-feature least squares fit of `f` on the grid.

    Hidden weights/biases are drawn deterministically from `key`; only the
    output weights are solved. The solve is ridge-regularized least squares
    with an extra generalized penalty that charges each coefficient for the
    stochastic-arithmetic noise its unit would inject, reweighted a few
    times toward the worst grid point so the noise profile comes out flat.
    Networks fitted this way stay accurate *and* usable at moderate stream
    lengths; plain ridge alone produces large cancelling coefficients whose
    noise drowns the stochastic forward pass. The returned network records
    its achieved grid sup-error.
    """
    if N < 1:
        raise ValueError(f"hidden width must be >= 1, got {N}")
    if not 0.0 <= edge_fraction <= 1.0:
        raise ValueError(f"edge_fraction must lie in [0, 1], got {edge_fraction}")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("fit grid is empty")
    n = grid.shape[1]
    P = grid.shape[0]
    W, b = _draw_hidden(N, n, key, edge_fraction)
    scalers = network_prescalers(W, b)
    features = activate(activation, grid @ W.T + b)
    y = np.asarray(f(grid), dtype=float).reshape(-1)
    gram = features.T @ features
    rhs = features.T @ y
    noise = _noise_coefficients(
        W, b, grid, activation, scalers["weights"].scale, scalers["bias"].scale, _NOISE_REF_M
    )
    point_weights = np.full(P, 1.0 / P)
    alpha = None
    for _ in range(_NOISE_BALANCE_ITERS):
        diag = ridge + noise_penalty * P * (point_weights[:, None] * noise).sum(axis=0)
        lam_scale = 1.0
        while True:
            try:
                alpha = np.linalg.solve(gram + np.diag(lam_scale * diag), rhs)
            except np.linalg.LinAlgError:
                alpha = None
            if alpha is not None and np.isfinite(alpha).all():
                break
            lam_scale *= 100.0
            if lam_scale * ridge > 1.0:
                raise RuntimeError("normal system remained singular up to ridge 1.0")
        if noise_penalty <= 0.0:
            break
        per_point = noise @ (alpha**2)
        point_weights = point_weights * np.exp(2.0 * per_point / max(per_point.max(), 1e-300))
        point_weights /= point_weights.sum()
    net = ReferenceNetwork(
        hidden_weights=W,
        hidden_biases=b,
        output_weights=alpha,
        activation=activation,
        prescalers=scalers,
        name=f"{f.name}-n{n}-N{N}",
    )
    net.fit_sup_error = sup_error(net, f, grid)
    return net


def sup_error(net: ReferenceNetwork, f: TargetFunction, grid: np.ndarray) -> float:
    """max over the grid of |G(x) - f(x)|."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    return float(np.abs(forward_reference(net, grid) - f(grid)).max())


# ---------------------------------------------------------------------------
# Weight files: a single JSON document, decimal numbers only.

def _reject_constant(token: str):
    raise SchemaError(f"non-finite number {token!r} not permitted in weight files")


def network_to_dict(net: ReferenceNetwork) -> dict:
    return {
        "name": net.name,
        "n": net.n,
        "N": net.N,
        "activation": net.activation.value,
        "hidden_weights": [[float(v) for v in row] for row in net.hidden_weights],
        "hidden_biases": [float(v) for v in net.hidden_biases],
        "output_weights": [float(v) for v in net.output_weights],
        "prescale": {role: float(net.prescalers[role].scale) for role in ("weights", "inputs", "bias")},
    }


def save_network(net: ReferenceNetwork, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{where}: field {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def network_from_dict(doc: dict, where: str = "weight file") -> ReferenceNetwork:
    name = _require(doc, "name", str, where)
    n = _require(doc, "n", int, where)
    N = _require(doc, "N", int, where)
    if N < 1 or n < 1:
        raise SchemaError(f"{where}: N and n must be >= 1, got N={N}, n={n}")
    act_name = _require(doc, "activation", str, where)
    try:
        activation = Activation(act_name)
    except ValueError:
        raise SchemaError(f"{where}: unknown activation {act_name!r}") from None
    rows = _require(doc, "hidden_weights", list, where)
    if len(rows) != N:
        raise SchemaError(f"{where}: hidden_weights has {len(rows)} rows, expected N={N}")
    for idx, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaError(
                f"{where}: hidden_weights[{idx}] has length "
                f"{len(row) if isinstance(row, list) else 'non-list'}, expected n={n}"
            )
    biases = _require(doc, "hidden_biases", list, where)
    outputs = _require(doc, "output_weights", list, where)
    if len(biases) != N:
        raise SchemaError(f"{where}: hidden_biases has {len(biases)} entries, expected N={N}")
    if len(outputs) != N:
        raise SchemaError(f"{where}: output_weights has {len(outputs)} entries, expected N={N}")
    pres = _require(doc, "prescale", dict, where)
    prescalers = {}
    for role in ("weights", "inputs", "bias"):
        prescalers[role] = PreScaler(_require(pres, role, float, f"{where}: prescale"), role)
    try:
        return ReferenceNetwork(
            hidden_weights=np.array(rows, dtype=float),
            hidden_biases=np.array(biases, dtype=float),
            output_weights=np.array(outputs, dtype=float),
            activation=activation,
            prescalers=prescalers,
            name=name,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_network(path: str | os.PathLike) -> ReferenceNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: weight file must contain a JSON object")
    return network_from_dict(doc, where=str(path))
