"""Bit-length bound calculator and Monte-Carlo convergence harness.

The bound M > (n+1)^2 A^2 / (eps^2 delta) is evaluated in exact rational
arithmetic on the decimal values of the inputs, so e.g. (n=2, N=10,
eps=0.1, delta=0.1) yields exactly 900001. The sweep and validation
routines verify the predicted convergence behavior empirically; they are
deterministic in the master key, including under parallel execution.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

import numpy as np

from .bitstream import Encoding, StreamKey, decode, sng_encode
from .netcore import ReferenceNetwork, TargetFunction, forward_reference, unit_grid
from .scgates import AccumulationMode
from .scnn import ScnnConfig, forward_scnn

#: Refuse validation runs whose bound exceeds this stream length.
M_FEASIBLE_CAP = 1 << 26


class InfeasibleBoundError(ValueError):
    """The requested bound is too large to simulate; loosen eps or delta."""


@dataclass(frozen=True)
class BoundQuery:
    n: int
    N: int
    epsilon: float
    delta: float
    alpha_sum: float | None = None  # defaults to N

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"input dimension n must be >= 1, got {self.n}")
        if self.N < 1:
            raise ValueError(f"hidden width N must be >= 1, got {self.N}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (0 < self.delta < 1):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.alpha_sum is not None and not (self.alpha_sum > 0):
            raise ValueError(f"alpha_sum must be positive, got {self.alpha_sum!r}")


def _exact(x: float) -> Fraction:
    # str() gives the shortest decimal that round-trips, which is the value
    # the caller wrote; Decimal makes it an exact rational.
    return Fraction(Decimal(str(x)))


def bound_value(q: BoundQuery) -> Fraction:
    """Exact rational value of (n+1)^2 A^2 / (eps^2 delta)."""
    A = _exact(q.alpha_sum) if q.alpha_sum is not None else Fraction(q.N)
    return Fraction((q.n + 1) ** 2) * A * A / (_exact(q.epsilon) ** 2 * _exact(q.delta))


def m_min_bound(q: BoundQuery) -> int:
    """Smallest integer strictly greater than the bound value."""
    return math.floor(bound_value(q)) + 1


@dataclass(frozen=True)
class TailCheck:
    x: float
    M: int
    trials: int
    k: float
    threshold: float  # k / (2 sqrt(M)), from the per-bit variance cap 1/4
    tail_fraction: float
    chebyshev_bound: float  # 1 / k^2
    slack: float
    passed: bool


def chebyshev_stream_bound_check(
    x: float,
    M: int,
    trials: int,
    k: float,
    key: StreamKey,
) -> TailCheck:
    """Empirical tail P(|decode - x| >= k/(2 sqrt(M))) for unipolar streams,
    compared against the Chebyshev bound 1/k^2 plus sampling slack.
    """
    if trials < 1000:
        raise ValueError(f"need trials >= 1000 for a stable tail estimate, got {trials}")
    if k <= 0:
        raise ValueError(f"deviation multiple k must be positive, got {k}")
    threshold = k / (2.0 * math.sqrt(M))
    hits = 0
    for t in range(trials):
        s = sng_encode(x, M, Encoding.UNIPOLAR, key.substream("cheb", t))
        if abs(decode(s) - x) >= threshold:
            hits += 1
    fraction = hits / trials
    bound = 1.0 / (k * k)
    slack = 1.0 / math.sqrt(trials)
    return TailCheck(
        x=x,
        M=M,
        trials=trials,
        k=k,
        threshold=threshold,
        tail_fraction=fraction,
        chebyshev_bound=bound,
        slack=slack,
        passed=fraction <= bound + slack,
    )


@dataclass(frozen=True)
class SweepRow:
    M: int
    trials: int
    grid_size: int
    median_vs_reference: float
    max_vs_reference: float
    rms_vs_reference: float
    median_vs_target: float
    max_vs_target: float
    rms_vs_target: float
    failure_rate: float


@dataclass
class ConvergenceReport:
    rows: list[SweepRow]
    epsilon: float
    mode: AccumulationMode
    seed: int
    slope_median: float  # log-log slope of median |G_SC - G| vs M
    slope_rms: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "mode": self.mode.value,
            "seed": self.seed,
            "slope_median": self.slope_median,
            "slope_rms": self.slope_rms,
            "rows": [vars(r) for r in self.rows],
        }


def _sweep_task(args) -> np.ndarray:
    net, grid, M, mode, key, m_index, trial = args
    values = np.empty(grid.shape[0])
    for p in range(grid.shape[0]):
        cfg = ScnnConfig(M, key.derive(m_index, trial, p), mode)
        values[p] = forward_scnn(net, grid[p], cfg)
    return values


def _loglog_slope(Ms: list[int], errs: list[float]) -> float:
    if len(Ms) < 2 or any(e <= 0 for e in errs):
        return float("nan")
    return float(np.polyfit(np.log(Ms), np.log(errs), 1)[0])


def convergence_sweep(
    net: ReferenceNetwork,
    f: TargetFunction,
    Ms: list[int],
    trials: int,
    grid: np.ndarray,
    mode: AccumulationMode,
    key: StreamKey,
    epsilon: float,
    jobs: int = 1,
) -> ConvergenceReport:
    """Monte-Carlo sweep of SCNN error versus stream length.

    For each M, each trial evaluates the SCNN on the whole grid with fresh
    derived keys; the report carries both error terms (|G_SC - G| and
    |G_SC - f|) and the empirical failure rate P(|G_SC - f| >= epsilon).
    """
    if list(Ms) != sorted(set(Ms)):
        raise ValueError("Ms must be strictly ascending")
    if not Ms:
        raise ValueError("Ms is empty")
    if trials < 30:
        raise ValueError(f"need trials >= 30, got {trials}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    g_ref = np.atleast_1d(forward_reference(net, grid))
    g_target = np.atleast_1d(f(grid))
    tasks = [
        (net, grid, M, mode, key, mi, t)
        for mi, M in enumerate(Ms)
        for t in range(trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=8))
    else:
        results = [_sweep_task(t) for t in tasks]
    rows = []
    for mi, M in enumerate(Ms):
        block = np.stack(results[mi * trials : (mi + 1) * trials])  # (trials, P)
        e_ref = np.abs(block - g_ref).ravel()
        e_tgt = np.abs(block - g_target).ravel()
        rows.append(
            SweepRow(
                M=M,
                trials=trials,
                grid_size=grid.shape[0],
                median_vs_reference=float(np.median(e_ref)),
                max_vs_reference=float(e_ref.max()),
                rms_vs_reference=float(np.sqrt(np.mean(e_ref**2))),
                median_vs_target=float(np.median(e_tgt)),
                max_vs_target=float(e_tgt.max()),
                rms_vs_target=float(np.sqrt(np.mean(e_tgt**2))),
                failure_rate=float(np.mean(e_tgt >= epsilon)),
            )
        )
    return ConvergenceReport(
        rows=rows,
        epsilon=epsilon,
        mode=mode,
        seed=key.seed,
        slope_median=_loglog_slope(list(Ms), [r.median_vs_reference for r in rows]),
        slope_rms=_loglog_slope(list(Ms), [r.rms_vs_reference for r in rows]),
    )


@dataclass(frozen=True)
class BoundReport:
    M: int
    epsilon: float
    delta: float
    trials: int
    grid_size: int
    samples: int
    failure_rate: float
    threshold: float  # delta + 2 binomial standard errors
    passed: bool


def bound_validation(
    q: BoundQuery,
    net: ReferenceNetwork,
    f: TargetFunction,
    trials: int,
    key: StreamKey,
    grid: np.ndarray | None = None,
    mode: AccumulationMode = AccumulationMode.APC,
) -> BoundReport:
    """Run the SCNN at M = m_min_bound(q) and check that the empirical
    failure rate P(|G_SC - f| >= eps) stays within delta plus two binomial
    standard errors. The bound is Chebyshev-loose, so observed rates land
    far below delta.
    """
    M = m_min_bound(q)
    if M > M_FEASIBLE_CAP:
        raise InfeasibleBoundError(
            f"m_min_bound gives M={M} > 2^26; increase epsilon or delta"
        )
    if trials < 1:
        raise ValueError(f"need trials >= 1, got {trials}")
    if grid is None:
        grid = unit_grid(net.n, 9)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    g_target = np.atleast_1d(f(grid))
    failures = 0
    samples = 0
    for t in range(trials):
        for p in range(grid.shape[0]):
            cfg = ScnnConfig(M, key.derive(t, p), mode)
            err = abs(forward_scnn(net, grid[p], cfg) - float(g_target[p]))
            if err >= q.epsilon:
                failures += 1
            samples += 1
    rate = failures / samples
    se = math.sqrt(q.delta * (1.0 - q.delta) / samples)
    threshold = q.delta + 2.0 * se
    return BoundReport(
        M=M,
        epsilon=q.epsilon,
        delta=q.delta,
        trials=trials,
        grid_size=grid.shape[0],
        samples=samples,
        failure_rate=rate,
        threshold=threshold,
        passed=rate <= threshold,
    )
