"""Monte Carlo engine over independent Kac-Stroock replicas.

Replica r draws its Poisson path from the stream (master_seed, r), so an
ensemble is fully reproducible from its configuration.  Replicas are
accumulated in fixed chunks of 64 and the per-chunk partial sums are
merged in chunk order, which makes the output bit-identical no matter
how many worker threads execute the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (
    DegenerateSampleError,
    InvalidArgumentError,
    InvalidCombinationError,
)
from .kernels import FbmVolterra, LeiNualart, cov_matrix, decomposition_constant
from .poisson import _check_key, jump_blocks
from .transform import ApproxParams, _check_grid, _Plan

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "ConvergenceRow",
    "ConvergenceReport",
    "run",
    "raw_values",
    "normality_stat",
    "convergence_study",
]

_MODES = ("single_channel", "dual_channel", "decomposition")
_CHUNK = 64          # replicas per accumulation chunk; part of the
                     # reproducibility contract, do not change casually
_MIN_REPLICAS = 100
_MIN_NORMALITY = 1000


@dataclass(frozen=True)
class EnsembleConfig:
    """One ensemble run: kernel(s), grid, approximation and seeding.

    mode selects the replica layout: single_channel reads both channels
    of one kernel, dual_channel pairs kernel (cos) with second_kernel
    (sin), decomposition combines a Lei-Nualart x-part with an fBm
    b-part into a sub-fBm approximation.  x_channel picks which
    oscillation channel carries the x-part in decomposition mode; the
    b-part always uses the opposite one.
    """

    kernel: object
    grid: tuple
    params: ApproxParams
    replicas: int
    master_seed: int
    mode: str = "single_channel"
    second_kernel: object = None
    threads: int = 1
    x_channel: str = "cos"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise InvalidArgumentError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise InvalidArgumentError("replicas must be a positive integer")
        if int(self.threads) != self.threads or self.threads < 1:
            raise InvalidArgumentError("threads must be a positive integer")
        _check_key(self.master_seed, 0)
        if self.x_channel not in ("cos", "sin"):
            raise InvalidArgumentError("x_channel must be 'cos' or 'sin'")
        if self.mode == "single_channel":
            if self.second_kernel is not None:
                raise InvalidArgumentError("single_channel mode takes exactly one kernel")
        elif self.second_kernel is None:
            raise InvalidArgumentError(f"{self.mode} mode needs a second kernel")
        if self.mode == "decomposition":
            k, b = self.kernel, self.second_kernel
            if not isinstance(k, LeiNualart) or not isinstance(b, FbmVolterra):
                raise InvalidCombinationError(
                    "decomposition mode pairs a LeiNualart x-kernel with an "
                    "FbmVolterra b-kernel"
                )
            if k.H != b.H:
                raise InvalidCombinationError(
                    f"decomposition kernels disagree on H: {k.H!r} vs {b.H!r}"
                )
            if not (0.0 < k.H < 1.0):
                raise InvalidArgumentError(
                    f"the sub-fBm decomposition needs H in (0, 1), got {k.H!r}"
                )


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Sample moments of an ensemble, with standard errors.

    All per-channel entries are dicts keyed by channel name ('cos' and
    'sin', or 'combined' in decomposition mode).  cross_cov estimates
    E[Y(t_i) * Yt(t_j)] between the cos and sin channels and is None in
    decomposition mode.  jb holds the composite normality statistic per
    grid point, NaN when replicas < 1000 or a marginal is degenerate.
    """

    grid: np.ndarray
    channels: tuple
    mean: dict
    se_mean: dict
    cov: dict
    se_cov: dict
    cross_cov: Optional[np.ndarray]
    se_cross: Optional[np.ndarray]
    m2: dict
    se_m2: dict
    m4: dict
    se_m4: dict
    skewness: dict
    excess_kurtosis: dict
    jb: dict
    replicas: int
    epsilon: float
    theta: float


class _Acc:
    """Running power sums of one channel over a set of replicas."""

    __slots__ = ("p1", "p2", "p3", "p4", "p8", "souter", "souter2")

    def __init__(self, n: int):
        self.p1 = np.zeros(n)
        self.p2 = np.zeros(n)
        self.p3 = np.zeros(n)
        self.p4 = np.zeros(n)
        self.p8 = np.zeros(n)
        self.souter = np.zeros((n, n))
        self.souter2 = np.zeros((n, n))

    def add(self, y: np.ndarray) -> None:
        y2 = y * y
        y4 = y2 * y2
        self.p1 += y
        self.p2 += y2
        self.p3 += y2 * y
        self.p4 += y4
        self.p8 += y4 * y4
        self.souter += np.outer(y, y)
        self.souter2 += np.outer(y2, y2)

    def merge(self, other: "_Acc") -> None:
        for name in self.__slots__:
            getattr(self, name).__iadd__(getattr(other, name))


class _CrossAcc:
    """Running sums of cos x sin products."""

    __slots__ = ("x", "xsq")

    def __init__(self, n: int):
        self.x = np.zeros((n, n))
        self.xsq = np.zeros((n, n))

    def add(self, yc: np.ndarray, ys: np.ndarray) -> None:
        self.x += np.outer(yc, ys)
        self.xsq += np.outer(yc * yc, ys * ys)

    def merge(self, other: "_CrossAcc") -> None:
        self.x += other.x
        self.xsq += other.xsq


class _Layout:
    """Mode-resolved plans plus the recipe turning a path into channels."""

    def __init__(self, config: EnsembleConfig):
        self.config = config
        grid = _check_grid(np.asarray(config.grid, dtype=np.float64))
        self.grid = grid
        if config.mode == "single_channel":
            self.plans = [_Plan(config.kernel, grid, config.params)]
            self.channels = ("cos", "sin")
        elif config.mode == "dual_channel":
            self.plans = [
                _Plan(config.kernel, grid, config.params),
                _Plan(config.second_kernel, grid, config.params),
            ]
            self.channels = ("cos", "sin")
        else:
            self.plans = [
                _Plan(config.kernel, grid, config.params),
                _Plan(config.second_kernel, grid, config.params),
            ]
            self.channels = ("combined",)
            self.c1 = decomposition_constant(config.kernel.H, "sub_from_fbm")
        self.u_max = max(p.u_max for p in self.plans)

    def replica(self, r: int):
        """Channel values of replica r, as a tuple aligned with channels."""
        states = [p.new_state() for p in self.plans]
        for block in jump_blocks(self.config.master_seed, r, self.u_max):
            for plan, state in zip(self.plans, states):
                plan.process_block(block, state)
        outs = [p.finalize(s) for p, s in zip(self.plans, states)]
        mode = self.config.mode
        if mode == "single_channel":
            return outs[0]
        if mode == "dual_channel":
            return outs[0][0], outs[1][1]
        xi = 0 if self.config.x_channel == "cos" else 1
        x = outs[0][xi]
        b = outs[1][1 - xi]
        return (self.c1 * x + b,)


def _chunk_worker(layout: _Layout, lo: int, hi: int):
    n_t = layout.grid.size
    accs = [_Acc(n_t) for _ in layout.channels]
    cross = _CrossAcc(n_t) if len(layout.channels) == 2 else None
    for r in range(lo, hi):
        try:
            values = layout.replica(r)
        except Exception as exc:
            if exc.args and isinstance(exc.args[0], str):
                exc.args = (f"replica {r}: {exc.args[0]}",) + exc.args[1:]
            raise
        for acc, y in zip(accs, values):
            acc.add(y)
        if cross is not None:
            cross.add(values[0], values[1])
    return accs, cross


def _run_chunks(layout: _Layout, replicas: int, threads: int):
    n_t = layout.grid.size
    totals = [_Acc(n_t) for _ in layout.channels]
    cross_total = _CrossAcc(n_t) if len(layout.channels) == 2 else None
    bounds = [(lo, min(lo + _CHUNK, replicas)) for lo in range(0, replicas, _CHUNK)]

    def work(b):
        return _chunk_worker(layout, b[0], b[1])

    if threads == 1 or len(bounds) == 1:
        results = map(work, bounds)
        for accs, cross in results:
            for tot, acc in zip(totals, accs):
                tot.merge(acc)
            if cross_total is not None:
                cross_total.merge(cross)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # executor.map yields in submission order: chunk-index order,
            # regardless of which worker finished first
            for accs, cross in pool.map(work, bounds):
                for tot, acc in zip(totals, accs):
                    tot.merge(acc)
                if cross_total is not None:
                    cross_total.merge(cross)
    return totals, cross_total


def _central_moments(acc: _Acc, n: int):
    m = acc.p1 / n
    e2 = acc.p2 / n
    e3 = acc.p3 / n
    e4 = acc.p4 / n
    c2 = e2 - m * m
    c3 = e3 - 3.0 * m * e2 + 2.0 * m**3
    c4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m**4
    return m, c2, c3, c4


def _jb_parts(c2: np.ndarray, c3: np.ndarray, c4: np.ndarray, n: int):
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = np.where(c2 > 0.0, c3 / np.where(c2 > 0.0, c2, 1.0) ** 1.5, np.nan)
        b2 = np.where(c2 > 0.0, c4 / np.where(c2 > 0.0, c2, 1.0) ** 2, np.nan)
    excess = b2 - 3.0
    jb = n * (b1 * b1 / 6.0 + excess * excess / 24.0)
    return b1, excess, jb


def _stats_from_totals(layout: _Layout, totals, cross_total, replicas: int) -> EnsembleStats:
    n = replicas
    grid = layout.grid
    mean, se_mean, covs, se_covs = {}, {}, {}, {}
    m2d, se_m2d, m4d, se_m4d = {}, {}, {}, {}
    skew, exkurt, jbd = {}, {}, {}
    for name, acc in zip(layout.channels, totals):
        m, c2, c3, c4 = _central_moments(acc, n)
        cov = (acc.souter - n * np.outer(m, m)) / (n - 1)
        cov = 0.5 * (cov + cov.T)
        ii = np.diag_indices_from(cov)
        cov[ii] = np.maximum(cov[ii], 0.0)
        var_prod = np.maximum(acc.souter2 / n - (acc.souter / n) ** 2, 0.0)
        se_cov = np.sqrt(var_prod / n)
        mean[name] = m
        se_mean[name] = np.sqrt(cov[ii] / n)
        covs[name] = cov
        se_covs[name] = se_cov
        m2 = acc.p2 / n
        m4 = acc.p4 / n
        m2d[name] = m2
        m4d[name] = m4
        se_m2d[name] = np.sqrt(np.maximum(m4 - m2 * m2, 0.0) / n)
        se_m4d[name] = np.sqrt(np.maximum(acc.p8 / n - m4 * m4, 0.0) / n)
        b1, excess, jb = _jb_parts(c2, c3, c4, n)
        skew[name] = b1
        exkurt[name] = excess
        jbd[name] = jb if n >= _MIN_NORMALITY else np.full(grid.size, np.nan)
    if cross_total is not None:
        mc, ms = mean["cos"], mean["sin"]
        cross = (cross_total.x - n * np.outer(mc, ms)) / (n - 1)
        se_cross = np.sqrt(
            np.maximum(cross_total.xsq / n - (cross_total.x / n) ** 2, 0.0) / n
        )
    else:
        cross = se_cross = None
    return EnsembleStats(
        grid=grid,
        channels=layout.channels,
        mean=mean,
        se_mean=se_mean,
        cov=covs,
        se_cov=se_covs,
        cross_cov=cross,
        se_cross=se_cross,
        m2=m2d,
        se_m2=se_m2d,
        m4=m4d,
        se_m4=se_m4d,
        skewness=skew,
        excess_kurtosis=exkurt,
        jb=jbd,
        replicas=n,
        epsilon=layout.config.params.epsilon,
        theta=layout.config.params.theta,
    )


def run(config: EnsembleConfig) -> EnsembleStats:
    """Run the configured ensemble and return its sample statistics.

    Requires replicas >= 100 (the statistical floor); use raw_values for
    anything smaller.  Output is deterministic in (config, master_seed)
    and independent of the thread count.
    """
    if config.replicas < _MIN_REPLICAS:
        raise InvalidArgumentError(
            f"statistical output needs at least {_MIN_REPLICAS} replicas, got "
            f"{config.replicas}; use raw_values for small runs"
        )
    layout = _Layout(config)
    totals, cross_total = _run_chunks(layout, config.replicas, config.threads)
    return _stats_from_totals(layout, totals, cross_total, config.replicas)


def raw_values(config: EnsembleConfig):
    """Per-replica channel values, no statistics.

    Returns (channels, values) with values shaped
    (replicas, len(channels), len(grid)).  This is the only output mode
    allowed below the 100-replica statistical floor.
    """
    layout = _Layout(config)
    out = np.empty((config.replicas, len(layout.channels), layout.grid.size))
    for r in range(config.replicas):
        values = layout.replica(r)
        for ci, y in enumerate(values):
            out[r, ci] = y
    return layout.channels, out


def normality_stat(samples):
    """Sample skewness, excess kurtosis and the composite normality statistic.

    The composite is n * (b1^2/6 + (b2 - 3)^2/24), asymptotically
    chi-squared with 2 degrees of freedom under normality (99.9% point
    about 13.8).  Needs at least 1000 samples; raises
    DegenerateSampleError when the sample variance vanishes.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArgumentError("samples must be a 1-D array")
    n = arr.size
    if n < _MIN_NORMALITY:
        raise InvalidArgumentError(
            f"normality_stat needs at least {_MIN_NORMALITY} samples, got {n}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("samples must be finite")
    m = arr.mean()
    d = arr - m
    c2 = float(np.mean(d * d))
    if c2 <= 0.0:
        raise DegenerateSampleError("sample variance is zero; skewness undefined")
    c3 = float(np.mean(d**3))
    c4 = float(np.mean(d**4))
    b1 = c3 / c2**1.5
    excess = c4 / c2**2 - 3.0
    composite = n * (b1 * b1 / 6.0 + excess * excess / 24.0)
    return b1, excess, composite


@dataclass(frozen=True, eq=False)
class ConvergenceRow:
    """Summary of one epsilon in a convergence sweep."""

    epsilon: float
    max_cov_err: float
    se_at_max: float
    max_cross: float
    se_at_max_cross: float
    stats: EnsembleStats


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Per-epsilon covariance errors against a target model.

    rows are ordered by epsilon descending.  trend_ok records the
    one-sided check that the error at the smallest epsilon does not
    exceed the error at the largest beyond their combined standard
    errors (strict monotonicity would be flaky under Monte Carlo noise).
    """

    epsilons: tuple
    target: object
    target_cov: np.ndarray
    rows: tuple
    trend_ok: bool


def _cov_gap(stats: EnsembleStats, target_cov: np.ndarray):
    worst = -1.0
    worst_se = 0.0
    for name in stats.channels:
        gap = np.abs(stats.cov[name] - target_cov)
        idx = np.unravel_index(np.argmax(gap), gap.shape)
        if gap[idx] > worst:
            worst = float(gap[idx])
            worst_se = float(stats.se_cov[name][idx])
    return worst, worst_se


def convergence_study(config: EnsembleConfig, epsilons, target) -> ConvergenceReport:
    """Sweep epsilon (strictly decreasing) against a target covariance.

    All sweeps share the master seed, so every epsilon sees the same
    Poisson randomness (common random numbers); the trend check then
    compares like with like.
    """
    eps = [float(e) for e in epsilons]
    if len(eps) == 0:
        raise InvalidArgumentError("epsilons must be non-empty")
    if any(not (math.isfinite(e) and e > 0.0) for e in eps):
        raise InvalidArgumentError("epsilons must be finite and positive")
    if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
        raise InvalidArgumentError("epsilons must be strictly decreasing")
    grid = _check_grid(np.asarray(config.grid, dtype=np.float64))
    target_cov = cov_matrix(target, grid)

    rows = []
    for e in eps:
        cfg = replace(config, params=replace(config.params, epsilon=e))
        stats = run(cfg)
        worst, worst_se = _cov_gap(stats, target_cov)
        if stats.cross_cov is not None:
            cgap = np.abs(stats.cross_cov)
            idx = np.unravel_index(np.argmax(cgap), cgap.shape)
            max_cross = float(cgap[idx])
            se_cross = float(stats.se_cross[idx])
        else:
            max_cross = math.nan
            se_cross = math.nan
        rows.append(ConvergenceRow(
            epsilon=e,
            max_cov_err=worst,
            se_at_max=worst_se,
            max_cross=max_cross,
            se_at_max_cross=se_cross,
            stats=stats,
        ))

    if len(rows) == 1:
        trend_ok = True
    else:
        first, last = rows[0], rows[-1]
        slack = math.sqrt(first.se_at_max**2 + last.se_at_max**2)
        trend_ok = last.max_cov_err <= first.max_cov_err + slack
    return ConvergenceReport(
        epsilons=tuple(eps),
        target=target,
        target_cov=target_cov,
        rows=tuple(rows),
        trend_ok=trend_ok,
    )
