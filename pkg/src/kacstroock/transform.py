"""Kac-Stroock approximations driven by a single Poisson path.

Evaluates, for a kernel f and a unit-rate Poisson process N,

    Y(t)  = (2/eps) * integral f(t, s) * cos(theta * N(2s/eps^2)) ds
    Yt(t) = (2/eps) * integral f(t, s) * sin(theta * N(2s/eps^2)) ds

with both channels read off the same path.  The Poisson factor is
piecewise constant, so writing G(t, s) for the primitive of f(t, .) and
s_1 < s_2 < ... < s_n for the jump locations below the domain end L,
summation by parts gives the exact identity

    Y + i*Yt = (2/eps) * (e^{i theta n} G(t, L)
               - (1 - e^{-i theta}) * sum_j e^{i theta j} G(t, s_j)).

The oscillating factor is therefore handled exactly; the only numerical
work is the primitive G, compiled once per section t to a tolerance tied
to ApproxParams.quad_tol.  For the Lei-Nualart kernel the primitive
splits into a compiled head and a closed-form power (or log) tail, which
keeps the cost per jump constant even when the truncation radius is in
the tens of thousands.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    BudgetExceededError,
    InvalidArgumentError,
    InvalidCombinationError,
    OutOfHorizonError,
)
from ._panels import build_primitive
from .kernels import (
    FbmVolterra,
    LeiNualart,
    LeiNualartX,
    Tabulated,
    cov,
    decomposition_constant,
    kernel_value,
    validate_theta,
)
from .poisson import BLOCK_DRAWS, PoissonPath, _first_block_size

__all__ = [
    "ApproxParams",
    "PathValues",
    "transform",
    "truncation_radius_for",
    "subfbm_combine",
]

# Beyond s = _EXP_CUTOFF / t the factor (1 - e^{-st}) is 1 to double
# precision, so the Lei-Nualart primitive continues in closed form.
_EXP_CUTOFF = 45.0


@dataclass(frozen=True)
class ApproxParams:
    """Parameters of one Kac-Stroock approximation run.

    epsilon is the small parameter of the approximation, theta the phase
    of the oscillating factor.  truncation_radius bounds the s-domain for
    kernels supported on all of [0, inf); leave it None to let transform
    pick a tail-bias-controlled default (or the kernel support, where
    that is compact).  quad_tol is the relative tolerance of the compiled
    kernel primitives, max_nodes their total kernel-evaluation budget,
    and event_budget caps the expected number of Poisson events a run is
    allowed to need.
    """

    epsilon: float
    theta: float
    truncation_radius: Optional[float] = None
    quad_tol: float = 1e-8
    max_nodes: int = 2_000_000
    event_budget: float = 1e9

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise InvalidArgumentError("epsilon must be finite and positive")
        if not math.isfinite(self.theta):
            raise InvalidArgumentError("theta must be finite")
        report = validate_theta(self.theta)
        if not report.admissible:
            raise InvalidArgumentError(report.message())
        if self.truncation_radius is not None and not (
            math.isfinite(self.truncation_radius) and self.truncation_radius > 0.0
        ):
            raise InvalidArgumentError("truncation_radius must be finite and positive")
        if not (0.0 < self.quad_tol <= 1e-2):
            raise InvalidArgumentError("quad_tol must lie in (0, 1e-2]")
        if int(self.max_nodes) != self.max_nodes or self.max_nodes < 1:
            raise InvalidArgumentError("max_nodes must be a positive integer")
        if not (math.isfinite(self.event_budget) and self.event_budget > 0.0):
            raise InvalidArgumentError("event_budget must be positive")


@dataclass(frozen=True, eq=False)
class PathValues:
    """Both channels of one approximation evaluated on a time grid.

    cos_values holds Y and sin_values holds Yt; both were computed from
    the same Poisson path, identified by path_tag.
    """

    grid: np.ndarray
    cos_values: np.ndarray
    sin_values: np.ndarray
    params: ApproxParams
    path_tag: int
    kernel: object = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64).copy()
        cos_v = np.asarray(self.cos_values, dtype=np.float64).copy()
        sin_v = np.asarray(self.sin_values, dtype=np.float64).copy()
        if grid.ndim != 1 or cos_v.shape != grid.shape or sin_v.shape != grid.shape:
            raise InvalidArgumentError(
                "grid, cos_values and sin_values must be 1-D and equally long"
            )
        if not (np.all(np.isfinite(cos_v)) and np.all(np.isfinite(sin_v))):
            raise InvalidArgumentError("channel values must be finite")
        for name, arr in (("grid", grid), ("cos_values", cos_v), ("sin_values", sin_v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.grid.size


def _check_grid(grid) -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError("grid must be a non-empty 1-D array of times")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("grid times must be finite")
    if np.any(arr < 0.0):
        raise InvalidArgumentError("grid times must be non-negative")
    if np.any(np.diff(arr) < 0.0):
        raise InvalidArgumentError("grid times must be non-decreasing")
    return arr


def truncation_radius_for(kernel, theta: float, tail_tol: float, T: Optional[float] = None) -> float:
    """Smallest s-domain radius whose neglected tail is below tail_tol.

    The second moment of the dropped tail of either channel is at most
    (4 / (1 - cos theta)) * integral_R^inf f(t, s)^2 ds, and for the
    Lei-Nualart kernel that integral is bounded by R^{-H} / H, giving

        R = (4 / (H * (1 - cos theta) * tail_tol^2))^{1/H}.

    Compactly supported kernels need no truncation: the fBm kernel
    returns its horizon T (which must be supplied) and a tabulated kernel
    returns the end of its table.
    """
    if not (math.isfinite(tail_tol) and tail_tol > 0.0):
        raise InvalidArgumentError("tail_tol must be positive")
    report = validate_theta(theta, H=getattr(kernel, "H", None))
    if not report.admissible:
        raise InvalidArgumentError(report.message())
    if isinstance(kernel, FbmVolterra):
        if T is None:
            raise InvalidArgumentError(
                "the fBm kernel is supported on [0, t]; pass the horizon T"
            )
        if not (math.isfinite(T) and T > 0.0):
            raise InvalidArgumentError("T must be finite and positive")
        return float(T)
    if isinstance(kernel, Tabulated):
        return float(kernel.grid[-1])
    if isinstance(kernel, LeiNualart):
        H = kernel.H
        return (4.0 / (H * (1.0 - math.cos(theta)) * tail_tol**2)) ** (1.0 / H)
    raise InvalidArgumentError(f"unknown kernel spec {kernel!r}")


def _default_ln_radius(kernel: LeiNualart, theta: float, T: float) -> float:
    # Tail bias one order below typical Monte Carlo tolerances: tail_tol
    # is 5% of the process standard deviation at the horizon.
    if kernel.H == 1.0:
        raise InvalidArgumentError(
            "no default truncation radius exists at H = 1; pass "
            "truncation_radius, or truncation_radius_for with an explicit tail_tol"
        )
    if T == 0.0:
        # Kernel vanishes identically at t = 0; any radius gives zero.
        return 1.0
    scale = math.sqrt(cov(LeiNualartX(kernel.H), T, T))
    return truncation_radius_for(kernel, theta, 0.05 * scale)


class _Profile:
    """Primitive G(t, .) of one kernel section, ready for bulk evaluation.

    Either fully compiled on [0, end] (head covers everything), or split
    at s_head with the closed-form tail offset + c * phi(s), where phi is
    s**p, or log(s) when p == 0.
    """

    __slots__ = ("end", "head", "s_head", "split", "offset", "c", "g_end")

    def __init__(self, end, head, s_head, split, offset, c, g_end):
        self.end = end
        self.head = head
        self.s_head = s_head
        self.split = split
        self.offset = offset
        self.c = c
        self.g_end = g_end


def _tail_phi(s: np.ndarray, p: float) -> np.ndarray:
    return np.log(s) if p == 0.0 else s**p


def _tail_phi_scalar(s: float, p: float) -> float:
    return math.log(s) if p == 0.0 else s**p


class _Plan:
    """Precompiled state shared by every evaluation of one transform.

    Builds the per-section primitives once, owns the phase table, and
    exposes a block-at-a-time accumulator so a materialized path and a
    streamed one produce bit-identical results (block boundaries follow
    poisson.jump_blocks).
    """

    def __init__(self, kernel, grid, params: ApproxParams):
        self.kernel = kernel
        self.grid = _check_grid(grid)
        self.params = params
        report = validate_theta(params.theta, H=getattr(kernel, "H", None))
        if not report.admissible:
            raise InvalidArgumentError(report.message())
        self.eps = float(params.epsilon)
        self.theta = float(params.theta)
        self.scale = self.eps * self.eps / 2.0
        self.tail_p = 0.0

        self._build_profiles()

        self.ends = np.array([p.end for p in self.profiles], dtype=np.float64)
        self.g_end = np.array([p.g_end for p in self.profiles], dtype=np.float64)
        self.s_max = float(self.ends.max())
        self.u_max = 2.0 * self.s_max / (self.eps * self.eps)
        if self.u_max > params.event_budget:
            raise BudgetExceededError(
                f"expected event count {self.u_max:.3e} exceeds event_budget "
                f"{params.event_budget:.3e}; raise the budget, shrink the "
                "truncation radius, or use a larger epsilon",
                {"expected_events": self.u_max, "event_budget": params.event_budget},
            )
        self.w_table = np.exp(1j * self.theta * np.arange(1, BLOCK_DRAWS + 1))
        self.dE = 1.0 - cmath.exp(-1j * self.theta)

    # -- profile construction ------------------------------------------------

    def _build_profiles(self):
        kernel = self.kernel
        params = self.params
        trunc = params.truncation_radius
        budget = int(params.max_nodes)
        tol = params.quad_tol

        def build(f, end, **kw):
            nonlocal budget
            try:
                prim = build_primitive(f, end, tol=tol, max_nodes=budget, **kw)
            except BudgetExceededError as exc:
                diag = dict(exc.diagnostics or {})
                diag["profiles_completed"] = sum(p is not None for p in profiles)
                diag["max_nodes"] = params.max_nodes
                raise BudgetExceededError(str(exc), diag) from None
            budget -= prim.nodes_used
            return prim

        profiles: list = []
        zero = _Profile(0.0, None, 0.0, False, 0.0, 0.0, 0.0)

        if isinstance(kernel, Tabulated):
            end = float(kernel.grid[-1])
            if trunc is not None and trunc < end:
                raise InvalidArgumentError(
                    "truncation_radius below the table end would cut a "
                    "compactly supported kernel; pass at least "
                    f"{end!r} or leave it None"
                )
            head = build(lambda s: kernel_value(kernel, 0.0, s), end,
                         initial_breaks=kernel.grid[1:-1])
            shared = _Profile(end, head, end, False, 0.0, 0.0, head.total)
            profiles = [shared for _ in self.grid]

        elif isinstance(kernel, FbmVolterra):
            H = kernel.H
            T = float(self.grid[-1])
            if trunc is not None and trunc < T:
                raise InvalidArgumentError(
                    "truncation_radius below the grid horizon would cut the "
                    "fBm kernel's support [0, t]; pass at least the horizon "
                    "or leave it None"
                )
            gam = abs(H - 1.0) / 2.0
            cache: dict = {}
            for t in self.grid:
                t = float(t)
                if t in cache:
                    profiles.append(cache[t])
                    continue
                if t == 0.0:
                    prof = zero
                else:
                    head = build(
                        lambda s, t=t: kernel_value(kernel, t, s), t,
                        left_gamma=None if H == 1.0 else -gam,
                        right_gamma=None if H == 1.0 else (H - 1.0) / 2.0,
                    )
                    prof = _Profile(t, head, t, False, 0.0, 0.0, head.total)
                cache[t] = prof
                profiles.append(prof)

        elif isinstance(kernel, LeiNualart):
            H = kernel.H
            T = float(self.grid[-1])
            if trunc is not None:
                radius = float(trunc)
            else:
                radius = _default_ln_radius(kernel, params.theta, T)
            self.tail_p = 0.0 if H == 1.0 else (1.0 - H) / 2.0
            tail_c = 1.0 if H == 1.0 else 1.0 / self.tail_p
            left_gamma = None if H == 1.0 else (1.0 - H) / 2.0
            cache = {}
            for t in self.grid:
                t = float(t)
                if t in cache:
                    profiles.append(cache[t])
                    continue
                if t == 0.0:
                    prof = zero
                else:
                    s_head = _EXP_CUTOFF / t
                    if radius <= s_head:
                        head = build(lambda s, t=t: kernel_value(kernel, t, s),
                                     radius, left_gamma=left_gamma)
                        prof = _Profile(radius, head, radius, False, 0.0, 0.0,
                                        head.total)
                    else:
                        head = build(lambda s, t=t: kernel_value(kernel, t, s),
                                     s_head, left_gamma=left_gamma)
                        offset = head.total - tail_c * _tail_phi_scalar(
                            s_head, self.tail_p)
                        g_end = offset + tail_c * _tail_phi_scalar(
                            radius, self.tail_p)
                        prof = _Profile(radius, head, s_head, True,
                                        offset, tail_c, g_end)
                cache[t] = prof
                profiles.append(prof)
        else:
            raise InvalidArgumentError(f"unknown kernel spec {kernel!r}")

        self.profiles = profiles

    # -- evaluation ----------------------------------------------------------

    def new_state(self):
        return _State(self.grid.size)

    def process_block(self, u_block: np.ndarray, state: "_State") -> None:
        m = u_block.size
        if m == 0:
            return
        E = state.carry * self.w_table[:m]
        state.carry = complex(E[-1])
        s = u_block * self.scale
        s_last = float(s[-1])
        phi = None
        s1 = s2 = None
        for i, prof in enumerate(self.profiles):
            L = prof.end
            n_in = m if s_last < L else int(np.searchsorted(s, L, side="left"))
            if n_in == 0:
                continue
            state.counts[i] += n_in
            if not prof.split:
                state.acc[i] += np.dot(E[:n_in], prof.head(s[:n_in]))
                continue
            h = int(np.searchsorted(s, prof.s_head, side="left"))
            h = min(h, n_in)
            if h:
                state.acc[i] += np.dot(E[:h], prof.head(s[:h]))
            if h == n_in:
                continue
            if phi is None:
                phi = _tail_phi(s, self.tail_p)
            if h == 0 and n_in == m:
                if s1 is None:
                    s1 = complex(E.sum())
                    s2 = complex(np.dot(E, phi))
                state.acc[i] += prof.offset * s1 + prof.c * s2
            else:
                part = E[h:n_in]
                state.acc[i] += prof.offset * complex(part.sum()) + prof.c * complex(
                    np.dot(part, phi[h:n_in]))

    def finalize(self, state: "_State"):
        boundary = np.exp(1j * self.theta * state.counts) * self.g_end
        z = (2.0 / self.eps) * (boundary - self.dE * state.acc)
        return np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)


class _State:
    """Per-path accumulators; one instance per replica."""

    __slots__ = ("acc", "counts", "carry")

    def __init__(self, n: int):
        self.acc = np.zeros(n, dtype=np.complex128)
        self.counts = np.zeros(n, dtype=np.int64)
        self.carry = 1.0 + 0.0j


def transform(kernel, grid, path: PoissonPath, params: ApproxParams) -> PathValues:
    """Evaluate both channels of the approximation along one Poisson path.

    The path must cover the rescaled domain: its horizon has to reach
    2 * R / epsilon^2, where R is the integration end actually used
    (kernel support, or the truncation radius for the Lei-Nualart
    kernel).  Jumps beyond that point are ignored.
    """
    plan = _Plan(kernel, grid, params)
    if path.horizon < plan.u_max:
        raise OutOfHorizonError(
            f"path horizon {path.horizon:g} is shorter than the required "
            f"2*R/epsilon^2 = {plan.u_max:g}"
        )
    state = plan.new_state()
    u = path.jump_times
    n_use = int(np.searchsorted(u, plan.u_max, side="right"))
    pos = 0
    take = min(_first_block_size(plan.u_max), n_use)
    while pos < n_use:
        plan.process_block(u[pos : pos + take], state)
        pos += take
        take = min(BLOCK_DRAWS, n_use - pos)
    y, y_tilde = plan.finalize(state)
    return PathValues(
        grid=plan.grid,
        cos_values=y,
        sin_values=y_tilde,
        params=params,
        path_tag=path.seed_tag,
        kernel=kernel,
    )


_CHANNELS = ("cos", "sin")


def _channel_of(values: PathValues, channel: str) -> np.ndarray:
    if channel not in _CHANNELS:
        raise InvalidArgumentError(f"channel must be one of {_CHANNELS}, got {channel!r}")
    return values.cos_values if channel == "cos" else values.sin_values


def subfbm_combine(
    x_vals: PathValues,
    b_vals: PathValues,
    H: float,
    x_channel: str = "cos",
    b_channel: str = "sin",
) -> np.ndarray:
    """Combine Lei-Nualart and fBm channels into a sub-fBm approximation.

    Returns C1(H) * x + b pointwise, the decomposition of sub-fractional
    Brownian motion with H in (0, 1).  Both inputs must come from the
    same Poisson path and the same (epsilon, theta), on identical grids,
    and must use opposite channels so their limits are independent.
    """
    if not (0.0 < H < 1.0):
        raise InvalidArgumentError(
            f"the sub-fBm decomposition needs H in (0, 1), got {H!r}"
        )
    if x_vals.path_tag != b_vals.path_tag:
        raise InvalidCombinationError(
            "inputs were built from different Poisson paths (path_tag mismatch)"
        )
    if x_vals.grid.shape != b_vals.grid.shape or not np.array_equal(
        x_vals.grid, b_vals.grid
    ):
        raise InvalidCombinationError("inputs live on different time grids")
    px, pb = x_vals.params, b_vals.params
    if px.epsilon != pb.epsilon or px.theta != pb.theta:
        raise InvalidCombinationError(
            "inputs use different (epsilon, theta); the limits would not pair"
        )
    x = _channel_of(x_vals, x_channel)
    b = _channel_of(b_vals, b_channel)
    if x_channel == b_channel:
        raise InvalidCombinationError(
            "both inputs use the same oscillation channel; their limits are "
            "not independent, so the decomposition does not apply"
        )
    for vals, want, role in ((x_vals, LeiNualart, "x"), (b_vals, FbmVolterra, "b")):
        k = vals.kernel
        if k is None or isinstance(k, Tabulated):
            continue
        if not isinstance(k, want):
            raise InvalidCombinationError(
                f"{role} input must come from a {want.__name__} kernel, "
                f"got {type(k).__name__}"
            )
        if k.H != H:
            raise InvalidCombinationError(
                f"{role} input was built at H={k.H!r}, expected H={H!r}"
            )
    c1 = decomposition_constant(H, "sub_from_fbm")
    return c1 * x + b
