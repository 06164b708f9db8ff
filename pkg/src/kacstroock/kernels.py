"""Deterministic kernels, covariance models, and admissibility checks.

Conventions
-----------
The index H lives in (0, 2) throughout, twice the usual Hurst parameter
(H_here = 2 * H_usual).  With that convention fractional Brownian motion
has covariance (s^H + t^H - |t - s|^H) / 2, sub-fractional Brownian
motion has s^H + t^H - ((s+t)^H + |t-s|^H) / 2, and H = 1 collapses both
to standard Brownian motion.  The mapping is documented here once and not
exposed as an API switch.

Kernel families
---------------
* Volterra kernel of fBm, supported on 0 <= s <= t:

      K(t, s) = d_H * (t-s)^((H-1)/2)
              + d_H * (1-H)/2 * integral_s^t (u-s)^((H-3)/2)
                                  * (1 - (s/u)^((1-H)/2)) du

  so that int_0^T K(t,r) K(s,r) dr reproduces the fBm covariance.  The
  inner integral is singular at u = s; after u = s + (t-s) y it becomes
  (t-s)^((H-1)/2) * J with J = int_0^1 y^((H-3)/2) phi(y) dy and
  phi(y) = 1 - (1 + (t-s)/s * y)^(-(1-H)/2), which `_fbm_j` integrates on
  dyadic panels with a closed-form estimate for the leftover tail at 0.
  The kernel diverges like s^(-|H-1|/2) as s -> 0 and, for H < 1, like
  (t-s)^((H-1)/2) as s -> t; both singularities are square integrable.

* Lei-Nualart kernel Phi(t, r) = (1 - e^(-rt)) * r^(-(1+H)/2) on r > 0,
  whose Wiener integral is the process X^H with covariance
  Gamma(1-H)/H * (t^H + s^H - (t+s)^H)          for H in (0,1),
  Gamma(2-H)/(H (H-1)) * ((t+s)^H - t^H - s^H)  for H in (1,2);
  no closed form exists at H = 1.

* Tabulated kernels: user-supplied (grid, values) read as a t-independent
  piecewise-linear function, zero outside the grid.

Decomposition constants C1 = sqrt(H / (2 Gamma(1-H))) for H in (0,1) and
C2 = sqrt(H (H-1) / (2 Gamma(2-H))) for H in (1,2) tie the three
covariances together: C1^2 cov_X + cov_fbm = cov_subfbm and
C2^2 cov_X + cov_subfbm = cov_fbm.

The gamma function is the platform implementation (math.gamma, a
Lanczos-type approximation); tests pin it against a high-precision oracle
to better than 1e-12 relative on (0, 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import (
    InvalidArgumentError,
    SingularPointError,
    UnsupportedParameterError,
)

__all__ = [
    "FbmVolterra",
    "LeiNualart",
    "Tabulated",
    "KernelSpec",
    "Fbm",
    "SubFbm",
    "LeiNualartX",
    "CovModel",
    "ThetaReport",
    "d_H",
    "fbm_kernel",
    "lei_nualart_kernel",
    "tabulated_value",
    "kernel_value",
    "kernel_domain_end",
    "cov",
    "cov_matrix",
    "decomposition_constant",
    "validate_theta",
]

_TWO_PI = 2.0 * math.pi


def _check_H(H: float) -> float:
    if not isinstance(H, (int, float, np.floating)) or isinstance(H, bool):
        raise InvalidArgumentError("H must be a real number")
    H = float(H)
    if not (0.0 < H < 2.0) or not math.isfinite(H):
        raise InvalidArgumentError(f"H must lie strictly in (0, 2), got {H}")
    return H


# ---------------------------------------------------------------------------
# kernel and covariance specification types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FbmVolterra:
    """Volterra kernel of fractional Brownian motion, support [0, t]."""

    H: float

    def __post_init__(self):
        object.__setattr__(self, "H", _check_H(self.H))


@dataclass(frozen=True)
class LeiNualart:
    """Kernel (1 - e^(-rt)) r^(-(1+H)/2) of the process X^H, support (0, inf)."""

    H: float

    def __post_init__(self):
        object.__setattr__(self, "H", _check_H(self.H))


@dataclass(frozen=True, eq=False)
class Tabulated:
    """t-independent piecewise-linear kernel on a fixed grid, zero outside."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 2:
            raise InvalidArgumentError("tabulated grid needs at least two points")
        if values.shape != grid.shape:
            raise InvalidArgumentError("tabulated grid and values must have equal length")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(values)):
            raise InvalidArgumentError("tabulated grid and values must be finite")
        if grid[0] < 0.0:
            raise InvalidArgumentError("tabulated grid must start at a non-negative time")
        if np.any(np.diff(grid) <= 0.0):
            raise InvalidArgumentError("tabulated grid must be strictly increasing")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


KernelSpec = Union[FbmVolterra, LeiNualart, Tabulated]


@dataclass(frozen=True)
class Fbm:
    """Fractional Brownian motion covariance, H in (0, 2)."""

    H: float

    def __post_init__(self):
        object.__setattr__(self, "H", _check_H(self.H))


@dataclass(frozen=True)
class SubFbm:
    """Sub-fractional Brownian motion covariance, H in (0, 2)."""

    H: float

    def __post_init__(self):
        object.__setattr__(self, "H", _check_H(self.H))


@dataclass(frozen=True)
class LeiNualartX:
    """Covariance of the Lei-Nualart process X^H; H = 1 has no formula."""

    H: float

    def __post_init__(self):
        object.__setattr__(self, "H", _check_H(self.H))


CovModel = Union[Fbm, SubFbm, LeiNualartX]


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def d_H(H: float) -> float:
    """Normalizing constant of the fBm Volterra kernel.

    d_H = sqrt(H * Gamma((3-H)/2) / (Gamma((H+1)/2) * Gamma(2-H))),
    equal to 1 at H = 1.
    """
    H = _check_H(H)
    num = H * math.gamma((3.0 - H) / 2.0)
    den = math.gamma((H + 1.0) / 2.0) * math.gamma(2.0 - H)
    return math.sqrt(num / den)


def decomposition_constant(H: float, regime: str) -> float:
    """C1 (regime 'sub_from_fbm', H in (0,1)) or C2 ('fbm_from_sub', H in (1,2)).

    C1^2 * cov_X + cov_fbm equals cov_subfbm; C2^2 * cov_X + cov_subfbm
    equals cov_fbm.  The regimes do not overlap: each constant exists only
    on its own side of H = 1.
    """
    H = _check_H(H)
    if regime == "sub_from_fbm":
        if not H < 1.0:
            raise InvalidArgumentError("regime 'sub_from_fbm' requires H in (0, 1)")
        return math.sqrt(H / (2.0 * math.gamma(1.0 - H)))
    if regime == "fbm_from_sub":
        if not H > 1.0:
            raise InvalidArgumentError("regime 'fbm_from_sub' requires H in (1, 2)")
        return math.sqrt(H * (H - 1.0) / (2.0 * math.gamma(2.0 - H)))
    raise InvalidArgumentError(
        f"regime must be 'sub_from_fbm' or 'fbm_from_sub', got {regime!r}"
    )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

_GL16_NODES, _GL16_WEIGHTS = np.polynomial.legendre.leggauss(16)
_MAX_DYADIC_PANELS = 220


def _fbm_j(H: float, rho: np.ndarray, rel_tol: float) -> np.ndarray:
    """J(rho) = int_0^1 y^((H-3)/2) * (1 - (1 + rho y)^(-(1-H)/2)) dy.

    Dyadic panels [2^-(k+1), 2^-k] with a fixed Gauss rule per panel; the
    integrand is analytic on each panel (nearest singularity at y = -1/rho
    or y = 0, both at least a panel-width away), so the per-panel rule is
    exact to machine precision and the only real error source is where the
    descent stops.  Once rho * 2^-k is small the integrand is a pure power
    a * rho * y^((H-1)/2) and the remaining mass is added in closed form.
    """
    a = (1.0 - H) / 2.0
    g = (H - 3.0) / 2.0
    half_order = (H + 1.0) / 2.0  # decay order of panel masses in the power regime
    ratio = 2.0 ** (-half_order)
    geo = ratio / (1.0 - ratio)

    out = np.zeros(rho.shape, dtype=np.float64)
    active = np.arange(rho.size)
    rho_act = rho
    hi = 1.0
    for _ in range(_MAX_DYADIC_PANELS):
        lo = 0.5 * hi
        y = lo + 0.5 * (hi - lo) * (_GL16_NODES + 1.0)
        wy = (0.5 * (hi - lo)) * _GL16_WEIGHTS * y ** g
        phi = -np.expm1(-a * np.log1p(np.multiply.outer(rho_act, y)))
        panel = phi @ wy
        out[active] += panel
        scale = np.maximum(np.abs(out[active]), 1e-300)
        done = (rho_act * lo <= 0.05) & (np.abs(panel) * geo <= 0.5 * rel_tol * scale)
        if np.any(done):
            idx = active[done]
            # closed-form leading-power tail below y = lo
            out[idx] += a * rho[idx] * lo ** half_order / half_order
            keep = ~done
            active = active[keep]
            rho_act = rho_act[keep]
            if active.size == 0:
                return out
        hi = lo
    raise RuntimeError("dyadic descent failed to converge; this is a bug")


def fbm_kernel(H: float, t: float, s, quad_tol: float = 1e-8):
    """Volterra kernel K(t, s) of fBm, vectorized over s.

    Returns 0 for s > t (the kernel is supported on [0, t]) and +inf at
    s = 0 for H != 1, where the true limit diverges like s^(-|H-1|/2).
    Exactly at s = t the kernel diverges for H < 1 and the call raises
    instead of inventing a value; quadrature must route around that point.
    For H = 1 the kernel is the indicator of [0, t].  quad_tol is the
    relative tolerance of the inner integral.
    """
    H = _check_H(H)
    if not (isinstance(t, (int, float, np.floating)) and math.isfinite(t)) or t <= 0:
        raise InvalidArgumentError("t must be finite and positive")
    if not (0.0 < quad_tol <= 1e-2):
        raise InvalidArgumentError("quad_tol must lie in (0, 1e-2]")
    t = float(t)
    s_arr = np.asarray(s, dtype=np.float64)
    scalar = s_arr.ndim == 0
    s_arr = np.atleast_1d(s_arr)
    if not np.all(np.isfinite(s_arr)) or np.any(s_arr < 0.0):
        raise InvalidArgumentError("s must be finite and non-negative")

    out = np.zeros(s_arr.shape, dtype=np.float64)
    if H == 1.0:
        out[s_arr <= t] = 1.0
        return float(out[0]) if scalar else out
    if H < 1.0 and np.any(s_arr == t):
        raise SingularPointError(
            f"K(t, s) diverges at s = t = {t} for H = {H} < 1; "
            "evaluate strictly inside (0, t)"
        )
    out[s_arr == 0.0] = np.inf

    inside = (s_arr > 0.0) & (s_arr < t)
    if np.any(inside):
        si = s_arr[inside]
        x = t - si
        j = _fbm_j(H, x / si, quad_tol)
        a = (1.0 - H) / 2.0
        out[inside] = d_H(H) * x ** ((H - 1.0) / 2.0) * (1.0 + a * j)
    return float(out[0]) if scalar else out


def lei_nualart_kernel(H: float, t: float, r):
    """Phi(t, r) = (1 - e^(-rt)) * r^(-(1+H)/2), vectorized over r.

    At r = 0 the limit t * r^((1-H)/2) is returned: 0 for H < 1, t for
    H = 1, +inf for H > 1.  Uses expm1 so small rt loses no precision.
    """
    H = _check_H(H)
    if not (isinstance(t, (int, float, np.floating)) and math.isfinite(t)) or t < 0:
        raise InvalidArgumentError("t must be finite and non-negative")
    t = float(t)
    r_arr = np.asarray(r, dtype=np.float64)
    scalar = r_arr.ndim == 0
    r_arr = np.atleast_1d(r_arr)
    if not np.all(np.isfinite(r_arr)) or np.any(r_arr < 0.0):
        raise InvalidArgumentError("r must be finite and non-negative")

    out = np.empty(r_arr.shape, dtype=np.float64)
    pos = r_arr > 0.0
    rp = r_arr[pos]
    out[pos] = -np.expm1(-rp * t) * rp ** (-(1.0 + H) / 2.0)
    if np.any(~pos):
        if t == 0.0:
            limit = 0.0
        elif H < 1.0:
            limit = 0.0
        elif H == 1.0:
            limit = t
        else:
            limit = np.inf
        out[~pos] = limit
    return float(out[0]) if scalar else out


def tabulated_value(spec: Tabulated, s):
    """Piecewise-linear interpolant of a tabulated kernel, zero off-grid."""
    s_arr = np.asarray(s, dtype=np.float64)
    out = np.interp(s_arr, spec.grid, spec.values, left=0.0, right=0.0)
    return float(out) if s_arr.ndim == 0 else out


def kernel_value(spec: KernelSpec, t: float, s):
    """Evaluate any kernel family at section t (ignored for Tabulated)."""
    if isinstance(spec, FbmVolterra):
        return fbm_kernel(spec.H, t, s)
    if isinstance(spec, LeiNualart):
        return lei_nualart_kernel(spec.H, t, s)
    if isinstance(spec, Tabulated):
        return tabulated_value(spec, s)
    raise InvalidArgumentError(f"unknown kernel spec {spec!r}")


def kernel_domain_end(spec: KernelSpec, t: float) -> float:
    """Upper end of the kernel's support at section t (inf for Lei-Nualart)."""
    if isinstance(spec, FbmVolterra):
        return float(t)
    if isinstance(spec, LeiNualart):
        return math.inf
    if isinstance(spec, Tabulated):
        return float(spec.grid[-1])
    raise InvalidArgumentError(f"unknown kernel spec {spec!r}")


# ---------------------------------------------------------------------------
# covariance models
# ---------------------------------------------------------------------------

def _check_times(t, s):
    t_arr = np.asarray(t, dtype=np.float64)
    s_arr = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(t_arr)) or not np.all(np.isfinite(s_arr)):
        raise InvalidArgumentError("times must be finite")
    if np.any(t_arr < 0.0) or np.any(s_arr < 0.0):
        raise InvalidArgumentError("times must be non-negative")
    return t_arr, s_arr


def cov(model: CovModel, t, s):
    """Closed-form covariance of the selected Gaussian model.

    Vectorized over broadcastable t, s.  LeiNualartX refuses H = 1, where
    both branches of its formula degenerate.
    """
    t_arr, s_arr = _check_times(t, s)
    H = model.H
    if isinstance(model, Fbm):
        out = 0.5 * (t_arr ** H + s_arr ** H - np.abs(t_arr - s_arr) ** H)
    elif isinstance(model, SubFbm):
        out = t_arr ** H + s_arr ** H - 0.5 * ((t_arr + s_arr) ** H + np.abs(t_arr - s_arr) ** H)
    elif isinstance(model, LeiNualartX):
        if H == 1.0:
            raise UnsupportedParameterError(
                "the X^H covariance has no closed form at H = 1"
            )
        if H < 1.0:
            c = math.gamma(1.0 - H) / H
            out = c * (t_arr ** H + s_arr ** H - (t_arr + s_arr) ** H)
        else:
            c = math.gamma(2.0 - H) / (H * (H - 1.0))
            out = c * ((t_arr + s_arr) ** H - t_arr ** H - s_arr ** H)
    else:
        raise InvalidArgumentError(f"unknown covariance model {model!r}")
    if out.ndim == 0:
        return float(out)
    return out


def cov_matrix(model: CovModel, grid) -> np.ndarray:
    """Covariance matrix of the model on a time grid."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise InvalidArgumentError("grid must be a non-empty 1-D array")
    return np.asarray(cov(model, g[:, None], g[None, :]), dtype=np.float64)


# ---------------------------------------------------------------------------
# theta admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaReport:
    """Outcome of the admissibility check for the oscillation angle."""

    theta: float
    H: Optional[float]
    margin: float
    admissible: bool
    failures: tuple
    violated_indices: tuple

    def message(self) -> str:
        if self.admissible:
            return f"theta={self.theta} admissible"
        parts = list(self.failures)
        if self.violated_indices:
            parts.append(
                "cos((2i+1)theta) = 1 violated at i in "
                f"{list(self.violated_indices)}"
            )
        return f"theta={self.theta} rejected: " + "; ".join(parts)


def validate_theta(theta: float, H: Optional[float] = None, margin: float = 1e-9) -> ThetaReport:
    """Check that the angle is admissible for the given index H.

    The angle must lie in (0, pi) or (pi, 2 pi), kept away from the
    endpoints by `margin`.  For H <= 1/2 the construction additionally
    needs cos((2i+1) theta) != 1 for every integer
    0 <= i <= floor(floor(1/H) / 2); angles with
    |cos((2i+1) theta) - 1| <= margin are rejected and the offending i
    are reported.  Returns a report; callers decide whether to abort.
    """
    if not (isinstance(theta, (int, float, np.floating)) and math.isfinite(theta)):
        raise InvalidArgumentError("theta must be a finite real number")
    if not (isinstance(margin, (int, float)) and 0.0 < margin < 0.1):
        raise InvalidArgumentError("margin must lie in (0, 0.1)")
    theta = float(theta)
    if H is not None:
        H = _check_H(H)

    failures = []
    boundary_dist = min(abs(theta), abs(theta - math.pi), abs(theta - _TWO_PI))
    if theta <= 0.0 or theta >= _TWO_PI or boundary_dist <= margin:
        failures.append("theta must lie in (0, pi) union (pi, 2 pi)")

    violated = []
    if H is not None and H <= 0.5:
        i_max = int(math.floor(0.5 * math.floor(1.0 / H)))
        chunk = 1 << 16
        i0 = 0
        while i0 <= i_max:
            i = np.arange(i0, min(i0 + chunk, i_max + 1), dtype=np.float64)
            bad = np.abs(np.cos((2.0 * i + 1.0) * theta) - 1.0) <= margin
            violated.extend(int(v) for v in i[bad])
            i0 += chunk

    ok = not failures and not violated
    return ThetaReport(theta, H, float(margin), ok, tuple(failures), tuple(violated))
