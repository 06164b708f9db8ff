"""Piecewise-Chebyshev antiderivatives of singular kernel sections.

Internal machinery: a kernel section f = f(t, .) is compiled once into a
vectorized primitive s -> int_0^s f(u) du so the oscillating Poisson
factor can afterwards be summed exactly per segment.  Panels are graded
geometrically toward power-law endpoints; on each smooth panel f is
interpolated by a Chebyshev series and integrated termwise, while a tiny
terminal stub at each singular endpoint carries the leading power's mass
in closed form.  Evaluation gathers each query's panel coefficients and
runs one shared Clenshaw recurrence, so large query arrays stay fully
vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev

from .errors import BudgetExceededError, InvalidArgumentError

__all__ = ["PanelPrimitive", "build_primitive"]

_KIND_SMOOTH = 0
_KIND_LEFT_STUB = 1
_KIND_RIGHT_STUB = 2

# Safety factor in the stub-depth rule; see _stub_depth.
_STUB_SAFETY = 64.0


def _clenshaw_rows(coef_rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Chebyshev series with a separate coefficient row per query point.
    two_x = 2.0 * x
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for k in range(coef_rows.shape[1] - 1, 0, -1):
        b1, b2 = coef_rows[:, k] + two_x * b1 - b2, b1
    return coef_rows[:, 0] + x * b1 - b2


@dataclass
class PanelPrimitive:
    """Vectorized s -> int_0^s f(u) du on [0, end], clamped outside."""

    breaks: np.ndarray      # (M+1,) ascending, breaks[0] = 0, breaks[-1] = end
    kind: np.ndarray        # (M,) panel kinds
    coef: np.ndarray        # (M, D) local Chebyshev coefficients of the primitive
    amp: np.ndarray         # (M,) stub amplitude (amp * dist^q is the stub mass)
    q: np.ndarray           # (M,) stub exponent, gamma + 1 > 0
    mass: np.ndarray        # (M,) integral over each panel
    base: np.ndarray        # (M,) integral up to each panel's left edge
    total: float
    nodes_used: int

    @property
    def end(self) -> float:
        return float(self.breaks[-1])

    def __call__(self, s) -> np.ndarray:
        s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
        out = np.empty(s_arr.shape, dtype=np.float64)
        below = s_arr <= 0.0
        above = s_arr >= self.breaks[-1]
        mid = ~(below | above)
        out[below] = 0.0
        out[above] = self.total
        if np.any(mid):
            sm = s_arr[mid]
            idx = np.searchsorted(self.breaks, sm, side="right") - 1
            a = self.breaks[idx]
            w = self.breaks[idx + 1] - a
            vals = np.empty(sm.shape, dtype=np.float64)
            kinds = self.kind[idx]

            smooth = kinds == _KIND_SMOOTH
            if np.any(smooth):
                i = idx[smooth]
                zeta = (2.0 * (sm[smooth] - a[smooth]) - w[smooth]) / w[smooth]
                np.clip(zeta, -1.0, 1.0, out=zeta)
                vals[smooth] = _clenshaw_rows(self.coef[i], zeta)
            left = kinds == _KIND_LEFT_STUB
            if np.any(left):
                i = idx[left]
                vals[left] = self.amp[i] * (sm[left] - a[left]) ** self.q[i]
            right = kinds == _KIND_RIGHT_STUB
            if np.any(right):
                i = idx[right]
                b = self.breaks[i + 1]
                vals[right] = self.mass[i] - self.amp[i] * (b - sm[right]) ** self.q[i]

            out[mid] = self.base[idx] + vals
        return out


def _stub_depth(gamma: float, tol: float) -> int:
    # Stub of width end * 2^-k carries relative mass ~ (2^-k)^(gamma+1) and
    # its pure-power model errs by a further O(2^-k) factor, so pushing
    # (2^-k)^(gamma+2) below tol / safety bounds the stub's contribution
    # to the overall error budget.
    k = np.log2(_STUB_SAFETY / tol) / (gamma + 2.0)
    return int(min(64.0, max(4.0, np.ceil(k))))


def _geometric_breaks(end: float, left_gamma, right_gamma, tol: float):
    """Initial panel edges graded toward each singular endpoint."""
    if left_gamma is None and right_gamma is None:
        return [0.0, end], None, None
    mid = 0.5 * end
    pts = [0.0]
    left_stub = right_stub = None
    if left_gamma is not None:
        delta = mid * 2.0 ** (-_stub_depth(left_gamma, tol))
        left_stub = delta
        edge = delta
        while edge < 0.66 * mid:
            pts.append(edge)
            edge *= 2.0
    pts.append(mid)
    if right_gamma is not None:
        delta = mid * 2.0 ** (-_stub_depth(right_gamma, tol))
        right_stub = delta
        edges = []
        edge = delta
        while edge < 0.66 * mid:
            edges.append(end - edge)
            edge *= 2.0
        pts.extend(reversed(edges))
    pts.append(end)
    return sorted(set(pts)), left_stub, right_stub


class _Panel:
    __slots__ = ("a", "b", "kind", "coef", "amp", "q", "mass", "err")

    def __init__(self, a, b, kind, coef=None, amp=0.0, q=1.0, mass=0.0, err=0.0):
        self.a, self.b, self.kind = a, b, kind
        self.coef, self.amp, self.q = coef, amp, q
        self.mass, self.err = mass, err


def build_primitive(f, end: float, *, tol: float = 1e-9, deg: int = 12,
                    left_gamma=None, right_gamma=None,
                    initial_breaks=None, max_nodes: int = 2_000_000,
                    max_rounds: int = 16) -> PanelPrimitive:
    """Compile a vectorized primitive of f on [0, end].

    f must accept numpy arrays of points strictly inside (0, end).
    left_gamma / right_gamma declare a power-law endpoint: near it,
    f(u) ~ const * dist^gamma with gamma > -1 (None means analytic up to
    the endpoint).  tol is a relative target for the total integral.
    initial_breaks forces interior panel edges (used for kink points of
    piecewise-linear kernels).  Raises BudgetExceededError when more than
    max_nodes kernel evaluations would be needed.
    """
    if not (end > 0.0 and np.isfinite(end)):
        raise InvalidArgumentError("end must be finite and positive")
    if not (0.0 < tol <= 1e-2):
        raise InvalidArgumentError("tol must lie in (0, 1e-2]")
    if deg < 4 or deg > 40:
        raise InvalidArgumentError("deg must lie in [4, 40]")
    for gamma in (left_gamma, right_gamma):
        if gamma is not None and not (-1.0 < gamma < 10.0):
            raise InvalidArgumentError("endpoint exponents must lie in (-1, 10)")

    nodes_used = 0

    def fit(a: float, b: float) -> _Panel:
        nonlocal nodes_used
        nodes_used += deg + 1
        if nodes_used > max_nodes:
            raise BudgetExceededError(
                "kernel-evaluation budget exhausted while building a primitive",
                {"nodes_used": nodes_used, "max_nodes": max_nodes,
                 "interval": (a, b), "end": end},
            )
        interp = Chebyshev.interpolate(f, deg, domain=[a, b])
        prim = interp.integ(lbnd=a)
        cheb_coef = prim.coef
        # error indicator: trailing interpolation coefficients times width
        tail = (abs(interp.coef[-1]) + abs(interp.coef[-2])) * (b - a)
        return _Panel(a, b, _KIND_SMOOTH, coef=cheb_coef,
                      mass=float(prim(b)), err=float(tail))

    def stub(a: float, b: float, gamma: float, left: bool) -> _Panel:
        nonlocal nodes_used
        nodes_used += 1
        width = b - a
        probe_dist = 0.5 * width
        point = a + probe_dist if left else b - probe_dist
        fval = float(np.atleast_1d(f(np.array([point])))[0])
        qexp = gamma + 1.0
        ampc = fval * probe_dist ** (-gamma) / qexp
        mass = ampc * width ** qexp
        kind = _KIND_LEFT_STUB if left else _KIND_RIGHT_STUB
        # model error is O(width / end) relative to the stub's own mass
        return _Panel(a, b, kind, amp=ampc, q=qexp, mass=mass,
                      err=abs(mass) * min(1.0, 8.0 * width / end))

    if initial_breaks is not None:
        edges = sorted({0.0, float(end), *(float(x) for x in initial_breaks
                                           if 0.0 < float(x) < end)})
        left_stub = right_stub = None
    else:
        edges, left_stub, right_stub = _geometric_breaks(end, left_gamma, right_gamma, tol)

    panels = []
    for a, b in zip(edges[:-1], edges[1:]):
        if left_stub is not None and a == 0.0:
            panels.append(stub(a, b, left_gamma, left=True))
        elif right_stub is not None and b == end:
            panels.append(stub(a, b, right_gamma, left=False))
        else:
            panels.append(fit(a, b))

    for _ in range(max_rounds):
        scale = max(sum(abs(p.mass) for p in panels), 1e-300)
        err = sum(p.err for p in panels)
        if err <= tol * scale:
            break
        budget = 0.5 * tol * scale / len(panels)
        worst = sorted((p for p in panels if p.kind == _KIND_SMOOTH and p.err > budget),
                       key=lambda p: -p.err)
        if not worst:
            break
        refined = set()
        for p in worst[: max(1, len(worst) // 2 + 1)]:
            refined.add(id(p))
        next_panels = []
        for p in panels:
            if id(p) in refined:
                m = 0.5 * (p.a + p.b)
                next_panels.append(fit(p.a, m))
                next_panels.append(fit(m, p.b))
            else:
                next_panels.append(p)
        panels = next_panels

    panels.sort(key=lambda p: p.a)
    m = len(panels)
    dim = deg + 2
    breaks = np.empty(m + 1, dtype=np.float64)
    kind = np.zeros(m, dtype=np.uint8)
    coef = np.zeros((m, dim), dtype=np.float64)
    amp = np.zeros(m, dtype=np.float64)
    qarr = np.ones(m, dtype=np.float64)
    mass = np.zeros(m, dtype=np.float64)
    for i, p in enumerate(panels):
        breaks[i] = p.a
        kind[i] = p.kind
        mass[i] = p.mass
        if p.kind == _KIND_SMOOTH:
            coef[i, : p.coef.size] = p.coef
        else:
            amp[i] = p.amp
            qarr[i] = p.q
    breaks[m] = panels[-1].b
    base = np.concatenate(([0.0], np.cumsum(mass)[:-1]))
    total = float(mass.sum())
    return PanelPrimitive(breaks, kind, coef, amp, qarr, mass, base, total, nodes_used)
