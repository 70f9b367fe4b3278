"""Adaptive Gauss-Kronrod quadrature, cumulative integrals, improper-integral tests."""

from __future__ import annotations

import bisect
import enum
import heapq
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Integrand = Callable[[float], float]

ABS_FLOOR = 1e-14
# scale floor for the improper tests, which must work for integrands of any magnitude
TINY = 1e-300

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15 values).
_XK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)


class QuadratureError(ArithmeticError):
    """Adaptive subdivision did not reach the requested tolerance."""

    def __init__(self, message: str, worst: tuple[float, float] | None = None):
        self.worst = worst
        super().__init__(message)


def gk15(f: Integrand, a: float, b: float) -> tuple[float, float]:
    """One Gauss-Kronrod panel on ``[a, b]``: (Kronrod estimate, |K - G|)."""
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    fc = f(c)
    rk = _WK[7] * fc
    rg = _WG[3] * fc
    for j in range(7):
        dx = h * _XK[j]
        s = f(c - dx) + f(c + dx)
        rk += _WK[j] * s
        if j % 2 == 1:
            rg += _WG[j // 2] * s
    return rk * h, abs((rk - rg) * h)


def integrate(
    f: Integrand,
    t0: float,
    t1: float,
    rel_tol: float = 1e-10,
    abs_tol: float = ABS_FLOOR,
    max_subdivisions: int = 4000,
) -> tuple[float, float]:
    """Globally adaptive GK15 quadrature of ``f`` over ``[t0, t1]``.

    Returns ``(value, err_est)``.  Stops once the summed error estimate is
    below ``max(rel_tol * |value|, abs_tol)``.
    """
    if t1 < t0:
        raise ValueError(f"need t0 <= t1, got [{t0}, {t1}]")
    if rel_tol < 1e-14:
        raise ValueError("rel_tol must be >= 1e-14")
    if t1 == t0:
        return 0.0, 0.0
    val, err = gk15(f, t0, t1)
    heap = [(-err, t0, t1, val)]
    total, total_err = val, err
    n = 1
    while total_err > max(rel_tol * abs(total), abs_tol):
        if n >= max_subdivisions:
            e, a, b, _ = heap[0]
            raise QuadratureError(
                f"no convergence after {n} subdivisions on [{t0}, {t1}]; "
                f"worst subinterval [{a}, {b}] err {-e:.3g}",
                worst=(a, b),
            )
        e, a, b, v = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not a < m < b:
            # floating-point resolution reached; accept the current estimate
            heapq.heappush(heap, (e, a, b, v))
            break
        v1, e1 = gk15(f, a, m)
        v2, e2 = gk15(f, m, b)
        heapq.heappush(heap, (-e1, a, m, v1))
        heapq.heappush(heap, (-e2, m, b, v2))
        total += v1 + v2 - v
        total_err += e1 + e2 + e
        n += 1
    total = math.fsum(item[3] for item in heap)
    total_err = math.fsum(-item[0] for item in heap)
    return total, total_err


class CumulativeIntegral:
    """``F(t) = ∫_{t0}^t f`` stored at grid nodes, queried anywhere.

    Between nodes ``F(t)`` is the node value plus one adaptive quadrature
    from the node (``__call__``); :meth:`interp` gives the cheaper cubic
    Hermite interpolant built from node values and ``f`` at the nodes.

    When ``extendable`` the grid grows on demand past its last node using
    steps of ``max(min_step, growth * (t - t0))`` capped at ``max_step``.
    """

    def __init__(
        self,
        f: Integrand,
        grid: Sequence[float],
        rel_tol: float = 1e-12,
        extendable: bool = False,
        min_step: float = 0.5,
        growth: float = 0.25,
        max_step: float = math.inf,
    ):
        grid = [float(x) for x in grid]
        if len(grid) < 1:
            raise ValueError("grid must contain t0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        self.f = f
        self.rel_tol = rel_tol
        self.extendable = extendable
        self.min_step = min_step
        self.growth = growth
        self.max_step = max_step
        self._lock = threading.Lock()
        self._grid = [grid[0]]
        self._values = [0.0]
        self._fvals = [f(grid[0])]
        for x in grid[1:]:
            self._append(x)

    @property
    def t0(self) -> float:
        return self._grid[0]

    @property
    def grid(self) -> np.ndarray:
        return np.array(self._grid)

    @property
    def values(self) -> np.ndarray:
        return np.array(self._values)

    def _append(self, x: float) -> None:
        a = self._grid[-1]
        piece, _ = integrate(self.f, a, x, self.rel_tol)
        self._grid.append(x)
        self._values.append(self._values[-1] + piece)
        self._fvals.append(self.f(x))

    def extend_to(self, t: float) -> None:
        if t <= self._grid[-1]:
            return
        if not self.extendable:
            raise ValueError(f"t={t} beyond cumulative grid end {self._grid[-1]}")
        with self._lock:
            while self._grid[-1] < t:
                last = self._grid[-1]
                h = min(max(self.min_step, self.growth * (last - self.t0)), self.max_step)
                self._append(last + h)

    def _locate(self, t: float) -> int:
        if t < self._grid[0]:
            raise ValueError(f"t={t} before cumulative grid start {self._grid[0]}")
        self.extend_to(t)
        return bisect.bisect_right(self._grid, t) - 1

    def __call__(self, t: float) -> float:
        i = self._locate(t)
        x = self._grid[i]
        if t == x:
            return self._values[i]
        # integrate from the nearer node
        if i + 1 < len(self._grid) and self._grid[i + 1] - t < t - x:
            y = self._grid[i + 1]
            piece, _ = integrate(self.f, t, y, self.rel_tol)
            return self._values[i + 1] - piece
        piece, _ = integrate(self.f, x, t, self.rel_tol)
        return self._values[i] + piece

    def interp(self, t: float) -> float:
        i = self._locate(t)
        if i + 1 >= len(self._grid):
            return self._values[i]
        x0, x1 = self._grid[i], self._grid[i + 1]
        h = x1 - x0
        s = (t - x0) / h
        y0, y1 = self._values[i], self._values[i + 1]
        d0, d1 = self._fvals[i] * h, self._fvals[i + 1] * h
        s2, s3 = s * s, s * s * s
        return (
            (2 * s3 - 3 * s2 + 1) * y0
            + (s3 - 2 * s2 + s) * d0
            + (-2 * s3 + 3 * s2) * y1
            + (s3 - s2) * d1
        )


def cumulative(f: Integrand, t0: float, grid: Sequence[float], rel_tol: float = 1e-10) -> CumulativeIntegral:
    """Cumulative integral of ``f`` on a fixed grid starting at ``t0``."""
    grid = list(grid)
    if not grid or grid[0] != t0:
        raise ValueError("grid[0] must equal t0")
    return CumulativeIntegral(f, grid, rel_tol=rel_tol)


def lazy_cumulative(
    f: Integrand, t0: float = 0.0, rel_tol: float = 1e-12, max_step: float = math.inf
) -> CumulativeIntegral:
    return CumulativeIntegral(f, [t0], rel_tol=rel_tol, extendable=True, max_step=max_step)


# --- improper integrals ------------------------------------------------------


class VerdictKind(str, enum.Enum):
    CONVERGENT = "Convergent"
    DIVERGENT = "Divergent"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ImproperPolicy:
    T_init: float = 16.0
    T_max: float = 2.0**20
    rel_tol: float = 1e-8
    divergence_threshold: float = 1e-6
    # geometric-ratio test on successive doubling increments
    ratio_margin: float = 0.05
    ratio_run: int = 3


@dataclass
class IntegralVerdict:
    kind: VerdictKind
    value: Optional[float] = None
    evidence: list[tuple[float, float]] = field(default_factory=list)
    tail_estimate: float = 0.0
    route: str = ""

    @property
    def convergent(self) -> bool:
        return self.kind is VerdictKind.CONVERGENT

    @property
    def divergent(self) -> bool:
        return self.kind is VerdictKind.DIVERGENT

    @property
    def horizon(self) -> float:
        return self.evidence[-1][0] if self.evidence else 0.0

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "value": self.value,
            "evidence": [[T, p] for T, p in self.evidence],
            "tail_estimate": self.tail_estimate,
            "route": self.route,
        }


def improper(f: Integrand, t0: float = 0.0, policy: ImproperPolicy | None = None) -> IntegralVerdict:
    """Classify ``∫_{t0}^∞ f`` by doubling the horizon ``T_init, 2 T_init, ...``.

    Convergent when a doubling changes the partial integral by at most
    ``rel_tol`` relative (Cauchy), or when the doubling increments shrink
    geometrically by a ratio below ``1 - ratio_margin`` over the last
    ``ratio_run`` doublings (the tail is then extrapolated).  Divergent when
    the increments keep one sign and grow by at least ``1 + ratio_margin``
    while staying above ``divergence_threshold`` relative, when the partials
    pass ``1 / rel_tol`` with non-shrinking increments, or on overflow.
    Anything else is Inconclusive.

    The first window has length ``max(T_init, |t0|)``; evidence records
    window lengths measured from ``t0``.
    """
    pol = policy or ImproperPolicy()
    if not pol.T_init < pol.T_max:
        raise ValueError("need T_init < T_max")
    evidence: list[tuple[float, float]] = []
    increments: list[float] = []
    piece_tol = 1e-3 * pol.rel_tol

    def divergent(route):
        return IntegralVerdict(VerdictKind.DIVERGENT, None, evidence, math.inf, route)

    # far from the origin the integrand varies on the scale of t0, so the
    # first window is at least that long
    T = max(pol.T_init, abs(t0))
    try:
        P, _ = integrate(f, t0, t0 + T, rel_tol=min(piece_tol, 1e-10), abs_tol=TINY)
    except OverflowError:
        return divergent("overflow")
    evidence.append((T, P))
    while 2 * T <= pol.T_max:
        lo, T = T, 2 * T
        try:
            d, _ = integrate(f, t0 + lo, t0 + T, rel_tol=min(piece_tol, 1e-10),
                             abs_tol=max(piece_tol * abs(P), TINY))
        except OverflowError:
            return divergent("overflow")
        P = P + d
        if not math.isfinite(P):
            return divergent("overflow")
        evidence.append((T, P))
        increments.append(d)

        if abs(d) <= pol.rel_tol * max(abs(P), TINY):
            tail = 0.0
            if len(increments) >= 2 and increments[-2] != 0.0:
                r = d / increments[-2]
                if 0.0 < r < 1.0:
                    tail = d * r / (1.0 - r)
            return IntegralVerdict(VerdictKind.CONVERGENT, P + tail, evidence, tail, "cauchy")

        rel_inc = abs(d) / max(abs(P), TINY)
        if len(increments) >= 2:
            prev = increments[-2]
            same_sign = prev != 0.0 and (d > 0) == (prev > 0) and (P > 0) == (d > 0)
            if same_sign and abs(P) > 1.0 / pol.rel_tol and abs(d) >= abs(prev):
                return divergent("magnitude")
        if len(increments) > pol.ratio_run:
            ratios = _ratios(increments[-pol.ratio_run - 1:])
            if (
                ratios is not None
                and all(r >= 1.0 + pol.ratio_margin for r in ratios)
                and all((x > 0) == (P > 0) for x in increments)
                and rel_inc > pol.divergence_threshold
            ):
                return divergent("ratio")

    if len(increments) > pol.ratio_run:
        ratios = _ratios(increments[-pol.ratio_run - 1:])
        if ratios is not None and all(0.0 < r <= 1.0 - pol.ratio_margin for r in ratios):
            r = ratios[-1]
            tail = increments[-1] * r / (1.0 - r)
            return IntegralVerdict(VerdictKind.CONVERGENT, P + tail, evidence, tail, "ratio")
    return IntegralVerdict(VerdictKind.INCONCLUSIVE, None, evidence, math.nan, "undecided")


def _ratios(incs: Sequence[float]) -> list[float] | None:
    out = []
    for prev, cur in zip(incs, incs[1:]):
        if prev == 0.0:
            return None
        out.append(cur / prev)
    return out
