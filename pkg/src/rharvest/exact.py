"""Closed-form quadrature solutions of the Bernoulli equation ``z' = a z - b z^2``.

With ``mu(t) = exp(∫_0^t a)`` and ``c = 1/z(0)`` every solution is
``z(t) = mu(t) / g(t)`` where ``g(t) = c + ∫_0^t b mu``.  Since ``b mu > 0``
the denominator is strictly increasing; a negative ``c`` either reaches zero
(a pole, the solution escapes to ``-inf``) or never does.
"""

from __future__ import annotations

import bisect
import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from ._roots import bisect_root
from .expr import bounds_estimate, parse
from .quad import (
    CumulativeIntegral,
    TINY,
    ImproperPolicy,
    IntegralVerdict,
    VerdictKind,
    improper,
    integrate,
    lazy_cumulative,
)

Coefficient = Callable[[float], float]

BLOWDOWN_XTOL = 1e-10
KERNEL_REL_TOL = 1e-12
MU_LOG_MAX = 700.0


class FateKind(str, enum.Enum):
    BLOWDOWN = "BlowDownFiniteTime"
    BOUNDED_SEPARATED = "BoundedSeparatedFromZero"
    TENDS_TO_ZERO = "TendsToZero"
    GLOBAL_SEPARATED = "GlobalExistsSeparatedFromZero"
    INCONCLUSIVE = "Inconclusive"
    # outcomes of numerically integrated harvested flows
    BOUNDED_ON_HORIZON = "BoundedOnHorizon"
    TENDS_TO_REFERENCE = "TendsToReference"


@dataclass
class Fate:
    kind: FateKind
    t_star: Optional[float] = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind is FateKind.BLOWDOWN and not (self.t_star is not None and 0 < self.t_star < math.inf):
            raise ValueError("blow-down fate needs a finite positive t_star")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "t_star": self.t_star, "diagnostics": _jsonable(self.diagnostics)}


def _jsonable(obj):
    if isinstance(obj, IntegralVerdict):
        return obj.to_json()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


@dataclass(frozen=True)
class ClassifyPolicy:
    improper: ImproperPolicy = field(default_factory=ImproperPolicy)
    tail_tol: float = 1e-3
    equality_band: float = 1e-9
    blowdown_horizon: float = 64.0


def _coef(f) -> Coefficient:
    if isinstance(f, (int, float)):
        return parse(repr(float(f)))
    if isinstance(f, str):
        return parse(f)
    return f


class GrowthKernel:
    """``mu(t) = exp(∫_0^t a)`` backed by a cumulative integral of ``a``.

    When ``period`` is given ``a`` is taken to be periodic and ``log mu`` is
    assembled from whole periods plus a remainder.
    """

    def __init__(self, a: Coefficient, horizon: float = math.inf, period: float | None = None,
                 rel_tol: float = KERNEL_REL_TOL):
        self.a = _coef(a)
        self.horizon = horizon
        self.period = period
        if period is not None:
            if period <= 0:
                raise ValueError("period must be positive")
            n = 64
            grid = [period * i / n for i in range(n + 1)]
            self.log_mu = CumulativeIntegral(self.a, grid, rel_tol=rel_tol)
            self.period_log = self.log_mu.values[-1]
        else:
            self.log_mu = lazy_cumulative(self.a, 0.0, rel_tol=rel_tol)
            self.period_log = None

    def log(self, t: float) -> float:
        if t < 0:
            raise ValueError("growth kernel is defined for t >= 0")
        if self.period is None:
            return self.log_mu(t)
        n = math.floor(t / self.period)
        r = max(t - n * self.period, 0.0)
        if r >= self.period:
            n, r = n + 1, 0.0
        return n * self.period_log + self.log_mu(r)

    def __call__(self, t: float) -> float:
        lm = self.log(t)
        if lm > MU_LOG_MAX:
            raise OverflowError(f"growth kernel overflows at t={t} (log mu = {lm:.6g})")
        return math.exp(lm)


def growth_kernel(a, horizon: float = math.inf, period: float | None = None) -> GrowthKernel:
    return GrowthKernel(a, horizon, period)


class _ForwardDenominator:
    """``g(t) = c + ∫_0^t b mu``."""

    def __init__(self, c: float, weight: Coefficient, rel_tol: float = KERNEL_REL_TOL):
        self.c = c
        self.integral = lazy_cumulative(weight, 0.0, rel_tol=rel_tol)

    def __call__(self, t: float) -> float:
        return self.c + self.integral(t)


class _TailDenominator:
    """``g(t) = -∫_t^∞ b mu`` on ``[0, horizon]``, summed backward from the far end."""

    def __init__(self, weight: Coefficient, horizon: float, tail_at_horizon: float,
                 rel_tol: float = KERNEL_REL_TOL):
        self.weight = weight
        self.rel_tol = rel_tol
        grid = [0.0]
        while grid[-1] < horizon:
            grid.append(min(horizon, grid[-1] + max(0.5, 0.25 * grid[-1])))
        tails = [0.0] * len(grid)
        tails[-1] = tail_at_horizon
        for i in range(len(grid) - 2, -1, -1):
            piece, _ = integrate(weight, grid[i], grid[i + 1], rel_tol, abs_tol=TINY)
            tails[i] = tails[i + 1] + piece
        self.grid = grid
        self.tails = tails
        self.horizon = horizon

    def tail(self, t: float) -> float:
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        j = bisect.bisect_left(self.grid, t)
        if self.grid[j] == t:
            return self.tails[j]
        piece, _ = integrate(self.weight, t, self.grid[j], self.rel_tol, abs_tol=TINY)
        return self.tails[j] + piece

    def __call__(self, t: float) -> float:
        return -self.tail(t)


@dataclass
class ExactSolution:
    """``z(t) = mu(t) / g(t)``; ``c = 1/z(0)`` and ``g`` is the denominator."""

    kernel: Optional[GrowthKernel]
    b: Optional[Coefficient]
    c: float
    z0: float
    horizon: float
    denominator: Optional[Callable[[float], float]] = field(default=None, repr=False)
    blowdown_time: Optional[float] = None
    blowdown_undecided: bool = False
    trivial: bool = False
    separated: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, t: float) -> float:
        if self.trivial:
            return 0.0
        if self.blowdown_time is not None and t >= self.blowdown_time:
            raise ValueError(f"t={t} is at or past blow-down time {self.blowdown_time}")
        return self.kernel(t) / self.denominator(t)

    def g(self, t: float) -> float:
        return self.denominator(t)

    def sample(self, ts) -> np.ndarray:
        return np.array([self(float(t)) for t in ts])

    def to_json(self, n: int = 101) -> dict:
        end = self.horizon if self.blowdown_time is None else self.blowdown_time
        ts = np.linspace(0.0, end, n, endpoint=self.blowdown_time is None)
        return {
            "c": None if self.trivial else self.c,
            "z0": self.z0,
            "blowdown_time": self.blowdown_time,
            "horizon": self.horizon,
            "samples": [[float(t), self(float(t))] for t in ts],
            "diagnostics": _jsonable(self.diagnostics),
        }


def _weight(b: Coefficient, kernel: GrowthKernel) -> Coefficient:
    return lambda t: b(t) * kernel(t)


def exact_solution(a, b, z0: float, horizon: float, kernel: GrowthKernel | None = None) -> ExactSolution:
    """Quadrature solution with ``z(0) = z0`` on ``[0, horizon]``.

    ``z0 = 0`` yields the tagged trivial solution.  For ``z0 < 0`` the
    blow-down time is located; if ``g`` is still negative at ``horizon`` the
    solution is flagged ``blowdown_undecided``.
    """
    a, b = _coef(a), _coef(b)
    if z0 == 0.0:
        return ExactSolution(None, b, math.nan, 0.0, horizon, trivial=True)
    kernel = kernel or GrowthKernel(a, horizon)
    c = 1.0 / z0
    sol = ExactSolution(kernel, b, c, z0, horizon, _ForwardDenominator(c, _weight(b, kernel)))
    if c < 0:
        sol.blowdown_time = blowdown_time(sol)
        sol.blowdown_undecided = sol.blowdown_time is None
    return sol


def blowdown_time(sol: ExactSolution) -> Optional[float]:
    """Unique root of the denominator on ``[0, horizon]``, or None."""
    if sol.trivial or sol.c > 0 or sol.separated:
        return None
    g = sol.denominator
    lo = 0.0
    g_lo = g(0.0)
    while lo < sol.horizon:
        hi = min(sol.horizon, lo + max(0.5, 0.25 * lo))
        g_hi = g(hi)
        if g_hi >= 0.0:
            return bisect_root(g, lo, hi, xtol=BLOWDOWN_XTOL, f_lo=g_lo)
        lo, g_lo = hi, g_hi
    return None


def tail_hypotheses(f: Coefficient, horizon: float, tol: float = 1e-3, n: int = 201) -> dict:
    """Sample ``f`` on ``[0.9 horizon, horizon]``: eventually non-positive? vanishing?"""
    ts = np.linspace(0.9 * horizon, horizon, n)
    vals = np.array([f(float(t)) for t in ts])
    return {
        "window": [0.9 * horizon, horizon],
        "max": float(vals.max()),
        "max_abs": float(np.abs(vals).max()),
        "tol": tol,
        "nonpositive": bool(vals.max() <= tol),
        "vanishing": bool(np.abs(vals).max() <= tol),
    }


def j_integral(a, b, policy: ImproperPolicy | None = None,
               kernel: GrowthKernel | None = None) -> IntegralVerdict:
    """Verdict on ``J = ∫_0^∞ b mu``."""
    a, b = _coef(a), _coef(b)
    kernel = kernel or GrowthKernel(a)
    return improper(_weight(b, kernel), 0.0, policy)


def _check_b(b: Coefficient, horizon: float, diagnostics: dict) -> None:
    bounds = bounds_estimate(b, 0.0, max(horizon, 1.0), n=1001)
    diagnostics["b_bounds"] = [bounds.lower, bounds.upper]
    if bounds.lower <= 0.0:
        warnings.warn(f"b(t) is not bounded below by a positive constant (sampled min {bounds.lower:.3g})",
                      RuntimeWarning, stacklevel=3)


def classify_positive(a, b, policy: ClassifyPolicy | None = None) -> Fate:
    """Fate of all positive solutions of ``z' = a z - b z^2``."""
    pol = policy or ClassifyPolicy()
    a, b = _coef(a), _coef(b)
    J = j_integral(a, b, pol.improper)
    diag: dict[str, Any] = {"J": J, "horizon": J.horizon}
    _check_b(b, J.horizon, diag)
    if J.divergent:
        return Fate(FateKind.BOUNDED_SEPARATED, diagnostics=diag)
    if J.convergent:
        tail = tail_hypotheses(a, J.horizon, pol.tail_tol)
        diag["a_tail"] = tail
        if tail["nonpositive"]:
            return Fate(FateKind.TENDS_TO_ZERO, diagnostics=diag)
    return Fate(FateKind.INCONCLUSIVE, diagnostics=diag)


def _find_blowdown(a, b, z0: float, kernel: GrowthKernel, start: float, limit: float) -> Optional[float]:
    horizon = start
    sol = exact_solution(a, b, z0, horizon, kernel=kernel)
    while sol.blowdown_time is None and horizon < limit:
        horizon = min(2 * horizon, limit)
        sol.horizon = horizon
        sol.blowdown_time = blowdown_time(sol)
    return sol.blowdown_time


def classify_negative(a, b, z0: float, policy: ClassifyPolicy | None = None) -> Fate:
    """Fate of the solution with negative initial value ``z0``."""
    if not z0 < 0:
        raise ValueError("classify_negative needs z0 < 0")
    pol = policy or ClassifyPolicy()
    a, b = _coef(a), _coef(b)
    kernel = GrowthKernel(a)
    J = j_integral(a, b, pol.improper, kernel=kernel)
    diag: dict[str, Any] = {"J": J, "horizon": J.horizon}
    if J.kind is VerdictKind.INCONCLUSIVE:
        return Fate(FateKind.INCONCLUSIVE, diagnostics=diag)
    limit = pol.improper.T_max
    if J.divergent:
        t_star = _find_blowdown(a, b, z0, kernel, pol.blowdown_horizon, limit)
        if t_star is None:
            diag["reason"] = f"denominator still negative at t={limit}"
            return Fate(FateKind.INCONCLUSIVE, diagnostics=diag)
        return Fate(FateKind.BLOWDOWN, t_star, diag)

    threshold = -1.0 / J.value
    band = pol.equality_band * (1.0 + abs(z0))
    diag.update(threshold=threshold, band=band)
    if abs(z0 - threshold) <= band:
        return Fate(FateKind.GLOBAL_SEPARATED, diagnostics=diag)
    if z0 < threshold:
        t_star = _find_blowdown(a, b, z0, kernel, pol.blowdown_horizon, limit)
        if t_star is None:
            diag["reason"] = f"denominator still negative at t={limit}"
            return Fate(FateKind.INCONCLUSIVE, diagnostics=diag)
        return Fate(FateKind.BLOWDOWN, t_star, diag)
    tail = tail_hypotheses(a, J.horizon, pol.tail_tol)
    diag["a_tail"] = tail
    diag["global_existence"] = True
    if tail["nonpositive"] and tail["vanishing"]:
        return Fate(FateKind.TENDS_TO_ZERO, diagnostics=diag)
    return Fate(FateKind.INCONCLUSIVE, diagnostics=diag)


class NotConvergentError(ValueError):
    def __init__(self, verdict: IntegralVerdict):
        self.verdict = verdict
        super().__init__(f"∫ b mu is {verdict.kind.value}, no separated negative solution")


def special_solution(a, b, horizon: float = 200.0, policy: ImproperPolicy | None = None,
                     period: float | None = None) -> ExactSolution:
    """The negative solution starting at ``-1/J``, separated from zero.

    Its denominator is the tail ``-∫_t^∞ b mu``, summed backward from
    ``horizon`` so it keeps full relative accuracy as it tends to zero.
    """
    a, b = _coef(a), _coef(b)
    kernel = GrowthKernel(a, horizon, period=period)
    weight = _weight(b, kernel)
    J = improper(weight, 0.0, policy)
    if not J.convergent:
        raise NotConvergentError(J)
    far = improper(weight, horizon, policy)
    if not far.convergent:
        raise NotConvergentError(far)
    if far.value <= 0.0:
        raise ValueError(f"tail integral underflows at t={horizon}; use a shorter horizon")
    den = _TailDenominator(weight, horizon, far.value)
    W0 = den.tail(0.0)
    sol = ExactSolution(kernel, b, -W0, -1.0 / W0, horizon, den, separated=True)
    sol.diagnostics = {"J": J, "J_mismatch": abs(W0 - J.value) / J.value, "tail_at_horizon": far.value}
    return sol
