"""Periodic coefficients: Poincaré map, periodic solutions, branches and the fold."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from ._roots import bisect_root
from .expr import bounds_estimate, constant, parse
from .harvest import InvalidBracket
from .ivp import HarvestRHS, Trajectory, integrate_ivp
from .quad import integrate

ESCAPED = -math.inf
FIXED_POINT_TOL = 1e-9
MERGE_TOL = 1e-7
NEAR_FOLD = 1e-4
POINCARE_RTOL = 1e-12
POINCARE_ATOL = 1e-14


def _coef(f):
    if isinstance(f, (int, float)):
        return constant(f)
    if isinstance(f, str):
        return parse(f)
    return f


def _flow(a, gamma, k: float, T: float, z0: float) -> Trajectory:
    rhs = HarvestRHS(_coef(a), _coef(gamma), k)
    return integrate_ivp(rhs, z0, 0.0, T, POINCARE_RTOL, POINCARE_ATOL)


def poincare_map(a, gamma, k: float, T: float, z0: float) -> float:
    """``z(T)`` for the orbit starting at ``z0``; ``ESCAPED`` (-inf) if it blows down within a period."""
    if T <= 0:
        raise ValueError("period must be positive")
    traj = _flow(a, gamma, k, T, z0)
    if not traj.completed:
        return ESCAPED
    return float(traj.values[-1])


@dataclass
class PeriodicSolution:
    k: float
    z0: float
    T: float
    trajectory: Trajectory = field(repr=False)
    residual: float = 0.0
    near_fold: bool = False
    tangent: bool = False

    @property
    def period(self) -> float:
        return self.T

    def _wrap(self, t: float) -> float:
        r = math.fmod(t, self.T)
        return r + self.T if r < 0 else r

    def __call__(self, t: float) -> float:
        return self.trajectory(self._wrap(t))

    def derivative(self, t: float) -> float:
        return self.trajectory.derivative(self._wrap(t))

    def to_json(self) -> dict:
        return {"k": self.k, "z0": self.z0, "T": self.T, "residual": self.residual,
                "near_fold": self.near_fold, "tangent": self.tangent}


@dataclass(frozen=True)
class ScanWindow:
    z_min: float
    z_max: float
    n: int = 64


def default_window(a, T: float, n: int = 64) -> ScanWindow:
    upper = bounds_estimate(_coef(a), 0.0, T, n=201).upper
    return ScanWindow(-0.1, max(upper, 0.0) + 1.0, n)


class _Displacement:
    """``G(z) = P(z) - z`` with escaped orbits mapped to ``-inf``."""

    def __init__(self, a, gamma, k, T):
        self.a, self.gamma, self.k, self.T = _coef(a), _coef(gamma), k, T
        self.calls = 0

    def __call__(self, z: float) -> float:
        self.calls += 1
        p = poincare_map(self.a, self.gamma, self.k, self.T, z)
        return ESCAPED if p == ESCAPED else p - z

    def maximize(self, lo: float, hi: float) -> tuple[float, float]:
        res = minimize_scalar(lambda z: -max(self(z), -1e30), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return float(res.x), -float(res.fun)

    def minimize(self, lo: float, hi: float) -> tuple[float, float]:
        res = minimize_scalar(lambda z: max(self(z), -1e30), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return float(res.x), float(res.fun)


def _solution(a, gamma, k, T, z0, tangent=False) -> PeriodicSolution:
    traj = _flow(a, gamma, k, T, z0)
    return PeriodicSolution(k, z0, T, traj, abs(float(traj.values[-1]) - z0), tangent=tangent)


def fixed_points(a, gamma, k: float, T: float, scan: ScanWindow | None = None) -> list[PeriodicSolution]:
    """Fixed points of the Poincaré map found by a sign-change scan plus bisection.

    Local extrema of ``P(z) - z`` that do not reach zero on the grid are
    refined, so that close pairs and tangential (double) fixed points are
    caught.
    """
    a, gamma = _coef(a), _coef(gamma)
    scan = scan or default_window(a, T)
    G = _Displacement(a, gamma, k, T)
    zs = np.linspace(scan.z_min, scan.z_max, scan.n)
    gs = [G(float(z)) for z in zs]
    escaped = sum(g == ESCAPED for g in gs)
    if escaped:
        warnings.warn(f"{escaped} of {len(zs)} scan points escape within one period; "
                      "they are excluded from the scan", RuntimeWarning, stacklevel=2)

    roots: list[tuple[float, bool]] = []
    for i in range(len(zs) - 1):
        g0, g1 = gs[i], gs[i + 1]
        if g0 == ESCAPED or g1 == ESCAPED:
            continue
        if g0 == 0.0:
            roots.append((float(zs[i]), False))
        elif g0 * g1 < 0:
            roots.append((bisect_root(G, float(zs[i]), float(zs[i + 1]), xtol=1e-13, f_lo=g0), False))
    if gs[-1] == 0.0:
        roots.append((float(zs[-1]), False))

    for i in range(1, len(zs) - 1):
        g_prev, g, g_next = gs[i - 1], gs[i], gs[i + 1]
        if ESCAPED in (g_prev, g, g_next):
            continue
        lo, hi = float(zs[i - 1]), float(zs[i + 1])
        if g < 0 and g >= g_prev and g >= g_next:
            z_star, g_star = G.maximize(lo, hi)
        elif g > 0 and g <= g_prev and g <= g_next:
            z_star, g_star = G.minimize(lo, hi)
        else:
            continue
        if abs(g_star) <= FIXED_POINT_TOL:
            roots.append((z_star, True))
        elif (g_star > 0) != (g > 0):
            roots.append((bisect_root(G, lo, z_star, xtol=1e-13), False))
            roots.append((bisect_root(G, z_star, hi, xtol=1e-13), False))

    roots.sort()
    merged: list[tuple[float, bool]] = []
    for z, tangent in roots:
        if merged and abs(z - merged[-1][0]) <= MERGE_TOL:
            merged[-1] = (merged[-1][0], merged[-1][1] or tangent)
            continue
        merged.append((z, tangent))
    sols = [_solution(a, gamma, k, T, z, tangent) for z, tangent in merged]
    for s1, s2 in zip(sols, sols[1:]):
        if s2.z0 - s1.z0 < NEAR_FOLD:
            s1.near_fold = s2.near_fold = True
    return sols


@dataclass
class BranchDiagram:
    k: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    turning: Optional[tuple[float, float]]
    last_two: Optional[float]
    first_none: Optional[float]
    gaps: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "lower", "upper"])
        for k, lo, up in zip(self.k, self.lower, self.upper):
            w.writerow([f"{k:.17g}", "" if math.isnan(lo) else f"{lo:.17g}", "" if math.isnan(up) else f"{up:.17g}"])
        return buf.getvalue()

    def turning_json(self) -> str:
        return json.dumps({"turning_point": self.turning, "last_k_with_two": self.last_two,
                           "first_k_with_none": self.first_none, "gaps": self.gaps})


def branch_diagram(a, gamma, T: float, k_grid, scan: ScanWindow | None = None) -> BranchDiagram:
    """Fixed points across ``k_grid``, tracked as lower/upper branches by nearest neighbour."""
    a, gamma = _coef(a), _coef(gamma)
    ks = np.asarray(k_grid, dtype=float)
    if np.any(np.diff(ks) <= 0):
        raise ValueError("k grid must be increasing")
    scan = scan or default_window(a, T)
    lower = np.full(len(ks), math.nan)
    upper = np.full(len(ks), math.nan)
    prev: Optional[tuple[float, float]] = None
    gaps: list[str] = []
    last_two = first_none = None
    turning = None
    for i, k in enumerate(ks):
        zs = [s.z0 for s in fixed_points(a, gamma, float(k), T, scan)]
        tangent = len(zs) == 1 and _is_tangent(a, gamma, float(k), T, zs[0])
        if len(zs) >= 2:
            if len(zs) > 2:
                gaps.append(f"k={k:g}: {len(zs)} fixed points, tracking the two nearest the previous branches")
            if prev is None:
                lo, up = zs[0], zs[-1]
            else:
                lo = min(zs, key=lambda z: abs(z - prev[0]))
                up = min((z for z in zs if z != lo), key=lambda z: abs(z - prev[1]))
                lo, up = min(lo, up), max(lo, up)
            lower[i], upper[i] = lo, up
            prev = (lo, up)
            last_two = float(k)
            turning = (float(k), 0.5 * (lo + up))
        elif len(zs) == 1:
            z = zs[0]
            if tangent or prev is None:
                lower[i] = upper[i] = z
                turning = (float(k), z)
            elif abs(z - prev[0]) <= abs(z - prev[1]):
                lower[i] = z
                gaps.append(f"k={k:g}: upper branch lost")
            else:
                upper[i] = z
                gaps.append(f"k={k:g}: lower branch lost")
        else:
            if first_none is None:
                first_none = float(k)
    return BranchDiagram(ks, lower, upper, turning, last_two, first_none, gaps)


def _is_tangent(a, gamma, k, T, z) -> bool:
    h = 1e-4
    G = _Displacement(a, gamma, k, T)
    g_mid, g_l, g_r = G(z), G(z - h), G(z + h)
    return ESCAPED not in (g_l, g_r) and (g_l - g_mid) * (g_r - g_mid) > 0


def turning_point(a, gamma, T: float, tol_k: float = 1e-3, k_lo: float = 0.0, k_hi: float | None = None,
                  scan: ScanWindow | None = None) -> tuple[float, PeriodicSolution]:
    """Locate the fold where the two periodic branches meet.

    Bisection on existence of fixed points: away from the fold by the scan,
    near it by maximising ``P(z) - z`` (the pair is numerically
    indistinct there).  The bracket is tightened past ``tol_k`` until the
    maximum at the feasible end is within the fixed-point tolerance, and the
    returned solution starts at that maximiser, the double fixed point.
    """
    a, gamma = _coef(a), _coef(gamma)
    scan = scan or default_window(a, T)
    probe = fixed_points(a, gamma, k_lo, T, scan)
    if len(probe) < 2:
        raise InvalidBracket(f"fewer than two periodic solutions at probe k={k_lo}", k_lo, math.nan)
    z_l, z_u = probe[0].z0, probe[-1].z0
    margin = 0.25 * (z_u - z_l) + 1e-3
    window = (z_l - margin, z_u + margin)

    def peak(k: float) -> tuple[float, float]:
        return _Displacement(a, gamma, k, T).maximize(*window)

    state = {"sep": z_u - z_l}

    def exists(k: float) -> bool:
        if state["sep"] >= NEAR_FOLD:
            with warnings.catch_warnings():
                # escapes at the window edges are expected this close to the fold
                warnings.simplefilter("ignore", RuntimeWarning)
                sols = fixed_points(a, gamma, k, T, ScanWindow(window[0], window[1], 24))
            if len(sols) >= 2:
                state["sep"] = sols[-1].z0 - sols[0].z0
                return True
            if len(sols) == 1:
                return True
        return peak(k)[1] >= 0.0

    if k_hi is None:
        k_hi = max(2.0 * k_lo, 1.0)
        for _ in range(40):
            if not exists(k_hi):
                break
            k_lo, k_hi = k_hi, 2.0 * k_hi
        else:
            raise InvalidBracket("no k without periodic solutions found", k_lo, k_hi)
    elif exists(k_hi):
        raise InvalidBracket(f"periodic solutions still exist at k_hi={k_hi}", k_lo, k_hi)

    lo, hi = k_lo, k_hi
    while hi - lo > tol_k:
        mid = 0.5 * (lo + hi)
        if exists(mid):
            lo = mid
        else:
            hi = mid
    z_star, g_star = peak(lo)
    while g_star > FIXED_POINT_TOL and hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        zm, gm = peak(mid)
        if gm >= 0.0:
            lo, z_star, g_star = mid, zm, gm
        else:
            hi = mid
    sol = _solution(a, gamma, lo, T, z_star, tangent=True)
    sol.near_fold = True
    return 0.5 * (lo + hi), sol


def floquet_integral(a, p: PeriodicSolution) -> float:
    """``∫_0^T (a - 2p)``; zero at the fold, negative on the upper branch, positive on the lower."""
    a = _coef(a)
    ia, _ = integrate(a, 0.0, p.T, rel_tol=1e-12)
    return ia - 2.0 * p.trajectory.integral(0.0, p.T)
