"""Adaptive Dormand-Prince 5(4) integrator for scalar harvested logistic flows."""

from __future__ import annotations

import bisect
import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .expr import CoefficientFn, constant, parse

Z_BIG = 1e9

# Dormand-Prince coefficients
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th-order minus embedded 4th-order weights
_E1 = 71 / 57600
_E3 = -71 / 16695
_E4 = 71 / 1920
_E5 = -17253 / 339200
_E6 = 22 / 525
_E7 = -1 / 40
# continuous extension: the quartic correction on top of the cubic Hermite
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423
# 3-point Gauss-Legendre on [0, 1], exact for the quartic pieces
_GL_X = (0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10)
_GL_W = (5 / 18, 8 / 18, 5 / 18)


@dataclass(frozen=True)
class HarvestRHS:
    """Right side ``a(t) z - b(t) z^2 - k gamma(t)``."""

    a: Callable[[float], float]
    gamma: Callable[[float], float] = field(default_factory=lambda: constant(0.0))
    k: float = 0.0
    b: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("harvesting intensity k must be >= 0")
        for name in ("a", "gamma", "b"):
            v = getattr(self, name)
            if isinstance(v, (str, int, float)):
                object.__setattr__(self, name, parse(str(v)) if isinstance(v, str) else constant(v))

    def __call__(self, t: float, z: float) -> float:
        b = 1.0 if self.b is None else self.b(t)
        h = self.k * self.gamma(t) if self.k else 0.0
        return self.a(t) * z - b * z * z - h


class Status(str, enum.Enum):
    COMPLETED = "CompletedHorizon"
    BLOWDOWN = "BlowDown"
    UNDERFLOW = "StepUnderflow"


@dataclass
class Trajectory:
    """Accepted steps of an integration with dense output.

    Between steps the solution is the Dormand-Prince continuous extension:
    the cubic Hermite interpolant of the step's end values and slopes plus
    ``theta^2 (1 - theta)^2 * quartic[i]``.  With ``quartic`` absent the
    interpolant is plain cubic Hermite.
    """

    times: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    status: Status
    t_end: float  # horizon reached, or t_est for early termination
    rhs: Optional[Callable[[float, float], float]] = field(default=None, repr=False)
    quartic: Optional[np.ndarray] = field(default=None, repr=False)

    def _bump(self, i: int) -> float:
        return 0.0 if self.quartic is None else float(self.quartic[i])

    @property
    def t_est(self) -> Optional[float]:
        return None if self.status is Status.COMPLETED else self.t_end

    @property
    def completed(self) -> bool:
        return self.status is Status.COMPLETED

    @property
    def t0(self) -> float:
        return float(self.times[0])

    def __call__(self, t: float) -> float:
        ts = self.times
        if t < ts[0] or t > ts[-1]:
            raise ValueError(f"t={t} outside trajectory [{ts[0]}, {ts[-1]}]")
        i = min(bisect.bisect_right(ts, t) - 1, len(ts) - 2)
        if i < 0:
            return float(self.values[0])
        y = _hermite(ts[i], ts[i + 1], self.values[i], self.values[i + 1],
                     self.slopes[i], self.slopes[i + 1], t)
        s = (t - ts[i]) / (ts[i + 1] - ts[i])
        return y + s * s * (1 - s) * (1 - s) * self._bump(i)

    def derivative(self, t: float) -> float:
        ts = self.times
        i = min(max(bisect.bisect_right(ts, t) - 1, 0), len(ts) - 2)
        t0, t1 = ts[i], ts[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        y0, y1 = self.values[i], self.values[i + 1]
        d0, d1 = self.slopes[i], self.slopes[i + 1]
        return (
            (6 * s * s - 6 * s) * (y0 - y1) / h
            + (3 * s * s - 4 * s + 1) * d0
            + (3 * s * s - 2 * s) * d1
            + 2 * s * (1 - s) * (1 - 2 * s) * self._bump(i) / h
        )

    def sample(self, ts) -> np.ndarray:
        return np.array([self(float(t)) for t in ts])

    def integral(self, t0: float | None = None, t1: float | None = None) -> float:
        """Exact integral of the dense-output interpolant over ``[t0, t1]``."""
        ts = self.times
        t0 = ts[0] if t0 is None else t0
        t1 = ts[-1] if t1 is None else t1
        total = 0.0
        for i in range(len(ts) - 1):
            a, b = max(ts[i], t0), min(ts[i + 1], t1)
            if b <= a:
                continue
            if a == ts[i] and b == ts[i + 1]:
                h = b - a
                total += (h * (self.values[i] + self.values[i + 1]) / 2
                          + h * h * (self.slopes[i] - self.slopes[i + 1]) / 12
                          + h * self._bump(i) / 30)
            else:
                total += (b - a) * sum(w * self(a + x * (b - a)) for x, w in zip(_GL_X, _GL_W))
        return total

    def to_csv(self, ts=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "z"])
        ts = self.times if ts is None else ts
        for t in ts:
            w.writerow([f"{float(t):.17g}", f"{self(float(t)):.17g}"])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "status": self.status.value,
            "t_est": self.t_est,
            "t_end": self.t_end,
            "steps": len(self.times) - 1,
            "z_final": float(self.values[-1]),
        }

    def to_json(self) -> str:
        return json.dumps(self.sidecar())


def _hermite(t0, t1, y0, y1, d0, d1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    return float(
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * h * d0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * h * d1
    )


def integrate_ivp(
    rhs: Callable[[float, float], float],
    z0: float,
    t0: float,
    t1: float,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-11,
    z_big: float = Z_BIG,
    first_step: float | None = None,
    max_step: float = math.inf,
    fixed_step: float | None = None,
) -> Trajectory:
    """Integrate ``z' = rhs(t, z)`` from ``z(t0) = z0`` to ``t1``.

    Stops early with ``BlowDown`` once ``z <= -z_big``, or when the step size
    falls below ``1e-14 * (1 + |t|)`` (``StepUnderflow`` if ``z`` is not
    negative there).  ``fixed_step`` disables error control.
    """
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got [{t0}, {t1}]")
    if rel_tol < 1e-13 or abs_tol < 1e-13 * 1e-3:
        raise ValueError("tolerances too small")
    f = rhs
    t, y = float(t0), float(z0)
    k1 = f(t, y)
    times, values, slopes, quartic = [t], [y], [k1], []
    span = t1 - t0

    if fixed_step is not None:
        h = float(fixed_step)
    elif first_step is not None:
        h = float(first_step)
    else:
        # Hairer-Wanner starting step heuristic
        sc = abs_tol + rel_tol * abs(y)
        d0, d1 = abs(y) / sc, abs(k1) / sc
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = y + h0 * k1
        d2 = abs(f(t + h0, y1) - k1) / sc / h0
        h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h0, h1)
    h = min(h, span, max_step)
    status = Status.COMPLETED

    while t < t1:
        if t + h > t1 or fixed_step is None and t + 1.01 * h >= t1:
            h = t1 - t
        k2 = f(t + _C2 * h, y + h * _A21 * k1)
        k3 = f(t + _C3 * h, y + h * (_A31 * k1 + _A32 * k2))
        k4 = f(t + _C4 * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = f(t + _C5 * h, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = f(t + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = f(t + h, y_new) if math.isfinite(y_new) else math.nan
        if fixed_step is not None:
            err = 0.0
        else:
            e = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
            sc = abs_tol + rel_tol * max(abs(y), abs(y_new))
            err = abs(e) / sc if math.isfinite(e) else math.inf

        if err <= 1.0:
            t = t + h if t + h < t1 else t1
            quartic.append(h * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7))
            y, k1 = y_new, k7
            times.append(t)
            values.append(y)
            slopes.append(k1)
            if y <= -z_big:
                status = Status.BLOWDOWN
                break
            if fixed_step is not None:
                continue
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h * fac, max_step)
        else:
            h *= max(0.1, 0.9 * err ** -0.2) if math.isfinite(err) else 0.1
        if h < 1e-14 * (1.0 + abs(t)):
            status = Status.BLOWDOWN if y < 0 else Status.UNDERFLOW
            break

    return Trajectory(
        np.array(times), np.array(values), np.array(slopes), status, t, rhs, np.array(quartic)
    )


def distance_to(traj: Trajectory, ref: Callable[[float], float], norm: str = "sup") -> float:
    """Sup over accepted times, or final-time, absolute gap between ``traj`` and ``ref``."""
    if norm == "final":
        return abs(float(traj.values[-1]) - ref(float(traj.times[-1])))
    if norm != "sup":
        raise ValueError(f"unknown norm {norm!r}")
    return max(abs(float(z) - ref(float(t))) for t, z in zip(traj.times, traj.values))


def harvest_rhs(a: str | CoefficientFn, gamma: str | CoefficientFn = "0", k: float = 0.0,
                b: str | CoefficientFn | None = None) -> HarvestRHS:
    return HarvestRHS(parse(a), parse(gamma), float(k), None if b is None else parse(b))
