"""The harvested logistic equation ``z' = a z - z^2 - k gamma``.

Shifting by a particular solution ``p`` turns it into a Bernoulli equation
for ``v = z - p`` with growth rate ``a - 2p``; the separation integral
``I = ∫_0^∞ exp(∫_0^t (a - 2p))`` then decides whether solutions above
``p`` are separated from it.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .exact import (
    ExactSolution,
    Fate,
    FateKind,
    GrowthKernel,
    _jsonable,
    special_solution,
    tail_hypotheses,
)
from .expr import bounds_estimate, constant, parse
from .ivp import HarvestRHS, Status, Trajectory, distance_to, integrate_ivp
from .quad import ImproperPolicy, IntegralVerdict, VerdictKind, improper

Coefficient = Callable[[float], float]

DEFAULT_HORIZON = 200.0
RESIDUAL_TOL = 1e-6


def _coef(f) -> Coefficient:
    if isinstance(f, (int, float)):
        return constant(f)
    if isinstance(f, str):
        return parse(f)
    return f


class ResidualError(ValueError):
    pass


class InvalidBracket(ValueError):
    def __init__(self, message: str, k_lo: float, k_hi: float):
        self.k_lo = k_lo
        self.k_hi = k_hi
        super().__init__(message)


class MonotonicityError(RuntimeError):
    pass


class InconclusiveError(RuntimeError):
    def __init__(self, verdict: IntegralVerdict):
        self.verdict = verdict
        super().__init__(f"separation integral is inconclusive up to T={verdict.horizon:g}")


@dataclass
class ParticularSolution:
    """A known solution ``p`` of the harvested equation at intensity ``k``.

    ``fn`` is a closed form, a trajectory, or a periodic solution; ``period``
    marks ``fn`` as periodic so it can be used on ``[0, ∞)``.
    """

    fn: Coefficient
    k: float
    horizon: float = math.inf
    period: Optional[float] = None
    residual: float = math.nan
    minimum: float = math.nan

    def __call__(self, t: float) -> float:
        return self.fn(t)

    @property
    def numeric(self) -> bool:
        return isinstance(self.fn, Trajectory) and self.period is None

    def verify(self, a, gamma, b=None, n: int = 200, check_horizon: float = DEFAULT_HORIZON) -> "ParticularSolution":
        """Check the ODE residual and positivity at sampled times; raise on failure."""
        rhs = HarvestRHS(_coef(a), _coef(gamma), self.k, None if b is None else _coef(b))
        end = min(self.horizon, check_horizon)
        h = 1e-5
        ts = np.linspace(h, end - h, n)
        worst, low = 0.0, math.inf
        deriv = getattr(self.fn, "derivative", None)
        for t in ts:
            t = float(t)
            z = self.fn(t)
            dz = deriv(t) if deriv is not None else (self.fn(t + h) - self.fn(t - h)) / (2 * h)
            worst = max(worst, abs(dz - rhs(t, z)) / (1.0 + z * z))
            low = min(low, z)
        self.residual, self.minimum = worst, low
        if worst > RESIDUAL_TOL:
            raise ResidualError(f"particular solution residual {worst:.3g} exceeds {RESIDUAL_TOL:g} at k={self.k}")
        if low <= 0.0:
            raise ResidualError(f"particular solution is not positive (min {low:.3g})")
        return self


def particular(fn, k: float, a=None, gamma=None, horizon: float = math.inf,
               period: float | None = None, verify: bool = True) -> ParticularSolution:
    if isinstance(fn, (str, int, float)):
        fn = _coef(fn)
    if isinstance(fn, Trajectory) and period is None:
        horizon = min(horizon, float(fn.times[-1]))
    p = ParticularSolution(fn, float(k), horizon, period)
    if verify and a is not None and gamma is not None:
        p.verify(a, gamma)
    return p


class ShiftedCoefficient:
    """``a(t) - 2 p(t)``, the growth rate of ``v = z - p``."""

    def __init__(self, a: Coefficient, p: ParticularSolution):
        self.a = a
        self.p = p
        self.period = p.period

    def __call__(self, t: float) -> float:
        return self.a(t) - 2.0 * self.p(t)


def shift_by_particular(a, p: ParticularSolution) -> ShiftedCoefficient:
    return ShiftedCoefficient(_coef(a), p)


def _policy_for(p: ParticularSolution, policy: ImproperPolicy | None) -> ImproperPolicy:
    pol = policy or ImproperPolicy()
    if p.period is None and math.isfinite(p.horizon) and p.horizon < pol.T_max:
        # numeric p only exists up to its horizon
        T_max = pol.T_init
        while 2 * T_max <= p.horizon:
            T_max *= 2
        if T_max <= pol.T_init:
            raise ValueError(f"particular solution horizon {p.horizon} too short for T_init={pol.T_init}")
        pol = ImproperPolicy(pol.T_init, T_max, pol.rel_tol, pol.divergence_threshold,
                             pol.ratio_margin, pol.ratio_run)
    return pol


def separation_integral(a, p: ParticularSolution, policy: ImproperPolicy | None = None) -> IntegralVerdict:
    """Verdict on ``I = ∫_0^∞ exp(∫_0^t (a - 2p))``."""
    shifted = shift_by_particular(a, p)
    kernel = GrowthKernel(shifted, period=p.period)
    return improper(kernel, 0.0, _policy_for(p, policy))


class CriticalCase(str, enum.Enum):
    CASE1 = "Case1_AllAboveSeparated"
    CASE2 = "Case2_ConvergentWithP1"
    CASE2_UNMET = "Case2_HypothesesUnmet"


class SecondSolution:
    """``p1 = p + v`` with ``v`` the separated negative Bernoulli solution."""

    def __init__(self, p: ParticularSolution, v: ExactSolution):
        self.p = p
        self.v = v
        self.horizon = v.horizon

    def __call__(self, t: float) -> float:
        return self.p(t) + self.v(t)


@dataclass
class CriticalClassification:
    case: CriticalCase
    I: IntegralVerdict
    p1: Optional[SecondSolution] = None
    p1_initial: Optional[float] = None
    hypotheses: dict[str, Any] = field(default_factory=dict)
    p1_positive: Optional[bool] = None
    p1_minimum: Optional[float] = None
    witness: Optional[Trajectory] = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return _jsonable({
            "case": self.case,
            "I": self.I,
            "p1_initial": self.p1_initial,
            "p1_positive": self.p1_positive,
            "p1_minimum": self.p1_minimum,
            "hypotheses": self.hypotheses,
            "notes": self.notes,
        })


@dataclass(frozen=True)
class CriticalPolicy:
    improper: ImproperPolicy = field(default_factory=ImproperPolicy)
    tail_tol: float = 1e-3
    horizon: float = DEFAULT_HORIZON
    positivity_tol: float = 1e-8
    samples: int = 2001


def classify_at_critical(a, gamma, k_bar: float, p: ParticularSolution,
                         policy: CriticalPolicy | None = None) -> CriticalClassification:
    """Case analysis at the critical intensity given a bounded positive solution ``p``."""
    pol = policy or CriticalPolicy()
    a, gamma = _coef(a), _coef(gamma)
    if p.k != k_bar:
        p = ParticularSolution(p.fn, k_bar, p.horizon, p.period)
    p.verify(a, gamma, check_horizon=min(pol.horizon, p.horizon))
    I = separation_integral(a, p, pol.improper)
    if I.kind is VerdictKind.INCONCLUSIVE:
        raise InconclusiveError(I)

    if I.divergent:
        horizon = min(pol.horizon, p.horizon)
        witness = integrate_ivp(HarvestRHS(a, gamma, k_bar), p(0.0) + 1.0, 0.0, horizon)
        notes = ["solutions above p are bounded and separated from p; solutions below p go to -inf in finite time"]
        return CriticalClassification(CriticalCase.CASE1, I, witness=witness, notes=notes)

    shifted = shift_by_particular(a, p)
    hyp = tail_hypotheses(shifted, I.horizon, pol.tail_tol)
    horizon = min(pol.horizon, p.horizon)
    v = special_solution(shifted, constant(1.0), horizon, pol.improper, period=p.period)
    p1 = SecondSolution(p, v)
    ts = np.linspace(0.0, horizon, pol.samples)
    p1_min = min(p1(float(t)) for t in ts)
    positive = p1_min > pol.positivity_tol
    met = hyp["nonpositive"] and hyp["vanishing"]
    notes = []
    if not met:
        notes.append("tail hypotheses on a - 2p not met: p1 is separated from p, no convergence claim")
    if not positive:
        notes.append(f"p1 fails positivity on [0, {horizon:g}] (min {p1_min:.3g})")
    case = CriticalCase.CASE2 if met and positive else CriticalCase.CASE2_UNMET
    return CriticalClassification(case, I, p1, p1(0.0), hyp, positive, p1_min, notes=notes)


# --- critical intensity search --------------------------------------------


@dataclass
class CriticalReport:
    k_bar: float
    bracket: tuple[float, float]
    witness: Trajectory
    horizon: float
    z_top: float
    evaluations: list[tuple[float, bool]] = field(default_factory=list)
    caveat: str = ("finite horizon: near the fold escape is slow, so k slightly above the critical "
                   "value can pass the test; the estimate is biased upward")

    def to_json(self) -> dict:
        return {
            "k_bar": self.k_bar,
            "bracket": list(self.bracket),
            "horizon": self.horizon,
            "z_top": self.z_top,
            "witness": self.witness.sidecar(),
            "evaluations": [[k, ok] for k, ok in self.evaluations],
            "caveat": self.caveat,
        }


class FeasibilityOracle:
    """Does the orbit from ``z_top`` stay positive on ``[0, horizon]`` at intensity ``k``?

    ``z_top`` exceeds the sampled sup of ``a``; above it every solution
    decreases, so its orbit dominates all bounded positive solutions.
    """

    def __init__(self, a, gamma, horizon: float = DEFAULT_HORIZON, b=None,
                 rel_tol: float = 1e-9, abs_tol: float = 1e-11):
        self.a, self.gamma = _coef(a), _coef(gamma)
        self.b = None if b is None else _coef(b)
        self.horizon = horizon
        self.rel_tol, self.abs_tol = rel_tol, abs_tol
        self.a_upper = bounds_estimate(self.a, 0.0, horizon, n=2001).upper
        self.z_top = max(self.a_upper, 0.0) + 1.0
        self.evaluations: list[tuple[float, bool]] = []

    def trajectory(self, k: float) -> Trajectory:
        rhs = HarvestRHS(self.a, self.gamma, k, self.b)
        return integrate_ivp(rhs, self.z_top, 0.0, self.horizon, self.rel_tol, self.abs_tol)

    def __call__(self, k: float) -> bool:
        traj = self.trajectory(k)
        ok = traj.completed and float(traj.values.min()) > 0.0
        self._check_monotone(k, ok)
        self.evaluations.append((k, ok))
        return ok

    def _check_monotone(self, k: float, ok: bool) -> None:
        for k2, ok2 in self.evaluations:
            if ok and not ok2 and k2 < k or ok2 and not ok and k < k2:
                raise MonotonicityError(
                    f"feasibility not monotone in k: k={k} {'passes' if ok else 'fails'}, "
                    f"k={k2} {'passes' if ok2 else 'fails'}; evaluations {self.evaluations}"
                )


def expand_bracket(a, gamma, k0: float = 1.0, horizon: float = DEFAULT_HORIZON,
                   max_doublings: int = 40) -> tuple[float, float]:
    """Double ``k`` from ``k0`` until the feasibility test fails; return ``(feasible, infeasible)``."""
    oracle = FeasibilityOracle(a, gamma, horizon)
    lo, k = 0.0, float(k0)
    for _ in range(max_doublings):
        if not oracle(k):
            return lo, k
        lo, k = k, 2 * k
    raise InvalidBracket(f"no infeasible k found up to {k}", lo, k)


def find_critical_k(a, gamma, k_lo: float, k_hi: float, tol_k: float = 1e-2,
                    horizon: float = DEFAULT_HORIZON, b=None) -> CriticalReport:
    """Bisection on ``k`` for the largest intensity whose top orbit stays positive."""
    if not 0 <= k_lo < k_hi:
        raise InvalidBracket(f"need 0 <= k_lo < k_hi, got [{k_lo}, {k_hi}]", k_lo, k_hi)
    oracle = FeasibilityOracle(a, gamma, horizon, b)
    if not oracle(k_lo):
        raise InvalidBracket(f"k_lo={k_lo} is not feasible", k_lo, k_hi)
    if oracle(k_hi):
        raise InvalidBracket(f"k_hi={k_hi} is feasible", k_lo, k_hi)
    lo, hi = k_lo, k_hi
    while hi - lo > tol_k:
        mid = 0.5 * (lo + hi)
        if oracle(mid):
            lo = mid
        else:
            hi = mid
    return CriticalReport(0.5 * (lo + hi), (lo, hi), oracle.trajectory(lo), horizon,
                          oracle.z_top, list(oracle.evaluations))


# --- fates of individual orbits ---------------------------------------------


def fate_of_initial(a, gamma, k: float, z0: float, horizon: float = DEFAULT_HORIZON,
                    reference: Coefficient | None = None, b=None, gap_tol: float = 2e-2,
                    rel_tol: float = 1e-9, abs_tol: float = 1e-11) -> Fate:
    """Integrate one orbit and report blow-down or boundedness on the horizon."""
    rhs = HarvestRHS(_coef(a), _coef(gamma), k, None if b is None else _coef(b))
    traj = integrate_ivp(rhs, z0, 0.0, horizon, rel_tol, abs_tol)
    diag: dict[str, Any] = {"horizon": horizon, "status": traj.status, "steps": len(traj.times) - 1}
    if traj.status is Status.BLOWDOWN:
        return Fate(FateKind.BLOWDOWN, traj.t_est, diag)
    if traj.status is Status.UNDERFLOW:
        diag["t_stop"] = traj.t_end
        return Fate(FateKind.INCONCLUSIVE, diagnostics=diag)
    diag.update(sup=float(traj.values.max()), inf=float(traj.values.min()), final=float(traj.values[-1]))
    if reference is None:
        return Fate(FateKind.BOUNDED_ON_HORIZON, diagnostics=diag)
    final_gap = distance_to(traj, reference, "final")
    mid_gap = abs(traj(0.5 * horizon) - reference(0.5 * horizon))
    diag.update(final_gap=final_gap, mid_gap=mid_gap, gap_tol=gap_tol)
    if final_gap <= gap_tol and final_gap <= mid_gap:
        return Fate(FateKind.TENDS_TO_REFERENCE, diagnostics=diag)
    return Fate(FateKind.BOUNDED_ON_HORIZON, diagnostics=diag)


def fate_sweep(a, gamma, ks, z0s, horizon: float = DEFAULT_HORIZON) -> str:
    """CSV ``k,z0,fate,t_blowdown`` over the product of ``ks`` and ``z0s``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "z0", "fate", "t_blowdown"])
    for k in ks:
        for z0 in z0s:
            fate = fate_of_initial(a, gamma, float(k), float(z0), horizon)
            t_b = "" if fate.t_star is None else f"{fate.t_star:.17g}"
            w.writerow([f"{float(k):.17g}", f"{float(z0):.17g}", fate.kind.value, t_b])
    return buf.getvalue()
