"""End-to-end re-computation of the two worked examples (constant and decaying harvest)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .exact import special_solution
from .harvest import (
    classify_at_critical,
    fate_of_initial,
    find_critical_k,
    particular,
    separation_integral,
    shift_by_particular,
)
from .expr import constant, parse

LOGISTIC_A, LOGISTIC_GAMMA = "1", "1/4"
DECAY_A, DECAY_GAMMA = "1", "1/4 - 2/(t+5)^2"
DECAY_P = "1/2 + 2/(t+5)"


@dataclass
class Row:
    name: str
    quantity: str
    expected: float
    computed: float
    tol: float

    @property
    def delta(self) -> float:
        return abs(self.computed - self.expected)

    @property
    def passed(self) -> bool:
        return math.isfinite(self.computed) and self.delta <= self.tol


def _kbar(a: str, gamma: str) -> float:
    return find_critical_k(a, gamma, 0.0, 4.0, tol_k=1e-2, horizon=200.0).k_bar


def _decay_p():
    return particular(DECAY_P, 1.0, DECAY_A, DECAY_GAMMA)


def _separation() -> float:
    return separation_integral(DECAY_A, _decay_p()).value


def _v0() -> float:
    shifted = shift_by_particular(parse(DECAY_A), _decay_p())
    return special_solution(shifted, constant(1.0), 200.0)(0.0)


def _p1_0() -> float:
    return classify_at_critical(DECAY_A, DECAY_GAMMA, 1.0, _decay_p()).p1_initial


def _fate_split(horizon: float = 100.0) -> float:
    """Initial value separating blow-down from survival on ``[0, horizon]`` at k = 1."""

    def blows(z0: float) -> bool:
        return fate_of_initial(DECAY_A, DECAY_GAMMA, 1.0, z0, horizon).t_star is not None

    lo, hi = 0.29, 0.30
    if not blows(lo) or blows(hi):
        return math.nan
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        if blows(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


ROWS: dict[str, tuple[str, float, float, Callable[[], float]]] = {
    "kbar_logistic": ("critical k, a=1, gamma=1/4", 1.0, 2e-2, lambda: _kbar(LOGISTIC_A, LOGISTIC_GAMMA)),
    "kbar_decay": ("critical k, gamma=1/4-2/(t+5)^2", 1.0, 2e-2, lambda: _kbar(DECAY_A, DECAY_GAMMA)),
    "I": ("separation integral I", 5.0 / 3.0, 1e-6, _separation),
    "v0": ("special solution v(0)", -0.6, 1e-8, _v0),
    "p1_0": ("second bounded solution p1(0)", 0.3, 1e-8, _p1_0),
    "fate_split": ("blow-down threshold z(0) at k=1", 0.3, 1e-3, _fate_split),
}


def reproduce(rows: list[str] | None = None, tol: float | None = None) -> list[Row]:
    names = list(ROWS) if not rows else rows
    unknown = [n for n in names if n not in ROWS]
    if unknown:
        raise KeyError(f"unknown rows {unknown}; choose from {list(ROWS)}")
    out = []
    for name in names:
        quantity, expected, row_tol, compute = ROWS[name]
        out.append(Row(name, quantity, expected, compute(), row_tol if tol is None else tol))
    return out


def format_table(rows: list[Row]) -> str:
    header = f"{'row':<14} {'quantity':<34} {'expected':>14} {'computed':>20} {'|delta|':>10} {'tol':>8}  result"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.name:<14} {r.quantity:<34} {r.expected:>14.10g} {r.computed:>20.15g} "
            f"{r.delta:>10.3g} {r.tol:>8.1g}  {'pass' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines)
