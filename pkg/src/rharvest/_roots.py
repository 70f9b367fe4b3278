from __future__ import annotations

from typing import Callable


def bisect_root(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10,
                f_lo: float | None = None, max_iter: int = 200) -> float:
    """Root of ``f`` in ``[lo, hi]`` by bisection; ``f(lo)`` and ``f(hi)`` must differ in sign."""
    f_lo = f(lo) if f_lo is None else f_lo
    if f_lo == 0.0:
        return lo
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (f_lo > 0):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
