"""Scalar root finding and bracketed minimization."""

from __future__ import annotations

import math
from typing import Callable

__all__ = ["ConvergenceError", "bisect_secant", "golden_section"]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(ArithmeticError):
    pass


def bisect_secant(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    ftol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Find a root of ``f`` in ``[lo, hi]``, where ``f`` changes sign.

    Bisection shrinks the bracket until it stops moving in floating point,
    then a few secant steps (kept inside the bracket) polish the residual.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ConvergenceError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    else:
        raise ConvergenceError(f"bisection did not converge in {max_iter} iterations")

    x, fx = (lo, flo) if abs(flo) <= abs(fhi) else (hi, fhi)
    for _ in range(4):
        if abs(fx) <= ftol or fhi == flo:
            break
        cand = hi - fhi * (hi - lo) / (fhi - flo)
        if not lo <= cand <= hi:
            break
        fc = f(cand)
        if abs(fc) < abs(fx):
            x, fx = cand, fc
        else:
            break
    if abs(fx) > ftol:
        raise ConvergenceError(f"residual {fx:.3e} above tolerance {ftol:.1e} at x={x}")
    return x


def golden_section(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = 1e-9,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(x_min, f(x_min))``."""
    if hi < lo:
        lo, hi = hi, lo
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    else:
        raise ConvergenceError(f"golden section did not reach xtol={xtol} in {max_iter} iterations")
    x = 0.5 * (lo + hi)
    fx = f(x)
    # the midpoint of the final bracket can be marginally worse than a probe
    for probe, fprobe in ((c, fc), (d, fd)):
        if fprobe < fx:
            x, fx = probe, fprobe
    return x, fx
