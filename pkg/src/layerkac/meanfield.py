"""Mean-field magnetization: the positive root of m = tanh(beta m)."""
from __future__ import annotations

import math
from dataclasses import dataclass


def tbeta(x: float, beta: float) -> float:
    """tanh(beta x), the self-consistency map."""
    return math.tanh(beta * x)


def tbeta_prime(x: float, beta: float) -> float:
    t = math.tanh(beta * x)
    return beta * (1.0 - t * t)


@dataclass(frozen=True)
class MeanFieldSolution:
    beta: float
    m: float
    residual: float
    iterations: int


def solve_mbeta(beta: float, tol: float = 1e-14) -> MeanFieldSolution:
    """Positive fixed point of tanh(beta m) = m; zero at or below beta = 1.

    Bisection on g(m) = tanh(beta m) - m over (0, 1].  g is positive just
    above 0 when beta > 1 and negative at 1, so the bracket is guaranteed.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if beta <= 1.0:
        return MeanFieldSolution(beta=beta, m=0.0, residual=0.0, iterations=0)
    lo, hi = 1e-9, 1.0
    g = lambda m: math.tanh(beta * m) - m
    if not (g(lo) > 0 > g(hi)):
        # beta barely above 1 can push the root below lo; fall back to 0 bracket
        lo = 1e-16
    it = 0
    while hi - lo > tol and it < 200:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    m = 0.5 * (lo + hi)
    return MeanFieldSolution(beta=beta, m=m, residual=abs(g(m)), iterations=it)
