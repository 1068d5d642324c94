"""Closed-form contour-weight bounds and the small-gamma feasibility scan.

Everything here is formula evaluation: given explicit positive constants,
these functions answer which interaction ranges satisfy the suppression
inequalities.  The constants are inputs, never derived; all work happens in
log space so the scan stays stable down to gamma = 1e-6.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.special import logsumexp

from .coarse import ContourStats
from .model import ModelParams, ValidationError

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)
LOG4 = math.log(4.0)


@dataclass(frozen=True)
class BoundConstants:
    """Explicit constants for the suppression inequalities.

    c scales the per-defect cost, ctilde sets the small parameter
    psi = exp(-ctilde * gamma^(-1+alpha+2a)); the block-scale exponents
    alpha, a and the vertical-coupling exponent big_a mirror the model
    parameter ordering.
    """

    c: float
    ctilde: float
    alpha: float = 0.1
    a: float = 0.01
    big_a: float = 2.0

    def __post_init__(self):
        if self.c <= 0 or self.ctilde <= 0:
            raise ValidationError("constants c and ctilde must be positive")
        if not (0 < self.a < self.alpha):
            raise ValidationError(
                f"need 0 < a < alpha, got a={self.a} alpha={self.alpha}")
        if -1 + self.alpha + 2 * self.a >= 0:
            raise ValidationError("alpha + 2a must stay below 1 so the "
                                  "defect cost grows as gamma shrinks")
        if self.big_a <= 0:
            raise ValidationError("big_a must be positive")

    def defect_exponent(self, gamma: float) -> float:
        """gamma^(-1+alpha+2a), the idealized per-block defect cost."""
        return gamma ** (-1.0 + self.alpha + 2.0 * self.a)

    def psi_log(self, gamma: float) -> float:
        return -self.ctilde * self.defect_exponent(gamma)


def log_weight_bound(stats: ContourStats, params: ModelParams,
                     constants: BoundConstants,
                     shrunk_scale: bool = False) -> float:
    """log of exp(-c (N0 * defect_cost + vertical_cost * S_total)).

    Physical mode prices a defect block at gamma^(-1+alpha+2a) and a stripe
    site at gamma^big_a, using the params' own exponents.  Shrunk-scale mode
    substitutes the realized toy counterparts: ell_minus * zeta^2 per defect
    block (the rounded block size times the squared window width, which is
    what the exponent abbreviates) and the actual epsilon per stripe site.
    """
    if constants.c <= 0:
        raise ValidationError("c must be positive")
    if shrunk_scale:
        defect = params.ell_minus * params.zeta ** 2
        per_site = params.epsilon
    else:
        defect = params.gamma ** (-1.0 + params.alpha + 2.0 * params.a)
        per_site = params.gamma ** params.A
    return -constants.c * (stats.n0 * defect + per_site * stats.stripe_site_total)


def weight_bound(stats: ContourStats, params: ModelParams,
                 constants: BoundConstants, shrunk_scale: bool = False) -> float:
    return math.exp(log_weight_bound(stats, params, constants, shrunk_scale))


def fitted_c(stats: ContourStats, params: ModelParams, log_w: float,
             shrunk_scale: bool = True) -> float:
    """Largest c for which the bound still covers an observed weight."""
    if shrunk_scale:
        cost = stats.n0 * params.ell_minus * params.zeta ** 2 \
            + params.epsilon * stats.stripe_site_total
    else:
        cost = stats.n0 * params.gamma ** (-1.0 + params.alpha + 2.0 * params.a) \
            + params.gamma ** params.A * stats.stripe_site_total
    if cost <= 0:
        raise ValidationError("contour carries no defect cost to fit against")
    return -log_w / cost


@dataclass(frozen=True)
class PeierlsReport:
    gamma: float
    status: str                 # "pass" | "fail" | "series diverges"
    psi_log: float
    contour_lhs_log: float
    contour_rhs_log: float
    contour_margin: float       # rhs - lhs in log space; > 0 passes
    stripe_lhs_log: float | None
    stripe_margin: float | None
    tree_term_log: float        # (ell_plus/ell_minus) * log 3
    decay_term_log: float       # (c/2) * defect exponent
    tree_term_dominates: bool

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def peierls_sum_check(gamma: float, constants: BoundConstants) -> PeierlsReport:
    """Evaluate both summability inequalities at one gamma.

    The contour-growth condition compares (1+psi)^8 e^{-(c/2) E} 3^{R} with
    psi/2, where E is the defect exponent and R = gamma^(-2 alpha) is the
    idealized block-scale ratio (deliberately not rounded to powers of two:
    this is a formula-level check, not a lattice instantiation).  The stripe
    series is summed in closed form via sum n x^n = x/(1-x)^2 with
    x = (1+psi)^2 e^{-c gamma^big_a}; x >= 1 is reported as divergence.
    """
    if not (0 < gamma <= 1):
        raise ValidationError(f"gamma={gamma} outside (0, 1]")
    if constants.ctilde >= constants.c / 4:
        raise ValidationError("need ctilde < c/4 for the series bookkeeping")
    c = constants.c
    E = constants.defect_exponent(gamma)
    psi_log = constants.psi_log(gamma)
    log1p_psi = math.log1p(math.exp(psi_log))   # exp underflow -> log1p(0)=0
    ratio = gamma ** (-2.0 * constants.alpha)
    tree_term = ratio * LOG3
    decay_term = 0.5 * c * E
    rhs = psi_log - LOG2
    contour_lhs = 8.0 * log1p_psi - decay_term + tree_term
    contour_margin = rhs - contour_lhs

    x_log = 2.0 * log1p_psi - c * gamma ** constants.big_a
    if x_log >= 0:
        return PeierlsReport(gamma=gamma, status="series diverges",
                             psi_log=psi_log, contour_lhs_log=contour_lhs,
                             contour_rhs_log=rhs, contour_margin=contour_margin,
                             stripe_lhs_log=None, stripe_margin=None,
                             tree_term_log=tree_term, decay_term_log=decay_term,
                             tree_term_dominates=tree_term > decay_term)
    one_minus_x = -math.expm1(x_log)
    stripe_lhs = LOG4 + 8.0 * log1p_psi - 0.25 * c * E + x_log \
        - 2.0 * math.log(one_minus_x)
    stripe_margin = rhs - stripe_lhs
    status = "pass" if (contour_margin > 0 and stripe_margin > 0) else "fail"
    return PeierlsReport(gamma=gamma, status=status, psi_log=psi_log,
                         contour_lhs_log=contour_lhs, contour_rhs_log=rhs,
                         contour_margin=contour_margin,
                         stripe_lhs_log=stripe_lhs, stripe_margin=stripe_margin,
                         tree_term_log=tree_term, decay_term_log=decay_term,
                         tree_term_dominates=tree_term > decay_term)


def stripe_partial_log(gamma: float, constants: BoundConstants,
                       n_terms: int) -> float:
    """Truncated stripe series in log space, for cross-checking the closed
    form.  Only meaningful where the series converges."""
    if n_terms < 1:
        raise ValidationError("need at least one term")
    c = constants.c
    E = constants.defect_exponent(gamma)
    log1p_psi = math.log1p(math.exp(constants.psi_log(gamma)))
    t = c * gamma ** constants.big_a
    terms = [math.log(4.0 * n) + (2 * n + 8) * log1p_psi - n * t - 0.25 * c * E
             for n in range(1, n_terms + 1)]
    return float(logsumexp(terms))


@dataclass(frozen=True)
class Gamma0Report:
    gamma0: float | None
    status: str                  # "ok" | "no gamma0 found in range"
    scan: tuple                  # ((gamma, status), ...) ascending
    monotone: bool
    violations: tuple            # (fail_gamma, later_pass_gamma) pairs


def find_gamma0(constants: BoundConstants, lo: float = 1e-6, hi: float = 1.0,
                n_grid: int = 40, refine_iters: int = 80) -> Gamma0Report:
    """Largest gamma below which the summability check keeps passing.

    Scans a log grid, requires a passing prefix (every smaller grid point
    also passes), then bisects the boundary.  A pass above a fail breaks
    monotonicity; such pairs are reported rather than silently accepted.
    """
    if not (0 < lo < hi <= 1):
        raise ValidationError(f"bad range ({lo}, {hi})")
    if n_grid < 2:
        raise ValidationError("need at least two grid points")
    grid = [lo * (hi / lo) ** (k / (n_grid - 1)) for k in range(n_grid)]
    scan = [(g, peierls_sum_check(g, constants).status) for g in grid]
    passes = [s == "pass" for (_, s) in scan]

    violations = []
    for i in range(len(grid)):
        if passes[i]:
            continue
        for j in range(i + 1, len(grid)):
            if passes[j]:
                violations.append((grid[i], grid[j]))
                break
    monotone = not violations

    prefix_end = -1
    for i, ok in enumerate(passes):
        if not ok:
            break
        prefix_end = i
    if prefix_end < 0:
        return Gamma0Report(gamma0=None, status="no gamma0 found in range",
                            scan=tuple(scan), monotone=monotone,
                            violations=tuple(violations))
    if prefix_end == len(grid) - 1:
        return Gamma0Report(gamma0=hi, status="ok", scan=tuple(scan),
                            monotone=monotone, violations=tuple(violations))
    g_lo, g_hi = grid[prefix_end], grid[prefix_end + 1]
    for _ in range(refine_iters):
        mid = math.sqrt(g_lo * g_hi)
        if peierls_sum_check(mid, constants).passed:
            g_lo = mid
        else:
            g_hi = mid
    return Gamma0Report(gamma0=g_lo, status="ok", scan=tuple(scan),
                        monotone=monotone, violations=tuple(violations))
