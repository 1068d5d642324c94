"""Coarse-grid free-energy functional: evaluation, constrained minimization,
and the stability spot checks built on minimizers.

Everything here lives on one layer: the long-range coupling acts horizontally
only, so multi-layer problems decouple into independent instances of this
module.  The grid spacing is the geometric mean of the lattice spacing and
the interaction range (gamma^{-1/2} in lattice units); block-average window
constraints are expressed per fine-block interval of that grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Callable, Sequence

import numpy as np

from .model import ValidationError, cosine_profile

_ATANH_CLIP = 1.0 - 1e-15
STRICT_EPS = 1e-9     # closes the open ">zeta" windows of the zero label


def entropy_I(m) -> float | np.ndarray:
    """Binary entropy of (1+m)/2, continuously extended to the endpoints."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(np.abs(m) > 1.0):
        raise ValidationError("entropy argument outside [-1, 1]")
    p = np.clip((1.0 + m) / 2.0, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.where(p > 0, p * np.log(p), 0.0) \
              - np.where(p < 1, (1 - p) * np.log(1 - p), 0.0)
    return float(out) if out.ndim == 0 else out


def fbeta(m, beta: float):
    """Mean-field free energy density -m^2/2 - I(m)/beta."""
    if beta <= 0:
        raise ValidationError("beta must be positive")
    m_arr = np.asarray(m, dtype=np.float64)
    out = -0.5 * m_arr ** 2 - entropy_I(m_arr) / beta
    return float(out) if out.ndim == 0 else out


def _artanh(m: np.ndarray) -> np.ndarray:
    return np.arctanh(np.clip(m, -_ATANH_CLIP, _ATANH_CLIP))


@dataclass(frozen=True)
class FunctionalGrid:
    """Discretization: cells of width `spacing` with a normalized kernel."""

    gamma: float
    spacing: float
    weights: np.ndarray    # u_k, k = 0..reach; symmetric; sum over Z equals 1

    @classmethod
    def build(cls, gamma: float, spacing: float | None = None,
              profile: Callable = cosine_profile) -> "FunctionalGrid":
        if not (0 < gamma < 1):
            raise ValidationError(f"gamma={gamma} outside (0, 1)")
        spacing = gamma ** -0.5 if spacing is None else float(spacing)
        if spacing <= 0:
            raise ValidationError("grid spacing must be positive")
        reach = int(math.ceil(1.0 / (gamma * spacing)))
        k = np.arange(reach + 1)
        u = spacing * gamma * profile(gamma * spacing * k)
        total = u[0] + 2.0 * u[1:].sum()
        if total <= 0:
            raise ValidationError("kernel mass vanished on this grid")
        u = u / total
        u.flags.writeable = False
        return cls(gamma=gamma, spacing=spacing, weights=u)

    @property
    def reach(self) -> int:
        return self.weights.size - 1

    def u(self, dk: int) -> float:
        dk = abs(int(dk))
        return float(self.weights[dk]) if dk <= self.reach else 0.0


@dataclass(frozen=True)
class Domain:
    """Union of disjoint cell intervals (start, length), sorted."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((int(s), int(n)) for (s, n) in self.intervals)
        object.__setattr__(self, "intervals", iv)
        last_end = None
        for (s, n) in iv:
            if n <= 0:
                raise ValidationError("empty domain interval")
            if last_end is not None and s < last_end:
                raise ValidationError("domain intervals overlap or are unsorted")
            last_end = s + n

    @property
    def n_cells(self) -> int:
        return sum(n for (_, n) in self.intervals)

    @property
    def positions(self) -> np.ndarray:
        return np.concatenate([np.arange(s, s + n) for (s, n) in self.intervals])


def constant_conditioning(value: float) -> Callable:
    return lambda cells: np.full(np.asarray(cells).shape, float(value))


def step_conditioning(left: float, right: float, split: int) -> Callable:
    """left value on cells < split, right value from split on."""
    return lambda cells: np.where(np.asarray(cells) < split, float(left),
                                  float(right))


@dataclass
class WindowSet:
    """Per fine-block window targets on the domain cells.

    Target +-1 keeps the window average within zeta of +-m_beta; target 0
    keeps it at least zeta + STRICT_EPS away from both.
    """

    cells_per_window: int
    targets: np.ndarray      # int8, one per window over the concatenated cells
    m_beta: float
    zeta: float

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.int8)
        if self.cells_per_window <= 0:
            raise ValidationError("cells_per_window must be positive")
        if self.zeta + STRICT_EPS >= self.m_beta:
            raise ValidationError("zeta >= m_beta leaves no room between the "
                                  "windows; constraints are infeasible")
        bad = set(np.unique(self.targets)) - {-1, 0, 1}
        if bad:
            raise ValidationError(f"window targets {sorted(bad)}")

    @classmethod
    def from_eta(cls, targets: Sequence[int], ell_minus: float,
                 grid: FunctionalGrid, m_beta: float, zeta: float) -> "WindowSet":
        q = ell_minus / grid.spacing
        if abs(q - round(q)) > 1e-9:
            raise ValidationError(
                f"grid spacing {grid.spacing} does not divide the fine block "
                f"length {ell_minus}")
        return cls(cells_per_window=int(round(q)), targets=np.asarray(targets),
                   m_beta=m_beta, zeta=zeta)

    def admissible_avg_intervals(self, target: int) -> list:
        m, z = self.m_beta, self.zeta
        if target == 1:
            return [(m - z, min(1.0, m + z))]
        if target == -1:
            return [(max(-1.0, -m - z), -m + z)]
        e = z + STRICT_EPS
        out = []
        if -m - e >= -1.0:
            out.append((-1.0, -m - e))
        out.append((-m + e, m - e))
        if m + e <= 1.0:
            out.append((m + e, 1.0))
        return out


@dataclass
class Profile:
    """A profile on a domain, the unit of CLI and file interchange."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size != self.domain.n_cells:
            raise ValidationError(f"{self.values.size} values on a "
                                  f"{self.domain.n_cells}-cell domain")
        if np.any(np.abs(self.values) > 1.0 + 1e-12):
            raise ValidationError("profile values outside [-1, 1]")


@dataclass
class Problem:
    """Precomputed quadratic data for one conditioned domain."""

    grid: FunctionalGrid
    domain: Domain
    beta: float
    U: np.ndarray        # (N, N) in-domain kernel
    s0: np.ndarray       # exterior kernel mass per cell
    s1: np.ndarray       # exterior kernel-weighted conditioning
    s2: np.ndarray       # exterior kernel-weighted squared conditioning
    windows: WindowSet | None = None
    periodic: bool = False

    @property
    def n_cells(self) -> int:
        return self.domain.n_cells


def build_problem(grid: FunctionalGrid, domain: Domain, beta: float,
                  conditioning=None, windows: WindowSet | None = None,
                  periodic: bool = False) -> Problem:
    """Assemble the dense kernel and conditioning moments for a domain.

    conditioning is a constant, a callable over absolute cell indices, or
    None for a free boundary (zero external profile).  periodic closes a
    single-interval domain into a ring and forbids conditioning.
    """
    if beta <= 0:
        raise ValidationError("beta must be positive")
    pos = domain.positions
    N = pos.size
    if windows is not None and N % windows.cells_per_window != 0:
        raise ValidationError("domain does not split into whole windows")
    if windows is not None and windows.targets.size * windows.cells_per_window != N:
        raise ValidationError(f"{windows.targets.size} windows do not tile "
                              f"{N} cells")
    K = grid.reach
    s0 = np.zeros(N)
    s1 = np.zeros(N)
    s2 = np.zeros(N)
    if periodic:
        if len(domain.intervals) != 1:
            raise ValidationError("periodic closure needs a single interval")
        if conditioning is not None:
            raise ValidationError("periodic domains take no conditioning")
        d = np.abs(pos[:, None] - pos[None, :])
        U = np.zeros((N, N))
        for j in range(-(K // N) - 1, K // N + 2):
            dk = np.abs(d + j * N)
            U += np.where(dk <= K, grid.weights[np.minimum(dk, K)], 0.0)
    else:
        if conditioning is None:
            cond = constant_conditioning(0.0)
        elif callable(conditioning):
            cond = conditioning
        else:
            cond = constant_conditioning(float(conditioning))
        dk = np.abs(pos[:, None] - pos[None, :])
        U = np.where(dk <= K, grid.weights[np.minimum(dk, K)], 0.0)
        inside = set(int(p) for p in pos)
        for a, p in enumerate(pos):
            ext = np.array([c for c in range(p - K, p + K + 1)
                            if c not in inside], dtype=np.int64)
            if ext.size == 0:
                continue
            w = grid.weights[np.abs(ext - p)]
            mv = np.asarray(cond(ext), dtype=np.float64)
            s0[a] = w.sum()
            s1[a] = np.dot(w, mv)
            s2[a] = np.dot(w, mv ** 2)
    return Problem(grid=grid, domain=domain, beta=beta, U=U,
                   s0=s0, s1=s1, s2=s2, windows=windows, periodic=periodic)


def free_energy(problem: Problem, values: np.ndarray) -> float:
    """Midpoint-rule functional with the conditioning cross term."""
    m = np.asarray(values, dtype=np.float64)
    d = problem.grid.spacing
    inter = -0.5 * m @ (problem.U @ m) - m @ problem.s1
    return d * (inter - entropy_I(m).sum() / problem.beta)


def gradient(problem: Problem, values: np.ndarray) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    d = problem.grid.spacing
    return d * (-(problem.U @ m) - problem.s1 + _artanh(m) / problem.beta)


def excess_energy(problem: Problem, values: np.ndarray, m_beta: float) -> float:
    """Functional measured from the flat reference, in manifestly
    nonnegative form: local excess plus the two squared-difference terms."""
    m = np.asarray(values, dtype=np.float64)
    d = problem.grid.spacing
    local = (fbeta(m, problem.beta) - fbeta(m_beta, problem.beta)).sum()
    diff = m[:, None] - m[None, :]
    quad_in = 0.25 * float(np.sum(problem.U * diff ** 2))
    quad_out = 0.5 * float(np.sum(problem.s0 * m ** 2 - 2.0 * problem.s1 * m
                                  + problem.s2))
    return d * (local + quad_in + quad_out)


# ---------------------------------------------------------------------------
# constraint projection


def _project_window(vals: np.ndarray, intervals: list) -> np.ndarray:
    """Clip to [-1,1], then shift uniformly toward the nearest admissible
    average interval until the window average lands inside it."""
    out = np.clip(vals, -1.0, 1.0)
    avg = out.mean()
    best = None
    for (lo, hi) in intervals:
        tgt = min(max(avg, lo), hi)
        if best is None or abs(tgt - avg) < abs(best - avg):
            best = tgt
    lo, hi = None, None
    for (a, b) in intervals:
        if a - 1e-15 <= best <= b + 1e-15:
            lo, hi = a, b
            break
    for _ in range(200):
        avg = out.mean()
        if lo - 1e-12 <= avg <= hi + 1e-12:
            return out
        target = min(max(avg, lo), hi)
        out = np.clip(out + (target - avg), -1.0, 1.0)
    raise ValidationError("window projection failed to converge")


def project(values: np.ndarray, windows: WindowSet | None) -> np.ndarray:
    if windows is None:
        return np.clip(values, -1.0, 1.0)
    q = windows.cells_per_window
    out = np.array(values, dtype=np.float64)
    for w, t in enumerate(windows.targets):
        sl = slice(w * q, (w + 1) * q)
        out[sl] = _project_window(out[sl], windows.admissible_avg_intervals(int(t)))
    return out


# ---------------------------------------------------------------------------
# minimization


@dataclass
class MinimizeResult:
    values: np.ndarray
    value: float
    converged: bool
    iterations: int
    pg_norm: float
    seed_values: list
    accepted_monotone: bool
    # coarse-graining error scale beta * sqrt(gamma) * log(1/gamma) * |domain|.
    # Informational: the constant in front is existential, so this is never a
    # pass/fail threshold.
    error_scale: float = 0.0


def _descend(problem: Problem, m0: np.ndarray, tol: float,
             max_iter: int) -> tuple[np.ndarray, float, bool, int, float, bool]:
    # tol is relative to the attained functional magnitude (absolute below 1)
    m = project(m0, problem.windows)
    f = free_energy(problem, m)
    step = 1.0
    monotone = True
    for it in range(max_iter):
        g = gradient(problem, m)
        pg = m - project(m - g, problem.windows)
        pgn = float(np.linalg.norm(pg))
        thr = tol * max(1.0, abs(f))
        if pgn < thr:
            return m, f, True, it, pgn, monotone
        accepted = False
        while step > 1e-14:
            cand = project(m - step * g, problem.windows)
            decr = float(g @ (m - cand))
            fc = free_energy(problem, cand)
            if fc <= f - 1e-4 * decr + 1e-15:
                if fc > f + 1e-12:
                    monotone = False
                m, f = cand, fc
                step = min(step * 1.3, 1e3)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # line search exhausted: F is at float resolution near the
            # constrained minimum, so judge by the projected gradient
            pgn = float(np.linalg.norm(m - project(m - gradient(problem, m),
                                                   problem.windows)))
            return m, f, pgn < tol * max(1.0, abs(f)), it, pgn, monotone
    g = gradient(problem, m)
    pgn = float(np.linalg.norm(m - project(m - g, problem.windows)))
    return m, f, pgn < tol * max(1.0, abs(f)), max_iter, pgn, monotone


def default_seeds(problem: Problem, m_beta: float, rng_seed: int = 0) -> list:
    N = problem.n_cells
    if problem.windows is not None:
        q = problem.windows.cells_per_window
        base = np.repeat(problem.windows.targets.astype(np.float64) * m_beta, q)
    else:
        base = np.full(N, m_beta)
    rng = np.random.default_rng(rng_seed)
    return [base, -base, rng.uniform(-1.0, 1.0, size=N)]


def minimize(problem: Problem, m_beta: float, seeds: Sequence | None = None,
             tol: float = 1e-8, max_iter: int = 100_000,
             rng_seed: int = 0) -> MinimizeResult:
    """Projected gradient descent from several starts; best result wins."""
    if seeds is None:
        seeds = default_seeds(problem, m_beta, rng_seed)
    best = None
    seed_values = []
    for s in seeds:
        m, f, conv, its, pgn, mono = _descend(problem, np.asarray(s, float),
                                              tol, max_iter)
        seed_values.append(f)
        if best is None or f < best[1]:
            best = (m, f, conv, its, pgn, mono)
    m, f, conv, its, pgn, mono = best
    g = problem.grid
    scale = problem.beta * math.sqrt(g.gamma) * math.log(1.0 / g.gamma) \
        * g.spacing * problem.n_cells
    return MinimizeResult(values=m, value=f, converged=conv, iterations=its,
                          pg_norm=pgn, seed_values=seed_values,
                          accepted_monotone=mono, error_scale=scale)


# ---------------------------------------------------------------------------
# stability spot checks


@dataclass
class DecayReport:
    mid_deviation: float
    edge_deviation: float
    omega_fitted: float
    distances: np.ndarray
    deviations: np.ndarray
    values: np.ndarray


def check_decay(grid: FunctionalGrid, beta: float, m_beta: float, zeta: float,
                ell_minus: float, n_windows: int, cond_left: float,
                cond_right: float, rng_seed: int = 0) -> DecayReport:
    """Minimize over a uniformly plus-labeled window span and report how far
    the minimizer strays from the flat value toward the edges.

    The fitted decay rate is per unit of gamma times distance; it is reported
    for inspection, never asserted against a universal constant.
    """
    ws = WindowSet.from_eta([1] * n_windows, ell_minus, grid, m_beta, zeta)
    N = ws.cells_per_window * n_windows
    domain = Domain(intervals=((0, N),))
    cond = step_conditioning(cond_left, cond_right, split=N)
    problem = build_problem(grid, domain, beta, cond, ws)
    res = minimize(problem, m_beta, rng_seed=rng_seed)
    dev = np.abs(res.values - m_beta)
    reach_cells = max(1, int(math.ceil(1.0 / (grid.gamma * grid.spacing))))
    mid = N // 2
    lo, hi = max(0, mid - reach_cells), min(N, mid + reach_cells + 1)
    mid_dev = float(dev[lo:hi].max())
    edge_dev = float(max(dev[0], dev[-1]))
    # fit a rate on the right half, where the step conditioning acts
    dist = (N - 1 - np.arange(N)) * grid.spacing * grid.gamma
    mask = (np.arange(N) >= mid) & (dev > 1e-13)
    if mask.sum() >= 2:
        slope = np.polyfit(dist[mask], np.log(dev[mask]), 1)[0]
        omega = float(-slope)
    else:
        omega = math.inf
    return DecayReport(mid_deviation=mid_dev, edge_deviation=edge_dev,
                       omega_fitted=omega, distances=dist, deviations=dev,
                       values=res.values)


@dataclass
class ExcessReport:
    excess: float
    n_sign_changes: int
    n_zero_windows: int
    rate_unit: float
    largest_c: float
    margins: dict
    values: np.ndarray


def excess_bound_check(grid: FunctionalGrid, beta: float, m_beta: float,
                       zeta: float, ell_minus: float, eta_pattern: Sequence[int],
                       cond_left: float, cond_right: float,
                       c_grid: Sequence[float] = (0.01, 0.05, 0.1, 0.5, 1.0),
                       rng_seed: int = 0) -> ExcessReport:
    """Minimal excess energy of a constrained span against the defect-count
    rate: excess >= c * ell_minus * zeta^2 * (2n + p) for which c?

    n counts sign changes across the nonzero window targets (including the
    conditioning values at both ends), p counts zero-target windows.  The
    largest feasible c is reported per instance.
    """
    targets = np.asarray(eta_pattern, dtype=np.int8)
    ws = WindowSet.from_eta(targets, ell_minus, grid, m_beta, zeta)
    N = ws.cells_per_window * targets.size
    domain = Domain(intervals=((0, N),))
    cond = step_conditioning(cond_left, cond_right, split=N)
    problem = build_problem(grid, domain, beta, cond, ws)
    res = minimize(problem, m_beta, rng_seed=rng_seed)
    excess = excess_energy(problem, res.values, m_beta)

    signs = [int(np.sign(cond_left))]
    signs += [int(t) for t in targets if t != 0]
    signs.append(int(np.sign(cond_right)))
    n = sum(1 for a, b in zip(signs, signs[1:]) if a != 0 and b != 0 and a != b)
    p = int(np.sum(targets == 0))
    unit = ell_minus * zeta ** 2 * (2 * n + p)
    largest = math.inf if unit == 0 else excess / unit
    margins = {float(c): excess - float(c) * unit for c in c_grid}
    return ExcessReport(excess=excess, n_sign_changes=n, n_zero_windows=p,
                        rate_unit=unit, largest_c=largest, margins=margins,
                        values=res.values)
