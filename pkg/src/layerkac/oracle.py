"""Exact reference computations on micro volumes.

Constrained partition sums by Gray-code enumeration (compiled, chunked,
bit-reproducible), an independent transfer-matrix route along the layer
direction, and the instance-level checks built on top of them: defect-region
weights, the single-site conditional-law identity, the Holley inequality and
the product-measure sandwich, block deviation tails, and the vertical-coupling
interpolation identity.

All scale-dependent checks run with directly assigned small scales; the
definitions are the object under test, not the asymptotics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate

from . import _kernels
from .coarse import CoarseScales
from .meanfield import solve_mbeta
from .model import (KacKernel, Lattice, ModelParams, SpinConfig,
                    ValidationError, build_kernel, conditional_gibbs,
                    cosine_profile, local_field)

MAX_FREE_SPINS = 26
MAX_TABLE_SPINS = 20
_TABLE_CHUNK = 1 << 16


class OracleFault(RuntimeError):
    """An oracle computation hit a state it treats as a hard fault."""


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class ConstraintSpec:
    """Conjunction of per-site and per-block predicates.

    fixed_spins pins listed free sites to a value; eta_targets demands the
    fine-block label, with 0 meaning "outside both windows"; big_theta_targets
    demands the coarse-block label +-1 (a 0 target is a disjunction and is
    not expressible here).
    """

    fixed_spins: Mapping = dfield(default_factory=dict)
    eta_targets: Mapping = dfield(default_factory=dict)
    big_theta_targets: Mapping = dfield(default_factory=dict)

    def __post_init__(self):
        for v in self.fixed_spins.values():
            if v not in (-1, 1):
                raise ValidationError(f"fixed spin value {v}")
        for v in self.eta_targets.values():
            if v not in (-1, 0, 1):
                raise ValidationError(f"eta target {v}")
        for v in self.big_theta_targets.values():
            if v not in (-1, 1):
                raise ValidationError(f"big_theta target {v}; 0 not expressible")

    def is_empty(self) -> bool:
        return not (self.fixed_spins or self.eta_targets or self.big_theta_targets)

    def flipped(self) -> "ConstraintSpec":
        return ConstraintSpec(
            fixed_spins={k: -v for k, v in self.fixed_spins.items()},
            eta_targets={k: -v for k, v in self.eta_targets.items()},
            big_theta_targets={k: -v for k, v in self.big_theta_targets.items()})


@dataclass
class CompiledVolume:
    """Quadratic form of the conditional energy on the free sites.

    E(sigma) = -h.sigma - sum_{a<b} K_ab sigma_a sigma_b - eps_int * Q(sigma)
    with Q the sum of products over the detached interface pairs.  Energy of
    the frozen environment with itself is excluded throughout; it cancels in
    every ratio and conditional law this module computes.
    """

    lattice: Lattice
    params: ModelParams
    free_sites: list
    K: np.ndarray
    h: np.ndarray
    block_of: np.ndarray
    base_sums: np.ndarray
    blk_len: np.ndarray
    blk_target: np.ndarray
    m_beta: float
    zeta: float
    static_unsat: bool
    interface_pairs: np.ndarray   # (m, 2) indices into free_sites

    @property
    def n_free(self) -> int:
        return len(self.free_sites)


def _site_resolver(lattice: Lattice, spins: np.ndarray):
    """Classify a neighbor coordinate: free index, frozen value, or margin."""
    H, L = lattice.H, lattice.L

    def resolve(x: int, i: int):
        if lattice.vertical_bc == "periodic":
            i %= H
        elif not (0 <= i < H):
            return None, float(lattice.margin_row_value(above=(i >= H)))
        if lattice.horizontal_bc == "periodic":
            x %= L
        elif not (0 <= x < L):
            if lattice.vertical_bc == "mixed-dobrushin":
                return None, float(lattice.mixed_margin_column_value(i))
            return None, float(lattice.margin_column("left" if x < 0 else "right"))
        return (x, i), float(spins[i, x])

    return resolve


def compile_volume(params: ModelParams, lattice: Lattice, kernel: KacKernel,
                   boundary: SpinConfig, free_sites: Sequence,
                   constraint: ConstraintSpec | None = None,
                   scales: CoarseScales | None = None,
                   m_beta: float | None = None,
                   interface_pairs: Sequence = ()) -> CompiledVolume:
    """Reduce a constrained finite volume to arrays the enumerators accept.

    boundary supplies every spin outside free_sites (and the lattice's own
    margin decoration beyond that).  interface_pairs lists vertical bonds
    whose coupling is detached from the quadratic form so callers can dial
    it separately.
    """
    if boundary.lattice != lattice:
        raise ValidationError("boundary configuration is for a different lattice")
    constraint = constraint or ConstraintSpec()
    free = list(dict.fromkeys((int(x), int(i)) for (x, i) in free_sites))
    if len(free) != len(free_sites):
        raise ValidationError("duplicate free sites")
    for (x, i) in free:
        if not (0 <= x < lattice.L and 0 <= i < lattice.H):
            raise ValidationError(f"free site {(x, i)} outside the lattice")
    if lattice.horizontal_bc == "periodic" and lattice.L < kernel.kac_range:
        raise ValidationError(
            f"periodic L={lattice.L} shorter than the coupling range "
            f"{kernel.kac_range}; a site would couple to itself")

    spins = boundary.spins.copy()
    for (x, i), v in constraint.fixed_spins.items():
        if (x, i) not in free:
            raise ValidationError(f"fixed_spins pins {(x, i)} outside the volume")
        spins[i, x] = v
        free.remove((x, i))

    n = len(free)
    index = {s: a for a, s in enumerate(free)}
    K = np.zeros((n, n))
    h = np.zeros(n)
    resolve = _site_resolver(lattice, spins)
    w = kernel.weights
    eps = params.epsilon
    iface = {tuple(sorted(((int(px), int(pi)), (int(qx), int(qi)))))
             for ((px, pi), (qx, qi)) in interface_pairs}
    for s in iface:
        if s[0] not in index or s[1] not in index:
            raise ValidationError(f"interface pair {s} not inside the free volume")

    def visit(a, x, i, nx, ni, weight):
        key, val = resolve(nx, ni)
        if key is None or key not in index:
            h[a] += weight * val
        else:
            b = index[key]
            K[a, b] += 0.5 * weight
            K[b, a] += 0.5 * weight

    for a, (x, i) in enumerate(free):
        for d in range(1, kernel.kac_range):
            if w[d] == 0.0:
                continue
            visit(a, x, i, x + d, i, w[d])
            visit(a, x, i, x - d, i, w[d])
        if eps != 0.0:
            for di in (1, -1):
                ni = i + di
                pair = tuple(sorted(((x, i), (x, ni % lattice.H
                                              if lattice.vertical_bc == "periodic"
                                              else ni))))
                if pair in iface:
                    continue
                visit(a, x, i, x, ni, eps)
    np.fill_diagonal(K, 0.0)

    # blocks: expand coarse targets into fine ones, then split fixed/free mass
    eta_targets = dict(constraint.eta_targets)
    static_unsat = False
    if constraint.big_theta_targets or eta_targets:
        if scales is None or m_beta is None:
            raise ValidationError("block constraints need scales and m_beta")
    if constraint.big_theta_targets:
        lp, lm = scales.ell_plus, scales.ell_minus
        if lattice.L % lp != 0:
            raise ValidationError("L must be a multiple of ell_plus for "
                                  "big_theta constraints")
        ncols = lattice.L // lp
        per = lp // lm
        for (Kb, i), s in constraint.big_theta_targets.items():
            for Kn in (Kb - 1, Kb, Kb + 1):
                if lattice.horizontal_bc == "periodic":
                    Kn %= ncols
                elif not (0 <= Kn < ncols):
                    mval = (lattice.mixed_margin_column_value(i)
                            if lattice.vertical_bc == "mixed-dobrushin"
                            else lattice.margin_column("left"))
                    if mval != s:
                        static_unsat = True
                    continue
                for k in range(Kn * per, (Kn + 1) * per):
                    prev = eta_targets.get((k, i))
                    if prev is not None and prev != s:
                        static_unsat = True
                    eta_targets[(k, i)] = s

    blocks = sorted(eta_targets)
    block_ids = {}
    base_sums, blk_len, blk_target = [], [], []
    block_of = np.full(n, -1, dtype=np.int64)
    for (k, i) in blocks:
        if scales is None:
            raise ValidationError("eta constraints need scales")
        lm = scales.ell_minus
        lo, hi = k * lm, (k + 1) * lm
        if not (0 <= lo and hi <= lattice.L and 0 <= i < lattice.H):
            raise ValidationError(f"block {(k, i)} outside the lattice")
        members = [(x, i) for x in range(lo, hi)]
        fixed_sum = sum(int(spins[i, x]) for (x, i2) in members
                        if (x, i2) not in index)
        free_members = [index[s] for s in members if s in index]
        target = eta_targets[(k, i)]
        if not free_members:
            if not _static_block_ok(fixed_sum, lm, target, m_beta, scales.zeta):
                static_unsat = True
            continue
        bid = len(blk_len)
        block_ids[(k, i)] = bid
        base_sums.append(fixed_sum)
        blk_len.append(lm)
        blk_target.append(target)
        for a in free_members:
            if block_of[a] != -1:
                raise ValidationError(f"site {free[a]} constrained by two blocks")
            block_of[a] = bid

    iface_idx = np.array(sorted((index[p], index[q]) for (p, q) in iface),
                         dtype=np.int64).reshape(-1, 2)
    return CompiledVolume(
        lattice=lattice, params=params, free_sites=free, K=K, h=h,
        block_of=block_of,
        base_sums=np.array(base_sums, dtype=np.int64),
        blk_len=np.array(blk_len, dtype=np.int64),
        blk_target=np.array(blk_target, dtype=np.int8),
        m_beta=float(m_beta) if m_beta is not None else 0.0,
        zeta=float(scales.zeta) if scales is not None else 0.0,
        static_unsat=static_unsat, interface_pairs=iface_idx)


def _static_block_ok(bsum, length, target, m, z):
    avg = bsum / length
    if target == 1:
        return abs(avg - m) <= z
    if target == -1:
        return abs(avg + m) <= z
    return abs(avg - m) > z and abs(avg + m) > z


# ---------------------------------------------------------------------------
# enumeration


@dataclass
class EnumResult:
    log_z: float
    count: int
    min_energy: float
    n_free: int
    beta: float
    unsat: bool

    @property
    def z(self) -> float:
        if self.unsat:
            return 0.0
        try:
            return math.exp(self.log_z)
        except OverflowError:
            return math.inf


def enumerate_z(volume: CompiledVolume, beta: float | None = None,
                n_chunks: int | None = None) -> EnumResult:
    """Constrained partition sum over all admissible free-spin configs.

    Two Gray-code passes: admissible minimum energy first, then compensated
    summation of the max-shifted Boltzmann weights.  Chunk partials combine
    in fixed slot order, so the thread count never changes the result.
    """
    beta = volume.params.beta if beta is None else float(beta)
    n = volume.n_free
    if n > MAX_FREE_SPINS:
        raise ValidationError(f"{n} free spins exceeds the {MAX_FREE_SPINS} cap")
    if volume.static_unsat:
        return EnumResult(-math.inf, 0, math.nan, n, beta, True)
    if volume.interface_pairs.size:
        raise ValidationError("enumerate_z on a volume with detached interface "
                              "bonds; evaluate via small_table instead")
    if n == 0:
        return EnumResult(0.0, 1, 0.0, 0, beta, False)
    if n_chunks is None:
        n_chunks = 1 if n <= 16 else 64
    args = (np.ascontiguousarray(volume.K), np.ascontiguousarray(volume.h),
            0.0, beta, volume.block_of, volume.base_sums, volume.blk_len,
            volume.blk_target, volume.m_beta, volume.zeta, n_chunks)
    mins, _, cnts = _kernels.enum_pass(*args, 0.0, 0)
    count = int(cnts.sum())
    if count == 0:
        return EnumResult(-math.inf, 0, math.nan, n, beta, True)
    emin = float(mins[cnts > 0].min())
    _, sums, _ = _kernels.enum_pass(*args, emin, 1)
    log_z = -beta * emin + math.log(float(np.sum(sums)))
    return EnumResult(log_z, count, emin, n, beta, False)


@dataclass
class SmallTable:
    """Dense enumeration of every free-spin config for volumes <= 20 spins."""

    spins: np.ndarray        # (2^n, n) int8
    energy: np.ndarray       # base energy, interface bonds excluded
    q: np.ndarray            # interface pair-product sum per config
    admissible: np.ndarray   # bool
    volume: CompiledVolume

    def total_energy(self, eps_int: float = None) -> np.ndarray:
        if eps_int is None:
            eps_int = self.volume.params.epsilon
        return self.energy - eps_int * self.q


def small_table(volume: CompiledVolume) -> SmallTable:
    n = volume.n_free
    if n > MAX_TABLE_SPINS:
        raise ValidationError(f"{n} free spins exceeds the table cap "
                              f"{MAX_TABLE_SPINS}")
    total = 1 << n
    spins = np.empty((total, n), dtype=np.int8)
    energy = np.empty(total)
    qvals = np.zeros(total)
    adm = np.ones(total, dtype=bool)
    Km, h = volume.K, volume.h
    ia = volume.interface_pairs[:, 0] if volume.interface_pairs.size else None
    ib = volume.interface_pairs[:, 1] if volume.interface_pairs.size else None
    for lo in range(0, total, _TABLE_CHUNK):
        hi = min(lo + _TABLE_CHUNK, total)
        idx = np.arange(lo, hi, dtype=np.int64)
        bits = (idx[:, None] >> np.arange(n)) & 1
        S = (1 - 2 * bits).astype(np.float64)
        energy[lo:hi] = -S @ h - 0.5 * np.einsum("ja,ja->j", S @ Km, S)
        if ia is not None:
            qvals[lo:hi] = np.einsum("ja,ja->j", S[:, ia], S[:, ib])
        spins[lo:hi] = S.astype(np.int8)
        if volume.blk_len.size:
            ok = np.ones(hi - lo, dtype=bool)
            for bid in range(volume.blk_len.size):
                members = np.nonzero(volume.block_of == bid)[0]
                bs = volume.base_sums[bid] + S[:, members].sum(axis=1)
                avg = bs / volume.blk_len[bid]
                t = volume.blk_target[bid]
                m, z = volume.m_beta, volume.zeta
                if t == 1:
                    ok &= np.abs(avg - m) <= z
                elif t == -1:
                    ok &= np.abs(avg + m) <= z
                else:
                    ok &= (np.abs(avg - m) > z) & (np.abs(avg + m) > z)
            adm[lo:hi] = ok
    if volume.static_unsat:
        adm[:] = False
    return SmallTable(spins=spins, energy=energy, q=qvals, admissible=adm,
                      volume=volume)


def table_logz(table: SmallTable, beta: float | None = None,
               eps_int: float = None, shifted: bool = True) -> float:
    """log of the admissible Boltzmann sum; shifted=False sums naively."""
    beta = table.volume.params.beta if beta is None else float(beta)
    E = table.total_energy(eps_int)[table.admissible]
    if E.size == 0:
        return -math.inf
    if shifted:
        emin = E.min()
        return -beta * emin + math.log(np.exp(-beta * (E - emin)).sum())
    return math.log(np.exp(-beta * E).sum())


def table_expectation(table: SmallTable, values: np.ndarray,
                      beta: float | None = None, eps_int: float = None) -> float:
    beta = table.volume.params.beta if beta is None else float(beta)
    mask = table.admissible
    E = table.total_energy(eps_int)[mask]
    if E.size == 0:
        raise OracleFault("expectation over an unsatisfiable constraint")
    w = np.exp(-beta * (E - E.min()))
    return float(np.dot(w, np.asarray(values)[mask]) / w.sum())


# ---------------------------------------------------------------------------
# transfer matrix

MAX_TM_STATES = 4096


def _column_codes(H: int):
    q = np.arange(1 << H, dtype=np.int64)
    bits = (q[:, None] >> np.arange(H)) & 1
    return (1 - 2 * bits).astype(np.float64)   # (Q, H), layer i in column i


def _margin_column_vector(lat: Lattice) -> np.ndarray:
    if lat.vertical_bc == "mixed-dobrushin":
        return np.array([lat.mixed_margin_column_value(i) for i in range(lat.H)],
                        dtype=np.float64)
    return np.full(lat.H, float(lat.margin_column("left")))


def _vertical_energy(cols: np.ndarray, lat: Lattice, eps: float) -> np.ndarray:
    e = -eps * np.einsum("qi,qi->q", cols[:, :-1], cols[:, 1:])
    if lat.vertical_bc == "periodic":
        e -= eps * cols[:, -1] * cols[:, 0]
    else:
        e -= eps * (cols[:, 0] * lat.margin_row_value(above=False)
                    + cols[:, -1] * lat.margin_row_value(above=True))
    return e


def transfer_matrix_logz(params: ModelParams, lattice: Lattice,
                         kernel: KacKernel, beta: float | None = None) -> float:
    """log Z by propagating a window of the last kac_range-1 columns.

    Independent of the enumeration path: no Gray code, no shared energy
    compiler.  Periodic rings are closed by a scaled matrix power; open
    boundaries enter through margin-valued context columns.
    """
    beta = params.beta if beta is None else float(beta)
    m = kernel.kac_range - 1
    H = lattice.H
    Q = 1 << H
    S = Q ** m
    if S > MAX_TM_STATES:
        raise ValidationError(f"transfer state space {S} exceeds {MAX_TM_STATES}")
    cols = _column_codes(H)
    evert = _vertical_energy(cols, lattice, params.epsilon)
    dot = cols @ cols.T                       # (Q, Q) layer-wise products
    ehd = [None] + [-kernel.weights[d] * dot for d in range(1, m + 1)]
    states = np.arange(S, dtype=np.int64)
    digit = [None] + [(states // Q ** (d - 1)) % Q for d in range(1, m + 1)]

    if lattice.horizontal_bc == "periodic":
        if lattice.L < kernel.kac_range:
            raise ValidationError("periodic length shorter than coupling range")
        logw = np.full((S, Q), 0.0)
        for d in range(1, m + 1):
            logw += -beta * ehd[d][digit[d]]
        logw += -beta * evert[None, :]
        shift = logw.max()
        Tstep = np.exp(logw - shift)          # (S, Q) step weights
        T = np.zeros((S, S))
        dest = (states[:, None] * Q + np.arange(Q)[None, :]) % S
        np.add.at(T, (np.repeat(states, Q), dest.ravel()), Tstep.ravel())
        log_scale = shift
        # scaled binary exponentiation of (T, log_scale) to the L-th power
        result, result_scale, have = None, 0.0, False
        base, base_scale, k = T, log_scale, lattice.L
        while k:
            if k & 1:
                if have:
                    result = result @ base
                    s = result.max()
                    result /= s
                    result_scale += base_scale + math.log(s)
                else:
                    result, result_scale, have = base.copy(), base_scale, True
            k >>= 1
            if k:
                base = base @ base
                s = base.max()
                base /= s
                base_scale = 2 * base_scale + math.log(s)
        return math.log(np.trace(result)) + result_scale

    margin = _margin_column_vector(lattice)
    mcode = sum(1 << i for i in range(H) if margin[i] < 0)
    v = np.zeros(S)
    v[sum(mcode * Q ** j for j in range(m))] = 1.0
    log_scale = 0.0
    # true column bonds reach real predecessors or margin context alike; the
    # start state fills every pre-lattice window slot with the margin code
    logw = np.broadcast_to(-beta * evert[None, :], (S, Q)).copy()
    for d in range(1, m + 1):
        logw += -beta * ehd[d][digit[d]]
    shift = logw.max()
    step = np.exp(logw - shift)
    dest = (states[:, None] * Q + np.arange(Q)[None, :]) % S
    for x in range(lattice.L):
        nv = np.zeros(S)
        np.add.at(nv, dest.ravel(), (v[:, None] * step).ravel())
        s = nv.max()
        if s == 0.0:
            raise OracleFault("transfer vector vanished")
        v = nv / s
        log_scale += shift + math.log(s)
    for t in range(1, m + 1):
        # closing pseudo-columns: only bonds back to real columns, no own energy
        lw = np.zeros(S)
        for d in range(t, min(m, lattice.L - 1 + t) + 1):
            lw += -beta * ehd[d][digit[d], mcode]
        col_w = np.exp(lw - lw.max())
        nv = np.zeros(S)
        cdest = (states * Q + mcode) % S
        np.add.at(nv, cdest, v * col_w)
        s = nv.max()
        v = nv / s
        log_scale += lw.max() + math.log(s)
    return math.log(v.sum()) + log_scale


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    check: str
    status: str                 # pass | fail | skipped | flagged
    inputs: dict = dfield(default_factory=dict)
    computed: dict = dfield(default_factory=dict)
    bounds: dict = dfield(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


# ---------------------------------------------------------------------------
# contour weights


@dataclass
class ContourWeight:
    log_w: float
    numerator: EnumResult
    denominator: EnumResult

    @property
    def w(self) -> float:
        return math.exp(self.log_w) if np.isfinite(self.log_w) else 0.0


def contour_weight(params: ModelParams, lattice: Lattice, kernel: KacKernel,
                   boundary: SpinConfig, free_sites: Sequence,
                   numerator: ConstraintSpec, denominator: ConstraintSpec,
                   scales: CoarseScales, m_beta: float,
                   beta: float | None = None) -> ContourWeight:
    """Ratio of two constrained sums on the same conditioned volume."""
    num = enumerate_z(compile_volume(params, lattice, kernel, boundary,
                                     free_sites, numerator, scales, m_beta),
                      beta=beta)
    den = enumerate_z(compile_volume(params, lattice, kernel, boundary,
                                     free_sites, denominator, scales, m_beta),
                      beta=beta)
    if den.unsat:
        raise OracleFault("denominator constraint is unsatisfiable")
    log_w = num.log_z - den.log_z if not num.unsat else -math.inf
    return ContourWeight(log_w=log_w, numerator=num, denominator=den)


def contour_constraints(contour, fields) -> tuple[ConstraintSpec, ConstraintSpec]:
    """Numerator/denominator constraint pair for an extracted defect region.

    Numerator: the region's fine-block specification plus the signed coarse
    label on every boundary collar.  Denominator: the plus label on the
    support and all interior collars (boundary collars again pinned).
    """
    theta_bd = {}
    for (K, i) in contour.exterior_boundary:
        theta_bd[(K, i)] = contour.sign
    for it in contour.interiors:
        for (K, i) in it.boundary:
            theta_bd[(K, i)] = it.sign
    num = ConstraintSpec(eta_targets=dict(contour.specification),
                         big_theta_targets=dict(theta_bd))
    # reference sum: the exterior phase everywhere on the support and collars
    den_theta = dict(theta_bd)
    for (K, i) in contour.support:
        den_theta[(K, i)] = contour.sign
    for it in contour.interiors:
        for (K, i) in it.boundary:
            den_theta[(K, i)] = contour.sign
    den = ConstraintSpec(big_theta_targets=den_theta)
    return num, den


# ---------------------------------------------------------------------------
# single-site conditional law


def check_window_identity(params: ModelParams, lattice: Lattice,
                          kernel: KacKernel, boundary: SpinConfig,
                          site: tuple, scales: CoarseScales, m_beta: float,
                          eta_sign: int = 1,
                          beta: float | None = None) -> CheckReport:
    """Does conditioning a block label constrain the single free spin at all?

    When the rest of the block sits strictly inside the window with slack
    1/ell_minus, both spin values keep the label, so the conditional law must
    equal the bare single-site Gibbs law in the environment's field.  Outside
    that margin the conditioning can bind and the laws may differ; the
    discrepancy is reported either way.
    """
    beta = params.beta if beta is None else float(beta)
    x, i = site
    lm = scales.ell_minus
    k = x // lm
    block = [(y, i) for y in range(k * lm, (k + 1) * lm)]
    rest = sum(int(boundary.spins[i, y]) for (y, _) in block if y != x)
    partial = rest / lm
    slack = scales.zeta - 1.0 / lm
    pre_ok = abs(partial - eta_sign * m_beta) < slack

    vol = compile_volume(params, lattice, kernel, boundary, [site],
                         ConstraintSpec(eta_targets={(k, i): eta_sign}),
                         scales, m_beta)
    tab = small_table(vol)
    if not tab.admissible.any():
        p_exact = math.nan
        discrepancy = math.inf
    else:
        wts = np.exp(-beta * (tab.energy - tab.energy.min())) * tab.admissible
        p_exact = float(wts[tab.spins[:, 0] == 1].sum() / wts.sum())
        f = local_field(boundary, kernel, x, i)
        f += params.epsilon * (boundary.site(x, i - 1) + boundary.site(x, i + 1))
        p_formula = conditional_gibbs(f, beta)
        discrepancy = abs(p_exact - p_formula)
    if not pre_ok:
        status = "skipped"
    else:
        status = "pass" if discrepancy < 1e-12 else "fail"
    return CheckReport(
        check="window-identity", status=status,
        inputs={"site": list(site), "eta_sign": eta_sign, "beta": beta,
                "ell_minus": lm, "zeta": scales.zeta, "m_beta": m_beta},
        computed={"partial_average": partial, "precondition": bool(pre_ok),
                  "p_plus_exact": p_exact, "discrepancy": discrepancy},
        bounds={"slack": slack, "tolerance": 1e-12})


# ---------------------------------------------------------------------------
# Holley / product sandwich apparatus

# The single-block domination argument works with a rewritten block energy:
# a coupling part using running block averages of the raw profile (self term
# included, every ordered pair counted), and a field part collecting the
# other blocks and the vertical neighbors.  These formulas are implemented
# literally; they are the object the inequality is stated for, not the
# conditional Hamiltonian of the sampler.


@dataclass
class BlockEnv:
    """Environment for the single-block checks: one fine block on one layer,
    everything else frozen by `boundary`."""

    params: ModelParams
    lattice: Lattice
    boundary: SpinConfig
    layer: int
    k_block: int
    scales: CoarseScales
    m_beta: float
    profile: Callable = cosine_profile

    @property
    def block_sites(self) -> list:
        lm = self.scales.ell_minus
        return [(x, self.layer) for x in
                range(self.k_block * lm, (self.k_block + 1) * lm)]

    @property
    def prefactor(self) -> float:
        # stand-in for the vanishing block-coupling scale: gamma times the
        # block length, exactly the mass a block contributes to the raw sum
        return self.params.gamma * self.scales.ell_minus


def _profile_matrix(env: BlockEnv) -> np.ndarray:
    xs = np.array([x for (x, _) in env.block_sites], dtype=np.float64)
    return env.profile(env.params.gamma * (xs[None, :] - xs[:, None]))


def holley_fields(env: BlockEnv) -> np.ndarray:
    """Per-site field h_y: other-block running averages plus vertical terms."""
    p, lat = env.params, env.lattice
    lm = env.scales.ell_minus
    i = env.layer
    xs = np.array([x for (x, _) in env.block_sites])
    nblocks = lat.L // lm
    h = np.zeros(xs.size)
    for kb in range(nblocks):
        if kb == env.k_block:
            continue
        zs = np.arange(kb * lm, (kb + 1) * lm)
        sz = np.array([env.boundary.spins[i, z] for z in zs], dtype=np.float64)
        Jm = env.profile(p.gamma * (zs[None, :] - xs[:, None]))
        h += env.prefactor * (Jm @ sz) / lm
    up = np.array([env.boundary.site(x, i + 1) for x in xs], dtype=np.float64)
    dn = np.array([env.boundary.site(x, i - 1) for x in xs], dtype=np.float64)
    h += p.epsilon * (up + dn)
    return h


def fitted_kappa(env: BlockEnv) -> float:
    """Smallest kappa putting every field within zeta + kappa*prefactor."""
    h = holley_fields(env)
    excess = np.abs(h - env.m_beta).max() - env.scales.zeta
    return max(0.0, float(excess / env.prefactor))


def block_energy(env: BlockEnv, sigma: np.ndarray, h: np.ndarray) -> float:
    """The rewritten block energy used by the domination argument."""
    Jm = _profile_matrix(env)
    lm = env.scales.ell_minus
    coupling = -env.prefactor * float(sigma @ (Jm @ sigma)) / lm
    return coupling - float(sigma @ h)


def uniform_fields(env: BlockEnv, M: float, kappa: float) -> tuple[float, float]:
    gap = env.scales.zeta + (M + kappa) * env.prefactor
    return env.m_beta + gap, env.m_beta - gap


def check_holley(env: BlockEnv, M: float, kappa: float | None = None,
                 pairs: Iterable | None = None) -> CheckReport:
    """Sweep the four-point inequality over block config pairs.

    With no explicit pairs, sweeps all of them (block capped at 12 spins).
    Violations are counted and the worst margin reported; a clean sweep at
    M above twice the profile peak is the expected outcome, violations at
    small M are legal and reported honestly.
    """
    lm = env.scales.ell_minus
    kappa = fitted_kappa(env) if kappa is None else float(kappa)
    h = holley_fields(env)
    h_plus, _ = uniform_fields(env, M, kappa)
    Jm = _profile_matrix(env)
    pref = env.prefactor

    n = lm
    if pairs is None:
        if n > 12:
            raise ValidationError(f"exhaustive pair sweep needs <= 12 spins, got {n}")
        codes = np.arange(1 << n, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(n)) & 1
        S = (1 - 2 * bits).astype(np.float64)
        energy = -pref * np.einsum("ja,ab,jb->j", S, Jm, S) / lm - S @ h
        mag = S.sum(axis=1)
        ep = -h_plus * mag          # product-side energies
        worst = math.inf
        violations = 0
        at = None
        # bitwise OR realizes the pointwise minimum, AND the maximum
        for iidx in range(1 << n):
            orc = codes[iidx] | codes
            andc = codes[iidx] & codes
            lhs = -energy[orc] - ep[andc]
            rhs = -energy[iidx] - ep
            margin = lhs - rhs
            mmin = float(margin.min())
            if mmin < worst:
                worst = mmin
                at = (iidx, int(margin.argmin()))
            violations += int((margin < -1e-12).sum())
        total = (1 << n) ** 2
    else:
        worst = math.inf
        violations = 0
        at = None
        total = 0
        for sigma, tau in pairs:
            sigma = np.asarray(sigma, dtype=np.float64)
            tau = np.asarray(tau, dtype=np.float64)
            lo = np.minimum(sigma, tau)
            hi = np.maximum(sigma, tau)
            lhs = -block_energy(env, lo, h) + h_plus * hi.sum()
            rhs = -block_energy(env, sigma, h) + h_plus * tau.sum()
            margin = lhs - rhs
            total += 1
            if margin < worst:
                worst = margin
                at = (sigma.tolist(), tau.tolist())
            if margin < -1e-12:
                violations += 1
    return CheckReport(
        check="holley", status="pass" if violations == 0 else "fail",
        inputs={"M": M, "kappa": kappa, "block": lm, "pairs": total,
                "prefactor": pref},
        computed={"violations": violations, "worst_margin": worst,
                  "worst_at": at},
        bounds={"M_threshold": 2.0 * float(env.profile(np.array(0.0)))})


def check_fkg_sandwich(env: BlockEnv, M: float,
                       kappa: float | None = None) -> CheckReport:
    """Product measures with shifted uniform fields must bracket the block
    Gibbs law on every threshold event of the spin sum (and, by
    complementation, reverse on every decreasing one)."""
    lm = env.scales.ell_minus
    if lm > 16:
        raise ValidationError("sandwich enumeration capped at 16 spins")
    beta = env.params.beta
    kappa = fitted_kappa(env) if kappa is None else float(kappa)
    h = holley_fields(env)
    h_plus, h_minus = uniform_fields(env, M, kappa)
    Jm = _profile_matrix(env)
    codes = np.arange(1 << lm, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(lm)) & 1
    S = (1 - 2 * bits).astype(np.float64)
    energy = (-env.prefactor * np.einsum("ja,ab,jb->j", S, Jm, S) / lm - S @ h)
    w_mid = np.exp(-beta * (energy - energy.min()))
    w_mid /= w_mid.sum()
    mag = S.sum(axis=1)

    def product_weights(field):
        e = -field * mag
        w = np.exp(-beta * (e - e.min()))
        return w / w.sum()

    w_plus = product_weights(h_plus)
    w_minus = product_weights(h_minus)
    worst_up = math.inf
    worst_dn = math.inf
    for t in range(-lm, lm + 1, 2):
        ev = mag >= t
        lo, mid, hi = w_minus[ev].sum(), w_mid[ev].sum(), w_plus[ev].sum()
        worst_up = min(worst_up, hi - mid)
        worst_dn = min(worst_dn, mid - lo)
    ok = worst_up >= -1e-12 and worst_dn >= -1e-12
    return CheckReport(
        check="fkg-sandwich", status="pass" if ok else "fail",
        inputs={"M": M, "kappa": kappa, "block": lm, "beta": beta},
        computed={"min_upper_slack": worst_up, "min_lower_slack": worst_dn,
                  "h_plus": h_plus, "h_minus": h_minus})


def check_deviation_bound(env: BlockEnv, b_values: Sequence[float],
                          beta: float | None = None) -> CheckReport:
    """Exact conditional tail of the block average against the rate bound.

    Uses the true conditional law of the sampler's energy on the block given
    the frozen environment, conditioned on the block label being plus.  For
    each b reports the tail mass beyond b*zeta and the largest feasible rate
    constant; the pair regions are existential, so feasibility is reported
    rather than asserted.
    """
    p = env.params
    beta = p.beta if beta is None else float(beta)
    lm = env.scales.ell_minus
    zeta = env.scales.zeta
    kernel = build_kernel(p)
    vol = compile_volume(p, env.lattice, kernel, env.boundary, env.block_sites,
                         ConstraintSpec(eta_targets={(env.k_block, env.layer): 1}),
                         env.scales, env.m_beta)
    tab = small_table(vol)
    if not tab.admissible.any():
        raise OracleFault("label-plus conditioning is unsatisfiable here")
    w = np.exp(-beta * (tab.energy - tab.energy.min())) * tab.admissible
    w /= w.sum()
    avg = tab.spins.astype(np.float64).mean(axis=1)
    dev = np.abs(avg - env.m_beta)
    tails = {}
    feasible = {}
    for b in b_values:
        tail = float(w[dev > b * zeta].sum())
        tails[b] = tail
        feasible[b] = (math.inf if tail == 0.0
                       else -math.log(tail) / (lm * zeta ** 2))
    return CheckReport(
        check="deviation-bound", status="pass",
        inputs={"block": lm, "zeta": zeta, "beta": beta,
                "b_values": list(b_values)},
        computed={"tails": tails},
        bounds={"largest_feasible_cb": feasible})


# ---------------------------------------------------------------------------
# vertical-coupling interpolation


def check_interpolation(params: ModelParams, lattice: Lattice,
                        kernel: KacKernel, boundary: SpinConfig,
                        interval: Sequence[int], layer_lower: int,
                        scales: CoarseScales, m_beta: float,
                        constrain: bool = True,
                        beta: float | None = None) -> CheckReport:
    """Couple the two rows of a double-row region by a dialed interaction.

    The log-ratio of the fully coupled to the decoupled constrained sums must
    equal beta times the integral over the dial of the summed vertical
    correlations.  Both sides are computed exactly (enumeration + adaptive
    quadrature); the report carries the residual and a quadrature convergence
    flag from comparing 32- against 64-node fixed rules.
    """
    beta = params.beta if beta is None else float(beta)
    if lattice.vertical_bc == "periodic" and lattice.H == 2:
        raise ValidationError("two periodic layers double every vertical bond; "
                              "the single-dial identity does not apply")
    i = layer_lower
    xs = [int(x) for x in interval]
    free = [(x, i) for x in xs] + [(x, i + 1) for x in xs]
    lm = scales.ell_minus
    constraint = ConstraintSpec()
    if constrain:
        eta = {}
        for x in xs:
            eta[(x // lm, i)] = -1
            eta[(x // lm, i + 1)] = 1
        constraint = ConstraintSpec(eta_targets=eta)
    pairs = [((x, i), (x, i + 1)) for x in xs]
    vol = compile_volume(params, lattice, kernel, boundary, free, constraint,
                         scales, m_beta, interface_pairs=pairs)
    tab = small_table(vol)
    if not tab.admissible.any():
        raise OracleFault("interpolation constraint is unsatisfiable")
    eps_top = params.epsilon
    lhs = table_logz(tab, beta, eps_int=eps_top) - table_logz(tab, beta,
                                                              eps_int=0.0)

    def integrand(e):
        return beta * table_expectation(tab, tab.q, beta, eps_int=e)

    if eps_top == 0.0:
        rhs, flagged, quad_diff = 0.0, False, 0.0
    else:
        rhs, _ = integrate.quad(integrand, 0.0, eps_top,
                                epsabs=1e-13, epsrel=1e-13)
        g32 = _gauss_legendre(integrand, 0.0, eps_top, 32)
        g64 = _gauss_legendre(integrand, 0.0, eps_top, 64)
        quad_diff = abs(g64 - g32)
        flagged = quad_diff > 1e-8
    residual = abs(lhs - rhs)
    mean_corr = (integrand(eps_top) / beta / len(xs)) if eps_top else 0.0
    status = "flagged" if flagged else ("pass" if residual < 1e-8 else "fail")
    return CheckReport(
        check="interpolation", status=status,
        inputs={"interval": xs, "layer_lower": i, "beta": beta,
                "eps_top": eps_top, "constrained": constrain},
        computed={"lhs_log_ratio": lhs, "rhs_integral": rhs,
                  "residual": residual, "mean_vertical_correlation": mean_corr,
                  "quadrature_diff": quad_diff},
        bounds={"tolerance": 1e-8})


def _gauss_legendre(f, a: float, b: float, n: int) -> float:
    nodes, wts = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * sum(wt * f(mid + half * t) for t, wt in zip(nodes, wts))
