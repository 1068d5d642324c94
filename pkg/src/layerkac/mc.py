"""Heat-bath Monte Carlo engine with an incremental field cache.

Randomness comes from a counter-based Philox generator keyed by
(seed, replica); identical run specs reproduce measurement streams
bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .model import (KacKernel, Lattice, ModelParams, SpinConfig, ValidationError,
                    build_kernel, hamiltonian)

MEASUREMENT_CHANNELS = ("magnetization", "energy", "layer_profile",
                        "block_eta_histogram", "interval_lengths")
INITS = ("plus", "minus", "random")

CACHE_TOL = 1e-9
RESYNC_EVERY = 10_000


class CacheDesyncError(RuntimeError):
    """Internal fault: the incremental field cache drifted past tolerance."""


def _margin_columns(lat: Lattice) -> np.ndarray:
    out = np.zeros(lat.H, dtype=np.int8)
    if lat.horizontal_bc == "periodic":
        return out
    if lat.vertical_bc == "mixed-dobrushin":
        for i in range(lat.H):
            out[i] = lat.mixed_margin_column_value(i)
    else:
        out[:] = lat.margin_column("left")
    return out


def _margin_rows(lat: Lattice) -> tuple[int, int]:
    if lat.vertical_bc == "periodic":
        return 0, 0
    return lat.margin_row_value(above=True), lat.margin_row_value(above=False)


class FieldCache:
    """Cached horizontal Kac field per site, updated incrementally on flips."""

    def __init__(self, cfg: SpinConfig, kernel: KacKernel):
        self.kernel = kernel
        self.lattice = cfg.lattice
        self.hfield = np.empty((cfg.lattice.H, cfg.lattice.L), dtype=np.float64)
        self.recompute(cfg)

    def recompute(self, cfg: SpinConfig):
        _kernels.compute_hfield(cfg.spins, self.kernel.weights,
                                cfg.lattice.horizontal_bc == "periodic",
                                _margin_columns(cfg.lattice), self.hfield)

    def max_deviation(self, cfg: SpinConfig) -> float:
        fresh = np.empty_like(self.hfield)
        _kernels.compute_hfield(cfg.spins, self.kernel.weights,
                                cfg.lattice.horizontal_bc == "periodic",
                                _margin_columns(cfg.lattice), fresh)
        return float(np.max(np.abs(fresh - self.hfield)))

    def check(self, cfg: SpinConfig, tol: float = CACHE_TOL):
        dev = self.max_deviation(cfg)
        if dev > tol:
            raise CacheDesyncError(
                f"field cache deviates by {dev:.3e} (> {tol:.0e})")
        return dev


@dataclass(frozen=True)
class RunSpec:
    """Everything that determines one Monte Carlo run."""

    params: ModelParams
    lattice: Lattice
    sweeps: int
    burn_in: int = 0
    seed: int = 0
    replica: int = 0
    measure_every: int = 1
    measurements: tuple[str, ...] = ("magnetization",)
    init: str = "random"

    def __post_init__(self):
        if self.sweeps <= 0 or self.burn_in < 0:
            raise ValidationError("sweeps must be > 0 and burn_in >= 0")
        if self.burn_in >= self.sweeps:
            raise ValidationError("burn_in must be smaller than sweeps")
        if self.measure_every <= 0:
            raise ValidationError("measure_every must be > 0")
        if self.init not in INITS:
            raise ValidationError(f"init={self.init!r}; expected one of {INITS}")
        for ch in self.measurements:
            if ch not in MEASUREMENT_CHANNELS:
                raise ValidationError(
                    f"unknown measurement channel {ch!r}; "
                    f"expected among {MEASUREMENT_CHANNELS}")


def rng_for(seed: int, replica: int) -> np.random.Generator:
    """Counter-based stream, independent per (seed, replica)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replica])))


def initial_config(spec: RunSpec, rng: np.random.Generator) -> SpinConfig:
    if spec.init == "plus":
        return SpinConfig.constant(spec.lattice, 1)
    if spec.init == "minus":
        return SpinConfig.constant(spec.lattice, -1)
    return SpinConfig.random(spec.lattice, rng)


def heat_bath_sweep(cfg: SpinConfig, cache: FieldCache, params: ModelParams,
                    rng: np.random.Generator, beta: float | None = None,
                    uniforms: np.ndarray | None = None,
                    order: np.ndarray | None = None) -> int:
    """Resample every site once in a random order; returns the flip count.

    uniforms/order exist so tests can drive the kernel with explicit streams.
    """
    lat = cfg.lattice
    n = lat.n_sites
    if order is None:
        order = rng.permutation(n).astype(np.int64)
    if uniforms is None:
        uniforms = rng.random(n)
    top, bot = _margin_rows(lat)
    return _kernels.heat_bath_sweep_kernel(
        cfg.spins, cache.hfield, cache.kernel.weights,
        params.epsilon, params.beta if beta is None else beta,
        order, uniforms,
        lat.horizontal_bc == "periodic", lat.vertical_bc == "periodic",
        np.int8(top), np.int8(bot))


@dataclass
class MeasurementRecord:
    sweep: int
    channel: str
    key: str
    value: float


@dataclass
class RunResult:
    spec: RunSpec
    records: list
    final: SpinConfig
    flips: int

    def channel(self, name: str, key: str | None = None) -> np.ndarray:
        vals = [r.value for r in self.records
                if r.channel == name and (key is None or r.key == key)]
        return np.asarray(vals)


def _measure(cfg, params, kernel, scales, m_beta, spec, sweep_no, records):
    from .coarse import compute_fields  # late import; optional channels only

    s = cfg.spins
    for ch in spec.measurements:
        if ch == "magnetization":
            records.append(MeasurementRecord(sweep_no, ch, "", float(s.mean())))
        elif ch == "energy":
            e = hamiltonian(cfg, params, kernel)
            records.append(MeasurementRecord(sweep_no, ch, "", e))
        elif ch == "layer_profile":
            for i, v in enumerate(s.mean(axis=1)):
                records.append(MeasurementRecord(sweep_no, ch, str(i), float(v)))
        elif ch == "block_eta_histogram":
            fields = compute_fields(cfg, scales, m_beta)
            eta_blocks = fields.eta[:, ::scales.ell_minus]
            for v in (-1, 0, 1):
                records.append(MeasurementRecord(
                    sweep_no, ch, str(v), float(np.sum(eta_blocks == v))))
        elif ch == "interval_lengths":
            stats = interval_length_stats(cfg, scales, m_beta)
            for sign, hist in stats.items():
                for length, count in sorted(hist.items()):
                    records.append(MeasurementRecord(
                        sweep_no, ch, f"{sign}:{length}", float(count)))


def run(spec: RunSpec) -> RunResult:
    """Execute a run spec; deterministic in (seed, replica)."""
    from .coarse import CoarseScales
    from .meanfield import solve_mbeta

    params = spec.params
    kernel = build_kernel(params)
    rng = rng_for(spec.seed, spec.replica)
    cfg = initial_config(spec, rng)
    cache = FieldCache(cfg, kernel)

    needs_fields = any(ch in ("block_eta_histogram", "interval_lengths")
                       for ch in spec.measurements)
    scales = m_beta = None
    if needs_fields:
        scales = CoarseScales.from_params(params)
        m_beta = solve_mbeta(params.beta).m
        if scales.zeta >= m_beta:
            raise ValidationError(
                f"zeta={scales.zeta:.4g} >= m_beta={m_beta:.4g}: the plus and "
                "minus windows overlap; lower a or raise beta")

    records: list[MeasurementRecord] = []
    flips = 0
    for sweep_no in range(1, spec.sweeps + 1):
        flips += heat_bath_sweep(cfg, cache, params, rng)
        if sweep_no % RESYNC_EVERY == 0:
            cache.check(cfg)
            cache.recompute(cfg)
        if sweep_no > spec.burn_in and sweep_no % spec.measure_every == 0:
            _measure(cfg, params, kernel, scales, m_beta, spec, sweep_no, records)
    cache.check(cfg)
    return RunResult(spec=spec, records=records, final=cfg, flips=flips)


def interval_length_stats(cfg: SpinConfig, scales, m_beta: float) -> dict:
    """Run-length histograms of the block phase labels, per label value.

    Lengths are in sites (multiples of ell_minus).  On a periodic lattice a
    run wrapping the seam is merged.  Returns {label: {length: count}}.
    """
    from .coarse import compute_fields

    fields = compute_fields(cfg, scales, m_beta)
    lm = scales.ell_minus
    eta_blocks = fields.eta[:, ::lm]
    periodic = cfg.lattice.horizontal_bc == "periodic"
    out = {-1: {}, 0: {}, 1: {}}
    for i in range(eta_blocks.shape[0]):
        row = eta_blocks[i]
        n = len(row)
        if n == 0:
            continue
        if np.all(row == row[0]):
            runs = [(int(row[0]), n)]
        else:
            start = 0
            if periodic:
                # rotate so the row starts at a label change; avoids seam splits
                while row[start] == row[start - 1]:
                    start += 1
                row = np.roll(row, -start)
            runs = []
            val, length = int(row[0]), 1
            for v in row[1:]:
                if v == val:
                    length += 1
                else:
                    runs.append((val, length))
                    val, length = int(v), 1
            runs.append((val, length))
        for val, length in runs:
            hist = out[val]
            sites = length * lm
            hist[sites] = hist.get(sites, 0) + 1
    return out
