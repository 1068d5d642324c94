"""Core model definitions: parameters, interaction kernel, lattice geometry, spin state."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

HORIZONTAL_BCS = ("periodic", "plus", "minus")
VERTICAL_BCS = ("periodic", "plus", "minus", "mixed-dobrushin")


class ValidationError(ValueError):
    """Raised for parameter or geometry combinations the model rejects."""


def cosine_profile(r):
    """Smooth bump profile on (-1, 1): (1 + cos(pi r)) / 2, zero outside."""
    r = np.asarray(r, dtype=float)
    out = np.where(np.abs(r) < 1.0, 0.5 * (1.0 + np.cos(np.pi * r)), 0.0)
    return out if out.ndim else float(out)


def _round_pow2(x: float) -> int:
    # nearest power of two in log space, never below 2
    n = int(round(math.log2(x))) if x > 0 else 1
    return max(2, 2 ** n)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters plus the derived multi-scale quantities.

    beta       inverse temperature
    gamma      inverse interaction range (0 < gamma < 1)
    A          vertical-coupling exponent, epsilon = gamma**A
    alpha      block-scale exponent: ell_pm ~ gamma**-(1 -+ alpha)
    a          accuracy exponent: zeta = gamma**a
    epsilon_override  optional direct vertical coupling (0 allowed, decoupled layers)
    """

    beta: float
    gamma: float
    A: float = 2.0
    alpha: float = 0.1
    a: float = 0.01
    epsilon_override: float | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if not (0 < self.gamma < 1):
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.A < 2:
            raise ValidationError(f"A must be >= 2, got {self.A}")
        if not (0 < self.a < self.alpha < 1):
            raise ValidationError(
                f"need 0 < a < alpha < 1, got a={self.a}, alpha={self.alpha}")
        if self.kac_range < 2:
            raise ValidationError(
                f"gamma={self.gamma} gives interaction range < 2 sites; "
                "the kernel would be empty")
        if self.epsilon_override is not None and self.epsilon_override < 0:
            raise ValidationError("epsilon_override must be >= 0")
        # scale rounding must not wreck the exponent bookkeeping:
        # ideally ell_plus == ell_minus * gamma**(-2 alpha)
        ratio = self.ell_plus / (self.ell_minus * self.gamma ** (-2 * self.alpha))
        if not (0.25 <= ratio <= 4.0):
            raise ValidationError(
                f"power-of-two rounding distorts ell_plus/ell_minus by {ratio:.3g} "
                "(allowed within a factor 4); adjust gamma or alpha")
        if self.ell_minus > self.ell_plus:
            raise ValidationError("ell_minus exceeds ell_plus after rounding")

    @property
    def kac_range(self) -> int:
        return math.ceil(1.0 / self.gamma)

    @property
    def epsilon(self) -> float:
        if self.epsilon_override is not None:
            return self.epsilon_override
        return self.gamma ** self.A

    @property
    def zeta(self) -> float:
        return self.gamma ** self.a

    @property
    def ell_minus(self) -> int:
        return _round_pow2(self.gamma ** -(1.0 - self.alpha))

    @property
    def ell_plus(self) -> int:
        return _round_pow2(self.gamma ** -(1.0 + self.alpha))

    def as_dict(self) -> dict:
        return {
            "beta": self.beta, "gamma": self.gamma, "A": self.A,
            "alpha": self.alpha, "a": self.a,
            "epsilon_override": self.epsilon_override,
            "kac_range": self.kac_range, "epsilon": self.epsilon,
            "zeta": self.zeta, "ell_minus": self.ell_minus,
            "ell_plus": self.ell_plus,
        }

    def digest(self) -> str:
        s = "|".join(f"{k}={v!r}" for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(s.encode()).hexdigest()


@dataclass(frozen=True)
class KacKernel:
    """Discrete in-layer coupling weights w(d) = profile(gamma*d), renormalized.

    weights[d] for d = 0..kac_range-1 holds the one-sided weights; w(0) = 0
    (no self-coupling) and the full signed family sums to exactly 1.
    """

    gamma: float
    weights: np.ndarray

    @classmethod
    def build(cls, gamma: float, profile: Callable = cosine_profile) -> "KacKernel":
        R = math.ceil(1.0 / gamma)
        if R < 2:
            raise ValidationError(f"gamma={gamma} leaves no interacting neighbors")
        d = np.arange(R, dtype=float)
        w = np.asarray(profile(gamma * d), dtype=float)
        w[0] = 0.0
        if np.any(w < 0):
            raise ValidationError("kernel profile produced negative weights")
        total = 2.0 * w.sum()
        if total <= 0:
            raise ValidationError("kernel weights sum to zero; gamma too large")
        w = w / total
        w.setflags(write=False)
        return cls(gamma=gamma, weights=w)

    @property
    def kac_range(self) -> int:
        return len(self.weights)

    def w(self, d: int) -> float:
        d = abs(int(d))
        if d >= len(self.weights):
            return 0.0
        return float(self.weights[d])


def build_kernel(params: ModelParams, profile: Callable = cosine_profile) -> KacKernel:
    return KacKernel.build(params.gamma, profile)


@dataclass(frozen=True)
class Lattice:
    """L sites per layer (x direction), H layers (i direction).

    Non-periodic boundaries are realized by frozen margins: kac_range columns
    on each side horizontally, one row above and below vertically (the
    interlayer coupling is nearest-neighbor, so one frozen row closes every
    interior neighborhood).  mixed-dobrushin freezes +1 above the mid-height
    line and -1 below it.
    """

    L: int
    H: int
    horizontal_bc: str = "periodic"
    vertical_bc: str = "periodic"

    def __post_init__(self):
        if self.L < 2 or self.H < 1:
            raise ValidationError(f"lattice {self.L}x{self.H} too small")
        if self.horizontal_bc not in HORIZONTAL_BCS:
            raise ValidationError(
                f"horizontal_bc={self.horizontal_bc!r}; expected one of {HORIZONTAL_BCS}")
        if self.vertical_bc not in VERTICAL_BCS:
            raise ValidationError(
                f"vertical_bc={self.vertical_bc!r}; expected one of {VERTICAL_BCS}")
        if self.vertical_bc == "periodic" and self.H < 2:
            raise ValidationError("vertical periodic closure needs H >= 2")

    @property
    def n_sites(self) -> int:
        return self.L * self.H

    def margin_column(self, side: str) -> int:
        """Frozen value of the left/right margin columns (non-periodic only)."""
        return {"plus": 1, "minus": -1}[self.horizontal_bc]

    def margin_row_value(self, above: bool) -> int:
        if self.vertical_bc == "mixed-dobrushin":
            return 1 if above else -1
        return {"plus": 1, "minus": -1}[self.vertical_bc]

    def mixed_margin_column_value(self, layer: int) -> int:
        # used when horizontal margins meet a mixed-dobrushin vertical state
        return 1 if layer >= self.H // 2 else -1


class SpinConfig:
    """Spin state on a lattice; values are int8 plus/minus one.

    spins[i, x] indexes layer i, site x.  Margin decoration for non-periodic
    boundaries lives in the lattice, not in the array.
    """

    def __init__(self, lattice: Lattice, spins: np.ndarray):
        spins = np.asarray(spins, dtype=np.int8)
        if spins.shape != (lattice.H, lattice.L):
            raise ValidationError(
                f"spin array shape {spins.shape} does not match "
                f"lattice ({lattice.H}, {lattice.L})")
        if not np.all(np.abs(spins) == 1):
            raise ValidationError("spins must be +1 or -1")
        self.lattice = lattice
        self.spins = spins

    @classmethod
    def constant(cls, lattice: Lattice, value: int) -> "SpinConfig":
        return cls(lattice, np.full((lattice.H, lattice.L), value, dtype=np.int8))

    @classmethod
    def random(cls, lattice: Lattice, rng: np.random.Generator) -> "SpinConfig":
        s = rng.integers(0, 2, size=(lattice.H, lattice.L)).astype(np.int8) * 2 - 1
        return cls(lattice, s)

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.lattice, self.spins.copy())

    def flipped(self) -> "SpinConfig":
        """Global spin flip; swaps plus/minus boundary decorations."""
        lat = self.lattice
        if lat.vertical_bc == "mixed-dobrushin":
            raise ValidationError(
                "global flip of a mixed-dobrushin state is not representable "
                "in the boundary vocabulary")
        swap = {"periodic": "periodic", "plus": "minus", "minus": "plus"}
        flipped_lat = Lattice(lat.L, lat.H, swap[lat.horizontal_bc],
                              swap[lat.vertical_bc])
        return SpinConfig(flipped_lat, (-self.spins).astype(np.int8))

    def site(self, x: int, i: int) -> int:
        """Spin value at (x, i), following boundary conditions outside the box.

        Out-of-range lookups wrap for periodic directions and return the
        frozen margin value otherwise.
        """
        lat = self.lattice
        if 0 <= i < lat.H:
            pass
        elif lat.vertical_bc == "periodic":
            i %= lat.H
        else:
            return lat.margin_row_value(above=i >= lat.H)
        if 0 <= x < lat.L:
            return int(self.spins[i, x])
        if lat.horizontal_bc == "periodic":
            return int(self.spins[i, x % lat.L])
        if lat.vertical_bc == "mixed-dobrushin":
            return lat.mixed_margin_column_value(i)
        return lat.margin_column("left" if x < 0 else "right")


def local_field(cfg: SpinConfig, kernel: KacKernel, x: int, i: int) -> float:
    """Horizontal Kac field sum_{y != x} w(x - y) sigma(y, i)."""
    h = 0.0
    for d in range(1, kernel.kac_range):
        wd = kernel.weights[d]
        h += wd * (cfg.site(x + d, i) + cfg.site(x - d, i))
    return h


def vertical_field(cfg: SpinConfig, params: ModelParams, x: int, i: int) -> float:
    """Interlayer contribution epsilon * (sigma(x, i+1) + sigma(x, i-1))."""
    return params.epsilon * (cfg.site(x, i + 1) + cfg.site(x, i - 1))


def conditional_gibbs(total_field: float, beta: float) -> float:
    """Heat-bath probability of +1 given the total local field."""
    return 0.5 * (1.0 + math.tanh(beta * total_field))


def hamiltonian(cfg: SpinConfig, params: ModelParams, kernel: KacKernel,
                include_vertical: bool = True) -> float:
    """Energy of the configuration given its boundary decoration.

    Horizontal part: -1/2 sum over layers and ordered pairs within reach.
    Vertical part (optional): -epsilon * sigma(x,i) sigma(x,i+1) over vertical
    bonds, wrapping when the vertical direction is periodic.  Bonds from
    interior to frozen margin count once; margin-margin terms are excluded.
    """
    lat = cfg.lattice
    s = cfg.spins.astype(np.float64)
    R = kernel.kac_range
    e_h = 0.0
    for d in range(1, R):
        wd = kernel.weights[d]
        if wd == 0.0:
            continue
        if lat.horizontal_bc == "periodic":
            e_h += wd * np.sum(s * np.roll(s, -d, axis=1))
        else:
            # interior-interior pairs at offset d, counted once per ordered bond
            e_h += wd * np.sum(s[:, :-d] * s[:, d:])
            # interior-margin bonds: each interior site within d of an edge sees
            # the frozen margin column value on that side
            for i in range(lat.H):
                if lat.vertical_bc == "mixed-dobrushin":
                    mv = lat.mixed_margin_column_value(i)
                    left = right = mv
                else:
                    left = right = lat.margin_column("left")
                edge = s[i, :d].sum() * left + s[i, -d:].sum() * right
                e_h += wd * edge
    # periodic horizontal already counts every ordered bond once per direction;
    # the -1/2 double-sum convention makes both cases a plain -sum over bonds
    energy = -e_h

    if include_vertical and params.epsilon != 0.0:
        eps = params.epsilon
        e_v = 0.0
        if lat.H > 1:
            e_v += np.sum(s[:-1, :] * s[1:, :])
        if lat.vertical_bc == "periodic":
            e_v += np.sum(s[-1, :] * s[0, :])
        else:
            top = lat.margin_row_value(above=True)
            bot = lat.margin_row_value(above=False)
            e_v += s[-1, :].sum() * top + s[0, :].sum() * bot
        energy -= eps * e_v
    return float(energy)


def hamiltonian_bruteforce(cfg: SpinConfig, params: ModelParams,
                           kernel: KacKernel,
                           include_vertical: bool = True) -> float:
    """Direct per-site pair sum; slow reference implementation.

    Interior-interior ordered visits carry the 1/2 of the double-sum
    convention; bonds into the frozen margin are visited once and count full.
    """
    lat = cfg.lattice
    e = 0.0
    for i in range(lat.H):
        for x in range(lat.L):
            sx = cfg.site(x, i)
            for sgn in (1, -1):
                for d in range(1, kernel.kac_range):
                    xn = x + sgn * d
                    wd = kernel.weights[d]
                    interior = (0 <= xn < lat.L) or lat.horizontal_bc == "periodic"
                    weight = 0.5 if interior else 1.0
                    e += -weight * wd * sx * cfg.site(xn, i)
    if include_vertical and params.epsilon != 0.0:
        for i in range(lat.H):
            for x in range(lat.L):
                sx = cfg.site(x, i)
                up = i + 1
                if up < lat.H or lat.vertical_bc == "periodic":
                    e += -params.epsilon * sx * cfg.site(x, up)
                else:
                    e += -params.epsilon * sx * lat.margin_row_value(True)
                if i == 0 and lat.vertical_bc != "periodic":
                    e += -params.epsilon * sx * lat.margin_row_value(False)
    return e
