"""Multi-scale block fields, phase labels, and defect-region anatomy.

The three block labels are computed from block-averaged magnetization:
eta marks fine blocks near +-m_beta within accuracy zeta, theta requires a
whole coarse block of agreeing eta, and big_theta additionally requires both
lateral coarse neighbors.  A site's phase is determined when big_theta agrees
on its own layer and on the adjacent layers; the rest of the lattice splits
into connected defect components ("contours") whose geometry is extracted
here at coarse-block resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

from .model import Lattice, ModelParams, SpinConfig, ValidationError

PHASE_RULES = ("both-neighbors", "upper-neighbor")
_EIGHT = np.ones((3, 3), dtype=int)


class FrameError(ValidationError):
    """The outermost coarse-block frame is not uniformly in one phase."""


@dataclass(frozen=True)
class CoarseScales:
    ell_minus: int
    ell_plus: int
    zeta: float

    def __post_init__(self):
        if self.ell_minus < 2 or self.ell_plus < self.ell_minus:
            raise ValidationError(
                f"bad scales ell_minus={self.ell_minus}, ell_plus={self.ell_plus}")
        if self.ell_plus % self.ell_minus != 0:
            raise ValidationError("ell_minus must divide ell_plus")
        if not (0 < self.zeta < 1):
            raise ValidationError(f"zeta must lie in (0, 1), got {self.zeta}")

    @classmethod
    def from_params(cls, params: ModelParams) -> "CoarseScales":
        return cls(ell_minus=params.ell_minus, ell_plus=params.ell_plus,
                   zeta=params.zeta)


@dataclass
class CoarseFields:
    """Per-site label arrays; block labels are constant on their blocks."""

    lattice: Lattice
    scales: CoarseScales
    m_beta: float
    sigma_block: np.ndarray   # fine-block average, per site
    eta: np.ndarray           # int8 in {-1, 0, +1}
    theta: np.ndarray
    big_theta: np.ndarray
    phase: np.ndarray
    phase_rule: str = "both-neighbors"

    @property
    def eta_blocks(self) -> np.ndarray:
        return self.eta[:, ::self.scales.ell_minus]

    @property
    def theta_blocks(self) -> np.ndarray:
        return self.theta[:, ::self.scales.ell_plus]

    @property
    def big_theta_blocks(self) -> np.ndarray:
        return self.big_theta[:, ::self.scales.ell_plus]

    @property
    def phase_blocks(self) -> np.ndarray:
        return self.phase[:, ::self.scales.ell_plus]


def _lateral_pad(blocks: np.ndarray, lat: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Left/right neighbor columns for each coarse block, following bc."""
    if lat.horizontal_bc == "periodic":
        return np.roll(blocks, 1, axis=1), np.roll(blocks, -1, axis=1)
    if lat.vertical_bc == "mixed-dobrushin":
        margin = np.array([lat.mixed_margin_column_value(i) for i in range(lat.H)],
                          dtype=blocks.dtype)
    else:
        margin = np.full(lat.H, lat.margin_column("left"), dtype=blocks.dtype)
    left = np.empty_like(blocks)
    right = np.empty_like(blocks)
    left[:, 1:] = blocks[:, :-1]
    left[:, 0] = margin
    right[:, :-1] = blocks[:, 1:]
    right[:, -1] = margin
    return left, right


def _vertical_pad(blocks: np.ndarray, lat: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Rows of big_theta above/below each layer, following bc."""
    if lat.vertical_bc == "periodic":
        return np.roll(blocks, -1, axis=0), np.roll(blocks, 1, axis=0)
    top = np.full(blocks.shape[1], lat.margin_row_value(above=True),
                  dtype=blocks.dtype)
    bot = np.full(blocks.shape[1], lat.margin_row_value(above=False),
                  dtype=blocks.dtype)
    up = np.empty_like(blocks)
    down = np.empty_like(blocks)
    up[:-1] = blocks[1:]
    up[-1] = top
    down[1:] = blocks[:-1]
    down[0] = bot
    return up, down


def compute_fields(cfg: SpinConfig, scales: CoarseScales, m_beta: float,
                   phase_rule: str = "both-neighbors") -> CoarseFields:
    """Block averages and the eta/theta/big_theta/phase label stack.

    Window membership is inclusive: a block average exactly zeta away from
    +-m_beta still gets the label.
    """
    if phase_rule not in PHASE_RULES:
        raise ValidationError(f"phase_rule={phase_rule!r}; expected {PHASE_RULES}")
    lat = cfg.lattice
    lm, lp, zeta = scales.ell_minus, scales.ell_plus, scales.zeta
    if lat.L % lp != 0:
        raise ValidationError(
            f"L={lat.L} is not a multiple of ell_plus={lp}; "
            f"nearest valid sizes are {lat.L // lp * lp} and {(lat.L // lp + 1) * lp}")
    if not (0 < m_beta <= 1):
        raise ValidationError(f"m_beta={m_beta}; need a supercritical beta")
    if zeta >= m_beta:
        raise ValidationError(
            f"zeta={zeta:.4g} >= m_beta={m_beta:.4g}: plus and minus windows "
            "overlap and the labels are ill-defined")

    s = cfg.spins.astype(np.float64)
    avg = s.reshape(lat.H, lat.L // lm, lm).mean(axis=2)
    eta_b = np.zeros_like(avg, dtype=np.int8)
    eta_b[np.abs(avg - m_beta) <= zeta] = 1
    eta_b[np.abs(avg + m_beta) <= zeta] = -1

    per = lp // lm
    grouped = eta_b.reshape(lat.H, lat.L // lp, per)
    theta_b = np.zeros((lat.H, lat.L // lp), dtype=np.int8)
    all_plus = np.all(grouped == 1, axis=2)
    all_minus = np.all(grouped == -1, axis=2)
    theta_b[all_plus] = 1
    theta_b[all_minus] = -1

    left, right = _lateral_pad(theta_b, lat)
    big_b = np.where((theta_b != 0) & (left == theta_b) & (right == theta_b),
                     theta_b, 0).astype(np.int8)

    up, down = _vertical_pad(big_b, lat)
    if phase_rule == "both-neighbors":
        plus = (big_b == 1) & (up == 1) & (down == 1)
        minus = (big_b == -1) & (up == -1) & (down == -1)
    else:
        plus = (big_b == 1) & (up == 1)
        minus = (big_b == -1) & (up == -1)
    phase_b = np.zeros_like(big_b)
    phase_b[plus] = 1
    phase_b[minus] = -1

    rep = lambda blk, width: np.repeat(blk, width, axis=1)
    return CoarseFields(
        lattice=lat, scales=scales, m_beta=m_beta,
        sigma_block=rep(avg, lm),
        eta=rep(eta_b, lm), theta=rep(theta_b, lp),
        big_theta=rep(big_b, lp), phase=rep(phase_b, lp),
        phase_rule=phase_rule)


@dataclass
class Stripe:
    """Double row of opposite-sign coarse blocks inside one defect component.

    orientation "+-" means plus on the upper layer.  k_start..k_end are
    inclusive coarse-block indices; size counts sites along the interval.
    """

    layer_lower: int
    k_start: int
    k_end: int
    orientation: str
    size: int


@dataclass
class Interior:
    region: frozenset
    boundary: frozenset
    sign: int


@dataclass
class Contour:
    """One connected component of the undetermined region, at coarse-block
    resolution, with its exterior/interior anatomy."""

    support: frozenset            # (K, i) coarse blocks
    specification: dict           # (k, i) fine block -> eta value
    sign: int                     # big_theta on the exterior boundary
    exterior_boundary: frozenset
    interiors: list
    anchor: tuple
    scales: CoarseScales

    @property
    def support_size(self) -> int:
        return len(self.support) * self.scales.ell_plus

    @property
    def coverage(self) -> frozenset:
        blocks = set(self.support)
        for it in self.interiors:
            blocks |= it.region
        return frozenset(blocks)


@dataclass
class ContourStats:
    n0: int                    # zero-big_theta coarse blocks in the support
    stripes: list
    stripe_site_total: int
    support_size: int

    def __post_init__(self):
        if self.n0 < 1:
            raise ValidationError(
                "a defect component must contain at least one zero block")


FRAME_THICKNESS = 3


def _frame_mask(H: int, n_cols: int) -> np.ndarray:
    f = FRAME_THICKNESS
    mask = np.zeros((H, n_cols), dtype=bool)
    mask[:f, :] = True
    mask[-f:, :] = True
    mask[:, :f] = True
    mask[:, -f:] = True
    return mask


def extract_contours(fields: CoarseFields) -> list[Contour]:
    """Connected components of the undetermined region with anatomy.

    Requires the 3-block frame to carry a constant nonzero big_theta, so that
    every component is strictly interior and its exterior is the frame side
    of the complement.
    """
    lat = fields.lattice
    lp = fields.scales.ell_plus
    big_b = fields.big_theta_blocks
    phase_b = fields.phase_blocks
    eta_b = fields.eta_blocks
    H, n_cols = phase_b.shape

    frame = _frame_mask(H, n_cols)
    frame_vals = np.unique(big_b[frame])
    if len(frame_vals) != 1 or frame_vals[0] == 0:
        counts = {int(v): int(np.sum(big_b[frame] == v)) for v in frame_vals}
        raise FrameError(
            f"frame is not uniformly determined: big_theta counts {counts}")

    und = phase_b == 0
    labels, n_comp = ndimage.label(und, structure=_EIGHT)
    per = lp // fields.scales.ell_minus
    contours = []
    for cid in range(1, n_comp + 1):
        comp = labels == cid
        support = frozenset((int(k), int(i)) for i, k in zip(*np.nonzero(comp)))

        spec = {}
        for (K, i) in support:
            for k in range(K * per, (K + 1) * per):
                spec[(k, i)] = int(eta_b[i, k])

        comp_labels, n_cc = ndimage.label(~comp, structure=_EIGHT)
        ext_label = comp_labels[0, 0]  # frame corner is always in the complement
        dil = ndimage.binary_dilation(comp, structure=_EIGHT)
        halo = dil & ~comp

        ext_mask = comp_labels == ext_label
        ext_bd = frozenset((int(k), int(i))
                           for i, k in zip(*np.nonzero(halo & ext_mask)))
        sign = _uniform_sign(big_b, ext_bd, "exterior boundary")

        interiors = []
        for il in range(1, n_cc + 1):
            if il == ext_label:
                continue
            reg_mask = comp_labels == il
            region = frozenset((int(k), int(i))
                               for i, k in zip(*np.nonzero(reg_mask)))
            bd = frozenset((int(k), int(i))
                           for i, k in zip(*np.nonzero(halo & reg_mask)))
            isign = _uniform_sign(big_b, bd, "interior boundary")
            interiors.append(Interior(region=region, boundary=bd, sign=isign))
        interiors.sort(key=lambda it: min((i, k) for (k, i) in it.region))

        anchor = min((i, k) for (k, i) in support)
        contours.append(Contour(support=support, specification=spec, sign=sign,
                                exterior_boundary=ext_bd, interiors=interiors,
                                anchor=anchor, scales=fields.scales))
    contours.sort(key=lambda c: c.anchor)
    return contours


def _uniform_sign(big_b: np.ndarray, blocks: frozenset, what: str) -> int:
    vals = {int(big_b[i, k]) for (k, i) in blocks}
    if vals != {1} and vals != {-1}:
        raise ValidationError(f"{what} is not uniformly signed: values {sorted(vals)}")
    return vals.pop()


def extract_stripes(contour: Contour, fields: CoarseFields) -> list[Stripe]:
    """Maximal double-row opposite-sign runs inside the component support."""
    big_b = fields.big_theta_blocks
    H, n_cols = big_b.shape
    lp = fields.scales.ell_plus
    sup = contour.support
    stripes = []
    for i in range(H - 1):
        for orientation, up_sign in (("+-", 1), ("-+", -1)):
            run_start = None
            for K in range(n_cols + 1):
                ok = (K < n_cols
                      and (K, i) in sup and (K, i + 1) in sup
                      and big_b[i + 1, K] == up_sign
                      and big_b[i, K] == -up_sign)
                if ok and run_start is None:
                    run_start = K
                elif not ok and run_start is not None:
                    stripes.append(Stripe(layer_lower=i, k_start=run_start,
                                          k_end=K - 1, orientation=orientation,
                                          size=(K - run_start) * lp))
                    run_start = None
    stripes.sort(key=lambda s: (s.layer_lower, s.k_start))
    return stripes


def contour_stats(contour: Contour, fields: CoarseFields) -> ContourStats:
    big_b = fields.big_theta_blocks
    n0 = sum(1 for (K, i) in contour.support if big_b[i, K] == 0)
    stripes = extract_stripes(contour, fields)
    return ContourStats(n0=n0, stripes=stripes,
                        stripe_site_total=sum(s.size for s in stripes),
                        support_size=contour.support_size)
