import math

import numpy as np
import pytest

from layerkac.model import (KacKernel, Lattice, ModelParams, SpinConfig,
                            ValidationError, build_kernel, conditional_gibbs,
                            cosine_profile, hamiltonian,
                            hamiltonian_bruteforce, local_field,
                            vertical_field)

from conftest import BC_COMBOS


# ---------------------------------------------------------------------------
# parameter validation


@pytest.mark.parametrize("kwargs", [
    {"beta": 0.0, "gamma": 0.3},
    {"beta": -1.0, "gamma": 0.3},
    {"beta": 2.0, "gamma": 0.0},
    {"beta": 2.0, "gamma": 1.0},
    {"beta": 2.0, "gamma": 1.5},
    {"beta": 2.0, "gamma": 0.3, "A": 1.5},
    {"beta": 2.0, "gamma": 0.3, "a": 0.2, "alpha": 0.1},
    {"beta": 2.0, "gamma": 0.3, "a": 0.0},
    {"beta": 2.0, "gamma": 0.3, "alpha": 1.0, "a": 0.5},
    {"beta": 2.0, "gamma": 0.3, "epsilon_override": -0.1},
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValidationError):
        ModelParams(**kwargs)


def test_derived_scales():
    p = ModelParams(beta=2.0, gamma=0.3)
    assert p.kac_range == 4
    assert p.epsilon == pytest.approx(0.09, abs=1e-15)
    assert p.zeta == pytest.approx(0.3 ** 0.01, rel=1e-15)
    # power-of-two block lengths with the coarse scale at least the fine one
    assert p.ell_minus & (p.ell_minus - 1) == 0
    assert p.ell_plus & (p.ell_plus - 1) == 0
    assert p.ell_minus <= p.ell_plus

    assert ModelParams(beta=2.0, gamma=0.15).kac_range == 7
    assert ModelParams(beta=2.0, gamma=0.25).kac_range == 4


def test_epsilon_override():
    p = ModelParams(beta=2.0, gamma=0.3, epsilon_override=0.0)
    assert p.epsilon == 0.0
    p = ModelParams(beta=2.0, gamma=0.3, epsilon_override=0.5)
    assert p.epsilon == 0.5


def test_digest_is_stable_and_injective_on_params():
    a = ModelParams(beta=2.0, gamma=0.3)
    b = ModelParams(beta=2.0, gamma=0.3)
    c = ModelParams(beta=2.0, gamma=0.3, epsilon_override=0.09)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 64


# ---------------------------------------------------------------------------
# kernel


def test_kernel_normalization_and_shape():
    for gamma in (0.5, 0.3, 0.15, 0.05):
        k = KacKernel.build(gamma)
        assert k.kac_range == math.ceil(1.0 / gamma)
        assert k.w(0) == 0.0
        assert np.all(k.weights >= 0.0)
        # the signed family over all d != 0 carries total weight one
        assert 2.0 * k.weights.sum() == pytest.approx(1.0, abs=1e-15)
        assert k.w(3) == k.w(-3)
        assert k.w(k.kac_range) == 0.0
        assert k.w(10 * k.kac_range) == 0.0


def test_kernel_profile_is_swappable():
    def triangle(r):
        return np.clip(1.0 - np.abs(r), 0.0, None)

    k = KacKernel.build(0.25, profile=triangle)
    assert 2.0 * k.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert k.w(0) == 0.0
    # triangle decays linearly: ratios follow (1 - gamma d)
    assert k.w(2) / k.w(1) == pytest.approx(0.5 / 0.75, rel=1e-12)


def test_cosine_profile_values():
    assert cosine_profile(0.0) == pytest.approx(1.0)
    assert cosine_profile(0.5) == pytest.approx(0.5)
    assert float(cosine_profile(1.0)) == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------------------
# lattice and spin configs


def test_lattice_validation():
    with pytest.raises(ValidationError):
        Lattice(1, 4)
    with pytest.raises(ValidationError):
        Lattice(8, 1, "periodic", "periodic")
    with pytest.raises(ValidationError):
        Lattice(8, 4, "open", "periodic")
    with pytest.raises(ValidationError):
        Lattice(8, 4, "periodic", "free")


def test_spinconfig_shape_and_values_checked():
    lat = Lattice(4, 2)
    with pytest.raises(ValidationError):
        SpinConfig(lat, np.ones((2, 5), dtype=np.int8))
    with pytest.raises(ValidationError):
        SpinConfig(lat, np.zeros((2, 4), dtype=np.int8))


def test_site_lookup_periodic_wraps():
    lat = Lattice(4, 3, "periodic", "periodic")
    spins = np.arange(12).reshape(3, 4) % 2 * 2 - 1
    cfg = SpinConfig(lat, spins.astype(np.int8))
    assert cfg.site(-1, 0) == cfg.site(3, 0)
    assert cfg.site(4, 2) == cfg.site(0, 2)
    assert cfg.site(0, -1) == cfg.site(0, 2)
    assert cfg.site(0, 3) == cfg.site(0, 0)


def test_site_lookup_frozen_margins():
    lat = Lattice(4, 3, "plus", "minus")
    cfg = SpinConfig.constant(lat, -1)
    assert cfg.site(-1, 1) == 1          # left margin
    assert cfg.site(7, 1) == 1           # right margin
    assert cfg.site(0, -1) == -1         # below
    assert cfg.site(0, 3) == -1          # above


def test_site_lookup_mixed_dobrushin():
    lat = Lattice(4, 4, "plus", "mixed-dobrushin")
    cfg = SpinConfig.constant(lat, 1)
    assert cfg.site(0, -1) == -1
    assert cfg.site(0, 4) == 1
    # horizontal margins follow the layer's side of the interface
    assert cfg.site(-1, 0) == -1
    assert cfg.site(-1, 3) == 1


def test_flipped_swaps_boundaries():
    lat = Lattice(4, 2, "plus", "minus")
    cfg = SpinConfig.random(lat, np.random.default_rng(0))
    flipped = cfg.flipped()
    assert flipped.lattice.horizontal_bc == "minus"
    assert flipped.lattice.vertical_bc == "plus"
    assert np.array_equal(flipped.spins, -cfg.spins)
    mixed = SpinConfig.constant(Lattice(4, 2, "plus", "mixed-dobrushin"), 1)
    with pytest.raises(ValidationError):
        mixed.flipped()


# ---------------------------------------------------------------------------
# fields and energies


def test_conditional_gibbs_values():
    assert conditional_gibbs(0.0, 2.0) == 0.5
    assert conditional_gibbs(1.0, 2.0) == pytest.approx(0.9820137900379085,
                                                        abs=1e-15)
    for h in (-1.3, -0.2, 0.7, 2.1):
        assert conditional_gibbs(h, 1.7) + conditional_gibbs(-h, 1.7) == \
            pytest.approx(1.0, abs=1e-15)


def test_conditional_gibbs_extreme_fields_stable():
    assert conditional_gibbs(1e6, 2.0) == pytest.approx(1.0)
    assert conditional_gibbs(-1e6, 2.0) == pytest.approx(0.0, abs=1e-300)


@pytest.mark.parametrize("hbc,vbc", BC_COMBOS)
def test_hamiltonian_matches_bruteforce(hbc, vbc, rng):
    p = ModelParams(beta=2.0, gamma=0.4)
    kernel = build_kernel(p)
    lat = Lattice(7, 3, hbc, vbc)
    for _ in range(3):
        cfg = SpinConfig.random(lat, rng)
        fast = hamiltonian(cfg, p, kernel)
        slow = hamiltonian_bruteforce(cfg, p, kernel)
        assert fast == pytest.approx(slow, abs=1e-10)


@pytest.mark.parametrize("hbc,vbc", BC_COMBOS)
def test_single_flip_energy_identity(hbc, vbc, rng):
    """Energy change under one flip equals twice spin times its total field."""
    p = ModelParams(beta=2.0, gamma=0.4)
    kernel = build_kernel(p)
    lat = Lattice(7, 3, hbc, vbc)
    cfg = SpinConfig.random(lat, rng)
    e0 = hamiltonian(cfg, p, kernel)
    for _ in range(6):
        x = int(rng.integers(lat.L))
        i = int(rng.integers(lat.H))
        h = local_field(cfg, kernel, x, i) + vertical_field(cfg, p, x, i)
        other = cfg.copy()
        other.spins[i, x] *= -1
        e1 = hamiltonian(other, p, kernel)
        assert e1 - e0 == pytest.approx(2.0 * cfg.spins[i, x] * h, abs=1e-12)


def test_hamiltonian_flip_symmetry_periodic(rng):
    p = ModelParams(beta=2.0, gamma=0.4)
    kernel = build_kernel(p)
    lat = Lattice(8, 4, "periodic", "periodic")
    cfg = SpinConfig.random(lat, rng)
    neg = SpinConfig(lat, (-cfg.spins).astype(np.int8))
    assert hamiltonian(cfg, p, kernel) == pytest.approx(
        hamiltonian(neg, p, kernel), abs=1e-12)


def test_hamiltonian_flip_covariance_with_boundary(rng):
    p = ModelParams(beta=2.0, gamma=0.4)
    kernel = build_kernel(p)
    lat = Lattice(8, 3, "plus", "plus")
    cfg = SpinConfig.random(lat, rng)
    assert hamiltonian(cfg, p, kernel) == pytest.approx(
        hamiltonian(cfg.flipped(), p, kernel), abs=1e-12)


def test_vertical_coupling_scale():
    # epsilon multiplies each vertical bond; doubling it doubles the vertical
    # part of the energy
    lat = Lattice(6, 3, "periodic", "periodic")
    cfg = SpinConfig.constant(lat, 1)
    p1 = ModelParams(beta=2.0, gamma=0.4, epsilon_override=0.1)
    p2 = ModelParams(beta=2.0, gamma=0.4, epsilon_override=0.2)
    k = build_kernel(p1)
    e_h = hamiltonian(cfg, p1, k, include_vertical=False)
    ev1 = hamiltonian(cfg, p1, k) - e_h
    ev2 = hamiltonian(cfg, p2, k) - e_h
    assert ev2 == pytest.approx(2.0 * ev1, rel=1e-12)


def test_decoupled_layers_have_no_vertical_energy(rng):
    lat = Lattice(6, 3, "periodic", "periodic")
    cfg = SpinConfig.random(lat, rng)
    p = ModelParams(beta=2.0, gamma=0.4, epsilon_override=0.0)
    k = build_kernel(p)
    assert hamiltonian(cfg, p, k) == pytest.approx(
        hamiltonian(cfg, p, k, include_vertical=False), abs=1e-15)
