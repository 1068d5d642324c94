import numpy as np
import pytest

from layerkac.mc import (CacheDesyncError, FieldCache, RunSpec,
                         heat_bath_sweep, initial_config,
                         interval_length_stats, rng_for, run)
from layerkac.coarse import CoarseScales
from layerkac.model import (Lattice, ModelParams, SpinConfig, ValidationError,
                            build_kernel, hamiltonian)

from conftest import M_BETA_2


def _spec(**over):
    base = dict(params=ModelParams(beta=2.0, gamma=0.3),
                lattice=Lattice(16, 2), sweeps=20, burn_in=4, seed=11,
                measure_every=2)
    base.update(over)
    return RunSpec(**base)


def test_runspec_validation():
    with pytest.raises(ValidationError):
        _spec(sweeps=0)
    with pytest.raises(ValidationError):
        _spec(burn_in=20)
    with pytest.raises(ValidationError):
        _spec(measure_every=0)
    with pytest.raises(ValidationError):
        _spec(init="hot")
    with pytest.raises(ValidationError):
        _spec(measurements=("susceptibility",))


def test_rng_streams_reproducible_and_independent():
    a = rng_for(5, 0).random(4)
    b = rng_for(5, 0).random(4)
    c = rng_for(5, 1).random(4)
    d = rng_for(6, 0).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_initial_config_modes():
    spec = _spec(init="plus")
    assert np.all(initial_config(spec, rng_for(0, 0)).spins == 1)
    spec = _spec(init="minus")
    assert np.all(initial_config(spec, rng_for(0, 0)).spins == -1)
    spec = _spec(init="random")
    s = initial_config(spec, rng_for(0, 0)).spins
    assert set(np.unique(s)) <= {-1, 1}
    assert 0 < np.sum(s == 1) < s.size


def test_zero_beta_is_a_fair_coin():
    """With the inverse temperature forced to zero every site resamples
    uniformly, independent of its field."""
    p = ModelParams(beta=2.0, gamma=0.3)
    kernel = build_kernel(p)
    lat = Lattice(32, 4, "periodic", "periodic")
    cfg = SpinConfig.constant(lat, 1)
    cache = FieldCache(cfg, kernel)
    rng = rng_for(3, 0)
    n_up = 0
    n_sweeps = 200
    for _ in range(n_sweeps):
        heat_bath_sweep(cfg, cache, p, rng, beta=0.0)
        n_up += int(np.sum(cfg.spins == 1))
    total = n_sweeps * lat.n_sites
    frac = n_up / total
    # 4 sigma band for a fair coin over `total` correlated-free draws
    assert abs(frac - 0.5) < 4.0 * 0.5 / np.sqrt(total)


def test_cache_tracks_fields_through_sweeps():
    p = ModelParams(beta=1.2, gamma=0.3)
    kernel = build_kernel(p)
    for hbc in ("periodic", "plus"):
        lat = Lattice(24, 3, hbc, "periodic")
        cfg = SpinConfig.random(lat, rng_for(1, 0))
        cache = FieldCache(cfg, kernel)
        rng = rng_for(1, 1)
        for _ in range(50):
            heat_bath_sweep(cfg, cache, p, rng)
        assert cache.max_deviation(cfg) < 1e-9


def test_cache_desync_detected():
    p = ModelParams(beta=2.0, gamma=0.3)
    kernel = build_kernel(p)
    cfg = SpinConfig.random(Lattice(16, 2), rng_for(0, 0))
    cache = FieldCache(cfg, kernel)
    cache.hfield[0, 0] += 1e-6
    with pytest.raises(CacheDesyncError):
        cache.check(cfg)


def test_run_is_deterministic_per_seed_and_replica():
    r1 = run(_spec())
    r2 = run(_spec())
    r3 = run(_spec(replica=1))
    assert [(m.sweep, m.channel, m.key, m.value) for m in r1.records] == \
           [(m.sweep, m.channel, m.key, m.value) for m in r2.records]
    assert np.array_equal(r1.final.spins, r2.final.spins)
    assert not np.array_equal(r1.final.spins, r3.final.spins)


def test_measurement_schedule():
    res = run(_spec(sweeps=21, burn_in=5, measure_every=4))
    sweeps = [m.sweep for m in res.records]
    assert sweeps == [8, 12, 16, 20]


def test_measurement_channels_present():
    # beta=3 keeps the label half-width below the fixed point so block labels
    # are well defined with derived scales
    spec = _spec(params=ModelParams(beta=3.0, gamma=0.3),
                 lattice=Lattice(16, 2), sweeps=6, burn_in=0, measure_every=6,
                 measurements=("magnetization", "energy", "layer_profile",
                               "block_eta_histogram", "interval_lengths"))
    res = run(spec)
    channels = {m.channel for m in res.records}
    assert channels >= {"magnetization", "energy", "layer_profile",
                        "block_eta_histogram"}
    prof = res.channel("layer_profile", key="0")
    assert prof.size == 1
    counts = [res.channel("block_eta_histogram", key=k)[0]
              for k in ("-1", "0", "1")]
    # every fine block carries exactly one label
    scales = CoarseScales.from_params(spec.params)
    assert sum(counts) == spec.lattice.L // scales.ell_minus * spec.lattice.H


def test_energy_channel_matches_hamiltonian():
    spec = _spec(sweeps=5, burn_in=4, measure_every=5,
                 measurements=("magnetization", "energy"))
    res = run(spec)
    e = res.channel("energy")[0]
    assert e == pytest.approx(
        hamiltonian(res.final, spec.params, build_kernel(spec.params)),
        rel=1e-12)


def test_mirrored_driving_streams_give_mirrored_chains():
    """Driving the update with u and 1-u from flipped starts yields exactly
    opposite trajectories; the update kernel commutes with the global flip."""
    p = ModelParams(beta=1.7, gamma=0.3)
    kernel = build_kernel(p)
    lat = Lattice(20, 4, "periodic", "periodic")
    rng = rng_for(9, 0)
    cfg_a = SpinConfig.random(lat, rng)
    cfg_b = SpinConfig(lat, (-cfg_a.spins).astype(np.int8))
    cache_a = FieldCache(cfg_a, kernel)
    cache_b = FieldCache(cfg_b, kernel)
    for _ in range(25):
        order = rng.permutation(lat.n_sites).astype(np.int64)
        u = rng.random(lat.n_sites)
        heat_bath_sweep(cfg_a, cache_a, p, rng, order=order, uniforms=u)
        heat_bath_sweep(cfg_b, cache_b, p, rng, order=order, uniforms=1.0 - u)
        assert np.array_equal(cfg_a.spins, -cfg_b.spins)


def test_stationary_distribution_matches_boltzmann():
    """Empirical state frequencies on a six-spin torus against the exact
    Gibbs weights; total variation below 0.02."""
    p = ModelParams(beta=1.2, gamma=0.5)
    kernel = build_kernel(p)
    lat = Lattice(3, 2, "periodic", "periodic")
    # exact weights over all 64 states
    n = lat.n_sites
    energies = np.empty(2 ** n)
    for code in range(2 ** n):
        bits = (code >> np.arange(n)) & 1
        spins = (2 * bits - 1).astype(np.int8).reshape(lat.H, lat.L)
        energies[code] = hamiltonian(SpinConfig(lat, spins), p, kernel)
    w = np.exp(-p.beta * (energies - energies.min()))
    exact = w / w.sum()

    cfg = SpinConfig.random(lat, rng_for(17, 0))
    cache = FieldCache(cfg, kernel)
    rng = rng_for(17, 1)
    counts = np.zeros(2 ** n)
    burn, samples = 500, 60_000
    for sweep in range(burn + samples):
        heat_bath_sweep(cfg, cache, p, rng)
        if sweep >= burn:
            bits = (cfg.spins.reshape(-1) > 0).astype(np.int64)
            counts[int(np.dot(bits, 1 << np.arange(n)))] += 1
    empirical = counts / counts.sum()
    tv = 0.5 * np.abs(empirical - exact).sum()
    assert tv < 0.02


SHRUNK = CoarseScales(ell_minus=4, ell_plus=8, zeta=0.3)


def test_interval_lengths_all_plus():
    lat = Lattice(32, 3, "periodic", "periodic")
    cfg = SpinConfig.constant(lat, 1)
    stats = interval_length_stats(cfg, SHRUNK, M_BETA_2)
    assert stats[1] == {32: 3}
    assert stats[0] == {} and stats[-1] == {}


def test_interval_lengths_mass_accounting():
    lat = Lattice(32, 2, "periodic", "periodic")
    cfg = SpinConfig.random(lat, rng_for(23, 0))
    stats = interval_length_stats(cfg, SHRUNK, M_BETA_2)
    total_sites = sum(length * count for hist in stats.values()
                      for length, count in hist.items())
    assert total_sites == lat.n_sites


def test_interval_lengths_wrap_seam():
    lm = SHRUNK.ell_minus
    lat = Lattice(8 * lm, 1, "periodic", "plus")
    spins = np.ones((1, 8 * lm), dtype=np.int8)
    spins[0, 2 * lm:5 * lm] = -1      # minus run in the middle
    cfg = SpinConfig(lat, spins)
    stats = interval_length_stats(cfg, SHRUNK, M_BETA_2)
    # plus run wraps around the seam: 5 blocks as one run, not two pieces
    assert stats[1] == {5 * lm: 1}
    assert stats[-1] == {3 * lm: 1}


def test_longer_range_grows_phase_intervals():
    """With decoupled layers, shrinking the inverse range grows the typical
    same-label run length (qualitative trend at fixed seed)."""
    meds = {}
    for gamma in (0.5, 0.125):
        p = ModelParams(beta=2.0, gamma=gamma, epsilon_override=0.0)
        L = 32 * SHRUNK.ell_plus
        spec = RunSpec(params=p, lattice=Lattice(L, 1, "periodic", "plus"),
                       sweeps=60, burn_in=59, seed=2, measure_every=60)
        res = run(spec)
        stats = interval_length_stats(res.final, SHRUNK, M_BETA_2)
        lengths = [ln for sign in (-1, 1)
                   for ln, cnt in stats[sign].items() for _ in range(cnt)]
        meds[gamma] = np.median(lengths) if lengths else 0.0
    assert meds[0.125] > meds[0.5]
