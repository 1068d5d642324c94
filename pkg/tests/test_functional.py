"""Continuum free-energy functional: discretization identities, projected
descent, and the decay/excess reference checks."""
import math

import numpy as np
import pytest

from conftest import M_BETA_2
from layerkac import functional as fn
from layerkac.model import ValidationError

GRID = fn.FunctionalGrid.build(0.04)
DOM20 = fn.Domain(intervals=((0, 20),))


def conditioned_problem(cond=M_BETA_2, windows=None):
    return fn.build_problem(GRID, DOM20, 2.0, conditioning=cond,
                            windows=windows)


# ---------------------------------------------------------------------------
# discretization identities


def test_default_spacing_and_kernel_mass():
    assert GRID.spacing == pytest.approx(0.04 ** -0.5)
    total = GRID.weights[0] + 2.0 * GRID.weights[1:].sum()
    assert total == pytest.approx(1.0, abs=1e-14)
    assert GRID.u(GRID.reach + 3) == 0.0
    assert GRID.u(-2) == GRID.u(2)


def test_interaction_rows_and_boundary_mass_partition_unity():
    pr = conditioned_problem()
    rows = pr.U.sum(axis=1) + pr.s0
    assert np.abs(rows - 1.0).max() < 1e-14
    prp = fn.build_problem(GRID, DOM20, 2.0, periodic=True)
    assert np.abs(prp.U.sum(axis=1) - 1.0).max() < 1e-14
    assert prp.s0.max() == 0.0


def test_flat_consistency_profile_is_critical_with_zero_excess():
    pr = conditioned_problem()
    flat = np.full(20, M_BETA_2)
    assert np.abs(fn.gradient(pr, flat)).max() < 1e-12
    assert abs(fn.excess_energy(pr, flat, M_BETA_2)) < 1e-12


def test_excess_and_free_energy_differ_by_a_constant(rng):
    pr = conditioned_problem()
    for _ in range(5):
        a = rng.uniform(-0.99, 0.99, 20)
        b = rng.uniform(-0.99, 0.99, 20)
        lhs = fn.excess_energy(pr, a, M_BETA_2) - fn.excess_energy(pr, b,
                                                                  M_BETA_2)
        rhs = fn.free_energy(pr, a) - fn.free_energy(pr, b)
        assert abs(lhs - rhs) < 1e-10


def test_excess_is_nonnegative_on_random_profiles(rng):
    pr = conditioned_problem()
    for _ in range(20):
        m = rng.uniform(-1.0, 1.0, 20)
        assert fn.excess_energy(pr, m, M_BETA_2) >= -1e-12


def test_gradient_matches_finite_differences(rng):
    pr = conditioned_problem()
    h = 1e-6
    for _ in range(10):
        m = rng.uniform(-0.9, 0.9, 20)
        grad = fn.gradient(pr, m)
        fd = np.empty(20)
        for j in range(20):
            e = np.zeros(20)
            e[j] = h
            fd[j] = (fn.free_energy(pr, m + e) -
                     fn.free_energy(pr, m - e)) / (2.0 * h)
        assert np.abs(fd - grad).max() / np.abs(grad).max() < 1e-5


def test_periodic_flat_value_is_length_times_density():
    prp = fn.build_problem(GRID, DOM20, 2.0, periodic=True)
    flat = np.full(20, M_BETA_2)
    expected = 20 * GRID.spacing * fn.fbeta(M_BETA_2, 2.0)
    assert fn.free_energy(prp, flat) == pytest.approx(expected, abs=1e-12)


def test_conditioned_flat_excess_has_closed_form():
    pr = conditioned_problem(cond=0.0)
    flat = np.full(20, M_BETA_2)
    closed = GRID.spacing * 0.5 * M_BETA_2 ** 2 * pr.s0.sum()
    assert fn.excess_energy(pr, flat, M_BETA_2) == pytest.approx(closed,
                                                                abs=1e-13)


# ---------------------------------------------------------------------------
# constructor validation


def test_domain_and_problem_validation():
    with pytest.raises(ValidationError, match="overlap"):
        fn.Domain(intervals=((0, 5), (3, 4)))
    with pytest.raises(ValidationError, match="empty"):
        fn.Domain(intervals=((0, 0),))
    with pytest.raises(ValidationError, match="beta"):
        fn.build_problem(GRID, DOM20, 0.0)
    with pytest.raises(ValidationError, match="single interval"):
        fn.build_problem(GRID, fn.Domain(intervals=((0, 4), (6, 4))), 2.0,
                         periodic=True)
    with pytest.raises(ValidationError, match="no conditioning"):
        fn.build_problem(GRID, DOM20, 2.0, conditioning=0.5, periodic=True)


def test_window_set_validation():
    with pytest.raises(ValidationError, match="infeasible"):
        fn.WindowSet(cells_per_window=5, targets=np.array([1]),
                     m_beta=M_BETA_2, zeta=0.96)
    with pytest.raises(ValidationError, match="does not divide"):
        fn.WindowSet.from_eta([1], 12.0, GRID, M_BETA_2, 0.3)
    ws = fn.WindowSet.from_eta([1, -1], 25.0, GRID, M_BETA_2, 0.3)
    assert ws.cells_per_window == 5
    with pytest.raises(ValidationError, match="do not tile"):
        fn.build_problem(GRID, fn.Domain(intervals=((0, 15),)), 2.0,
                         conditioning=M_BETA_2, windows=ws)


def test_projection_lands_in_the_admissible_windows(rng):
    ws = fn.WindowSet.from_eta([1, -1, 0, 1], 25.0, GRID, M_BETA_2, 0.3)
    for _ in range(20):
        out = fn.project(rng.uniform(-2.0, 2.0, 20), ws)
        assert np.abs(out).max() <= 1.0 + 1e-12
        for w, t in enumerate(ws.targets):
            avg = out[5 * w:5 * (w + 1)].mean()
            ok = any(lo - 1e-9 <= avg <= hi + 1e-9
                     for lo, hi in ws.admissible_avg_intervals(int(t)))
            assert ok


# ---------------------------------------------------------------------------
# minimization


def test_periodic_unconstrained_minimizer_is_flat():
    prp = fn.build_problem(GRID, DOM20, 2.0, periodic=True)
    res = fn.minimize(prp, M_BETA_2)
    assert res.converged
    assert res.accepted_monotone
    expected = 20 * GRID.spacing * fn.fbeta(M_BETA_2, 2.0)
    assert res.value == pytest.approx(expected, abs=1e-8)
    assert np.abs(np.abs(res.values) - M_BETA_2).max() < 1e-6


def test_constrained_mixed_minimum_has_positive_excess():
    ws = fn.WindowSet.from_eta([1, 1, -1, -1], 25.0, GRID, M_BETA_2, 0.3)
    cond = fn.step_conditioning(M_BETA_2, -M_BETA_2, split=10)
    pr = fn.build_problem(GRID, DOM20, 2.0, cond, ws)
    res = fn.minimize(pr, M_BETA_2)
    assert res.converged
    assert res.accepted_monotone
    assert res.value == pytest.approx(-49.59909326393519, rel=1e-8)
    excess = fn.excess_energy(pr, res.values, M_BETA_2)
    assert excess == pytest.approx(4.7142972626909785, rel=1e-6)
    assert excess > 0.1
    assert res.error_scale == pytest.approx(128.75503299472803, rel=1e-10)
    for w, t in enumerate(ws.targets):
        avg = res.values[5 * w:5 * (w + 1)].mean()
        assert any(lo - 1e-9 <= avg <= hi + 1e-9
                   for lo, hi in ws.admissible_avg_intervals(int(t)))


def test_default_seeds_are_admissible():
    ws = fn.WindowSet.from_eta([1, -1, 1, -1], 25.0, GRID, M_BETA_2, 0.3)
    pr = fn.build_problem(GRID, DOM20, 2.0, conditioning=0.0, windows=ws)
    seeds = fn.default_seeds(pr, M_BETA_2)
    assert len(seeds) >= 2
    for s in seeds:
        assert s.shape == (20,)
        assert np.abs(s).max() <= 1.0 + 1e-12
        # seeds are raw suggestions; the descent projects them first, and
        # that projection must land every window in its admissible band
        proj = fn.project(s, ws)
        for w, t in enumerate(ws.targets):
            avg = proj[5 * w:5 * (w + 1)].mean()
            assert any(lo - 1e-9 <= avg <= hi + 1e-9
                       for lo, hi in ws.admissible_avg_intervals(int(t)))


def test_minimize_seeded_at_the_flat_point_stays_there():
    pr = conditioned_problem()
    res = fn.minimize(pr, M_BETA_2, seeds=[np.full(20, M_BETA_2)])
    assert res.converged
    assert res.iterations == 0
    assert np.abs(res.values - M_BETA_2).max() < 1e-12


# ---------------------------------------------------------------------------
# decay and excess reference checks


def test_uniform_conditioning_keeps_the_span_flat():
    rep = fn.check_decay(GRID, 2.0, M_BETA_2, 0.3, 25.0, 8, M_BETA_2, M_BETA_2)
    assert rep.mid_deviation == 0.0
    assert rep.edge_deviation == 0.0
    assert rep.omega_fitted == math.inf


def test_step_conditioning_decays_toward_the_middle():
    rep = fn.check_decay(GRID, 2.0, M_BETA_2, 0.3, 25.0, 8, M_BETA_2,
                         -M_BETA_2)
    assert rep.mid_deviation == pytest.approx(6.387691053877376e-08, rel=1e-5)
    assert rep.edge_deviation == pytest.approx(0.9985422910445256, rel=1e-9)
    assert rep.mid_deviation < 1e-6 < rep.edge_deviation
    assert rep.omega_fitted == pytest.approx(5.715204615832299, rel=1e-6)
    assert rep.omega_fitted > 0.0
    # the pull of the flipped conditioning is strongest at the edge; window
    # projection allows small kinks, so only the outermost cells are ordered
    dev = rep.deviations
    assert float(dev.max()) == rep.edge_deviation
    assert np.all(np.diff(dev[-4:]) > 0.0)
    assert dev[-1] / dev[len(dev) // 2] > 1e6


def test_excess_rate_counts_sign_changes_and_zero_windows():
    rep = fn.excess_bound_check(GRID, 2.0, M_BETA_2, 0.3, 25.0,
                                [1, 1, -1, 1, 1], M_BETA_2, M_BETA_2)
    assert rep.n_sign_changes == 2
    assert rep.n_zero_windows == 0
    # ell_minus * zeta^2 * (2n + p) = 25 * 0.09 * 4
    assert rep.rate_unit == pytest.approx(9.0, abs=1e-12)
    assert rep.excess == pytest.approx(9.200084452277345, rel=1e-6)
    assert rep.largest_c == pytest.approx(1.0222316058085938, rel=1e-6)
    assert rep.largest_c > 0.0
    assert rep.excess >= 0.01 * rep.rate_unit


def test_excess_rate_counts_a_zero_window():
    rep = fn.excess_bound_check(GRID, 2.0, M_BETA_2, 0.3, 25.0, [1, 0, 1],
                                M_BETA_2, M_BETA_2)
    assert rep.n_sign_changes == 0
    assert rep.n_zero_windows == 1
    assert rep.rate_unit == pytest.approx(2.25, abs=1e-12)
    assert rep.excess == pytest.approx(1.9147699934405094, rel=1e-6)
    assert rep.largest_c == pytest.approx(0.8510088859735597, rel=1e-6)


def test_unconstrained_pattern_has_no_rate_and_no_excess():
    rep = fn.excess_bound_check(GRID, 2.0, M_BETA_2, 0.3, 25.0, [1, 1, 1],
                                M_BETA_2, M_BETA_2)
    assert rep.n_sign_changes == 0
    assert rep.n_zero_windows == 0
    assert rep.rate_unit == 0.0
    assert abs(rep.excess) < 1e-10
    assert rep.largest_c == math.inf
