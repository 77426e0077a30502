"""Fixed-point (optimality-criteria) tests: update rule, bisection, solver."""

from __future__ import annotations

import re

import numpy as np
import pytest

from vtsopt.doc import DocConfig, bisect_volume, doc_update, solve_doc
from vtsopt.fem import DensityBounds


def _toy_bounds(m: int = 4, volume: float = 0.7) -> DensityBounds:
    return DensityBounds(np.zeros(m), np.ones(m), volume)


# --- update rule ------------------------------------------------------------


def test_update_is_a_fixed_point_when_energies_match_multiplier():
    # z^q == alpha leaves every interior density unchanged
    bounds = _toy_bounds()
    rho = np.array([0.2, 0.4, 0.6, 0.8])
    z = np.full(4, 16.0)
    out = doc_update(rho, z, alpha=4.0, exponent=0.5, bounds=bounds)
    np.testing.assert_array_equal(out, rho)


def test_update_sends_zero_energy_to_the_lower_bound():
    bounds = DensityBounds(np.full(3, 1e-7), np.ones(3), 0.5)
    out = doc_update(np.full(3, 0.3), np.zeros(3), 1.0, 0.5, bounds)
    np.testing.assert_array_equal(out, bounds.lower)


@pytest.mark.parametrize("seed", range(5))
def test_update_is_monotone_nonincreasing_in_the_multiplier(seed):
    rng = np.random.default_rng(seed)
    bounds = _toy_bounds(8)
    rho = rng.uniform(0.05, 0.95, 8)
    z = rng.uniform(0.0, 5.0, 8)
    alphas = np.sort(rng.uniform(0.1, 10.0, 6))
    totals = [
        doc_update(rho, z, float(a), 0.5, bounds).sum() for a in alphas
    ]
    assert np.all(np.diff(totals) <= 1e-15)


def test_update_respects_the_box():
    rng = np.random.default_rng(1)
    bounds = DensityBounds(np.full(16, 0.1), np.full(16, 0.9), 5.0)
    out = doc_update(
        rng.uniform(0.1, 0.9, 16), rng.uniform(0, 100, 16), 2.0, 0.5, bounds
    )
    assert np.all(out >= bounds.lower) and np.all(out <= bounds.upper)


def test_update_requires_positive_multiplier():
    bounds = _toy_bounds()
    with pytest.raises(ValueError, match="volume multiplier must be positive"):
        doc_update(np.full(4, 0.2), np.ones(4), 0.0, 0.5, bounds)
    with pytest.raises(ValueError, match="volume multiplier must be positive"):
        doc_update(np.full(4, 0.2), np.ones(4), -1.0, 0.5, bounds)


def test_damping_shortens_the_step():
    bounds = _toy_bounds()
    rho = np.full(4, 0.2)
    z = np.array([0.5, 1.0, 2.0, 4.0])
    full = doc_update(rho, z, 1.0, 1.0, bounds)
    damped = doc_update(rho, z, 1.0, 0.5, bounds)
    assert np.all(np.abs(damped - rho) <= np.abs(full - rho) + 1e-15)


# --- volume bisection ---------------------------------------------------------


def test_bisection_meets_the_volume_target():
    rng = np.random.default_rng(2)
    bounds = _toy_bounds(6, volume=2.0)
    rho = rng.uniform(0.2, 0.6, 6)
    z = rng.uniform(0.5, 3.0, 6)
    cfg = DocConfig(tol=1e-5)
    alpha, rho_new = bisect_volume(rho, z, bounds, cfg)
    assert alpha > 0.0
    assert abs(rho_new.sum() - bounds.volume) <= 1e-3 * bounds.volume
    # the returned design is the update at the returned multiplier
    np.testing.assert_array_equal(
        rho_new, doc_update(rho, z, alpha, cfg.exponent, bounds)
    )


def test_bisection_rejects_an_invalid_bracket():
    # energies so large that even the highest multiplier saturates the box
    bounds = _toy_bounds(2, volume=0.7)
    with pytest.raises(ValueError, match="rescale the load"):
        bisect_volume(np.full(2, 0.5), np.full(2, 1e12), bounds, DocConfig())


def test_bisection_fails_loudly_when_the_cap_is_too_small():
    bounds = _toy_bounds(2, volume=0.7)
    cfg = DocConfig(bisect_tol=1e-300, bisect_cap=3)
    with pytest.raises(ValueError, match="failed to close the bracket"):
        bisect_volume(np.full(2, 0.35), np.ones(2), bounds, cfg)


def test_config_validation_and_derived_bisect_tolerance():
    with pytest.raises(ValueError, match="damping exponent"):
        DocConfig(exponent=0.0)
    with pytest.raises(ValueError, match="damping exponent"):
        DocConfig(exponent=1.5)
    with pytest.raises(ValueError, match="bisection tolerance"):
        DocConfig(bisect_tol=0.0)
    assert DocConfig(tol=1e-3).bisect_tol_effective == pytest.approx(1e-4)
    assert DocConfig(bisect_tol=1e-6).bisect_tol_effective == 1e-6
    assert DocConfig().tol == 1e-2
    assert DocConfig().exponent == 0.5
    assert DocConfig().rho_lower == 1e-7


# --- solver --------------------------------------------------------------------


def test_solver_small_run_invariants(problems):
    prob = problems("CANT-1-1-1-2")
    cfg = DocConfig(tol=1e-4)
    report = solve_doc(prob, cfg)
    assert report.converged
    assert report.method == "doc"
    assert report.tau_res <= cfg.tol
    assert abs(report.volume - prob.volume) <= 1e-3 * prob.volume
    assert np.all(report.rho >= cfg.rho_lower) and np.all(report.rho <= 1.0)

    match = re.search(
        r"max density step = ([0-9.e+-]+) <= tol = ([0-9.e+-]+)", report.certificate
    )
    assert match is not None
    step, tol = float(match.group(1)), float(match.group(2))
    assert tol == cfg.tol
    assert step <= tol
    assert step == pytest.approx(report.tau_res, rel=1e-5)

    assert report.columns == ("iter", "minres", "step_inf", "gap_scaled", "objective")
    assert report.count_columns == ("minres",)
    assert [row[0] for row in report.rows] == list(range(1, len(report.rows) + 1))
    obj_col = report.columns.index("objective")
    assert report.rows[-1][obj_col] == report.objective
    assert all(row[obj_col] > 0.0 for row in report.rows)
    assert np.isnan(report.dual_objective)


def test_single_element_design_is_pinned_by_the_volume_budget(problems):
    # with one element the bisection fixes the density at the budget, so the
    # very first step is already below any reasonable tolerance
    report = solve_doc(problems("CANT-1-1-1-1"), DocConfig(tol=1e-2))
    assert report.converged
    assert len(report.rows) == 1
    assert abs(report.volume - 0.35) <= 1e-2 * 0.35


def test_oscillation_guard_aborts_unreachable_tolerances(problems):
    prob = problems("CANT-1-1-1-2")
    report = solve_doc(prob, DocConfig(tol=1e-13, stall_window=10, max_iters=5000))
    assert not report.converged
    assert report.certificate is None
    assert "oscillation" in report.notes
    assert len(report.rows) < 5000


def test_iteration_cap_is_reported(problems):
    prob = problems("CANT-1-1-1-2")
    report = solve_doc(prob, DocConfig(tol=1e-9, max_iters=3))
    assert not report.converged
    assert "iteration cap reached" in report.notes
    assert len(report.rows) == 3
