"""Tests for objective evaluation, duality gap, and the certification oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vtsopt.fem import DensityBounds, ElementOps
from vtsopt.model import (
    best_alpha_gap,
    compliance,
    dense_element_matrices,
    dual_from_slack,
    dual_objective,
    duality_gap,
    primal_oracle,
    project_box_simplex,
    strong_duality_report,
)


def _bounds(m, volume, lower=0.0):
    return DensityBounds.for_problem(m, volume, lower)


def test_objective_trivia(problems):
    prob = problems("CANT-1-1-1-2")
    bounds = _bounds(prob.m, prob.volume)
    assert compliance(prob.f, np.zeros(prob.n)) == 0.0
    zero = np.zeros(prob.m)
    assert dual_objective(0.0, 0.0, zero, zero, bounds) == 0.0
    assert duality_gap(0.0, zero, 0.0, bounds) == 0.0  # u = 0, alpha = 0, lower = 0


def test_gap_vanishes_on_single_element_optimum(problems):
    prob = problems("CANT-1-1-1-1")
    v = prob.volume
    bounds = DensityBounds(np.zeros(1), np.full(1, v), v)  # box pinned to rho = V
    ops = ElementOps(prob.fine)
    k = ops.assemble_stiffness(np.full(1, v)).toarray()
    u = np.linalg.solve(k, prob.f)
    _, q = ops.element_products(u)
    alpha = float(q[0])
    delta = duality_gap(alpha, q, float(prob.f @ u), bounds)
    assert abs(delta) < 1e-12


def test_nonsmooth_dual_equals_analytic_multiplier_choice(problems):
    # f^T u - alpha V + sum_i min(lo_i s_i, up_i s_i) must coincide with the
    # negated dual objective at the slack-splitting multipliers, including
    # in the limit of a zero lower bound
    prob = problems("CANT-1-1-1-2")
    ops = ElementOps(prob.fine)
    rng = np.random.default_rng(12)
    for lower in (0.0, 1e-7, 0.05):
        bounds = _bounds(prob.m, prob.volume, lower)
        for _ in range(20):
            u = rng.standard_normal(prob.n) * rng.uniform(0.1, 2.0)
            _, q = ops.element_products(u)
            alpha = float(rng.uniform(-0.5, 2.0) * max(q.max(), 1.0))
            fu = float(prob.f @ u)
            slack = alpha - q
            nonsmooth = (
                fu
                - alpha * bounds.volume
                + float(np.minimum(bounds.lower * slack, bounds.upper * slack).sum())
            )
            nu_lo, nu_up = dual_from_slack(alpha, q)
            negated = -dual_objective(alpha, fu, nu_lo, nu_up, bounds)
            assert nonsmooth == pytest.approx(negated, abs=1e-12 * max(1.0, abs(negated)))


def test_slack_split_is_complementary_and_feasible():
    rng = np.random.default_rng(3)
    q = rng.uniform(0.0, 2.0, 50)
    alpha = 1.0
    nu_lo, nu_up = dual_from_slack(alpha, q)
    assert np.all(nu_lo >= 0.0)
    assert np.all(nu_up >= 0.0)
    assert np.abs(nu_lo * nu_up).max() == 0.0
    np.testing.assert_allclose(nu_lo - nu_up, alpha - q, rtol=0, atol=0)
    # dual constraint q <= alpha - nu_lo + nu_up holds with equality
    np.testing.assert_allclose(alpha - nu_lo + nu_up, q, rtol=0, atol=0)


def test_gap_dominates_distance_to_grid_search_optimum(problems):
    prob = problems("CANT-4-1-1-1")
    bounds = _bounds(prob.m, prob.volume)
    best_value, best_rho = oracles.grid_search_compliance(prob.fine, bounds, divisions=9)
    assert best_rho.sum() == pytest.approx(bounds.volume, abs=1e-12)
    ops = ElementOps(prob.fine)
    rng = np.random.default_rng(21)
    for _ in range(25):
        u = rng.standard_normal(prob.n) * rng.uniform(0.05, 1.0)
        _, q = ops.element_products(u)
        alpha = float(rng.uniform(0.2, 3.0) * max(q.max(), 1e-3))
        fu = float(prob.f @ u)
        nu_lo, nu_up = dual_from_slack(alpha, q)
        dual_value = -dual_objective(alpha, fu, nu_lo, nu_up, bounds)
        delta = duality_gap(alpha, q, fu, bounds)
        assert delta >= best_value - dual_value - 1e-9


def test_gap_identity_at_converged_pair(problems, cross_method_runs):
    # primal objective minus the max-form dual value equals the closed-form
    # gap once the multipliers are taken from the slack split
    report = cross_method_runs["CANT-2-2-2-3", "pbm"]
    prob = problems("CANT-2-2-2-3")
    bounds = _bounds(prob.m, prob.volume, 0.0)
    ops = ElementOps(prob.fine)
    u = report.extras["u"]
    alpha = report.extras["alpha"]
    _, q = ops.element_products(u)
    fu = float(prob.f @ u)
    nu_lo, nu_up = dual_from_slack(alpha, q)
    delta = duality_gap(alpha, q, fu, bounds)
    primal_minus_dual = 0.5 * fu + dual_objective(alpha, fu, nu_lo, nu_up, bounds)
    assert delta == pytest.approx(primal_minus_dual, abs=1e-12)


def test_weak_duality_along_solver_iterates(cross_method_runs, doc_sweep_runs):
    # scaled gaps must never be meaningfully negative once the equilibrium
    # residual is resolved to solver accuracy
    for report in list(cross_method_runs.values()) + list(doc_sweep_runs.values()):
        cols = dict(zip(report.columns, zip(*report.rows)))
        gaps = np.asarray(cols["gap_scaled"], dtype=float)
        if "tau_res" in cols:
            feasible = np.asarray(cols["tau_res"], dtype=float) < 1e-2
        else:
            feasible = np.ones(gaps.size, dtype=bool)  # state solved every iter
        assert gaps[feasible].min() >= -1e-6


def test_best_alpha_gap_is_the_kink_minimum():
    rng = np.random.default_rng(9)
    for _ in range(30):
        m = rng.integers(2, 12)
        q = rng.uniform(0.0, 3.0, m)
        fu = float(rng.uniform(0.0, 5.0))
        lower = np.full(m, float(rng.uniform(0.0, 0.2)))
        upper = np.full(m, 1.0)
        volume = float(rng.uniform(lower.sum() + 0.05, upper.sum() - 0.05))
        bounds = DensityBounds(lower, upper, volume)
        gap, alpha = best_alpha_gap(q, fu, bounds)
        # the gap is piecewise linear in alpha with kinks exactly at the
        # element energies, so the minimum over the kinks is the minimum
        kink_gaps = [duality_gap(float(a), q, fu, bounds) for a in q]
        assert gap == pytest.approx(min(kink_gaps), abs=1e-12)
        assert gap <= duality_gap(alpha + 0.1, q, fu, bounds) + 1e-12
        assert gap <= duality_gap(alpha - 0.1, q, fu, bounds) + 1e-12


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_property_box_simplex_projection(data):
    m = data.draw(st.integers(2, 20))
    seed = data.draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    lower = np.full(m, float(rng.uniform(0.0, 0.3)))
    upper = lower + rng.uniform(0.2, 1.0, m)
    volume = float(rng.uniform(lower.sum(), upper.sum()))
    bounds = DensityBounds(lower, upper, volume)
    y = rng.standard_normal(m) * 2.0
    out = project_box_simplex(y, bounds)
    assert np.all(out >= bounds.lower - 1e-12)
    assert np.all(out <= bounds.upper + 1e-12)
    assert out.sum() == pytest.approx(volume, abs=1e-9 * max(1.0, volume))
    # KKT: the shift y - out is constant on strictly interior components
    interior = (out > bounds.lower + 1e-7) & (out < bounds.upper - 1e-7)
    if interior.sum() >= 2:
        shifts = (y - out)[interior]
        assert np.ptp(shifts) <= 1e-7 * max(1.0, np.abs(shifts).max())


def test_projection_of_feasible_point_is_identity():
    bounds = DensityBounds(np.zeros(4), np.ones(4), 1.4)
    y = np.array([0.2, 0.4, 0.3, 0.5])
    np.testing.assert_allclose(project_box_simplex(y, bounds), y, rtol=0, atol=1e-9)


def test_dense_element_matrices_match_assembly(problems):
    prob = problems("CANT-1-1-1-2")
    kis = dense_element_matrices(prob.fine)
    ops = ElementOps(prob.fine)
    rng = np.random.default_rng(14)
    rho = rng.uniform(0.1, 1.0, prob.m)
    dense = np.einsum("e,eij->ij", rho, kis)
    assembled = ops.assemble_stiffness(rho).toarray()
    np.testing.assert_allclose(dense, assembled, rtol=0, atol=1e-12)
    for e in range(prob.m):
        np.testing.assert_array_equal(kis[e], kis[e].T)
        assert np.all(np.linalg.eigvalsh(kis[e]) > -1e-10)


def test_dense_element_matrices_refuse_large_instances(problems):
    with pytest.raises(ValueError, match="tiny"):
        dense_element_matrices(problems("CANT-2-2-2-4").fine)


def test_primal_oracle_single_element_analytic(problems):
    prob = problems("CANT-1-1-1-1")
    bounds = _bounds(prob.m, prob.volume)
    out = primal_oracle(prob.fine, bounds)
    # the volume constraint pins the single density at V
    np.testing.assert_allclose(out.rho, prob.volume, rtol=0, atol=1e-12)
    ops = ElementOps(prob.fine)
    k = ops.assemble_stiffness(np.full(1, prob.volume)).toarray()
    exact = 0.5 * prob.f @ np.linalg.solve(k, prob.f)
    assert out.value == pytest.approx(exact, rel=1e-12)


def test_primal_oracle_respects_symmetry(problems):
    prob = problems("CANT-1-2-1-1")
    bounds = _bounds(prob.m, prob.volume)
    out = primal_oracle(prob.fine, bounds, tol=1e-12)
    assert out.rho.shape == (2,)
    assert abs(out.rho[0] - out.rho[1]) <= 1e-9
    assert out.rho.sum() == pytest.approx(prob.volume, abs=1e-12)
    assert out.stationarity <= 1e-12


def test_strong_duality_certificate_single_cube(problems):
    cert = strong_duality_report(problems("CANT-1-1-1-1"))
    assert cert.converged
    assert cert.difference < 1e-8
    assert cert.max_complementarity < 1e-10
    assert cert.primal_value == pytest.approx(cert.dual_value, abs=1e-8)
    assert cert.rho_primal.sum() == pytest.approx(0.35, abs=1e-12)
