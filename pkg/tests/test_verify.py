import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from cdcrl.errors import SolverError
from cdcrl.verify import (TabularMdp, _penalised_fit, brute_force_optimum, cdc_operator_tabular,
                          contraction_check, contraction_suite, draw_ordering_params,
                          expected_max_of_draws, forward_kl_optimum, kl_objective, lemma1_check,
                          oe_closed_form, oe_closed_form_printed, oe_conditions,
                          oe_max_expectation, oe_simulation, policy_evaluation, project_simplex,
                          random_kl_instance, random_mdp, reverse_kl_optimum,
                          run_verification)

# independent Monte Carlo oracle for m=3, alpha=0, L1=1: 10^7 plain-numpy draws
M3_ORACLE, M3_ORACLE_SE = 0.5314337232205032, 1.0260705907376156e-4
# oe_simulation(1, 0.1, 0.01, 1, 8, 10**6, default_rng(7)) at fixture creation
THM3_FROZEN = (0.6336045877423249, 0.7780915378346507)


def rng(seed=0):
    return np.random.default_rng(seed)


# tabular operator ------------------------------------------------------------------

def test_mdp_validation():
    with pytest.raises(ValueError):
        TabularMdp(np.full((2, 2, 2), 0.6), np.zeros((2, 2)), 0.9)
    with pytest.raises(ValueError):
        TabularMdp(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), 1.0)
    m = random_mdp(rng(), 4, 3, 0.5)
    np.testing.assert_allclose(m.T.sum(axis=2), 1.0, atol=1e-12)
    assert m.r_star <= 1.0


def test_policy_evaluation_solves_bellman():
    m = random_mdp(rng(1), 5, 3, 0.9)
    pi = rng(2).dirichlet(np.ones(3), size=5)
    Q = policy_evaluation(m, pi)
    np.testing.assert_allclose(Q, m.r + m.gamma * m.T @ (pi * Q).sum(axis=1), atol=1e-12)


def test_expected_max_matches_enumeration():
    vals, probs = np.array([0.3, -1.0, 2.0]), np.array([0.5, 0.3, 0.2])
    import itertools
    brute = sum(np.prod(probs[list(c)]) * vals[list(c)].max()
                for c in itertools.product(range(3), repeat=3))
    assert expected_max_of_draws(vals, probs, 3)[0] == pytest.approx(brute, abs=1e-14)


@given(st.integers(0, 10_000), st.floats(0.0, 5.0))
def test_penalised_fit_is_the_minimiser(seed, eta):
    r = rng(seed)
    y, w = r.uniform(-2, 2, size=4), r.dirichlet(np.ones(4))
    obj = lambda q: float(np.sum(w * ((q - y) ** 2 + eta * (q.max() - q) ** 2)))
    ours = _penalised_fit(y, w, eta)
    ref = optimize.minimize(obj, y, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
    assert obj(ours) <= ref.fun + 1e-9


def test_operator_gamma_zero_is_regression():
    m = random_mdp(rng(), 4, 3, 0.0)
    q = rng(1).standard_normal((2, 4, 3))
    out, _ = cdc_operator_tabular(m, q, 0.0, 0.5, 3, 0.75)
    np.testing.assert_allclose(out, np.broadcast_to(m.r, out.shape), atol=1e-15)
    a, _ = cdc_operator_tabular(m, q, 1.5, 0.5, 3, 0.75)
    b, _ = cdc_operator_tabular(m, 7 * q, 1.5, 0.5, 3, 0.75)
    np.testing.assert_array_equal(a, b)


def test_operator_reduces_to_value_iteration():
    m = random_mdp(rng(3), 6, 4, 0.9)
    q = rng(4).standard_normal((6, 4))
    out, _ = cdc_operator_tabular(m, q, 0.0, 0.0, m.nA, 0.75, M=1)
    np.testing.assert_allclose(out[0], m.r + m.gamma * m.T @ q.max(axis=1), atol=1e-13)


def test_operator_is_a_function():
    m = random_mdp(rng(5), 5, 3, 0.9)
    q = rng(6).standard_normal((3, 5, 3))
    a, _ = cdc_operator_tabular(m, q, 1.0, 0.5, 4, 0.6)
    b, _ = cdc_operator_tabular(m, q.copy(), 1.0, 0.5, 4, 0.6)
    np.testing.assert_array_equal(a, b)


def test_constant_shift_contracts_by_gamma():
    m = random_mdp(rng(7), 5, 3, 0.9)
    q = rng(8).standard_normal((5, 3))
    c = 2.5
    t1, pi = cdc_operator_tabular(m, q, 0.0, 0.0, 3, 0.75, M=1)
    t2, _ = cdc_operator_tabular(m, q + c, 0.0, 0.0, 3, 0.75, M=1, policy=pi)
    assert np.max(np.abs(t2 - t1)) == pytest.approx(m.gamma * c, abs=1e-12)


def test_gamma_zero_ratio_zero():
    assert contraction_check(random_mdp(rng(), 4, 3, 0.0), 5, rng(1)) == 0.0
    with pytest.raises(ValueError):
        contraction_check(random_mdp(rng(), 4, 3, 0.5), 0, rng())


def test_small_contraction_suite():
    rows = contraction_suite(seed=3, n_mdps=6, pairs=5)
    assert all(r["ratio"] <= r["gamma"] + 1e-9 for r in rows)


# overestimation machinery --------------------------------------------------------------

def test_closed_form_anchors():
    assert oe_closed_form(1.0, 2, 0.0) == pytest.approx(5 / 12, abs=1e-15)
    assert oe_closed_form(1.0, 1, 0.0) == pytest.approx(0.25, abs=1e-15)
    assert oe_closed_form(1.0, 3, 0.0) == pytest.approx(17 / 32, abs=1e-15)
    # the expanded expression as typeset misses the anchor
    assert oe_closed_form_printed(1.0, 2, 0.0) == pytest.approx(3 / 8, abs=1e-15)
    with pytest.raises(ValueError):
        oe_closed_form(1.0, 0, 0.0)


@given(st.floats(0.01, 10), st.integers(1, 50), st.floats(0, 0.99))
def test_closed_form_linear_in_L1(L1, m, alpha):
    assert oe_closed_form(2 * L1, m, alpha) == pytest.approx(2 * oe_closed_form(L1, m, alpha),
                                                             rel=1e-12)


def test_closed_form_matches_frozen_m3_oracle():
    assert abs(oe_closed_form(1.0, 3, 0.0) - M3_ORACLE) <= 4 * M3_ORACLE_SE


def test_monte_carlo_anchors():
    mean, se = oe_max_expectation(1.0, 1, 0.0, 400_000, rng(1))
    assert abs(mean - 0.25) <= 3 * se
    mean, se = oe_max_expectation(1.0, 2, 0.0, 400_000, rng(2))
    assert abs(mean - 5 / 12) <= 3 * se
    mean, _ = oe_max_expectation(1.0, 200, 0.0, 50_000, rng(3))
    assert abs(mean - 1.0) <= 0.02


@pytest.mark.parametrize("m, alpha, L1", [(1, 0.3, 2.0), (5, 0.1, 0.5), (10, 0.0, 1.0)])
def test_closed_form_vs_monte_carlo(m, alpha, L1):
    mean, se = oe_max_expectation(L1, m, alpha, 300_000, rng(m))
    assert abs(mean - oe_closed_form(L1, m, alpha)) <= 4 * se


def test_simulation_eta_zero_coincides():
    r = oe_simulation(0.0, 0.5, 0.1, 1.0, 4, 50_000, rng())
    assert r.cdc_mean == r.baseline_mean and r.trial_fraction_ordered == 1.0


def test_simulation_baseline_anchor():
    r = oe_simulation(1.0, 0.1, 0.0, 1.0, 2, 1_000_000, rng(11))
    assert abs(r.baseline_mean - 5 / 12) <= 3 * r.baseline_se


def test_simulation_frozen_example():
    r = oe_simulation(1.0, 0.1, 0.01, 1.0, 8, 1_000_000, rng(7))
    assert r.conditions_ok
    assert (r.cdc_mean, r.baseline_mean) == pytest.approx(THM3_FROZEN, abs=1e-12)
    assert r.baseline_mean - r.cdc_mean > 3 * r.diff_se


def test_simulation_shift_invariant():
    a = oe_simulation(1.0, 0.3, 0.1, 1.0, 5, 20_000, rng(4))
    b = oe_simulation(1.0, 0.3, 0.1, 1.0, 5, 20_000, rng(4), C=12.5)
    assert b.cdc_mean == pytest.approx(a.cdc_mean, abs=1e-12)
    assert b.baseline_mean == pytest.approx(a.baseline_mean, abs=1e-12)


def test_conditions():
    assert oe_conditions(1.0, 0.1, 0.01, 8)
    assert not oe_conditions(1.0, 60.0, 0.01, 50)  # step size too large for alpha
    assert not oe_conditions(1.0, 1.0, 0.0, 100)  # eta * mu == 1
    assert oe_conditions(1.0, 3.0, 0.0, 4) and not oe_conditions(1.0, 3.0, 0.0, 3)


def test_large_step_overshoots_despite_conditions():
    # eta*mu > 1 satisfies both stated conditions for large m, yet the update
    # lifts Q_ID above the old maximum, so the penalised estimate is worse
    r = oe_simulation(1.0, 3.0, 0.0, 1.0, 8, 100_000, rng(0))
    assert r.conditions_ok
    assert r.cdc_mean > r.baseline_mean


def test_ordering_draws_satisfy_conditions():
    r = rng(9)
    for _ in range(20):
        p = draw_ordering_params(r)
        assert oe_conditions(p["eta"], p["mu"], p["alpha"], p["m"]) and p["eta"] * p["mu"] < 1


# KL optima -----------------------------------------------------------------------------

def test_constant_q_recovers_behaviour():
    pb = np.array([0.1, 0.2, 0.3, 0.4])
    for solver in (forward_kl_optimum, reverse_kl_optimum):
        np.testing.assert_allclose(solver(np.full(4, 0.7), pb, 1.3)[0], pb, atol=1e-12)


def test_huge_lambda_recovers_behaviour():
    q, pb, _ = random_kl_instance(rng(2))
    for solver in (forward_kl_optimum, reverse_kl_optimum):
        assert np.max(np.abs(solver(q, pb, 1e6)[0] - pb)) <= 1e-4


def test_random_four_action_instance():
    r = rng(4)
    pb = r.dirichlet(np.ones(4) * 2) * 0.92 + 0.02
    res = lemma1_check(r.uniform(-1, 1, 4), pb, 0.8)
    assert res.max_dev <= 1e-6
    np.testing.assert_allclose(res.forward_closed.sum(), 1.0, atol=1e-12)


def test_closed_forms_are_optimal_against_perturbations():
    q, pb, lam = random_kl_instance(rng(6))
    r = rng(7)
    for direction, solver in (("forward", forward_kl_optimum), ("reverse", reverse_kl_optimum)):
        pi = solver(q, pb, lam)[0]
        best = kl_objective(pi, q, pb, lam, direction)
        for _ in range(50):
            other = project_simplex(pi + 1e-3 * r.standard_normal(pi.size), 1e-9)
            assert kl_objective(other, q, pb, lam, direction) <= best + 1e-12


@given(st.integers(0, 10_000))
def test_forward_tilt_is_monotone(seed):
    q, pb, lam = random_kl_instance(rng(seed))
    ratio = forward_kl_optimum(q, pb, lam)[0] / pb
    order = np.argsort(q)
    assert np.all(np.diff(ratio[order]) >= -1e-12)


def test_solver_errors():
    with pytest.raises(ValueError):
        forward_kl_optimum([1.0, 2.0], [0.5, 0.5], 0.0)
    with pytest.raises(ValueError):
        reverse_kl_optimum([1.0, 2.0], [1.0, 0.0], 1.0)
    with pytest.raises(SolverError):
        reverse_kl_optimum([1e308, -1e308], [0.5, 0.5], 1e-10)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=7))
def test_project_simplex(v):
    p = project_simplex(np.array(v))
    assert abs(p.sum() - 1.0) < 1e-12 and np.all(p >= 0)
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)


def test_brute_force_reaches_grid_optimum_or_better():
    q, pb, lam = np.array([0.2, -0.4, 0.9]), np.array([0.3, 0.3, 0.4]), 1.0
    x = brute_force_optimum(q, pb, lam, "forward", grid_resolution=10)
    assert kl_objective(x, q, pb, lam, "forward") >= kl_objective(pb, q, pb, lam, "forward")


def test_run_verification_quick():
    rep = run_verification(seed=1, scale=0.02)
    assert set(rep["checks"]) == {"contraction", "oe_anchor", "oe_closed_form", "oe_large_m",
                                  "oe_ordering", "kl_optima"}
    assert rep["pass"] is True
