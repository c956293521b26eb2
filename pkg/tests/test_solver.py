import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mklridge as mk
from mklridge import ConfigError, KernelSpec, NumericalError, ShapeError
from mklridge.solver import project_ball_orthant, project_l1_orthant

from helpers import (ball_grid_points, dual_objective_grid_min,
                     random_psd_instance, simplex_grid_points)


# --- krr_solve --------------------------------------------------------------

def test_krr_identity_kernel():
    alpha = mk.krr_solve(np.eye(2), [2.0, 4.0], 1.0)
    npt.assert_allclose(alpha, [1.0, 2.0], rtol=0, atol=1e-14)


def test_krr_zero_kernel():
    alpha = mk.krr_solve(np.zeros((2, 2)), [3.0, 5.0], 2.0)
    npt.assert_allclose(alpha, [1.5, 2.5], rtol=0, atol=1e-14)


def test_krr_hand_inverted_system():
    # (K + I) = [[3, 1], [1, 3]]; inverse maps (1, 1) to (0.25, 0.25).
    alpha = mk.krr_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), [1.0, 1.0], 1.0)
    npt.assert_allclose(alpha, [0.25, 0.25], rtol=0, atol=1e-14)


def test_krr_requires_positive_lam():
    with pytest.raises(ConfigError):
        mk.krr_solve(np.eye(2), [1.0, 1.0], 0.0)


def test_krr_dimension_mismatch():
    with pytest.raises(ShapeError):
        mk.krr_solve(np.eye(2), [1.0, 1.0, 1.0], 1.0)


def test_krr_indefinite_matrix_reports_eigenvalue():
    K = np.array([[0.0, 4.0], [4.0, 0.0]])  # eigenvalues +-4
    with pytest.raises(NumericalError) as err:
        mk.krr_solve(K, [1.0, 1.0], 0.5)
    assert "eigenvalue" in str(err.value)


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000))
def test_krr_residual_bound(seed):
    fam, y, lambda0, _ = random_psd_instance(seed, m_range=(3, 25), p_range=(1, 3))
    K = mk.combine(fam, np.ones(fam.p))
    lam = lambda0 * fam.m
    alpha = mk.krr_solve(K, y, lam)
    resid = (K.entries + lam * np.eye(fam.m)) @ alpha - y
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(y)


# --- quad_forms --------------------------------------------------------------

def test_quad_forms_basis_vector():
    fam, _, _, _ = random_psd_instance(3, m_range=(5, 5), p_range=(3, 3))
    e0 = np.zeros(fam.m)
    e0[0] = 1.0
    v = mk.quad_forms(e0, fam)
    expected = [g.entries[0, 0] for g in fam.grams]
    npt.assert_allclose(v, expected, rtol=1e-12)


def test_quad_forms_zero_alpha():
    fam, _, _, _ = random_psd_instance(4, m_range=(6, 6), p_range=(2, 2))
    npt.assert_array_equal(mk.quad_forms(np.zeros(fam.m), fam), np.zeros(fam.p))


def test_quad_forms_identity_kernels():
    fam = mk.KernelFamily.from_grams([np.eye(2), np.eye(2)])
    npt.assert_allclose(mk.quad_forms([1.0, 1.0], fam), [2.0, 2.0])


def test_quad_forms_feature_path_matches_gram_path():
    X = np.abs(np.random.default_rng(0).standard_normal((7, 3)))
    fam = mk.rank1_family(X, include_offset=True)
    alpha = np.random.default_rng(1).standard_normal(7)
    v_feat = mk.quad_forms(alpha, fam)
    v_gram = np.array([alpha @ (g.entries @ alpha) for g in fam.grams])
    npt.assert_allclose(v_feat, v_gram, rtol=1e-12, atol=1e-14)
    assert np.all(v_feat >= 0.0)


def test_quad_forms_flags_indefinite_kernel():
    bad = mk.KernelFamily.from_grams([np.array([[1.0, 2.0], [2.0, 1.0]])])
    with pytest.raises(NumericalError):
        mk.quad_forms([1.0, -1.0], bad)


# --- update_weights -----------------------------------------------------------

def test_update_zero_radius():
    w = mk.update_weights([3.0, 4.0], [1.0, 1.0], 0.0)
    npt.assert_array_equal(w.mu, [1.0, 1.0])


def test_update_hand_example():
    w = mk.update_weights([3.0, 4.0], [1.0, 1.0], 10.0)
    npt.assert_allclose(w.mu, [7.0, 9.0], rtol=0, atol=1e-12)


def test_update_degenerate_direction():
    w = mk.update_weights([0.0, 0.0], [1.0, 2.0], 5.0)
    npt.assert_array_equal(w.mu, [1.0, 2.0])


def test_update_rejects_negative_quad():
    with pytest.raises(ConfigError):
        mk.update_weights([1.0, -1.0], [1.0, 1.0], 1.0)


@settings(max_examples=40)
@given(
    p=st.integers(1, 10),
    radius=st.floats(0.0, 50.0),
    seed=st.integers(0, 5000),
)
def test_update_invariants(p, radius, seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.0, 10.0, size=p)
    v[int(rng.integers(p))] += 0.5
    mu0 = 1.0 + rng.uniform(0.0, 3.0, size=p)
    mu0[int(rng.integers(p))] = 1.0
    w = mk.update_weights(v, mu0, radius)
    assert np.all(w.mu >= w.mu0 - 1e-12)
    assert abs(np.linalg.norm(w.mu - w.mu0) - radius) <= 1e-9 * max(1.0, radius)


def test_mu_weights_validation():
    with pytest.raises(ConfigError):
        mk.MuWeights(np.array([1.0]), np.array([2.0]), 0.0)  # min(mu0) != 1
    with pytest.raises(ConfigError):
        mk.MuWeights(np.array([-0.5, 1.0]), np.array([1.0, 1.0]), 5.0)
    with pytest.raises(ConfigError):
        mk.MuWeights(np.array([9.0, 1.0]), np.array([1.0, 1.0]), 1.0)  # outside ball


# --- objective ----------------------------------------------------------------

def test_objective_zero_alpha():
    assert mk.objective(np.zeros(3), np.ones(3), 1.0, np.zeros(2), np.ones(2), 1.0) == 0.0


def test_objective_hand_value():
    # Scalar case: -lam a^2 + 2 a y - mu0 v with v = a^2 K11.
    val = mk.objective([0.5], [1.0], 1.0, [0.25], [1.0], 0.0)
    assert val == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=25)
@given(seed=st.integers(0, 10_000))
def test_objective_zero_radius_is_plain_dual_value(seed):
    fam, y, lambda0, _ = random_psd_instance(seed, m_range=(4, 15), p_range=(1, 4))
    lam = lambda0 * fam.m
    rng = np.random.default_rng(seed + 7)
    alpha = rng.standard_normal(fam.m)
    v = mk.quad_forms(alpha, fam)
    mu0 = np.ones(fam.p)
    K0 = mk.combine(fam, mu0)
    direct = -lam * alpha @ alpha - alpha @ (K0.entries @ alpha) + 2 * alpha @ y
    assert mk.objective(alpha, y, lam, v, mu0, 0.0) == pytest.approx(direct, rel=1e-10, abs=1e-10)


# --- fit_l2 -------------------------------------------------------------------

def test_fit_zero_radius_equals_plain_krr():
    fam, y, lambda0, _ = random_psd_instance(11)
    model, _ = mk.fit_l2(fam, y, lambda0, 0.0)
    direct = mk.krr_solve(mk.combine(fam, np.ones(fam.p)), y, lambda0 * fam.m)
    assert np.linalg.norm(model.alpha - direct) <= 1e-10
    assert model.iterations <= 2
    npt.assert_array_equal(model.weights.mu, np.ones(fam.p))


def test_fit_zero_radius_rank1_family():
    X = np.abs(np.random.default_rng(5).standard_normal((10, 4)))
    fam = mk.rank1_family(X, include_offset=True)
    y = np.random.default_rng(6).standard_normal(10)
    model, _ = mk.fit_l2(fam, y, 0.1, 0.0)
    direct = mk.krr_solve(mk.combine(fam, np.ones(fam.p)), y, 0.1 * fam.m)
    assert np.linalg.norm(model.alpha - direct) <= 1e-10


def test_fit_single_kernel_closed_form():
    fam, y, lambda0, radius = random_psd_instance(21, p_range=(1, 1))
    model, _ = mk.fit_l2(fam, y, lambda0, radius)
    assert model.weights.mu[0] == 1.0 + radius
    direct = mk.krr_solve(
        mk.GramMatrix((1.0 + radius) * fam.grams[0].entries, fam.sample_id),
        y, lambda0 * fam.m,
    )
    npt.assert_array_equal(model.alpha, direct)


def test_fit_matches_oracle_on_random_instance():
    fam, y, lambda0, radius = random_psd_instance(31, m_range=(20, 20), p_range=(5, 5))
    model, report = mk.fit_l2(fam, y, lambda0, radius)
    oracle = mk.oracle_fit(fam, y, lambda0, radius)
    assert abs(report.objective_value - oracle.objective_value) <= 1e-6 * max(
        1.0, abs(oracle.objective_value)
    )


def test_fit_bit_identical_reruns():
    fam, y, lambda0, radius = random_psd_instance(41)
    m1, r1 = mk.fit_l2(fam, y, lambda0, radius)
    m2, r2 = mk.fit_l2(fam, y, lambda0, radius)
    assert m1.alpha.tobytes() == m2.alpha.tobytes()
    assert m1.weights.mu.tobytes() == m2.weights.mu.tobytes()
    assert r1.objective_value == r2.objective_value


def test_fit_max_iters_exhaustion_flagged():
    fam, y, lambda0, radius = random_psd_instance(51)
    model, _ = mk.fit_l2(fam, y, lambda0, radius, max_iters=2, epsilon=1e-15)
    assert not model.converged
    assert model.iterations == 2


def test_fit_trajectory_recording():
    fam, y, lambda0, radius = random_psd_instance(61)
    model, report = mk.fit_l2(fam, y, lambda0, radius, record_trajectory=True)
    assert report.trajectory is not None
    assert len(report.trajectory) == model.iterations
    steps = [s for s, _ in report.trajectory]
    assert steps[-1] == model.final_step


def test_fit_parameter_validation():
    fam, y, _, _ = random_psd_instance(71)
    with pytest.raises(ConfigError):
        mk.fit_l2(fam, y, 0.0, 1.0)
    with pytest.raises(ConfigError):
        mk.fit_l2(fam, y, 0.1, -1.0)
    with pytest.raises(ConfigError):
        mk.fit_l2(fam, y, 0.1, 1.0, eta=1.0)
    with pytest.raises(ConfigError):
        mk.fit_l2(fam, y, 0.1, 1.0, mu0=np.full(fam.p, 2.0))


def test_fit_converged_state_is_consistent():
    fam, y, lambda0, radius = random_psd_instance(81)
    model, _ = mk.fit_l2(fam, y, lambda0, radius)
    assert model.converged
    # The returned alpha is the exact ridge solution for the returned mu.
    direct = mk.krr_solve(mk.combine(fam, model.weights.mu), y, model.lam)
    npt.assert_array_equal(model.alpha, direct)
    assert np.all(model.quad >= 0.0)


# --- projections --------------------------------------------------------------

@settings(max_examples=50)
@given(p=st.integers(1, 8), seed=st.integers(0, 5000), radius=st.floats(0.01, 5.0))
def test_ball_orthant_projection_feasible_and_idempotent(p, seed, radius):
    rng = np.random.default_rng(seed)
    mu0 = 1.0 + rng.uniform(0.0, 2.0, size=p)
    mu0[int(rng.integers(p))] = 1.0
    x = rng.normal(scale=3.0, size=p)
    z = project_ball_orthant(x, mu0, radius)
    assert np.all(z >= 0.0)
    assert np.linalg.norm(z - mu0) <= radius * (1 + 1e-12) + 1e-15
    npt.assert_allclose(project_ball_orthant(z, mu0, radius), z, rtol=0, atol=1e-12)


@settings(max_examples=50)
@given(p=st.integers(1, 8), seed=st.integers(0, 5000), budget=st.floats(0.1, 10.0))
def test_l1_projection_is_nearest_point(p, seed, budget):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=2.0, size=p)
    z = project_l1_orthant(x, budget)
    assert np.all(z >= 0.0)
    assert z.sum() <= budget * (1 + 1e-12)
    npt.assert_allclose(project_l1_orthant(z, budget), z, rtol=0, atol=1e-12)
    # Variational characterization: (x - z)'(w - z) <= 0 for feasible w.
    for _ in range(20):
        w = rng.uniform(0.0, 1.0, size=p)
        s = w.sum()
        if s > budget:
            w *= budget / s
        assert (x - z) @ (w - z) <= 1e-9


# --- oracle_fit ----------------------------------------------------------------

def test_oracle_zero_radius():
    fam, y, lambda0, _ = random_psd_instance(91)
    res = mk.oracle_fit(fam, y, lambda0, 0.0)
    npt.assert_array_equal(res.weights.mu, np.ones(fam.p))
    assert res.converged


def test_oracle_single_kernel_closed_form():
    fam, y, lambda0, radius = random_psd_instance(101, p_range=(1, 1))
    res = mk.oracle_fit(fam, y, lambda0, radius)
    assert res.weights.mu[0] == pytest.approx(1.0 + radius, rel=1e-7)


def test_oracle_certificate_is_sound_against_grid():
    fam, y, lambda0, radius = random_psd_instance(111, m_range=(6, 10), p_range=(2, 2))
    res = mk.oracle_fit(fam, y, lambda0, radius)
    mats = [g.entries for g in fam.grams]
    pts = ball_grid_points(np.ones(2), radius, 0.01 * radius)
    grid_min = dual_objective_grid_min(mats, y, lambda0 * fam.m, pts)
    assert res.objective_value <= grid_min + 1e-8 * max(1.0, abs(grid_min))


def test_oracle_rejects_large_instances():
    fam = mk.KernelFamily.from_grams([np.eye(201)])
    with pytest.raises(ConfigError):
        mk.oracle_fit(fam, np.ones(201), 0.1, 1.0)


# --- fit_l1 ---------------------------------------------------------------------

def test_l1_single_kernel_takes_full_budget():
    fam, y, lambda0, _ = random_psd_instance(121, p_range=(1, 1))
    res = mk.fit_l1(fam, y, lambda0, 2.5)
    assert res.converged
    assert res.mu[0] == pytest.approx(2.5, rel=1e-6)


def test_l1_duplicate_kernels_match_single_kernel_objective():
    fam, y, lambda0, _ = random_psd_instance(131, p_range=(1, 1))
    K = fam.grams[0].entries
    twin = mk.KernelFamily.from_grams([K, K.copy()])
    single = mk.fit_l1(fam, y, lambda0, 2.0)
    double = mk.fit_l1(twin, y, lambda0, 2.0)
    assert double.objective_value == pytest.approx(single.objective_value, rel=1e-6)


def test_l1_matches_simplex_grid():
    for seed in (141, 142):
        fam, y, lambda0, _ = random_psd_instance(seed, m_range=(10, 10), p_range=(3, 3))
        budget = 1.5
        res = mk.fit_l1(fam, y, lambda0, budget)
        assert res.converged
        pts = simplex_grid_points(3, budget, 100)
        grid_min = dual_objective_grid_min([g.entries for g in fam.grams], y,
                                           lambda0 * fam.m, pts)
        scale = max(1.0, abs(grid_min))
        # Certified solution is never worse than any lattice point; the
        # lattice can only be worse by a first-order term of its spacing.
        assert res.objective_value <= grid_min + 1e-8 * scale
        vstar = mk.quad_forms(res.alpha, fam)
        allowance = max(np.linalg.norm(vstar), 1.0) * (0.01 * budget) * 4.0
        assert grid_min - res.objective_value <= allowance


def test_l1_budget_validation():
    fam, y, lambda0, _ = random_psd_instance(151)
    with pytest.raises(ConfigError):
        mk.fit_l1(fam, y, lambda0, 0.0)


# --- predict ---------------------------------------------------------------------

def test_predict_zero_alpha():
    X = np.random.default_rng(0).standard_normal((3, 2))
    fam = mk.KernelFamily.from_specs([KernelSpec.linear()], X)
    model, _ = mk.fit_l2(fam, np.zeros(3), 1.0, 0.0)
    assert mk.predict(model, fam.specs, X, np.ones(2)) == 0.0


def test_predict_single_training_point_linear():
    weights = mk.MuWeights(np.array([1.0]), np.array([1.0]), 0.0)
    model = mk.MklModel(
        weights=weights, alpha=np.array([2.0]), lam=1.0, lambda0=1.0,
        quad=np.array([0.0]), iterations=1, converged=True, final_step=0.0,
    )
    X_train = np.array([[1.0, 0.0]])
    assert mk.predict(model, (KernelSpec.linear(),), X_train, np.array([3.0, 0.0])) == 6.0


def test_predict_on_training_points_matches_gram_product():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((12, 3))
    specs = [KernelSpec.gaussian(1.5), KernelSpec.linear(), KernelSpec.polynomial(2)]
    fam = mk.KernelFamily.from_specs(specs, X)
    y = rng.standard_normal(12)
    model, _ = mk.fit_l2(fam, y, 0.2, 0.7)
    preds = mk.predict(model, fam.specs, X, X)
    direct = mk.combine(fam, model.weights.mu).entries @ model.alpha
    assert np.max(np.abs(preds - direct)) <= 1e-10


def test_predict_rank1_feature_path_matches_cross_gram():
    rng = np.random.default_rng(19)
    X_train = np.abs(rng.standard_normal((8, 3)))
    X_test = np.abs(rng.standard_normal((5, 3)))
    fam = mk.rank1_family(X_train, include_offset=True)
    y = rng.standard_normal(8)
    model, _ = mk.fit_l2(fam, y, 0.3, 1.0)
    fast = mk.predict(model, fam.specs, X_train, X_test)
    slow = np.zeros(5)
    for k, spec in enumerate(fam.specs):
        slow += model.weights.mu[k] * (mk.cross_gram(spec, X_test, X_train) @ model.alpha)
    npt.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12)


def test_predict_dimension_mismatch():
    X = np.random.default_rng(0).standard_normal((3, 2))
    fam = mk.KernelFamily.from_specs([KernelSpec.linear()], X)
    model, _ = mk.fit_l2(fam, np.ones(3), 1.0, 0.0)
    with pytest.raises(ShapeError):
        mk.predict(model, fam.specs, X, np.ones(5))
