import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdaircomp import airlink, pipeline
from mdaircomp.airlink import RealStackedModel, SensingMatrix, dft_sensing_matrix, stack_matrix, stack_vector
from mdaircomp.config import ScenarioConfig
from mdaircomp.detect import (LassoProblem, PowerIterationError, default_rho, improve_round, ista_solve,
                              lasso_objective, matched_filter_detect, max_eigen_gram, soft_threshold)

from oracles import best_integer_counts


def problem(p_r, y_r, rho):
    return LassoProblem(RealStackedModel(y_r=y_r, p_r=p_r, noise_var_r=0.0), rho)


def test_soft_threshold_examples():
    assert soft_threshold(5.0, 2.0) == 3.0
    assert soft_threshold(-1.0, 2.0) == 0.0
    x = np.random.default_rng(0).standard_normal(20)
    np.testing.assert_array_equal(soft_threshold(x, 0.0), x)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_max_eigen_examples():
    assert max_eigen_gram(np.eye(5)[:, :3]) == pytest.approx(1.0)
    assert max_eigen_gram(np.diag([3.0, 1.0])) == pytest.approx(9.0)
    a = np.random.default_rng(1).standard_normal((50, 32))
    assert max_eigen_gram(a) == pytest.approx(np.linalg.eigvalsh(a.T @ a)[-1], rel=1e-6)
    with pytest.raises(ValueError):
        max_eigen_gram(np.zeros((3, 3)))


def test_max_eigen_reports_non_convergence():
    # nearly tied top eigenvalues converge slowly
    a = np.diag([1.0, 0.999999, 0.5])
    with pytest.raises(PowerIterationError) as info:
        max_eigen_gram(a, tol=1e-15, max_iter=3)
    assert info.value.last_vector.shape == (3,)
    assert 0.2 < info.value.last_value <= 1.0 + 1e-12


def test_ista_separable_closed_form():
    z = ista_solve(problem(np.eye(2), np.array([3.0, 0.1]), 0.5), 50, trajectory=False)
    np.testing.assert_allclose(z, [2.5, 0.0], atol=1e-12)


def test_ista_least_squares_fixed_point():
    rng = np.random.default_rng(2)
    p_r = rng.standard_normal((20, 6))
    z_true = rng.standard_normal(6)
    z = ista_solve(problem(p_r, p_r @ z_true, 0.0), 3000, trajectory=False)
    np.testing.assert_allclose(z, z_true, atol=1e-8)


def test_ista_beats_integer_oracle():
    rng = np.random.default_rng(3)
    p = rng.standard_normal((16, 6))
    z_true = np.bincount(rng.integers(0, 6, 3), minlength=6).astype(float)
    y = p @ z_true + 0.05 * rng.standard_normal(16)
    rho = 0.1
    z = ista_solve(problem(p, y, rho), 300, trajectory=False)
    _, best = best_integer_counts(p, y, 3, objective=lambda c: lasso_objective(p, y, c, rho))
    assert lasso_objective(p, y, z, rho) <= best + 1e-12


def test_ista_trajectory_shape_and_batch():
    rng = np.random.default_rng(4)
    p_r = rng.standard_normal((10, 8))
    y = rng.standard_normal((10, 3))
    traj = ista_solve(problem(p_r, y, np.array([0.1, 0.2, 0.3])), 7)
    assert traj.shape == (7, 8, 3)
    for j, rho in enumerate([0.1, 0.2, 0.3]):
        single = ista_solve(problem(p_r, y[:, j], rho), 7)
        np.testing.assert_allclose(traj[:, :, j], single, atol=1e-13)
    with pytest.raises(ValueError):
        ista_solve(problem(p_r, y, 0.1), 0)


def test_lasso_problem_rejects_negative_rho():
    with pytest.raises(ValueError):
        problem(np.eye(2), np.zeros(2), -1.0)


def test_objective_monotone_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(100):
        l2, q = rng.integers(4, 30), rng.integers(4, 40)
        p_r = rng.standard_normal((l2, q))
        y = rng.standard_normal(l2) * rng.uniform(0.1, 10)
        rho = rng.uniform(0, 2)
        traj = ista_solve(problem(p_r, y, rho), 100)
        obj = np.concatenate([[lasso_objective(p_r, y, np.zeros(q), rho)], lasso_objective(p_r, y[:, None], traj.T, rho)])
        assert np.all(np.diff(obj) <= 1e-10 * np.maximum(1.0, np.abs(obj[1:])))


def test_kkt_at_convergence():
    rng = np.random.default_rng(6)
    for _ in range(20):
        p_r = rng.standard_normal((24, 10))
        y = p_r @ np.maximum(rng.standard_normal(10), 0) + 0.1 * rng.standard_normal(24)
        rho = 0.5
        z = ista_solve(problem(p_r, y, rho), 20_000, trajectory=False)
        g = p_r.T @ (y - p_r @ z)
        on = z != 0
        np.testing.assert_allclose(g[on], rho * np.sign(z[on]), atol=1e-6)
        assert np.all(np.abs(g[~on]) <= rho + 1e-6)


def test_default_rho_formula():
    assert default_rho(0.5, 32) == pytest.approx(np.sqrt(2 * 0.5 * np.log(32)))
    assert default_rho(0.0, 32) == 0.0
    assert default_rho(0.5, 32, scale=2.0) == pytest.approx(2 * default_rho(0.5, 32))


def test_improve_round_examples():
    np.testing.assert_array_equal(improve_round([1.9, -0.2, 0.4]), [2, 0, 0])
    np.testing.assert_array_equal(improve_round([3.0, 0.0, 7.0]), [3, 0, 7])
    np.testing.assert_array_equal(improve_round([0.5, 1.5, 2.5]), [1, 2, 3])
    assert improve_round([0.1]).dtype == np.int64


@given(x=st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_improve_round_idempotent_and_monotone(x):
    x = np.array(x)
    r = improve_round(x)
    np.testing.assert_array_equal(improve_round(r), r)
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(r[order]) >= 0)


@settings(max_examples=30, deadline=None)
@given(z=st.lists(st.integers(0, 10), min_size=8, max_size=8))
def test_matched_filter_exact_noiseless(z):
    for unit_power in (False, True):
        p = dft_sensing_matrix(12, 8, unit_power=unit_power)
        np.testing.assert_array_equal(matched_filter_detect(p, p.tx @ np.array(z, dtype=float)), z)


def test_matched_filter_zero_and_nonorthogonal():
    p = dft_sensing_matrix(6, 4)
    np.testing.assert_array_equal(matched_filter_detect(p, np.zeros(6, dtype=complex)), 0)
    bad = SensingMatrix(np.random.default_rng(0).standard_normal((6, 4)) + 0j, "gaussian")
    with pytest.raises(ValueError):
        matched_filter_detect(bad, np.zeros(6, dtype=complex))


def test_matched_filter_exact_at_20db():
    cfg = ScenarioConfig(l=40, q=16, k=10, snr_db=20.0, detector="matched_filter", trials=1000)
    rx = pipeline.receiver_for(cfg)
    recs = pipeline.run_cell(cfg, rx, pipeline.scalar_codebook(cfg), "mf-test", 0)
    assert np.mean([r.detection_exact for r in recs]) >= 0.99


def test_improved_ista_exact_noiseless_small():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = airlink.crandn(rng, (8, 6))
        z = np.bincount(rng.integers(0, 6, 3), minlength=6).astype(float)
        p_r, y_r = stack_matrix(p), stack_vector(p @ z)
        z_hat = improve_round(ista_solve(problem(p_r, y_r, 0.0), 300, trajectory=False))
        oracle, _ = best_integer_counts(p_r, y_r, 3)
        hits += np.array_equal(z_hat, oracle)
    assert hits >= 95
