import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdaircomp import analysis
from mdaircomp.analysis import (BoundParams, BoundValidityWarning, bound_curve, calibrate_c0, detect_term,
                                effective_sparsity, empirical_mse, is_strictly_unimodal, optimal_q_bound,
                                quant_term, quant_term_from_codebook, sparsity_sweep, support_sizes,
                                terms_balanced, total_bound)
from mdaircomp.config import ScenarioConfig
from mdaircomp.quantize import CountVector, make_uniform_codebook
from mdaircomp.sources import source_pdf

from oracles import bin_probabilities, expected_occupancy, occupancy_monte_carlo

GRID = [2, 4, 8, 16, 32, 64, 128, 256]


def bp(**kw):
    base = dict(r=0.5, k=10, l=25, sigma2_eff=0.01, c0=1.0, u_sq_norm=10.0)
    base.update(kw)
    return BoundParams(**base)


def test_quant_term_examples():
    assert quant_term(bp(), 4) == pytest.approx(2 * 0.25 / (3 * 10 * 16))
    assert quant_term(bp(), 8) == pytest.approx(quant_term(bp(), 4) / 4, rel=1e-15)
    assert quant_term(bp(), 2 ** 30) < 1e-18
    with pytest.raises(ValueError):
        quant_term(bp(), 1)


def test_quant_term_from_codebook():
    cb = make_uniform_codebook(0, 1, 5)
    assert quant_term_from_codebook(cb, 10) == pytest.approx(2 * 0.25 ** 2 / 12 / 10)


def test_detect_term_examples():
    assert detect_term(bp(sigma2_eff=0.0), 32) == 0.0
    assert detect_term(bp(), 32) == pytest.approx(2 * 0.01 * 32 * np.log(32) * 10 / (10 * 25))
    assert detect_term(bp(), 32) == pytest.approx(8.872e-2, rel=1e-3)
    assert detect_term(bp(c0=3.0), 32) == pytest.approx(3 * detect_term(bp(), 32))
    assert detect_term(bp(sigma2_eff=0.05), 32) == pytest.approx(5 * detect_term(bp(), 32))


def test_detect_term_validity_warning():
    with pytest.warns(BoundValidityWarning):
        detect_term(bp(l=5), 256)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        detect_term(bp(l=60), 32)


def test_total_bound_is_sum():
    for q in GRID:
        t = total_bound(bp(), q, warn=False)
        a, b = quant_term(bp(), q), detect_term(bp(), q, warn=False)
        assert t == a + b
        assert t > a and t > b


def test_total_bound_interior_minimum():
    vals = bound_curve(bp(u_sq_norm=1.0, sigma2_eff=1e-3), GRID)
    assert np.all(np.isfinite(vals))
    i = int(np.argmin(vals))
    assert 0 < i < len(GRID) - 1


def test_optimal_q_extremes_and_brute_force():
    assert optimal_q_bound(bp(c0=0.0), GRID) == 256
    assert optimal_q_bound(bp(sigma2_eff=1e6), GRID) == 2
    for s in np.logspace(-6, 1, 15):
        p = bp(sigma2_eff=s)
        assert optimal_q_bound(p, GRID) == GRID[int(np.argmin([total_bound(p, q, warn=False) for q in GRID]))]
    with pytest.raises(ValueError):
        optimal_q_bound(bp(), [])


def test_optimal_q_ties_go_low(monkeypatch):
    monkeypatch.setattr(analysis, "bound_curve", lambda p, grid: np.array([1.0, 0.5, 0.5, 2.0]))
    assert optimal_q_bound(bp(), [2, 4, 8, 16]) == 4


@settings(max_examples=60, deadline=None)
@given(s=st.floats(1e-8, 10.0), l=st.integers(5, 60), c0=st.floats(0.01, 100))
def test_unimodal_when_balanced(s, l, c0):
    p = BoundParams(r=0.5, k=10, l=l, sigma2_eff=s, c0=c0, codebook_range=(0.0, 1.0))
    vals = bound_curve(p, GRID)
    if terms_balanced(p, GRID):
        assert is_strictly_unimodal(vals, interior=False)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(1e-6, 1.0), c0=st.floats(0.01, 10))
def test_optimal_q_monotone_in_l(s, c0):
    qs = [optimal_q_bound(BoundParams(r=0.5, k=10, l=l, sigma2_eff=s, c0=c0, codebook_range=(0.0, 1.0)), GRID)
          for l in (10, 20, 40, 60)]
    assert all(a <= b for a, b in zip(qs, qs[1:]))


def test_is_strictly_unimodal():
    assert is_strictly_unimodal([3, 2, 1, 2])
    assert not is_strictly_unimodal([1, 2, 3])
    assert is_strictly_unimodal([1, 2, 3], interior=False)
    assert not is_strictly_unimodal([3, 1, 1, 2])
    assert not is_strictly_unimodal([3, 1, 2, 1.5])
    assert not is_strictly_unimodal([])


def test_u_sq_norm_per_q():
    p = BoundParams(r=0.5, k=10, l=25, sigma2_eff=0.01, codebook_range=(0.0, 1.0))
    assert p.u_sq_norm_for(256) == pytest.approx(make_uniform_codebook(0, 1, 256).sq_norm)
    assert bp().u_sq_norm_for(256) == 10.0


def test_bound_params_validation():
    with pytest.raises(ValueError):
        bp(r=0.0)
    with pytest.raises(ValueError):
        bp(sigma2_eff=-1.0)


def test_bound_params_from_config():
    cfg = ScenarioConfig(snr_db=20.0)
    p = analysis.bound_params_for(cfg)
    assert p.r == 0.5 and p.sigma2_eff == pytest.approx(0.01)
    ant = analysis.bound_params_for(cfg.replace(snr_reference="antenna"))
    assert ant.sigma2_eff == pytest.approx(0.01 * 10 / 1024)


def test_calibrate_c0_recovers_constant():
    pts = []
    for l in (20, 30, 40):
        for q in (4, 16, 64):
            p = bp(l=l, c0=1.0)
            pts.append((p, q, total_bound(bp(l=l, c0=2.5), q, warn=False)))
    assert calibrate_c0(pts) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        calibrate_c0([(bp(), 4, float("nan"))])


def test_empirical_mse_examples():
    assert empirical_mse([0.1, 0.2], [0.1, 0.2]) == 0.0
    assert empirical_mse([1, 0], [0, 0]) == 0.5
    with pytest.raises(ValueError):
        empirical_mse([], [])
    with pytest.raises(ValueError):
        empirical_mse([1, 2], [1])


@given(a=st.lists(st.floats(-10, 10), min_size=1, max_size=20), seed=st.integers(0, 1000),
       c=st.floats(-5, 5))
def test_empirical_mse_properties(a, seed, c):
    rng = np.random.default_rng(seed)
    a = np.array(a)
    b = rng.standard_normal(a.size)
    e = rng.standard_normal(a.size)
    perm = rng.permutation(a.size)
    assert empirical_mse(a[perm], b[perm]) == pytest.approx(empirical_mse(a, b))
    assert empirical_mse(c * a, c * b) == pytest.approx(c * c * empirical_mse(a, b), abs=1e-9)
    # two-term decomposition of the error
    total = empirical_mse(a, b + e)
    assert total <= 2 * empirical_mse(a, b) + 2 * empirical_mse(np.zeros_like(e), e) + 1e-9


def test_effective_sparsity():
    assert effective_sparsity(CountVector(np.array([0, 10, 0]), 10)) == 1
    np.testing.assert_array_equal(support_sizes(np.array([[1, 1, 1], [0, 2, 1], [3, 3, 0]])), [1, 3, 2])


def test_sparsity_sweep_against_occupancy_oracle():
    rng = np.random.default_rng(11)
    means = sparsity_sweep("uniform", 10, GRID, 4000, rng)
    pdf = source_pdf("uniform")
    for q, mean in zip(GRID, means):
        probs = bin_probabilities(pdf, make_uniform_codebook(0, 1, q).levels)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        mc = occupancy_monte_carlo(probs, 10, 4000, np.random.default_rng(q)).mean()
        assert mean == pytest.approx(mc, rel=0.02)
        assert mean == pytest.approx(expected_occupancy(probs, 10), rel=0.02)
    assert means[0] == pytest.approx(2 * (1 - 2.0 ** -10), abs=0.01)


def test_sparsity_invariants():
    rng = np.random.default_rng(12)
    sup = sparsity_sweep("uniform", 10, GRID, 500, rng, per_trial=True)
    for q, s in zip(GRID, sup):
        assert s.max() <= min(10, q)
    means = sup.mean(axis=1)
    assert np.all(np.diff(means) >= 0)
    tg = sparsity_sweep("truncated_gaussian", 10, GRID, 2000, np.random.default_rng(13))
    un = sparsity_sweep("uniform", 10, GRID, 2000, np.random.default_rng(13))
    assert np.all(tg <= un + 1e-12)


def test_optimal_q_empirical_noiseless_orthogonal():
    cfg = ScenarioConfig(l=32, q=2, m=4096, snr_db=200.0, detector="matched_filter", trials=100,
                         q_grid=[2, 4, 8, 16, 32])
    q_star, recs = analysis.optimal_q_empirical(cfg)
    assert q_star == 32
    assert [r.q for r in recs] == [2, 4, 8, 16, 32]
    again, recs2 = analysis.optimal_q_empirical(cfg)
    assert [r.mse_empirical for r in recs] == [r.mse_empirical for r in recs2]
    assert all(r.trials == 100 and r.mse_bound > 0 for r in recs)
