import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_panel
from oracles import partial_corr_by_regression
from leadlag.errors import EstimatorUndefined, SingularDenominatorError, ValidationError
from leadlag.pca import (build_variation_matrix, partial_correlation, partial_correlation_matrix,
                         run_pca)


def test_shifted_copy_aligns_columns():
    rng = np.random.default_rng(0)
    f1 = 20000 + rng.integers(-2, 3, 50).cumsum()
    f2 = np.concatenate(([f1[0]], f1[:-1])) + 10
    m = build_variation_matrix(make_panel(np.column_stack([f1, f2])))
    assert np.array_equal(m.values[:, 0], m.values[:, 1])


def test_constant_prices_give_zero_matrix():
    m = build_variation_matrix(make_panel(np.full((10, 4), 20000)))
    assert not m.values.any()
    with pytest.raises(EstimatorUndefined):
        run_pca(m)


def test_hand_built_five_tick_panel():
    # bid ticks, spread 1 => mid = 0.2 * bid + 0.1
    bid = np.array([[100, 200], [101, 200], [103, 201], [102, 203], [102, 202]])
    m = build_variation_matrix(make_panel(bid))
    expected = np.array([[0.2, 0.2], [0.4, 0.4], [-0.2, -0.2]])
    assert m.values.shape == (3, 2)
    assert np.allclose(m.values, expected, atol=1e-12)


def test_too_few_ticks():
    with pytest.raises(ValidationError):
        build_variation_matrix(make_panel(np.full((2, 4), 1)))
    with pytest.raises(ValidationError):
        run_pca(np.ones((4, 4)))


def test_rank_one_case():
    rng = np.random.default_rng(1)
    common = rng.normal(size=200)
    res = run_pca(np.column_stack([common] * 4))
    assert np.allclose(res.explained_ratio, [1, 0, 0, 0], atol=1e-12)
    assert np.allclose(res.components[0], 0.5, atol=1e-12)
    assert np.allclose(res.pc1_rescaled, 1.0)


def test_independent_noise_spreads_evenly():
    res = run_pca(np.random.default_rng(2).normal(size=(100_000, 4)))
    assert np.all(np.abs(res.explained_ratio - 0.25) < 0.03)


def test_pca_invariants():
    x = np.random.default_rng(3).normal(size=(300, 4)) @ np.array(
        [[1, 0.5, 0.2, 0], [0, 1, 0.3, 0.1], [0, 0, 1, 0.4], [0, 0, 0, 1]])
    res = run_pca(x)
    assert abs(res.explained_ratio.sum() - 1) < 1e-9
    assert np.all(np.diff(res.explained_ratio) <= 0)
    assert np.allclose(res.components @ res.components.T, np.eye(4), atol=1e-9)
    assert res.components[0, 0] > 0 and res.pc1_rescaled[0] == 1
    assert np.allclose(res.inverse_transform(res.transform(x)), x, atol=1e-9)
    shifted = run_pca(x + np.array([5.0, -3.0, 100.0, 0.1]))
    assert np.allclose(np.abs(shifted.components), np.abs(res.components), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ratios_sum_to_one(seed):
    x = np.random.default_rng(seed).integers(-3, 4, size=(40, 4)).astype(float)
    if not x.std(axis=0).any():
        return
    assert abs(run_pca(x).explained_ratio.sum() - 1) < 1e-9


def test_partial_correlation_examples():
    assert partial_correlation(0.4, 0.0, 0.0) == 0.4
    assert partial_correlation(0.3 * 0.5, 0.3, 0.5) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(SingularDenominatorError):
        partial_correlation(0.2, 1.0, 0.3)
    with pytest.raises(ValidationError):
        partial_correlation(1.2, 0.1, 0.1)


def _gaussian_triple(r_ij, r_i1, r_j1, n, seed):
    cov = np.array([[1, r_i1, r_j1], [r_i1, 1, r_ij], [r_j1, r_ij, 1]])
    z = np.random.default_rng(seed).multivariate_normal(np.zeros(3), cov, size=n)
    return z[:, 1], z[:, 2], z[:, 0]


def test_table_triple_against_simulation():
    a, b, z = _gaussian_triple(0.20, 0.29, 0.28, 200_000, 4)
    simulated = partial_corr_by_regression(a, b, z)
    assert partial_correlation(0.20, 0.29, 0.28, textbook=True) == pytest.approx(simulated, abs=2e-2)
    # the default form differs from the textbook one only at second order here
    assert partial_correlation(0.20, 0.29, 0.28) == pytest.approx(simulated, abs=2e-2)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.integers(0, 1000))
def test_textbook_form_matches_regression(r_ij, r_i1, r_j1, seed):
    det = 1 - r_ij ** 2 - r_i1 ** 2 - r_j1 ** 2 + 2 * r_ij * r_i1 * r_j1
    if det < 0.05:
        return
    a, b, z = _gaussian_triple(r_ij, r_i1, r_j1, 20_000, seed)
    ca = np.corrcoef([z, a, b])
    got = partial_correlation(ca[1, 2], ca[0, 1], ca[0, 2], textbook=True)
    assert got == pytest.approx(partial_corr_by_regression(a, b, z), abs=1e-9)


def test_partial_matrix_shape_and_diagonal(tuned_day):
    _, panel = tuned_day
    m = build_variation_matrix(panel)
    out = partial_correlation_matrix(m)
    assert out.shape == (3, 3) and np.all(np.diag(out) == 1)
    assert np.allclose(out, out.T)
    assert np.all(np.abs(out) <= 1)
