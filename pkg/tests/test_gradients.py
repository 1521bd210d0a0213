import pytest

from gradcases import CASES, TOL, ge2e_bias_gradient, margin_zero_reduction_error, worst_error


@pytest.mark.parametrize("name", sorted(CASES))
def test_analytic_matches_finite_difference(name):
    assert worst_error(CASES[name], 100, seed=len(name)) < TOL


def test_margin_zero_reduces_to_scaled_cosine_ce():
    assert margin_zero_reduction_error(100, seed=3) < 1e-12


def test_ge2e_bias_gradient_is_zero():
    assert ge2e_bias_gradient(100, seed=4) < 1e-8
