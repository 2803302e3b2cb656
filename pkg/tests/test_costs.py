from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from bandsparse.costs import admm_cost, pipeline_cost, relative_complexity, stage_columns, zoom_budget


def test_admm_cost_small_dictionary():
    assert admm_cost(100, 2) == 8 + 101 * 4 + 200 == 612


def test_admm_cost_overcomplete_branch():
    N, P = 100, 1000
    assert admm_cost(N, P) == N**3 + 3 * P * N**2 + P * N + P**2


def test_admm_cost_tie_uses_gram_branch():
    assert admm_cost(50, 50) == 50**3 + 51 * 50**2 + 50 * 50


def test_admm_cost_branches_same_order_near_tie():
    low, high = admm_cost(100, 100), admm_cost(100, 101)
    assert 0.1 < high / low < 10


def test_admm_cost_rejects_nonpositive():
    with pytest.raises(ValueError):
        admm_cost(0, 3)


@pytest.mark.parametrize("bands, printed", [((20, 5), "0.001"), ((20, 40), "0.015"),
                                            ((10, 10, 5), "0.001")])
def test_table_one_rows(bands, printed):
    value = relative_complexity(1000, 200, 2, bands)
    digits = len(printed.split(".")[1])
    assert abs(value - float(printed)) <= 10 ** -digits
    assert f"{value:.{digits}f}" == printed


def test_stage_columns_multiply_by_survivors():
    assert stage_columns([20, 5], 2) == [20, 10]
    assert stage_columns([7, 7], 2, dims=2) == [49, 98]
    assert pipeline_cost(200, [20, 5], 2) == admm_cost(200, 20) + admm_cost(200, 10)


def test_budget_grid_near_one_nanometre_scale():
    b = zoom_budget(1000, 100, 5, 0.667, 4)
    assert 1e-10 < b.grid < 1e-8
    assert b.narrowband_grid == pytest.approx(1e-3)
    assert b.respected
    assert b.fraction < 1


def test_budget_first_stage_cost():
    N = 100
    assert zoom_budget(1000, N, 5, 0.5, 1).first_stage_cost == 2 * (N**3 + N**2)


def test_budget_rejects_eta():
    with pytest.raises(ValueError):
        zoom_budget(1000, 100, 5, 1.0, 2)


@given(st.integers(2, 400), st.integers(0, 2000))
def test_budget_residual_positive_when_overcomplete(N, extra):
    P = N + extra
    c1 = Fraction(N**3 + 3 * P * N**2 + P**2 + P * N)
    c2 = Fraction(2 * (N**3 + N**2))
    assert c1 - c2 > 0
    assert zoom_budget(P, N, 1, 0.5, 1).residual > 0
