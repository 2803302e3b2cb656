import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bandsparse.dictionary import DPSS, NARROWBAND, WIDEBAND, BandGrid, SamplingScheme
from bandsparse.solve import SolveResult
from bandsparse.zoom import (
    ExtrapolationWarning,
    StageSpec,
    ZoomPlan,
    band_ratio,
    cluster_cells,
    cluster_midpoint,
    feasible_bands,
    ratio_threshold,
    recommend_bands,
    run_zoom,
    select_active_bands,
    split_bands,
)
from bandsparse.sim.metrics import covered
from bandsparse.sim.signals import generate_signal, random_signal, SignalSpec


def result_with(coef):
    coef = np.asarray(coef, dtype=complex)
    return SolveResult(coef, np.empty(0, dtype=int), 1, 0.0, True)


# -- plans

def test_stage_validation():
    with pytest.raises(ValueError):
        StageSpec(1, WIDEBAND)
    with pytest.raises(ValueError):
        StageSpec(4, "bogus")
    with pytest.raises(ValueError):
        ZoomPlan(())
    with pytest.raises(ValueError):
        ZoomPlan.simple([4], solver="omp")


def test_simple_plan_repeats_last_alpha():
    plan = ZoomPlan.simple([10, 5, 4], alpha=[0.2, 0.4])
    assert [s.alpha for s in plan.stages] == [0.2, 0.4, 0.4]
    assert plan.resolution() == pytest.approx(1 / 200)


# -- active bands and splitting

def test_select_active_bands():
    grid = BandGrid.uniform(4)
    assert select_active_bands(result_with(np.zeros(4)), grid).size == 0
    assert list(select_active_bands(result_with([0, 1.0, 1e-6, 0]), grid)) == [1]
    assert list(select_active_bands(result_with([0.5, 1.0, 0, 0]), grid, 1e-3)) == [0, 1]


def test_split_single_band():
    g = split_bands([(0.0, 0.5)], 5)
    np.testing.assert_allclose(g.edges(), [0, 0.1, 0.2, 0.3, 0.4, 0.5], atol=1e-15)


def test_split_adjacent_bands_share_edge():
    g = split_bands([(0.25, 0.5), (0.0, 0.25)], 2)
    edges = g.edges()
    assert edges.size == 5
    assert np.sum(edges == 0.25) == 1
    np.testing.assert_array_equal(g.lo[1:], g.hi[:-1])


@given(st.floats(0, 0.9), st.floats(1e-4, 0.1), st.integers(2, 50))
def test_children_partition_parent(lo, width, B):
    hi = lo + width
    g = split_bands([(lo, hi)], B)
    assert g.lo[0] == lo and g.hi[-1] == hi
    np.testing.assert_array_equal(g.lo[1:], g.hi[:-1])
    assert g.widths.sum() == pytest.approx(width, rel=1e-12)


def test_split_rejects_single_child():
    with pytest.raises(ValueError):
        split_bands([(0.0, 1.0)], 1)


# -- clustering

def test_clusters_wrap_around_torus():
    lo = np.array([[0.0], [0.5], [0.9]])
    hi = np.array([[0.1], [0.6], [1.0]])
    groups = sorted(sorted(g.tolist()) for g in cluster_cells(lo, hi))
    assert groups == [[0, 2], [1]]
    mid = cluster_midpoint(lo[[0, 2]], hi[[0, 2]])
    assert mid[0] == pytest.approx(0.0, abs=1e-12) or mid[0] == pytest.approx(1.0)


def test_clusters_in_two_dimensions_touch_at_corners():
    lo = np.array([[0.1, 0.1], [0.2, 0.2], [0.6, 0.6]])
    hi = np.array([[0.2, 0.2], [0.3, 0.3], [0.7, 0.7]])
    assert len(cluster_cells(lo, hi)) == 2


# -- band ratio design rule

def test_band_ratio_examples():
    assert band_ratio(20, 100) == 0.675
    assert band_ratio(4, 50) == pytest.approx(0.569816, abs=1e-15)


def test_band_ratio_flags_extrapolation():
    with pytest.warns(ExtrapolationWarning):
        band_ratio(2, 100)
    with pytest.warns(ExtrapolationWarning):
        band_ratio(20, 1000)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        band_ratio(50, 300)


def test_recommend_single_stage_low_end_infeasible():
    assert band_ratio(4, 100) < 0.81
    ok = feasible_bands(100, 1)
    assert ok and 4 not in ok
    exhaustive = [B for B in range(4, 101) if band_ratio(B, 100) > 0.81]
    assert ok == exhaustive
    assert recommend_bands(100, 1) == max(exhaustive)
    assert recommend_bands(100, 1, "smallest") == min(exhaustive)


def test_recommend_two_stage_threshold():
    assert ratio_threshold(2) == 0.66 and ratio_threshold(1) == 0.81
    B = recommend_bands(300, 2)
    assert band_ratio(B, 300) > 0.66


@pytest.mark.parametrize("N", [50, 100, 200, 500])
@pytest.mark.parametrize("stages", [1, 2, 3])
def test_recommend_never_below_threshold(N, stages):
    for which in ("largest", "smallest"):
        try:
            B = recommend_bands(N, stages, which)
        except ValueError:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtrapolationWarning)
            assert band_ratio(B, N) > ratio_threshold(stages)


def test_recommend_reports_infeasible():
    with pytest.raises(ValueError):
        recommend_bands(2000, 1)


# -- full pipeline

def test_zoom_single_on_grid_tone():
    N = 64
    scheme = SamplingScheme.uniform(N)
    y = np.exp(2j * np.pi * 0.375 * scheme.times[0])
    res = run_zoom(y, scheme, ZoomPlan.simple([8, 8]))
    assert res.model_order == 1
    chain_ok = [bool(covered([0.375], s.lo, s.hi)[0]) for s in res.stages]
    assert all(chain_ok)
    assert res.frequencies[0, 0] == pytest.approx(0.375, abs=1 / 64)
    assert abs(res.amplitudes[0]) == pytest.approx(1.0, rel=0.05)


def test_zoom_pure_noise_above_lambda_max(rng):
    scheme = SamplingScheme.uniform(40)
    y = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    res = run_zoom(y, scheme, ZoomPlan.simple([10, 5], alpha=1.01))
    assert res.model_order == 0
    assert res.frequencies.shape == (0, 1)
    assert res.amplitudes.size == 0


def test_zoom_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        run_zoom(np.ones(10), SamplingScheme.uniform(12), ZoomPlan.simple([4]))


def test_zoom_two_dimensional_tensor_input():
    scheme = SamplingScheme.uniform(12, 10)
    spec = SignalSpec([[0.31, 0.62]], [1.0])
    y = generate_signal(spec, scheme)
    Y = y.reshape(scheme.shape, order="F")
    res = run_zoom(Y, scheme, ZoomPlan.simple([6, 4]))
    assert res.model_order == 1
    assert covered(spec.frequencies, res.final_lo, res.final_hi).all()


def test_zoom_dpss_and_narrowband_stages():
    scheme = SamplingScheme.uniform(48)
    y = np.exp(2j * np.pi * 0.6 * scheme.times[0])
    for kinds in ([DPSS, DPSS], [WIDEBAND, NARROWBAND]):
        res = run_zoom(y, scheme, ZoomPlan.simple([12, 6], kinds))
        assert res.model_order >= 1
        assert covered([0.6], res.final_lo, res.final_hi)[0]


def test_zoom_spice_solver():
    scheme = SamplingScheme.uniform(48)
    y = np.exp(2j * np.pi * 0.2 * scheme.times[0])
    res = run_zoom(y, scheme, ZoomPlan.simple([12, 4], solver="spice"))
    assert covered([0.2], res.final_lo, res.final_hi)[0]
    assert res.stages[0].lam is None


def test_zoom_final_solve_option():
    scheme = SamplingScheme.uniform(64)
    y = np.exp(2j * np.pi * 0.375 * scheme.times[0])
    res = run_zoom(y, scheme, ZoomPlan.simple([8, 8], final_solve=True))
    assert res.model_order == 1


def test_zoom_result_json():
    scheme = SamplingScheme.uniform(32)
    y = np.exp(2j * np.pi * 0.1 * scheme.times[0])
    res = run_zoom(y, scheme, ZoomPlan.simple([8, 4]))
    data = json.loads(res.to_json())
    assert data["model_order"] == res.model_order
    assert len(data["stages"]) == 2
    assert data["op_count"] == sum(s["ops"] for s in data["stages"])


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_surviving_bands_nest_and_contain_truth(seed, K):
    r = np.random.default_rng(seed)
    N = 64
    scheme = SamplingScheme.uniform(N)
    spec = random_signal(K, r, min_spacing=4 / N)
    y = generate_signal(spec, scheme)
    plan = ZoomPlan.simple([16, 4])
    res = run_zoom(y, scheme, plan)
    first, last = res.stages[0], res.stages[-1]
    for lo, hi in zip(last.lo, last.hi):
        assert np.any(np.all((first.lo <= lo + 1e-15) & (hi <= first.hi + 1e-15), axis=1))
    for f in res.frequencies:
        assert covered([f], last.lo, last.hi)[0]
    assert covered(spec.frequencies, first.lo, first.hi).all()
    again = run_zoom(y, scheme, plan)
    np.testing.assert_array_equal(again.final_lo, res.final_lo)
    np.testing.assert_array_equal(again.final_hi, res.final_hi)


def test_on_grid_ensemble_keeps_every_true_frequency():
    # B1 = 32 at N = 64 clears the two-stage ratio threshold; tones sit on
    # final-cell centres at least 2/N apart
    N = 64
    scheme = SamplingScheme.uniform(N)
    plan = ZoomPlan.simple([32, 4])
    assert band_ratio(32, N) > ratio_threshold(2)
    r = np.random.default_rng(2024)
    for _ in range(100):
        K = int(r.integers(1, 4))
        while True:
            f = (np.sort(r.choice(128, size=K, replace=False)) + 0.5) / 128
            spec = SignalSpec(f[:, None], np.exp(2j * np.pi * r.random(K)))
            try:
                spec = SignalSpec(f[:, None], spec.amplitudes, min_spacing=2 / N)
                break
            except ValueError:
                continue
        res = run_zoom(generate_signal(spec, scheme), scheme, plan)
        assert covered(spec.frequencies, res.final_lo, res.final_hi).all()
