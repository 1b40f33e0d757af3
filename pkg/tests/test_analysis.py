import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from bzmarble.analysis import (
    PeriodDetector,
    PeriodStats,
    SegmentedPeriodRegressor,
    classify_spike,
    detect_periods,
    fit_period_curve,
    fit_segment,
    period_ratio,
    remove_baseline,
    schmitt_events,
)
from bzmarble.measurement import PotentialTrace
from oracles import crossing_times, sine_samples


def _trace(values, spacing=0.1):
    return PotentialTrace(1, spacing, list(values))


def test_sine_period_50():
    _, x = sine_samples(50, 0.1, 1000)
    stats = detect_periods(_trace(x), 0.5, -0.5)
    assert abs(stats.mean_period - 50) <= 0.1
    assert stats.frequency == pytest.approx(1 / stats.mean_period)


@pytest.mark.parametrize("period", [20, 50, 200])
def test_sine_periods_relative(period):
    _, x = sine_samples(period, 0.5, 10 * period, phase=0.3)
    stats = detect_periods(_trace(x, 0.5), relative=True)
    assert abs(stats.mean_period - period) <= 0.5


def test_events_match_crossing_oracle():
    t, x = sine_samples(37, 0.25, 600, phase=1.0)
    stats = detect_periods(_trace(x, 0.25), 0.2, -0.2)
    ref = crossing_times(t, x, 0.2)
    # the oracle arms below +0.2, the detector below -0.2; both fire on the same rising edges
    assert np.allclose(stats.event_times, ref[len(ref) - stats.n_events:])


def test_constant_trace_has_no_events():
    flat = _trace([3.0] * 500)
    for stats in (detect_periods(flat, 4.0, 2.0), detect_periods(flat, relative=True)):
        assert stats.n_events == 0 and stats.mean_period is None and stats.sigma is None


def test_schmitt_needs_arming():
    assert schmitt_events([1.0, 1.0, 0.0, 1.0, 0.5, 1.0], 0.8, 0.2).tolist() == [3]
    with pytest.raises(ValueError):
        schmitt_events([0.0], 0.1, 0.2)


@given(st.floats(0.1, 100), st.integers(10, 60))
def test_relative_detection_scale_invariant(scale, period):
    _, x = sine_samples(period, 1.0, 8 * period)
    a = detect_periods(_trace(x, 1.0), relative=True)
    b = detect_periods(_trace(np.array(x) * scale, 1.0), relative=True)
    assert a.event_times.tolist() == b.event_times.tolist()


def test_detrending_recovers_period():
    t, x = sine_samples(40, 0.5, 800)
    drift = 0.01 * np.asarray(t)
    stats = detect_periods(_trace(np.asarray(x) + drift, 0.5), relative=True, detrend_window=161)
    assert abs(stats.mean_period - 40) <= 0.5
    assert remove_baseline([1.0, 1.0, 1.0], 3).tolist() == [0.0, 0.0, 0.0]


def test_period_stats_population_sigma():
    s = PeriodStats.from_events([0.0, 1.0, 3.0])
    assert s.mean_period == 1.5 and s.sigma == 0.5
    assert PeriodStats.from_events([2.0]).mean_period is None


@pytest.mark.parametrize("p,p_star,ratio", [(61, 336, 5.5), (47, 74, 1.6), (59, 126, 2.1)])
def test_period_ratio_table_rows(p, p_star, ratio):
    r = period_ratio(PeriodStats.from_events([0, p]), PeriodStats.from_events([0, p_star]))
    assert round(r, 1) == ratio


def test_period_ratio_identity_and_missing():
    s = PeriodStats.from_events([0, 2, 4])
    assert period_ratio(s, s) == 1.0
    with pytest.raises(ValueError):
        period_ratio(s, PeriodStats.from_events([]))


def _lobe(n, center, width, amp):
    k = np.arange(n)
    return amp * np.exp(-0.5 * ((k - center) / width) ** 2)


def test_classify_flat():
    assert classify_spike(_trace(np.zeros(100)), 1.0).classification == "flat"
    assert classify_spike(_trace(0.5 * np.sin(np.arange(100))), 1.0).classification == "flat"


def test_classify_biphasic():
    x = _lobe(400, 100, 10, 50) - _lobe(400, 300, 10, 50)
    shape = classify_spike(_trace(x), 5.0)
    assert shape.classification == "biphasic"
    assert shape.leading == "+"
    assert shape.peak_to_trough_interval == pytest.approx(20.0)


def test_classify_action_like():
    x = _lobe(200, 80, 8, 50) - _lobe(200, 105, 10, 30)
    shape = classify_spike(_trace(x), 3.0)
    assert shape.classification == "action-like"
    assert classify_spike(_trace(-x), 3.0).classification == "action-like"


def test_classify_monophasic():
    assert classify_spike(_trace(_lobe(100, 50, 5, 10)), 1.0).classification == "monophasic"


def test_fit_collinear_and_cubic():
    phi = np.array([0.01, 0.02, 0.03, 0.04, 0.05])
    assert fit_segment(phi, 3 + 20 * phi).linear_r2 == pytest.approx(1.0, abs=1e-12)
    x = np.array([0.05, 0.055, 0.06, 0.065, 0.07])
    fit = fit_segment(x, x**3)
    assert fit.cubic_r2 == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(fit.cubic_coeffs, [1, 0, 0, 0], atol=1e-8)


def test_fit_period_curve_split_and_errors():
    pts = [(0.01 * k, 2 + 0.1 * k) for k in range(1, 8)]
    low, high = fit_period_curve(pts)
    assert low.n_points == 5 and high.n_points == 3
    with pytest.raises(ValueError):
        fit_period_curve(pts[:1] + pts[5:])


def test_period_detector_estimator():
    rows = [sine_samples(p, 1.0, 400)[1] for p in (20, 40)]
    det = PeriodDetector(sample_spacing=1.0)
    out = det.fit_transform(np.array(rows))
    assert out.shape == (2, 4)
    assert np.allclose(out[:, 0], [20, 40], atol=1.0)
    assert list(det.get_feature_names_out()) == ["mean_period", "sigma", "n_events", "frequency"]
    assert clone(det).get_params() == det.get_params()


def test_constant_row_gives_nan_period():
    out = PeriodDetector().fit_transform(np.ones((1, 50)))
    assert np.isnan(out[0, 0]) and out[0, 2] == 0


def test_segmented_regressor():
    phi = np.array([0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07])
    y = np.where(phi <= 0.05, 2 + 10 * phi, 2.5 + 2000 * (phi - 0.05) ** 3 + 10 * (phi - 0.05))
    model = make_pipeline(SegmentedPeriodRegressor()).fit(phi.reshape(-1, 1), y)
    assert np.allclose(model.predict(phi.reshape(-1, 1)), y, atol=1e-9)
    assert model.score(phi.reshape(-1, 1), y) == pytest.approx(1.0)
