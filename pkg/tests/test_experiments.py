import math

import numpy as np
import pytest

from bzmarble.analysis import detect_periods
from bzmarble.experiments import (
    SnapshotRecorder,
    calibrate_phi_for_ratio,
    run_cooling_cycle,
    run_phi_sweep,
    sweep_point,
)
from bzmarble.geometry import RectDomain, make_annulus_mask
from bzmarble.measurement import ElectrodePair
from bzmarble.schedule import PhiSchedule
from oracles import crossing_times

MASK = make_annulus_mask(60, 40)
ELECTRODES = ElectrodePair(RectDomain(48, 2, 53, 15), RectDomain(67, 2, 72, 15))
SMALL = dict(mask=MASK, electrodes=ELECTRODES, step_cap=40000, min_events=4)


def test_held_source_emits_a_train():
    point = sweep_point(0.05, keep_trace=True, **SMALL)
    assert point.status == "ok"
    assert point.stats.n_events >= 4
    # independent crossing count on the same trace
    trace = point.trace
    x = trace.values
    level = np.median(x) + 0.4 * (x.max() - np.median(x))
    ref = crossing_times(trace.times, x, level)
    assert len(ref) >= point.stats.n_events + 2
    assert np.mean(np.diff(ref[2:])) == pytest.approx(point.mean_period, abs=trace.sample_spacing)


def test_no_oscillation_is_reported_not_raised():
    point = sweep_point(0.05, mask=MASK, electrodes=ELECTRODES, step_cap=2000, min_events=4)
    assert point.status == "no sustained oscillation"
    assert point.mean_period is None


def test_parallel_sweep_is_ordered_and_identical():
    phis = [0.05, 0.02]
    serial = run_phi_sweep(phis, workers=1, **SMALL)
    parallel = run_phi_sweep(phis, workers=2, **SMALL)
    assert [p.phi for p in parallel] == phis
    for a, b in zip(serial, parallel):
        assert a.stats.event_times.tobytes() == b.stats.event_times.tobytes()
    assert serial[0].mean_period > serial[1].mean_period


def test_cooling_segments():
    sched = PhiSchedule.steps([(0, 0.02), (15000, 0.05)], stop=35000)
    res = run_cooling_cycle(sched, mask=MASK, electrodes=ELECTRODES, snapshot_stride=5000)
    assert len(res.stats) == 2 and res.segment_status == ["ok", "ok"]
    assert res.stats[1].mean_period > res.stats[0].mean_period
    assert [k for k, _ in res.snapshots] == list(range(5000, 35001, 5000))
    assert res.metadata["n_steps"] == 35000


def test_constant_schedule_segments_agree():
    sched = PhiSchedule.steps([(0, 0.03), (12000, 0.03), (24000, 0.03)], stop=36000)
    res = run_cooling_cycle(sched, mask=MASK, electrodes=ELECTRODES)
    means = [s.mean_period for s in res.stats[1:]]
    assert abs(means[0] - means[1]) <= 2 * res.trace.sample_spacing


def test_short_segment_flagged():
    sched = PhiSchedule.steps([(0, 0.03), (10000, 0.05)], stop=10500)
    res = run_cooling_cycle(sched, mask=MASK, electrodes=ELECTRODES)
    assert res.segment_status[1] == "insufficient events"


def test_cooling_matches_constant_run():
    # a constant-phi segment replays exactly like a constant run from the same state
    sched = PhiSchedule.steps([(0, 0.03), (10000, 0.04)], stop=20000)
    res = run_cooling_cycle(sched, mask=MASK, electrodes=ELECTRODES)
    const = run_cooling_cycle(PhiSchedule.constant(0.03), n_steps=10000, mask=MASK, electrodes=ELECTRODES)
    assert res.trace.samples[:1000] == const.trace.samples


def test_snapshot_recorder_stride():
    with pytest.raises(ValueError):
        SnapshotRecorder(MASK, 0)


def _fake_period(phi):
    # convex, monotone stand-in for the simulated curve
    return 1.0 - math.log(0.09 - phi)


def test_calibration_identity():
    cal = calibrate_phi_for_ratio(1.0, 0.03, period_fn=_fake_period)
    assert cal.phi_high == 0.03 and cal.ratio == 1.0


def test_calibration_hits_target_and_is_monotone():
    highs = []
    for target in (1.1, 1.2, 1.35):
        cal = calibrate_phi_for_ratio(target, 0.03, period_fn=_fake_period)
        assert abs(cal.ratio / target - 1) <= 0.05
        assert 0.03 < cal.phi_high <= 0.08
        highs.append(cal.phi_high)
    assert highs == sorted(highs)


def test_calibration_unreachable_reports_range():
    with pytest.raises(ValueError, match="ratios up to"):
        calibrate_phi_for_ratio(5.0, 0.03, period_fn=lambda phi: 2.0 + phi)
    with pytest.raises(ValueError):
        calibrate_phi_for_ratio(0.5, 0.03, period_fn=_fake_period)
