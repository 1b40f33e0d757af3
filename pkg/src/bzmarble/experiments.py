"""Scenario runners: single-wave spike shapes, the phi sweep on an annulus
with a held source, freeze/thaw schedules and their calibration."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from bzmarble.analysis import PeriodStats, SpikeShape, classify_spike, detect_periods, period_ratio
from bzmarble.core import IntegratorConfig, OregonatorParams, SimState, integrate, resting_state
from bzmarble.geometry import (
    Mask,
    RectDomain,
    StimulusMode,
    StimulusSite,
    default_electrodes,
    edge_site,
    make_annulus_mask,
    make_disc_mask,
    stimulate,
)
from bzmarble.io import snapshot_levels
from bzmarble.measurement import ElectrodePair, PotentialRecorder, PotentialTrace
from bzmarble.schedule import PhiSchedule, Segment

DISPLAY_THRESHOLD = 0.04
STEP_CAP = 100_000

# spike-shape scenario
DISC_RADIUS = 185
SPIKE_NOISE_BAND = 5.0

# phi sweep / cooling scenarios: annulus with a held source at the eastern rim
ANNULUS_OUTER = 185
ANNULUS_INNER = 150
SOURCE_RADIUS = 6
SOURCE_COMPASS = "E"
SWEEP_MIN_EVENTS = 5
SWEEP_DISCARD_EVENTS = 2
SWEEP_STEP_CAP = 200_000

# freeze/thaw calibration: phi_high found by `bzmarble calibrate` for p*/p = 2.1
CALIBRATED_PHI_LOW = 0.03
CALIBRATED_PHI_HIGH = 0.070625
COOLING_LOW_STEPS = 30_000
COOLING_HIGH_STEPS = 60_000


@dataclass
class ScenarioResult:
    """Trace, display snapshots and period statistics of one scenario.

    ``snapshots`` holds ``(iteration, image)`` pairs where ``image`` is the
    uint8 graymap of :func:`bzmarble.io.snapshot_levels`. ``stats`` has one
    entry per schedule segment. ``metadata`` echoes the configuration.
    """

    trace: PotentialTrace
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    stats: list[PeriodStats] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    classification: SpikeShape | None = None
    segment_status: list[str] = field(default_factory=list)
    final_state: SimState | None = None


class SnapshotRecorder:
    """Observer keeping thresholded graymap images every ``stride`` steps."""

    def __init__(self, mask: Mask, stride: int, threshold: float = DISPLAY_THRESHOLD):
        if stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        self.mask = mask
        self.stride = int(stride)
        self.threshold = threshold
        self.frames: list[tuple[int, np.ndarray]] = []

    def __call__(self, state: SimState) -> None:
        self.frames.append((state.iteration, snapshot_levels(state.u, self.mask, self.threshold)))


def spike_electrodes(mask: Mask) -> ElectrodePair:
    """Default pair for the spike-shape disc: rows just north of centre."""
    west, east = default_electrodes(mask)
    return ElectrodePair(west, east)


def sweep_electrodes(mask: Mask) -> ElectrodePair:
    """Default pair for the annulus: top rows, inside the excitable ring."""
    west, east = default_electrodes(mask, top=1)
    return ElectrodePair(west, east)


def _echo(**kw) -> dict:
    out = {}
    for key, value in kw.items():
        if hasattr(value, "__dataclass_fields__"):
            value = asdict(value)
        elif isinstance(value, PhiSchedule):
            value = {"segments": value.to_pairs(), "stop": value.stop}
        out[key] = value
    return out


def _run(
    state: SimState,
    params: OregonatorParams,
    cfg: IntegratorConfig,
    mask: Mask,
    schedule: PhiSchedule | None,
    observers: list,
    step_cap: int,
    chunk: int,
    done: Callable[[SimState], bool] | None = None,
) -> SimState:
    while state.iteration < step_cap:
        n = min(chunk, step_cap - state.iteration)
        state = integrate(state, params, cfg, mask, schedule, n, observers)
        if done is not None and done(state):
            break
    return state


def run_spike_shape(
    origin: str,
    params: OregonatorParams | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    radius: int = DISC_RADIUS,
    electrodes: ElectrodePair | None = None,
    site_radius: int = 3,
    record_stride: int = 10,
    snapshot_stride: int = 150,
    step_cap: int = STEP_CAP,
    noise_band: float = SPIKE_NOISE_BAND,
    mirror: bool = False,
) -> ScenarioResult:
    """One wave launched from the rim of a fully excitable disc.

    Runs until no node is above the display threshold (the wave has
    annihilated at the far rim) or ``step_cap``. ``mirror=True`` reflects
    mask and stimulus across the vertical axis while keeping the
    electrodes in place.
    """
    params = params or OregonatorParams()
    cfg = cfg or IntegratorConfig()
    mask = make_disc_mask(radius)
    electrodes = electrodes or spike_electrodes(mask)
    site = edge_site(mask, origin, site_radius)
    if mirror:
        mask = mask.mirrored()
        site = site.mirrored(mask.width)
    state = stimulate(resting_state(mask, params), site, mask)

    recorder = PotentialRecorder(electrodes, mask, record_stride, cfg.dt)
    snaps = SnapshotRecorder(mask, snapshot_stride)

    def annihilated(s: SimState) -> bool:
        return not np.any(s.u[mask.in_domain] > DISPLAY_THRESHOLD)

    chunk = math.lcm(record_stride, snapshot_stride, 500)
    final = _run(state, params, cfg, mask, None, [recorder, snaps], step_cap, chunk, annihilated)
    trace = recorder.trace
    shape = classify_spike(trace, noise_band)
    meta = _echo(
        scenario="spike-shape", origin=origin, params=params, integrator=cfg, radius=radius,
        electrodes=electrodes, site=asdict(site) | {"mode": site.mode.value},
        record_stride=record_stride, snapshot_stride=snapshot_stride, step_cap=step_cap,
        noise_band=noise_band, mirror=mirror, iterations=final.iteration,
    )
    return ScenarioResult(trace, snaps.frames, [detect_periods(trace, relative=True)], meta, shape, [], final)


def sweep_geometry() -> tuple[Mask, StimulusSite]:
    """Default annulus and held source of the sweep and cooling scenarios."""
    mask = make_annulus_mask(ANNULUS_OUTER, ANNULUS_INNER)
    return mask, edge_site(mask, SOURCE_COMPASS, SOURCE_RADIUS, StimulusMode.HELD)


def _held_setup(params, mask, site, electrodes):
    if mask is None:
        mask, default_site = sweep_geometry()
        site = site or default_site
    elif site is None:
        site = edge_site(mask, SOURCE_COMPASS, SOURCE_RADIUS, StimulusMode.HELD)
    electrodes = electrodes or sweep_electrodes(mask)
    electrodes.validate(mask)
    state = stimulate(resting_state(mask, params), site, mask)
    return mask, site, electrodes, state


@dataclass
class SweepPoint:
    phi: float
    stats: PeriodStats
    status: str  # "ok" or "no sustained oscillation"
    iterations: int
    trace: PotentialTrace | None = None

    @property
    def mean_period(self) -> float | None:
        return self.stats.mean_period


def _settled_stats(trace: PotentialTrace, discard: int) -> PeriodStats:
    stats = detect_periods(trace, relative=True)
    return PeriodStats.from_events(stats.event_times[discard:])


def sweep_point(
    phi: float,
    params: OregonatorParams | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    mask: Mask | None = None,
    site: StimulusSite | None = None,
    electrodes: ElectrodePair | None = None,
    record_stride: int = 10,
    min_events: int = SWEEP_MIN_EVENTS,
    discard_events: int = SWEEP_DISCARD_EVENTS,
    step_cap: int = SWEEP_STEP_CAP,
    chunk: int = 5000,
    keep_trace: bool = False,
) -> SweepPoint:
    """Held-source annulus at constant ``phi``, run until ``min_events``
    settled events (after dropping the first ``discard_events``)."""
    params = (params or OregonatorParams()).with_phi(phi)
    cfg = cfg or IntegratorConfig()
    mask, site, electrodes, state = _held_setup(params, mask, site, electrodes)
    recorder = PotentialRecorder(electrodes, mask, record_stride, cfg.dt)

    def enough(_state):
        return detect_periods(recorder.trace, relative=True).n_events >= min_events + discard_events

    chunk = math.lcm(chunk, record_stride)
    final = _run(state, params, cfg, mask, None, [recorder], step_cap, chunk, enough)
    stats = _settled_stats(recorder.trace, discard_events)
    status = "ok" if stats.mean_period is not None else "no sustained oscillation"
    return SweepPoint(float(phi), stats, status, final.iteration, recorder.trace if keep_trace else None)


def run_phi_sweep(
    phi_values: Sequence[float],
    params: OregonatorParams | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    workers: int = 1,
    **kwargs,
) -> list[SweepPoint]:
    """One :func:`sweep_point` per phi, returned in input order.

    ``workers > 1`` runs points in separate processes; every point owns its
    state, so results do not depend on scheduling.
    """
    phis = [float(p) for p in phi_values]
    if workers <= 1 or len(phis) <= 1:
        return [sweep_point(p, params, cfg, **kwargs) for p in phis]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(sweep_point, p, params, cfg, **kwargs) for p in phis]
        return [f.result() for f in futures]


def run_cooling_cycle(
    schedule: PhiSchedule,
    params: OregonatorParams | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    n_steps: int | None = None,
    mask: Mask | None = None,
    site: StimulusSite | None = None,
    electrodes: ElectrodePair | None = None,
    record_stride: int = 10,
    snapshot_stride: int | None = None,
    settle_fraction: float = 0.3,
) -> ScenarioResult:
    """Held-source annulus driven by a phi program.

    Per-segment statistics use the events falling in the last
    ``1 - settle_fraction`` of each segment; fewer than two such events
    marks the segment ``"insufficient events"``.
    """
    params = params or OregonatorParams()
    cfg = cfg or IntegratorConfig()
    n_steps = n_steps if n_steps is not None else schedule.stop
    if n_steps is None:
        raise ValueError("n_steps is required when the schedule has no stop")
    if not 0 <= settle_fraction < 1:
        raise ValueError("settle_fraction must be in [0, 1)")
    mask, site, electrodes, state = _held_setup(params.with_phi(schedule.phi_at(0)), mask, site, electrodes)
    recorder = PotentialRecorder(electrodes, mask, record_stride, cfg.dt)
    observers = [recorder]
    snaps = None
    if snapshot_stride:
        snaps = SnapshotRecorder(mask, snapshot_stride)
        observers.append(snaps)
    final = integrate(state, params, cfg, mask, schedule, n_steps, observers)

    trace = recorder.trace
    all_events = detect_periods(trace, relative=True).event_times
    stats, status = [], []
    for start, stop in schedule.boundaries(n_steps):
        t0 = (start + settle_fraction * (stop - start)) * cfg.dt
        t1 = stop * cfg.dt
        seg = PeriodStats.from_events(all_events[(all_events >= t0) & (all_events < t1)])
        stats.append(seg)
        status.append("ok" if seg.mean_period is not None else "insufficient events")
    meta = _echo(
        scenario="cooling-cycle", params=params, integrator=cfg, schedule=schedule, n_steps=n_steps,
        site=asdict(site) | {"mode": site.mode.value}, electrodes=electrodes, record_stride=record_stride, settle_fraction=settle_fraction,
    )
    return ScenarioResult(trace, snaps.frames if snaps else [], stats, meta, None, status, final)


@dataclass
class Calibration:
    phi_low: float
    phi_high: float
    ratio: float
    history: list[tuple[float, float]] = field(default_factory=list)


def calibrate_phi_for_ratio(
    target_ratio: float,
    phi_low: float,
    params: OregonatorParams | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    phi_max: float = 0.08,
    rel_tol: float = 0.05,
    phi_tol: float = 1e-4,
    period_fn: Callable[[float], float | None] | None = None,
    **sweep_kwargs,
) -> Calibration:
    """Bisect ``phi_high`` in ``(phi_low, phi_max]`` until the sweep period
    ratio ``p(phi_high) / p(phi_low)`` is within ``rel_tol`` of the target.

    A phi without sustained oscillation counts as an infinite period. If the
    interval shrinks below ``phi_tol`` first, the best point seen is
    returned. ``period_fn`` replaces the simulated sweep (for tests).
    """
    if not target_ratio >= 1:
        raise ValueError("target_ratio must be >= 1")
    if target_ratio == 1:
        return Calibration(phi_low, phi_low, 1.0, [])
    if not phi_low < phi_max:
        raise ValueError("phi_low must be below phi_max")

    if period_fn is None:
        def period_fn(phi):
            return sweep_point(phi, params, cfg, **sweep_kwargs).mean_period

    base = period_fn(phi_low)
    if base is None:
        raise ValueError(f"no sustained oscillation at phi_low={phi_low}")

    history: list[tuple[float, float]] = []

    def ratio_at(phi):
        p = period_fn(phi)
        r = math.inf if p is None else p / base
        history.append((phi, r))
        return r

    top = ratio_at(phi_max)
    if top < target_ratio * (1 - rel_tol):
        raise ValueError(
            f"target ratio {target_ratio} unreachable: phi in ({phi_low}, {phi_max}] gives ratios up to {top:.3f}"
        )
    if abs(top / target_ratio - 1) <= rel_tol:
        return Calibration(phi_low, phi_max, top, history)
    lo, hi = phi_low, phi_max
    while hi - lo >= phi_tol:
        mid = 0.5 * (lo + hi)
        r = ratio_at(mid)
        if abs(r / target_ratio - 1) <= rel_tol:
            return Calibration(phi_low, mid, r, history)
        if r < target_ratio:
            lo = mid
        else:
            hi = mid
    finite = [(abs(r / target_ratio - 1), phi, r) for phi, r in history if math.isfinite(r)]
    if not finite:
        raise ValueError("calibration found no oscillating phi_high")
    _, phi, r = min(finite)
    return Calibration(phi_low, phi, r, history)


@dataclass(frozen=True)
class ThermalModel:
    """Peltier temperature program mapped affinely onto phi."""

    t_ambient: float = 20.0
    t_target: float = -1.0
    cooling_rate: float = -0.1  # degC per second
    warming_rate: float = 0.05
    phi_at_ambient: float = CALIBRATED_PHI_LOW
    phi_at_target: float = CALIBRATED_PHI_HIGH

    def __post_init__(self):
        if not self.cooling_rate < 0 < self.warming_rate:
            raise ValueError("need cooling_rate < 0 < warming_rate")
        if not self.t_target < self.t_ambient:
            raise ValueError("t_target must be below t_ambient")
        if self.phi_at_target < self.phi_at_ambient or self.phi_at_ambient < 0:
            raise ValueError("need 0 <= phi_at_ambient <= phi_at_target")

    def phi(self, temperature):
        frac = (self.t_ambient - np.asarray(temperature, dtype=float)) / (self.t_ambient - self.t_target)
        return self.phi_at_ambient + frac * (self.phi_at_target - self.phi_at_ambient)


POWER_ON, POWER_OFF, TERMINATE = "power-on", "power-off", "terminate"


def temperature_profile(model: ThermalModel, events, duration: float | None = None):
    """Temperature at whole seconds ``0..duration`` for power on/off events.

    Returns ``(seconds, temperature, end)`` where ``end`` is the time of a
    terminate event (or ``duration``).
    """
    events = [(float(t), str(kind)) for t, kind in events]
    times = [t for t, _ in events]
    if times != sorted(times):
        raise ValueError("thermal events must be time-ordered")
    for _, kind in events:
        if kind not in (POWER_ON, POWER_OFF, TERMINATE):
            raise ValueError(f"unknown thermal event {kind!r}")
    end = next((t for t, kind in events if kind == TERMINATE), None)
    if end is None:
        if duration is None:
            last = times[-1] if times else 0.0
            span = model.t_ambient - model.t_target
            settle = max(span / -model.cooling_rate, span / model.warming_rate)
            duration = last + settle
        end = duration
    seconds = np.arange(0, int(math.floor(end)) + 1, dtype=float)
    temps = np.empty_like(seconds)
    temp, powered, k = model.t_ambient, False, 0
    for i, s in enumerate(seconds):
        if i > 0:
            rate = model.cooling_rate if powered else model.warming_rate
            temp = min(max(temp + rate, model.t_target), model.t_ambient)
        while k < len(events) and events[k][0] <= s:
            powered = events[k][1] == POWER_ON if events[k][1] != TERMINATE else powered
            k += 1
        temps[i] = temp
    return seconds, temps, float(end)


def thermal_to_schedule(
    model: ThermalModel,
    events,
    *,
    duration: float | None = None,
    seconds_per_time_unit: float = 10.0,
    dt: float = 0.001,
) -> PhiSchedule:
    """Piecewise-constant phi program from a power on/off log.

    The temperature is stepped once per second, mapped to phi and converted
    to iterations with ``seconds_per_time_unit`` seconds per model time
    unit. Runs of equal phi are merged.
    """
    seconds, temps, end = temperature_profile(model, events, duration)
    phis = model.phi(temps)
    per_second = 1.0 / (seconds_per_time_unit * dt)
    stop = int(round(end * per_second))
    segments: list[Segment] = []
    for s, phi in zip(seconds, phis):
        start = int(round(s * per_second))
        if segments and start >= stop:
            break
        if segments and segments[-1].phi == float(phi):
            continue
        if segments and start <= segments[-1].start:
            continue
        segments.append(Segment(start, float(phi)))
    return PhiSchedule(tuple(segments), stop if stop > segments[-1].start else None)
