"""TOML run configuration.

A document names a ``scenario`` and may override any of the tables below;
every omitted key gets its default, and :func:`echo_config` writes the fully
resolved configuration back out so a run can be repeated exactly::

    scenario = "spike-shape"        # run | spike-shape | phi-sweep | cooling-cycle | calibrate
    origin = "NE"                   # spike-shape only
    n_steps = 100000                # step cap (run / cooling-cycle: exact length)
    record_stride = 10
    snapshot_stride = 150           # 0 disables snapshots
    output_dir = "out"

    [params]       epsilon, f, q, d_u, phi
    [integrator]   dt, dx, divergence_bound, clamp_negative, reaction
    [geometry]     shape = "disc" | "annulus", radius, inner_radius
    [electrodes]   west = [x0, y0, x1, y1], east = [...]   (potential = east - west)
    [stimulus]     compass | center = [x, y], radius, mode = "one-shot" | "held-source"
    [schedule]     segments = [[start, phi], [start, phi, ramp], ...], stop
    [sweep]        phi_values, workers, min_events, discard_events
    [calibration]  target_ratio, phi_low, phi_max
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from bzmarble import experiments as ex
from bzmarble.core import IntegratorConfig, OregonatorParams
from bzmarble.geometry import (
    COMPASS_BEARINGS,
    Mask,
    RectDomain,
    StimulusMode,
    StimulusSite,
    edge_site,
    make_annulus_mask,
    make_disc_mask,
)
from bzmarble.measurement import ElectrodePair
from bzmarble.schedule import PhiSchedule, Segment

SCENARIOS = ("run", "spike-shape", "phi-sweep", "cooling-cycle", "calibrate")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class GeometrySpec:
    shape: str = "disc"
    radius: int = ex.DISC_RADIUS
    inner_radius: int = 0  # annulus only

    def build(self) -> Mask:
        if self.shape == "disc":
            return make_disc_mask(self.radius)
        return make_annulus_mask(self.radius, self.inner_radius)


@dataclass(frozen=True)
class StimulusSpec:
    compass: str = "S"
    center: tuple[int, int] | None = None  # (x, y); overrides compass
    radius: int = 3
    mode: str = StimulusMode.ONE_SHOT.value

    def site(self, mask: Mask) -> StimulusSite:
        mode = StimulusMode(self.mode)
        if self.center is not None:
            return StimulusSite(tuple(self.center), self.radius, mode)
        return edge_site(mask, self.compass, self.radius, mode)


@dataclass(frozen=True)
class SweepSpec:
    phi_values: tuple[float, ...] = (0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07)
    workers: int = 1
    min_events: int = ex.SWEEP_MIN_EVENTS
    discard_events: int = ex.SWEEP_DISCARD_EVENTS


@dataclass(frozen=True)
class CalibrationSpec:
    target_ratio: float = 2.1
    phi_low: float = 0.03
    phi_max: float = 0.08


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    origin: str = "S"
    n_steps: int = ex.STEP_CAP
    record_stride: int = 10
    snapshot_stride: int = 150
    output_dir: str = "out"
    params: OregonatorParams = field(default_factory=OregonatorParams)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    electrodes: ElectrodePair | None = None
    stimulus: StimulusSpec = field(default_factory=StimulusSpec)
    schedule: PhiSchedule | None = None
    sweep: SweepSpec = field(default_factory=SweepSpec)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)

    def mask(self) -> Mask:
        return self.geometry.build()


_TABLES = {
    "params": OregonatorParams,
    "integrator": IntegratorConfig,
    "geometry": GeometrySpec,
    "stimulus": StimulusSpec,
    "sweep": SweepSpec,
    "calibration": CalibrationSpec,
}
_SCALARS = {"scenario": str, "origin": str, "n_steps": int, "record_stride": int, "snapshot_stride": int, "output_dir": str}


def _check_type(key: str, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _table(name: str, raw, cls, base):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a table")
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown key")
        default = getattr(base, key)
        if key in ("center", "phi_values"):
            if not isinstance(value, list):
                raise ConfigError(f"{name}.{key}: expected an array")
            kind = int if key == "center" else float
            value = tuple(_check_type(f"{name}.{key}", v, kind) for v in value)
        else:
            value = _check_type(f"{name}.{key}", value, type(default))
        out[key] = value
    try:
        return replace(base, **out)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _scenario_defaults(scenario: str) -> dict:
    if scenario in ("phi-sweep", "cooling-cycle", "calibrate"):
        return {
            "geometry": GeometrySpec("annulus", ex.ANNULUS_OUTER, ex.ANNULUS_INNER),
            "stimulus": StimulusSpec(ex.SOURCE_COMPASS, None, ex.SOURCE_RADIUS, StimulusMode.HELD.value),
            "snapshot_stride": 0,
            "n_steps": ex.SWEEP_STEP_CAP if scenario != "cooling-cycle" else ex.STEP_CAP,
        }
    return {}


def _rect(key: str, value) -> RectDomain:
    if not (isinstance(value, list) and len(value) == 4 and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise ConfigError(f"{key}: expected [x0, y0, x1, y1] integers")
    try:
        return RectDomain(*value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _schedule(raw) -> PhiSchedule:
    if not isinstance(raw, dict):
        raise ConfigError("schedule: expected a table")
    for key in raw:
        if key not in ("segments", "stop"):
            raise ConfigError(f"schedule.{key}: unknown key")
    segs = []
    for k, item in enumerate(raw.get("segments", [])):
        if not isinstance(item, list) or len(item) not in (2, 3):
            raise ConfigError(f"schedule.segments[{k}]: expected [start, phi] or [start, phi, ramp]")
        start = _check_type(f"schedule.segments[{k}].start", item[0], int)
        phi = _check_type(f"schedule.segments[{k}].phi", item[1], float)
        ramp = _check_type(f"schedule.segments[{k}].ramp", item[2], bool) if len(item) == 3 else False
        segs.append(Segment(start, phi, ramp))
    stop = raw.get("stop")
    if stop is not None:
        stop = _check_type("schedule.stop", stop, int)
    try:
        return PhiSchedule(tuple(segs), stop)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Raises
    ------
    ConfigError
        On TOML syntax errors (the message carries line and column) or on
        unknown keys and invalid values (the message names the key).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None

    scenario = doc.get("scenario")
    if scenario is None:
        raise ConfigError("scenario: missing required key")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: must be one of {', '.join(SCENARIOS)}, got {scenario!r}")
    cfg = RunConfig(scenario, **_scenario_defaults(scenario))

    updates = {}
    for key, value in doc.items():
        if key in _SCALARS:
            updates[key] = _check_type(key, value, _SCALARS[key])
        elif key in _TABLES:
            updates[key] = _table(key, value, _TABLES[key], getattr(cfg, key))
        elif key == "electrodes":
            if not isinstance(value, dict) or set(value) - {"west", "east"} or len(value) != 2:
                raise ConfigError("electrodes: expected exactly the keys west and east")
            try:
                updates[key] = ElectrodePair(_rect("electrodes.west", value["west"]), _rect("electrodes.east", value["east"]))
            except ValueError as exc:
                raise ConfigError(f"electrodes: {exc}") from None
        elif key == "schedule":
            updates[key] = _schedule(value)
        else:
            raise ConfigError(f"{key}: unknown key")
    cfg = replace(cfg, **updates)
    _validate(cfg)
    return _resolve(cfg)


def _validate(cfg: RunConfig) -> None:
    if cfg.origin not in COMPASS_BEARINGS:
        raise ConfigError(f"origin: unknown compass point {cfg.origin!r}")
    for key in ("n_steps", "record_stride"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key}: must be >= 1")
    if cfg.snapshot_stride < 0:
        raise ConfigError("snapshot_stride: must be >= 0")
    g = cfg.geometry
    if g.shape not in ("disc", "annulus"):
        raise ConfigError(f"geometry.shape: must be disc or annulus, got {g.shape!r}")
    if g.radius < 1:
        raise ConfigError("geometry.radius: must be >= 1")
    if g.shape == "annulus" and not 0 < g.inner_radius < g.radius:
        raise ConfigError("geometry.inner_radius: must satisfy 0 < inner_radius < radius")
    s = cfg.stimulus
    if s.radius < 0:
        raise ConfigError("stimulus.radius: must be >= 0")
    if s.mode not in {m.value for m in StimulusMode}:
        raise ConfigError(f"stimulus.mode: unknown mode {s.mode!r}")
    if s.compass not in COMPASS_BEARINGS:
        raise ConfigError(f"stimulus.compass: unknown compass point {s.compass!r}")
    if s.center is not None:
        size = 2 * g.radius + 1
        if len(s.center) != 2 or not all(0 <= c < size for c in s.center):
            raise ConfigError("stimulus.center: must be [x, y] inside the lattice")
    if cfg.electrodes is not None:
        try:
            cfg.electrodes.validate(cfg.mask())
        except ValueError as exc:
            raise ConfigError(f"electrodes: {exc}") from None
    sw = cfg.sweep
    if not sw.phi_values or any(p < 0 for p in sw.phi_values):
        raise ConfigError("sweep.phi_values: need at least one phi >= 0")
    if sw.workers < 1 or sw.min_events < 2 or sw.discard_events < 0:
        raise ConfigError("sweep: need workers >= 1, min_events >= 2, discard_events >= 0")
    c = cfg.calibration
    if c.target_ratio < 1 or not 0 <= c.phi_low < c.phi_max:
        raise ConfigError("calibration: need target_ratio >= 1 and 0 <= phi_low < phi_max")


def _resolve(cfg: RunConfig) -> RunConfig:
    """Fill in geometry-dependent defaults so the echo is self-contained."""
    if cfg.electrodes is None:
        mask = cfg.mask()
        if cfg.geometry.shape == "annulus":
            electrodes = ex.sweep_electrodes(mask)
        else:
            electrodes = ex.spike_electrodes(mask)
        try:
            electrodes.validate(mask)
        except ValueError:
            raise ConfigError("electrodes: default layout does not fit this geometry, set [electrodes]") from None
        cfg = replace(cfg, electrodes=electrodes)
    if cfg.schedule is None:
        cfg = replace(cfg, schedule=PhiSchedule.constant(cfg.params.phi))
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-data form of a resolved config (``None`` values omitted)."""
    out = {
        "scenario": cfg.scenario,
        "origin": cfg.origin,
        "n_steps": cfg.n_steps,
        "record_stride": cfg.record_stride,
        "snapshot_stride": cfg.snapshot_stride,
        "output_dir": cfg.output_dir,
    }
    for key in _TABLES:
        table = asdict(getattr(cfg, key))
        out[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in table.items() if v is not None}
    if cfg.electrodes is not None:
        out["electrodes"] = {
            "west": [cfg.electrodes.e1.x0, cfg.electrodes.e1.y0, cfg.electrodes.e1.x1, cfg.electrodes.e1.y1],
            "east": [cfg.electrodes.e2.x0, cfg.electrodes.e2.y0, cfg.electrodes.e2.x1, cfg.electrodes.e2.y1],
        }
    if cfg.schedule is not None:
        sched = {"segments": [[s.start, s.phi, s.ramp] for s in cfg.schedule.segments]}
        if cfg.schedule.stop is not None:
            sched["stop"] = cfg.schedule.stop
        out["schedule"] = sched
    return out


def echo_config(cfg: RunConfig) -> str:
    """TOML text that :func:`parse_config` turns back into ``cfg``."""
    return tomli_w.dumps(config_to_dict(cfg))


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
