"""Command-line entry point.

Exit status: 0 on success, 1 on a runtime failure (divergence, I/O), 2 on
usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from bzmarble import experiments as ex
from bzmarble.analysis import PeriodStats, detect_periods
from bzmarble.config import ConfigError, RunConfig, echo_config, load_config, parse_config
from bzmarble.core import integrate, resting_state
from bzmarble.geometry import stimulate
from bzmarble.io import trace_from_csv, write_pgm, write_trace_csv
from bzmarble.measurement import PotentialRecorder
from bzmarble.schedule import PhiSchedule

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

STATS_COLUMNS = ("mean_period", "sigma", "n_events", "frequency")


class UsageError(Exception):
    pass


def _fmt(value) -> str:
    return "" if value is None else repr(float(value)) if isinstance(value, float) else str(value)


def _stats_row(stats: PeriodStats) -> list[str]:
    return [_fmt(stats.mean_period), _fmt(stats.sigma), str(stats.n_events), _fmt(stats.frequency)]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _prepare(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    _write_text(out / "config.toml", echo_config(cfg))
    return out


def _write_snapshots(frames, directory: Path, prefix: str) -> None:
    if not frames:
        return
    directory.mkdir(parents=True, exist_ok=True)
    for iteration, image in frames:
        write_pgm(image, directory / f"{prefix}{iteration:07d}.pgm")


# scenarios ---------------------------------------------------------------

def run_generic(cfg: RunConfig, out: Path) -> None:
    mask = cfg.mask()
    site = cfg.stimulus.site(mask)
    cfg.electrodes.validate(mask)
    state = stimulate(resting_state(mask, cfg.params.with_phi(cfg.schedule.phi_at(0))), site, mask)
    recorder = PotentialRecorder(cfg.electrodes, mask, cfg.record_stride, cfg.integrator.dt)
    observers = [recorder]
    snaps = None
    if cfg.snapshot_stride:
        snaps = ex.SnapshotRecorder(mask, cfg.snapshot_stride)
        observers.append(snaps)
    n_steps = min(cfg.n_steps, cfg.schedule.stop) if cfg.schedule.stop else cfg.n_steps
    integrate(state, cfg.params, cfg.integrator, mask, cfg.schedule, n_steps, observers)
    write_trace_csv(recorder.trace, out / "trace.csv")
    _write_snapshots(snaps.frames if snaps else [], out / "snapshots", "u_")
    stats = detect_periods(recorder.trace, relative=True)
    print(_csv_text(STATS_COLUMNS, [_stats_row(stats)]), end="")


def run_spikes(cfg: RunConfig, out: Path, origins) -> None:
    for origin in origins:
        res = ex.run_spike_shape(
            origin, cfg.params, cfg.integrator, radius=cfg.geometry.radius, electrodes=cfg.electrodes,
            site_radius=cfg.stimulus.radius, record_stride=cfg.record_stride,
            snapshot_stride=cfg.snapshot_stride or cfg.n_steps, step_cap=cfg.n_steps,
        )
        write_trace_csv(res.trace, out / f"trace_{origin}.csv")
        if cfg.snapshot_stride:
            _write_snapshots(res.snapshots, out / "snapshots", f"{origin}_")
        shape = res.classification
        print(
            f"origin={origin} classification={shape.classification} peak={shape.peak:.6g} "
            f"trough={shape.trough:.6g} iterations={res.metadata['iterations']}"
        )


def _sweep_kwargs(cfg: RunConfig) -> dict:
    mask = cfg.mask()
    return dict(
        mask=mask, site=cfg.stimulus.site(mask), electrodes=cfg.electrodes, record_stride=cfg.record_stride,
        min_events=cfg.sweep.min_events, discard_events=cfg.sweep.discard_events, step_cap=cfg.n_steps,
    )


def run_sweep(cfg: RunConfig, out: Path) -> None:
    points = ex.run_phi_sweep(cfg.sweep.phi_values, cfg.params, cfg.integrator, workers=cfg.sweep.workers, **_sweep_kwargs(cfg))
    rows = []
    for p in points:
        rows.append([repr(p.phi), _fmt(p.stats.mean_period), _fmt(p.stats.sigma), str(p.stats.n_events)])
        if p.status != "ok":
            print(f"phi={p.phi}: {p.status}", file=sys.stderr)
    text = _csv_text(("phi", "mean_period", "sigma", "n_events"), rows)
    _write_text(out / "sweep.csv", text)
    print(text, end="")


def run_cooling(cfg: RunConfig, out: Path) -> None:
    mask = cfg.mask()
    res = ex.run_cooling_cycle(
        cfg.schedule, cfg.params, cfg.integrator, n_steps=cfg.schedule.stop or cfg.n_steps, mask=mask,
        site=cfg.stimulus.site(mask), electrodes=cfg.electrodes, record_stride=cfg.record_stride,
        snapshot_stride=cfg.snapshot_stride,
    )
    write_trace_csv(res.trace, out / "trace.csv")
    _write_snapshots(res.snapshots, out / "snapshots", "u_")
    rows = []
    for seg, stats, status in zip(cfg.schedule.segments, res.stats, res.segment_status):
        rows.append([str(seg.start), repr(seg.phi), *_stats_row(stats), status])
    text = _csv_text(("start", "phi", *STATS_COLUMNS, "status"), rows)
    _write_text(out / "segments.csv", text)
    print(text, end="")


def run_calibration(cfg: RunConfig, out: Path) -> None:
    c = cfg.calibration
    kwargs = _sweep_kwargs(cfg)
    result = ex.calibrate_phi_for_ratio(c.target_ratio, c.phi_low, cfg.params, cfg.integrator, phi_max=c.phi_max, **kwargs)
    text = _csv_text(("phi_low", "phi_high", "ratio"), [[repr(result.phi_low), repr(result.phi_high), repr(result.ratio)]])
    _write_text(out / "calibration.csv", text)
    print(text, end="")


def run_config(cfg: RunConfig, origins=("S", "E", "NE")) -> None:
    out = _prepare(cfg)
    if cfg.scenario == "spike-shape":
        run_spikes(cfg, out, origins)
    elif cfg.scenario == "phi-sweep":
        run_sweep(cfg, out)
    elif cfg.scenario == "cooling-cycle":
        run_cooling(cfg, out)
    elif cfg.scenario == "calibrate":
        run_calibration(cfg, out)
    else:
        run_generic(cfg, out)


# argument handling -------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _segments(text: str) -> PhiSchedule:
    try:
        pairs = [(int(a), float(b)) for a, b in (item.split(":") for item in text.split(","))]
        return PhiSchedule.steps(pairs)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected START:PHI,START:PHI,..., got {text!r} ({exc})") from None


def _base_config(args, scenario: str) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        if cfg.scenario != scenario and args.command != "run":
            raise ConfigError(f"scenario: {args.config} is a {cfg.scenario!r} config, expected {scenario!r}")
    else:
        cfg = parse_config(f'scenario = "{scenario}"\n')
    updates = {}
    if getattr(args, "output_dir", None):
        updates["output_dir"] = args.output_dir
    if getattr(args, "n_steps", None):
        updates["n_steps"] = args.n_steps
    if getattr(args, "phi", None) is not None:
        updates["params"] = cfg.params.with_phi(args.phi)
        if cfg.schedule.segments == (PhiSchedule.constant(cfg.params.phi).segments):
            updates["schedule"] = PhiSchedule.constant(args.phi)
    if getattr(args, "phi_values", None):
        updates["sweep"] = replace(cfg.sweep, phi_values=args.phi_values)
    if getattr(args, "workers", None):
        updates["sweep"] = replace(updates.get("sweep", cfg.sweep), workers=args.workers)
    if getattr(args, "segments", None):
        updates["schedule"] = args.segments
    if getattr(args, "target", None) is not None or getattr(args, "phi_low", None) is not None:
        cal = cfg.calibration
        if args.target is not None:
            cal = replace(cal, target_ratio=args.target)
        if args.phi_low is not None:
            cal = replace(cal, phi_low=args.phi_low)
        updates["calibration"] = cal
    cfg = replace(cfg, **updates)
    # round-trip through the echo so overrides get the same validation as files
    return parse_config(echo_config(cfg))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bzmarble", description="Oregonator excitable-disc simulator and trace analysis.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="TOML run configuration")
        p.add_argument("--output-dir", help="directory for traces, snapshots and the config echo")
        p.add_argument("--n-steps", type=int, help="step cap")

    p = sub.add_parser("run", help="execute a run configuration")
    common(p, config_required=True)

    p = sub.add_parser("spike-shapes", help="single waves from the S, E and NE rim")
    common(p)
    p.add_argument("--origins", default="S,E,NE", help="comma-separated compass points")
    p.add_argument("--phi", type=float)

    p = sub.add_parser("sweep-phi", help="held-source period for a list of phi values")
    common(p)
    p.add_argument("--phi-values", type=_floats)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("cooling-cycle", help="held-source run under a phi program")
    common(p)
    p.add_argument("--segments", type=_segments, help="START:PHI,... iteration/phi pairs")

    p = sub.add_parser("calibrate", help="find phi_high giving a target period ratio")
    common(p)
    p.add_argument("--target", type=float)
    p.add_argument("--phi-low", type=float)

    p = sub.add_parser("analyze", help="period statistics of a time,value CSV")
    p.add_argument("csv", help="trace CSV (header optional)")
    p.add_argument("--threshold-hi", type=float, help="absolute upper threshold (default: 40%% of peak)")
    p.add_argument("--threshold-lo", type=float, help="absolute lower threshold (default: 10%% of peak)")
    p.add_argument("--detrend-window", type=int, help="moving-median baseline window in samples")
    return parser


def _analyze(args) -> None:
    trace = trace_from_csv(args.csv)
    absolute = args.threshold_hi is not None or args.threshold_lo is not None
    if absolute and (args.threshold_hi is None or args.threshold_lo is None):
        raise UsageError("--threshold-hi and --threshold-lo must be given together")
    stats = detect_periods(
        trace, args.threshold_hi, args.threshold_lo, relative=not absolute, detrend_window=args.detrend_window
    )
    print(_csv_text(STATS_COLUMNS, [_stats_row(stats)]), end="")


SCENARIO_OF = {
    "run": "run",
    "spike-shapes": "spike-shape",
    "sweep-phi": "phi-sweep",
    "cooling-cycle": "cooling-cycle",
    "calibrate": "calibrate",
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "analyze":
            _analyze(args)
            return EXIT_OK
        cfg = _base_config(args, SCENARIO_OF[args.command])
        origins = ("S", "E", "NE")
        if args.command == "spike-shapes":
            origins = tuple(o.strip().upper() for o in args.origins.split(",") if o.strip())
            if not origins:
                raise UsageError("--origins is empty")
        run_config(cfg, origins)
    except (ConfigError, UsageError) as exc:
        print(f"bzmarble: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"bzmarble: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"bzmarble: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
