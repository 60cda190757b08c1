"""Command-line interface: ``fbc <subcommand> ...``."""

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from wipac_dev_tools import logging_tools

from . import bench, cascade, event_io, synth
from .config import get_env_config
from .flow_interface import estimate_flows
from .flow_provider_manager import available_flow_providers
from .metrics import FidelityReport, MetricParams, evaluate, measure_fidelity
from .model import US_PER_MS, CANDIDATE_MODES, CodecConfig, ConfigError, EventStream, FBCError
from .pipeline import Codec, SweepRow, make_provider, parse_sweep, simulate, sweep_pt
from .synth import GroundTruth

LOGGER = logging.getLogger("fbc.cli")


# -----------------------------
# shared helpers
# -----------------------------


def _scene_spec(arg: str, duration_ms: Optional[float], seed: Optional[int]) -> synth.SceneSpec:
    """A preset name or a scene file."""
    duration_us = round(duration_ms * US_PER_MS) if duration_ms is not None else None
    if arg in synth.PRESETS:
        return synth.preset(arg, duration_us, seed)
    spec = synth.read_scene(arg)
    changes: Dict[str, int] = {}
    if duration_us is not None:
        changes["duration_us"] = duration_us
    if seed is not None:
        changes["seed"] = seed
    return dataclasses.replace(spec, **changes)


def _check_flow_source(args: argparse.Namespace) -> None:
    """Reject option combinations before any work is done."""
    if args.flow == "oracle" and not args.scene:
        raise ConfigError("--flow oracle needs --scene (a preset name or scene file)")


def _load_input(args: argparse.Namespace) -> Tuple[EventStream, Optional[GroundTruth]]:
    """Events from `args.input`, or generated from `args.scene`; plus the scene's truth."""
    truth = None
    if args.scene:
        spec = _scene_spec(args.scene, args.duration_ms, args.seed)
        generated, truth = synth.generate(spec)
    if args.input:
        stream = event_io.read_events(
            args.input, width=args.width, height=args.height, assume_sorted=args.assume_sorted
        )
    elif args.scene:
        stream = generated
    else:
        raise ConfigError("give an input event file or --scene")
    return stream, truth


def _codec_config(args: argparse.Namespace, stream: EventStream) -> CodecConfig:
    return CodecConfig(
        predict_time_us=args.pt_ms * US_PER_MS,
        pixel_slack=args.slack,
        calibration_count=args.calib_count,
        sensor_width=stream.sensor_width,
        sensor_height=stream.sensor_height,
        parallelism=args.parallelism,
        candidate_mode=args.candidate_mode,
    )


def _metric_params(args: argparse.Namespace) -> MetricParams:
    cube_len = args.cube_len if args.cube_len is not None else round(args.cube_ms * US_PER_MS)
    return MetricParams(
        sigma_x=args.sigma_x,
        sigma_y=args.sigma_y,
        sigma_t=args.sigma_t,
        cube_len=cube_len,
        parallelism=args.parallelism,
    )


def _stderr(msg: str) -> None:
    print(msg, file=sys.stderr)


# -----------------------------
# subcommands
# -----------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic scene to an event file."""
    spec = _scene_spec(args.scene, args.duration_ms, args.seed)
    stream, truth = synth.generate(spec)
    event_io.write_events(stream, args.out)
    if args.dump_scene:
        Path(args.dump_scene).write_text(synth.format_scene(spec))
    _stderr(f"wrote {len(stream)} events ({len(truth)} distinct) to {args.out}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    """Convert a text export into an event file."""
    stream = event_io.ingest_text(
        args.input, args.width, args.height, args.time_unit, args.columns, args.rebase
    )
    event_io.write_events(stream, args.out)
    _stderr(f"wrote {len(stream)} events to {args.out}")
    return 0


def cmd_compress(args: argparse.Namespace) -> int:
    """Event file -> packet capture (optionally cascaded)."""
    _check_flow_source(args)
    stream, truth = _load_input(args)
    cfg = _codec_config(args, stream)
    codec = Codec(cfg, make_provider(args.flow, cfg, truth))
    packets = codec.compress(stream)
    backend = None if args.cascade == "none" else args.cascade
    size = event_io.write_packets(
        args.out, event_io.Capture(stream.sensor_width, stream.sensor_height, packets), backend,
        get_env_config().FBC_LZMA_PRESET,
    )
    stats = codec.last_tx_stats
    assert stats is not None
    _stderr(
        f"N_s={stats.n_s} N_tx={stats.n_tx} N_nf={stats.n_nf} cycles={stats.n_cycles} "
        f"packets={len(packets)} bytes={size}"
    )
    return 0


def cmd_decompress(args: argparse.Namespace) -> int:
    """Packet capture -> reconstructed event file."""
    capture = event_io.read_packets(args.input)
    cfg = CodecConfig(
        pixel_slack=args.slack,
        sensor_width=capture.width,
        sensor_height=capture.height,
        parallelism=args.parallelism,
        candidate_mode=args.candidate_mode,
    )
    recon = Codec(cfg).decompress(capture.packets)
    event_io.write_events(recon, args.out)
    _stderr(f"wrote {len(recon)} events to {args.out}")
    return 0


def _write_rows(path: str, fields: Sequence[str], rows: List[Dict[str, object]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fields))
        writer.writeheader()
        writer.writerows(rows)


def cmd_simulate(args: argparse.Namespace) -> int:
    """tx -> wire -> rx -> metrics in one process."""
    _check_flow_source(args)
    pt_values = parse_sweep(args.sweep_pt) if args.sweep_pt else None
    stream, truth = _load_input(args)
    cfg = _codec_config(args, stream)
    params = _metric_params(args)
    flows = estimate_flows(stream, make_provider(args.flow, cfg, truth))

    if pt_values is not None:
        rows = sweep_pt(stream, cfg, flows, pt_values, params)
        table = [
            {k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in dataclasses.asdict(r).items()}
            for r in rows
        ]
        if args.csv:
            _write_rows(args.csv, SweepRow.FIELDS, table)
        print(",".join(SweepRow.FIELDS))
        for row in table:
            print(",".join(str(row[k]) for k in SweepRow.FIELDS))
        return 0

    result = simulate(stream, cfg, flows, params, baseline=args.baseline == "random", seed=args.seed or 0)
    sys.stdout.write(result.report.to_text())
    if result.baseline:
        print(f"random_er: {result.baseline.er:.6f}")
        print(f"random_mean_distance: {result.baseline.mean_distance:.6f}")
        print(f"random_mean_te: {result.baseline.mean_te:.6f}")
        print(f"random_median_te: {result.baseline.median_te:.6f}")
    if args.csv:
        result.report.write_cube_csv(args.csv)
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    """Measure a reconstruction against its source."""
    orig = event_io.read_events(args.orig, width=args.width, height=args.height)
    recon = event_io.read_events(args.recon, width=args.width, height=args.height)
    report: FidelityReport
    if args.capture:
        capture = event_io.read_packets(args.capture)
        report = evaluate(orig, recon, capture.packets, _metric_params(args))
    else:
        report = measure_fidelity(orig, recon, _metric_params(args))
    sys.stdout.write(report.to_text())
    if args.csv:
        report.write_cube_csv(args.csv)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    """Receiver latency sweeps."""
    pt_values = parse_sweep(args.pt_sweep)
    try:
        counts = [int(c) for c in args.counts.split(",")]
    except ValueError:
        raise ConfigError(f"--counts must be comma-separated integers ({args.counts!r})")
    result = bench.run_bench(
        pt_values, counts, args.n, args.pt_ms, args.parallelism, args.seed or 0, args.repeats
    )
    print(",".join(bench.BenchPoint.FIELDS))
    for p in result.points:
        print(
            f"{p.sweep},{p.n_events},{p.pt_ms},{p.predict_ms:.3f},{p.sort_ms:.3f},"
            f"{p.total_ms:.3f},{p.realtime},{p.n_predicted}"
        )
    if len(result.count_sweep) >= 2:
        _stderr(f"latency growth exponent: {result.exponent:.3f}")
    if args.csv:
        bench.write_bench_csv(result.points, args.csv)
    return 0


# -----------------------------
# parser
# -----------------------------


def build_parser() -> argparse.ArgumentParser:
    """All subcommands and their flags."""
    env = get_env_config()

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log", default=env.FBC_LOG_LEVEL, help="the output logging level")
    common.add_argument(
        "--parallelism", type=int, default=env.FBC_PARALLELISM, help="worker threads"
    )
    common.add_argument("--seed", type=int, default=None, help="seed for scenes and baselines")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("input", nargs="?", default=None, help="event file (.aer8 or .csv)")
    source.add_argument(
        "--scene", default=None, help=f"preset ({', '.join(synth.scene_names())}) or scene file"
    )
    source.add_argument("--duration-ms", type=float, default=None, help="scene duration override")
    source.add_argument("--width", type=int, default=None, help="sensor width for headerless input")
    source.add_argument("--height", type=int, default=None, help="sensor height for headerless input")
    source.add_argument(
        "--assume-sorted", action="store_true", help="fail on unsorted input instead of sorting"
    )

    codec = argparse.ArgumentParser(add_help=False)
    codec.add_argument("--pt-ms", type=int, default=30, help="predict time (ms)")
    codec.add_argument("--slack", type=float, default=0.4, help="pixel slack ξ (px)")
    codec.add_argument("--calib-count", type=int, default=500, help="flow samples per calibration")
    codec.add_argument("--flow", choices=available_flow_providers(), default="planefit")
    codec.add_argument("--candidate-mode", choices=CANDIDATE_MODES, default="scan")

    measure = argparse.ArgumentParser(add_help=False)
    measure.add_argument("--sigma-x", type=float, default=5.0)
    measure.add_argument("--sigma-y", type=float, default=5.0)
    measure.add_argument("--sigma-t", type=float, default=5000.0, help="µs")
    cube = measure.add_mutually_exclusive_group()
    cube.add_argument("--cube-ms", type=float, default=5.0, help="event cube length (ms)")
    cube.add_argument("--cube-len", type=int, default=None, help="event cube length (µs)")

    parser = argparse.ArgumentParser(
        prog="fbc",
        description="Flow-based compression of event-camera streams",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help=cmd_synth.__doc__)
    p.add_argument(
        "--preset", "--scene", dest="scene", default="bar-square", help="preset name or scene file"
    )
    p.add_argument("--duration-ms", type=float, default=None)
    p.add_argument("--out", required=True, help="output event file (.aer8 or .csv)")
    p.add_argument("--dump-scene", default=None, help="also write the scene description here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help=cmd_ingest.__doc__)
    p.add_argument("input", help="text export")
    p.add_argument("--out", required=True, help="output event file")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--time-unit", choices=event_io.TIME_UNITS, default="auto")
    p.add_argument("--columns", default="xytp", help="column order")
    p.add_argument("--rebase", action="store_true", help="start timestamps at 0")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("compress", parents=[common, source, codec], help=cmd_compress.__doc__)
    p.add_argument("--out", required=True, help="output capture (.fbc / .fbcz)")
    p.add_argument("--cascade", choices=cascade.available_backends(), default="none")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", parents=[common], help=cmd_decompress.__doc__)
    p.add_argument("input", help="capture (.fbc / .fbcz)")
    p.add_argument("--out", required=True, help="output event file")
    p.add_argument("--slack", type=float, default=0.4, help="pixel slack ξ (px)")
    p.add_argument("--candidate-mode", choices=CANDIDATE_MODES, default="scan")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser(
        "simulate", parents=[common, source, codec, measure], help=cmd_simulate.__doc__
    )
    p.add_argument("--baseline", choices=["random"], default=None)
    p.add_argument("--sweep-pt", default=None, help="PT sweep a:b:step (ms)")
    p.add_argument("--csv", default=None, help="per-cube (or sweep) CSV output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", parents=[common, measure], help=cmd_metrics.__doc__)
    p.add_argument("--orig", required=True, help="original event file")
    p.add_argument("--recon", required=True, help="reconstructed event file")
    p.add_argument(
        "--capture", default=None, help="capture the reconstruction came from (adds ER and CR)"
    )
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--csv", default=None, help="per-cube CSV output")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", parents=[common], help=cmd_bench.__doc__)
    p.add_argument("--pt-sweep", default="10:100:10", help="PT sweep a:b:step (ms)")
    p.add_argument(
        "--counts",
        default=",".join(str(n) for n in bench.DEFAULT_COUNT_SWEEP),
        help="comma-separated event counts",
    )
    p.add_argument("--n", type=int, default=bench.DEFAULT_N, help="events per PT-sweep window")
    p.add_argument("--pt-ms", type=int, default=bench.DEFAULT_PT_MS, help="PT of the count sweep")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, set up logging, run a subcommand; map library errors to exit code 1."""
    args = build_parser().parse_args(argv)
    logging_tools.set_level(
        args.log.upper(),
        first_party_loggers="fbc",
        third_party_level="WARNING",
        use_coloredlogs=True,
    )
    logging_tools.log_argparse_args(args, logger=LOGGER, level="DEBUG")

    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except (FBCError, OSError) as e:
        _stderr(f"fbc: error: {e}")
        return 1
