"""Command-line interface.

Subcommands: simulate, oracle, sanitize, beamform, velocity, pipeline,
metrics. Exit codes: 0 success, 1 validation/parse error, 2 tolerance
failure (oracle), 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import io as simio
from . import pipeline as pl
from .errors import AmbientSimError, ParseError, SchemaError, ValidationError
from .scenario import load_scenario, scenario_to_yaml

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TOLERANCE = 2
EXIT_IO = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ambientsim",
        description="Ambient-RF sensing simulator and processing pipeline")
    parser.add_argument("--scenario", help="scenario YAML path or preset name "
                                           "(ars_reference, oracle_scaled, mover_scaled)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override run.rng_seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for window-parallel stages")
    parser.add_argument("--tolerance", type=float, default=1e-3,
                        help="oracle max relative amplitude error")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="synthesize per-channel baseband payloads")

    p_oracle = sub.add_parser("oracle", help="time-domain vs analytic baseband check")
    p_oracle.add_argument("--phase-tolerance", type=float, default=1e-2,
                          help="oracle max phase error (rad)")

    p_san = sub.add_parser("sanitize", help="sanitize baseband to per-window points")
    p_san.add_argument("--baseband", help="directory with simulated payloads "
                                          "(default: simulate in place)")

    p_beam = sub.add_parser("beamform", help="heatmap frames from sanitized points")
    p_beam.add_argument("--points", help="points.csv from a sanitize run "
                                         "(default: simulate+sanitize in place)")

    p_vel = sub.add_parser("velocity", help="velocity trace from sanitized points")
    p_vel.add_argument("--points", help="points.csv from a sanitize run "
                                        "(default: simulate+sanitize in place)")

    sub.add_parser("pipeline", help="simulate, sanitize, velocity and beamform")

    p_met = sub.add_parser("metrics", help="evaluation metrics from CSV files")
    p_met.add_argument("--task", choices=("mask", "keypoints"), required=True)
    p_met.add_argument("--pred", required=True, help="prediction CSV")
    p_met.add_argument("--gt", required=True, help="ground-truth CSV")
    return parser


def _need(args, attr, flag):
    value = getattr(args, attr)
    if value is None:
        raise ValidationError(flag, "required for this command")
    return value


def _scenario(args):
    sc = load_scenario(_need(args, "scenario", "--scenario"))
    if args.seed is not None:
        sc = dataclasses.replace(
            sc, run=dataclasses.replace(sc.run, rng_seed=args.seed))
    return sc


def _sanitize_inputs(args, sc, out_dir, baseband_dir=None):
    if baseband_dir is not None:
        stream = simio.read_baseband(baseband_dir)
        if stream.n_channels != sc.array.n_antennas:
            raise ValidationError("array.rx_positions",
                                  f"{stream.n_channels} channels vs "
                                  f"{sc.array.n_antennas} antennas")
    else:
        stream = pl.simulate_baseband(sc, seed=args.seed)
    return pl.sanitize_channels(sc, stream, threads=max(1, args.threads)), stream


def cmd_simulate(args):
    sc = _scenario(args)
    if not sc.scene.reflectors:
        print("warning: static scene (no reflectors); payloads carry no motion",
              file=sys.stderr)
    manifest = pl.write_simulation(sc, _need(args, "out", "--out"), seed=args.seed)
    print(f"wrote {manifest['baseband']['channels']} channel payload(s) to "
          f"{args.out}")
    return EXIT_OK


def cmd_oracle(args):
    sc = _scenario(args)
    report = pl.oracle_compare(sc, amplitude_tol=args.tolerance,
                               phase_tol=args.phase_tolerance)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        simio.write_json(os.path.join(args.out, "oracle.json"), report)
    return EXIT_OK if report["passed"] else EXIT_TOLERANCE


def cmd_sanitize(args):
    sc = _scenario(args)
    out_dir = _need(args, "out", "--out")
    os.makedirs(out_dir, exist_ok=True)
    (times, points, valid), stream = _sanitize_inputs(args, sc, out_dir,
                                                      args.baseband)
    simio.write_points_csv(os.path.join(out_dir, "points.csv"), times, points,
                           valid, list(range(stream.n_channels)))
    simio.atomic_write_text(os.path.join(out_dir, "scenario.yaml"),
                            scenario_to_yaml(sc))
    print(f"wrote {int(valid.sum())} points "
          f"({int((~valid).sum())} empty windows) to {out_dir}/points.csv")
    return EXIT_OK


def _points_from(args, sc, out_dir):
    if getattr(args, "points", None):
        times, points, valid, _ = simio.read_points_csv(args.points)
        if len(times) == 0:
            raise ValidationError("points", "no points in file")
        return times, points, valid
    (times, points, valid), _ = _sanitize_inputs(args, sc, out_dir)
    return times, points, valid


def cmd_beamform(args):
    sc = _scenario(args)
    out_dir = _need(args, "out", "--out")
    os.makedirs(out_dir, exist_ok=True)
    times, points, valid = _points_from(args, sc, out_dir)
    frames = pl.run_heatmaps(sc, times, points, valid)
    simio.write_heatmaps(os.path.join(out_dir, "heatmaps"), frames,
                         sc.beamform.grid, sc.beamform.t_delta_s,
                         sc.beamform.frame_period_s)
    print(f"wrote {len(frames)} heatmap frame(s) to {out_dir}/heatmaps")
    return EXIT_OK


def cmd_velocity(args):
    sc = _scenario(args)
    out_dir = _need(args, "out", "--out")
    os.makedirs(out_dir, exist_ok=True)
    times, points, valid = _points_from(args, sc, out_dir)
    vel_t, est = pl.run_velocity(sc, times, points, valid, channel=0)
    simio.write_velocity_csv(os.path.join(out_dir, "velocity.csv"), vel_t,
                             est.phase_rate_rad_per_s, est.velocity_mps)
    mean_v = float(np.mean(est.velocity_mps))
    print(f"wrote velocity trace ({len(vel_t)} rows, mean {mean_v:+.4f} m/s) "
          f"to {out_dir}/velocity.csv")
    return EXIT_OK


def cmd_pipeline(args):
    sc = _scenario(args)
    manifest = pl.run_pipeline(sc, _need(args, "out", "--out"), seed=args.seed,
                               threads=max(1, args.threads))
    print(f"pipeline complete: {manifest['windows']['count']} windows, "
          f"heatmaps={'yes' if manifest['heatmaps'] else 'no'}")
    return EXIT_OK


def cmd_metrics(args):
    if args.task == "mask":
        result = pl.run_metrics_mask(args.pred, args.gt)
    else:
        result = pl.run_metrics_keypoints(args.pred, args.gt)
    print(pl.format_metrics_table(result))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        simio.write_json(os.path.join(args.out, "metrics.json"), result)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "sanitize": cmd_sanitize,
    "beamform": cmd_beamform,
    "velocity": cmd_velocity,
    "pipeline": cmd_pipeline,
    "metrics": cmd_metrics,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AmbientSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
