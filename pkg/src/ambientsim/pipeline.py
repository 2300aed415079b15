"""Pipeline orchestration: scenario-driven baseband simulation, the
time-domain-vs-analytic oracle, sanitize/beamform/velocity stages, and the
metrics runner. The CLI is a thin wrapper around these functions.
"""

from __future__ import annotations

import dataclasses
import math
import os

import numpy as np

from . import io as simio
from .beamformer import direction_vector, heatmap_sequence
from .errors import ValidationError
from .metrics import ap_summary, iou, oks, pck
from .mixer import (
    BasebandStream,
    DopplerConfig,
    analytic_baseband,
    estimate_velocity,
    lowpass_isolate,
    self_mix,
)
from .sanitizer import sanitize_stream
from .scenario import scenario_to_dict, scenario_to_yaml
from .signal_model import (
    LinearTrajectory,
    Reflector,
    SampledSignal,
    WaypointTrajectory,
    propagate,
    synthesize_stream,
)


def _shift_trajectory(traj, delta_m):
    if delta_m == 0.0:
        return traj
    if isinstance(traj, LinearTrajectory):
        return LinearTrajectory(traj.d0_m + delta_m, traj.v_mps)
    if isinstance(traj, WaypointTrajectory):
        return WaypointTrajectory(traj.times_s,
                                  tuple(d + delta_m for d in traj.distances_m))
    raise ValidationError("trajectory", f"cannot shift {type(traj).__name__}")


def scene_for_antenna(scene, geometry, antenna_index):
    """Scene as seen from one RX antenna: each directed reflector's path
    length is offset by the far-field inner product <u(dir), p_i> (the same
    projection the steering weights use, so a planted direction is recovered
    at that direction by the beamformer)."""
    p_i = geometry.rx_positions[antenna_index]
    out = []
    for refl in scene.reflectors:
        if refl.direction is None:
            out.append(refl)
            continue
        u = direction_vector(*refl.direction)
        shift = float(u @ p_i)
        out.append(Reflector(refl.alpha, _shift_trajectory(refl.trajectory, shift),
                             refl.direction))
    return dataclasses.replace(scene, reflectors=tuple(out))


def traffic_gate(traffic, duration_s, symbol_period_s, seed):
    """Per-gate activity mask for bursty ambient traffic.

    Gates tick at the traffic gate period (default: one OFDM symbol); a gate
    is active with probability burst_duty, drawn from the run seed.
    """
    period = traffic.gate_period_s or symbol_period_s
    n_gates = max(1, int(math.ceil(duration_s / period)))
    if traffic.burst_duty >= 1.0:
        return np.ones(n_gates, dtype=bool), period
    rng = np.random.default_rng([int(seed), 0x6A7E])
    return rng.random(n_gates) < traffic.burst_duty, period


def simulate_baseband(sc, seed=None):
    """Per-antenna analytic baseband stream for the scenario.

    Channel i evaluates the per-antenna scene at the channel's sample times
    (offset by the switch dwell in round_robin mode), scales by the traffic
    gate, then adds seeded complex white noise at the configured SNR.
    """
    seed = sc.run.rng_seed if seed is None else seed
    fs = sc.run.sample_rate_hz
    n = int(round(sc.run.duration_s * fs))
    m = sc.array.n_antennas
    gates, gate_period = traffic_gate(sc.traffic, sc.run.duration_s,
                                      sc.ofdm.symbol_period_s, seed)
    dwell = sc.switch.dwell_s
    if dwell is None:
        dwell = 1.0 / (fs * m)
    noiseless = dataclasses.replace(sc.scene, noise_snr_db=None)
    channels = np.zeros((m, n), dtype=complex)
    base_t = np.arange(n) / fs
    for i in range(m):
        t = base_t if sc.switch.mode == "simultaneous" else base_t + i * dwell
        scene_i = scene_for_antenna(noiseless, sc.array, i)
        if scene_i.reflectors:
            _, total = analytic_baseband(sc.ofdm, scene_i, t)
        else:
            total = np.zeros(n, dtype=complex)
        gate_idx = np.minimum((t / gate_period).astype(int), len(gates) - 1)
        total = total * gates[gate_idx]
        if sc.scene.noise_snr_db is not None and n:
            power = float(np.mean(np.abs(total) ** 2))
            if power == 0.0:
                power = 1.0
            sigma2 = power * 10.0 ** (-sc.scene.noise_snr_db / 10.0)
            rng = np.random.default_rng([int(seed), 0xC4A, i])
            noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            total = total + noise * math.sqrt(sigma2 / 2.0)
        channels[i] = total
    return BasebandStream(channels, fs, 0.0, channel_geometry_ref="rx_positions")


def oracle_compare(sc, amplitude_tol=1e-3, phase_tol=1e-2, trim_fraction=0.1,
                   analytic_scene=None):
    """Certify the mixer math: time-domain synthesize -> propagate ->
    self-mix -> brick-wall low-pass against the closed-form baseband.

    Noise is disabled on both paths (the oracle checks deterministic math).
    analytic_scene substitutes a different scene on the closed-form side,
    which is how a planted fault is exercised.
    """
    scene = dataclasses.replace(sc.scene, noise_snr_db=None)
    if not scene.reflectors:
        raise ValidationError("scene.reflectors", "oracle needs >= 1 reflector")
    fs = sc.run.sample_rate_hz
    s = synthesize_stream(sc.ofdm, fs, sc.run.duration_s)
    propagated = propagate(s, scene)
    reference = SampledSignal(scene.beta * s.samples, fs, s.t0_s)
    if len(propagated.samples) != len(reference.samples):
        k = len(reference.samples) - len(propagated.samples)
        reference = SampledSignal(reference.samples[k:], fs, propagated.t0_s)
    mixed = self_mix(propagated, reference)
    cutoff = sc.ofdm.subcarrier_spacing_hz / 2.0
    z_time = lowpass_isolate(mixed, cutoff)
    t = z_time.times()
    _, z_ana = analytic_baseband(sc.ofdm, analytic_scene or scene, t)
    n = len(t)
    lo = int(trim_fraction * n)
    hi = n - lo
    zt, za = z_time.samples[lo:hi], z_ana[lo:hi]
    amp_err = float(np.max(np.abs(np.abs(zt) - np.abs(za)) / np.abs(za)))
    phase_err = float(np.max(np.abs(np.angle(zt * np.conj(za)))))
    return {
        "samples": n,
        "compared_samples": hi - lo,
        "lowpass_cutoff_hz": cutoff,
        "max_rel_amplitude_error": amp_err,
        "max_phase_error_rad": phase_err,
        "amplitude_tolerance": amplitude_tol,
        "phase_tolerance_rad": phase_tol,
        "passed": bool(amp_err < amplitude_tol and phase_err < phase_tol),
    }


def sanitize_channels(sc, stream, threads=1):
    """Sanitize every channel of a baseband stream on a common window grid.

    Returns (times, points, valid) with points/valid shaped
    (n_channels, n_windows).
    """
    all_points, all_valid, times = [], [], None
    for i in range(stream.n_channels):
        t, pts, ok = sanitize_stream(stream.channels[i], stream.sample_rate_hz,
                                     sc.sanitize, stream.t0_s, threads=threads)
        times = t if times is None else times
        all_points.append(pts)
        all_valid.append(ok)
    return times, np.array(all_points), np.array(all_valid)


def fill_gaps(points, valid):
    """Forward-fill invalid point slots per channel (back-fill at the start).

    Keeps lagged differences quiet across degenerate windows instead of
    fabricating motion against a zero sample.
    """
    filled = points.copy()
    for ci in range(points.shape[0]):
        last = None
        for wi in range(points.shape[1]):
            if valid[ci, wi]:
                last = filled[ci, wi]
            elif last is not None:
                filled[ci, wi] = last
        first_valid = np.argmax(valid[ci]) if valid[ci].any() else None
        if first_valid:
            filled[ci, :first_valid] = filled[ci, first_valid]
    return filled


def point_stream(sc, times, points, valid):
    """Sanitized points as a BasebandStream at the window cadence."""
    filled = fill_gaps(points, valid)
    rate = 1.0 / sc.sanitize.window_len_s
    t0 = float(times[0]) if len(times) else 0.0
    return BasebandStream(filled, rate, t0, channel_geometry_ref="rx_positions")


def velocity_doppler_config(sc):
    """Scenario lag rounded to a whole number of sanitize windows."""
    win = sc.sanitize.window_len_s
    lag_windows = max(1, int(round(sc.beamform.t_delta_s / win)))
    return DopplerConfig(lag_windows * win)


def run_velocity(sc, times, points, valid, channel=0):
    """Velocity trace from one channel's sanitized points."""
    filled = fill_gaps(points, valid)
    z = filled[channel]
    dc = velocity_doppler_config(sc)
    rate_hz = 1.0 / sc.sanitize.window_len_s
    est = estimate_velocity(z, rate_hz, sc.ofdm, dc,
                            round_trip=sc.scene.round_trip)
    t = times[est.lag_samples:]
    return t, est


def run_heatmaps(sc, times, points, valid):
    """Heatmap frames over the sanitized point streams."""
    stream = point_stream(sc, times, points, valid)
    return heatmap_sequence(stream, sc.array, sc.beamform.grid,
                            sc.beamform.frame_period_s, sc.beamform.t_delta_s)


def write_simulation(sc, out_dir, seed=None):
    """`simulate` command: baseband payloads plus scenario echo and manifest."""
    os.makedirs(out_dir, exist_ok=True)
    stream = simulate_baseband(sc, seed=seed)
    header = simio.write_baseband(stream, out_dir)
    simio.atomic_write_text(os.path.join(out_dir, "scenario.yaml"),
                            scenario_to_yaml(sc))
    manifest = {
        "command": "simulate",
        "seed": sc.run.rng_seed if seed is None else seed,
        "scenario": scenario_to_dict(sc),
        "baseband": header,
        "static_scene": len(sc.scene.reflectors) == 0,
    }
    simio.write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def run_pipeline(sc, out_dir, seed=None, threads=1, baseband_dir=None):
    """`pipeline` command: simulate (or reuse), sanitize, velocity, beamform."""
    os.makedirs(out_dir, exist_ok=True)
    if baseband_dir is None:
        stream = simulate_baseband(sc, seed=seed)
        header = simio.write_baseband(stream, out_dir)
    else:
        stream = simio.read_baseband(baseband_dir)
        if stream.n_channels != sc.array.n_antennas:
            raise ValidationError(
                "array.rx_positions",
                f"{stream.n_channels} baseband channels vs "
                f"{sc.array.n_antennas} antennas")
        header = {"reused_from": baseband_dir}
    times, points, valid = sanitize_channels(sc, stream, threads=threads)
    simio.write_points_csv(os.path.join(out_dir, "points.csv"), times, points,
                           valid, list(range(stream.n_channels)))
    vel_t, est = run_velocity(sc, times, points, valid, channel=0)
    simio.write_velocity_csv(os.path.join(out_dir, "velocity.csv"), vel_t,
                             est.phase_rate_rad_per_s, est.velocity_mps)
    heatmaps_written = False
    if sc.array.n_antennas >= 2:
        frames = run_heatmaps(sc, times, points, valid)
        simio.write_heatmaps(os.path.join(out_dir, "heatmaps"), frames,
                             sc.beamform.grid, sc.beamform.t_delta_s,
                             sc.beamform.frame_period_s)
        heatmaps_written = True
    simio.atomic_write_text(os.path.join(out_dir, "scenario.yaml"),
                            scenario_to_yaml(sc))
    manifest = {
        "command": "pipeline",
        "seed": sc.run.rng_seed if seed is None else seed,
        "scenario": scenario_to_dict(sc),
        "baseband": header,
        "windows": {"count": int(len(times)),
                    "dropped": int(np.count_nonzero(~valid)),
                    "window_len_s": sc.sanitize.window_len_s},
        "velocity": {"channel": 0,
                     "t_delta_s": velocity_doppler_config(sc).t_delta_s},
        "heatmaps": heatmaps_written,
    }
    simio.write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def run_metrics_mask(pred_path, gt_path):
    """IoU-based AP summary across mask instances."""
    pairs = simio.read_mask_pairs(pred_path, gt_path)
    scores = [iou(pair) for _, pair in pairs]
    ap_at, mean_ap = ap_summary(scores)
    return {
        "task": "mask",
        "instances": len(scores),
        "iou": {inst: s for (inst, _), s in zip(pairs, scores)},
        "ap_at": {f"{a:.2f}": v for a, v in ap_at.items()},
        "mean_ap": mean_ap,
    }


def run_metrics_keypoints(pred_path, gt_path, pck_alphas=(0.01, 0.02, 0.03,
                                                          0.04, 0.05)):
    """OKS-based AP/AR plus per-keypoint PCK at bbox-diagonal tolerances."""
    instances = simio.read_keypoint_instances(pred_path, gt_path)
    scores = [oks(inst) for _, inst in instances]
    ap_at, mean_ap = ap_summary(scores)
    # AR uses the same threshold-fraction rule on these matched instances.
    ar_at, mean_ar = ap_summary(scores)
    n_kp = instances[0][1].n_keypoints if instances else 0
    pck_table = {}
    for alpha in pck_alphas:
        row = {}
        for k in range(n_kp):
            if any(inst.visibility[k] > 0 for _, inst in instances):
                row[k] = pck([inst for _, inst in instances], k, alpha)
        pck_table[f"{alpha:.2f}"] = row
    return {
        "task": "keypoints",
        "instances": len(scores),
        "oks": {inst: s for (inst, _), s in zip(instances, scores)},
        "ap_at": {f"{a:.2f}": v for a, v in ap_at.items()},
        "mean_ap": mean_ap,
        "ar_at": {f"{a:.2f}": v for a, v in ar_at.items()},
        "mean_ar": mean_ar,
        "pck": pck_table,
    }


def format_metrics_table(result):
    """Human-readable table mirroring the headline metric columns."""
    lines = []
    shown = [0.50, 0.60, 0.70, 0.80]
    header = ["AP"] + [f"AP@.{int(a * 100):02d}" for a in shown]
    values = [result["mean_ap"]] + [result["ap_at"][f"{a:.2f}"] for a in shown]
    if result["task"] == "keypoints":
        header.append("AR")
        values.append(result["mean_ar"])
    lines.append("  ".join(f"{h:>8}" for h in header))
    lines.append("  ".join(f"{v:8.4f}" for v in values))
    if result["task"] == "keypoints" and result["pck"]:
        kp_ids = sorted(next(iter(result["pck"].values())).keys())
        lines.append("")
        lines.append("  ".join([f"{'Metric':>10}"] + [f"kp{k:>3}" for k in kp_ids]))
        for alpha, row in result["pck"].items():
            cells = [f"{row[k]:5.1f}" for k in kp_ids]
            lines.append("  ".join([f"{'PCK@' + alpha[2:]:>10}"] + cells))
    return "\n".join(lines)
