"""Scenario files: a strict YAML schema binding together the OFDM config,
scene, array geometry, sanitizer tuning, beamforming grid, and run controls.

Loading materializes every default (including the QAM table drawn from
qam_seed) so the echoed scenario is self-contained, rejects unknown keys at
every nesting level, and honors AMBIENTSIM__SECTION__KEY environment
overrides. Presets bundled with the package can be referenced by name.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .beamformer import ArrayGeometry, DirectionGrid, l_array
from .errors import ParseError, ValidationError
from .mixer import DopplerConfig
from .sanitizer import SanitizeConfig
from .signal_model import (
    SPEED_OF_LIGHT,
    LinearTrajectory,
    OfdmConfig,
    Reflector,
    Scene,
    WaypointTrajectory,
    random_qpsk_symbols,
)

ENV_PREFIX = "AMBIENTSIM__"


@dataclass(frozen=True)
class TrafficModel:
    """Stream-level signal variability: per-symbol QAM redraws and bursty
    gating (fraction of active transmission gates).

    gate_period_s=None gates at the OFDM symbol period; TDD-style traffic
    gates at slot granularity (e.g. 0.5 ms).
    """

    per_symbol_qam: bool = False
    burst_duty: float = 1.0
    gate_period_s: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.burst_duty <= 1.0:
            raise ValidationError("burst_duty", "must lie in [0, 1]")
        if self.gate_period_s is not None and not self.gate_period_s > 0:
            raise ValidationError("gate_period_s", "must be > 0")


@dataclass(frozen=True)
class SwitchModel:
    """RF-switch model: idealized simultaneous channels, or round-robin
    time multiplexing with a per-channel dwell."""

    mode: str = "simultaneous"
    dwell_s: float | None = None

    def __post_init__(self):
        if self.mode not in ("simultaneous", "round_robin"):
            raise ValidationError("switch.mode",
                                  "must be 'simultaneous' or 'round_robin'")
        if self.dwell_s is not None and not self.dwell_s > 0:
            raise ValidationError("switch.dwell_s", "must be > 0")


@dataclass(frozen=True)
class BeamformConfig:
    """Direction grid plus the differencing lag and heatmap frame cadence."""

    grid: DirectionGrid
    frame_period_s: float
    t_delta_s: float
    extent_deg: float

    def __post_init__(self):
        if not self.frame_period_s > 0:
            raise ValidationError("beamform.frame_period_s", "must be > 0")
        if not self.t_delta_s > 0:
            raise ValidationError("beamform.t_delta_s", "must be > 0")


@dataclass(frozen=True)
class RunConfig:
    duration_s: float
    sample_rate_hz: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValidationError("run.duration_s", "must be >= 0")
        if not self.sample_rate_hz > 0:
            raise ValidationError("run.sample_rate_hz", "must be > 0")


@dataclass(frozen=True)
class Scenario:
    ofdm: OfdmConfig
    traffic: TrafficModel
    scene: Scene
    array: ArrayGeometry
    switch: SwitchModel
    sanitize: SanitizeConfig
    beamform: BeamformConfig
    run: RunConfig

    def doppler_config(self):
        return DopplerConfig(self.beamform.t_delta_s)

    @property
    def n_channels(self):
        return self.array.n_antennas


def _require_keys(mapping, allowed, context):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ValidationError(context, f"unknown keys {sorted(unknown)}")


def _as_complex(value, field):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ValidationError(field, "expected a number or [re, im] pair")


def _parse_ofdm(raw):
    _require_keys(raw, {"carrier_hz", "subcarrier_spacing_hz", "subcarriers",
                        "subcarrier_range", "qam_symbols", "qam_seed",
                        "symbol_period_s", "per_symbol_qam", "burst_duty",
                        "gate_period_s"},
                  "ofdm")
    if "carrier_hz" not in raw or "subcarrier_spacing_hz" not in raw:
        raise ValidationError("ofdm", "carrier_hz and subcarrier_spacing_hz required")
    if ("subcarriers" in raw) == ("subcarrier_range" in raw):
        raise ValidationError(
            "ofdm", "give exactly one of subcarriers / subcarrier_range")
    if "subcarriers" in raw:
        subs = tuple(int(k) for k in raw["subcarriers"])
    else:
        rng_spec = dict(raw["subcarrier_range"])
        _require_keys(rng_spec, {"first", "last", "exclude"},
                      "ofdm.subcarrier_range")
        exclude = set(rng_spec.get("exclude", [0]))
        subs = tuple(k for k in range(int(rng_spec["first"]),
                                      int(rng_spec["last"]) + 1)
                     if k not in exclude)
    qam_seed = int(raw.get("qam_seed", 0))
    if "qam_symbols" in raw:
        table = {int(k): _as_complex(v, f"ofdm.qam_symbols[{k}]")
                 for k, v in raw["qam_symbols"].items()}
    else:
        table = random_qpsk_symbols(subs, qam_seed)
    cfg = OfdmConfig(
        carrier_hz=float(raw["carrier_hz"]),
        subcarrier_spacing_hz=float(raw["subcarrier_spacing_hz"]),
        subcarriers=subs,
        qam_symbols=table,
        symbol_period_s=(float(raw["symbol_period_s"])
                         if raw.get("symbol_period_s") is not None else None),
    )
    gate = raw.get("gate_period_s")
    traffic = TrafficModel(per_symbol_qam=bool(raw.get("per_symbol_qam", False)),
                           burst_duty=float(raw.get("burst_duty", 1.0)),
                           gate_period_s=None if gate is None else float(gate))
    return cfg, traffic, qam_seed


def _parse_trajectory(raw, context):
    _require_keys(raw, {"linear", "waypoints"}, context)
    if ("linear" in raw) == ("waypoints" in raw):
        raise ValidationError(context, "give exactly one of linear / waypoints")
    if "linear" in raw:
        lin = dict(raw["linear"])
        _require_keys(lin, {"d0_m", "v_mps"}, f"{context}.linear")
        return LinearTrajectory(float(lin["d0_m"]), float(lin.get("v_mps", 0.0)))
    pts = raw["waypoints"]
    return WaypointTrajectory(tuple(float(p[0]) for p in pts),
                              tuple(float(p[1]) for p in pts))


def _parse_scene(raw):
    _require_keys(raw, {"beta", "noise_snr_db", "round_trip", "reflectors"},
                  "scene")
    reflectors = []
    for i, r in enumerate(raw.get("reflectors", [])):
        ctx = f"scene.reflectors[{i}]"
        _require_keys(r, {"alpha", "trajectory", "direction"}, ctx)
        direction = None
        if r.get("direction") is not None:
            d = dict(r["direction"])
            _require_keys(d, {"theta_deg", "phi_deg"}, f"{ctx}.direction")
            direction = (math.radians(float(d["theta_deg"])),
                         math.radians(float(d["phi_deg"])))
        reflectors.append(Reflector(
            alpha=_as_complex(r.get("alpha", 1.0), f"{ctx}.alpha"),
            trajectory=_parse_trajectory(dict(r["trajectory"]), f"{ctx}.trajectory"),
            direction=direction,
        ))
    noise = raw.get("noise_snr_db")
    return Scene(beta=_as_complex(raw.get("beta", 1.0), "scene.beta"),
                 reflectors=tuple(reflectors),
                 noise_snr_db=None if noise is None else float(noise),
                 round_trip=bool(raw.get("round_trip", False)))


def _parse_array(raw, wavelength_m):
    _require_keys(raw, {"rx_positions", "l_array", "switch"}, "array")
    if ("rx_positions" in raw) == ("l_array" in raw):
        raise ValidationError("array", "give exactly one of rx_positions / l_array")
    if "rx_positions" in raw:
        rx = np.array([[float(c) for c in p] for p in raw["rx_positions"]])
    else:
        spec = dict(raw["l_array"])
        _require_keys(spec, {"n_first", "n_second", "spacing_m"}, "array.l_array")
        spacing = spec.get("spacing_m")
        spacing = wavelength_m / 2.0 if spacing is None else float(spacing)
        rx = l_array(int(spec["n_first"]), int(spec["n_second"]), spacing)
    sw = dict(raw.get("switch") or {})
    _require_keys(sw, {"mode", "dwell_s"}, "array.switch")
    switch = SwitchModel(mode=sw.get("mode", "simultaneous"),
                         dwell_s=(float(sw["dwell_s"])
                                  if sw.get("dwell_s") is not None else None))
    return ArrayGeometry(rx, wavelength_m), switch


def _parse_sanitize(raw):
    fields = {"butterworth_order": int, "butterworth_cutoff_hz": float,
              "bias_k": int, "origin_radius_rms": float, "lof_k": int,
              "lof_threshold": float, "project_k": int, "rng_seed": int,
              "window_len_s": float}
    _require_keys(raw, fields, "sanitize")
    kwargs = {k: conv(raw[k]) for k, conv in fields.items() if k in raw}
    return SanitizeConfig(**kwargs)


def _parse_beamform(raw):
    _require_keys(raw, {"n_theta", "n_phi", "extent_deg", "frame_period_s",
                        "t_delta_s"}, "beamform")
    extent = float(raw.get("extent_deg", 60.0))
    grid = DirectionGrid.uniform(int(raw.get("n_theta", 100)),
                                 int(raw.get("n_phi", 100)), extent)
    period = float(raw.get("frame_period_s", 4.0 / 21.0))
    t_delta = raw.get("t_delta_s")
    t_delta = period if t_delta is None else float(t_delta)
    return BeamformConfig(grid, period, t_delta, extent)


def _parse_run(raw):
    _require_keys(raw, {"duration_s", "sample_rate_hz", "rng_seed"}, "run")
    for key in ("duration_s", "sample_rate_hz"):
        if key not in raw:
            raise ValidationError(f"run.{key}", "required")
    return RunConfig(float(raw["duration_s"]), float(raw["sample_rate_hz"]),
                     int(raw.get("rng_seed", 0)))


def scenario_from_dict(data):
    """Validate a raw scenario mapping and construct the typed Scenario."""
    if not isinstance(data, dict):
        raise ValidationError("scenario", "top level must be a mapping")
    _require_keys(data, {"ofdm", "scene", "array", "sanitize", "beamform", "run"},
                  "scenario")
    for key in ("ofdm", "run"):
        if key not in data:
            raise ValidationError(key, "required section")
    ofdm, traffic, _ = _parse_ofdm(dict(data["ofdm"]))
    scene = _parse_scene(dict(data.get("scene") or {}))
    wavelength = SPEED_OF_LIGHT / ofdm.carrier_hz
    array_raw = dict(data.get("array") or {"rx_positions": [[0.0, 0.0, 0.0]]})
    geometry, switch = _parse_array(array_raw, wavelength)
    sanitize = _parse_sanitize(dict(data.get("sanitize") or {}))
    beamform = _parse_beamform(dict(data.get("beamform") or {}))
    run = _parse_run(dict(data.get("run") or {}))
    return Scenario(ofdm=ofdm, traffic=traffic, scene=scene, array=geometry,
                    switch=switch, sanitize=sanitize, beamform=beamform, run=run)


def _apply_env_overrides(data, environ=None):
    environ = os.environ if environ is None else environ
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [seg.lower() for seg in name[len(ENV_PREFIX):].split("__") if seg]
        if not path:
            continue
        node = data
        for seg in path[:-1]:
            nxt = node.get(seg)
            if not isinstance(nxt, dict):
                nxt = {}
                node[seg] = nxt
            node = nxt
        try:
            node[path[-1]] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ParseError(None, f"env override {name}: {exc}") from exc
    return data


def preset_path(name):
    """Filesystem path of a bundled preset, or None if no such preset."""
    ref = resources.files("ambientsim").joinpath("presets", f"{name}.yaml")
    return ref if ref.is_file() else None


def load_scenario(path_or_name, environ=None):
    """Load and validate a scenario from a YAML file or bundled preset name."""
    ref = preset_path(str(path_or_name))
    if ref is not None and not os.path.exists(str(path_or_name)):
        text = ref.read_text()
    else:
        try:
            with open(path_or_name, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(None, f"cannot read {path_or_name}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(None if mark is None else mark.line + 1, str(exc)) from exc
    if data is None:
        data = {}
    data = _apply_env_overrides(data, environ)
    return scenario_from_dict(data)


def _complex_pair(z):
    return [float(z.real), float(z.imag)]


def scenario_to_dict(sc):
    """Fully materialized scenario mapping (self-contained echo)."""
    ofdm = {
        "carrier_hz": sc.ofdm.carrier_hz,
        "subcarrier_spacing_hz": sc.ofdm.subcarrier_spacing_hz,
        "subcarriers": list(sc.ofdm.subcarriers),
        "qam_symbols": {k: _complex_pair(v) for k, v in sc.ofdm.qam_symbols.items()},
        "symbol_period_s": sc.ofdm.symbol_period_s,
        "per_symbol_qam": sc.traffic.per_symbol_qam,
        "burst_duty": sc.traffic.burst_duty,
        "gate_period_s": sc.traffic.gate_period_s,
    }
    reflectors = []
    for r in sc.scene.reflectors:
        traj = r.trajectory
        if isinstance(traj, LinearTrajectory):
            tr = {"linear": {"d0_m": traj.d0_m, "v_mps": traj.v_mps}}
        else:
            tr = {"waypoints": [[t, d] for t, d in
                                zip(traj.times_s, traj.distances_m)]}
        entry = {"alpha": _complex_pair(r.alpha), "trajectory": tr}
        if r.direction is not None:
            entry["direction"] = {"theta_deg": math.degrees(r.direction[0]),
                                  "phi_deg": math.degrees(r.direction[1])}
        reflectors.append(entry)
    return {
        "ofdm": ofdm,
        "scene": {
            "beta": _complex_pair(sc.scene.beta),
            "noise_snr_db": sc.scene.noise_snr_db,
            "round_trip": sc.scene.round_trip,
            "reflectors": reflectors,
        },
        "array": {
            "rx_positions": [[float(c) for c in p] for p in sc.array.rx_positions],
            "switch": {"mode": sc.switch.mode, "dwell_s": sc.switch.dwell_s},
        },
        "sanitize": {
            "butterworth_order": sc.sanitize.butterworth_order,
            "butterworth_cutoff_hz": sc.sanitize.butterworth_cutoff_hz,
            "bias_k": sc.sanitize.bias_k,
            "origin_radius_rms": sc.sanitize.origin_radius_rms,
            "lof_k": sc.sanitize.lof_k,
            "lof_threshold": sc.sanitize.lof_threshold,
            "project_k": sc.sanitize.project_k,
            "rng_seed": sc.sanitize.rng_seed,
            "window_len_s": sc.sanitize.window_len_s,
        },
        "beamform": {
            "n_theta": len(sc.beamform.grid.theta_values),
            "n_phi": len(sc.beamform.grid.phi_values),
            "extent_deg": sc.beamform.extent_deg,
            "frame_period_s": sc.beamform.frame_period_s,
            "t_delta_s": sc.beamform.t_delta_s,
        },
        "run": {
            "duration_s": sc.run.duration_s,
            "sample_rate_hz": sc.run.sample_rate_hz,
            "rng_seed": sc.run.rng_seed,
        },
    }


def scenario_to_yaml(sc):
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False,
                          default_flow_style=None)
