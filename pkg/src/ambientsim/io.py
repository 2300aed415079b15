"""File formats: raw float32 I/Q baseband payloads with JSON sidecars,
headered CSVs for points/velocity/heatmaps/metrics inputs, 16-bit big-endian
PGM heatmap images, and JSON manifests.

All writes are atomic (temp file + rename) and deterministic: no wall-clock
fields, sorted JSON keys, shortest round-trip float formatting.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import SchemaError, ValidationError
from .metrics import KeypointInstance, MaskPair
from .mixer import BasebandStream

FORMAT_VERSION = 1
BASEBAND_HEADER = "baseband.json"
SAMPLE_LAYOUT = "float32-le interleaved I/Q"


def _atomic_write_bytes(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def atomic_write_text(path, text):
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _fmt(x):
    return repr(float(x))


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_csv_rows(path, required):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise SchemaError("missing header row")
            missing = [c for c in required if c not in reader.fieldnames]
            if missing:
                raise SchemaError(f"missing column(s) {missing}", column=missing[0])
            return list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc


# --- baseband payloads ---

def channel_filename(index):
    return f"channel_{index:02d}.iq"

def write_baseband(stream, out_dir):
    """One float32-LE interleaved I/Q file per channel plus a JSON sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for i in range(stream.n_channels):
        ch = stream.channels[i].astype(np.complex64)
        inter = np.empty(2 * len(ch), dtype="<f4")
        inter[0::2] = ch.real
        inter[1::2] = ch.imag
        name = channel_filename(i)
        _atomic_write_bytes(os.path.join(out_dir, name), inter.tobytes())
        files.append(name)
    header = {
        "format_version": FORMAT_VERSION,
        "layout": SAMPLE_LAYOUT,
        "channels": stream.n_channels,
        "samples_per_channel": stream.n_samples,
        "sample_rate_hz": stream.sample_rate_hz,
        "t0_s": stream.t0_s,
        "channel_geometry_ref": stream.channel_geometry_ref,
        "files": files,
    }
    write_json(os.path.join(out_dir, BASEBAND_HEADER), header)
    return header


def read_baseband(in_dir):
    header = read_json(os.path.join(in_dir, BASEBAND_HEADER))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValidationError("format_version",
                              f"unsupported {header.get('format_version')}")
    n = int(header["samples_per_channel"])
    channels = np.empty((int(header["channels"]), n), dtype=complex)
    for i, name in enumerate(header["files"]):
        raw = np.fromfile(os.path.join(in_dir, name), dtype="<f4")
        if len(raw) != 2 * n:
            raise ValidationError(name, f"expected {2 * n} floats, got {len(raw)}")
        channels[i] = raw[0::2].astype(float) + 1j * raw[1::2].astype(float)
    return BasebandStream(channels, float(header["sample_rate_hz"]),
                          float(header["t0_s"]),
                          header.get("channel_geometry_ref", ""))


# --- sanitized points ---

def write_points_csv(path, times, points, valid, channels):
    """Long-format sanitized points: one row per valid (window, channel).

    times has shape (n_windows,); points/valid have shape (n_channels,
    n_windows); channels lists the channel indices.
    """
    rows = []
    for ci, ch in enumerate(channels):
        for wi in range(len(times)):
            if valid[ci, wi]:
                rows.append((_fmt(times[wi]), _fmt(points[ci, wi].real),
                             _fmt(points[ci, wi].imag), ch))
    write_csv(path, ("t_s", "re", "im", "channel"), rows)


def read_points_csv(path):
    """Returns (times, points, valid, channels) in the write_points_csv layout."""
    rows = _read_csv_rows(path, ("t_s", "re", "im", "channel"))
    if not rows:
        return np.empty(0), np.empty((0, 0), complex), np.empty((0, 0), bool), []
    per_channel = {}
    for idx, row in enumerate(rows):
        try:
            ch = int(row["channel"])
            t = float(row["t_s"])
            z = complex(float(row["re"]), float(row["im"]))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad numeric value: {exc}", row=idx + 2) from exc
        per_channel.setdefault(ch, []).append((t, z))
    channels = sorted(per_channel)
    all_times = sorted({t for entries in per_channel.values() for t, _ in entries})
    t_index = {t: i for i, t in enumerate(all_times)}
    points = np.zeros((len(channels), len(all_times)), dtype=complex)
    valid = np.zeros((len(channels), len(all_times)), dtype=bool)
    for ci, ch in enumerate(channels):
        for t, z in per_channel[ch]:
            points[ci, t_index[t]] = z
            valid[ci, t_index[t]] = True
    return np.array(all_times), points, valid, channels


# --- velocity trace ---

def write_velocity_csv(path, times, phase_rate, velocity):
    rows = [(_fmt(t), _fmt(r), _fmt(v))
            for t, r, v in zip(times, phase_rate, velocity)]
    write_csv(path, ("t_s", "phase_rate_rad_per_s", "velocity_mps"), rows)


def read_velocity_csv(path):
    rows = _read_csv_rows(path, ("t_s", "phase_rate_rad_per_s", "velocity_mps"))
    t = np.array([float(r["t_s"]) for r in rows])
    rate = np.array([float(r["phase_rate_rad_per_s"]) for r in rows])
    vel = np.array([float(r["velocity_mps"]) for r in rows])
    return t, rate, vel


# --- heatmaps ---

def write_pgm16(path, values, scale=None):
    """Max-normalized 16-bit big-endian binary PGM. Returns the scale used
    (value mapped to 65535); an all-zero frame records scale 0."""
    v = np.asarray(values, dtype=float)
    peak = float(v.max()) if v.size else 0.0
    scale = peak if scale is None else scale
    if scale > 0:
        pixels = np.clip(np.rint(v / scale * 65535.0), 0, 65535).astype(">u2")
    else:
        pixels = np.zeros(v.shape, dtype=">u2")
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n65535\n".encode("ascii")
    _atomic_write_bytes(path, header + pixels.tobytes())
    return scale


def read_pgm16(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5" or fields[3] != b"65535":
        raise ValidationError("pgm", "expected binary 16-bit P5")
    width, height = int(fields[1]), int(fields[2])
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=">u2", offset=pos, count=width * height)
    return pixels.reshape(height, width)


def write_heatmaps(out_dir, frames, grid, t_delta_s, frame_period_s):
    """Per-frame PGMs, a combined raw-value CSV, and a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    rows = []
    for idx, frame in enumerate(frames):
        name = f"frame_{idx:05d}.pgm"
        scale = write_pgm16(os.path.join(out_dir, name), frame.values)
        entries.append({"index": idx, "t_s": frame.t_s, "pgm": name,
                        "scale": scale})
        for pi in range(frame.values.shape[0]):
            for ti in range(frame.values.shape[1]):
                rows.append((idx, _fmt(frame.t_s), pi, ti,
                             _fmt(frame.values[pi, ti])))
    write_csv(os.path.join(out_dir, "heatmaps.csv"),
              ("frame", "t_s", "phi_index", "theta_index", "value"), rows)
    manifest = {
        "format_version": FORMAT_VERSION,
        "grid": {"theta_values": [float(v) for v in grid.theta_values],
                 "phi_values": [float(v) for v in grid.phi_values]},
        "t_delta_s": t_delta_s,
        "frame_period_s": frame_period_s,
        "frames": entries,
        "normalization": "per-frame max; raw values in heatmaps.csv",
    }
    write_json(os.path.join(out_dir, "heatmaps.json"), manifest)
    return manifest


def read_heatmaps_csv(path):
    """Returns {frame_index: (t_s, {(phi_i, theta_i): value})}."""
    rows = _read_csv_rows(path, ("frame", "t_s", "phi_index", "theta_index",
                                 "value"))
    frames = {}
    for r in rows:
        idx = int(r["frame"])
        t, cells = frames.setdefault(idx, (float(r["t_s"]), {}))
        cells[(int(r["phi_index"]), int(r["theta_index"]))] = float(r["value"])
    return frames


# --- metrics inputs ---

def write_mask_csv(path, masks):
    """Dense raster listing: one row per pixel, columns instance_id,row,col,value."""
    rows = []
    for inst_id, mask in masks:
        m = np.asarray(mask)
        for r in range(m.shape[0]):
            for c in range(m.shape[1]):
                rows.append((inst_id, r, c, int(bool(m[r, c]))))
    write_csv(path, ("instance_id", "row", "col", "value"), rows)


def _masks_from_rows(rows, path):
    rasters = {}
    for idx, row in enumerate(rows):
        try:
            inst = row["instance_id"]
            r, c, v = int(row["row"]), int(row["col"]), int(row["value"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad value: {exc}", row=idx + 2) from exc
        if v not in (0, 1):
            raise SchemaError(f"{path}: mask value must be 0/1", row=idx + 2,
                              column="value")
        rasters.setdefault(inst, {})[(r, c)] = v
    out = {}
    for inst, cells in rasters.items():
        h = max(r for r, _ in cells) + 1
        w = max(c for _, c in cells) + 1
        m = np.zeros((h, w), dtype=bool)
        for (r, c), v in cells.items():
            m[r, c] = bool(v)
        out[inst] = m
    return out


def read_mask_pairs(pred_path, gt_path):
    """Pairs of predicted/ground-truth masks keyed by instance_id."""
    pred = _masks_from_rows(_read_csv_rows(
        pred_path, ("instance_id", "row", "col", "value")), pred_path)
    gt = _masks_from_rows(_read_csv_rows(
        gt_path, ("instance_id", "row", "col", "value")), gt_path)
    if set(pred) != set(gt):
        raise SchemaError("prediction and ground-truth instance ids differ")
    pairs = []
    for inst in sorted(pred):
        p, g = pred[inst], gt[inst]
        h = max(p.shape[0], g.shape[0])
        w = max(p.shape[1], g.shape[1])
        pp = np.zeros((h, w), dtype=bool)
        gg = np.zeros((h, w), dtype=bool)
        pp[:p.shape[0], :p.shape[1]] = p
        gg[:g.shape[0], :g.shape[1]] = g
        pairs.append((inst, MaskPair(pp, gg)))
    return pairs


KEYPOINT_PRED_COLUMNS = ("instance_id", "keypoint_index", "x", "y")
KEYPOINT_GT_COLUMNS = ("instance_id", "keypoint_index", "x", "y", "visibility",
                       "scale", "bbox_h", "bbox_w")


def write_keypoint_pred_csv(path, rows):
    """rows: iterable of (instance_id, keypoint_index, x, y)."""
    write_csv(path, KEYPOINT_PRED_COLUMNS,
              [(i, k, _fmt(x), _fmt(y)) for i, k, x, y in rows])


def write_keypoint_gt_csv(path, rows):
    """rows: (instance_id, keypoint_index, x, y, visibility, scale, bbox_h,
    bbox_w[, falloff])."""
    out = []
    header = KEYPOINT_GT_COLUMNS
    with_falloff = any(len(r) > 8 for r in rows)
    if with_falloff:
        header = header + ("falloff",)
    for r in rows:
        base = (r[0], r[1], _fmt(r[2]), _fmt(r[3]), int(r[4]), _fmt(r[5]),
                _fmt(r[6]), _fmt(r[7]))
        if with_falloff:
            base = base + (_fmt(r[8]) if len(r) > 8 else "",)
        out.append(base)
    write_csv(path, header, out)


def read_keypoint_instances(pred_path, gt_path):
    """KeypointInstance per instance_id from the prediction/gt CSV pair."""
    pred_rows = _read_csv_rows(pred_path, KEYPOINT_PRED_COLUMNS)
    gt_rows = _read_csv_rows(gt_path, KEYPOINT_GT_COLUMNS)
    preds = {}
    for idx, r in enumerate(pred_rows):
        try:
            preds[(r["instance_id"], int(r["keypoint_index"]))] = (
                float(r["x"]), float(r["y"]))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{pred_path}: bad value: {exc}", row=idx + 2) from exc
    gts = {}
    for idx, r in enumerate(gt_rows):
        try:
            key = (r["instance_id"], int(r["keypoint_index"]))
            falloff = r.get("falloff")
            gts[key] = (float(r["x"]), float(r["y"]), int(r["visibility"]),
                        float(r["scale"]), float(r["bbox_h"]), float(r["bbox_w"]),
                        float(falloff) if falloff not in (None, "") else None)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{gt_path}: bad value: {exc}", row=idx + 2) from exc
    if set(preds) != set(gts):
        raise SchemaError("prediction and ground-truth (instance, keypoint) "
                          "sets differ")
    by_instance = {}
    for (inst, k), gt in sorted(gts.items()):
        by_instance.setdefault(inst, []).append((k, preds[(inst, k)], gt))
    instances = []
    for inst in sorted(by_instance):
        entries = sorted(by_instance[inst])
        pred_pts = [p for _, p, _ in entries]
        gt_pts = [(g[0], g[1]) for _, _, g in entries]
        vis = [g[2] for _, _, g in entries]
        scale = entries[0][2][3]
        bbox = (entries[0][2][4], entries[0][2][5])
        falloffs = [g[6] for _, _, g in entries]
        fall = None if any(f is None for f in falloffs) else np.array(falloffs)
        instances.append((inst, KeypointInstance(
            pred_points=np.array(pred_pts), gt_points=np.array(gt_pts),
            visibility=np.array(vis), scale=scale, falloff=fall, bbox_hw=bbox)))
    return instances
