"""Constellation sanitization: Butterworth low-pass, k-means bias correction,
origin-radius discard, LOF outlier removal, and dominant-cluster projection.

The Butterworth filter runs stream-wise before windowing (the causal,
"measured-stream" filter; the oracle path's ideal filter lives in the mixer
module). Each window of the filtered stream is then reduced to a single
representative complex point.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfilt

from .errors import (
    CutoffAboveNyquist,
    EmptyFrame,
    OrderZero,
    StageError,
    TooFewPoints,
    ValidationError,
)


@dataclass(frozen=True)
class ConstellationFrame:
    """Complex samples of one time window, viewed as points in the IQ plane."""

    points: np.ndarray
    window_start_s: float = 0.0
    window_len_s: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        if not (np.all(np.isfinite(pts.real)) and np.all(np.isfinite(pts.imag))):
            raise ValidationError("points", "non-finite point")
        if not self.window_len_s > 0:
            raise ValidationError("window_len_s", "must be > 0")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def replace_points(self, pts):
        return ConstellationFrame(pts, self.window_start_s, self.window_len_s)


@dataclass(frozen=True)
class SanitizeConfig:
    """Tuning for the sanitization pipeline.

    origin_radius_rms scales the per-frame RMS amplitude to get the discard
    radius (scale-free). bias_k is fixed at 3 clusters by the pipeline's
    design; it is exposed for experimentation only.
    """

    butterworth_order: int = 4
    butterworth_cutoff_hz: float = 200.0
    bias_k: int = 3
    origin_radius_rms: float = 0.05
    lof_k: int = 20
    lof_threshold: float = 1.5
    project_k: int = 3
    rng_seed: int = 0
    window_len_s: float = 0.01

    def __post_init__(self):
        for name in ("butterworth_order", "bias_k", "lof_k", "project_k"):
            if getattr(self, name) < 1:
                raise ValidationError(name, "must be >= 1")
        if self.origin_radius_rms < 0:
            raise ValidationError("origin_radius_rms", "must be >= 0")
        if not self.lof_threshold > 1:
            raise ValidationError("lof_threshold", "must be > 1")
        if not self.window_len_s > 0:
            raise ValidationError("window_len_s", "must be > 0")


def butterworth_lowpass(x, sample_rate_hz, order, cutoff_hz):
    """Causal Butterworth low-pass (bilinear transform with prewarping).

    Real and imaginary parts are filtered independently (real coefficients
    applied to the complex sequence).
    """
    if order < 1:
        raise OrderZero(f"order {order} < 1")
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise CutoffAboveNyquist(
            f"cutoff {cutoff_hz:g} outside (0, {sample_rate_hz / 2:g})")
    sos = butter(order, cutoff_hz, btype="low", fs=sample_rate_hz, output="sos")
    return sosfilt(sos, np.asarray(x, dtype=complex))


def _as_xy(points):
    pts = np.asarray(points, dtype=complex).ravel()
    return np.column_stack([pts.real, pts.imag])


def _kmeans_once(xy, k, rng):
    """One k-means++ seeding followed by Lloyd to an assignment fixpoint
    (or 100 iterations); empty clusters are re-seeded to the point farthest
    from its assigned centroid."""
    n = len(xy)
    centers = np.empty((k, 2))
    centers[0] = xy[rng.integers(n)]
    d2 = np.sum((xy - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[j] = xy[rng.integers(n)]
        else:
            pick = np.searchsorted(np.cumsum(d2), rng.random() * total)
            centers[j] = xy[min(int(pick), n - 1)]
        d2 = np.minimum(d2, np.sum((xy - centers[j]) ** 2, axis=1))

    assign = np.full(n, -1)
    for _ in range(100):
        dists = np.sum((xy[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dists, axis=1)
        counts = np.bincount(new_assign, minlength=k)
        for j in np.nonzero(counts == 0)[0]:
            # farthest point from its own centroid takes over the empty slot
            far = int(np.argmax(dists[np.arange(n), new_assign]))
            centers[j] = xy[far]
            new_assign[far] = j
            dists[far, :] = -1.0  # never the farthest again
            counts = np.bincount(new_assign, minlength=k)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = xy[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    sse = float(np.sum(np.sum((xy - centers[assign]) ** 2, axis=1)))
    return assign, centers, sse


def kmeans(points, k, seed, n_init=4):
    """Seeded k-means on complex points: k-means++ init, Lloyd to fixpoint.

    Runs n_init independent seeded restarts and keeps the lowest-distortion
    fixpoint (first on ties), which keeps the pipeline off bad local minima.
    Deterministic for a given seed.

    Returns (assignments, centroids) with complex centroids of length k.
    """
    xy = _as_xy(points)
    n = len(xy)
    if n < k:
        raise TooFewPoints(f"{n} points < k={k}")
    best = None
    for restart in range(max(1, n_init)):
        rng = np.random.default_rng([seed, restart])
        assign, centers, sse = _kmeans_once(xy, k, rng)
        if best is None or sse < best[2]:
            best = (assign, centers, sse)
    assign, centers, _ = best
    return assign, centers[:, 0] + 1j * centers[:, 1]


def bias_correct(frame, cfg):
    """Translate the frame so the cluster nearest the origin sits at zero.

    The near-origin cluster is presumed to be the static signal component;
    subtracting its centroid removes the common spatial bias.
    """
    if len(frame) < cfg.bias_k:
        raise TooFewPoints(f"{len(frame)} points < bias_k={cfg.bias_k}")
    _, centroids = kmeans(frame.points, cfg.bias_k, cfg.rng_seed)
    offset = centroids[np.argmin(np.abs(centroids))]
    return frame.replace_points(frame.points - offset)


def discard_near_origin(frame, radius):
    """Keep exactly the points with |p| > radius (strict)."""
    if radius < 0:
        raise ValidationError("radius", "must be >= 0")
    return frame.replace_points(frame.points[np.abs(frame.points) > radius])


def _k_nearest(xy, k, chunk=512):
    """Indices and distances of each point's k nearest neighbors (self excluded).

    Ties at the neighborhood boundary are broken by insertion order: points
    with strictly smaller distance are always in, and equal-distance
    candidates are admitted lowest-index-first.
    """
    n = len(xy)
    norms = np.sum(xy * xy, axis=1)
    nbr_idx = np.empty((n, k), dtype=int)
    nbr_dist = np.empty((n, k))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d2 = norms[lo:hi, None] + norms[None, :] - 2.0 * (xy[lo:hi] @ xy.T)
        np.maximum(d2, 0.0, out=d2)
        rows = np.arange(lo, hi)
        d2[rows - lo, rows] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        part.sort(axis=1)  # ascending index before the stable distance sort
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.argsort(pd, axis=1, kind="stable")
        sel = np.take_along_axis(part, order, axis=1)
        seld = np.take_along_axis(pd, order, axis=1)
        kth = seld[:, -1]
        # rows where excluded points tie the boundary distance need the exact
        # lowest-index-first selection
        ties_total = np.count_nonzero(d2 == kth[:, None], axis=1)
        ties_kept = np.count_nonzero(seld == kth[:, None], axis=1)
        for r in np.nonzero(ties_total != ties_kept)[0]:
            row = d2[r]
            kv = kth[r]
            strict = np.nonzero(row < kv)[0]
            tied = np.nonzero(row == kv)[0][:k - len(strict)]
            cand = np.concatenate([strict, tied])
            o = np.argsort(row[cand], kind="stable")
            sel[r] = cand[o]
            seld[r] = row[cand][o]
        nbr_idx[lo:hi] = sel
        nbr_dist[lo:hi] = np.sqrt(seld)
    return nbr_idx, nbr_dist


def local_outlier_factor(points, lof_k):
    """LOF score per point (k-distance / reachability / local density ratio).

    Zero mean reachability (exact duplicates) is guarded with a small
    scale-aware epsilon so duplicate clusters score 1 instead of dividing
    by zero.
    """
    xy = _as_xy(points)
    n = len(xy)
    if n <= lof_k:
        raise TooFewPoints(f"{n} points <= lof_k={lof_k}")
    nbr_idx, nbr_dist = _k_nearest(xy, lof_k)
    k_distance = nbr_dist[:, -1]
    reach = np.maximum(k_distance[nbr_idx], nbr_dist)
    guard = 1e-10 * max(float(k_distance.max()), 1e-300) + 1e-300
    lrd = 1.0 / (reach.mean(axis=1) + guard)
    return lrd[nbr_idx].mean(axis=1) / lrd


def lof_filter(frame, lof_k, threshold):
    """Drop points whose Local Outlier Factor exceeds the threshold."""
    scores = local_outlier_factor(frame.points, lof_k)
    return frame.replace_points(frame.points[scores <= threshold])


def project(frame, project_k, seed):
    """Reduce a frame to the centroid of its dominant cluster.

    Fewer points than project_k collapse to the plain centroid. Cluster-size
    ties resolve to the smaller cluster index of the seeded k-means result.
    """
    if len(frame) == 0:
        raise EmptyFrame("cannot project an empty frame")
    if len(frame) < project_k:
        return complex(frame.points.mean())
    assign, centroids = kmeans(frame.points, project_k, seed)
    counts = np.bincount(assign, minlength=project_k)
    return complex(centroids[int(np.argmax(counts))])


def sanitize_frame(frame, cfg):
    """Run bias -> discard -> LOF -> project on one constellation frame.

    Stages whose minimum point count is not met are skipped (small windows
    stay usable); an exhausted frame raises EmptyFrame. Other stage errors
    propagate wrapped in StageError with the stage name.
    """
    if len(frame) == 0:
        raise EmptyFrame("empty window")
    stage = "bias_correct"
    try:
        if len(frame) >= cfg.bias_k:
            frame = bias_correct(frame, cfg)
        stage = "discard_near_origin"
        rms = math.sqrt(float(np.mean(np.abs(frame.points) ** 2)))
        frame = discard_near_origin(frame, cfg.origin_radius_rms * rms)
        if len(frame) == 0:
            raise EmptyFrame("all points within the origin radius")
        stage = "lof_filter"
        if len(frame) > cfg.lof_k:
            frame = lof_filter(frame, cfg.lof_k, cfg.lof_threshold)
        if len(frame) == 0:
            raise EmptyFrame("all points flagged as outliers")
        stage = "project"
        return project(frame, cfg.project_k, cfg.rng_seed)
    except EmptyFrame:
        raise
    except Exception as exc:  # noqa: BLE001 - tag and re-raise per contract
        raise StageError(stage, exc) from exc


def sanitize_window(raw, sample_rate_hz, cfg):
    """Sanitize one raw window: Butterworth low-pass, then the frame pipeline."""
    raw = np.asarray(raw, dtype=complex)
    if len(raw) == 0:
        raise EmptyFrame("empty window")
    filtered = butterworth_lowpass(raw, sample_rate_hz,
                                   cfg.butterworth_order, cfg.butterworth_cutoff_hz)
    frame = ConstellationFrame(filtered, 0.0, len(raw) / sample_rate_hz)
    return sanitize_frame(frame, cfg)


def sanitize_stream(samples, sample_rate_hz, cfg, t0_s=0.0, threads=1):
    """Filter a stream once, window it, and sanitize every window.

    Returns (times, points, valid): window-center timestamps on the full
    window grid, the projected point per window, and a validity mask (False
    where the window degenerated to EmptyFrame; its point slot holds 0).
    """
    samples = np.asarray(samples, dtype=complex)
    win = int(round(cfg.window_len_s * sample_rate_hz))
    if win < 1:
        raise ValidationError("window_len_s", "window shorter than one sample")
    filtered = butterworth_lowpass(samples, sample_rate_hz,
                                   cfg.butterworth_order, cfg.butterworth_cutoff_hz)
    n_win = len(samples) // win
    times = t0_s + (np.arange(n_win) + 0.5) * cfg.window_len_s
    points = np.zeros(n_win, dtype=complex)
    valid = np.zeros(n_win, dtype=bool)

    def run(i):
        frame = ConstellationFrame(filtered[i * win:(i + 1) * win],
                                   t0_s + i * cfg.window_len_s, cfg.window_len_s)
        try:
            return i, sanitize_frame(frame, cfg), True
        except EmptyFrame:
            return i, 0j, False

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n_win)))
    else:
        results = [run(i) for i in range(n_win)]
    for i, point, ok in results:
        points[i] = point
        valid[i] = ok
    return times, points, valid
