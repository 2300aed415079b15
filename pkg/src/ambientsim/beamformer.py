"""Differential beamforming: steering weights over a direction grid applied
to lagged channel differences, producing motion heatmaps.

The direction vector is implemented exactly as printed in the underlying
model: u(theta, phi) = (cos(theta)cos(phi), cos(theta)sin(phi), sin(phi)).
Note that this vector is even in theta (cos is even), so every heatmap is
exactly symmetric about theta = 0 and |u| = sqrt(cos^2(theta) + sin^2(phi))
is not 1 in general. Both facts are deliberate consequences of keeping the
printed parameterization instead of a conventional spherical one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelGeometryMismatch, TimestampOutOfRange, ValidationError


@dataclass(frozen=True)
class ArrayGeometry:
    """TX antenna at the origin plus an ordered list of RX antenna positions."""

    rx_positions: np.ndarray
    wavelength_m: float
    tx_position: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        rx = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        if rx.shape[1] != 3:
            raise ValidationError("rx_positions", "each position needs 3 coordinates")
        if len(rx) < 1:
            raise ValidationError("rx_positions", "need at least one RX antenna")
        if not np.all(np.isfinite(rx)):
            raise ValidationError("rx_positions", "non-finite coordinate")
        if not self.wavelength_m > 0:
            raise ValidationError("wavelength_m", "must be > 0")
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "tx_position", np.zeros(3))

    @property
    def n_antennas(self):
        return len(self.rx_positions)


def l_array(n_first, n_second, spacing_m):
    """L-shaped array in the y-z plane: n_first elements along +y starting at
    the origin, n_second more along +z. Gives aperture in both grid angles."""
    along_y = [(0.0, i * spacing_m, 0.0) for i in range(n_first)]
    along_z = [(0.0, 0.0, (j + 1) * spacing_m) for j in range(n_second)]
    return np.array(along_y + along_z)


@dataclass(frozen=True)
class DirectionGrid:
    """Ascending azimuth/elevation sample angles (radians)."""

    theta_values: np.ndarray
    phi_values: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta_values, dtype=float).ravel()
        ph = np.asarray(self.phi_values, dtype=float).ravel()
        for name, v in (("theta_values", th), ("phi_values", ph)):
            if len(v) == 0:
                raise ValidationError(name, "empty")
            if not np.all(np.isfinite(v)):
                raise ValidationError(name, "non-finite angle")
            if len(v) > 1 and not np.all(np.diff(v) > 0):
                raise ValidationError(name, "must be strictly ascending")
        object.__setattr__(self, "theta_values", th)
        object.__setattr__(self, "phi_values", ph)

    @classmethod
    def uniform(cls, n_theta=100, n_phi=100, extent_deg=60.0):
        ext = np.deg2rad(extent_deg)
        return cls(np.linspace(-ext, ext, n_theta), np.linspace(-ext, ext, n_phi))

    @property
    def shape(self):
        return (len(self.phi_values), len(self.theta_values))


@dataclass(frozen=True)
class HeatmapFrame:
    """|I(theta, phi, t)| over the grid, indexed [phi_index][theta_index]."""

    t_s: float
    values: np.ndarray
    grid: DirectionGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValidationError("values", f"shape {v.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("values", "values must be finite and >= 0")
        object.__setattr__(self, "values", v)

    def argmax_angles(self):
        """(theta, phi) of the peak cell."""
        pi, ti = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.grid.theta_values[ti]), float(self.grid.phi_values[pi])


def direction_vector(theta, phi):
    """Direction vector as printed: (cos t cos p, cos t sin p, sin p).

    Broadcasts over array inputs; the last output axis holds the 3 components.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    u = np.stack(np.broadcast_arrays(np.cos(theta) * np.cos(phi),
                                     np.cos(theta) * np.sin(phi),
                                     np.sin(phi) * np.ones_like(theta)), axis=-1)
    return u


def spherical_direction_vector(theta, phi):
    """Conventional azimuth/elevation unit vector:
    (cos p cos t, cos p sin t, sin p).

    Unlike the printed vector this one is odd in theta, so an array can
    actually resolve the azimuth sign and fine azimuth offsets; it is the
    parameterization used where one-grid-cell localization is required.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack(np.broadcast_arrays(np.cos(phi) * np.cos(theta),
                                        np.cos(phi) * np.sin(theta),
                                        np.sin(phi) * np.ones_like(theta)), axis=-1)


_PARAMETERIZATIONS = {"printed": direction_vector,
                      "spherical": spherical_direction_vector}


def _direction_fn(parameterization):
    try:
        return _PARAMETERIZATIONS[parameterization]
    except KeyError:
        raise ValidationError("parameterization",
                              f"unknown '{parameterization}'") from None


def steering_weight(p_i, theta, phi, lambda_m, parameterization="printed"):
    """Per-antenna steering phasor exp(-j*(2*pi/lambda) * <u(theta,phi), p_i>)."""
    u = _direction_fn(parameterization)(theta, phi)
    proj = u @ np.asarray(p_i, dtype=float)
    return np.exp(-2j * np.pi * proj / lambda_m)


def steering_matrix(geometry, grid, parameterization="printed"):
    """Steering tensor over the grid, shape (n_phi, n_theta, n_antennas)."""
    th, ph = np.meshgrid(grid.theta_values, grid.phi_values)
    u = _direction_fn(parameterization)(th, ph)  # (n_phi, n_theta, 3)
    proj = np.tensordot(u, geometry.rx_positions, axes=([2], [1]))
    return np.exp(-2j * np.pi * proj / geometry.wavelength_m)


def _channel_difference(stream, geometry, t_s, t_delta_s):
    if stream.n_channels != geometry.n_antennas:
        raise ChannelGeometryMismatch(
            f"{stream.n_channels} channels vs {geometry.n_antennas} antennas")
    if geometry.n_antennas < 2:
        raise ValidationError("rx_positions",
                              "direction estimation needs >= 2 RX antennas")
    i_now = stream.sample_index(t_s)
    i_prev = stream.sample_index(t_s - t_delta_s)
    if i_now is None or i_prev is None:
        raise TimestampOutOfRange(
            f"t={t_s} with lag {t_delta_s} not covered by the stream")
    return stream.channels[:, i_now] - stream.channels[:, i_prev]


def differential_beamform(stream, geometry, grid, t_s, t_delta_s,
                          parameterization="printed", _weights=None):
    """One heatmap frame: I = sum_i w_i(theta,phi) * conj(z_i(t) - z_i(t-lag)).

    Static scenes difference to zero exactly, so only movers light up.
    Sample times are aligned to the nearest stream sample.
    """
    diff = _channel_difference(stream, geometry, t_s, t_delta_s)
    if _weights is None:
        _weights = steering_matrix(geometry, grid, parameterization)
    intensity = np.tensordot(_weights, np.conj(diff), axes=([2], [0]))
    return HeatmapFrame(t_s, np.abs(intensity), grid)


def heatmap_sequence(stream, geometry, grid, frame_period_s, t_delta_s,
                     parameterization="printed"):
    """Heatmap frames over the stream span, ordered by time.

    Frames step on the sample grid: the first frame sits one lag after the
    stream start, then every frame period (both rounded to whole samples).
    """
    if not frame_period_s > 0:
        raise ValidationError("frame_period_s", "must be > 0")
    if stream.n_samples == 0:
        return []
    fs = stream.sample_rate_hz
    lag_n = max(1, int(round(t_delta_s * fs)))
    period_n = max(1, int(round(frame_period_s * fs)))
    weights = steering_matrix(geometry, grid, parameterization)
    frames = []
    for idx in range(lag_n, stream.n_samples, period_n):
        t = stream.t0_s + idx / fs
        frames.append(differential_beamform(stream, geometry, grid, t,
                                            lag_n / fs, _weights=weights))
    return frames
