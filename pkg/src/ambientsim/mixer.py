"""Self-mixing baseband extraction and Doppler/velocity estimation.

The received waveform multiplied by the conjugate reference collapses to a
near-DC term whose phase tracks path distance; an ideal low-pass isolates
that term. The analytic model evaluates the same term directly from the
scene, which is what the time-domain oracle is checked against. Velocity
comes from the unwrapped phase differenced over a fixed lag.

The ideal brick-wall filter here belongs to the oracle path; the causal
Butterworth used on "measured" streams lives in the sanitizer module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CutoffAboveNyquist,
    LengthMismatch,
    RateMismatch,
    SequenceTooShort,
    ValidationError,
    ZeroMagnitudeSample,
)
from .signal_model import SPEED_OF_LIGHT, SampledSignal, trajectory_distance


@dataclass(frozen=True)
class BasebandStream:
    """Per-RX-antenna complex baseband sample sequences.

    channels has shape (n_channels, n_samples); channel i corresponds to
    antenna index i of the geometry named by channel_geometry_ref.
    """

    channels: np.ndarray
    sample_rate_hz: float
    t0_s: float = 0.0
    channel_geometry_ref: str = ""

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=complex))
        object.__setattr__(self, "channels", ch)
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz", "must be > 0")

    @property
    def n_channels(self):
        return self.channels.shape[0]

    @property
    def n_samples(self):
        return self.channels.shape[1]

    def times(self):
        return self.t0_s + np.arange(self.n_samples) / self.sample_rate_hz

    def sample_index(self, t_s, tol_fraction=0.5):
        """Nearest sample index for time t_s, within tol_fraction of a period."""
        pos = (t_s - self.t0_s) * self.sample_rate_hz
        idx = int(np.floor(pos + 0.5))
        if idx < 0 or idx >= self.n_samples or abs(pos - idx) > tol_fraction + 1e-9:
            return None
        return idx


@dataclass(frozen=True)
class DopplerConfig:
    """Differencing lag and low-pass cutoff for Doppler extraction.

    lowpass_cutoff_hz=None resolves to half the subcarrier spacing at use.
    """

    t_delta_s: float
    lowpass_cutoff_hz: float | None = None

    def __post_init__(self):
        if not self.t_delta_s > 0:
            raise ValidationError("t_delta_s", "must be > 0")
        if self.lowpass_cutoff_hz is not None and not self.lowpass_cutoff_hz > 0:
            raise ValidationError("lowpass_cutoff_hz", "must be > 0")

    def lag_samples(self, sample_rate_hz):
        """t_delta_s expressed in samples; must be an integer multiple."""
        lag = self.t_delta_s * sample_rate_hz
        n = int(round(lag))
        if n < 1 or abs(lag - n) > 1e-6 * max(1.0, lag):
            raise ValidationError(
                "t_delta_s", f"{self.t_delta_s} s is not an integer multiple of "
                f"the sample period 1/{sample_rate_hz}")
        return n


def self_mix(received, reference):
    """Elementwise product of the received signal with the conjugated reference."""
    if len(received.samples) != len(reference.samples):
        raise LengthMismatch(
            f"{len(received.samples)} vs {len(reference.samples)} samples")
    if received.sample_rate_hz != reference.sample_rate_hz:
        raise RateMismatch(
            f"{received.sample_rate_hz} vs {reference.sample_rate_hz} Hz")
    if received.t0_s != reference.t0_s:
        raise RateMismatch(f"t0 {received.t0_s} vs {reference.t0_s} s")
    return SampledSignal(received.samples * np.conj(reference.samples),
                         received.sample_rate_hz, received.t0_s)


def lowpass_isolate(signal, cutoff_hz):
    """Ideal (brick-wall) low-pass: zero all DFT bins above the cutoff.

    Zero-phase and non-causal by design; exactness matters more than
    causality on the oracle path. Bins at exactly the cutoff are kept.
    """
    fs = signal.sample_rate_hz
    if not cutoff_hz < fs / 2:
        raise CutoffAboveNyquist(f"cutoff {cutoff_hz:g} >= Nyquist {fs / 2:g}")
    spectrum = np.fft.fft(signal.samples)
    freqs = np.fft.fftfreq(len(signal.samples), d=1.0 / fs)
    spectrum[np.abs(freqs) > cutoff_hz] = 0.0
    return SampledSignal(np.fft.ifft(spectrum), fs, signal.t0_s)


def analytic_baseband(cfg, scene, t_s):
    """Closed-form baseband at time(s) t_s, per reflector and total.

    z_l(t) = |beta|^2 * alpha_l * sum_k |X_k|^2 *
             exp(-j*2*pi*(f_c + k*spacing) * tau_l(t)),
    with tau_l from the scene's distance convention and d_l frozen at each
    evaluation instant (quasi-static).

    Returns (per_reflector, total); per_reflector has shape (n_reflectors,)
    for scalar t or (n_reflectors, n_times) for array t.
    """
    scalar = np.isscalar(t_s)
    t = np.atleast_1d(np.asarray(t_s, dtype=float))
    freqs = cfg.subcarrier_freqs_hz()
    weights = np.abs(cfg.qam_vector()) ** 2
    gain = abs(scene.beta) ** 2
    per_m = scene.delay_factor()
    per = np.empty((len(scene.reflectors), len(t)), dtype=complex)
    chunk = 1 << 16
    for li, refl in enumerate(scene.reflectors):
        tau = trajectory_distance(refl, t) * per_m
        for i in range(0, len(t), chunk):
            ph = np.exp(-2j * np.pi * np.outer(tau[i:i + chunk], freqs))
            per[li, i:i + chunk] = gain * refl.alpha * (ph @ weights)
    total = per.sum(axis=0) if len(scene.reflectors) else np.zeros(len(t), complex)
    if scalar:
        return per[:, 0], complex(total[0])
    return per, total


def phase_to_distance_slope(cfg):
    """Magnitude of d(arg z)/dd for the carrier: 2*pi*f_c/c (rad per meter)."""
    return 2.0 * math.pi * cfg.carrier_hz / SPEED_OF_LIGHT


def unwrap_phase(phases):
    """Remove 2*pi discontinuities: jumps above pi are folded back."""
    return np.unwrap(np.asarray(phases, dtype=float))


@dataclass(frozen=True)
class VelocityEstimate:
    """Lagged phase-rate sequence and its velocity conversion.

    phase_rate_rad_per_s is the literal lagged difference of unwrapped phase
    over the lag (dimensionally rad/s); velocity_mps applies the carrier
    conversion -c/(2*pi*f_c) (halved again in round-trip mode). Element i
    corresponds to input sample i + lag_samples.
    """

    phase_rate_rad_per_s: np.ndarray
    velocity_mps: np.ndarray
    lag_samples: int


def estimate_velocity(z, sample_rate_hz, cfg, dc, round_trip=False):
    """Velocity from unwrapped baseband phase, differenced over dc.t_delta_s.

    Raises ZeroMagnitudeSample when any sample is below 1e-12 of the peak
    magnitude (phase undefined there), and SequenceTooShort when the lag
    does not fit.
    """
    z = np.asarray(z, dtype=complex)
    lag = dc.lag_samples(sample_rate_hz)
    if len(z) <= lag:
        raise SequenceTooShort(f"{len(z)} samples <= lag of {lag}")
    mags = np.abs(z)
    peak = mags.max()
    if peak == 0.0 or np.any(mags < 1e-12 * peak):
        raise ZeroMagnitudeSample("sample magnitude below 1e-12 of peak")
    phi = np.unwrap(np.angle(z))
    rate = (phi[lag:] - phi[:-lag]) / dc.t_delta_s
    factor = 2.0 if round_trip else 1.0
    velocity = -SPEED_OF_LIGHT * rate / (factor * 2.0 * math.pi * cfg.carrier_hz)
    return VelocityEstimate(rate, velocity, lag)
