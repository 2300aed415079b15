"""Ambient OFDM waveform synthesis and multipath propagation.

The waveform model is a sum of QAM-weighted complex subcarriers around a
carrier frequency. Propagation applies a complex forward-chain gain and a
set of moving reflectors, each delaying the waveform by its path distance
over the speed of light. Delays are realized by analytic re-evaluation of
the synthesis formula at the delayed time, so fractional delays are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySubcarrierSet,
    SampleRateTooLow,
    TrajectoryOutOfRange,
    ValidationError,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s


def random_qpsk_symbols(subcarriers, seed):
    """Draw one unit-modulus QPSK symbol per subcarrier from a seeded generator."""
    rng = np.random.default_rng(seed)
    corners = (np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2.0))
    picks = rng.integers(0, 4, size=len(subcarriers))
    return {k: complex(corners[p]) for k, p in zip(subcarriers, picks)}


@dataclass(frozen=True)
class OfdmConfig:
    """One OFDM symbol's worth of signal structure.

    carrier_hz:            center frequency f_c
    subcarrier_spacing_hz: spacing between adjacent subcarriers
    subcarriers:           ordered signed subcarrier indices (no duplicates)
    qam_symbols:           complex QAM value per subcarrier index
    symbol_period_s:       symbol duration; defaults to 1/spacing
    """

    carrier_hz: float
    subcarrier_spacing_hz: float
    subcarriers: tuple
    qam_symbols: dict
    symbol_period_s: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ValidationError("carrier_hz", "must be > 0")
        if not self.subcarrier_spacing_hz > 0:
            raise ValidationError("subcarrier_spacing_hz", "must be > 0")
        if not self.subcarrier_spacing_hz < self.carrier_hz:
            raise ValidationError("subcarrier_spacing_hz", "must be < carrier_hz")
        subs = tuple(int(k) for k in self.subcarriers)
        if len(subs) == 0:
            raise EmptySubcarrierSet("subcarrier set is empty")
        if len(set(subs)) != len(subs):
            raise ValidationError("subcarriers", "duplicate indices")
        object.__setattr__(self, "subcarriers", subs)
        qam = {int(k): complex(v) for k, v in self.qam_symbols.items()}
        missing = [k for k in subs if k not in qam]
        extra = [k for k in qam if k not in subs]
        if missing or extra:
            raise ValidationError(
                "qam_symbols", f"must cover exactly the subcarrier set "
                f"(missing {missing}, extra {extra})")
        if not all(np.isfinite(v.real) and np.isfinite(v.imag) for v in qam.values()):
            raise ValidationError("qam_symbols", "non-finite QAM value")
        object.__setattr__(self, "qam_symbols", qam)
        period = self.symbol_period_s
        if period is None:
            period = 1.0 / self.subcarrier_spacing_hz
        if not period > 0:
            raise ValidationError("symbol_period_s", "must be > 0")
        object.__setattr__(self, "symbol_period_s", float(period))

    def qam_vector(self):
        """QAM values ordered like ``subcarriers``."""
        return np.array([self.qam_symbols[k] for k in self.subcarriers])

    def subcarrier_freqs_hz(self):
        """Absolute subcarrier frequencies f_c + k*spacing."""
        k = np.asarray(self.subcarriers, dtype=float)
        return self.carrier_hz + k * self.subcarrier_spacing_hz

    def power_sum(self):
        """Sum of |X_k|^2 over the subcarrier set."""
        return float(np.sum(np.abs(self.qam_vector()) ** 2))


@dataclass(frozen=True)
class LinearTrajectory:
    """Path distance d(t) = d0 + v*t, defined for all t."""

    d0_m: float
    v_mps: float = 0.0

    def distance(self, t_s):
        d = self.d0_m + self.v_mps * np.asarray(t_s, dtype=float)
        if np.any(d < 0):
            raise ValidationError("trajectory", "negative path distance")
        return d


@dataclass(frozen=True)
class WaypointTrajectory:
    """Piecewise-linear path distance through (t, d) waypoints."""

    times_s: tuple
    distances_m: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.times_s)
        d = tuple(float(v) for v in self.distances_m)
        if len(t) != len(d) or len(t) < 2:
            raise ValidationError("trajectory", "need >= 2 matching (t, d) waypoints")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValidationError("trajectory", "waypoint times must strictly increase")
        if any(v < 0 for v in d):
            raise ValidationError("trajectory", "negative path distance")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "distances_m", d)

    def distance(self, t_s):
        t = np.asarray(t_s, dtype=float)
        if np.any(t < self.times_s[0]) or np.any(t > self.times_s[-1]):
            raise TrajectoryOutOfRange(
                f"t outside [{self.times_s[0]}, {self.times_s[-1]}]")
        return np.interp(t, self.times_s, self.distances_m)


@dataclass(frozen=True)
class Reflector:
    """One multipath reflector: complex attenuation plus a distance trajectory.

    ``direction`` optionally pins the reflector to an arrival direction
    (theta_rad, phi_rad); the simulator then offsets the path length per RX
    antenna by the far-field inner product used by the beamformer.
    """

    alpha: complex
    trajectory: object
    direction: tuple | None = None


@dataclass(frozen=True)
class Scene:
    """Forward-chain gain, reflector set, and optional additive noise.

    noise_snr_db is measured against the noiseless signal power at the point
    where the noise is injected. round_trip reinterprets each trajectory
    distance as a round-trip length (doubling the delay); the default keeps
    the one-way convention tau = d/c.
    """

    beta: complex
    reflectors: tuple
    noise_snr_db: float | None = None
    round_trip: bool = False

    def __post_init__(self):
        if not abs(complex(self.beta)) > 0:
            raise ValidationError("beta", "must have |beta| > 0")
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "reflectors", tuple(self.reflectors))

    def delay_factor(self):
        """Seconds of delay per meter of trajectory distance."""
        return (2.0 if self.round_trip else 1.0) / SPEED_OF_LIGHT


@dataclass(frozen=True)
class OfdmSynthesis:
    """Analytic provenance of a synthesized signal: lets consumers re-evaluate
    the waveform at arbitrary (fractionally delayed) times.

    With a single QAM table the waveform is defined for all t. With a
    per-symbol table sequence it is defined on
    [t_ref, t_ref + n_symbols * symbol_period).
    """

    cfg: OfdmConfig
    symbol_tables: tuple | None = None
    t_ref: float = 0.0

    def domain(self):
        if self.symbol_tables is None:
            return (-math.inf, math.inf)
        return (self.t_ref,
                self.t_ref + len(self.symbol_tables) * self.cfg.symbol_period_s)

    def eval(self, t_s, _chunk=1 << 16):
        """Evaluate the waveform sum at arbitrary times (vectorized, chunked)."""
        t = np.atleast_1d(np.asarray(t_s, dtype=float))
        freqs = self.cfg.subcarrier_freqs_hz()
        if self.symbol_tables is None:
            x = self.cfg.qam_vector()
            out = np.empty(len(t), dtype=complex)
            for i in range(0, len(t), _chunk):
                tt = t[i:i + _chunk]
                out[i:i + _chunk] = np.exp(2j * np.pi * np.outer(tt, freqs)) @ x
            return out
        lo, hi = self.domain()
        if np.any(t < lo) or np.any(t >= hi):
            raise TrajectoryOutOfRange(
                f"waveform undefined outside [{lo}, {hi})")
        idx = np.floor((t - self.t_ref) / self.cfg.symbol_period_s).astype(int)
        idx = np.clip(idx, 0, len(self.symbol_tables) - 1)
        xmat = np.array(
            [[tab[k] for k in self.cfg.subcarriers] for tab in self.symbol_tables])
        out = np.empty(len(t), dtype=complex)
        for i in range(0, len(t), _chunk):
            tt = t[i:i + _chunk]
            phases = np.exp(2j * np.pi * tt[:, None] * freqs[None, :])
            out[i:i + _chunk] = np.einsum("nk,nk->n", phases, xmat[idx[i:i + _chunk]])
        return out


@dataclass
class SampledSignal:
    """Uniformly sampled complex signal with an optional analytic provenance."""

    samples: np.ndarray
    sample_rate_hz: float
    t0_s: float = 0.0
    synthesis: OfdmSynthesis | None = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz", "must be > 0")
        if not (np.all(np.isfinite(self.samples.real))
                and np.all(np.isfinite(self.samples.imag))):
            raise ValidationError("samples", "non-finite sample")

    def times(self):
        return self.t0_s + np.arange(len(self.samples)) / self.sample_rate_hz

    def duration_s(self):
        return len(self.samples) / self.sample_rate_hz


def nyquist_floor_hz(cfg):
    """Minimum sample rate for direct RF-rate synthesis of the config."""
    max_k = max(abs(k) for k in cfg.subcarriers)
    return 2.0 * (cfg.carrier_hz + max_k * cfg.subcarrier_spacing_hz)


def synthesize_symbol(cfg, sample_rate_hz, t0_s=0.0):
    """Synthesize one OFDM symbol at RF rate.

    Returns a SampledSignal of one symbol period whose sample n equals
    sum_k X_k * exp(j*2*pi*(f_c + k*spacing)*(t0 + n/fs)). Requires the
    sample rate to satisfy the Nyquist bound for the highest subcarrier.
    """
    if len(cfg.subcarriers) == 0:
        raise EmptySubcarrierSet("subcarrier set is empty")
    floor = nyquist_floor_hz(cfg)
    if sample_rate_hz < floor:
        raise SampleRateTooLow(
            f"sample_rate {sample_rate_hz:g} Hz < Nyquist floor {floor:g} Hz")
    n = int(round(cfg.symbol_period_s * sample_rate_hz))
    synth = OfdmSynthesis(cfg)
    t = t0_s + np.arange(n) / sample_rate_hz
    return SampledSignal(synth.eval(t), sample_rate_hz, t0_s, synthesis=synth)


def synthesize_stream(cfg, sample_rate_hz, duration_s, t0_s=0.0,
                      per_symbol_seed=None, active_mask=None):
    """Synthesize a multi-symbol stretch of the waveform at RF rate.

    With per_symbol_seed=None every symbol reuses cfg.qam_symbols (the
    waveform is then one periodic tone set). With a seed, each symbol gets a
    fresh QPSK draw. active_mask optionally zeroes whole symbols (bursty
    ambient traffic); it must have one boolean per symbol.
    """
    floor = nyquist_floor_hz(cfg)
    if sample_rate_hz < floor:
        raise SampleRateTooLow(
            f"sample_rate {sample_rate_hz:g} Hz < Nyquist floor {floor:g} Hz")
    n_sym = int(math.ceil(duration_s / cfg.symbol_period_s))
    tables = None
    if per_symbol_seed is not None or active_mask is not None:
        tables = []
        for m in range(n_sym):
            if per_symbol_seed is not None:
                tab = random_qpsk_symbols(cfg.subcarriers, per_symbol_seed + m)
            else:
                tab = dict(cfg.qam_symbols)
            if active_mask is not None and not active_mask[m]:
                tab = {k: 0j for k in cfg.subcarriers}
            tables.append(tab)
        tables = tuple(tables)
    synth = OfdmSynthesis(cfg, symbol_tables=tables, t_ref=t0_s)
    n = int(round(duration_s * sample_rate_hz))
    t = t0_s + np.arange(n) / sample_rate_hz
    return SampledSignal(synth.eval(t), sample_rate_hz, t0_s, synthesis=synth)


def trajectory_distance(reflector, t_s):
    """Evaluate a reflector's path distance at time(s) t_s (meters)."""
    return reflector.trajectory.distance(t_s)


def propagate(signal, scene, noise_seed=0):
    """Propagate a waveform through the forward chain and reflector set.

    r(t) = beta * sum_l alpha_l * s(t - tau_l(t)), tau_l = d_l(t)/c (or
    2 d_l/c in round-trip mode). When the signal carries its synthesis
    provenance, delayed values are re-evaluated analytically; otherwise they
    are linearly interpolated and edge samples whose delayed time falls
    outside the input span are trimmed from the front.

    Additive complex white Gaussian noise is applied after summation when
    scene.noise_snr_db is set, scaled against the noiseless output power.
    """
    t = signal.times()
    per_m = scene.delay_factor()
    delayed_times = []
    for refl in scene.reflectors:
        tau = trajectory_distance(refl, t) * per_m
        delayed_times.append(t - tau)

    if signal.synthesis is not None:
        lo, hi = signal.synthesis.domain()
        keep_from = 0
        if delayed_times:
            earliest = np.min([dt[0] for dt in delayed_times])
            if earliest < lo:
                # Drop leading samples whose delayed argument precedes the
                # synthesis domain (documented trim).
                valid = np.all([dt >= lo for dt in delayed_times], axis=0)
                if not valid.any():
                    raise TrajectoryOutOfRange("no sample has all delays in domain")
                keep_from = int(np.argmax(valid))
        total = np.zeros(len(t) - keep_from, dtype=complex)
        for refl, dt in zip(scene.reflectors, delayed_times):
            total += refl.alpha * signal.synthesis.eval(dt[keep_from:])
        out_t0 = signal.t0_s + keep_from / signal.sample_rate_hz
    else:
        t_end = signal.t0_s + (len(signal.samples) - 1) / signal.sample_rate_hz
        valid = np.ones(len(t), dtype=bool)
        for dt in delayed_times:
            valid &= (dt >= signal.t0_s) & (dt <= t_end)
        if not valid.any():
            raise TrajectoryOutOfRange("no sample has all delays in span")
        keep_from = int(np.argmax(valid))
        if not valid[keep_from:].all():
            raise TrajectoryOutOfRange("delayed time leaves the input span mid-stream")
        total = np.zeros(int(valid.sum()), dtype=complex)
        for refl, dt in zip(scene.reflectors, delayed_times):
            dt = dt[keep_from:]
            re = np.interp(dt, t, signal.samples.real)
            im = np.interp(dt, t, signal.samples.imag)
            total += refl.alpha * (re + 1j * im)
        out_t0 = signal.t0_s + keep_from / signal.sample_rate_hz

    total *= scene.beta
    if scene.noise_snr_db is not None and len(total):
        power = float(np.mean(np.abs(total) ** 2))
        sigma2 = power * 10.0 ** (-scene.noise_snr_db / 10.0)
        rng = np.random.default_rng(noise_seed)
        noise = rng.standard_normal(len(total)) + 1j * rng.standard_normal(len(total))
        total = total + noise * math.sqrt(sigma2 / 2.0)
    return SampledSignal(total, signal.sample_rate_hz, out_t0)
