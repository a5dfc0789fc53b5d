"""Excitation programs: single pulses, (chiral) pulse trains, optical centrifuge.

Field-amplitude convention: ``E(t)`` is the envelope amplitude of a
linearly polarized field with cycle-averaged intensity I = eps0 c E^2 / 2,
and pulse FWHMs refer to the intensity profile. The interaction potential
is U = -(1/4) Delta_alpha E^2 cos^2(theta), so the peak trap depth in
angular-frequency units is u0 = 2 pi Delta_alpha I / (hbar c) and a
Gaussian pulse delivers the kick strength P = u0 * FWHM * sqrt(pi / 4 ln 2).
A per-run ``calibration`` factor multiplies every coupling (default 1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .angular import LAB_Z
from .errors import ConfigError, ImpulsiveValidityError
from .molecule import A3_TO_SI, C_SI, EPS0, HBAR, W_CM2_TO_W_M2, MoleculeSpec, revival_time

DEFAULT_INTENSITY_CAP = 1e13
GAUSS_AREA = math.sqrt(math.pi / (4 * math.log(2)))
#: a pulse counts as impulsive when FWHM < T_rev / IMPULSIVE_RATIO
IMPULSIVE_RATIO = 100.0


class IntensityWarning(UserWarning):
    pass


def trap_depth(peak_intensity: float, delta_alpha: float, calibration: float = 1.0) -> float:
    """Peak potential depth (1/4) Delta_alpha E0^2 / hbar in rad/ps."""
    alpha_si = delta_alpha * A3_TO_SI
    e0_sq = 2.0 * peak_intensity * W_CM2_TO_W_M2 / (EPS0 * C_SI)
    return calibration * 0.25 * alpha_si * e0_sq / HBAR * 1e-12


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian pulse: centre (ps), intensity FWHM (fs), peak intensity (W/cm^2).

    ``polarization`` is ``"z"`` (lab axis) or an in-plane angle in radians.
    """

    center: float
    fwhm_fs: float
    peak_intensity: float
    polarization: Union[str, float] = LAB_Z
    intensity_cap: float = DEFAULT_INTENSITY_CAP

    def __post_init__(self):
        if not self.fwhm_fs > 0:
            raise ConfigError("pulse FWHM must be positive")
        if self.peak_intensity < 0:
            raise ConfigError("peak intensity must be non-negative")
        if self.peak_intensity > self.intensity_cap:
            warnings.warn(
                f"peak intensity {self.peak_intensity:.3g} W/cm^2 exceeds the cap "
                f"{self.intensity_cap:.3g} W/cm^2",
                IntensityWarning,
                stacklevel=3,
            )

    @property
    def fwhm(self) -> float:
        """Intensity FWHM in ps."""
        return self.fwhm_fs * 1e-3

    def envelope(self, t):
        """Normalized intensity profile (peak 1)."""
        t = np.asarray(t, dtype=float)
        return np.exp(-4 * math.log(2) * ((t - self.center) / self.fwhm) ** 2)

    def is_impulsive(self, molecule: MoleculeSpec) -> bool:
        return self.fwhm < revival_time(molecule) / IMPULSIVE_RATIO


def kick_strength(pulse: PulseSpec, delta_alpha: float, calibration: float = 1.0) -> float:
    """Dimensionless kick strength P = (Delta_alpha / 4 hbar) int E^2 dt."""
    return trap_depth(pulse.peak_intensity, delta_alpha, calibration) * pulse.fwhm * GAUSS_AREA


@dataclass(frozen=True)
class TrainSpec:
    """Train of ``count`` pulses ``period`` ps apart, polarization stepping by ``angle_step``.

    Either give ``pulse`` (template for the first pulse; its centre and
    polarization set t0 and phi0) or ``pulses`` (explicit list).
    """

    count: int
    period: float
    angle_step: float = 0.0
    pulse: PulseSpec | None = None
    pulses: tuple[PulseSpec, ...] | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("train needs at least one pulse")
        if (self.pulse is None) == (self.pulses is None):
            raise ConfigError("give exactly one of pulse template or explicit pulses")
        if self.pulses is not None and len(self.pulses) != self.count:
            raise ConfigError("explicit pulse list length must equal count")
        width = max(p.fwhm for p in self.expanded()) if self.count > 1 else 0.0
        if self.count > 1 and not self.period > width:
            raise ConfigError("train period must exceed the pulse FWHM")

    def expanded(self) -> list[PulseSpec]:
        if self.pulses is not None:
            return list(self.pulses)
        p = self.pulse
        phi0 = p.polarization
        out = []
        for n in range(self.count):
            if phi0 == LAB_Z:
                if self.angle_step:
                    raise ConfigError("a rotating train needs an in-plane polarization angle")
                pol = LAB_Z
            else:
                pol = float(phi0) + n * self.angle_step
            out.append(replace(p, center=p.center + n * self.period, polarization=pol))
        return out


@dataclass(frozen=True)
class KickEvent:
    time: float
    polarization: Union[str, float]
    strength: float


def train_kicks(train: TrainSpec, delta_alpha: float, calibration: float = 1.0) -> list[KickEvent]:
    """Kick times, polarization angles and strengths of every pulse in a train."""
    return [
        KickEvent(p.center, p.polarization, kick_strength(p, delta_alpha, calibration))
        for p in train.expanded()
    ]


# -------------------------------------------------------------- centrifuge
@dataclass(frozen=True)
class CentrifugeSpec:
    """Optical centrifuge with linearly accelerating polarization.

    Times are relative to the start of the centrifuge. The polarization
    angle is theta0 + beta t^2 / 2 with Omega = beta t; with ``omega_max``
    set, Omega is clamped there and the field is switched off when Omega
    first reaches it (spectral truncation).

    ``theta0`` is a number or ``"random"`` (drawn per shot from the run's
    seeded generator, see :meth:`resolve`).
    """

    duration: float
    beta: float
    peak_intensity: float
    theta0: Union[float, str] = 0.0
    ramp_on: float = 5.0
    ramp_off: float = 5.0
    omega_max: float | None = None
    intensity_cap: float = DEFAULT_INTENSITY_CAP

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("centrifuge duration must be positive")
        if self.peak_intensity < 0:
            raise ConfigError("peak intensity must be non-negative")
        if self.ramp_on < 0 or self.ramp_off < 0:
            raise ConfigError("ramps must be non-negative")
        if self.omega_max is not None and self.omega_max <= 0:
            raise ConfigError("omega_max must be positive")
        if not (isinstance(self.theta0, (int, float)) or self.theta0 == "random"):
            raise ConfigError("theta0 must be a number or 'random'")
        if self.ramp_on + self.ramp_off > self.field_duration + 1e-12:
            raise ConfigError("ramps longer than the centrifuge field")
        if self.peak_intensity > self.intensity_cap:
            warnings.warn(
                f"centrifuge peak intensity {self.peak_intensity:.3g} W/cm^2 exceeds the cap "
                f"{self.intensity_cap:.3g} W/cm^2",
                IntensityWarning,
                stacklevel=3,
            )

    @property
    def field_duration(self) -> float:
        """Time during which the field is on (shortened by spectral truncation)."""
        if self.omega_max is not None and self.beta != 0:
            return min(self.duration, self.omega_max / abs(self.beta))
        return self.duration

    @property
    def terminal_omega(self) -> float:
        return self.omega(self.field_duration)

    def resolve(self, rng: np.random.Generator | None = None) -> "CentrifugeSpec":
        """Fix a random theta0 using ``rng``."""
        if self.theta0 != "random":
            return self
        if rng is None:
            raise ConfigError("random theta0 needs a seeded generator")
        return replace(self, theta0=float(rng.uniform(0.0, np.pi)))

    def omega(self, t):
        t = np.asarray(t, dtype=float)
        w = self.beta * t
        if self.omega_max is not None:
            w = np.clip(w, -self.omega_max, self.omega_max)
        return w

    def angle(self, t):
        """Polarization angle; exact integral of :meth:`omega`."""
        if self.theta0 == "random":
            raise ConfigError("resolve theta0 before evaluating the angle")
        t = np.asarray(t, dtype=float)
        if self.omega_max is None or self.beta == 0:
            return self.theta0 + 0.5 * self.beta * t * t
        tc = self.omega_max / abs(self.beta)
        early = self.theta0 + 0.5 * self.beta * np.minimum(t, tc) ** 2
        return early + np.sign(self.beta) * self.omega_max * np.maximum(t - tc, 0.0)

    def envelope(self, t):
        """Intensity envelope in [0, 1]: linear ramps around a flat top."""
        t = np.asarray(t, dtype=float)
        end = self.field_duration
        env = np.ones_like(t)
        if self.ramp_on > 0:
            env = np.minimum(env, t / self.ramp_on)
        if self.ramp_off > 0:
            env = np.minimum(env, (end - t) / self.ramp_off)
        return np.clip(np.where((t < 0) | (t > end), 0.0, env), 0.0, 1.0)


def centrifuge_angle(cfg: CentrifugeSpec, t: float):
    """Polarization angle and instantaneous rotation frequency at time ``t`` (ps)."""
    if t < 0 or t > cfg.duration:
        raise ValueError(f"t={t} outside the centrifuge [0, {cfg.duration}]")
    return float(cfg.angle(t)), float(cfg.omega(t))


@dataclass
class FieldSpectrogram:
    times: np.ndarray
    frequencies: np.ndarray  # THz relative to the carrier
    intensity: np.ndarray  # (time, frequency)
    carrier: float

    def trace_slopes(self, threshold: float = 0.2) -> tuple[float, float]:
        """Linear-fit slopes (THz/ps) of the upper and lower traces."""
        slopes = []
        for sign in (+1, -1):
            half = self.frequencies * sign > 0
            f = self.frequencies[half]
            spec = self.intensity[:, half]
            peak = spec.max(axis=1)
            ok = peak > threshold * peak.max()
            # sub-bin peak position by quadratic interpolation
            k = np.argmax(spec, axis=1)
            k = np.clip(k, 1, f.size - 2)
            rows = np.arange(spec.shape[0])
            y0, y1, y2 = spec[rows, k - 1], spec[rows, k], spec[rows, k + 1]
            denom = y0 - 2 * y1 + y2
            shift = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom == 0, 1, denom), 0.0)
            df = f[1] - f[0]
            fpk = f[k] + shift * df
            ok &= (k > 1) & (k < f.size - 2)
            slopes.append(np.polyfit(self.times[ok], fpk[ok], 1)[0])
        return slopes[0], slopes[1]


def field_spectrogram(cfg: CentrifugeSpec, carrier: float, window: float, dt: float | None = None,
                      t_pad: float = 5.0) -> FieldSpectrogram:
    """Time-frequency map of the two circularly polarized centrifuge arms.

    The arms are chirped with opposite sign around ``carrier`` (THz); their
    instantaneous frequencies are carrier +- Omega(t)/2pi. A Gaussian gate
    of FWHM ``window`` ps is slid over the baseband fields and the two
    arms' spectrograms are added (polarization-insensitive detection).
    """
    if not window > 0:
        raise ValueError("window must be positive")
    cfg = cfg.resolve(np.random.default_rng(0)) if cfg.theta0 == "random" else cfg
    wmax = float(np.max(np.abs(cfg.omega(np.linspace(0, cfg.duration, 64))))) / (2 * np.pi)
    if dt is None:
        dt = min(0.25 / max(wmax, 0.1), window / 8)
    t = np.arange(-t_pad, cfg.field_duration + t_pad, dt)
    amp = np.sqrt(cfg.envelope(t))
    ang = cfg.angle(np.clip(t, 0, None))
    arms = [amp * np.exp(-1j * ang), amp * np.exp(1j * ang)]  # offsets +Omega, -Omega
    sigma = window / (2 * math.sqrt(2 * math.log(2)))
    half = int(math.ceil(4 * sigma / dt))
    gate = np.exp(-0.5 * ((np.arange(-half, half + 1) * dt) / sigma) ** 2)
    nfft = 1 << int(math.ceil(math.log2(max(8 * half, 256))))
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, dt))
    centers = np.arange(half, t.size - half, max(1, int(round(window / (4 * dt)))))
    spec = np.zeros((centers.size, nfft))
    for arm in arms:
        frames = np.stack([arm[c - half : c + half + 1] * gate for c in centers])
        # exp(-i ang) has positive instantaneous frequency in the e^{-i w t} convention
        spec += np.abs(np.fft.fftshift(np.fft.ifft(frames, n=nfft, axis=1), axes=1)) ** 2
    return FieldSpectrogram(t[centers], freqs, spec, carrier)


@dataclass
class OrientationStatistics:
    theta0: np.ndarray
    projections: np.ndarray  # (shots, 2): normalized |E_x|^2, |E_y|^2
    estimate: np.ndarray


def fold_angle(theta):
    """Representative in [0, pi/2] of angles with equal (cos^2, sin^2)."""
    return np.arccos(np.abs(np.cos(theta)))


def orientation_statistics(samples, cfg: CentrifugeSpec | None = None, t_probe: float = 0.0) -> OrientationStatistics:
    """Projections (cos^2, sin^2) of the field direction at ``t_probe`` for each shot's theta0.

    The estimator inverts a (|E_x|^2, |E_y|^2) pair to the angle in
    [0, pi/2] (branch rule of :func:`fold_angle`) and subtracts the known
    centrifuge rotation accumulated by ``t_probe``; the result equals theta0
    whenever theta0 + rotation lies in [0, pi/2].
    """
    theta0 = np.atleast_1d(np.asarray(samples, dtype=float))
    if theta0.size == 0:
        raise ValueError("need at least one sample")
    rot = 0.0
    if cfg is not None and t_probe:
        rot = float(replace(cfg, theta0=0.0).angle(t_probe))
    ang = theta0 + rot
    ex, ey = np.cos(ang) ** 2, np.sin(ang) ** 2
    est = np.arctan2(np.sqrt(ey), np.sqrt(ex)) - rot
    return OrientationStatistics(theta0, np.column_stack([ex, ey]), est)


# ------------------------------------------------------------------ programs
@dataclass(frozen=True)
class Kick:
    """Instantaneous kick of strength P at ``time``."""

    time: float
    strength: float
    polarization: Union[str, float] = LAB_Z

    @property
    def start(self):
        return self.time

    @property
    def end(self):
        return self.time


@dataclass(frozen=True)
class Pulse:
    """Finite Gaussian pulse integrated with the continuous propagator."""

    pulse: PulseSpec
    half_width: float = 4.0  # in FWHM units

    @property
    def start(self):
        return self.pulse.center - self.half_width * self.pulse.fwhm

    @property
    def end(self):
        return self.pulse.center + self.half_width * self.pulse.fwhm


@dataclass(frozen=True)
class Centrifuge:
    start: float
    spec: CentrifugeSpec

    @property
    def end(self):
        return self.start + self.spec.duration


@dataclass(frozen=True)
class Free:
    """Explicit field-free interval (gaps between segments are free as well)."""

    start: float
    duration: float

    @property
    def end(self):
        return self.start + self.duration


Segment = Union[Kick, Pulse, Centrifuge, Free]


@dataclass(frozen=True)
class FieldProgram:
    """Time-ordered, non-overlapping excitation segments ending at ``duration``."""

    segments: tuple = ()
    duration: float = 0.0
    calibration: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        last = 0.0
        for seg in self.segments:
            if seg.start < -1e-12:
                raise ConfigError(f"segment {seg} starts before t=0")
            if seg.start < last - 1e-9:
                raise ConfigError(f"segment {seg} overlaps or is out of order")
            last = max(last, seg.end)
        if last > self.duration + 1e-9:
            raise ConfigError(f"segments extend to {last} ps beyond duration {self.duration}")

    @classmethod
    def from_kicks(cls, kicks: Sequence[KickEvent], duration: float | None = None) -> "FieldProgram":
        segs = [Kick(k.time, k.strength, k.polarization) for k in kicks]
        end = max([k.time for k in kicks], default=0.0)
        return cls(tuple(segs), end if duration is None else duration)

    @classmethod
    def from_train(cls, train: TrainSpec, molecule: MoleculeSpec, duration: float | None = None,
                   mode: str = "auto", calibration: float = 1.0) -> "FieldProgram":
        """Program for a pulse train; ``mode`` is "kick", "continuous" or "auto"."""
        segs = [pulse_segment(p, molecule, mode, calibration) for p in train.expanded()]
        end = max(s.end for s in segs)
        return cls(tuple(segs), end if duration is None else duration, calibration)

    def resolve(self, rng: np.random.Generator | None) -> "FieldProgram":
        """Draw random centrifuge orientations."""
        segs = tuple(
            replace(s, spec=s.spec.resolve(rng)) if isinstance(s, Centrifuge) else s for s in self.segments
        )
        return replace(self, segments=segs)

    def with_segments(self, segments, duration=None) -> "FieldProgram":
        return replace(self, segments=tuple(segments), duration=self.duration if duration is None else duration)


def pulse_segment(pulse: PulseSpec, molecule: MoleculeSpec, mode: str = "auto", calibration: float = 1.0):
    """Kick or continuous-pulse segment for ``pulse`` according to ``mode``."""
    if mode not in ("auto", "kick", "continuous"):
        raise ConfigError(f"unknown pulse mode {mode!r}")
    impulsive = pulse.is_impulsive(molecule)
    if mode == "kick" and not impulsive:
        raise ImpulsiveValidityError(
            f"pulse FWHM {pulse.fwhm_fs:g} fs is not below T_rev/{IMPULSIVE_RATIO:g} = "
            f"{revival_time(molecule) / IMPULSIVE_RATIO * 1e3:.4g} fs for {molecule.name}"
        )
    if mode == "kick" or (mode == "auto" and impulsive):
        return Kick(pulse.center, kick_strength(pulse, molecule.delta_alpha, calibration), pulse.polarization)
    return Pulse(pulse)
