"""Coherent Raman sideband synthesis.

Every Delta N = 2 coherence of the wave packet scatters a circularly
polarized probe into a sideband shifted by E(N+2) - E(N). The sign of
the shift encodes the sense of rotation: a Delta M = +2 coherence
(rotation with positive J_z) appears at positive shift for a probe of
handedness +1, Delta M = -2 at negative shift; flipping the probe
handedness mirrors the spectrum. Delta M = 0 coherences (alignment
without net rotation) carry no handedness and are placed at positive
shift.

Line amplitudes are Delta_alpha times the (ensemble-summed) coherence.
The probe is modelled purely spectrally: each line is convolved with a
Gaussian amplitude profile whose intensity FWHM is the probe FWHM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..molecule import C_CM_PER_PS, FineStructureModel, MoleculeSpec, raman_shift
from ..propagator import Records

CHANNELS = (2, -2, 0)


@dataclass(frozen=True)
class ProbeSpec:
    """Probe: spectral FWHM (cm^-1), circular handedness (+1/-1), optional delay grid (ps)."""

    fwhm: float
    handedness: int = 1
    delays: tuple | None = None

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ConfigError("probe FWHM must be positive")
        if self.handedness not in (1, -1):
            raise ConfigError("probe handedness must be +1 or -1")
        if self.delays is not None:
            object.__setattr__(self, "delays", tuple(float(t) for t in self.delays))

    def kernel(self, offset):
        """Amplitude response at ``offset`` cm^-1 from a line (peak 1)."""
        offset = np.asarray(offset, dtype=float)
        return np.exp(-2.0 * math.log(2) * (offset / self.fwhm) ** 2)


@dataclass(frozen=True)
class SpeciesMix:
    """Gas mixture: molecules with number fractions summing to one."""

    species: tuple
    fractions: tuple

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if len(self.species) != len(self.fractions) or not self.species:
            raise ConfigError("mixture needs one fraction per species")
        if any(f < 0 for f in self.fractions):
            raise ConfigError("mixture fractions must be non-negative")
        if abs(sum(self.fractions) - 1.0) > 1e-12:
            raise ConfigError(f"mixture fractions sum to {sum(self.fractions)!r}, not 1")

    @property
    def response_weights(self) -> np.ndarray:
        """fraction * Delta_alpha per species."""
        return np.array([f * s.delta_alpha for s, f in zip(self.species, self.fractions)])


# ------------------------------------------------------------------- lines
@dataclass
class LineSet:
    """Discrete Raman lines: signed positions (cm^-1) and complex amplitudes per delay."""

    delays: np.ndarray  # (T,)
    shifts: np.ndarray  # (L,)
    amplitudes: np.ndarray  # (T, L)
    n: np.ndarray  # (L,) lower rotational level of each line
    channel: np.ndarray  # (L,) Delta M of the coherence

    def power(self) -> np.ndarray:
        """Total line power per delay, sum_l |a_l|^2."""
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    @classmethod
    def free(cls, shifts, amplitudes, delays, n=None) -> "LineSet":
        """Lines evolving freely: a_l(t) = a_l exp(i 2 pi c |s_l| t)."""
        shifts = np.asarray(shifts, dtype=float)
        delays = np.asarray(delays, dtype=float)
        amp0 = np.asarray(amplitudes, dtype=complex)
        amps = amp0[None, :] * np.exp(2j * np.pi * C_CM_PER_PS * np.outer(delays, np.abs(shifts)))
        n = np.full(shifts.size, -1) if n is None else np.asarray(n)
        return cls(delays, shifts, amps, n, np.zeros(shifts.size, dtype=int))


def raman_lines(records: Records, delays, handedness: int = 1, channels=CHANNELS) -> LineSet:
    """Lines of every N -> N+2 coherence of a trajectory at ``delays``."""
    mol = records.molecule
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    n = np.arange(records.n_max - 1)
    rs = raman_shift(mol, n)
    shifts, amps, ns, ch = [], [], [], []
    for dm in channels:
        sign = handedness * (-1 if dm < 0 else 1)
        shifts.append(sign * rs)
        amps.append(mol.delta_alpha * records.coherences_at(delays, dm))
        ns.append(n)
        ch.append(np.full(n.size, dm))
    return LineSet(delays, np.concatenate(shifts), np.concatenate(amps, axis=1), np.concatenate(ns),
                   np.concatenate(ch))


def split_lines(lines: LineSet, model: FineStructureModel) -> LineSet:
    """Replace each line by its three S-branch components.

    Component k sits at s + sign(s) delta_k(N) with amplitude w_k a and an
    extra phase exp(i 2 pi c delta_k t).
    """
    if model is None:
        raise ConfigError("no fine-structure model for this molecule")
    n = np.where(lines.n >= 0, lines.n, 0)
    offsets = model.offset_values(n)  # (3, L)
    weights = np.asarray(model.amplitude_values(), dtype=float)
    sign = np.where(lines.shifts < 0, -1.0, 1.0)
    shifts, amps = [], []
    for k in range(offsets.shape[0]):
        shifts.append(lines.shifts + sign * offsets[k])
        phase = np.exp(2j * np.pi * C_CM_PER_PS * np.outer(lines.delays, offsets[k]))
        amps.append(weights[k] * lines.amplitudes * phase)
    return LineSet(lines.delays, np.concatenate(shifts), np.concatenate(amps, axis=1),
                   np.tile(lines.n, offsets.shape[0]), np.tile(lines.channel, offsets.shape[0]))


def convolve_lines(lines: LineSet, probe: ProbeSpec, shift_grid, chunk: int = 512) -> np.ndarray:
    """Complex amplitude spectrum (delays x shift_grid)."""
    grid = np.asarray(shift_grid, dtype=float)
    keep = np.any(np.abs(lines.amplitudes) > 0, axis=0)
    kern = probe.kernel(grid[:, None] - lines.shifts[None, keep])  # (S, L)
    out = np.empty((lines.delays.size, grid.size), dtype=complex)
    for a in range(0, lines.delays.size, chunk):
        out[a : a + chunk] = lines.amplitudes[a : a + chunk, keep] @ kern.T
    return out


# -------------------------------------------------------------- spectrogram
def n_from_shift(molecule: MoleculeSpec, shift, n_limit: int | None = None):
    """Rotational level N (continuous) of the N -> N+2 line at |shift|.

    Inverts the monotone map N -> E(N+2) - E(N) numerically; values outside
    the monotone range are NaN.
    """
    a = np.abs(np.asarray(shift, dtype=float))
    top = molecule.monotone_limit() - 2 if n_limit is None else n_limit
    # rigid-rotor estimate bounds the search range
    guess = (np.nanmax(a, initial=0.0) / molecule.B - 6.0) / 4.0
    top = int(max(2, min(top, 1.5 * guess + 10)))
    grid = np.linspace(0.0, top, 64 * top + 1)
    x0, x2 = grid * (grid + 1), (grid + 2) * (grid + 3)
    curve = molecule.B * (x2 - x0) - molecule.D * (x2 * x2 - x0 * x0)
    return np.interp(a, curve, grid, left=np.nan, right=np.nan)


@dataclass
class Spectrogram:
    """Complex amplitude on a (probe delay x signed Raman shift) grid."""

    delays: np.ndarray
    shifts: np.ndarray
    amplitude: np.ndarray
    molecule: MoleculeSpec | None = None
    handedness: int = 1
    probe_fwhm: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def n_axis(self) -> np.ndarray:
        """Equivalent N of each shift bin (NaN without a reference molecule)."""
        if self.molecule is None:
            return np.full(self.shifts.size, np.nan)
        return n_from_shift(self.molecule, self.shifts)

    def reflected(self) -> "Spectrogram":
        return Spectrogram(self.delays, -self.shifts[::-1], self.amplitude[:, ::-1], self.molecule,
                           -self.handedness, self.probe_fwhm, dict(self.meta))

    def trace(self, shift: float) -> np.ndarray:
        """Intensity versus delay at the grid point nearest ``shift``."""
        return self.intensity[:, int(np.argmin(np.abs(self.shifts - shift)))]

    def metadata(self) -> dict:
        return {
            "axes": {"delay": "ps", "shift": "cm^-1", "n_equivalent": "N of the N->N+2 line"},
            "shift_sign": "positive = rotation co-rotating with probe handedness",
            "handedness": self.handedness,
            "probe_fwhm_cm": self.probe_fwhm,
            "intensity": "|amplitude|^2, arbitrary units",
            "render_hint": {"intensity_scale": "log"},
            **self.meta,
        }


def default_shift_grid(molecule: MoleculeSpec, n_max: int, probe: ProbeSpec, signed=True, points_per_fwhm=4):
    top = float(raman_shift(molecule, max(n_max - 2, 0))) + 3 * probe.fwhm
    step = probe.fwhm / points_per_fwhm
    n = int(math.ceil(top / step))
    pos = step * np.arange(n + 1)
    return np.concatenate([-pos[:0:-1], pos]) if signed else pos


def raman_amplitude(records: Records, probe: ProbeSpec, delay, shift_grid=None, fine_structure: bool = False):
    """Complex sideband spectrum at one probe delay; returns (shift_grid, amplitude)."""
    spec = spectrogram(records, probe, [delay], shift_grid, fine_structure)
    return spec.shifts, spec.amplitude[0]


def spectrogram(records: Records, probe: ProbeSpec, delays=None, shift_grid=None,
                fine_structure: bool = False) -> Spectrogram:
    """Raman spectrogram of a single species."""
    mol = records.molecule
    if delays is None:
        delays = probe.delays if probe.delays is not None else records.sample_times()
    delays = np.asarray(delays, dtype=float)
    if shift_grid is None:
        shift_grid = default_shift_grid(mol, records.n_max, probe)
    lines = raman_lines(records, delays, probe.handedness)
    if fine_structure:
        lines = split_lines(lines, mol.fine_structure)
    amp = convolve_lines(lines, probe, shift_grid)
    return Spectrogram(delays, np.asarray(shift_grid, dtype=float), amp, mol, probe.handedness, probe.fwhm,
                       {"species": mol.name, "fine_structure": bool(fine_structure)})


def mixture_spectrogram(parts, mix: SpeciesMix) -> Spectrogram:
    """Coherent sum of per-species spectrograms weighted by number fraction.

    Species spectrograms already carry their Delta_alpha, so the effective
    response weight of each species is fraction * Delta_alpha.
    """
    parts = list(parts)
    if len(parts) != len(mix.species):
        raise ConfigError("one spectrogram per mixture species required")
    ref = parts[0]
    for p in parts[1:]:
        if p.delays.shape != ref.delays.shape or not np.allclose(p.delays, ref.delays, atol=1e-9, rtol=0):
            raise ConfigError("species spectrograms use different delay grids")
        if p.shifts.shape != ref.shifts.shape or not np.allclose(p.shifts, ref.shifts, atol=1e-9, rtol=0):
            raise ConfigError("species spectrograms use different shift grids")
    amp = sum(f * p.amplitude for f, p in zip(mix.fractions, parts))
    meta = {"species": [s.name for s in mix.species], "fractions": list(mix.fractions)}
    return Spectrogram(ref.delays, ref.shifts, amp, ref.molecule, ref.handedness, ref.probe_fwhm, meta)


def fine_structure_beats(n: int, amplitude: complex, model: FineStructureModel, delays) -> np.ndarray:
    """Intensity versus delay of one split line, |a sum_k w_k exp(i 2 pi c delta_k t)|^2.

    All components are assumed to lie within the probe bandwidth.
    """
    if model is None:
        raise ConfigError("no fine-structure model given")
    delays = np.asarray(delays, dtype=float)
    offsets = model.offset_values(np.array([n]))[:, 0]
    weights = np.asarray(model.amplitude_values(), dtype=float)
    field_ = np.exp(2j * np.pi * C_CM_PER_PS * np.outer(delays, offsets)) @ weights
    return np.abs(amplitude * field_) ** 2


def beat_period(delta_nu: float) -> float:
    """Intensity beat period (ps) of two lines ``delta_nu`` cm^-1 apart."""
    if delta_nu == 0:
        return math.inf
    return 1.0 / (C_CM_PER_PS * abs(delta_nu))
