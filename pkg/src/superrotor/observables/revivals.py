"""Revival dynamics: coherent Raman time traces and their period content."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..propagator import Records

#: zero padding factor of the period spectrum
PAD = 16
MIN_PERIODS = 4.0


def raman_signal(records: Records, times, channels=(2, -2, 0), n_range=None) -> np.ndarray:
    """Broadband coherent Raman signal |sum_N Delta_alpha rho_{N+2,N}(t)|^2.

    Each channel (Delta M) is summed coherently over N and the channel
    intensities are added. ``n_range=(lo, hi)`` restricts the lower level.
    """
    times = np.asarray(times, dtype=float)
    lo, hi = (0, records.n_max - 2) if n_range is None else n_range
    out = np.zeros(times.size)
    for dm in channels:
        coh = records.coherences_at(times, dm)[:, lo : hi + 1]
        out += np.abs(records.molecule.delta_alpha * coh.sum(axis=1)) ** 2
    return out


@dataclass
class PeriodSpectrum:
    """Windowed power spectrum of a time trace, indexed by period."""

    frequencies: np.ndarray  # THz
    power: np.ndarray
    peak_period: float  # ps
    peak_frequency: float  # THz

    @property
    def periods(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.frequencies


def _peak(freqs, power, lo, hi):
    sel = np.nonzero((freqs >= lo) & (freqs <= hi))[0]
    if sel.size == 0:
        raise ValueError("no spectral bins inside the requested period band")
    k = sel[np.argmax(power[sel])]
    if 0 < k < freqs.size - 1:
        y0, y1, y2 = power[k - 1], power[k], power[k + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return freqs[k] + shift * (freqs[1] - freqs[0])


def period_spectrum(times, signal, band=None, expected_period=None) -> PeriodSpectrum:
    """Hann-windowed, zero-padded Fourier spectrum of a uniformly sampled trace.

    The peak is searched in ``band = (min_period, max_period)`` ps and
    refined by quadratic interpolation. When ``expected_period`` is given,
    the trace must span at least four such periods.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if times.size < 8:
        raise ValueError("trace too short for spectral analysis")
    dt = np.diff(times)
    if np.max(np.abs(dt - dt[0])) > 1e-6 * max(dt[0], 1e-12):
        raise ValueError("revival analysis needs a uniform time grid")
    span = times[-1] - times[0]
    if expected_period is not None and span < MIN_PERIODS * expected_period:
        raise ValueError(
            f"trace of {span:.4g} ps is shorter than {MIN_PERIODS:g} x the expected period {expected_period:.4g} ps"
        )
    x = (signal - signal.mean()) * np.hanning(signal.size)
    nfft = PAD * (1 << int(math.ceil(math.log2(signal.size))))
    power = np.abs(np.fft.rfft(x, nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, dt[0])
    if band is None:
        lo, hi = 1.0 / (0.5 * span), 0.5 / dt[0]
        if expected_period is not None:
            lo, hi = 1.0 / (1.5 * expected_period), 1.0 / (0.75 * expected_period)
    else:
        lo, hi = 1.0 / band[1], 1.0 / band[0]
    f = _peak(freqs, power, lo, hi)
    return PeriodSpectrum(freqs, power, 1.0 / f, f)


@dataclass
class RevivalAnalysis:
    times: np.ndarray
    signal: np.ndarray
    spectrum: PeriodSpectrum

    @property
    def peak_period(self) -> float:
        return self.spectrum.peak_period


def revival_analysis(records: Records, times=None, channels=(2, -2, 0), band=None, expected_period=None,
                     n_range=None) -> RevivalAnalysis:
    """Coherent Raman trace over ``times`` (default: free-evolution grid) and its period spectrum."""
    if times is None:
        times = records.sample_times()
        dt = np.diff(times)
        if times.size > 2 and np.max(np.abs(dt - np.median(dt))) > 1e-9:
            raise ValueError("default sample grid is not uniform; pass explicit times")
    sig = raman_signal(records, times, channels, n_range)
    return RevivalAnalysis(np.asarray(times), sig, period_spectrum(times, sig, band, expected_period))


def sliding_periods(times, signal, window: float, step: float | None = None, band=None):
    """Dominant period in consecutive windows; returns (window centres, periods).

    Within each window the period is taken from the spectral peak inside
    ``band`` (min, max) in ps.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    dt = times[1] - times[0]
    width = int(round(window / dt))
    stride = width if step is None else max(1, int(round(step / dt)))
    centres, periods = [], []
    for a in range(0, times.size - width + 1, stride):
        sl = slice(a, a + width)
        spec = period_spectrum(times[sl], signal[sl], band)
        centres.append(times[a] + 0.5 * (width - 1) * dt)
        periods.append(spec.peak_period)
    return np.array(centres), np.array(periods)
