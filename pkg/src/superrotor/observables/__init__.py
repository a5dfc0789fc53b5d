"""Measured quantities synthesized from trajectories."""

from .imaging import DensityMap, angular_density_map, lobe_count
from .raman import (
    LineSet,
    ProbeSpec,
    SpeciesMix,
    Spectrogram,
    beat_period,
    convolve_lines,
    fine_structure_beats,
    mixture_spectrogram,
    n_from_shift,
    raman_amplitude,
    raman_lines,
    spectrogram,
    split_lines,
)
from .revivals import period_spectrum, raman_signal, revival_analysis, sliding_periods
from .scans import (
    Composition,
    TrainScan,
    directionality,
    directionality_scan,
    map_points,
    released_center,
    train_period_scan,
    wavepacket_composition,
)

__all__ = [
    "Composition",
    "DensityMap",
    "LineSet",
    "ProbeSpec",
    "SpeciesMix",
    "Spectrogram",
    "TrainScan",
    "angular_density_map",
    "beat_period",
    "convolve_lines",
    "directionality",
    "directionality_scan",
    "fine_structure_beats",
    "lobe_count",
    "map_points",
    "mixture_spectrogram",
    "n_from_shift",
    "period_spectrum",
    "raman_amplitude",
    "raman_lines",
    "raman_signal",
    "released_center",
    "revival_analysis",
    "sliding_periods",
    "spectrogram",
    "split_lines",
    "train_period_scan",
    "wavepacket_composition",
]
