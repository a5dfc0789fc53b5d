"""Simulation of laser-driven rotation of linear molecules.

Rotational wave packets are evolved under impulsive kicks, (chiral) pulse
trains and the optical centrifuge; observables include rotational
populations, directionality, coherent Raman spectrograms, angular densities
and revival spectra.
"""

__version__ = "0.1.0"

from .angular import BasisIndex, Wavefunction, cos2_matrix, jz_matrix
from .errors import ConfigError, GuardError, OutputError, SuperrotorError
from .fields import CentrifugeSpec, FieldProgram, PulseSpec, TrainSpec, kick_strength
from .molecule import MoleculeSpec, energy, get_molecule, revival_time, thermal_populations
from .propagator import apply_kick, propagate_centrifuge, propagate_free, run_ensemble, run_program

__all__ = [
    "BasisIndex",
    "CentrifugeSpec",
    "ConfigError",
    "FieldProgram",
    "GuardError",
    "MoleculeSpec",
    "OutputError",
    "PulseSpec",
    "SuperrotorError",
    "TrainSpec",
    "Wavefunction",
    "apply_kick",
    "cos2_matrix",
    "energy",
    "get_molecule",
    "jz_matrix",
    "kick_strength",
    "propagate_centrifuge",
    "propagate_free",
    "revival_time",
    "run_ensemble",
    "run_program",
    "thermal_populations",
]
