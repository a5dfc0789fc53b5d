"""Parameter scans over pulse trains and wave-packet composition."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..fields import FieldProgram, TrainSpec
from ..molecule import MoleculeSpec, thermal_populations
from ..propagator import Records, RunOptions, run_ensemble
from .raman import ProbeSpec


def directionality(records_or_pops, shell_jz=None) -> np.ndarray:
    """Signed rotation direction per N, sum_M M p_NM / (N sum_M p_NM), in [-1, 1].

    Accepts a :class:`Records` (final snapshot is used) or explicit shell
    populations plus per-shell J_z sums. Shells without population and
    N = 0 give zero.
    """
    if isinstance(records_or_pops, Records):
        pops = records_or_pops.populations[-1]
        jz = records_or_pops.shell_jz[-1]
    else:
        pops = np.asarray(records_or_pops, dtype=float)
        jz = np.asarray(shell_jz, dtype=float)
    n = np.arange(pops.size)
    denom = n * pops
    out = np.zeros(pops.size)
    ok = denom > 1e-300
    out[ok] = jz[ok] / denom[ok]
    return out


def map_points(func, args, jobs: int | None = 1):
    """Evaluate ``func`` over ``args`` in order, optionally in worker processes."""
    args = list(args)
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(args) <= 1:
        return [func(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        return list(pool.map(func, args))


@dataclass(frozen=True)
class TrainScanPoint:
    molecule: MoleculeSpec
    train: TrainSpec
    temperature: float
    n_max: int
    thermal_n_max: int
    mode: str
    calibration: float
    seed: int | None


def _train_point(p: TrainScanPoint):
    program = FieldProgram.from_train(p.train, p.molecule, mode=p.mode, calibration=p.calibration)
    weights = thermal_populations(p.molecule, p.temperature, p.thermal_n_max)
    res = run_ensemble(weights, program, p.molecule, p.n_max, seed=p.seed, options=RunOptions())
    return res.records.populations[-1], res.records.shell_jz[-1]


@dataclass
class TrainScan:
    """Final shell populations and directionality versus train period."""

    taus: np.ndarray
    populations: np.ndarray  # (tau, N)
    shell_jz: np.ndarray  # (tau, N)

    @property
    def directionality(self) -> np.ndarray:
        return np.array([directionality(p, j) for p, j in zip(self.populations, self.shell_jz)])

    def transfer(self, n_min: int) -> np.ndarray:
        """Population in N >= n_min for each period."""
        return self.populations[:, n_min:].sum(axis=1)


def train_period_scan(molecule: MoleculeSpec, train: TrainSpec, taus, temperature: float, n_max: int,
                      thermal_n_max: int | None = None, mode: str = "auto", calibration: float = 1.0,
                      seed: int | None = 0, jobs: int | None = 1) -> TrainScan:
    """Thermal-ensemble run of ``train`` for every period in ``taus``."""
    taus = np.asarray(taus, dtype=float)
    tn = n_max if thermal_n_max is None else thermal_n_max
    points = [
        TrainScanPoint(molecule, replace(train, period=float(t)), temperature, n_max, tn, mode, calibration, seed)
        for t in taus
    ]
    out = map_points(_train_point, points, jobs)
    return TrainScan(taus, np.array([o[0] for o in out]), np.array([o[1] for o in out]))


def directionality_scan(molecule: MoleculeSpec, train: TrainSpec, taus, temperature: float, n_max: int,
                        **kwargs) -> np.ndarray:
    """Signed directionality (tau x N) of a chiral train scanned over its period."""
    return train_period_scan(molecule, train, taus, temperature, n_max, **kwargs).directionality


@dataclass
class Composition:
    """N-resolved content of a wave packet.

    ``populations`` are the shell populations; ``line_weights`` the
    normalized intensities |rho_{N+2,N}|^2 of the resolved Raman lines
    (all Delta M channels), indexed by the lower level N.
    """

    populations: np.ndarray
    line_weights: np.ndarray
    probe_fwhm: float | None = None

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.populations.size)

    def center(self, n_min: int = 0) -> float:
        """Population-weighted mean N over N >= n_min."""
        p = self.populations[n_min:]
        return float((np.arange(n_min, self.populations.size) * p).sum() / p.sum())

    def peak(self) -> int:
        return int(np.argmax(self.populations))

    def span(self, fraction: float = 0.01, n_min: int = 0) -> int:
        """Number of levels N >= n_min holding at least ``fraction`` of the largest population."""
        p = self.populations[n_min:]
        return int(np.count_nonzero(p >= fraction * p.max()))


def wavepacket_composition(records: Records, t: float | None = None, probe: ProbeSpec | None = None) -> Composition:
    """Composition of the packet at time ``t`` (default: end of the trajectory)."""
    t = records.end_time if t is None else t
    pops = records.populations_at(t)[0]
    lines = np.zeros(records.n_max + 1)
    for dm in (2, -2, 0):
        lines[: records.n_max - 1] += np.abs(records.coherences_at(t, dm)[0]) ** 2
    total = lines.sum()
    return Composition(pops, lines / total if total > 0 else lines, probe.fwhm if probe else None)


def released_center(records: Records, n_min: int | None = None) -> float:
    """Mean N of the centrifuged packet at the end of a run.

    Levels below ``n_min`` (default: half the most populated N) hold the
    molecules that spilled out of the trap and are excluded.
    """
    comp = wavepacket_composition(records)
    lo = comp.peak() // 2 if n_min is None else n_min
    return comp.center(lo)
