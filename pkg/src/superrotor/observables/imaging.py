"""Angular-density maps of released wave packets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from ..angular import Wavefunction, _quantum_numbers, _ylm_table
from ..molecule import CM_TO_RAD_PS, MoleculeSpec, energy


@dataclass
class DensityMap:
    """Probability density of the molecular axis, shape (time, phi)."""

    times: np.ndarray
    phi: np.ndarray
    density: np.ndarray

    @property
    def normalized(self) -> np.ndarray:
        total = self.density.mean(axis=1, keepdims=True) * 2 * np.pi
        return self.density / np.where(total > 0, total, 1.0)

    def alignment_angle(self) -> np.ndarray:
        """Orientation of the two-lobed pattern, phi_0(t) = arg<exp(2i phi)>/2, unwrapped."""
        moment = self.density @ np.exp(2j * self.phi)
        return 0.5 * np.unwrap(np.angle(moment))

    def contrast(self) -> np.ndarray:
        """|<exp(2i phi)>| per time: 1 for a perfect dumbbell, 0 when smeared."""
        moment = self.density @ np.exp(2j * self.phi)
        return np.abs(moment) / np.maximum(self.density.sum(axis=1), 1e-300)

    def rotation_frequency(self) -> float:
        """Dumbbell rotation frequency (THz) from a linear fit of the lobe angle."""
        if self.times.size < 2:
            raise ValueError("need at least two snapshots")
        slope = np.polyfit(self.times, self.alignment_angle(), 1)[0]
        return float(slope / (2 * np.pi))


def angular_density_map(psi: Wavefunction, molecule: MoleculeSpec, times, phi, theta: float = np.pi / 2,
                        marginal: bool = False, chunk: int = 256) -> DensityMap:
    """Density versus (free-evolution time, phi) of a released packet.

    ``psi`` is the packet at release (t = 0); it evolves freely for each
    requested time. The density is the slice at ``theta`` or, with
    ``marginal=True``, the sin(theta)-weighted integral over theta.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        raise ValueError("empty phi grid")
    n_max = psi.n_max
    ms = _quantum_numbers(n_max)[1]
    m_values = np.arange(-n_max, n_max + 1)
    fourier = np.exp(1j * np.outer(m_values, phi))  # (2n+1, phi)
    # collect basis states into M columns
    collect = np.zeros((ms.size, m_values.size))
    collect[np.arange(ms.size), ms + n_max] = 1.0
    if marginal:
        x, w = roots_legendre(n_max + 1)
        thetas, wts = np.arccos(x), w
    else:
        thetas, wts = np.array([theta]), np.array([1.0])
    ylm = _ylm_table(n_max, thetas)  # (ntheta, basis)
    ns = _quantum_numbers(n_max)[0]
    e_phase = -1j * CM_TO_RAD_PS * energy(molecule, np.arange(n_max + 1))[ns]
    out = np.zeros((times.size, phi.size))
    for a in range(0, times.size, chunk):
        t = times[a : a + chunk]
        c_t = psi.coefficients[None, :] * np.exp(np.outer(t, e_phase))  # (T, basis)
        for th_y, wt in zip(ylm, wts):
            am = (c_t * th_y[None, :]) @ collect  # (T, 2n+1)
            out[a : a + chunk] += wt * np.abs(am @ fourier) ** 2
    return DensityMap(times, phi, out)


def lobe_count(density: np.ndarray, phi: np.ndarray, max_harmonic: int = 64) -> int:
    """Number of lobes: the dominant angular harmonic of a density on a uniform phi grid."""
    spec = np.abs(np.fft.rfft(density - density.mean()))
    spec = spec[: max_harmonic + 1]
    return int(np.argmax(spec))

