"""Molecular constants, rotational energies, timescales and thermal weights.

Units used throughout the package: energies and line positions in cm^-1,
times in ps, angular frequencies in rad/ps, angles in radians, intensities
in W/cm^2, polarizability anisotropies as polarizability volumes in
Angstrom^3. All unit conversions live in this module.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.constants as sc

from .errors import ConfigError, ThermalTruncationError

# ---------------------------------------------------------------- constants
C_CM_PER_S = sc.c * 1e2
C_CM_PER_PS = C_CM_PER_S * 1e-12
#: cm^-1 -> rad/ps
CM_TO_RAD_PS = 2.0 * np.pi * C_CM_PER_PS
#: cm^-1 -> THz
CM_TO_THZ = C_CM_PER_PS
HBAR = sc.hbar
EPS0 = sc.epsilon_0
C_SI = sc.c
#: Boltzmann constant in cm^-1/K
KB_CM = sc.k / (sc.h * C_CM_PER_S)
#: polarizability volume (A^3) -> SI polarizability (C m^2 / V)
A3_TO_SI = 4.0 * np.pi * EPS0 * 1e-30
W_CM2_TO_W_M2 = 1e4

#: ratio D/B above which a molecule is not treated as a near-rigid rotor
MAX_DISTORTION_RATIO = 1e-3

BRANCHES = ("S1", "S2", "S3")

DATABASE_ENV = "SUPERROTOR_MOLECULES"


@dataclass(frozen=True)
class FineStructureModel:
    """Effective spin-rotation splitting of each N -> N+2 Raman line.

    Every line is replaced by three S-branch components. The offset of each
    component (cm^-1, added to the line position) is a polynomial in N with
    coefficients in increasing power order.
    """

    offsets: Mapping[str, tuple[float, ...]]
    amplitudes: Mapping[str, float] = field(
        default_factory=lambda: {b: 1.0 / 3.0 for b in BRANCHES}
    )

    def __post_init__(self):
        if set(self.offsets) != set(BRANCHES):
            raise ConfigError(f"fine structure needs exactly the branches {BRANCHES}")
        if set(self.amplitudes) != set(BRANCHES):
            raise ConfigError(f"fine structure amplitudes need branches {BRANCHES}")
        for n in (0, 50, 150):
            vals = self.offset_values(n)
            spread = np.max(np.abs(vals[:, None] - vals[None, :]))
            if spread >= 0.1:
                raise ConfigError(
                    f"fine-structure offsets differ by {spread:.3g} cm^-1 at N={n}; must be < 0.1"
                )

    def offset_values(self, n) -> np.ndarray:
        """Offsets of (S1, S2, S3) at rotational level ``n``; shape (3,) + shape(n)."""
        n = np.asarray(n, dtype=float)
        return np.stack(
            [np.polynomial.polynomial.polyval(n, self.offsets[b]) for b in BRANCHES]
        )

    def amplitude_values(self) -> np.ndarray:
        return np.array([self.amplitudes[b] for b in BRANCHES], dtype=float)


@dataclass(frozen=True)
class MoleculeSpec:
    """Spectroscopic data of one linear molecule.

    Attributes
    ----------
    name : str
    B, D : float
        Rotational and centrifugal-distortion constants, cm^-1.
    delta_alpha : float
        Polarizability anisotropy, Angstrom^3.
    spin_weight_even, spin_weight_odd : float
        Nuclear-spin statistical weights of even and odd N.
    fine_structure : FineStructureModel, optional
    """

    name: str
    B: float
    D: float = 0.0
    delta_alpha: float = 0.0
    spin_weight_even: float = 1.0
    spin_weight_odd: float = 1.0
    fine_structure: FineStructureModel | None = None

    def __post_init__(self):
        if not self.B > 0:
            raise ConfigError(f"{self.name}: B must be positive, got {self.B}")
        if self.D < 0:
            raise ConfigError(f"{self.name}: D must be non-negative, got {self.D}")
        if self.D / self.B >= MAX_DISTORTION_RATIO:
            raise ConfigError(f"{self.name}: D/B = {self.D / self.B:.3g} exceeds {MAX_DISTORTION_RATIO}")
        if self.delta_alpha < 0:
            raise ConfigError(f"{self.name}: delta_alpha must be non-negative")
        if self.spin_weight_even < 0 or self.spin_weight_odd < 0:
            raise ConfigError(f"{self.name}: spin weights must be non-negative")
        if self.spin_weight_even == 0 and self.spin_weight_odd == 0:
            raise ConfigError(f"{self.name}: at least one spin weight must be positive")

    @property
    def epsilon(self) -> float:
        """Distortion ratio D/B."""
        return self.D / self.B

    def spin_weight(self, n):
        n = np.asarray(n)
        return np.where(n % 2 == 0, self.spin_weight_even, self.spin_weight_odd)

    def lowest_allowed_n(self) -> int:
        return 0 if self.spin_weight_even > 0 else 1

    def with_constants(self, **changes) -> "MoleculeSpec":
        """Copy with some fields replaced (e.g. ``D`` for a distortion study)."""
        from dataclasses import replace

        return replace(self, **changes)

    def monotone_limit(self) -> int:
        """Largest N for which E(N) is still increasing (N(N+1) < B/2D)."""
        if self.D == 0:
            return np.iinfo(np.int64).max
        x = self.B / (2 * self.D)
        return int(np.floor((-1 + np.sqrt(1 + 4 * x)) / 2))


# --------------------------------------------------------------- energetics
def _check_n(n, minimum=0):
    arr = np.asarray(n)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("rotational quantum number must be an integer")
        arr = arr.astype(np.int64)
    if np.any(arr < minimum):
        raise ValueError(f"rotational quantum number must be >= {minimum}")
    return arr


def energy(spec: MoleculeSpec, n):
    """Rotational term value B N(N+1) - D N^2 (N+1)^2 in cm^-1."""
    n = _check_n(n).astype(float)
    x = n * (n + 1)
    return spec.B * x - spec.D * x * x


def raman_shift(spec: MoleculeSpec, n):
    """Position of the N -> N+2 rotational Raman line, cm^-1."""
    n = _check_n(n)
    return energy(spec, n + 2) - energy(spec, n)


def revival_time(spec: MoleculeSpec) -> float:
    """Rigid-rotor revival time 1/(2Bc) in ps."""
    return 1.0 / (2.0 * spec.B * C_CM_PER_PS)


def quarter_revival_distorted(spec: MoleculeSpec, n) -> float:
    """Oscillation period [8Bc(1 - 6 eps N(N+1))]^-1 of a packet centred at N, ps."""
    n = _check_n(n).astype(float)
    shrink = 6.0 * spec.epsilon * n * (n + 1)
    if np.any(shrink >= 1):
        raise ValueError(f"distortion formula invalid: 6 eps N(N+1) = {np.max(shrink):.3g} >= 1")
    return 1.0 / (8.0 * spec.B * C_CM_PER_PS * (1.0 - shrink))


def classical_rotation_frequency(spec: MoleculeSpec, n):
    """Classical rotation frequency of a rotor with angular momentum N, THz.

    Half the Raman shift of the (N-1) -> (N+1) coherence.
    """
    n = _check_n(n, minimum=1)
    return 0.5 * raman_shift(spec, n - 1) * CM_TO_THZ


def resonant_n(spec: MoleculeSpec, omega, n_max: int = 2000) -> int:
    """N whose classical rotation frequency (rad/ps) is closest to ``omega``."""
    ns = np.arange(1, n_max + 1)
    w = 2 * np.pi * classical_rotation_frequency(spec, ns)
    # centrifugal distortion makes w(N) turn over; only the rising branch is physical
    falling = np.nonzero(np.diff(w) <= 0)[0]
    if falling.size:
        ns, w = ns[: falling[0] + 1], w[: falling[0] + 1]
    return int(ns[np.argmin(np.abs(w - omega))])


def omega_for_n(spec: MoleculeSpec, n: int) -> float:
    """Centrifuge angular frequency (rad/ps) resonant with level N."""
    return float(2 * np.pi * classical_rotation_frequency(spec, n))


# ----------------------------------------------------------- thermal weights
@dataclass(frozen=True)
class ThermalWeights:
    """Boltzmann weights of the |N, M> states up to ``n_max``.

    ``weights`` is indexed by the flat basis index ``N**2 + N + M``.
    """

    temperature: float
    n_max: int
    weights: np.ndarray

    def by_n(self) -> np.ndarray:
        out = np.zeros(self.n_max + 1)
        for n in range(self.n_max + 1):
            out[n] = self.weights[n * n : (n + 1) ** 2].sum()
        return out

    def states(self, threshold: float = 0.0):
        """Yield ``(N, M, weight)`` for all states with weight > threshold, in index order."""
        for n in range(self.n_max + 1):
            for m in range(-n, n + 1):
                w = self.weights[n * n + n + m]
                if w > threshold:
                    yield n, m, float(w)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(n, m): w for n, m, w in self.states()}


THERMAL_TAIL = 1e-9


def _boltzmann_shell_weights(spec, temperature, n_top):
    ns = np.arange(n_top + 1)
    e = energy(spec, ns)
    g = spec.spin_weight(ns) * (2 * ns + 1)
    allowed = g > 0
    e0 = e[allowed].min()
    z = np.where(allowed, g * np.exp(-(e - e0) / (KB_CM * temperature)), 0.0)
    return z


def thermal_populations(spec: MoleculeSpec, temperature: float, n_max: int) -> ThermalWeights:
    """Thermal |N, M> weights including (2N+1) degeneracy and spin statistics.

    Raises
    ------
    ThermalTruncationError
        If the population above ``n_max`` exceeds 1e-9 of the total; the
        smallest sufficient ``n_max`` is attached to the exception.
    """
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    size = (n_max + 1) ** 2
    w = np.zeros(size)
    if temperature == 0:
        n0 = spec.lowest_allowed_n()
        if n0 > n_max:
            raise ThermalTruncationError(f"n_max={n_max} below lowest allowed level", n0)
        w[n0 * n0 : (n0 + 1) ** 2] = 1.0 / (2 * n0 + 1)
        return ThermalWeights(0.0, n_max, w)

    # extend the sum until the shells are negligible (and past n_max)
    kt = KB_CM * temperature
    n_far = max(n_max + 50, int(np.sqrt(60 * kt / spec.B)) + 10)
    n_far = min(n_far, spec.monotone_limit())
    shells = _boltzmann_shell_weights(spec, temperature, n_far)
    total = shells.sum()
    tail = shells[n_max + 1 :].sum() / total if n_far > n_max else 0.0
    if tail > THERMAL_TAIL:
        frac = np.cumsum(shells[::-1])[::-1] / total  # population in shells >= N
        required = int(np.argmax(frac <= THERMAL_TAIL)) - 1
        raise ThermalTruncationError(
            f"thermal tail above n_max={n_max} is {tail:.3g} (> {THERMAL_TAIL}); need n_max >= {required}",
            required,
        )
    shells = shells[: n_max + 1]
    shells = shells / shells.sum()
    for n in range(n_max + 1):
        w[n * n : (n + 1) ** 2] = shells[n] / (2 * n + 1)
    return ThermalWeights(float(temperature), n_max, w)


def required_thermal_n_max(spec: MoleculeSpec, temperature: float) -> int:
    """Smallest ``n_max`` accepted by :func:`thermal_populations`."""
    if temperature == 0:
        return spec.lowest_allowed_n()
    try:
        thermal_populations(spec, temperature, spec.lowest_allowed_n() + 1)
        return spec.lowest_allowed_n() + 1
    except ThermalTruncationError as err:
        n = err.required_n_max
    while True:
        try:
            thermal_populations(spec, temperature, n)
            return n
        except ThermalTruncationError:
            n += 1


# ------------------------------------------------------------------ database
def _parse_poly(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def parse_database(text: str, source: str = "<string>") -> dict[str, MoleculeSpec]:
    """Parse the INI-style molecule database (see ``data/molecules.ini``)."""
    parser = configparser.ConfigParser(
        comment_prefixes=("#", ";"), inline_comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    known = {"B", "D", "delta_alpha", "spin_weight_even", "spin_weight_odd"}
    out = {}
    for name in parser.sections():
        sec = parser[name]
        fs_keys = {k for k in sec if k.startswith("fine_structure.")}
        unknown = set(sec) - known - fs_keys
        if unknown:
            raise ConfigError(f"{source}: [{name}] unknown keys {sorted(unknown)}")
        if "B" not in sec:
            raise ConfigError(f"{source}: [{name}] missing B")
        try:
            fine = None
            if fs_keys:
                offsets = {b: _parse_poly(sec[f"fine_structure.{b}"]) for b in BRANCHES if f"fine_structure.{b}" in sec}
                amps = {
                    b: float(sec[f"fine_structure.amplitude.{b}"])
                    for b in BRANCHES
                    if f"fine_structure.amplitude.{b}" in sec
                }
                kwargs = {"amplitudes": amps} if amps else {}
                fine = FineStructureModel(offsets=offsets, **kwargs)
            out[name] = MoleculeSpec(
                name=name,
                B=float(sec["B"]),
                D=float(sec.get("D", 0.0)),
                delta_alpha=float(sec.get("delta_alpha", 0.0)),
                spin_weight_even=float(sec.get("spin_weight_even", 1.0)),
                spin_weight_odd=float(sec.get("spin_weight_odd", 1.0)),
                fine_structure=fine,
            )
        except (KeyError, ValueError) as err:
            raise ConfigError(f"{source}: [{name}] {err}") from None
    return out


def database_path() -> Path | None:
    env = os.environ.get(DATABASE_ENV)
    return Path(env) if env else None


@lru_cache(maxsize=8)
def _load(path: str | None) -> dict[str, MoleculeSpec]:
    if path is None:
        text = resources.files("superrotor.data").joinpath("molecules.ini").read_text()
        return parse_database(text, "molecules.ini")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read molecule database {p}: {err}") from None
    return parse_database(text, str(p))


def load_database(path: str | os.PathLike | None = None) -> dict[str, MoleculeSpec]:
    """Load molecules from ``path``, ``$SUPERROTOR_MOLECULES`` or the bundled file."""
    if path is None:
        env = database_path()
        path = str(env) if env else None
    return dict(_load(None if path is None else str(path)))


def get_molecule(name: str, path=None) -> MoleculeSpec:
    db = load_database(path)
    try:
        return db[name]
    except KeyError:
        raise ConfigError(f"unknown molecule {name!r}; known: {sorted(db)}") from None
