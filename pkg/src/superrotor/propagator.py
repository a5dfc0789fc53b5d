"""Time evolution of rotational wave packets.

* Impulsive kicks exp(i P cos^2) are applied through an exact eigensystem of
  the cos^2 matrix, computed once per (n_max, axis) on each connected block
  and reused for any strength; in-plane angles are reached by exact z
  rotations of the x-axis operator.
* Free evolution is a diagonal phase.
* Finite pulses and the centrifuge are integrated in the frame co-rotating
  with the polarization, H' = E(N) - Omega(t) J_z - u(t) cos^2(theta_x'),
  by Strang splitting: the diagonal part is exact (including the integral of
  Omega), the coupling step is a Taylor-series exponential of the static
  sparse cos^2 matrix. Snapshots are transformed back to the lab frame.

Wave packets may be processed in batches: coefficient arrays of shape
``(basis, k)`` hold ``k`` independent molecules; derived records are
weighted sums over the batch (incoherent ensemble average of expectation
values and coherences).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .angular import (
    LAB_Z,
    BasisIndex,
    Wavefunction,
    _cos2_x,
    _cos2_z,
    _quantum_numbers,
    coherence_array,
    free_phases,
    jz_by_n,
    sum_over_m,
    z_rotation_phases,
)
from .errors import GuardError, StepSizeError, TruncationError
from .fields import Centrifuge, CentrifugeSpec, FieldProgram, Free, Kick, Pulse, trap_depth
from .molecule import CM_TO_RAD_PS, MoleculeSpec, ThermalWeights, energy

log = logging.getLogger(__name__)

#: population allowed in the two highest N shells
TRUNCATION_LIMIT = 1e-6
DT_FREE = 0.05
DT_FIELD = 0.25
#: max phase (rad) accumulated per step between any two coupled states
PHASE_PER_STEP = 0.5


# ----------------------------------------------------------------- helpers
def _as_batch(c):
    c = np.asarray(c, dtype=complex)
    return (c[:, None], True) if c.ndim == 1 else (c, False)


def top_shell_population(c, n_max, weights=None) -> float:
    c, _ = _as_batch(c)
    p = np.abs(c[(n_max - 1) ** 2 :]) ** 2 if n_max >= 1 else np.abs(c) ** 2
    per_col = p.sum(axis=0)
    if weights is None:
        return float(per_col.max())
    return float(per_col @ np.asarray(weights))


def check_truncation(c, n_max, weights=None, limit=TRUNCATION_LIMIT):
    pop = top_shell_population(c, n_max, weights)
    if pop > limit:
        raise TruncationError(
            f"population {pop:.3g} in shells N >= {n_max - 1} exceeds {limit:g}; increase n_max"
        )


# ------------------------------------------------------------------- kicks
_R2 = np.sqrt(0.5)


@dataclass(frozen=True)
class _Block:
    """cos^2 diagonalized on one subspace closed under M -> -M.

    The reflection y -> -y maps |N, M> to (-1)^M |N, -M> and commutes with
    cos^2 for both the lab-z and in-plane axes. Even and odd combinations of
    each ``pos``/``neg`` pair (plus the M = 0 states, which are even) are
    diagonalized separately, so mirror-image states evolve into bitwise
    mirror images.
    """

    pos: np.ndarray
    neg: np.ndarray
    zero: np.ndarray
    sign: np.ndarray
    even_values: np.ndarray
    even_vectors: np.ndarray
    odd_values: np.ndarray
    odd_vectors: np.ndarray

    def apply(self, c, out, strength):
        k = self.pos.size
        cp, cn = c[self.pos], self.sign * c[self.neg]
        even = np.concatenate([(cp + cn) * _R2, c[self.zero]])
        odd = (cp - cn) * _R2
        v = self.even_vectors
        even = v @ (np.exp(1j * strength * self.even_values)[:, None] * (v.T @ even))
        if k:
            v = self.odd_vectors
            odd = v @ (np.exp(1j * strength * self.odd_values)[:, None] * (v.T @ odd))
        out[self.pos] = (even[:k] + odd) * _R2
        out[self.neg] = self.sign * ((even[:k] - odd) * _R2)
        out[self.zero] = even[k:]


@lru_cache(maxsize=8)
def kick_eigensystem(n_max: int, axis: str) -> tuple[_Block, ...]:
    """Eigen-decomposition of cos^2 (axis "z" or "x") per mirror-closed block."""
    mat = (_cos2_z(n_max) if axis == "z" else _cos2_x(n_max)).tocsr()
    ns, ms = _quantum_numbers(n_max)
    partner = ns**2 + ns - ms
    ncomp, labels = connected_components(mat != 0, directed=False)
    # merge each component with its mirror image
    group = np.minimum(labels, labels[partner])
    blocks = []
    for g in np.unique(group):
        idx = np.nonzero(group == g)[0]
        pos = idx[ms[idx] > 0]
        neg = partner[pos]
        zero = idx[ms[idx] == 0]
        sign = np.where(ms[pos] % 2 == 0, 1.0, -1.0)[:, None]
        k, nz = pos.size, zero.size
        sub_idx = np.concatenate([pos, neg, zero])
        a = mat[sub_idx][:, sub_idx].toarray().real
        t_even = np.zeros((2 * k + nz, k + nz))
        t_odd = np.zeros((2 * k + nz, k))
        t_even[np.arange(k), np.arange(k)] = _R2
        t_even[k + np.arange(k), np.arange(k)] = _R2 * sign[:, 0]
        t_even[2 * k + np.arange(nz), k + np.arange(nz)] = 1.0
        t_odd[np.arange(k), np.arange(k)] = _R2
        t_odd[k + np.arange(k), np.arange(k)] = -_R2 * sign[:, 0]
        ev, evec = np.linalg.eigh(t_even.T @ a @ t_even)
        if k:
            ov, ovec = np.linalg.eigh(t_odd.T @ a @ t_odd)
        else:
            ov, ovec = np.zeros(0), np.zeros((0, 0))
        blocks.append(_Block(pos, neg, zero, sign, ev, evec, ov, ovec))
    return tuple(blocks)


def kick_coefficients(c: np.ndarray, n_max: int, strength: float, polarization=LAB_Z) -> np.ndarray:
    """exp(i P cos^2) applied to a coefficient vector or batch."""
    c, single = _as_batch(c)
    if strength == 0:
        out = c.copy()
        return out[:, 0] if single else out
    inplane = not (polarization is None or polarization == LAB_Z)
    if inplane:
        ph = z_rotation_phases(n_max, float(polarization))
        c = ph.conj()[:, None] * c
    out = np.empty_like(c)
    for blk in kick_eigensystem(n_max, "x" if inplane else "z"):
        blk.apply(c, out, strength)
    if inplane:
        out = ph[:, None] * out
    return out[:, 0] if single else out


def kick_operator(n_max: int, strength: float, polarization=LAB_Z) -> np.ndarray:
    """Dense unitary exp(i P cos^2); intended for small bases and tests."""
    return kick_coefficients(np.eye((n_max + 1) ** 2, dtype=complex), n_max, strength, polarization)


def apply_kick(psi: Wavefunction, strength: float, polarization=LAB_Z, guard: bool = True) -> Wavefunction:
    """Instantaneous kick exp(i P cos^2 theta_u) of strength ``strength``."""
    c = kick_coefficients(psi.coefficients, psi.n_max, strength, polarization)
    if guard:
        check_truncation(c, psi.n_max)
    return Wavefunction(c, psi.n_max)


def propagate_free(psi: Wavefunction, molecule: MoleculeSpec, dt: float) -> Wavefunction:
    """Field-free evolution for ``dt`` ps."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return Wavefunction(psi.coefficients * free_phases(psi.n_max, molecule, dt), psi.n_max)


# --------------------------------------------------------------- records
@dataclass
class Records:
    """Derived observables on a strictly increasing time grid.

    Between record ``k`` and ``k + 1`` the system is field-free when
    ``free_after[k]`` is set; observables inside such intervals are obtained
    exactly by analytic phase evolution (see :meth:`coherences_at`).
    """

    molecule: MoleculeSpec
    n_max: int
    times: np.ndarray
    populations: np.ndarray  # (T, n_max + 1)
    coherences: dict  # dM -> (T, n_max - 1) complex
    shell_jz: np.ndarray  # (T, n_max + 1)
    free_after: np.ndarray  # (T,) bool
    end_time: float

    @property
    def jz(self) -> np.ndarray:
        return self.shell_jz.sum(axis=1)

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0] - 1e-9) or np.any(t > self.end_time + 1e-9):
            raise ValueError(f"time outside trajectory [{self.times[0]}, {self.end_time}]")
        k = np.clip(np.searchsorted(self.times, t + 1e-9, side="right") - 1, 0, self.times.size - 1)
        dt = t - self.times[k]
        bad = (np.abs(dt) > 1e-9) & ~self.free_after[k]
        if np.any(bad):
            raise ValueError(
                f"time {t[bad][0]} lies inside a field segment between snapshots; "
                "request it as a sample time"
            )
        return k, np.where(np.abs(dt) > 1e-9, dt, 0.0)

    def line_frequencies(self) -> np.ndarray:
        """Angular frequencies (rad/ps) of the N -> N+2 coherences."""
        e = energy(self.molecule, np.arange(self.n_max + 1))
        return CM_TO_RAD_PS * (e[2:] - e[:-2])

    def coherences_at(self, t, delta_m: int = 2) -> np.ndarray:
        k, dt = self._locate(t)
        w = self.line_frequencies()
        return self.coherences[delta_m][k] * np.exp(1j * np.outer(dt, w))

    def populations_at(self, t) -> np.ndarray:
        k, _ = self._locate(t)
        return self.populations[k]

    def shell_jz_at(self, t) -> np.ndarray:
        k, _ = self._locate(t)
        return self.shell_jz[k]

    def sample_times(self, dt_free: float = DT_FREE) -> np.ndarray:
        """Recorded times plus a ``dt_free`` grid inside free intervals."""
        out = [self.times]
        bounds = np.append(self.times, self.end_time)
        for k in np.nonzero(self.free_after)[0]:
            a, b = bounds[k], bounds[k + 1]
            n = int(math.floor((b - a) / dt_free + 1e-9))
            if n > 0:
                out.append(a + dt_free * np.arange(1, n + 1))
        t = np.unique(np.round(np.concatenate(out), 12))
        return t[t <= self.end_time + 1e-12]

    def final_populations(self) -> np.ndarray:
        return self.populations_at(self.end_time)[0]

    def __add__(self, other: "Records") -> "Records":
        if not np.array_equal(self.times, other.times):
            raise GuardError("cannot aggregate records on different time grids")
        return Records(
            self.molecule,
            self.n_max,
            self.times,
            self.populations + other.populations,
            {k: self.coherences[k] + other.coherences[k] for k in self.coherences},
            self.shell_jz + other.shell_jz,
            self.free_after & other.free_after,
            self.end_time,
        )

    def scaled(self, factor: float) -> "Records":
        return Records(
            self.molecule,
            self.n_max,
            self.times,
            self.populations * factor,
            {k: v * factor for k, v in self.coherences.items()},
            self.shell_jz * factor,
            self.free_after,
            self.end_time,
        )


def _column_sum(x, weights, mirror=None):
    """Weighted sum over batch columns.

    With ``mirror`` (column of each member's M -> -M partner) partner columns
    are added first, keeping mirror-image batches bitwise symmetric.
    """
    if mirror is None:
        return x @ weights
    cols = np.arange(mirror.size)
    first = cols[mirror > cols]
    alone = cols[mirror == cols]
    folded = np.concatenate([x[:, first] + x[:, mirror[first]], x[:, alone]], axis=1)
    w = np.concatenate([weights[first], weights[alone]])
    return (folded * w).sum(axis=1)


class _Recorder:
    def __init__(self, molecule, n_max, weights, keep_states, mirror=None):
        self.molecule = molecule
        self.n_max = n_max
        self.weights = weights
        self.keep_states = keep_states
        self.mirror = mirror
        self.rows = []  # (t, pops, coh dict, shell jz, state)
        self.free_after = []

    def record(self, t, c, free_after=False):
        w = self.weights
        p = _column_sum(np.abs(c) ** 2, w, self.mirror)
        coh = {dm: coherence_array(c, self.n_max, dm, w) for dm in (-2, 0, 2)}
        row = (t, sum_over_m(p, self.n_max), coh, jz_by_n(p, self.n_max), c.copy() if self.keep_states else None)
        if self.rows and abs(self.rows[-1][0] - t) < 1e-9:
            self.rows[-1] = row
            self.free_after[-1] = free_after
        else:
            self.rows.append(row)
            self.free_after.append(free_after)

    def mark_free(self):
        self.free_after[-1] = True

    def build(self, end_time) -> tuple[Records, list]:
        times = np.array([r[0] for r in self.rows])
        rec = Records(
            self.molecule,
            self.n_max,
            times,
            np.array([r[1] for r in self.rows]),
            {dm: np.array([r[2][dm] for r in self.rows]) for dm in (-2, 0, 2)},
            np.array([r[3] for r in self.rows]),
            np.array(self.free_after, dtype=bool),
            end_time,
        )
        return rec, [r[4] for r in self.rows]


# ------------------------------------------------------- continuous fields
@dataclass
class Drive:
    """Continuous field acting on [t0, t1].

    ``depth(t)`` is the trap depth u(t) in rad/ps. For ``axis="z"`` the
    field is along the lab z axis; for ``axis="x"`` it lies in the xy plane
    at angle ``angle(t)`` with rotation rate ``omega(t) = d angle / dt``.
    """

    t0: float
    t1: float
    depth: Callable
    axis: str = "x"
    angle: Callable | None = None
    omega_max: float = 0.0
    depth_max: float = 0.0


def drive_for(segment, molecule: MoleculeSpec, calibration: float = 1.0) -> Drive:
    if isinstance(segment, Pulse):
        p = segment.pulse
        u0 = trap_depth(p.peak_intensity, molecule.delta_alpha, calibration)
        depth = lambda t: u0 * p.envelope(t)  # noqa: E731
        if p.polarization is None or p.polarization == LAB_Z:
            return Drive(segment.start, segment.end, depth, "z", depth_max=u0)
        phi = float(p.polarization)
        return Drive(segment.start, segment.end, depth, "x", lambda t: phi, 0.0, u0)
    if isinstance(segment, Centrifuge):
        cfg = segment.spec
        u0 = trap_depth(cfg.peak_intensity, molecule.delta_alpha, calibration)
        start = segment.start
        return Drive(
            start,
            start + cfg.field_duration,
            lambda t: u0 * cfg.envelope(t - start),
            "x",
            lambda t: cfg.angle(t - start),
            float(np.max(np.abs(cfg.omega([0.0, cfg.field_duration])))),
            u0,
        )
    raise TypeError(f"no continuous drive for {segment!r}")


def occupied_sectors(c, n_max) -> np.ndarray:
    """Indices of the (N mod 2, M mod 2) sectors holding any amplitude."""
    ns, ms = _quantum_numbers(n_max)
    key = (ns % 2) * 2 + (ms % 2)
    occ = np.abs(c).max(axis=1) > 0 if c.ndim == 2 else np.abs(c) > 0
    keep = np.isin(key, np.unique(key[occ]))
    return np.nonzero(keep)[0]


def max_step(drive: Drive, molecule: MoleculeSpec, n_max: int, idx=None) -> float:
    """Largest step allowed for ``drive``.

    Two limits: 1/50 of the harmonic trap period scale 2 sqrt(u 2piBc), and
    at most PHASE_PER_STEP radians of relative phase between any two
    coupled states of the (rotating-frame) diagonal.
    """
    ns, ms = _quantum_numbers(n_max)
    if idx is None:
        idx = np.arange(ns.size)
    e = CM_TO_RAD_PS * energy(molecule, np.arange(n_max + 1))[ns[idx]]
    m = ms[idx].astype(float)
    mat = (_cos2_z(n_max) if drive.axis == "z" else _cos2_x(n_max))[idx][:, idx].tocoo()
    de = np.abs(e[mat.row] - e[mat.col])
    dm = np.abs(m[mat.row] - m[mat.col])
    spread = float(np.max(de + drive.omega_max * dm)) if de.size else 0.0
    limits = [PHASE_PER_STEP / spread if spread > 0 else np.inf]
    w_trap = 2.0 * math.sqrt(drive.depth_max * CM_TO_RAD_PS * molecule.B)
    if w_trap > 0:
        limits.append(1.0 / (50.0 * w_trap))
    return float(min(limits))


def _taylor_expm(mat, c, a, tol=1e-16):
    """exp(i a mat) c by a Taylor series; ||mat|| <= 1/2 is assumed."""
    x = abs(a) * 0.5
    if x == 0:
        return c
    out = c.copy()
    term = c
    k = 1
    # |x|^k / k! bound on the k-th term
    bound = x
    while True:
        term = (1j * a / k) * (mat @ term)
        out += term
        if bound < tol:
            break
        k += 1
        bound *= x / k
    return out


def integrate_drive(c, drive: Drive, molecule: MoleculeSpec, n_max: int, dt=None, sample_every=DT_FIELD,
                    recorder=None, richardson: bool = False, richardson_tol: float = 1e-6):
    """Integrate a continuous segment; returns the lab-frame coefficients at t1."""
    c, single = _as_batch(c)
    idx = occupied_sectors(c, n_max)
    bound = max_step(drive, molecule, n_max, idx)
    if dt is None:
        dt = bound
    elif dt > bound * (1 + 1e-9):
        raise StepSizeError(f"dt={dt:g} ps exceeds the allowed {bound:.3g} ps for this field")
    span = drive.t1 - drive.t0
    if span <= 0:
        return c[:, 0] if single else c
    # snapshots on the absolute grid k * sample_every; each piece is stepped uniformly
    first = math.floor(drive.t0 / sample_every + 1e-9) + 1
    knots = [drive.t0]
    k = first
    while k * sample_every < drive.t1 - 1e-9:
        knots.append(k * sample_every)
        k += 1
    knots.append(drive.t1)
    pieces = [(a, b, max(1, int(math.ceil((b - a) / dt - 1e-9)))) for a, b in zip(knots[:-1], knots[1:])]

    ns, ms = _quantum_numbers(n_max)
    e = CM_TO_RAD_PS * energy(molecule, np.arange(n_max + 1))[ns[idx]]
    m = ms[idx].astype(float)
    base = _cos2_z(n_max) if drive.axis == "z" else _cos2_x(n_max)
    mat = (base[idx][:, idx] - 0.5 * sp.identity(idx.size)).tocsr()
    if drive.axis == "x":
        ang = drive.angle
    else:
        ang = lambda t: 0.0  # noqa: E731

    def lab(cr, t):
        return np.exp(-1j * m * ang(t))[:, None] * cr

    def step(cr, t, hh):
        tm, tb = t + 0.5 * hh, t + hh
        a0, am, ab = ang(t), ang(tm), ang(tb)
        cr = np.exp(-1j * (e * (tm - t) - m * (am - a0)))[:, None] * cr
        u = drive.depth(tm)
        if u:
            cr = np.exp(0.5j * u * hh) * _taylor_expm(mat, cr, u * hh)
        return np.exp(-1j * (e * (tb - tm) - m * (ab - am)))[:, None] * cr

    def run(cr, parts, rec, refine=1):
        for a, b, nst in parts:
            nst *= refine
            hh = (b - a) / nst
            for j in range(nst):
                cr = step(cr, a + j * hh, hh)
            if rec is not None and b < drive.t1 - 1e-9:
                full = np.zeros_like(c)
                full[idx] = lab(cr, b)
                rec.record(b, full)
        return cr

    cr = np.exp(1j * m * ang(drive.t0))[:, None] * c[idx]
    if richardson:
        # compare the pieces covering the last picosecond at h and h/2
        tail = len(pieces) - 1
        while tail > 0 and pieces[-1][1] - pieces[tail][0] < 1.0:
            tail -= 1
        cr_mid = run(cr, pieces[:tail], recorder)
        coarse = run(cr_mid, pieces[tail:], None)
        fine = run(cr_mid, pieces[tail:], None, refine=2)
        err = float(np.max(1 - np.abs(np.sum(coarse.conj() * fine, axis=0)) /
                           np.maximum(np.sum(np.abs(fine) ** 2, axis=0), 1e-300)))
        if err > richardson_tol:
            raise StepSizeError(f"Richardson check failed: infidelity {err:.3g} > {richardson_tol:g}")
        cr = coarse if recorder is None else run(cr_mid, pieces[tail:], recorder)
    else:
        cr = run(cr, pieces, recorder)
    out = np.zeros_like(c)
    out[idx] = lab(cr, drive.t1)
    return out[:, 0] if single else out


# --------------------------------------------------------------- programs
@dataclass
class Trajectory:
    """Records of one run plus optional full snapshots at the record times."""

    records: Records
    final: Wavefunction | None
    snapshots: list | None = None

    @property
    def times(self):
        return self.records.times

    def state_at(self, t: float) -> Wavefunction:
        if self.snapshots is None:
            raise ValueError("run with keep_states=True to access wave packets")
        k, dt = self.records._locate(t)
        c = self.snapshots[int(k[0])][:, 0]
        psi = Wavefunction(c, self.records.n_max)
        return propagate_free(psi, self.records.molecule, float(dt[0])) if dt[0] else psi


@dataclass
class RunOptions:
    dt: float | None = None
    sample_every: float = DT_FIELD
    guard: bool = True
    keep_states: bool = False
    richardson: bool = False


def _segments_in_order(program: FieldProgram):
    return [s for s in program.segments if not isinstance(s, Free)]


def evolve_batch(c0: np.ndarray, weights, program: FieldProgram, molecule: MoleculeSpec, n_max: int,
                 options: RunOptions = RunOptions(), guard_weights=None, mirror=None):
    """Run ``program`` on a batch; returns (Records, final coefficients, snapshots).

    ``mirror`` optionally gives, for each column, the column holding its
    M -> -M partner (see :func:`_column_sum`).
    """
    c, _ = _as_batch(c0)
    weights = np.ones(c.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    rec = _Recorder(molecule, n_max, weights, options.keep_states, mirror)
    t = 0.0
    rec.record(t, c)
    for seg in _segments_in_order(program):
        if seg.start > t + 1e-12:
            rec.mark_free()
            c = c * free_phases(n_max, molecule, seg.start - t)[:, None]
            t = seg.start
            rec.record(t, c)
        if isinstance(seg, Kick):
            c = kick_coefficients(c, n_max, seg.strength, seg.polarization)
        else:
            drive = drive_for(seg, molecule, program.calibration)
            c = integrate_drive(c, drive, molecule, n_max, options.dt, options.sample_every, rec,
                                richardson=options.richardson)
            # field-free tail of a truncated centrifuge
            if seg.end > drive.t1 + 1e-12:
                rec.record(drive.t1, c)
                rec.mark_free()
                c = c * free_phases(n_max, molecule, seg.end - drive.t1)[:, None]
        t = seg.end
        rec.record(t, c)
        if options.guard:
            check_truncation(c, n_max, guard_weights)
    if program.duration > t + 1e-12:
        rec.mark_free()
        c = c * free_phases(n_max, molecule, program.duration - t)[:, None]
        t = program.duration
        rec.record(t, c)
    records, states = rec.build(t)
    if options.guard:
        check_truncation(c, n_max, guard_weights)
    return records, c, states if options.keep_states else None


def run_program(initial: Wavefunction, program: FieldProgram, molecule: MoleculeSpec,
                options: RunOptions | None = None, **kwargs) -> Trajectory:
    """Evolve one wave packet through ``program``.

    Keyword arguments override fields of :class:`RunOptions`.
    """
    opts = RunOptions(**{**(options.__dict__ if options else {}), **kwargs})
    records, c, states = evolve_batch(initial.coefficients, [1.0], program, molecule, initial.n_max, opts)
    return Trajectory(records, Wavefunction(c[:, 0], initial.n_max), states)


def propagate_centrifuge(psi: Wavefunction, molecule: MoleculeSpec, cfg: CentrifugeSpec, dt: float | None = None,
                         calibration: float = 1.0, rng: np.random.Generator | None = None,
                         **kwargs) -> Trajectory:
    """Spin a wave packet up in an optical centrifuge starting at t = 0.

    The trajectory covers the full centrifuge duration (field-free after
    a spectral truncation). Extra keyword arguments go to :class:`RunOptions`.
    """
    program = FieldProgram((Centrifuge(0.0, cfg.resolve(rng)),), cfg.duration, calibration)
    return run_program(psi, program, molecule, dt=dt, **kwargs)


# ---------------------------------------------------------------- ensembles
@dataclass
class EnsembleResult:
    """Thermal ensemble run.

    ``members`` lists ``(N, M, weight)`` of every initial state; ``records``
    are the weight-averaged (and shot-averaged) observables; ``thetas`` the
    centrifuge orientations drawn for each shot.
    """

    members: list
    records: Records
    thetas: list = field(default_factory=list)
    member_records: list | None = None

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.members])


def _chunks(members, size):
    """Split members into batches of about ``size`` that never separate a shell."""
    part = []
    for k, mem in enumerate(members):
        part.append(mem)
        last = k + 1 == len(members) or members[k + 1][0] != mem[0]
        if last and len(part) >= size:
            yield part
            part = []
    if part:
        yield part


def _partner_columns(part):
    """Column of each member's M -> -M partner; unpaired members map to themselves."""
    where = {(n, m): j for j, (n, m, _) in enumerate(part)}
    return np.array([where.get((n, -m), j) for j, (n, m, _) in enumerate(part)])


def run_ensemble(weights: ThermalWeights, program: FieldProgram, molecule: MoleculeSpec, n_max: int | None = None,
                 seed: int | None = None, shots: int = 1, chunk: int = 256, options: RunOptions | None = None,
                 keep_members: bool = False, min_weight: float = 0.0) -> EnsembleResult:
    """Incoherent thermal average of independent single-molecule runs.

    Each shot draws the random centrifuge orientations from a generator
    seeded with ``seed``; shots are averaged with equal weight. Batches are
    reduced in a fixed order so results are reproducible bit for bit.
    """
    n_max = weights.n_max if n_max is None else n_max
    if n_max < weights.n_max:
        raise ValueError("propagation n_max must be >= thermal n_max")
    opts = options or RunOptions()
    members = list(weights.states(min_weight))
    if not members:
        raise GuardError("empty ensemble")
    total_w = sum(w for _, _, w in members)
    basis = BasisIndex(n_max)
    rng = np.random.default_rng(seed)
    inner = RunOptions(opts.dt, opts.sample_every, False, False, opts.richardson)
    agg = None
    member_records = [] if keep_members else None
    thetas = []
    for _ in range(shots):
        prog = program.resolve(rng)
        thetas.append([s.spec.theta0 for s in prog.segments if isinstance(s, Centrifuge)])
        for part in _chunks(members, chunk):
            c0 = np.zeros((basis.size, len(part)), dtype=complex)
            for j, (n, m, _) in enumerate(part):
                c0[basis.index(n, m), j] = 1.0
            if keep_members:
                for j, (n, m, w) in enumerate(part):
                    r, _, _ = evolve_batch(c0[:, j], [1.0], prog, molecule, n_max, inner)
                    member_records.append(r)
            w = np.array([wt for _, _, wt in part]) / (total_w * shots)
            r, _, _ = evolve_batch(c0, w, prog, molecule, n_max, inner, mirror=_partner_columns(part))
            agg = r if agg is None else agg + r
    if opts.guard:
        top = agg.populations[:, -2:].sum(axis=1).max()
        if top > TRUNCATION_LIMIT:
            raise TruncationError(
                f"ensemble population {top:.3g} in shells N >= {n_max - 1} exceeds {TRUNCATION_LIMIT:g}"
            )
    drift = abs(agg.populations.sum(axis=1) - 1).max()
    if drift > 1e-8:
        raise GuardError(f"aggregated populations deviate from 1 by {drift:.3g}")
    return EnsembleResult(members, agg, thetas, member_records)
