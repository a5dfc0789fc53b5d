import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from oracles import kick_by_grid
from superrotor.angular import Wavefunction, cos2_matrix
from superrotor.errors import GuardError, StepSizeError, TruncationError
from superrotor.fields import Centrifuge, CentrifugeSpec, FieldProgram, Free, Kick, Pulse, PulseSpec, kick_strength
from superrotor.molecule import CM_TO_RAD_PS, MoleculeSpec, energy, revival_time, thermal_populations
from superrotor.propagator import (
    apply_kick,
    kick_operator,
    propagate_centrifuge,
    propagate_free,
    run_ensemble,
    run_program,
)

BETA = 2 * np.pi * 10 / 100


def fidelity(a, b):
    return abs(np.vdot(a.coefficients, b.coefficients)) ** 2


# ------------------------------------------------------------------ kicks
@pytest.mark.parametrize("pol", ["z", 0.0, 0.9])
@pytest.mark.parametrize("start", [(0, 0), (1, 1), (2, -1), (3, 0)])
def test_kick_matches_grid_oracle(pol, start):
    n_max = 16
    psi = Wavefunction.basis_state(n_max, *start)
    kicked = apply_kick(psi, 1.0, pol, guard=False)
    ref = Wavefunction(kick_by_grid(psi.coefficients, n_max, 1.0, pol), n_max)
    assert fidelity(kicked, ref) > 1 - 1e-8
    assert np.max(np.abs(kicked.populations() - ref.populations())) < 1e-8


def test_kick_unitary_and_identity(rng):
    u = kick_operator(8, 2.3, 0.4)
    assert np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) < 1e-12
    psi = random_state(rng, 8)
    assert np.array_equal(apply_kick(psi, 0.0, guard=False).coefficients, psi.coefficients)
    for pol in ("z", 1.1):
        assert abs(apply_kick(psi, 3.0, pol, guard=False).norm() - 1) < 1e-9


def test_kick_selection_rules():
    psi = apply_kick(Wavefunction.basis_state(20, 1, 1), 2.0, 0.3)
    b = psi.basis
    nz = np.abs(psi.coefficients) > 1e-14
    assert np.all(b.n[nz] % 2 == 1)
    assert np.all((b.m[nz] - 1) % 2 == 0)
    z = apply_kick(Wavefunction.basis_state(20, 2, 1), 2.0, "z")
    assert np.all(z.basis.m[np.abs(z.coefficients) > 1e-14] == 1)


def test_kick_is_exp_of_cos2(rng):
    from scipy.linalg import expm

    a = cos2_matrix(6, 0.7).matrix.toarray()
    assert np.max(np.abs(kick_operator(6, 1.7, 0.7) - expm(1j * 1.7 * a))) < 1e-12


def test_kick_fig1_shape():
    psi = apply_kick(Wavefunction.basis_state(40, 0, 0), 3.6, "z")
    pops = psi.populations()
    assert np.all(pops[1::2] < 1e-28)
    assert pops[0] < 0.5 and pops[6] > 1e-3 and pops[12:].sum() < 1e-4


def test_truncation_guard():
    with pytest.raises(TruncationError):
        apply_kick(Wavefunction.basis_state(6, 0, 0), 5.0)


# ------------------------------------------------------------------ free
def test_free_evolution(rigid, rng):
    psi = random_state(rng, 10)
    assert np.array_equal(propagate_free(psi, rigid, 0.0).coefficients, psi.coefficients)
    full = propagate_free(psi, rigid, revival_time(rigid))
    assert fidelity(full, psi) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(full.populations() - psi.populations())) < 1e-14
    with pytest.raises(ValueError):
        propagate_free(psi, rigid, -1.0)


def test_free_evolution_phases(n2):
    psi = Wavefunction.basis_state(4, 2, 1)
    out = propagate_free(psi, n2, 1.3)
    assert out.coefficients[psi.basis.index(2, 1)] == pytest.approx(np.exp(-1j * CM_TO_RAD_PS * energy(n2, 2) * 1.3))


# --------------------------------------------------------------- programs
def test_empty_program_single_snapshot(rigid):
    traj = run_program(Wavefunction.basis_state(4, 0, 0), FieldProgram((), 0.0), rigid)
    assert traj.records.times.tolist() == [0.0]


@given(st.floats(0.05, 1.0))
@settings(max_examples=10, deadline=None)
def test_double_kick_at_revival(p):
    mol = MoleculeSpec("rigid", B=1.9896)
    trev = revival_time(mol)
    psi = Wavefunction.basis_state(30, 0, 0)
    prog = FieldProgram((Kick(0.0, p), Free(0.0, trev), Kick(trev, p)), trev)
    two = run_program(psi, prog, mol).final
    single = apply_kick(psi, 2 * p)
    assert fidelity(two, single) > 1 - 1e-10


def test_chiral_pair_mirror(n2):
    psi = Wavefunction.basis_state(30, 0, 0)

    def run(delta):
        prog = FieldProgram((Kick(0.0, 2.0, 0.0), Kick(1.5, 2.0, delta)), 3.0)
        return run_program(psi, prog, n2).records.jz[-1]

    plus, minus = run(np.pi / 4), run(-np.pi / 4)
    assert abs(plus) > 1e-3
    assert plus == -minus
    assert run(0.0) == 0.0


def test_records_strictly_increasing_and_normalised(n2):
    prog = FieldProgram((Kick(1.0, 2.0), Pulse(PulseSpec(3.0, 200, 2e12)), Kick(6.0, 1.0, 0.5)), 8.0)
    traj = run_program(Wavefunction.basis_state(30, 0, 0), prog, n2, keep_states=True)
    t = traj.records.times
    assert np.all(np.diff(t) > 0)
    assert np.max(np.abs(traj.records.populations.sum(axis=1) - 1)) < 1e-9
    for s in traj.snapshots:
        assert abs(np.linalg.norm(s) - 1) < 1e-9


def test_free_energy_conserved(n2):
    psi = apply_kick(Wavefunction.basis_state(30, 0, 0), 3.0)
    e = energy(n2, np.arange(31))
    traj = run_program(psi, FieldProgram((Free(0.0, 50.0),), 50.0), n2)
    mean_e = traj.records.populations @ e
    assert np.max(np.abs(mean_e / mean_e[0] - 1)) < 1e-10


def test_short_pulse_approaches_kick(n2):
    pulse = PulseSpec(1.0, 20, 1e13)
    p = kick_strength(pulse, n2.delta_alpha)
    psi = Wavefunction.basis_state(30, 0, 0)
    cont = run_program(psi, FieldProgram((Pulse(pulse),), 1.2), n2).final
    kick = propagate_free(apply_kick(psi, p), n2, 0.2)
    assert fidelity(cont, kick) > 0.999


def test_continuous_pulse_norm(n2):
    traj = run_program(Wavefunction.basis_state(40, 0, 0), FieldProgram((Pulse(PulseSpec(2.0, 500, 1e13, 0.3)),), 4.0),
                       n2)
    assert abs(traj.final.norm() - 1) < 1e-9


# -------------------------------------------------------------- centrifuge
def _small_centrifuge(**kw):
    args = dict(duration=20.0, beta=BETA, peak_intensity=5e12, ramp_on=3.0, ramp_off=3.0)
    args.update(kw)
    return CentrifugeSpec(**args)


def test_centrifuge_zero_intensity_is_free(o2):
    psi = Wavefunction.from_components(30, {(1, 1): 1, (3, -1): 0.5j, (5, 3): 0.2})
    traj = propagate_centrifuge(psi, o2, _small_centrifuge(peak_intensity=0.0))
    free = propagate_free(psi, o2, 20.0)
    assert fidelity(traj.final, free) > 1 - 1e-8
    assert np.max(np.abs(traj.final.coefficients - free.coefficients)) < 1e-8


def test_centrifuge_norm_and_direction(o2):
    psi = Wavefunction.basis_state(40, 1, 0)
    traj = propagate_centrifuge(psi, o2, _small_centrifuge())
    assert abs(traj.final.norm() - 1) < 1e-6
    assert traj.records.jz[-1] > 1.0
    mirror = propagate_centrifuge(psi, o2, _small_centrifuge(beta=-BETA))
    assert np.allclose(mirror.records.jz, -traj.records.jz, atol=1e-10, rtol=0)
    assert np.allclose(mirror.records.populations, traj.records.populations, atol=1e-10, rtol=0)


def test_centrifuge_theta0_invariance(o2):
    psi = Wavefunction.basis_state(30, 1, 1)
    a = propagate_centrifuge(psi, o2, _small_centrifuge(theta0=0.0))
    b = propagate_centrifuge(psi, o2, _small_centrifuge(theta0=1.234))
    assert np.max(np.abs(a.records.populations - b.records.populations)) < 1e-10


def test_centrifuge_richardson_and_step_rejection(o2):
    psi = Wavefunction.basis_state(30, 1, 0)
    propagate_centrifuge(psi, o2, _small_centrifuge(), richardson=True)
    with pytest.raises(StepSizeError):
        propagate_centrifuge(psi, o2, _small_centrifuge(), dt=0.5)


def test_centrifuge_halved_step_agrees(o2):
    psi = Wavefunction.basis_state(40, 1, 0)
    a = propagate_centrifuge(psi, o2, _small_centrifuge())
    from superrotor.propagator import max_step, drive_for

    bound = max_step(drive_for(Centrifuge(0.0, _small_centrifuge()), o2), o2, 40)
    b = propagate_centrifuge(psi, o2, _small_centrifuge(), dt=bound / 2)
    assert fidelity(a.final, b.final) > 1 - 1e-6


def test_centrifuge_truncation_releases(o2):
    cfg = _small_centrifuge(omega_max=8.0)
    traj = propagate_centrifuge(Wavefunction.basis_state(40, 1, 0), o2, cfg)
    rec = traj.records
    after = rec.times >= cfg.field_duration
    assert rec.free_after[np.searchsorted(rec.times, cfg.field_duration)]
    # populations frozen after release
    assert np.ptp(rec.populations[after], axis=0).max() < 1e-12


# -------------------------------------------------------------- ensembles
def test_zero_temperature_ensemble_matches_single(n2):
    prog = FieldProgram((Kick(0.5, 2.0),), 5.0)
    ens = run_ensemble(thermal_populations(n2, 0, 30), prog, n2)
    single = run_program(Wavefunction.basis_state(30, 0, 0), prog, n2)
    assert np.allclose(ens.records.populations, single.records.populations, atol=1e-14, rtol=0)


def test_ensemble_is_weighted_sum(n2):
    prog = FieldProgram((Kick(0.5, 2.0, 0.3),), 3.0)
    weights = thermal_populations(n2, 20, 14)
    ens = run_ensemble(weights, prog, n2, 30, min_weight=0.0)
    total = sum(w for _, _, w in ens.members)
    acc = np.zeros(31)
    for n, m, w in ens.members:
        acc += w / total * run_program(Wavefunction.basis_state(30, n, m), prog, n2).final.populations()
    assert np.max(np.abs(acc - ens.records.final_populations())) < 1e-12
    assert abs(ens.records.final_populations().sum() - 1) < 1e-8


def test_ensemble_chunking_reproducible(n2):
    prog = FieldProgram((Kick(0.5, 2.0),), 3.0)
    weights = thermal_populations(n2, 50, 30)
    a = run_ensemble(weights, prog, n2, chunk=7).records.populations
    b = run_ensemble(weights, prog, n2, chunk=7).records.populations
    assert np.array_equal(a, b)
    c = run_ensemble(weights, prog, n2, chunk=1000).records.populations
    assert np.max(np.abs(a - c)) < 1e-13


def test_ensemble_truncation_guard(n2):
    with pytest.raises(GuardError):
        run_ensemble(thermal_populations(n2, 0, 8), FieldProgram((Kick(0.5, 4.0),), 1.0), n2)


def test_ensemble_random_theta0_seeded(o2):
    cfg = _small_centrifuge(theta0="random", duration=10.0)
    prog = FieldProgram((Centrifuge(0.0, cfg),), 10.0)
    w = thermal_populations(o2, 0, 20)
    a = run_ensemble(w, prog, o2, seed=5, shots=2)
    b = run_ensemble(w, prog, o2, seed=5, shots=2)
    assert a.thetas == b.thetas and len(a.thetas) == 2
    assert np.array_equal(a.records.populations, b.records.populations)
    c = run_ensemble(w, prog, o2, seed=6, shots=2)
    # full M shells: populations do not depend on the drawn orientation
    assert np.max(np.abs(a.records.populations - c.records.populations)) < 1e-10
