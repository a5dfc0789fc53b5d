import math

import numpy as np
import pytest
import scipy.constants as sc
from hypothesis import given
from hypothesis import strategies as st

from superrotor.errors import ConfigError, ThermalTruncationError
from superrotor.molecule import (
    C_CM_PER_PS,
    MoleculeSpec,
    classical_rotation_frequency,
    energy,
    get_molecule,
    load_database,
    omega_for_n,
    parse_database,
    quarter_revival_distorted,
    raman_shift,
    required_thermal_n_max,
    resonant_n,
    revival_time,
    thermal_populations,
)


def test_energy_formula():
    mol = MoleculeSpec("x", B=2.0, D=1e-5)
    n = np.arange(10)
    assert np.allclose(energy(mol, n), 2.0 * n * (n + 1) - 1e-5 * (n * (n + 1)) ** 2, rtol=0, atol=1e-12)


def test_energy_rejects_non_integer():
    with pytest.raises(ValueError):
        energy(MoleculeSpec("x", B=1.0), 1.5)
    with pytest.raises(ValueError):
        energy(MoleculeSpec("x", B=1.0), -1)


def test_raman_shift_rigid():
    mol = MoleculeSpec("x", B=1.0)
    assert raman_shift(mol, 0) == pytest.approx(6.0)
    assert raman_shift(mol, 10) == pytest.approx(4 * 10 + 6)


@pytest.mark.parametrize("b, expected", [(1.9896, 8.38), (1.4377, 11.6)])
def test_revival_time_examples(b, expected):
    assert revival_time(MoleculeSpec("x", B=b)) == pytest.approx(expected, rel=5e-3)


@given(st.floats(0.1, 100.0))
def test_revival_time_identity(b):
    mol = MoleculeSpec("x", B=b)
    assert revival_time(mol) * 2 * b * C_CM_PER_PS == pytest.approx(1.0, rel=1e-12)
    assert revival_time(MoleculeSpec("x", B=2 * b)) == pytest.approx(revival_time(mol) / 2, rel=1e-12)


def test_quarter_revival_examples():
    o2 = MoleculeSpec("o2", B=1.4377)
    assert quarter_revival_distorted(o2, 0) == pytest.approx(2.90, abs=5e-3)
    dist = o2.with_constants(D=3e-6 * o2.B)
    ratio = quarter_revival_distorted(dist, 69) / quarter_revival_distorted(dist, 0)
    assert ratio - 1 == pytest.approx(1 / (1 - 0.0869) - 1, rel=1e-3)
    for n in (0, 10, 100):
        assert quarter_revival_distorted(o2, n) == quarter_revival_distorted(o2, 0)


@given(st.integers(0, 150), st.floats(0.0, 5e-6))
def test_quarter_revival_ratio(n, eps):
    mol = MoleculeSpec("x", B=1.4377, D=eps * 1.4377)
    ratio = quarter_revival_distorted(mol, n) / quarter_revival_distorted(mol, 0)
    assert ratio == pytest.approx(1 / (1 - 6 * mol.epsilon * n * (n + 1)), rel=1e-12)


def test_quarter_revival_outside_validity():
    mol = MoleculeSpec("x", B=1.0, D=1e-4)
    with pytest.raises(ValueError):
        quarter_revival_distorted(mol, 60)


def test_classical_rotation_frequency():
    assert classical_rotation_frequency(MoleculeSpec("x", B=1.0), 1) == pytest.approx(3 * C_CM_PER_PS)
    o2 = MoleculeSpec("o2", B=1.4377)
    assert classical_rotation_frequency(o2, 100) == pytest.approx(8.6, rel=0.01)
    with pytest.raises(ValueError):
        classical_rotation_frequency(o2, 0)


def test_resonant_n_round_trip(o2):
    for n in (5, 39, 99, 140):
        assert resonant_n(o2, omega_for_n(o2, n)) == n


def test_resonant_n_ignores_falling_branch():
    mol = MoleculeSpec("x", B=1.0, D=2e-4)  # turns over near N ~ 35
    w = omega_for_n(mol, 10)
    assert resonant_n(mol, w, 200) == 10


def test_energy_monotone_until_limit(o2):
    top = min(o2.monotone_limit(), 400)
    assert np.all(np.diff(energy(o2, np.arange(top + 1))) > 0)


def test_thermal_zero_temperature(n2, o2):
    w = thermal_populations(n2, 0, 5)
    assert w.by_n()[0] == 1.0
    w = thermal_populations(o2, 0, 5)
    assert w.by_n()[1] == pytest.approx(1.0)
    assert np.allclose(w.weights[1:4], 1 / 3)


def test_thermal_spin_statistics(o2, n2):
    w = thermal_populations(o2, 295, 60).by_n()
    assert np.all(w[0::2] == 0)
    p = thermal_populations(n2, 295, 70).by_n()
    # even levels carry twice the spin weight of their odd neighbours
    for n in (2, 4, 6):
        odd = math.sqrt(p[n - 1] * p[n + 1])
        assert 1.5 < p[n] / odd < 2.5


def _oracle(spec, t, n_max):
    """Independent Boltzmann sum with constants straight from scipy."""
    kt = sc.k * t / (sc.h * sc.c * 100)
    ns = np.arange(n_max + 51)
    x = ns * (ns + 1.0)
    e = spec.B * x - spec.D * x**2
    g = np.where(ns % 2 == 0, spec.spin_weight_even, spec.spin_weight_odd) * (2 * ns + 1)
    z = g * np.exp(-(e - e[g > 0].min()) / kt)
    return z[: n_max + 1] / z.sum()


@pytest.mark.parametrize("name, t, n_max", [("N2", 295, 60), ("O2", 295, 60), ("N2", 30, 25), ("CO2", 100, 90)])
def test_thermal_matches_long_sum(name, t, n_max):
    spec = get_molecule(name)
    w = thermal_populations(spec, t, n_max)
    assert w.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(w.by_n() - _oracle(spec, t, n_max))) < 1e-9


def test_thermal_truncation_reports_requirement(n2):
    with pytest.raises(ThermalTruncationError) as err:
        thermal_populations(n2, 295, 20)
    need = err.value.required_n_max
    assert need > 20
    thermal_populations(n2, 295, need)
    assert required_thermal_n_max(n2, 295) == need


def test_spec_validation():
    with pytest.raises(ConfigError):
        MoleculeSpec("x", B=0)
    with pytest.raises(ConfigError):
        MoleculeSpec("x", B=1, D=-1)
    with pytest.raises(ConfigError):
        MoleculeSpec("x", B=1, spin_weight_even=0, spin_weight_odd=0)


def test_database_bundled():
    db = load_database()
    assert {"N2", "O2", "H2", "CO2", "15N2"} <= set(db)
    assert db["O2"].fine_structure is not None
    assert db["N2"].delta_alpha == pytest.approx(0.7)


def test_database_parse_and_errors(tmp_path, monkeypatch):
    text = "[X]\nB = 2.5  # comment\nD = 1e-6\n\n[Y]\nB = 1\nspin_weight_even = 0\n"
    db = parse_database(text)
    assert db["X"].D == 1e-6 and db["Y"].lowest_allowed_n() == 1
    with pytest.raises(ConfigError):
        parse_database("[X]\nD = 1\n")
    with pytest.raises(ConfigError):
        parse_database("[X]\nB = 1\ncolour = red\n")
    path = tmp_path / "mols.ini"
    path.write_text(text)
    monkeypatch.setenv("SUPERROTOR_MOLECULES", str(path))
    assert set(load_database()) == {"X", "Y"}
    with pytest.raises(ConfigError):
        get_molecule("N2")
