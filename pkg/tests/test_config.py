import numpy as np
import pytest
import yaml

from superrotor.config import bundled_configs, from_mapping, grid_from, load_config, parse_range
from superrotor.errors import ConfigError, ImpulsiveValidityError
from superrotor.fields import Centrifuge, IntensityWarning, Kick, Pulse
from superrotor.io import canonical_json, config_hash
from superrotor.molecule import omega_for_n, revival_time
from superrotor.runner import simulate, validate_report


def base(**over):
    data = {
        "name": "t",
        "molecule": "N2",
        "n_max": 12,
        "ensemble": {"temperature": 0},
        "program": {"duration": 5, "segments": [{"type": "kick", "time": 1.0, "strength": 1.5}]},
        "observables": {"populations": True},
    }
    data.update(over)
    return data


def write(tmp_path, data, name="c.cfg"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_minimal_config_builds_program():
    cfg = from_mapping(base())
    prog = cfg.program()
    assert isinstance(prog.segments[0], Kick) and prog.duration == 5.0
    assert cfg.molecule.name == "N2"


@pytest.mark.parametrize(
    "patch",
    [
        {"bogus": 1},
        {"ensemble": {"temperature": 0, "colour": 3}},
        {"program": {"duration": 5, "segments": [{"type": "kick", "time": 1, "strength": 1, "extra": 2}]}},
        {"program": {"duration": 5, "segments": [{"type": "laser", "time": 1}]}},
        {"n_max": "many"},
        {"n_max": -3},
        {"molecule": "unobtainium"},
        {"observables": {"spectrogram": {"probe_fwhm": 1.0, "colour": 1}}},
    ],
)
def test_schema_errors(patch):
    with pytest.raises(ConfigError):
        from_mapping(base(**patch))


def test_segments_beyond_duration_rejected():
    with pytest.raises(ConfigError):
        from_mapping(base(program={"duration": 0.5, "segments": [{"type": "kick", "time": 1.0, "strength": 1}]}))


def test_yaml_exponent_floats(tmp_path):
    path = tmp_path / "p.cfg"
    path.write_text(
        "name: p\nmolecule: N2\nn_max: 20\nensemble: {temperature: 0}\n"
        "program:\n  duration: 2\n  segments:\n"
        "    - {type: pulse, center: 1, fwhm_fs: 60, intensity: 5.0e12}\n"
        "    - {type: kick, time: 1.5, strength: 1e-1}\n"
    )
    cfg = load_config(path)
    assert cfg.raw["program"]["segments"][0]["intensity"] == 5.0e12
    assert cfg.raw["program"]["segments"][1]["strength"] == 0.1
    assert any(isinstance(s, (Pulse, Kick)) and getattr(s, "strength", None) == 0.1 for s in cfg.program().segments)


def test_invalid_yaml_is_schema_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("name: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_grid_and_range_parsing():
    assert np.allclose(grid_from({"start": 0, "stop": 1, "step": 0.25}, "g"), [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(grid_from({"start": 0, "stop": 1, "num": 3}, "g"), [0, 0.5, 1])
    assert np.allclose(parse_range("-1:1:5"), [-1, -0.5, 0, 0.5, 1])
    assert np.allclose(parse_range("2.5"), [2.5])
    for bad in ("1:2", "a:b:c", "0:1:0"):
        with pytest.raises(ConfigError):
            parse_range(bad)
    with pytest.raises(ConfigError):
        grid_from({"start": 2, "stop": 1, "step": 0.1}, "g")


def test_train_period_revival_units():
    cfg = from_mapping(base(program={
        "duration": 40,
        "segments": [{"type": "train", "count": 3, "period": {"revivals": 0.5},
                      "pulse": {"center": 1.0, "fwhm_fs": 60, "intensity": 1e12}}],
    }))
    times = [s.time for s in cfg.program().segments if isinstance(s, Kick)]
    assert np.allclose(np.diff(times), 0.5 * revival_time(cfg.molecule))


def test_centrifuge_resonant_n_sets_omega_max():
    cfg = from_mapping(base(molecule="O2", n_max=40, program={
        "duration": 60,
        "segments": [{"type": "centrifuge", "start": 0, "duration": 50, "final_frequency_thz": 10,
                      "intensity": 1e13, "resonant_n": 25}],
    }))
    seg = cfg.program().segments[0]
    assert isinstance(seg, Centrifuge)
    assert seg.spec.omega_max == pytest.approx(omega_for_n(cfg.molecule, 25))


def mixture(*fractions):
    data = base(mixture=[{"name": n, "fraction": f} for n, f in zip(("O2", "N2"), fractions)])
    del data["molecule"]
    return data


def test_mixture_fractions_must_sum_to_one():
    with pytest.raises(ConfigError):
        from_mapping(mixture(0.3, 0.3))
    with pytest.raises(ConfigError):
        from_mapping(base(mixture=[{"name": "O2", "fraction": 1.0}]))
    ok = from_mapping(mixture(0.25, 0.75))
    assert [s.fraction for s in ok.species] == [0.25, 0.75]


def test_hash_covers_seed():
    a = from_mapping(base(), seed=1)
    b = from_mapping(base(), seed=2)
    assert config_hash(a.raw) != config_hash(b.raw)
    assert canonical_json({"b": 1, "a": np.float64(0.5)}) == '{"a":0.5,"b":1}'


def test_validate_report_clean_and_violations():
    assert validate_report(from_mapping(base())) == []
    with pytest.warns(IntensityWarning):
        hot = from_mapping(base(program={"duration": 5, "segments": [
            {"type": "pulse", "center": 2, "fwhm_fs": 100, "intensity": 1e14}]}, n_max=60))
    assert "intensity_cap" in {v["kind"] for v in validate_report(hot)}
    with pytest.raises(ImpulsiveValidityError):
        from_mapping(base(program={"duration": 30, "segments": [
            {"type": "pulse", "center": 10, "fwhm_fs": 5000, "intensity": 1e11, "mode": "kick"}]}))
    tight = from_mapping(base(n_max=6, program={"duration": 5, "segments": [
        {"type": "kick", "time": 1, "strength": 6.0}]}))
    assert "truncation_estimate" in {v["kind"] for v in validate_report(tight)}


def test_empty_program_returns_thermal_distribution():
    cfg = from_mapping(base(ensemble={"temperature": 100}, n_max=40,
                            program={"duration": 0, "segments": []}))
    res = simulate(cfg)
    pops = next(t for k, t in res.tables.items() if k.startswith("populations")).rows
    assert abs(pops[:, 2].sum() - 1) < 1e-9
    assert pops[0, 2] > 0 and pops[1, 2] > 0


def test_propagate_false_rejects_wavefunction_observables():
    data = base(propagate=False, observables={"populations": True, "spectrogram": {"probe_fwhm": 1.0}})
    with pytest.raises(ConfigError):
        simulate(from_mapping(data))


@pytest.mark.parametrize("name", sorted(bundled_configs()))
def test_bundled_configs_validate_clean(name):
    cfg = load_config(bundled_configs()[name])
    assert validate_report(cfg) == []
