import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from superrotor.errors import ConfigError, ImpulsiveValidityError
from superrotor.fields import (
    Centrifuge,
    CentrifugeSpec,
    FieldProgram,
    Free,
    IntensityWarning,
    Kick,
    Pulse,
    PulseSpec,
    TrainSpec,
    centrifuge_angle,
    field_spectrogram,
    fold_angle,
    kick_strength,
    orientation_statistics,
    pulse_segment,
    train_kicks,
)

BETA_10THZ = 2 * np.pi * 10 / 100  # Omega reaches 2 pi x 10 THz after 100 ps


def test_kick_strength_examples():
    assert kick_strength(PulseSpec(0, 120, 0.0), 0.7) == 0.0
    p = kick_strength(PulseSpec(0, 120, 1e13), 0.7)
    # same order of magnitude as the quoted 3.6 under the envelope-amplitude convention
    assert 3.6 / 2.5 < p < 3.6 * 2.5
    assert kick_strength(PulseSpec(0, 240, 1e13), 0.7) == pytest.approx(2 * p, rel=1e-14)
    assert kick_strength(PulseSpec(0, 120, 1e13), 0.7, calibration=3.6 / p) == pytest.approx(3.6)


@given(st.floats(0.0, 50.0), st.floats(1.0, 500.0))
def test_kick_strength_homogeneous(k, fwhm):
    base = kick_strength(PulseSpec(0, fwhm, 1e12), 1.1)
    scaled = kick_strength(PulseSpec(0, fwhm, k * 1e12, intensity_cap=1e15), 1.1)
    assert scaled == pytest.approx(k * base, rel=1e-12, abs=1e-300)


def test_pulse_validation_and_cap():
    with pytest.raises(ConfigError):
        PulseSpec(0, 0, 1e12)
    with pytest.raises(ConfigError):
        PulseSpec(0, 100, -1)
    with pytest.warns(IntensityWarning, match="1e\\+13"):
        PulseSpec(0, 100, 1e14)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PulseSpec(0, 100, 1e14, intensity_cap=1e15)


def test_train_kicks_examples():
    one = train_kicks(TrainSpec(1, 5.0, pulse=PulseSpec(1.0, 50, 1e12, 0.3)), 0.7)
    assert len(one) == 1 and one[0].polarization == 0.3 and one[0].time == 1.0
    chiral = train_kicks(TrainSpec(8, 4.0, math.radians(45), pulse=PulseSpec(0.0, 50, 1e12, 0.0)), 0.7)
    assert np.allclose([k.polarization for k in chiral], np.radians(np.arange(0, 360, 45)))
    assert np.allclose([k.time for k in chiral], 4.0 * np.arange(8))


@given(st.floats(-3.0, 3.0), st.integers(1, 10))
def test_train_mirror(delta, count):
    pulse = PulseSpec(0.5, 50, 1e12, 0.0)
    plus = train_kicks(TrainSpec(count, 3.0, delta, pulse=pulse), 0.7)
    minus = train_kicks(TrainSpec(count, 3.0, -delta, pulse=pulse), 0.7)
    assert [a.polarization for a in plus] == [-b.polarization for b in minus]
    assert [a.strength for a in plus] == [b.strength for b in minus]


def test_train_validation():
    pulse = PulseSpec(0, 500, 1e12, 0.0)
    with pytest.raises(ConfigError):
        TrainSpec(0, 3.0, pulse=pulse)
    with pytest.raises(ConfigError):
        TrainSpec(3, 0.4, pulse=pulse)
    with pytest.raises(ConfigError):
        TrainSpec(2, 3.0, 0.5, pulse=PulseSpec(0, 50, 1e12)).expanded()


def test_impulsive_rule(n2):
    assert pulse_segment(PulseSpec(1, 50, 1e12), n2, "auto").__class__ is Kick
    assert pulse_segment(PulseSpec(1, 5000, 1e12), n2, "auto").__class__ is Pulse
    with pytest.raises(ImpulsiveValidityError):
        pulse_segment(PulseSpec(1, 5000, 1e12), n2, "kick")
    with pytest.raises(ConfigError):
        pulse_segment(PulseSpec(1, 50, 1e12), n2, "sometimes")


def test_centrifuge_angle_examples():
    cfg = CentrifugeSpec(100.0, BETA_10THZ, 1e13, theta0=0.4)
    assert centrifuge_angle(cfg, 0.0) == (0.4, 0.0)
    assert centrifuge_angle(cfg, 100.0)[1] / (2 * np.pi) == pytest.approx(10.0)
    half = CentrifugeSpec(100.0, BETA_10THZ / 2, 1e13)
    assert centrifuge_angle(half, 30.0)[1] == pytest.approx(centrifuge_angle(cfg, 30.0)[1] / 2)
    with pytest.raises(ValueError):
        centrifuge_angle(cfg, 101.0)


@pytest.mark.parametrize("omega_max", [None, 20.0])
def test_centrifuge_angle_derivative(omega_max):
    cfg = CentrifugeSpec(100.0, BETA_10THZ, 1e13, theta0=0.1, omega_max=omega_max)
    h = 1e-4
    for t in np.linspace(1.0, 99.0, 41):
        deriv = (cfg.angle(t + h) - cfg.angle(t - h)) / (2 * h)
        assert deriv == pytest.approx(cfg.omega(t), rel=1e-8)
    # continuity: no step larger than the local rotation rate allows
    ts = np.linspace(0, 100, 100001)
    steps = np.abs(np.diff(cfg.angle(ts)))
    assert np.all(steps <= np.abs(cfg.omega(ts[1:])) * 1e-3 * (1 + 1e-9))


def test_centrifuge_truncation_and_envelope():
    cfg = CentrifugeSpec(100.0, BETA_10THZ, 1e13, omega_max=20.0)
    assert cfg.field_duration == pytest.approx(20.0 / BETA_10THZ)
    assert cfg.terminal_omega == pytest.approx(20.0)
    env = cfg.envelope(np.linspace(-5, 120, 2001))
    assert env.min() >= 0 and env.max() <= 1
    assert cfg.envelope(cfg.field_duration + 1) == 0
    assert cfg.envelope(2.5) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        CentrifugeSpec(4.0, 1.0, 1e13)  # ramps longer than the field
    with pytest.raises(ConfigError):
        CentrifugeSpec(100.0, 1.0, 1e13, theta0="sideways")


def test_random_theta0_is_seeded():
    cfg = CentrifugeSpec(100.0, BETA_10THZ, 1e13, theta0="random")
    a = [cfg.resolve(np.random.default_rng(7)).theta0 for _ in range(2)]
    assert a[0] == a[1] and 0 <= a[0] < np.pi
    with pytest.raises(ConfigError):
        cfg.resolve(None)
    prog = FieldProgram((Centrifuge(0.0, cfg),), 100.0)
    p1 = prog.resolve(np.random.default_rng(3))
    p2 = prog.resolve(np.random.default_rng(3))
    assert p1 == p2


def test_field_spectrogram_slopes():
    cfg = CentrifugeSpec(100.0, BETA_10THZ, 1e13)
    fs = field_spectrogram(cfg, 375.0, 2.0)
    up, down = fs.trace_slopes()
    expected = BETA_10THZ / (2 * np.pi)
    assert up == pytest.approx(expected, rel=0.01)
    assert down == pytest.approx(-expected, rel=0.01)
    assert up / down == pytest.approx(-1.0, rel=1e-6)


def test_field_spectrogram_flat_for_zero_beta():
    fs = field_spectrogram(CentrifugeSpec(50.0, 0.0, 1e13), 375.0, 2.0)
    centre = fs.frequencies[np.argmax(fs.intensity, axis=1)]
    assert np.all(np.abs(centre) <= abs(fs.frequencies[1] - fs.frequencies[0]))
    with pytest.raises(ValueError):
        field_spectrogram(CentrifugeSpec(50.0, 0.0, 1e13), 375.0, 0.0)


def test_orientation_statistics(rng):
    st0 = orientation_statistics([0.0])
    assert np.allclose(st0.projections, [[1.0, 0.0]])
    samples = rng.uniform(0, np.pi, 500)
    st1 = orientation_statistics(samples)
    assert np.allclose(st1.projections.sum(axis=1), 1.0)
    assert np.max(np.abs(st1.estimate - fold_angle(samples))) < 1e-6
    inside = rng.uniform(0, np.pi / 2, 200)
    assert np.max(np.abs(orientation_statistics(inside).estimate - inside)) < 1e-6
    cfg = CentrifugeSpec(100.0, BETA_10THZ, 1e13)
    small = rng.uniform(0, 0.5, 50)
    est = orientation_statistics(small, cfg, 1.0).estimate
    assert np.max(np.abs(est - small)) < 1e-6
    with pytest.raises(ValueError):
        orientation_statistics([])


def test_program_ordering():
    FieldProgram((Kick(1.0, 1.0), Free(1.0, 2.0), Kick(3.0, 1.0)), 5.0)
    with pytest.raises(ConfigError):
        FieldProgram((Kick(3.0, 1.0), Kick(1.0, 1.0)), 5.0)
    with pytest.raises(ConfigError):
        FieldProgram((Free(0.0, 6.0),), 5.0)
    with pytest.raises(ConfigError):
        FieldProgram((Centrifuge(0.0, CentrifugeSpec(100.0, 1.0, 1e13)), Kick(50.0, 1.0)), 200.0)
