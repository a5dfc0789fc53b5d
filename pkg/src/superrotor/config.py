"""Run configuration: YAML files validated against a fixed schema.

A configuration names the molecule(s), basis truncation, initial state,
excitation program, requested observables and output settings. Unknown
keys are rejected so that typos cannot silently change a run. See
``configs/*.cfg`` for one worked example per observable class and the
README for the full key reference.
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .angular import LAB_Z
from .errors import ConfigError
from .fields import (
    DEFAULT_INTENSITY_CAP,
    Centrifuge,
    CentrifugeSpec,
    FieldProgram,
    Free,
    Kick,
    PulseSpec,
    TrainSpec,
    pulse_segment,
)
from .molecule import MoleculeSpec, get_molecule, omega_for_n, revival_time

SCAN_PARAMETERS = ("tau", "delta", "omega_max", "probe_fwhm")

_TOP_KEYS = {
    "name", "molecule", "mixture", "n_max", "ensemble", "initial", "program", "calibration",
    "intensity_cap", "sampling", "observables", "output", "propagate",
}
_SEGMENT_KEYS = {
    "kick": {"type", "time", "strength", "polarization", "polarization_deg"},
    "pulse": {"type", "center", "fwhm_fs", "intensity", "polarization", "polarization_deg", "mode"},
    "train": {"type", "count", "period", "angle_step", "angle_step_deg", "pulse", "mode"},
    "centrifuge": {"type", "start", "duration", "beta", "final_frequency_thz", "intensity", "theta0", "ramp_on",
                   "ramp_off", "omega_max", "resonant_n"},
    "free": {"type", "start", "duration"},
}
_TRAIN_PULSE_KEYS = {"center", "fwhm_fs", "intensity", "polarization", "polarization_deg"}
_OBSERVABLE_KEYS = {
    "populations", "trajectory", "spectrogram", "revival", "angular_density", "composition",
    "directionality", "period_scan", "field_spectrogram", "orientation",
}
_OBS_FIELDS = {
    "spectrogram": {"probe_fwhm", "handedness", "delays", "shift_range", "shift_step", "fine_structure",
                    "trace_shift"},
    "revival": {"times", "band", "n_range", "window", "expected_period"},
    "angular_density": {"times", "phi_points", "theta", "marginal"},
    "period_scan": {"taus", "n_report"},
    "field_spectrogram": {"carrier", "window"},
    "orientation": {"shots", "probe_time"},
    "trajectory": {"n_report"},
}


def _fail(msg):
    raise ConfigError(msg)


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        _fail(f"{where}: expected a mapping")
    extra = sorted(set(d) - set(allowed))
    if extra:
        _fail(f"{where}: unknown key(s) {', '.join(extra)}")


def _num(d, key, where, default=None, positive=False, nonneg=False, integer=False):
    if key not in d or d[key] is None:
        if default is None:
            _fail(f"{where}: missing '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{where}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        _fail(f"{where}.{key}: expected an integer")
    if not math.isfinite(v):
        _fail(f"{where}.{key}: must be finite")
    if positive and not v > 0:
        _fail(f"{where}.{key}: must be positive")
    if nonneg and v < 0:
        _fail(f"{where}.{key}: must be non-negative")
    return int(v) if integer else float(v)


def grid_from(spec, where) -> np.ndarray:
    """Grid from {start, stop, step} (inclusive of stop when commensurate) or {start, stop, num}."""
    if isinstance(spec, list):
        return np.asarray([float(x) for x in spec])
    _check_keys(spec, {"start", "stop", "step", "num"}, where)
    a = _num(spec, "start", where)
    b = _num(spec, "stop", where)
    if b < a:
        _fail(f"{where}: stop < start")
    if "num" in spec:
        return np.linspace(a, b, _num(spec, "num", where, integer=True, positive=True))
    step = _num(spec, "step", where, positive=True)
    n = int(math.floor((b - a) / step + 1e-9))
    return a + step * np.arange(n + 1)


def parse_range(text: str) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a single value."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        _fail(f"invalid range {text!r}; expected start:stop:num")
    if len(vals) == 1:
        return np.array(vals)
    if len(vals) != 3 or vals[2] < 1 or int(vals[2]) != vals[2]:
        _fail(f"invalid range {text!r}; expected start:stop:num")
    return np.linspace(vals[0], vals[1], int(vals[2]))


@dataclass(frozen=True)
class Species:
    molecule: MoleculeSpec
    fraction: float = 1.0


def _molecule(entry, where) -> MoleculeSpec:
    if isinstance(entry, str):
        return get_molecule(entry)
    _check_keys(entry, {"name", "B", "D", "delta_alpha", "spin_weight_even", "spin_weight_odd", "fraction",
                        "epsilon"}, where)
    if "name" not in entry:
        _fail(f"{where}: missing 'name'")
    try:
        mol = get_molecule(entry["name"])
        known = True
    except ConfigError:
        known = False
    if not known:
        if "B" not in entry:
            _fail(f"{where}: unknown molecule {entry['name']!r} needs at least B")
        mol = MoleculeSpec(entry["name"], B=_num(entry, "B", where, positive=True))
    changes = {k: _num(entry, k, where, nonneg=True) for k in
               ("B", "D", "delta_alpha", "spin_weight_even", "spin_weight_odd") if k in entry}
    if "epsilon" in entry:
        if "D" in entry:
            _fail(f"{where}: give D or epsilon, not both")
        changes["D"] = _num(entry, "epsilon", where, nonneg=True) * changes.get("B", mol.B)
    return mol.with_constants(**changes) if changes else mol


def _polarization(d, where):
    if "polarization_deg" in d:
        if "polarization" in d:
            _fail(f"{where}: give polarization or polarization_deg, not both")
        return math.radians(_num(d, "polarization_deg", where))
    pol = d.get("polarization", LAB_Z)
    if pol == LAB_Z:
        return LAB_Z
    if isinstance(pol, bool) or not isinstance(pol, (int, float)):
        _fail(f"{where}.polarization: 'z' or an angle in radians")
    return float(pol)


@dataclass
class RunConfig:
    """Validated run configuration.

    ``raw`` is the normalized mapping the run was built from; its hash
    (together with the seed) identifies every output.
    """

    name: str
    species: list
    n_max: int
    temperature: float
    thermal_n_max: int | None
    seed: int | None
    shots: int
    initial: dict
    program_raw: dict
    calibration: float
    intensity_cap: float
    sampling: dict
    observables: dict
    output: dict
    raw: dict = field(repr=False)
    source: Path | None = None
    propagate: bool = True

    @property
    def molecule(self) -> MoleculeSpec:
        return self.species[0].molecule

    @property
    def is_mixture(self) -> bool:
        return len(self.species) > 1

    # -- program ---------------------------------------------------------
    def program(self, molecule: MoleculeSpec | None = None) -> FieldProgram:
        """Field program for ``molecule`` (impulsive validity is molecule dependent)."""
        mol = molecule or self.molecule
        segs = []
        for i, seg in enumerate(self.program_raw.get("segments", [])):
            segs.extend(self._segment(seg, mol, f"program.segments[{i}]"))
        return FieldProgram(tuple(segs), self.program_raw["duration"], self.calibration)

    def _pulse(self, d, where, center=None) -> PulseSpec:
        return PulseSpec(
            _num(d, "center", where) if center is None else center,
            _num(d, "fwhm_fs", where, positive=True),
            _num(d, "intensity", where, nonneg=True),
            _polarization(d, where),
            self.intensity_cap,
        )

    def _segment(self, seg, mol, where):
        kind = seg["type"]
        if kind == "kick":
            return [Kick(_num(seg, "time", where, nonneg=True), _num(seg, "strength", where, nonneg=True),
                         _polarization(seg, where))]
        if kind == "pulse":
            return [pulse_segment(self._pulse(seg, where), mol, seg.get("mode", "auto"), self.calibration)]
        if kind == "train":
            return [pulse_segment(p, mol, seg.get("mode", "auto"), self.calibration)
                    for p in self.train(seg, mol, where).expanded()]
        if kind == "centrifuge":
            return [Centrifuge(_num(seg, "start", where, 0.0, nonneg=True), self.centrifuge(seg, mol, where))]
        if kind == "free":
            return [Free(_num(seg, "start", where, nonneg=True), _num(seg, "duration", where, positive=True))]
        _fail(f"{where}: unknown segment type {kind!r}")

    def train(self, seg, mol, where="train") -> TrainSpec:
        # the field is shared by all species: revival-relative periods refer to the first one
        ref = self.molecule
        period = seg.get("period")
        if period == "revival":
            period = revival_time(ref)
        elif isinstance(period, dict):
            _check_keys(period, {"revivals"}, f"{where}.period")
            period = _num(period, "revivals", f"{where}.period", positive=True) * revival_time(ref)
        else:
            period = _num(seg, "period", where, positive=True)
        if "angle_step_deg" in seg:
            step = math.radians(_num(seg, "angle_step_deg", where))
        else:
            step = _num(seg, "angle_step", where, 0.0)
        return TrainSpec(_num(seg, "count", where, integer=True, positive=True), period, step,
                         pulse=self._pulse(seg["pulse"], f"{where}.pulse"))

    def centrifuge(self, seg, mol, where="centrifuge") -> CentrifugeSpec:
        duration = _num(seg, "duration", where, positive=True)
        if ("beta" in seg) == ("final_frequency_thz" in seg):
            _fail(f"{where}: give exactly one of beta or final_frequency_thz")
        if "beta" in seg:
            beta = _num(seg, "beta", where, nonneg=True)
        else:
            beta = 2 * math.pi * _num(seg, "final_frequency_thz", where, nonneg=True) / duration
        omega_max = None
        if "omega_max" in seg and "resonant_n" in seg:
            _fail(f"{where}: give omega_max or resonant_n, not both")
        if "omega_max" in seg:
            omega_max = _num(seg, "omega_max", where, positive=True)
        elif "resonant_n" in seg:
            # shared field: resonance refers to the first species
            omega_max = omega_for_n(self.molecule, _num(seg, "resonant_n", where, integer=True, positive=True))
        theta0 = seg.get("theta0", 0.0)
        if theta0 != "random":
            theta0 = _num(seg, "theta0", where, 0.0)
        return CentrifugeSpec(duration, beta, _num(seg, "intensity", where, nonneg=True), theta0,
                              _num(seg, "ramp_on", where, 5.0, nonneg=True),
                              _num(seg, "ramp_off", where, 5.0, nonneg=True), omega_max, self.intensity_cap)

    # -- scans -----------------------------------------------------------
    def with_param(self, param: str, value: float) -> "RunConfig":
        """Copy with one scannable parameter set to ``value``."""
        if param not in SCAN_PARAMETERS:
            _fail(f"unknown scan parameter {param!r}; choose from {', '.join(SCAN_PARAMETERS)}")
        raw = copy.deepcopy(self.raw)
        segs = raw["program"].get("segments", [])
        hits = 0
        if param in ("tau", "delta"):
            for seg in segs:
                if seg["type"] == "train":
                    if param == "tau":
                        seg["period"] = float(value)
                    else:
                        seg.pop("angle_step_deg", None)
                        seg["angle_step"] = float(value)
                    hits += 1
        elif param == "omega_max":
            for seg in segs:
                if seg["type"] == "centrifuge":
                    seg.pop("resonant_n", None)
                    seg["omega_max"] = float(value)
                    hits += 1
        else:
            spec = raw.get("observables", {}).get("spectrogram")
            if spec is not None:
                spec["probe_fwhm"] = float(value)
                hits += 1
        if not hits:
            _fail(f"scan parameter {param!r} has nothing to act on in this configuration")
        return from_mapping(raw, self.source, seed=self.seed)


def _validate_segment(seg, where):
    if not isinstance(seg, dict) or "type" not in seg:
        _fail(f"{where}: each segment needs a 'type'")
    kind = seg["type"]
    if kind not in _SEGMENT_KEYS:
        _fail(f"{where}: unknown segment type {kind!r}")
    _check_keys(seg, _SEGMENT_KEYS[kind], where)
    if kind == "train":
        if "pulse" not in seg:
            _fail(f"{where}: train needs a 'pulse' template")
        _check_keys(seg["pulse"], _TRAIN_PULSE_KEYS, f"{where}.pulse")
    if kind in ("pulse", "train") and seg.get("mode", "auto") not in ("auto", "kick", "continuous"):
        _fail(f"{where}.mode: expected auto, kick or continuous")


def from_mapping(data: dict, source=None, seed: int | None = None) -> RunConfig:
    """Validate a configuration mapping; ``seed`` overrides ensemble.seed."""
    if not isinstance(data, dict):
        _fail("configuration must be a mapping")
    data = copy.deepcopy(data)
    _check_keys(data, _TOP_KEYS, "config")
    if ("molecule" in data) == ("mixture" in data):
        _fail("config: give exactly one of 'molecule' or 'mixture'")
    if "molecule" in data:
        species = [Species(_molecule(data["molecule"], "molecule"), 1.0)]
    else:
        mix = data["mixture"]
        if not isinstance(mix, list) or not mix:
            _fail("mixture: expected a non-empty list")
        species = []
        for i, entry in enumerate(mix):
            if not isinstance(entry, dict) or "fraction" not in entry:
                _fail(f"mixture[{i}]: needs 'name' and 'fraction'")
            species.append(Species(_molecule(entry, f"mixture[{i}]"), _num(entry, "fraction", f"mixture[{i}]",
                                                                               nonneg=True)))
        total = sum(s.fraction for s in species)
        if abs(total - 1) > 1e-12:
            _fail(f"mixture: fractions sum to {total!r}, not 1")
    n_max = _num(data, "n_max", "config", integer=True)
    if n_max < 2:
        _fail("config.n_max: must be >= 2")

    ens = data.get("ensemble", {}) or {}
    _check_keys(ens, {"temperature", "thermal_n_max", "seed", "shots"}, "ensemble")
    temperature = _num(ens, "temperature", "ensemble", 0.0, nonneg=True)
    thermal_n_max = _num(ens, "thermal_n_max", "ensemble", integer=True, positive=True) if ens.get("thermal_n_max") else None
    if seed is None:
        seed = _num(ens, "seed", "ensemble", integer=True, nonneg=True) if ens.get("seed") is not None else 0
    ens["seed"] = seed
    data["ensemble"] = ens
    shots = _num(ens, "shots", "ensemble", 1, integer=True, positive=True)

    initial = data.get("initial", "thermal")
    if initial == "thermal":
        init = {"kind": "thermal"}
    elif isinstance(initial, dict) and len(initial) == 1 and "state" in initial:
        st = initial["state"]
        _check_keys(st, {"N", "M"}, "initial.state")
        n = _num(st, "N", "initial.state", integer=True, nonneg=True)
        m = _num(st, "M", "initial.state", 0, integer=True)
        if abs(m) > n or n > n_max:
            _fail("initial.state: need |M| <= N <= n_max")
        init = {"kind": "state", "N": n, "M": m}
    elif isinstance(initial, dict) and len(initial) == 1 and "packet" in initial:
        pk = initial["packet"]
        _check_keys(pk, {"center", "width", "m"}, "initial.packet")
        m = pk.get("m", "top")
        if m not in ("top", "zero"):
            _fail("initial.packet.m: 'top' (M = N) or 'zero'")
        init = {"kind": "packet", "center": _num(pk, "center", "initial.packet", positive=True),
                "width": _num(pk, "width", "initial.packet", positive=True), "m": m}
    else:
        _fail("initial: 'thermal', {state: {N, M}} or {packet: {center, width, m}}")

    prog = data.get("program", {}) or {}
    _check_keys(prog, {"duration", "segments"}, "program")
    segs = prog.get("segments", []) or []
    if not isinstance(segs, list):
        _fail("program.segments: expected a list")
    for i, seg in enumerate(segs):
        _validate_segment(seg, f"program.segments[{i}]")
    prog["segments"] = segs
    prog["duration"] = _num(prog, "duration", "program", 0.0, nonneg=True)
    data["program"] = prog

    sampling = data.get("sampling", {}) or {}
    _check_keys(sampling, {"field", "free", "dt", "richardson"}, "sampling")
    sampling = {
        "field": _num(sampling, "field", "sampling", 0.25, positive=True),
        "free": _num(sampling, "free", "sampling", 0.05, positive=True),
        "dt": _num(sampling, "dt", "sampling", positive=True) if sampling.get("dt") is not None else None,
        "richardson": bool(sampling.get("richardson", False)),
    }

    obs = data.get("observables", {}) or {}
    _check_keys(obs, _OBSERVABLE_KEYS, "observables")
    for key, allowed in _OBS_FIELDS.items():
        if key in obs and obs[key] not in (True, None):
            _check_keys(obs[key], allowed, f"observables.{key}")
    if "spectrogram" in obs and isinstance(obs["spectrogram"], dict):
        _num(obs["spectrogram"], "probe_fwhm", "observables.spectrogram", positive=True)
    if "period_scan" in obs and not any(s["type"] == "train" for s in segs):
        _fail("observables.period_scan needs a train segment")

    out = data.get("output", {}) or {}
    _check_keys(out, {"dir", "format"}, "output")
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        _fail("output.format: csv or json")

    name = data.get("name") or (Path(source).stem if source else "run")
    cfg = RunConfig(
        name=str(name),
        species=species,
        n_max=n_max,
        temperature=temperature,
        thermal_n_max=thermal_n_max,
        seed=seed,
        shots=shots,
        initial=init,
        program_raw=prog,
        calibration=_num(data, "calibration", "config", 1.0, positive=True),
        intensity_cap=_num(data, "intensity_cap", "config", DEFAULT_INTENSITY_CAP, positive=True),
        sampling=sampling,
        observables=obs,
        output={"dir": out.get("dir", "out"), "format": fmt},
        raw=data,
        source=Path(source) if source else None,
        propagate=bool(data.get("propagate", True)),
    )
    # build the program once to surface field-level errors early
    for sp in species:
        cfg.program(sp.molecule)
    return cfg


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot or sign (``1e13``, ``5.0e12``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*(?:\.[0-9_]*)?|\.[0-9_]+)(?:[eE][-+]?[0-9]+)?$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."),
)


def load_config(path, seed: int | None = None) -> RunConfig:
    """Read and validate a YAML configuration file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return from_mapping(data, path, seed)


def bundled_configs() -> dict[str, Path]:
    """Example configurations shipped with the package, by stem."""
    from importlib import resources

    root = resources.files("superrotor") / "configs"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".cfg")}

