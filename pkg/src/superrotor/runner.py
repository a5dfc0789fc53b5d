"""Execute a :class:`RunConfig`: propagate every species and evaluate observables.

Results are returned as named tables and grids so that the CLI only has
to serialize them; nothing here touches the file system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .angular import Wavefunction
from .config import RunConfig, grid_from
from .errors import ConfigError, ImpulsiveValidityError
from .fields import (
    Centrifuge,
    FieldProgram,
    IntensityWarning,
    Kick,
    Pulse,
    field_spectrogram,
    kick_strength,
    orientation_statistics,
)
from .molecule import MoleculeSpec, required_thermal_n_max, resonant_n, revival_time, thermal_populations
from .observables import (
    ProbeSpec,
    SpeciesMix,
    angular_density_map,
    directionality,
    mixture_spectrogram,
    revival_analysis,
    sliding_periods,
    spectrogram,
    train_period_scan,
    wavepacket_composition,
)
from .observables.raman import default_shift_grid
from .propagator import Records, RunOptions, run_ensemble, run_program


@dataclass
class Table:
    columns: list
    rows: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class Grid:
    row_axis: tuple
    col_axis: tuple
    values: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class SpeciesRun:
    molecule: MoleculeSpec
    records: Records
    initial_populations: np.ndarray
    state: object = None  # Trajectory for single wave packets
    program: FieldProgram | None = None


@dataclass
class RunResult:
    tables: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


# ------------------------------------------------------------------ states
def initial_packet(cfg: RunConfig, mol: MoleculeSpec) -> Wavefunction:
    init = cfg.initial
    if init["kind"] == "state":
        return Wavefunction.basis_state(cfg.n_max, init["N"], init["M"])
    comps = {}
    c, w = init["center"], init["width"]
    for n in range(cfg.n_max - 1):
        if mol.spin_weight(n) == 0:
            continue
        a = math.exp(-((n - c) / w) ** 2 / 4)
        if a > 1e-12:
            comps[(n, n if init["m"] == "top" else 0)] = a
    if not comps:
        raise ConfigError("initial packet has no allowed levels inside the basis")
    return Wavefunction.from_components(cfg.n_max, comps)


def thermal_weights(cfg: RunConfig, mol: MoleculeSpec):
    tn = cfg.thermal_n_max
    if tn is None:
        tn = min(cfg.n_max, max(required_thermal_n_max(mol, cfg.temperature), mol.lowest_allowed_n() + 1))
    if tn > cfg.n_max:
        raise ConfigError(f"ensemble.thermal_n_max={tn} exceeds n_max={cfg.n_max}")
    return thermal_populations(mol, cfg.temperature, tn)


def run_options(cfg: RunConfig, keep_states=False) -> RunOptions:
    s = cfg.sampling
    return RunOptions(s["dt"], s["field"], True, keep_states, s["richardson"])


def run_species(cfg: RunConfig, mol: MoleculeSpec, keep_states: bool = False) -> SpeciesRun:
    program = cfg.program(mol)
    if cfg.initial["kind"] == "thermal":
        weights = thermal_weights(cfg, mol)
        res = run_ensemble(weights, program, mol, cfg.n_max, seed=cfg.seed, shots=cfg.shots,
                           options=run_options(cfg))
        init = np.zeros(cfg.n_max + 1)
        init[: weights.n_max + 1] = weights.by_n()
        return SpeciesRun(mol, res.records, init, None, program)
    psi = initial_packet(cfg, mol)
    resolved = program.resolve(np.random.default_rng(cfg.seed))
    traj = run_program(psi, resolved, mol, run_options(cfg, keep_states))
    return SpeciesRun(mol, traj.records, psi.populations(), traj, resolved)


# -------------------------------------------------------------- observables
def _spectrogram_for(cfg: RunConfig, runs, spec_cfg):
    spec_cfg = spec_cfg if isinstance(spec_cfg, dict) else {}
    probe = ProbeSpec(float(spec_cfg["probe_fwhm"]), int(spec_cfg.get("handedness", 1)))
    end = min(r.records.end_time for r in runs)
    delays = grid_from(spec_cfg["delays"], "spectrogram.delays") if "delays" in spec_cfg else \
        np.arange(0.0, end + 1e-9, max(cfg.sampling["field"], 0.25))
    mol = runs[0].molecule
    if "shift_range" in spec_cfg:
        lo, hi = spec_cfg["shift_range"]
        step = float(spec_cfg.get("shift_step", probe.fwhm / 4))
        shifts = lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)
    else:
        shifts = default_shift_grid(mol, cfg.n_max, probe)
    fine = bool(spec_cfg.get("fine_structure", False))
    parts = [spectrogram(r.records, probe, delays, shifts, fine and r.molecule.fine_structure is not None)
             for r in runs]
    if len(parts) == 1:
        return parts[0], spec_cfg
    mix = SpeciesMix([s.molecule for s in cfg.species], [s.fraction for s in cfg.species])
    return mixture_spectrogram(parts, mix), spec_cfg


def evaluate(cfg: RunConfig, runs: list, jobs: int | None = 1) -> RunResult:
    obs = cfg.observables
    out = RunResult()
    n_axis = np.arange(cfg.n_max + 1)

    for r in runs:
        tag = "" if len(runs) == 1 else f"_{r.molecule.name}"
        final = r.records.final_populations()
        out.tables[f"populations{tag}"] = Table(
            ["N", "initial", "final"], np.column_stack([n_axis, r.initial_populations, final]),
            {"units": {"N": "rotational level", "initial": "probability", "final": "probability"},
             "molecule": r.molecule.name, "end_time_ps": r.records.end_time},
        )
        out.summary[f"jz_final{tag}"] = float(r.records.jz[-1])
        if obs.get("trajectory"):
            tcfg = obs["trajectory"] if isinstance(obs["trajectory"], dict) else {}
            nr = int(tcfg.get("n_report", cfg.n_max))
            rec = r.records
            out.tables[f"trajectory{tag}"] = Table(
                ["time", "jz"] + [f"pop_N{n}" for n in range(nr + 1)],
                np.column_stack([rec.times, rec.jz, rec.populations[:, : nr + 1]]),
                {"units": {"time": "ps", "jz": "hbar"}, "note": "snapshots at field-segment samples and boundaries"},
            )
        if obs.get("directionality"):
            d = directionality(r.records)
            out.tables[f"directionality{tag}"] = Table(
                ["N", "directionality"], np.column_stack([n_axis, d]),
                {"definition": "sum_M M p_NM / (N sum_M p_NM) at the end of the run"},
            )
        if obs.get("composition"):
            comp = wavepacket_composition(r.records)
            out.tables[f"composition{tag}"] = Table(
                ["N", "population", "line_weight"], np.column_stack([n_axis, comp.populations, comp.line_weights]),
                {"peak_N": comp.peak(), "center_N": comp.center(comp.peak() // 2), "span_1pct": comp.span()},
            )
            out.summary[f"packet_center{tag}"] = comp.center(comp.peak() // 2)

    if obs.get("spectrogram"):
        spec, scfg = _spectrogram_for(cfg, runs, obs["spectrogram"])
        meta = spec.metadata()
        meta["n_equivalent"] = spec.n_axis()
        out.grids["spectrogram"] = Grid(("delay", spec.delays), ("shift", spec.shifts), spec.intensity, meta)
        if "trace_shift" in scfg:
            s0 = float(scfg["trace_shift"])
            out.tables["spectrogram_trace"] = Table(
                ["delay", "intensity"], np.column_stack([spec.delays, spec.trace(s0)]),
                {"shift_cm": s0, "units": {"delay": "ps"}},
            )
            out.summary["trace"] = spec.trace(s0)

    if obs.get("revival"):
        rcfg = obs["revival"]
        r0 = runs[0]
        times = grid_from(rcfg["times"], "revival.times")
        band = tuple(rcfg["band"]) if "band" in rcfg else None
        n_range = tuple(rcfg["n_range"]) if "n_range" in rcfg else None
        ra = revival_analysis(r0.records, times, band=band, expected_period=rcfg.get("expected_period"),
                              n_range=n_range)
        out.tables["revival_trace"] = Table(["time", "signal"], np.column_stack([ra.times, ra.signal]),
                                            {"units": {"time": "ps"}})
        sp = ra.spectrum
        keep = sp.frequencies > 0
        out.tables["revival_spectrum"] = Table(
            ["frequency", "period", "power"],
            np.column_stack([sp.frequencies[keep], 1.0 / sp.frequencies[keep], sp.power[keep]]),
            {"units": {"frequency": "THz", "period": "ps"}, "peak_period_ps": sp.peak_period},
        )
        out.summary["peak_period"] = sp.peak_period
        if "window" in rcfg:
            c, p = sliding_periods(ra.times, ra.signal, float(rcfg["window"]), band=band)
            out.tables["revival_periods"] = Table(["window_center", "period"], np.column_stack([c, p]),
                                                  {"units": {"window_center": "ps", "period": "ps"}})

    if obs.get("angular_density"):
        acfg = obs["angular_density"]
        r0 = runs[0]
        if r0.state is None or r0.state.snapshots is None:
            raise ConfigError("angular_density needs a single initial state or packet (not a thermal ensemble)")
        times = grid_from(acfg["times"], "angular_density.times")
        phi = 2 * np.pi * np.arange(int(acfg.get("phi_points", 360))) / int(acfg.get("phi_points", 360))
        t_rel = float(times[0])
        psi = r0.state.state_at(t_rel)
        dmap = angular_density_map(psi, r0.molecule, times - t_rel, phi, float(acfg.get("theta", np.pi / 2)),
                                   bool(acfg.get("marginal", False)))
        dmap.times = times
        freq = dmap.rotation_frequency()
        out.grids["angular_density"] = Grid(("time", times), ("phi", phi), dmap.normalized,
                                            {"units": {"time": "ps", "phi": "rad"},
                                             "dumbbell_rotation_frequency_thz": freq,
                                             "slice": "marginal" if acfg.get("marginal") else "theta=pi/2"})
        out.summary["rotation_frequency"] = freq

    if obs.get("period_scan"):
        pcfg = obs["period_scan"]
        mol = runs[0].molecule
        seg = next(s for s in cfg.program_raw["segments"] if s["type"] == "train")
        train = cfg.train(seg, mol)
        taus = grid_from(pcfg["taus"], "period_scan.taus")
        scan = train_period_scan(mol, train, taus, cfg.temperature, cfg.n_max,
                                 thermal_weights(cfg, mol).n_max, seg.get("mode", "auto"), cfg.calibration,
                                 cfg.seed, jobs)
        nr = int(pcfg.get("n_report", 7))
        meta = {"units": {"tau": "ps"}, "revival_time_ps": revival_time(mol)}
        out.grids["period_scan"] = Grid(("tau", taus), ("N", np.arange(nr + 1)), scan.populations[:, : nr + 1], meta)
        out.grids["period_scan_directionality"] = Grid(("tau", taus), ("N", np.arange(nr + 1)),
                                                       scan.directionality[:, : nr + 1], meta)

    if obs.get("field_spectrogram"):
        fcfg = obs["field_spectrogram"]
        cen = [s for s in cfg.program().segments if isinstance(s, Centrifuge)]
        if not cen:
            raise ConfigError("field_spectrogram needs a centrifuge segment")
        fs = field_spectrogram(cen[0].spec.resolve(np.random.default_rng(cfg.seed)), float(fcfg.get("carrier", 375.0)),
                               float(fcfg.get("window", 2.0)))
        up, down = fs.trace_slopes()
        keep = np.abs(fs.frequencies) <= 1.5 * max(abs(up), abs(down)) * fs.times[-1] + 1.0
        out.grids["field_spectrogram"] = Grid(("time", fs.times), ("frequency_offset", fs.frequencies[keep]),
                                              fs.intensity[:, keep],
                                              {"units": {"time": "ps", "frequency_offset": "THz"},
                                               "carrier_thz": fs.carrier, "slopes_thz_per_ps": [up, down]})
        out.summary["field_slopes"] = (up, down)

    if obs.get("orientation"):
        ocfg = obs["orientation"] if isinstance(obs["orientation"], dict) else {}
        shots = int(ocfg.get("shots", 200))
        rng = np.random.default_rng(cfg.seed)
        theta0 = rng.uniform(0.0, np.pi, shots)
        cen = [s for s in cfg.program().segments if isinstance(s, Centrifuge)]
        st = orientation_statistics(theta0, cen[0].spec if cen else None, float(ocfg.get("probe_time", 0.0)))
        out.tables["orientation"] = Table(["theta0", "ex2", "ey2", "estimate"],
                                          np.column_stack([st.theta0, st.projections, st.estimate]),
                                          {"branch_rule": "estimate = arctan(|E_y|/|E_x|) - rotation, in [0, pi/2]"})
    return out


def simulate(cfg: RunConfig, jobs: int | None = 1) -> RunResult:
    keep = bool(cfg.observables.get("angular_density"))
    if not cfg.propagate:
        needs = {"spectrogram", "revival", "angular_density", "period_scan", "trajectory", "composition",
                 "directionality"} & {k for k, v in cfg.observables.items() if v}
        if needs:
            raise ConfigError(f"observables {sorted(needs)} need propagate: true")
        return evaluate(cfg, [], jobs)
    runs = [run_species(cfg, s.molecule, keep) for s in cfg.species]
    return evaluate(cfg, runs, jobs)


def scan_point(args) -> dict:
    """One scan point: configuration with a parameter overridden; returns summary vectors."""
    cfg, param, value = args
    point = cfg.with_param(param, value)
    res = simulate(point, 1)
    vec = {"populations": res.tables[next(k for k in res.tables if k.startswith("populations"))].rows[:, 2]}
    runs_d = [k for k in res.tables if k.startswith("directionality")]
    if runs_d:
        vec["directionality"] = res.tables[runs_d[0]].rows[:, 1]
    if "trace" in res.summary:
        vec["trace"] = res.summary["trace"]
    vec["jz"] = np.array([res.summary[next(k for k in res.summary if k.startswith("jz_final"))]])
    return vec


# ------------------------------------------------------------------ validate
def validate_report(cfg: RunConfig) -> list[dict]:
    """Physics guard report without propagating anything."""
    issues = []
    for sp in cfg.species:
        mol = sp.molecule
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                program = cfg.program(mol)
            except ImpulsiveValidityError as exc:
                issues.append({"kind": "impulsive_validity", "molecule": mol.name, "detail": str(exc)})
                program = None
        for w in caught:
            if issubclass(w.category, IntensityWarning):
                issues.append({"kind": "intensity_cap", "molecule": mol.name, "detail": str(w.message),
                               "cap_w_cm2": cfg.intensity_cap})
        if cfg.initial["kind"] == "thermal":
            need = required_thermal_n_max(mol, cfg.temperature)
            if need > cfg.n_max:
                issues.append({"kind": "thermal_truncation", "molecule": mol.name,
                               "detail": f"thermal tail needs n_max >= {need}", "required_n_max": need})
        if program is None or not cfg.propagate:
            continue
        estimate = _reach_estimate(cfg, mol, program)
        if estimate + 2 > cfg.n_max:
            issues.append({"kind": "truncation_estimate", "molecule": mol.name,
                           "detail": f"excitation may reach N ~ {estimate}; n_max={cfg.n_max} leaves no margin",
                           "estimated_n": estimate})
    return issues


def _reach_estimate(cfg, mol, program) -> int:
    """Rough highest populated N: thermal/initial top + kick ladder or centrifuge resonance."""
    if cfg.initial["kind"] == "thermal":
        top = required_thermal_n_max(mol, cfg.temperature) // 2
    elif cfg.initial["kind"] == "state":
        top = cfg.initial["N"]
    else:
        top = int(cfg.initial["center"] + 4 * cfg.initial["width"])
    total_p = 0.0
    reach = top
    for seg in program.segments:
        if isinstance(seg, Kick):
            total_p += seg.strength
        elif isinstance(seg, Pulse):
            total_p += kick_strength(seg.pulse, mol.delta_alpha, program.calibration)
        elif isinstance(seg, Centrifuge):
            w = float(abs(seg.spec.terminal_omega))
            reach = max(reach, resonant_n(mol, w, max(4 * cfg.n_max, 100)) + 6)
    return int(max(reach, top + 2 * math.ceil(2 * total_p) + 4))
