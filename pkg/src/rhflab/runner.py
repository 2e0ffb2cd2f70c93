"""Scenario orchestration: preparation, evolution, diagnostics, artifacts.

A run produces a deterministic artifact set under the output directory:

  initial_state.rhfs, final_state.rhfs, checkpoints/...
  scf_trace.csv (scf preparation), conservation.csv, commutators.csv
  checks/exp_bound.json, checks/exchange_bound.json, checks/kinetic_ratio.json
  growth_fit.json, integrated_growth.json, manifest.json

Exit status is nonzero iff a hard diagnostic failed (inequality margin below
tolerance or an aborted evolution).  Re-running a scenario reproduces every
artifact byte for byte.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .containers import dump_json, fmt17, load_orbitals, save_orbitals, write_csv
from .diagnostics import (
    commutator_channels,
    default_phase_samples,
    exchange_double_commutator_check,
    exp_bound_check,
    growth_fit,
    integrated_growth_audit,
    kinetic_double_commutator_check,
)
from .grids import potential_moment_refinement_check
from .orbitals import boosted_fermi_sea, fermi_sea, seam_mass
from .propagate import EvolutionConfig, Observer, SimState, evolve, suggested_dt_cap
from .scenarios import Scenario, load_scenario
from .scf import ScfConfig, hf_energy, scf_minimize

__all__ = ["RunResult", "run", "run_file", "sweep", "WORKERS_ENV"]

WORKERS_ENV = "RHFLAB_WORKERS"
SWEEP_AXES = {
    "N": ("model", "n_particles"),
    "m0": ("model", "m0"),
    "dt": ("evolution", "dt"),
    "coupling": ("potential", "coupling"),
}


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    manifest: dict


def _prepare(scenario: Scenario, grid, potential, dispersion, out_dir: Path):
    n_particles = scenario[("model", "n_particles")]
    kind = scenario[("preparation", "kind")]
    if kind == "fermi_sea":
        return fermi_sea(grid, n_particles, dispersion), None
    if kind == "boosted_fermi_sea":
        return boosted_fermi_sea(
            grid, n_particles, dispersion,
            amplitude=scenario[("preparation", "boost_amplitude")],
            mode=scenario[("preparation", "boost_mode")],
        ), None
    cfg = ScfConfig(
        max_iterations=scenario[("preparation", "max_iterations")],
        mixing=scenario[("preparation", "mixing")],
        convergence_tol=scenario[("preparation", "convergence_tol")],
        aufbau=scenario[("preparation", "aufbau")],
    )
    res = scf_minimize(grid, potential, n_particles, dispersion, cfg)
    rows = [(i, e, r) for i, (e, r) in enumerate(zip(res.energies, res.residuals))]
    write_csv(out_dir / "scf_trace.csv", ["iteration", "energy", "residual"], rows)
    return res.orbitals, res


def run(scenario: Scenario, out_dir) -> RunResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "checks").mkdir(exist_ok=True)
    config_hash = scenario.config_hash()
    recorded_warnings: list[str] = []

    grid = scenario.build_grid()
    dispersion = scenario.build_dispersion()
    potential = scenario.build_potential(grid)

    if scenario[("potential", "kernel")] == "gaussian":
        width = scenario[("potential", "width")]
        stable, coarse, fine = potential_moment_refinement_check(
            lambda p: np.exp(-0.5 * width**2 * p**2), grid,
            coupling=scenario[("potential", "coupling")],
        )
        if not stable:
            msg = (f"interaction moment not stabilized under refinement "
                   f"({fmt17(coarse)} -> {fmt17(fine)})")
            warnings.warn(msg)
            recorded_warnings.append(msg)

    dt = scenario[("evolution", "dt")]
    cap = suggested_dt_cap(grid, dispersion)
    if dt > cap:
        msg = f"dt={fmt17(dt)} above suggested cap {fmt17(cap)}"
        recorded_warnings.append(msg)

    orbitals, scf_result = _prepare(scenario, grid, potential, dispersion, out_dir)
    save_orbitals(out_dir / "initial_state.rhfs", orbitals)
    _write_sidecar(out_dir / "initial_state.rhfs", 0.0, config_hash)

    config = EvolutionConfig(
        dt=dt,
        t_final=scenario[("evolution", "t_final")],
        scheme=scenario[("evolution", "scheme")],
        exchange_on=scenario[("evolution", "exchange_on")],
        dispersion=dispersion,
        reortho_every=scenario[("evolution", "reortho_every")],
        keep_trap=scenario[("evolution", "keep_trap")],
    )
    state = SimState(time=0.0, orbitals=orbitals, potential=potential, config=config)

    observers, reports = _build_observers(scenario, grid, potential, dispersion, out_dir,
                                          config_hash)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = evolve(state, observers)
    recorded_warnings.extend(str(w.message) for w in caught)

    save_orbitals(out_dir / "final_state.rhfs", result.state.orbitals)
    _write_sidecar(out_dir / "final_state.rhfs", result.state.time, config_hash)

    checks_summary = _write_series_and_reports(scenario, result, reports, out_dir,
                                               grid, dispersion)
    hard_failure = result.aborted or any(not ok for ok in checks_summary.values())

    manifest = {
        "scenario": scenario.name,
        "config_hash": config_hash,
        "versions": {"rhflab": __version__, "numpy": np.__version__},
        "config": scenario.canonical_lines(),
        "status": "aborted" if result.aborted else ("failed" if hard_failure else "ok"),
        "abort_reason": result.abort_reason,
        "checks": checks_summary,
        "warnings": sorted(set(recorded_warnings)),
        "preparation": _scf_summary(scf_result),
        "artifacts": sorted(
            str(p.relative_to(out_dir)) for p in out_dir.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        ),
    }
    dump_json(out_dir / "manifest.json", manifest)
    return RunResult(exit_code=1 if hard_failure else 0, out_dir=out_dir,
                     manifest=manifest)


def run_file(scenario_path, out_dir) -> RunResult:
    return run(load_scenario(scenario_path), out_dir)


def _scf_summary(scf_result):
    if scf_result is None:
        return None
    return {
        "converged": scf_result.converged,
        "iterations": scf_result.iterations,
        "energy": scf_result.energy,
        "stationarity": scf_result.stationarity,
        "comm_x_over_neps": scf_result.comm_x_over_neps,
        "comm_grad_over_neps": scf_result.comm_grad_over_neps,
        "oscillation": scf_result.oscillation,
    }


def _build_observers(scenario: Scenario, grid, potential, dispersion, out_dir: Path,
                     config_hash: str):
    observers = []
    reports: dict[str, list] = {}
    diag = lambda key: scenario[("diagnostics", key)]

    if diag("conservation") > 0:
        def conservation(state: SimState) -> dict:
            cfg = state.config
            return {
                # the functional conserved by the active flow
                "energy": hf_energy(state.orbitals, state.potential, cfg.dispersion,
                                    include_vext=cfg.keep_trap,
                                    exchange_on=cfg.exchange_on),
                "trace": float(state.orbitals.n_particles),
                "gram_deviation": state.last_gram_deviation,
                "projection_residual": state.last_projection_residual,
                "seam_mass": seam_mass(state.orbitals),
            }

        observers.append(Observer("conservation", diag("conservation"), conservation))

    if diag("commutators") > 0:
        def commutators(state: SimState) -> dict:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # seam mass already recorded
                return commutator_channels(state.orbitals)

        observers.append(Observer("commutators", diag("commutators"), commutators))

    if diag("exp_bound") > 0:
        samples = default_phase_samples(grid)
        reports["exp_bound"] = []

        def exp_bound(state: SimState) -> dict:
            report = exp_bound_check(state.orbitals, samples)
            report["time"] = state.time
            reports["exp_bound"].append(report)
            return {"min_margin": report["min_margin"]}

        observers.append(Observer("exp_bound", diag("exp_bound"), exp_bound))

    if diag("exchange_bound") > 0:
        reports["exchange_bound"] = []

        def exchange_bound(state: SimState) -> dict:
            report = exchange_double_commutator_check(state.orbitals, state.potential)
            report["time"] = state.time
            reports["exchange_bound"].append(report)
            return {"min_margin": report["min_margin"]}

        observers.append(Observer("exchange_bound", diag("exchange_bound"),
                                  exchange_bound))

    if diag("kinetic_ratio") > 0 and dispersion.variant != "massless":
        reports["kinetic_ratio"] = []
        m0 = scenario[("model", "m0")]

        def kinetic_ratio(state: SimState) -> dict:
            report = kinetic_double_commutator_check(state.orbitals, m0)
            report["time"] = state.time
            reports["kinetic_ratio"].append(report)
            return {"max_ratio": report["max_ratio"]}

        observers.append(Observer("kinetic_ratio", diag("kinetic_ratio"), kinetic_ratio))

    if diag("checkpoint") > 0:
        ckpt_dir = out_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)

        def checkpoint(state: SimState) -> dict:
            path = ckpt_dir / f"state_{state.step_index:08d}.rhfs"
            save_orbitals(path, state.orbitals)
            _write_sidecar(path, state.time, config_hash)
            return {"step": float(state.step_index)}

        observers.append(Observer("checkpoint", diag("checkpoint"), checkpoint))

    return observers, reports


def _write_sidecar(container_path: Path, time: float, config_hash: str) -> None:
    Path(str(container_path) + ".meta.txt").write_text(
        f"time = {fmt17(time)}\nconfig_hash = {config_hash}\n"
    )


def _write_series_and_reports(scenario: Scenario, result, reports, out_dir: Path,
                              grid, dispersion) -> dict:
    checks_summary: dict[str, bool] = {}
    for name, series in result.series.items():
        if name == "checkpoint":
            continue
        header = ["time"] + sorted(series.channels)
        rows = [
            [t] + [series.channels[c][i] for c in sorted(series.channels)]
            for i, t in enumerate(series.times)
        ]
        write_csv(out_dir / f"{name}.csv", header, rows)

    for name, entries in reports.items():
        passed = all(e["passed"] for e in entries) if entries else True
        dump_json(out_dir / "checks" / f"{name}.json",
                  {"check": name, "passed": passed, "reports": entries})
        checks_summary[name] = passed

    comm = result.series.get("commutators")
    if comm is not None and len(comm.times) >= 2:
        times = np.asarray(comm.times)
        comm_x = sum(np.asarray(comm.channels[c]) for c in comm.channels
                     if c.startswith("comm_x_"))
        comm_grad = sum(np.asarray(comm.channels[c]) for c in comm.channels
                        if c.startswith("comm_grad_"))
        n_particles = scenario[("model", "n_particles")]
        if len(times) >= 8:
            fit = growth_fit(times, comm_x, n_particles, grid.epsilon)
            envelope_ok = bool(
                np.all(comm_x <= 1.1 * fit.envelope(n_particles, grid.epsilon, times)
                       + 1e-12)
            )
            dump_json(out_dir / "growth_fit.json", {
                "check": "growth_fit", "C": fit.C, "c": fit.c,
                "residual": fit.residual, "passed": envelope_ok,
            })
            checks_summary["growth_fit"] = envelope_ok
        if dispersion.variant != "massless":
            audit = integrated_growth_audit(times, comm_x, comm_grad,
                                            scenario[("model", "n_particles")],
                                            scenario[("model", "m0")])
            dump_json(out_dir / "integrated_growth.json", audit)
            checks_summary["integrated_growth"] = bool(audit["passed"])

    cons = result.series.get("conservation")
    if cons is not None and len(cons.times) >= 2:
        energy = np.asarray(cons.channels["energy"])
        drift = float(np.max(np.abs(energy - energy[0])) / max(1.0, abs(energy[0])))
        span = max(result.state.time, 1e-300)
        summary = {
            "check": "conservation",
            "energy_drift_rel": drift,
            "energy_drift_rel_per_unit_time": drift / span,
            "max_gram_deviation": float(np.max(cons.channels["gram_deviation"])),
            "max_projection_residual": float(np.max(cons.channels["projection_residual"])),
            "trace_constant": bool(np.all(np.asarray(cons.channels["trace"])
                                          == cons.channels["trace"][0])),
        }
        dump_json(out_dir / "checks" / "conservation.json", summary)

    return checks_summary


def _sweep_token(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return fmt17(value)
    return str(value)


def _run_sub(args):
    scenario, out_dir = args
    try:
        result = run(scenario, out_dir)
        return result.exit_code
    except Exception as exc:  # sub-run failures are recorded, sweep continues
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        dump_json(Path(out_dir) / "manifest.json",
                  {"status": "error", "error": str(exc)})
        return 2


def sweep(scenario: Scenario, axis: str, values: list, out_root) -> int:
    """One sub-run per value along the axis; aggregated end-time metrics CSV."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ValueError("sweep needs at least one value")
    tokens = [_sweep_token(v) for v in values]
    numeric = [float(t) for t in tokens]
    diffs = np.diff(numeric)
    if len(numeric) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("sweep values must be strictly monotone")

    section, key = SWEEP_AXES[axis]
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = []
    sub_dirs = []
    for i, token in enumerate(tokens):
        sub = scenario.with_value(section, key, token)
        sub_dir = out_root / f"{axis}_{i:02d}_{token}"
        jobs.append((sub, sub_dir))
        sub_dirs.append(sub_dir)

    n_workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    if n_workers == 1:
        codes = [_run_sub(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            codes = list(pool.map(_run_sub, jobs))

    rows = []
    final_states = []
    for i, (token, sub_dir, code) in enumerate(zip(tokens, sub_dirs, codes)):
        metrics = _collect_metrics(sub_dir, scenario, axis, token)
        final_path = sub_dir / "final_state.rhfs"
        final_states.append(load_orbitals(final_path) if final_path.exists() else None)
        rows.append([i, axis, token, code] + metrics)
    if axis == "dt":
        from .orbitals import hs_distance_squared

        for i, row in enumerate(rows):
            if i == 0 or final_states[i] is None or final_states[i - 1] is None:
                row.append(float("nan"))
            else:
                row.append(hs_distance_squared(final_states[i], final_states[i - 1]))
    header = ["index", "axis", "value", "exit_code", "energy_drift_rel",
              "comm_x_final", "comm_grad_final", "comm_x_over_neps", "growth_C",
              "growth_c", "min_margin"]
    if axis == "dt":
        header.append("dist_sq_to_prev")
    write_csv(out_root / "sweep.csv", header, rows)
    dump_json(out_root / "sweep_manifest.json", {
        "axis": axis, "values": tokens, "exit_codes": codes,
        "base_config_hash": scenario.config_hash(),
    })
    return max(codes) if codes else 0


def _collect_metrics(sub_dir: Path, base: Scenario, axis: str, token: str) -> list:
    from .containers import load_json, read_csv

    nan = float("nan")
    energy_drift = comm_x = comm_grad = comm_x_neps = growth_c_big = growth_c = nan
    min_margin = nan
    cons_path = sub_dir / "checks" / "conservation.json"
    if cons_path.exists():
        energy_drift = load_json(cons_path)["energy_drift_rel"]
    comm_path = sub_dir / "commutators.csv"
    if comm_path.exists():
        header, rows = read_csv(comm_path)
        if rows:
            last = {h: float(v) for h, v in zip(header, rows[-1])}
            comm_x = sum(v for h, v in last.items() if h.startswith("comm_x_"))
            comm_grad = sum(v for h, v in last.items() if h.startswith("comm_grad_"))
            section, key = SWEEP_AXES[axis]
            scen = base.with_value(section, key, token)
            neps = scen[("model", "n_particles")] * scen.epsilon()
            comm_x_neps = comm_x / neps
    fit_path = sub_dir / "growth_fit.json"
    if fit_path.exists():
        fit = load_json(fit_path)
        growth_c_big, growth_c = fit["C"], fit["c"]
    margins = []
    for name in ("exp_bound", "exchange_bound"):
        path = sub_dir / "checks" / f"{name}.json"
        if path.exists():
            for rep in load_json(path)["reports"]:
                margins.append(rep["min_margin"])
    if margins:
        min_margin = min(margins)
    return [energy_drift, comm_x, comm_grad, comm_x_neps, growth_c_big, growth_c,
            min_margin]
