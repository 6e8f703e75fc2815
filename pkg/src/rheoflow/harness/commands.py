"""Experiment drivers behind the CLI subcommands.

Each driver parses its inputs, runs the requested experiment, writes CSV (and
optional SVG) artifacts plus a ``manifest.txt`` into the output directory and
returns a RunManifest whose check map decides the process exit code. CSV
numbers are always plain `%.17g` with a `.` decimal point, so reruns of the
same config diff clean.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .. import __version__, diagnostics, galerkin
from ..errors import ConfigError
from ..measure_lab import (
    concentration_defect,
    dissipation_defect,
    total,
    total_variation,
    trace_domination_check,
    trace_total,
)
from ..tensor_core import DivFreeMode, SymMat3, VelocityField
from ..transport import DensityField
from .config import load_config
from .fieldio import write_field
from .suites import SUITES, run_suite

_EREL_FLOOR = 1e-12
_DISTANCE_FLOOR = 1e-10


@dataclass
class RunManifest:
    """What a command did: artifacts written and the pass/fail summary."""

    command: str
    seed: int
    config: str | None = None
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.checks.values())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _start(command: str, seed: int, config: str | None = None) -> RunManifest:
    return RunManifest(command=command, seed=seed, config=config,
                       started=_now())


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_manifest(out_dir: str, manifest: RunManifest) -> str:
    manifest.finished = _now()
    path = os.path.join(out_dir, "manifest.txt")
    lines = [f"command = {manifest.command}",
             f"version = {manifest.version}",
             f"seed = {manifest.seed}",
             f"started = {manifest.started}",
             f"finished = {manifest.finished}"]
    if manifest.config is not None:
        lines.append(f"config = {manifest.config}")
    lines.extend(f"output = {p}" for p in manifest.outputs)
    lines.extend(f"note {k} = {v}" for k, v in manifest.notes.items())
    lines.extend(f"check {k} = {'pass' if ok else 'FAIL'}"
                 for k, ok in manifest.checks.items())
    lines.append(f"passed = {'yes' if manifest.all_passed else 'no'}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _emit(manifest: RunManifest, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    manifest.outputs.append(name)
    return path


def _maybe_svg(manifest: RunManifest, out_dir: str, name: str, title: str,
               xlabel: str, curves, logy: bool = False) -> None:
    """curves: iterable of (label, x array, y array)."""
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, x, y in curves:
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(_emit(manifest, out_dir, name))
    plt.close(fig)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(config_path: str, out_dir: str, seed: int = 42,
                 svg: bool = False) -> RunManifest:
    config = load_config(config_path)
    os.makedirs(out_dir, exist_ok=True)
    manifest = _start("simulate", seed, config_path)

    states, ledger = galerkin.run(config)
    _write_csv(_emit(manifest, out_dir, "ledger.csv"),
               ["t", "kinetic", "gamma_term", "dissipation", "defect",
                "total", "residual"],
               [(r.t, r.kinetic, r.gamma_term, r.dissipation, r.defect,
                 r.total, r.residual) for r in ledger.rows])

    if config.snapshot_every > 0:
        indices = set(range(0, len(states), config.snapshot_every))
        indices.add(len(states) - 1)
        for idx in sorted(indices):
            write_field(_emit(manifest, out_dir, f"rho_{idx:06d}.fld"),
                        states[idx].rho.values)

    rho_lo = min(float(st.rho.values.min()) for st in states)
    rho_hi = max(float(st.rho.values.max()) for st in states)
    manifest.checks["density_bounds"] = (rho_lo >= config.rho_min
                                         and rho_hi <= config.rho_max)
    diss = [r.dissipation for r in ledger.rows]
    manifest.checks["dissipation_nonneg"] = (diss[0] >= 0.0
                                             and np.all(np.diff(diss) >= 0.0))
    excess = diagnostics.energy_inequality_check(ledger)
    manifest.checks["energy_excess"] = excess <= config.energy_excess_tol
    manifest.notes["max_energy_excess"] = _fmt(excess)
    manifest.notes["steps"] = str(len(states) - 1)
    manifest.notes["final_kinetic"] = _fmt(ledger.rows[-1].kinetic)

    if svg:
        t = np.array([r.t for r in ledger.rows])
        _maybe_svg(manifest, out_dir, "energy.svg", "energy budget", "t",
                   [("kinetic", t, [r.kinetic for r in ledger.rows]),
                    ("gamma term", t, [r.gamma_term for r in ledger.rows]),
                    ("dissipation", t, [r.dissipation for r in ledger.rows]),
                    ("total", t, [r.total for r in ledger.rows])])
    write_manifest(out_dir, manifest)
    return manifest


# ---------------------------------------------------------------------------
# verify


def cmd_verify(suite: str = "all", out_dir: str | None = None,
               seed: int = 42) -> RunManifest:
    if suite == "all":
        names = sorted(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        raise ConfigError(f"unknown suite {suite!r} "
                          f"(valid: {', '.join(sorted(SUITES))}, all)")
    manifest = _start("verify", seed)
    for name in names:
        for check in run_suite(name, seed):
            label = f"{name}.{check.name}"
            manifest.checks[label] = check.passed
            manifest.notes[label] = f"margin={check.margin:.3e} {check.detail}"
            status = "PASS" if check.passed else "FAIL"
            print(f"{status} {label} margin={check.margin:.3e} {check.detail}")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_manifest(out_dir, manifest)
    return manifest


# ---------------------------------------------------------------------------
# relative energy


def _require_newtonian_reference(config: galerkin.SimConfig,
                                 source: str) -> float:
    """The manufactured reference is the single-mode quadratic-potential flow
    at unit density; anything else has no closed-form strong solution here."""
    pot = config.potential
    if pot.kind != "power_law" or pot.p != 2.0:
        raise ConfigError(f"{source}: relative-energy needs potential = "
                          f"power_law with p = 2")
    if config.u0.kind != "single_mode":
        raise ConfigError(f"{source}: relative-energy needs u0 = single_mode")
    if config.rho0.kind != "constant" or config.rho0.value != 1.0:
        raise ConfigError(f"{source}: relative-energy needs rho0 = constant "
                          f"with rho0_value = 1")
    # potential (nu/2)|D|^2 corresponds to the reference decay viscosity nu/2
    return pot.nu / 2.0


def cmd_relative_energy(config_path: str, out_dir: str, seed: int = 42,
                        svg: bool = False) -> RunManifest:
    config = load_config(config_path)
    nu_reference = _require_newtonian_reference(config, config_path)
    os.makedirs(out_dir, exist_ok=True)
    manifest = _start("relative-energy", seed, config_path)

    strong = diagnostics.manufactured_solution(config.u0.k, config.u0.w,
                                               nu_reference)
    c_max = 10.0 * strong.grad_sup0
    states, _ = galerkin.run(config)
    tables = galerkin.build_tables(config)
    series = []
    for st in states:
        u = VelocityField(tables.modes, st.a, st.t)
        erel = diagnostics.relative_energy(st.rho, u, 0.0, strong, st.t,
                                           config.gamma, tables.grid)
        series.append((st.t, erel))

    t0 = series[0][0]
    reference = max(series[0][1], _EREL_FLOOR)
    envelope = [reference * float(np.exp(c_max * (t - t0))) for t, _ in series]
    _write_csv(_emit(manifest, out_dir, "erel.csv"),
               ["t", "e_rel", "envelope"],
               [(t, e, env) for (t, e), env in zip(series, envelope)])

    values = np.array([e for _, e in series])
    manifest.notes["c_max"] = _fmt(c_max)
    manifest.notes["grad_sup_initial"] = _fmt(strong.grad_sup0)
    manifest.notes["e_rel_initial"] = _fmt(series[0][1])
    manifest.notes["e_rel_max"] = _fmt(float(values.max()))
    perturbed = config.perturb_delta != 0.0
    if len(series) >= 3:
        report = diagnostics.gronwall_monitor(series, c_max=c_max,
                                              floor=_EREL_FLOOR)
        manifest.notes["fitted_rate"] = _fmt(report.rate)
        manifest.notes["worst_envelope_margin"] = _fmt(report.worst_margin)
        if perturbed:
            manifest.checks["gronwall_envelope"] = report.passed
    elif perturbed:
        # too short for a rate fit; the envelope degenerates to the start value
        manifest.checks["gronwall_envelope"] = bool(
            np.all(values <= reference * (1.0 + 1e-12)))
        manifest.notes["fitted_rate"] = "n/a (fewer than 3 rows)"

    if perturbed:
        expected = 0.5 * config.perturb_delta ** 2
        manifest.checks["perturbed_start_value"] = bool(
            abs(series[0][1] - expected) <= 1e-12)
        manifest.notes["expected_e_rel_initial"] = _fmt(expected)
    else:
        # With coinciding data the measured distance is pure time-stepping and
        # regularization error; it sits at the envelope floor rather than under
        # the stability estimate, so the envelope margin stays a note here.
        manifest.checks["identical_data_small"] = bool(values.max() <= 1e-6)

    if svg:
        t = [row[0] for row in series]
        _maybe_svg(manifest, out_dir, "erel.svg", "relative energy", "t",
                   [("E_rel", t, np.maximum(values, 1e-30)),
                    ("envelope", t, envelope)], logy=True)
    write_manifest(out_dir, manifest)
    return manifest


# ---------------------------------------------------------------------------
# defect study


def cmd_defect_study(out_dir: str, n_values=(4, 8, 16, 32),
                     w=(0.0, 1.0, 0.0), cells: int = 4, seed: int = 42,
                     svg: bool = False) -> RunManifest:
    wv = np.asarray(w, dtype=float)
    if wv.shape != (3,) or not np.all(np.isfinite(wv)):
        raise ConfigError("w must be a finite 3-vector")
    if wv[0] != 0.0:
        raise ConfigError("w must be orthogonal to the oscillation axis e1")
    wnorm = float(np.linalg.norm(wv))
    if wnorm == 0.0:
        raise ConfigError("w must be nonzero")
    n_values = [int(n) for n in n_values]
    if any(n < 1 for n in n_values) or any(np.diff(n_values) <= 0):
        raise ConfigError("n values must be positive and strictly increasing")
    if cells < 1:
        raise ConfigError("cells must be positive")

    os.makedirs(out_dir, exist_ok=True)
    manifest = _start("defect-study", seed)
    direction = tuple(wv / wnorm)
    rho = DensityField.constant(1.0, 2, 0.5, 2.0)
    target = SymMat3.outer(wv)
    target_defect = 0.5 * wnorm ** 2

    rows = []
    distances = []
    domination_ok = True
    for n in n_values:
        mode = DivFreeMode(k=(n, 0, 0), polarization=0, parity="sin",
                           e=direction)
        u_osc = VelocityField((mode,), np.array([wnorm]))
        u_limit = VelocityField((mode,), np.array([0.0]))
        mu = concentration_defect(rho, u_osc, u_limit, cells)
        dist = (total(mu) - target).norm()
        defect = dissipation_defect(mu)
        report = trace_domination_check(mu)
        tv = total_variation(mu)
        domination_ok &= report.passed and tv <= 2.0 * report.c_lemma * defect
        distances.append(dist)
        rows.append((n, dist, trace_total(mu), defect, tv, report.ratio))

    _write_csv(_emit(manifest, out_dir, "defect.csv"),
               ["n", "distance_to_limit", "trace", "defect",
                "total_variation", "variation_trace_ratio"], rows)

    # distances for period-aligned n collapse to roundoff; monotonicity is
    # only meaningful above the floor
    monotone = all(b <= a or b <= _DISTANCE_FLOOR
                   for a, b in zip(distances, distances[1:]))
    manifest.checks["distance_monotone"] = monotone
    manifest.checks["distance_small"] = distances[-1] <= 0.05 * wnorm ** 2
    manifest.checks["defect_matches_half_speed"] = (
        abs(rows[-1][3] - target_defect) <= 0.05 * target_defect)
    manifest.checks["trace_domination"] = bool(domination_ok)
    manifest.notes["final_distance"] = _fmt(distances[-1])
    manifest.notes["final_defect"] = _fmt(rows[-1][3])

    if svg:
        _maybe_svg(manifest, out_dir, "defect.svg", "defect convergence", "n",
                   [("distance to limit", n_values,
                     np.maximum(distances, 1e-20))], logy=True)
    write_manifest(out_dir, manifest)
    return manifest


# ---------------------------------------------------------------------------
# convergence ladders


def _ladder_run(config: galerkin.SimConfig):
    states, ledger = galerkin.run(config)
    max_resid = max(abs(r.residual) for r in ledger.rows)
    return states[-1].a, ledger.rows[-1].kinetic, max_resid


def _fit_order(params, errors) -> float:
    """Least-squares slope of log error against log parameter."""
    pairs = [(p, e) for p, e in zip(params, errors) if e > 0.0]
    if len(pairs) < 2:
        return float("inf")  # errors at roundoff floor: better than any order
    lp = np.log([p for p, _ in pairs])
    le = np.log([e for _, e in pairs])
    return float(np.polyfit(lp, le, 1)[0])


def cmd_convergence(config_path: str, out_dir: str, seed: int = 42,
                    svg: bool = False) -> RunManifest:
    base = load_config(config_path)
    os.makedirs(out_dir, exist_ok=True)
    manifest = _start("convergence", seed, config_path)
    rows = []

    dts = [4.0 * base.dt, 2.0 * base.dt, base.dt]
    finals, residuals = [], []
    for dt in dts:
        a, kinetic, resid = _ladder_run(dataclasses.replace(base, dt=dt))
        finals.append(a)
        residuals.append(resid)
        rows.append(("dt", dt, kinetic, resid))
    resid_order = _fit_order(dts, residuals)
    coarse_gap = float(np.linalg.norm(finals[0] - finals[2]))
    mid_gap = float(np.linalg.norm(finals[1] - finals[2]))
    manifest.notes["dt_residual_order"] = _fmt(resid_order)
    manifest.notes["dt_coefficient_gap_coarse"] = _fmt(coarse_gap)
    manifest.notes["dt_coefficient_gap_mid"] = _fmt(mid_gap)
    manifest.checks["dt_residual_order"] = resid_order >= 1.0
    manifest.checks["dt_coefficients_converge"] = (
        mid_gap <= 0.5 * coarse_gap or coarse_gap <= 1e-12)

    kinetics = []
    for kmax in (base.kmax, base.kmax + 1):
        _, kinetic, resid = _ladder_run(dataclasses.replace(base, kmax=kmax,
                                                            quad_resolution=None))
        kinetics.append(kinetic)
        rows.append(("kmax", float(kmax), kinetic, resid))
    manifest.notes["kmax_kinetic_shift"] = _fmt(abs(kinetics[1] - kinetics[0]))

    alphas = [base.alpha, 0.5 * base.alpha, 0.25 * base.alpha]
    alpha_kin = []
    for alpha in alphas:
        _, kinetic, resid = _ladder_run(dataclasses.replace(base, alpha=alpha))
        alpha_kin.append(kinetic)
        rows.append(("alpha", alpha, kinetic, resid))
    gaps = [abs(alpha_kin[0] - alpha_kin[1]), abs(alpha_kin[1] - alpha_kin[2])]
    manifest.notes["alpha_kinetic_order"] = _fmt(_fit_order([1.0, 0.5], gaps))

    _write_csv(_emit(manifest, out_dir, "convergence.csv"),
               ["ladder", "value", "final_kinetic", "max_abs_residual"], rows)

    if svg:
        _maybe_svg(manifest, out_dir, "convergence.svg",
                   "energy residual vs dt", "dt",
                   [("max |residual|", dts, np.maximum(residuals, 1e-20))],
                   logy=True)
    write_manifest(out_dir, manifest)
    return manifest
