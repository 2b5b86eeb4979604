"""Config-driven scenarios writing CSV tables, a JSON report and a manifest.

Each scenario returns a ScenarioResult holding named tables, a report and
boolean checks.  :func:`run_scenario` writes the artifacts atomically:

    <out>/fields/<table>.csv
    <out>/plots/<table>.gp
    <out>/report.json
    <out>/manifest.json

and returns the process exit status (0 all checks pass, 3 a check failed,
4 a non-finite number appeared).
"""
from __future__ import annotations

import io
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .errors import NumericError
from .fieldio import atomic_write_text, fmt, sha256_file, write_json, write_rows
from .fields import Grid, PhysicalConstants, Role, ScalarField

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3
EXIT_NUMERIC = 4


@dataclass
class Table:
    columns: Dict[str, np.ndarray]
    x: str
    y: tuple
    style: str = "lines"

    def __post_init__(self):
        shapes = {np.shape(v) for v in self.columns.values()}
        if len(shapes) != 1:
            raise ValueError(f"table columns have different shapes: {shapes}")


@dataclass
class ScenarioResult:
    report: dict
    checks: Dict[str, bool]
    tables: Dict[str, Table] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def constants_from(cfg: ScenarioConfig) -> PhysicalConstants:
    return PhysicalConstants(**cfg.section("constants"))


class _Timer:
    def __init__(self, timings: dict, name: str):
        self.timings, self.name = timings, name

    def __enter__(self):
        self.start = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.name] = time.perf_counter() - self.start


# --------------------------------------------------------------------------
# scenarios

def stationary_check(cfg: ScenarioConfig) -> ScenarioResult:
    from .nonrel import stationary_validate

    k = constants_from(cfg)
    case = cfg.get("stationary", "case")
    tol = cfg.get("stationary", "tolerance")
    points = cfg.get("grid", "points") or None
    extent = cfg.get("grid", "extent") or None
    timings: dict = {}
    cases = ["oscillator-ground", "oscillator-second"] if case == "oscillator-gap" else [case]
    report, checks, tables = {"case": case}, {}, {}
    for name in cases:
        with _Timer(timings, name):
            rep = stationary_validate(name, k, points, extent, tol)
        e = rep.energies
        report[name] = {"mean": rep.mean, "spread": rep.spread, "relative_spread": rep.spread / abs(rep.mean),
                        "expected": rep.expected, "tolerance": rep.tolerance, "verdict": rep.verdict}
        checks[f"{name}_constant_energy"] = rep.verdict
        axis = e.grid.axis_names[0]
        tables[f"energy_{name}"] = Table({axis: e.grid.coords(0), "E": e.values,
                                          "mask": e.mask.astype(int)}, axis, ("E",))
    if case == "oscillator-gap":
        gap = report["oscillator-second"]["mean"] - report["oscillator-ground"]["mean"]
        ratio = gap / (k.hbar * k.omega)
        report["gap_over_hbar_omega"] = ratio
        checks["gap_equals_hbar_omega"] = abs(ratio - 1.0) < tol
    return ScenarioResult(report, checks, tables, timings)


def _oscillator_setup(cfg: ScenarioConfig, k: PhysicalConstants, displacement: float):
    from .nonrel import Wavefunction

    alpha = k.m * k.omega / k.hbar
    points = cfg.get("grid", "points") or 64
    extent = cfg.get("grid", "extent") or 16.0 / math.sqrt(alpha)
    grid = Grid.line(extent, points)
    x = grid.coords(0)
    psi = np.exp(-0.5 * alpha * (x - displacement) ** 2).astype(complex)
    V = ScalarField(grid, 0.5 * k.m * k.omega ** 2 * x ** 2, Role.POTENTIAL)
    return Wavefunction(grid, psi).normalized(), V


def evolve_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    from .nonrel import evolve

    k = constants_from(cfg)
    sec = cfg.section("evolve")
    psi0, V = _oscillator_setup(cfg, k, sec["displacement"])
    steps = sec["steps"]
    dt = sec["periods"] * 2.0 * math.pi / k.omega / steps
    timings: dict = {}
    with _Timer(timings, "evolve"):
        series = evolve(psi0, V, dt, steps, k, store_every=sec["store_every"])
    x = psi0.grid.coords(0)
    h = psi0.grid.spacing[0]
    rho = np.array([f.density() for f in series.frames])
    norms = rho.sum(axis=1) * h
    centroid = (rho * x).sum(axis=1) * h / norms
    exact = sec["displacement"] * np.cos(k.omega * series.times)
    drift = float(np.max(np.abs(norms - norms[0])))
    drift_per_1000 = drift * 1000.0 / steps
    tt, xx = np.meshgrid(series.times, x, indexing="ij")
    report = {"steps": steps, "dt": dt, "norm_drift": drift, "norm_drift_per_1000_steps": drift_per_1000,
              "max_centroid_error": float(np.max(np.abs(centroid - exact)))}
    checks = {"norm_drift": drift_per_1000 < 1e-9, "centroid_tracks_classical": report["max_centroid_error"] < 1e-4}
    tables = {
        "density": Table({"t": tt, "x": xx, "rho": rho}, "x", ("rho",)),
        "centroid": Table({"t": series.times, "mean_x": centroid, "classical_x": exact}, "t",
                          ("mean_x", "classical_x")),
    }
    return ScenarioResult(report, checks, tables, timings)


def trajectories_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    from .nonrel import equivariance_run

    k = constants_from(cfg)
    sec = cfg.section("trajectories")
    psi0, V = _oscillator_setup(cfg, k, sec["displacement"])
    steps = sec["steps"]
    dt = 2.0 * math.pi / k.omega / steps
    timings: dict = {}
    with _Timer(timings, "equivariance"):
        run = equivariance_run(psi0, V, dt, steps, sec["particles"], cfg.seed, sec["sample_every"], k)
    ens = run["ensemble"]
    frames = list(range(0, len(ens.frames), sec["write_every"]))
    stride = sec["write_stride"]
    ids = np.arange(0, ens.frames[0].count, stride)
    t_col = np.repeat(ens.times[frames], ids.size)
    pid = np.tile(ids, len(frames))
    pos = np.concatenate([ens.frames[i].positions[ids] for i in frames])
    sign = np.concatenate([ens.frames[i].signs[ids] for i in frames]).astype(int)
    drift_per_1000 = run["norm_drift"] * 1000.0 / steps
    max_ks = float(np.max(run["ks"]))
    report = {"particles": sec["particles"], "steps": steps, "dt": dt, "max_ks": max_ks,
              "norm_drift": run["norm_drift"], "norm_drift_per_1000_steps": drift_per_1000}
    checks = {"ks_below_0.05": max_ks < 0.05, "norm_drift": drift_per_1000 < 1e-9}
    tables = {
        "trajectories": Table({"t": t_col, "particle_id": pid, "position": pos, "sign": sign}, "t", ("position",),
                              "points"),
        "ks": Table({"t": run["ks_times"], "ks": run["ks"]}, "t", ("ks",)),
    }
    return ScenarioResult(report, checks, tables, timings)


def _density(kind: str, grid: Grid, scale: float) -> ScalarField:
    x = grid.coords(0)
    if kind == "gaussian":
        values = np.exp(-(x / scale) ** 2)
    elif kind == "bimodal":
        values = np.exp(-((x - scale) / scale) ** 2) + 0.5 * np.exp(-((x + scale) / scale) ** 2)
    else:
        values = 1.0 / np.cosh(x / scale) ** 2
    return ScalarField(grid, values, Role.DENSITY)


def kernel_compare_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    from .qpotential import kernel_compare, kernel_q_convolution, kernel_q_series, matched_kernel

    k = constants_from(cfg)
    sec = cfg.section("kernel")
    scale, beta, order = sec["scale"], sec["beta"], sec["order"]
    points = cfg.get("grid", "points") or 4096
    extent = cfg.get("grid", "extent") or 20.0 * scale
    grid = Grid.line(extent, points, "dirichlet")
    rho = _density(sec["density"], grid, scale)
    spec = matched_kernel(beta, 1, k)
    timings: dict = {}
    orders = tuple(range(0, max(order, 3) + 1))
    with _Timer(timings, "compare"):
        cmp = kernel_compare(rho, spec, orders)
    timings.update(direct=cmp["time_direct_s"], spectral=cmp["time_spectral_s"])
    q = kernel_q_convolution(rho, spec, "spectral")
    series = kernel_q_series(rho, spec, order)
    dev = cmp["series_deviation"]
    report = {"density": sec["density"], "beta": beta, "scale": scale, "beta_scale": cmp["beta_scale"],
              "order": order, "series_deviation": {str(o): float(d) for o, d in dev.items()},
              "monotone": bool(cmp["monotone"]), "path_deviation": float(cmp["path_deviation"]),
              "floored_points": int(cmp["floored_points"]), "points": points}
    checks = {"order_deviation_below_1e-2": dev[order] < 1e-2 if order > 0 else True,
              "monotone_in_order": bool(cmp["monotone"]),
              "paths_agree_1e-10": cmp["path_deviation"] < 1e-10}
    mask = q.mask.astype(int)
    tables = {"kernel": Table({"x": grid.coords(0), "rho": rho.values, "Q_kernel": q.values,
                               f"Q_series_{order}": series.values, "mask": mask}, "x",
                              ("Q_kernel", f"Q_series_{order}"))}
    return ScenarioResult(report, checks, tables, timings)


def _rel_grid(cfg: ScenarioConfig, section: str) -> Grid:
    t_extent = cfg.get("rel", "t_extent")
    return Grid.lattice(t_extent, cfg.get(section, "nt"), 2.0 * math.pi, cfg.get(section, "ny"))


def rel_check(cfg: ScenarioConfig) -> ScenarioResult:
    from .rel import currents, force_consistency, kg_superposition, mass_current_drift, rel_residuals

    k = constants_from(cfg)
    grid = _rel_grid(cfg, "rel")
    timings: dict = {}
    with _Timer(timings, "residuals"):
        state = kg_superposition(grid, k)
        hj, cont = rel_residuals(state)
        cur = currents(state, edge=4)
        force = force_consistency(state)
        drift = mass_current_drift(state)
    cur_rep = cur.report(k.e / k.m)
    report = {"max_hj": float(np.max(np.abs(hj.values))), "max_continuity": float(np.max(np.abs(cont.values))),
              "currents": cur_rep, "force": {kk: float(v) for kk, v in force.items()},
              "mass_current_drift": drift,
              "mass_sq_range": [float(state.mass_sq.values.min()), float(state.mass_sq.values.max())]}
    checks = {"hj_below_1e-6": report["max_hj"] < 1e-6, "continuity_below_1e-6": report["max_continuity"] < 1e-6,
              "number_current_law_below_1e-6": cur_rep["number_law_residual"] < 1e-6,
              "charge_to_mass_1e-12": cur_rep["charge_to_mass_error"] < 1e-12,
              "mass_current_conserved": drift < 1e-6}
    t, y = grid.mesh()
    tables = {"rel": Table({"t": t, "y": y, "rho": state.rho.values, "S": state.S.values,
                            "M2": state.mass_sq.values, "hj": hj.values, "continuity": cont.values},
                           "y", ("rho", "M2"))}
    return ScenarioResult(report, checks, tables, timings)


def spin_mass_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    from .qpotential import rel_mass_sq_local
    from .rel import kg_superposition, summary_mass
    from .spin import SpinorField, VectorField, default_epsilon, dirac_plane_wave, dirac_residual, dirac_symbol_residual

    k = constants_from(cfg)
    beta = cfg.get("kernel", "beta")
    order = cfg.get("kernel", "order")
    sec = cfg.section("spin")
    eps = sec["epsilon"] or default_epsilon(beta)
    # Omega~ = -4 beta^2 with m_kernel = (hbar/c) sqrt(kappa^2 + 4 beta^2) reproduces, at order 1,
    # the local mass function of a field obeying (box + kappa^2) phi = 0
    omega_tilde = -4.0 * beta ** 2
    kappa = cfg.get("rel", "kappa")
    m_kernel = k.hbar / k.c * math.sqrt(kappa ** 2 + 4.0 * beta ** 2)
    kk = PhysicalConstants(k.hbar, m_kernel, k.c, k.e, k.omega)
    grid = _rel_grid(cfg, "rel")
    timings: dict = {}
    with _Timer(timings, "masses"):
        base = PhysicalConstants(k.hbar, kappa * k.hbar / k.c, k.c, k.e, k.omega)
        state = kg_superposition(grid, base)
        local = rel_mass_sq_local(state.Lambda, base)
        s0 = summary_mass("0", state.Lambda, beta, omega_tilde, order, kk)
        # plane waves of the Dirac-like equation have space-like k, so Gbar G vanishes
        # for them; the mass function is sampled on G = (a(y) exp(-i w t), 0, 0, 0) instead
        wave, kvec = dirac_plane_wave(grid, eps, sec["mode"], 0, k.c)
        t, y = grid.mesh()
        a = 2.0 + np.cos(y)
        w = 1.0
        comps = np.zeros((4,) + grid.shape, dtype=complex)
        comps[0] = a * np.exp(-1j * w * t)
        gfield = SpinorField(grid, comps)
        s_half = summary_mass("1/2", gfield, beta, omega_tilde, order, kk, eps)
        vec = np.zeros((4,) + grid.shape)
        vec[1] = a
        s_one = summary_mass("1", VectorField(grid, vec), beta, omega_tilde, order, kk)
    pref = kk.hbar ** 2 * omega_tilde / kk.c ** 2
    exact = {}
    if order == 1:
        # A^mu = (0, a, 0, 0): A.E A / |A.A| = -(1 + a''/(4 beta^2 a)), a'' = -cos y
        exact["one"] = kk.m ** 2 - pref * (1.0 - np.cos(y) / (4.0 * beta ** 2 * a))
        # box f / f = -w^2/c^2 - a''/a and the gamma.d term is purely imaginary
        exact["half"] = kk.m ** 2 + pref * (1.0 + (w ** 2 / k.c ** 2 - np.cos(y) / a) / (4.0 * beta ** 2))
    m0 = s0.mass_sq.mask
    report = {
        "omega_tilde": omega_tilde, "epsilon": eps, "order": order, "kernel_mass": m_kernel,
        "spin0": {"equation": s0.equation, "range": [float(s0.mass_sq.values.min()), float(s0.mass_sq.values.max())],
                  "max_deviation_from_local": float(np.max(np.abs(s0.mass_sq.values - local.values)[m0]))
                  if order == 1 else None},
        "spin1/2": {"equation": s_half.equation, **{kx: float(v) for kx, v in s_half.diagnostics.items()},
                    "plane_wave_symbol_residual": dirac_symbol_residual(wave.components[:, 0, 0], kvec, eps),
                    "plane_wave_lattice_residual": dirac_residual(wave, eps, k.c),
                    "max_deviation_from_closed_form": float(np.max(np.abs(s_half.mass_sq.values - exact["half"])))
                    if exact else None},
        "spin1": {"equation": s_one.equation, **{kx: float(v) for kx, v in s_one.diagnostics.items()},
                  "max_deviation_from_closed_form": float(np.max(np.abs(s_one.mass_sq.values - exact["one"])))
                  if exact else None},
    }
    checks = {"dirac_symbol_1e-8": report["spin1/2"]["plane_wave_symbol_residual"] < 1e-8}
    if order == 1:
        checks["spin_half_closed_form_1e-6"] = report["spin1/2"]["max_deviation_from_closed_form"] < 1e-6
        checks["spin0_matches_local_1e-5"] = report["spin0"]["max_deviation_from_local"] < 1e-5
        checks["spin1_closed_form_1e-6"] = report["spin1"]["max_deviation_from_closed_form"] < 1e-6
    t, yy = grid.mesh()
    tables = {"spin_mass": Table({"t": t, "y": yy, "M2_spin0": s0.mass_sq.values,
                                  "M2_spin_half": s_half.mass_sq.values, "M2_spin1": s_one.mass_sq.values},
                                 "y", ("M2_spin0", "M2_spin_half", "M2_spin1"))}
    return ScenarioResult(report, checks, tables, timings)


def spin_stats_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    from .spin import MultiKernelSpec, Statistics, separability_report

    beta = cfg.get("kernel", "beta")
    sec = cfg.section("spin")
    n = sec["n"]
    timings: dict = {}
    with _Timer(timings, "boson"):
        boson = separability_report(MultiKernelSpec(beta, sec["beta_prime"], Statistics.BOSON), n)
    with _Timer(timings, "fermion"):
        fermion = separability_report(MultiKernelSpec(beta, sec["beta_prime"], Statistics.FERMION,
                                                      epsilon_prime=sec["epsilon_prime"] / beta), n)
    report = {"boson": boson, "fermion": fermion}
    checks = {"boson_separable": boson["sigma_ratio"] < 1e-10, "fermion_entangling": fermion["sigma_ratio"] > 1e-3}
    idx = np.arange(len(boson["singular_values"]))
    tables = {"singular_values": Table({"index": idx, "boson": np.array(boson["singular_values"]),
                                        "fermion": np.array(fermion["singular_values"])}, "index",
                                       ("boson", "fermion"))}
    return ScenarioResult(report, checks, tables, timings)


def noether_check(cfg: ScenarioConfig) -> ScenarioResult:
    from . import noether as nt
    from .rel import kg_superposition

    k = constants_from(cfg)
    sec = cfg.section("noether")
    beta = cfg.get("kernel", "beta")
    grid = _rel_grid(cfg, "noether")
    t, y = grid.mesh()
    mass_sq = 1.0
    w1, w2 = math.sqrt(1.0 + mass_sq), math.sqrt(4.0 + mass_sq)
    phi = ScalarField(grid, np.cos(y - w1 * t) + 0.5 * np.cos(2.0 * y + w2 * t))
    edge = 10
    interior = (slice(edge, -edge),)
    timings: dict = {}
    report: dict = {}
    checks: dict = {}
    with _Timer(timings, "klein_gordon"):
        kg = nt.klein_gordon(mass_sq)
        ident = 0.0
        for xi in ((1.0, 0.0), (0.0, 1.0)):
            cur = nt.noether_current(kg, phi, xi)
            ident = max(ident, float(np.max(np.abs(cur.J - nt.textbook_current(kg, phi, xi)))))
            report[f"klein_gordon_xi_{xi}"] = nt.conservation_report(cur, "translation", mask=None)
            report[f"klein_gordon_xi_{xi}"]["max_div_J"] = float(np.max(np.abs(cur.divergence[interior])))
        report["textbook_identity"] = ident
    checks["textbook_identity"] = ident < 1e-12
    checks["klein_gordon_conserved"] = all(report[f"klein_gordon_xi_{xi}"]["max_div_J"] < 1e-6
                                           for xi in ((1.0, 0.0), (0.0, 1.0)))
    with _Timer(timings, "total_derivative"):
        td = nt.with_total_derivative(kg, 3, sec["coeff"])
        cur = nt.noether_current(td, phi, (1.0, 0.0))
        report["third_order_total_derivative_max_div_J"] = float(np.max(np.abs(cur.divergence[interior])))
    checks["third_order_conserved"] = report["third_order_total_derivative_max_div_J"] < 1e-6
    with _Timer(timings, "spin0_stress_tensor"):
        kappa = cfg.get("rel", "kappa")
        base = PhysicalConstants(k.hbar, kappa * k.hbar / k.c, k.c, k.e, k.omega)
        dpi = PhysicalConstants(k.hbar, k.hbar / k.c * math.sqrt(kappa ** 2 + 4.0 * beta ** 2),
                                k.c, k.e, k.omega)
        local = kg_superposition(grid, base)
        state = kg_superposition(grid, dpi, kappa=kappa, mass_sq=local.mass_sq)
        omega_tilde = -4.0 * beta ** 2
        T = nt.stress_tensor_spin0(state, beta, omega_tilde)
        closed = nt.stress_tensor_closed_form(state, beta, omega_tilde)
        divs = [float(np.max(np.abs(nt._divergence_first(T[:, n], grid, k.c, 6)[interior]))) for n in range(2)]
        spec = nt.dpi_spin0(dpi.m, beta, omega_tilde, dpi)
        odd = nt.odd_partials_vanish(spec, nt._state_fields(state))
        drift = nt.energy_drift(T, grid)
    report["spin0"] = {"max_div_T": divs, "energy_drift_per_time": drift,
                       "closed_form_deviation": float(np.max(np.abs(T - closed))),
                       "symmetry_deviation": float(np.max(np.abs(T[0, 1] - T[1, 0]))),
                       "odd_lambda_partials_vanish": odd, "truncation_order": 1}
    checks["spin0_stress_conserved"] = max(divs) < 1e-6
    checks["spin0_energy_drift"] = drift < 1e-6
    checks["odd_partials_vanish"] = odd
    tables = {"energy_density": Table({"t": t, "y": y, "T00": T[0, 0], "T02": T[0, 1]}, "y", ("T00",))}
    return ScenarioResult(report, checks, tables, timings)


def pair_creation_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    from .pair import Packet, PairCreationConfig, pair_creation_run, pair_report

    k = constants_from(cfg)
    s = cfg.section("pair")
    pc = PairCreationConfig(Packet(s["amplitude_plus"], s["center_plus"], s["width_plus"]),
                            Packet(s["amplitude_minus"], s["center_minus"], s["width_minus"]),
                            s["tau"], s["horizon"], s["y_extent"], s["nt"], s["ny"])
    timings: dict = {}
    with _Timer(timings, "pair"):
        state = pair_creation_run(pc, k)
    report = pair_report(state, pc)
    zero_field = s["amplitude_plus"] == 0 and s["amplitude_minus"] == 0
    if zero_field:
        checks = {"zero_field_no_creation": not np.any(state.P0) and not np.any(state.P1)}
    else:
        checks = {"P1_vanishes_asymptotically": report["P1_vanishes_asymptotically"],
                  "P0_opposite_sign_packets": report["P0_opposite_signs"]}
    tt, yy = np.meshgrid(state.t, state.y, indexing="ij")
    tables = {
        "pair": Table({"t": tt, "y": yy, "P0": state.P0, "P1": state.P1, "P2": state.P2}, "y", ("P0", "P1")),
        "switches": Table({"t": state.t, "f": state.f, "g": state.g}, "t", ("f", "g")),
    }
    return ScenarioResult(report, checks, tables, timings)


SCENARIOS: Dict[str, Callable[[ScenarioConfig], ScenarioResult]] = {
    "stationary-check": stationary_check,
    "evolve": evolve_scenario,
    "trajectories": trajectories_scenario,
    "kernel-compare": kernel_compare_scenario,
    "rel-check": rel_check,
    "spin-mass": spin_mass_scenario,
    "spin-stats": spin_stats_scenario,
    "noether-check": noether_check,
    "pair-creation": pair_creation_scenario,
}


# --------------------------------------------------------------------------
# artifacts

def _check_finite_result(result: ScenarioResult) -> None:
    for name, table in result.tables.items():
        for col, values in table.columns.items():
            arr = np.asarray(values)
            if arr.dtype.kind in "fc" and not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in {name}.{col}")

    def walk(obj, path):
        if isinstance(obj, dict):
            for kk, v in obj.items():
                walk(v, f"{path}.{kk}")
        elif isinstance(obj, (list, tuple)):
            for i, v in enumerate(obj):
                walk(v, f"{path}[{i}]")
        elif isinstance(obj, float) and not math.isfinite(obj):
            raise NumericError(f"non-finite value at {path}")
    walk(result.report, "report")


def _table_csv(table: Table) -> str:
    cols = {k: np.asarray(v).ravel() for k, v in table.columns.items()}
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    arrays = list(cols.values())
    for i in range(arrays[0].size):
        buf.write(",".join(fmt(a[i]) if a.dtype.kind == "f" else str(a[i]) for a in arrays) + "\n")
    return buf.getvalue()


def _plot_script(name: str, table: Table) -> str:
    names = list(table.columns)
    xi = names.index(table.x) + 1
    parts = [f"'../fields/{name}.csv' using {xi}:{names.index(col) + 1} with {table.style} title '{col}'" for col in table.y]
    return ("set datafile separator ','\n"
            "set key autotitle columnhead\n"
            f"set xlabel '{table.x}'\n"
            f"set title '{name}'\n"
            "plot " + ", \\\n     ".join(parts) + "\n")


def versions() -> dict:
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "qforce": __version__}


def write_artifacts(cfg: ScenarioConfig, result: ScenarioResult, out: Path, status: int) -> dict:
    files = []
    for name, table in result.tables.items():
        files.append(atomic_write_text(out / "fields" / f"{name}.csv", _table_csv(table)))
        files.append(atomic_write_text(out / "plots" / f"{name}.gp", _plot_script(name, table)))
    report = {"scenario": cfg.scenario, "seed": cfg.seed, "checks": result.checks,
              "passed": result.passed, "results": result.report}
    files.append(write_json(out / "report.json", report))
    manifest = {
        "scenario": cfg.scenario,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "versions": versions(),
        "timings_s": result.timings,
        "exit_status": status,
        "files": [{"path": str(p.relative_to(out)), "sha256": sha256_file(p), "bytes": p.stat().st_size}
                  for p in files],
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def execute(cfg: ScenarioConfig) -> ScenarioResult:
    """Run the configured scenario in memory, failing fast on non-finite numbers."""
    result = SCENARIOS[cfg.scenario](cfg)
    _check_finite_result(result)
    return result


def run_scenario(cfg: ScenarioConfig, out=None, log=None) -> int:
    """Run, write artifacts under ``out`` (default: the configured output) and return the exit status."""
    log = log if log is not None else sys.stderr
    out = Path(out) if out is not None else cfg.output
    start = time.perf_counter()
    try:
        result = execute(cfg)
    except (NumericError, FloatingPointError) as exc:
        print(f"qforce: numeric failure in {cfg.scenario}: {exc}", file=log)
        return EXIT_NUMERIC
    result.timings["total"] = time.perf_counter() - start
    status = EXIT_OK if result.passed else EXIT_ASSERTION
    write_artifacts(cfg, result, out, status)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=log)
    return status
