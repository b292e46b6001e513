from __future__ import annotations

"""
app.py – dicke-battery command line

Runs the charging, steady-state, discharge and figure scenarios of the Dicke
quantum battery and writes one CSV per scenario plus a JSON run summary.

Parameter precedence: built-in defaults < defaults.json < --config FILE <
command-line flags. Exit codes: 0 success, 2 validation error, 3 numerical
failure, 4 partial sweep failure.
"""

# ============================================================
# IMPORTS
# ============================================================
import functools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click
import numpy as np
import pandas as pd

from battery.asymptotics import power_analytic, power_bound_curve, tau90
from battery.discharge import charged_bare_state, emission_half_time, initial_coherence, run_discharge
from battery.errors import DickeBatteryError, NumericalError, ValidationError
from battery.lindblad import (
    BatteryObservables,
    FullGenerator,
    IntegratorConfig,
    SecularGenerator,
    ground_state,
    initial_dressed_state,
    integrate,
)
from battery.model import DerivedParams, ModelParams, build_hamiltonians, derive
from battery.spin_algebra import build_spin_operators, rotation_matrix
from battery.steady_ergotropy import (
    UNIFORM_LIMIT,
    ergotropy_asymptotic,
    ergotropy_exact,
    ergotropy_sweep,
    mixing_x,
    steady_state_matrix,
)
from config import MAX_WORKERS, load_params, logger as root_logger
from export import charging_frame, populations_frame, power_bound_frame, write_csv, write_summary

# ============================================================
# INITIAL SETUP
# ============================================================

logger = root_logger.getChild(__name__)

SCENARIOS = ("fig1", "fig2", "fig3", "fig4", "steady", "charge", "discharge", "sweep")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

# Figure settings. The fig2 scenario drives with Omega_R = 10 N gamma_minus.
FIG1_N = (2, 4)
FIG1_R = 0.1
FIG_THETA = 1.87
FIG_R = 10.0
FIG2_N = (8, 16, 32)
FIG2_RABI_PER_ATOM = 10.0
FIG2_TAU_END = 8.0
FIG3_R = (1.0, 5.0, 10.0)
FIG4_N = (2, 4, 8)

# ============================================================
# HELPERS
# ============================================================


def profile_time(func):
    """
    Decorator that logs the wall time of a scenario.

    Args:
        func: Function to profile.

    Returns:
        Wrapped function.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = func(*args, **kwargs)
        t1 = time.perf_counter()
        logger.info("[Profile] %s ran in %.4f seconds", func.__name__, t1 - t0)
        return result

    return wrapper


def _fail(msg: str) -> None:
    logger.error(msg)
    raise ValidationError(msg)


def resolve_params(config_path: Optional[str], overrides: Dict[str, Any]) -> ModelParams:
    """Layer command-line *overrides* on the (cached) parameter file.

    An explicit --delta or --rabi without --theta drops any ``theta`` coming
    from a file, so the flags always win.
    """
    values = dict(load_params(config_path))
    given = {k: v for k, v in overrides.items() if v is not None}
    if ("delta" in given or "rabi" in given) and "theta" not in given:
        values.pop("theta", None)
    values.update(given)
    return ModelParams.from_mapping(values)


def _parse_list(raw: Optional[str], cast: Callable[[str], Any], name: str) -> Optional[list]:
    if raw is None:
        return None
    try:
        items = [cast(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        msg = f"Could not parse --{name} {raw!r}: {exc}"
        logger.error(msg)
        raise ValidationError(msg) from exc
    if not items:
        _fail(f"--{name} is empty")
    return items


def default_charge_time(n_atoms: int, derived: DerivedParams) -> float:
    """Long enough for the secular dynamics to settle to its steady state."""
    rate = abs(derived.gamma_eff) or derived.rate_up
    return 40.0 / (n_atoms * rate)


# ============================================================
# SCENARIO SPEC
# ============================================================


@dataclass(frozen=True)
class SweepGrid:
    n_list: tuple[int, ...]
    theta_list: tuple[float, ...]
    r_list: tuple[float, ...]
    tau: float = 1.0

    def points(self) -> list[tuple[int, int, float, float]]:
        grid = []
        for n in self.n_list:
            for theta in self.theta_list:
                for r in self.r_list:
                    grid.append((len(grid), n, theta, r))
        return grid


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    params: ModelParams
    output_dir: Path
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    grid: Optional[SweepGrid] = None
    t_end: Optional[float] = None
    sample_every: Optional[float] = None
    frame: str = "drive_off"
    generator: str = "secular"
    x: Optional[float] = None
    n_list: Optional[tuple[int, ...]] = None
    theta_list: Optional[tuple[float, ...]] = None
    r_list: Optional[tuple[float, ...]] = None
    workers: int = MAX_WORKERS
    summary: bool = True

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            _fail(f"Unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        if self.scenario == "sweep" and (self.grid is None or not self.grid.points()):
            _fail("The sweep scenario needs a non-empty grid")
        if self.t_end is not None and self.t_end <= 0:
            _fail(f"--t-end must be positive, got {self.t_end}")
        if self.workers < 1:
            _fail(f"--workers must be >= 1, got {self.workers}")


@dataclass
class ScenarioOutcome:
    exit_code: int
    files: list[Path]
    summary: Dict[str, Any]


# ============================================================
# SCENARIOS
# ============================================================


def _trajectory_diagnostics(trajs) -> Dict[str, float]:
    return {
        "max_trace_error": max(t.max_trace_error for t in trajs),
        "max_hermiticity_error": max(t.max_hermiticity_error for t in trajs),
        "min_eigenvalue": min(t.min_eigenvalue for t in trajs),
    }


def _charge(params: ModelParams, spec: ScenarioSpec, t_end: Optional[float] = None, sample_every=None):
    ops = build_spin_operators(params.n_atoms)
    derived = derive(params)
    rotation = rotation_matrix(ops, derived.theta)
    t_end = t_end or spec.t_end or default_charge_time(params.n_atoms, derived)
    sample_every = sample_every or spec.sample_every or t_end / 1000
    if spec.generator == "full":
        if not (params.gamma0 == params.gamma_plus == params.gamma_minus):
            logger.warning("Full master equation uses a single rate; taking gamma = gamma_minus")
        h1 = build_hamiltonians(params, ops).h1
        generator = FullGenerator(h1, ops, params.gamma_minus)
        rho0 = ground_state(ops)
    else:
        generator = SecularGenerator(derived, ops)
        rho0 = initial_dressed_state(ops, rotation)
    observables = BatteryObservables(ops, rotation)
    traj = integrate(rho0, generator, t_end, spec.integrator, sample_every, observables, keep_states=False)
    return traj, derived


def _run_charge(spec: ScenarioSpec) -> ScenarioOutcome:
    traj, derived = _charge(spec.params, spec)
    df = charging_frame(traj, spec.params.n_atoms, derived)
    path = write_csv(df, spec.output_dir / "charge.csv")
    report = ergotropy_exact(spec.params.n_atoms, derived.x, derived.theta, derived.ratio_r)
    summary = {
        "derived": derived.as_dict(),
        "generator": spec.generator,
        "final_energy_per_atom": float(traj.energy_per_atom[-1]),
        "steady_energy_per_atom": report.energy_per_atom,
        "invariants": _trajectory_diagnostics([traj]),
    }
    return ScenarioOutcome(EXIT_OK, [path], summary)


def _run_steady(spec: ScenarioSpec) -> ScenarioOutcome:
    p = spec.params
    if spec.x is not None:
        theta = float(np.arctan2(p.rabi, p.delta))
        report = ergotropy_exact(p.n_atoms, spec.x, theta)
        derived_dict = {"theta": theta, "x": spec.x}
    else:
        derived = derive(p)
        report = ergotropy_exact(p.n_atoms, derived.x, derived.theta, derived.ratio_r)
        derived_dict = derived.as_dict()
    path = write_csv(populations_frame(report), spec.output_dir / "steady.csv")
    asym = np.nan if abs(report.x - 1.0) <= UNIFORM_LIMIT else ergotropy_asymptotic(report.x, report.theta, report.r)
    summary = {
        "derived": derived_dict,
        "energy_ss_in_omega0": report.energy_ss,
        "passive_energy_in_omega0": report.passive_energy,
        "ergotropy_in_omega0": report.ergotropy,
        "ergotropy_per_atom_in_omega0": report.ergotropy_per_atom,
        "ergotropy_per_atom_closed_in_omega0": report.ergotropy_per_atom_closed,
        "ergotropy_per_atom_asymptotic_in_omega0": asym,
        "energy_per_atom_in_omega0": report.energy_per_atom,
    }
    return ScenarioOutcome(EXIT_OK, [path], summary)


def _discharge(params: ModelParams, spec: ScenarioSpec):
    derived = derive(params)
    rho0, rotation = charged_bare_state(params.n_atoms, derived)
    ops = build_spin_operators(params.n_atoms)
    h1 = build_hamiltonians(params, ops).h1 if spec.frame == "driven" else None
    report = ergotropy_exact(params.n_atoms, derived.x, derived.theta, derived.ratio_r)
    result = run_discharge(
        rho0,
        params.gamma0,
        spec.frame,
        spec.t_end,
        spec.integrator,
        h1=h1,
        sample_every=spec.sample_every,
        omega0=params.omega0,
        stored_energy_reference=params.omega0 * (report.energy_ss + params.n_atoms / 2),
    )
    dressed = steady_state_matrix(params.n_atoms, derived.x)
    summary = {
        "n_atoms": params.n_atoms,
        "coherent_fraction": result.coherent_fraction,
        "stored_energy_initial_in_omega0": result.stored_energy_initial / params.omega0,
        "emission_half_time": emission_half_time(result),
        "energy_balance_margin_in_omega0": result.energy_balance_margin / params.omega0,
        "initial_coherence": initial_coherence(dressed, derived, ops, rotation),
        "invariants": _trajectory_diagnostics([result.trajectory]),
    }
    return result, summary


def _run_discharge(spec: ScenarioSpec) -> ScenarioOutcome:
    result, summary = _discharge(spec.params, spec)
    df = result.to_frame()
    df.insert(0, "n_atoms", result.n_atoms)
    path = write_csv(df, spec.output_dir / "discharge.csv")
    return ScenarioOutcome(EXIT_OK, [path], summary)


def _run_fig1(spec: ScenarioSpec) -> ScenarioOutcome:
    n_list = spec.n_list or FIG1_N
    r_list = spec.r_list or (FIG1_R,)
    thetas = np.asarray(spec.theta_list) if spec.theta_list else np.linspace(0.02, np.pi - 0.02, 157)
    frames = []
    for r in r_list:
        for n in n_list:
            df = ergotropy_sweep(n, r, thetas)
            df.insert(1, "r", r)
            frames.append(df)
    path = write_csv(pd.concat(frames, ignore_index=True), spec.output_dir / "fig1.csv")
    return ScenarioOutcome(EXIT_OK, [path], {"n_list": list(n_list), "r_list": list(r_list)})


def _fig_params(n: int, gamma_ratio: float = FIG_R, theta: float = FIG_THETA) -> ModelParams:
    rabi = FIG2_RABI_PER_ATOM * n
    return ModelParams(
        n_atoms=n,
        delta=rabi * np.cos(theta) / np.sin(theta),
        rabi=rabi,
        gamma0=1.0,
        gamma_plus=gamma_ratio,
        gamma_minus=1.0,
    )


def _run_fig2(spec: ScenarioSpec) -> ScenarioOutcome:
    frames, trajs, deviations = [], [], {}
    for n in spec.n_list or FIG2_N:
        params = _fig_params(n)
        derived = derive(params)
        t_end = 2 * FIG2_TAU_END / (n * derived.gamma_eff)
        traj, derived = _charge(params, spec, t_end=t_end, sample_every=t_end / 2000)
        df = charging_frame(traj, n, derived)
        deviations[str(n)] = float(
            np.max(np.abs(df["energy_per_atom_in_omega0"] - df["energy_per_atom_analytic_in_omega0"]))
        )
        frames.append(df)
        trajs.append(traj)
    path = write_csv(pd.concat(frames, ignore_index=True), spec.output_dir / "fig2.csv")
    summary = {"max_deviation_from_analytic": deviations, "invariants": _trajectory_diagnostics(trajs)}
    return ScenarioOutcome(EXIT_OK, [path], summary)


def _run_fig3(spec: ScenarioSpec) -> ScenarioOutcome:
    frames = []
    for r in spec.r_list or FIG3_R:
        theta_edge = 2 * np.arctan(r**0.25)
        thetas = np.linspace(0.05, theta_edge, 120)
        frames.append(power_bound_frame(r, power_bound_curve(r, thetas)))
    df = pd.concat(frames, ignore_index=True)
    path = write_csv(df, spec.output_dir / "fig3.csv")
    summary = {"tau90_range": [float(df["tau90"].min()), float(df["tau90"].max())]}
    return ScenarioOutcome(EXIT_OK, [path], summary)


def _run_fig4(spec: ScenarioSpec) -> ScenarioOutcome:
    frames, per_n, trajs = [], {}, []
    for n in spec.n_list or FIG4_N:
        result, summary = _discharge(_fig_params(n), spec)
        df = result.to_frame()
        df.insert(0, "n_atoms", n)
        frames.append(df)
        trajs.append(result.trajectory)
        per_n[str(n)] = {k: v for k, v in summary.items() if k != "invariants"}
    path = write_csv(pd.concat(frames, ignore_index=True), spec.output_dir / "fig4.csv")
    return ScenarioOutcome(EXIT_OK, [path], {"per_n": per_n, "invariants": _trajectory_diagnostics(trajs)})


# ------------------------------------------------------------
# Sweep
# ------------------------------------------------------------


def _sweep_point(task: tuple[int, int, float, float, Dict[str, float], float]) -> Dict[str, Any]:
    """Evaluate one grid point; failures become an error row."""
    index, n, theta, r, base, tau = task
    row: Dict[str, Any] = {"grid_index": index, "n_atoms": n, "theta": theta, "r": r}
    try:
        params = ModelParams.from_theta(
            n_atoms=n,
            theta=theta,
            omega_p=base["omega_p_per_atom"] * n,
            gamma0=base["gamma0"],
            gamma_plus=r * base["gamma_minus"],
            gamma_minus=base["gamma_minus"],
            omega0=base["omega0"],
        )
        derived = derive(params)
        x = mixing_x(r, theta)
        report = ergotropy_exact(n, x, theta, r)
        asym = np.nan if abs(x - 1.0) <= UNIFORM_LIMIT else ergotropy_asymptotic(x, theta, r)
        power = np.nan
        if derived.gamma_eff > 0:
            t = 2 * tau / (n * derived.gamma_eff)
            power = float(power_analytic(t, n, derived)) / n**2
        row.update(
            x=x,
            gamma_eff_in_gamma_minus=derived.gamma_eff,
            energy_per_atom_in_omega0=report.energy_per_atom,
            ergotropy_per_atom_in_omega0=report.ergotropy_per_atom,
            ergotropy_per_atom_asymptotic_in_omega0=asym,
            tau90=tau90(theta),
            power_at_tau_per_n2_in_omega0_gamma_minus=power,
            status="ok",
            error="",
        )
    except DickeBatteryError as exc:
        logger.warning("Sweep point %d (N=%d, theta=%g, r=%g) failed: %s", index, n, theta, r, exc)
        row.update(status="error", error=str(exc))
    return row


SWEEP_COLUMNS = [
    "grid_index",
    "n_atoms",
    "theta",
    "r",
    "x",
    "gamma_eff_in_gamma_minus",
    "energy_per_atom_in_omega0",
    "ergotropy_per_atom_in_omega0",
    "ergotropy_per_atom_asymptotic_in_omega0",
    "tau90",
    "power_at_tau_per_n2_in_omega0_gamma_minus",
    "status",
    "error",
]


def run_sweep(spec: ScenarioSpec) -> ScenarioOutcome:
    """One row per grid point, computed in a worker pool and sorted by grid index.

    The resolved drive fixes Omega_P per atom, so every point is pumped at
    Omega_P proportional to its own N.
    """
    p = spec.params
    base = {
        "omega_p_per_atom": float(np.hypot(p.delta, p.rabi)) / p.n_atoms,
        "gamma0": p.gamma0,
        "gamma_minus": p.gamma_minus,
        "omega0": p.omega0,
    }
    tasks = [(i, n, theta, r, base, spec.grid.tau) for i, n, theta, r in spec.grid.points()]
    workers = min(spec.workers, len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(task) for task in tasks]
    df = pd.DataFrame(rows).reindex(columns=SWEEP_COLUMNS).sort_values("grid_index", kind="stable")
    path = write_csv(df, spec.output_dir / "sweep.csv")
    failed = int((df["status"] != "ok").sum())
    code = EXIT_PARTIAL if failed else EXIT_OK
    summary = {"grid_points": len(tasks), "failed_points": failed, "workers": workers}
    return ScenarioOutcome(code, [path], summary)


RUNNERS: Dict[str, Callable[[ScenarioSpec], ScenarioOutcome]] = {
    "fig1": _run_fig1,
    "fig2": _run_fig2,
    "fig3": _run_fig3,
    "fig4": _run_fig4,
    "steady": _run_steady,
    "charge": _run_charge,
    "discharge": _run_discharge,
    "sweep": run_sweep,
}


@profile_time
def run_scenario(spec: ScenarioSpec) -> ScenarioOutcome:
    """Run *spec* and write its CSV and (optionally) the JSON run summary."""
    logger.info("Running scenario %s into %s", spec.scenario, spec.output_dir)
    t0 = time.perf_counter()
    outcome = RUNNERS[spec.scenario](spec)
    if spec.summary:
        summary = {
            "scenario": spec.scenario,
            "parameters": spec.params.as_dict(),
            "wall_time_s": time.perf_counter() - t0,
            "files": [str(f) for f in outcome.files],
            **outcome.summary,
        }
        outcome.files.append(write_summary(summary, spec.output_dir / f"{spec.scenario}_summary.json"))
    return outcome


# ============================================================
# COMMAND LINE
# ============================================================


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("scenario", type=click.Choice(SCENARIOS))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON parameter file.")
@click.option("--n-atoms", "--n", "n_atoms", type=int, help="Number of atoms N.")
@click.option("--theta", type=float, help="Mixing angle; keeps Omega_P fixed.")
@click.option("--delta", type=float, help="Detuning omega0 - omega_P.")
@click.option("--rabi", type=float, help="Rabi frequency Omega_R.")
@click.option("--gamma0", type=float)
@click.option("--gamma-plus", type=float)
@click.option("--gamma-minus", type=float)
@click.option("--omega0", type=float)
@click.option("--x", "x_value", type=float, help="Fix x directly (steady scenario).")
@click.option("--t-end", type=float, help="Integration time in units of 1/gamma_minus.")
@click.option("--sample-every", type=float, help="Sampling interval.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="results", show_default=True)
@click.option("--frame", type=click.Choice(["drive_off", "driven"]), default="drive_off", show_default=True)
@click.option("--generator", type=click.Choice(["secular", "full"]), default="secular", show_default=True)
@click.option("--scheme", type=click.Choice(["rk45_adaptive", "rk4_fixed"]), default="rk45_adaptive", show_default=True)
@click.option("--rel-tol", type=float, default=1e-8, show_default=True)
@click.option("--abs-tol", type=float, default=1e-10, show_default=True)
@click.option("--max-step", type=float, default=float("inf"))
@click.option("--n-list", help="Comma-separated N values.")
@click.option("--theta-list", help="Comma-separated theta values.")
@click.option("--r-list", help="Comma-separated gamma_plus/gamma_minus values.")
@click.option("--tau", type=float, default=1.0, show_default=True, help="tau = N Gamma t/2 for the sweep power column.")
@click.option("--workers", type=int, default=MAX_WORKERS, show_default=True)
@click.option("--summary/--no-summary", default=True, show_default=True)
def cli(scenario: str, config_path, n_atoms, theta, delta, rabi, gamma0, gamma_plus, gamma_minus, omega0,
        x_value, t_end, sample_every, out_dir, frame, generator, scheme, rel_tol, abs_tol, max_step,
        n_list, theta_list, r_list, tau, workers, summary) -> None:
    """Run a Dicke quantum battery SCENARIO and write CSV results."""
    try:
        params = resolve_params(
            config_path,
            {
                "n_atoms": n_atoms,
                "theta": theta,
                "delta": delta,
                "rabi": rabi,
                "gamma0": gamma0,
                "gamma_plus": gamma_plus,
                "gamma_minus": gamma_minus,
                "omega0": omega0,
            },
        )
        ns = _parse_list(n_list, int, "n-list")
        thetas = _parse_list(theta_list, float, "theta-list")
        rs = _parse_list(r_list, float, "r-list")
        grid = None
        if scenario == "sweep":
            grid = SweepGrid(
                n_list=tuple(ns or [params.n_atoms]),
                theta_list=tuple(thetas or [float(np.arctan2(params.rabi, params.delta))]),
                r_list=tuple(rs or [params.gamma_plus / params.gamma_minus]),
                tau=tau,
            )
        spec = ScenarioSpec(
            scenario=scenario,
            params=params,
            output_dir=Path(out_dir),
            integrator=IntegratorConfig(rel_tol=rel_tol, abs_tol=abs_tol, max_step=max_step, scheme_tag=scheme),
            grid=grid,
            t_end=t_end,
            sample_every=sample_every,
            frame=frame,
            generator=generator,
            x=x_value,
            n_list=tuple(ns) if ns else None,
            theta_list=tuple(thetas) if thetas else None,
            r_list=tuple(rs) if rs else None,
            workers=workers,
            summary=summary,
        )
        outcome = run_scenario(spec)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(EXIT_VALIDATION) from exc
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        raise SystemExit(EXIT_NUMERICAL) from exc
    for path in outcome.files:
        click.echo(str(path))
    if outcome.exit_code:
        click.echo("some sweep points failed; see the error column", err=True)
        raise SystemExit(outcome.exit_code)


if __name__ == "__main__":
    cli()
