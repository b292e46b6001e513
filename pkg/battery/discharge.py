from __future__ import annotations

"""Superradiant discharge of the charged battery.

Once charging stops the battery decays collectively at rate gamma0. The
coherently emitted power is gamma0 omega0 |<J_+>|^2 and its running integral
W(t) is the energy carried off by the coherent part of the field.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from battery.errors import ValidationError
from battery.lindblad import (
    Basis,
    BatteryObservables,
    DensityMatrix,
    FullGenerator,
    IntegratorConfig,
    Trajectory,
    expectation,
    integrate,
    to_bare,
)
from battery.model import DerivedParams
from battery.spin_algebra import RotationMatrix, SpinOperators, build_spin_operators, rotation_matrix
from battery.steady_ergotropy import steady_state_matrix
from config import logger as root_logger

logger = root_logger.getChild(__name__)

Frame = Literal["drive_off", "driven"]

# Default cadence is this fraction of the superradiant time 1/(N gamma0).
SAMPLE_FRACTION = 0.01


def _fail(msg: str) -> None:
    logger.error(msg)
    raise ValidationError(msg)


# ---------------------------------------------------------------------------
# Initial state
# ---------------------------------------------------------------------------


def charged_bare_state(n_atoms: int, derived: DerivedParams) -> tuple[DensityMatrix, RotationMatrix]:
    """Steady state of the charging process, rotated to the bare basis."""
    ops = build_spin_operators(n_atoms)
    rotation = rotation_matrix(ops, derived.theta)
    return steady_state_matrix(n_atoms, derived.x, Basis.BARE, rotation), rotation


def initial_coherence(
    rho_ss: DensityMatrix,
    derived: DerivedParams,
    ops: SpinOperators,
    rotation: RotationMatrix | None = None,
) -> complex:
    """<J_+> of a dressed state via Tr[rho (cos th J_x' - sin th J_z' + i J_y')].

    When ``rotation`` is given the value is cross-checked against the bare
    basis trace.
    """
    if rho_ss.basis_tag is not Basis.DRESSED:
        _fail("initial_coherence expects a dressed-basis state")
    off_diag = np.max(np.abs(rho_ss.rho - np.diag(np.diag(rho_ss.rho))))
    if off_diag > 1e-10:
        logger.warning("Steady state has off-diagonal weight %.3e in the dressed basis", off_diag)
    c, s = np.cos(derived.theta), np.sin(derived.theta)
    value = expectation(rho_ss, c * ops.jx - s * ops.jz + 1j * ops.jy)
    if rotation is not None:
        bare = expectation(to_bare(rho_ss, rotation), ops.jp)
        if abs(bare - value) > 1e-10 * max(1.0, ops.j):
            logger.warning("Dressed and bare <J_+> differ: %s vs %s", value, bare)
    return value


# ---------------------------------------------------------------------------
# Discharge
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DischargeResult:
    """Energies carry the factor omega0, times are in 1/gamma_minus.

    ``to_frame`` divides omega0 back out so the CSV columns match their
    unit suffixes.
    """

    trajectory: Trajectory
    n_atoms: int
    gamma0: float
    frame: str
    energy: np.ndarray
    coherent_power: np.ndarray
    coherent_energy: np.ndarray
    stored_energy_initial: float
    coherent_fraction: float
    energy_variance_series: np.ndarray
    stored_energy_reference: float = float("nan")
    omega0: float = 1.0

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def energy_balance_margin(self) -> float:
        """min_t [E(0) - E(t) - W(t)]; non-negative without a drive."""
        return float(np.min(self.stored_energy_initial - self.energy - self.coherent_energy))

    def to_frame(self) -> pd.DataFrame:
        n, w = self.n_atoms, self.omega0
        return pd.DataFrame(
            {
                "t_times_n_gamma0": self.times * n * self.gamma0,
                "energy_per_atom_in_omega0": self.energy / (n * w),
                "coherent_power_in_omega0_gamma_minus": self.coherent_power / w,
                "coherent_energy_in_omega0": self.coherent_energy / w,
                "stored_energy_reference_in_omega0": self.stored_energy_reference / w,
                "energy_variance_in_omega0_sq": self.energy_variance_series / w**2,
            }
        )


def run_discharge(
    rho0: DensityMatrix,
    gamma0: float,
    frame_tag: Frame = "drive_off",
    t_end: float | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    h1: np.ndarray | None = None,
    rotation: RotationMatrix | None = None,
    frame_shift: float = 0.0,
    sample_every: float | None = None,
    omega0: float = 1.0,
    stored_energy_reference: float = float("nan"),
) -> DischargeResult:
    """Integrate collective decay at rate ``gamma0`` from ``rho0``.

    ``drive_off`` uses H = 0 in the frame rotating at omega0; ``driven``
    keeps the pump Hamiltonian ``h1``. ``frame_shift`` adds delta J_z, which
    only rotates the phase of <J_+>.
    """
    if gamma0 <= 0:
        _fail(f"gamma0 must be > 0 for a discharge, got {gamma0}")
    if frame_tag not in ("drive_off", "driven"):
        _fail(f"Unknown frame {frame_tag!r}; expected 'drive_off' or 'driven'")
    if frame_tag == "driven" and h1 is None:
        _fail("The driven frame needs the pump Hamiltonian h1")
    if rho0.basis_tag is Basis.DRESSED:
        if rotation is None:
            _fail("A rotation is required to discharge a dressed-basis state")
        rho0 = to_bare(rho0, rotation)

    n = rho0.dim - 1
    ops = build_spin_operators(n)
    if t_end is None:
        t_end = 12.0 / (n * gamma0) + 4.0 / gamma0
    if sample_every is None:
        sample_every = SAMPLE_FRACTION / (n * gamma0)

    generator = FullGenerator(h1 if frame_tag == "driven" else None, ops, gamma0, frame_shift)
    traj = integrate(
        rho0,
        generator,
        t_end,
        cfg,
        sample_every=sample_every,
        observables=BatteryObservables(ops),
        keep_states=False,
    )

    energy = omega0 * n * traj.energy_per_atom
    power = gamma0 * omega0 * np.abs(traj.coherence_jp) ** 2
    emitted = cumulative_trapezoid(power, traj.times, initial=0.0)
    e0 = float(energy[0])
    fraction = float(emitted[-1] / e0) if e0 > 0 else 0.0
    result = DischargeResult(
        trajectory=traj,
        n_atoms=n,
        gamma0=gamma0,
        frame=frame_tag,
        energy=energy,
        coherent_power=power,
        coherent_energy=emitted,
        stored_energy_initial=e0,
        coherent_fraction=fraction,
        energy_variance_series=omega0**2 * traj.energy_variance,
        stored_energy_reference=stored_energy_reference,
        omega0=omega0,
    )
    if frame_tag == "drive_off" and result.energy_balance_margin < -1e-6 * n * omega0:
        logger.warning("Energy balance violated by %.3e for N=%d", -result.energy_balance_margin, n)
    logger.info("Discharge N=%d (%s): coherent fraction %.4f", n, frame_tag, fraction)
    return result


def emission_half_time(result: DischargeResult) -> float:
    """First time at which E(t) falls to E(0)/2, by linear interpolation; NaN if never."""
    half = result.stored_energy_initial / 2
    below = np.nonzero(result.energy <= half)[0]
    if result.stored_energy_initial <= 0 or below.size == 0:
        logger.warning("Energy never falls to half its initial value within the run")
        return float("nan")
    i = int(below[0])
    if i == 0:
        return 0.0
    t0, t1 = result.times[i - 1], result.times[i]
    e0, e1 = result.energy[i - 1], result.energy[i]
    return float(t0 + (e0 - half) * (t1 - t0) / (e0 - e1))


def variance_scaling(
    n_list: list[int],
    derived: DerivedParams,
    gamma0: float = 1.0,
    cfg: IntegratorConfig | None = None,
    omega0: float = 1.0,
) -> float:
    """Exponent of the power law fitted to the peak energy variance against N."""
    if len(n_list) < 4:
        _fail(f"variance_scaling needs at least four values of N, got {len(n_list)}")
    peaks = []
    for n in n_list:
        rho0, _ = charged_bare_state(n, derived)
        result = run_discharge(rho0, gamma0, "drive_off", 10.0 / (n * gamma0), cfg, omega0=omega0)
        peaks.append(float(np.max(result.energy_variance_series)))
        logger.debug("Peak energy variance %.4g at N=%d", peaks[-1], n)
    slope, _ = np.polyfit(np.log(n_list), np.log(peaks), 1)
    logger.info("Energy variance exponent %.3f over N=%s", slope, list(n_list))
    return float(slope)


__all__ = [
    "SAMPLE_FRACTION",
    "charged_bare_state",
    "initial_coherence",
    "DischargeResult",
    "run_discharge",
    "emission_half_time",
    "variance_scaling",
]
