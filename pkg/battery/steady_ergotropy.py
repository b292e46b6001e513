from __future__ import annotations

"""Steady state of the secular master equation and its ergotropy.

In the dressed basis the steady state is diagonal with populations
proportional to x^(N/2 - m). Energies are returned in units of omega0 and
measured from H0 = omega0 J_z, so the bare ground state has energy -N/2.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from battery.errors import DegenerateAngle, RangeError, ValidationError
from battery.lindblad import Basis, DensityMatrix, to_bare
from battery.model import DerivedParams
from battery.spin_algebra import RotationMatrix
from config import logger as root_logger

logger = root_logger.getChild(__name__)

# Below this |x - 1| the closed form is replaced by its uniform-limit expansion.
UNIFORM_LIMIT = 1e-6


def _fail(msg: str, exc_type: type[Exception] = ValidationError) -> None:
    logger.error(msg)
    raise exc_type(msg)


def _check_n(n_atoms: int) -> int:
    if isinstance(n_atoms, bool) or int(n_atoms) != n_atoms or n_atoms < 1:
        _fail(f"n_atoms must be a positive integer, got {n_atoms!r}")
    return int(n_atoms)


def _check_x(x: float) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        _fail(f"x must be positive and finite, got {x}", RangeError)
    return x


def mixing_x(r: float, theta: float) -> float:
    """x = r cot^4(theta/2)."""
    if not 0.0 < theta < np.pi:
        _fail(f"theta={theta} is degenerate; x = r cot^4(theta/2) is singular", DegenerateAngle)
    if r <= 0:
        _fail(f"r must be positive, got {r}")
    return float(r * (np.cos(theta / 2) / np.sin(theta / 2)) ** 4)


# ---------------------------------------------------------------------------
# Steady state
# ---------------------------------------------------------------------------


def steady_populations(n_atoms: int, x: float) -> np.ndarray:
    """Detailed-balance populations, index k <-> m = k - N/2.

    Computed in log space; the ratio between consecutive levels is 1/x.

    Raises:
        RangeError: if x is not positive and finite, or the log-weights
            overflow.
    """
    n = _check_n(n_atoms)
    x = _check_x(x)
    k = np.arange(n + 1)
    log_w = (n - k) * np.log(x)
    if not np.all(np.isfinite(log_w)):
        _fail(f"x^N is not representable for N={n}, x={x}", RangeError)
    pops = np.exp(log_w - logsumexp(log_w))
    return pops


def steady_energy(n_atoms: int, x: float, theta: float) -> float:
    """Tr(rho_ss H0) = cos(theta) sum_m m p_m, in units of omega0."""
    pops = steady_populations(n_atoms, x)
    m = np.arange(len(pops)) - n_atoms / 2
    return float(np.cos(theta) * np.dot(m, pops))


def steady_state_matrix(
    n_atoms: int,
    x: float,
    basis: Basis | str = Basis.DRESSED,
    rotation: RotationMatrix | None = None,
) -> DensityMatrix:
    """Steady state as a diagonal dressed-basis matrix, or rotated to the bare basis."""
    state = DensityMatrix(Basis.DRESSED, np.diag(steady_populations(n_atoms, x)).astype(complex))
    if Basis(basis) is Basis.BARE:
        if rotation is None:
            _fail("A rotation is required to express the steady state in the bare basis")
        return to_bare(state, rotation)
    return state


def detailed_balance_residual(populations: np.ndarray, derived: DerivedParams) -> float:
    """max_k |A p_k - B p_(k+1)| / (A + B) with the secular ladder rates A (up) and B (down)."""
    p = np.asarray(populations, dtype=float)
    up, down = derived.rate_up, derived.rate_down
    return float(np.max(np.abs(up * p[:-1] - down * p[1:])) / (up + down)) if len(p) > 1 else 0.0


# ---------------------------------------------------------------------------
# Ergotropy
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ErgotropyReport:
    n_atoms: int
    x: float
    theta: float
    r: float
    populations: np.ndarray
    energy_ss: float
    passive_energy: float
    ergotropy: float
    ergotropy_per_atom_closed: float

    @property
    def ergotropy_per_atom(self) -> float:
        return self.ergotropy / self.n_atoms

    @property
    def energy_per_atom(self) -> float:
        """Charge (Tr rho H0 + N/2)/N, measured from the bare ground state."""
        return (self.energy_ss + self.n_atoms / 2) / self.n_atoms


def _closed_form_factor(n: int, x: float) -> float:
    """[N(x-1)(1+x^(N+1)) + 2x(1-x^N)] / [(x-1)(1-x^(N+1))], overflow-safe.

    Equals twice the steady-state mean of m.
    """
    eps = x - 1.0
    if abs(eps) <= UNIFORM_LIMIT:
        return -eps * n * (n + 2) / 6.0
    if x > 1.0:
        q = 1.0 / x
        return (n * (1.0 + q ** (n + 1)) + 2.0 * (q**n - 1.0) / eps) / (q ** (n + 1) - 1.0)
    return (n * eps * (1.0 + x ** (n + 1)) + 2.0 * x * (1.0 - x**n)) / (eps * (1.0 - x ** (n + 1)))


def ergotropy_closed_form(n_atoms: int, x: float, theta: float) -> float:
    """Per-atom ergotropy from the closed-form sum, in units of omega0.

    The + sign branch applies for x < 1 and the - branch for x > 1.
    """
    n = _check_n(n_atoms)
    x = _check_x(x)
    sign = 1.0 if x < 1.0 else -1.0
    return float((np.cos(theta) + sign) * _closed_form_factor(n, x) / (2 * n))


def ergotropy_exact(n_atoms: int, x: float, theta: float, r: float | None = None) -> ErgotropyReport:
    """Ergotropy of the steady state by explicit passive-state construction.

    The passive state gives the largest population to the lowest H0 level.
    The closed form is evaluated alongside and must agree away from x = 1.
    """
    n = _check_n(n_atoms)
    pops = steady_populations(n, x)
    m = np.arange(n + 1) - n / 2
    energy_ss = float(np.cos(theta) * np.dot(m, pops))
    passive = np.sort(pops, kind="stable")[::-1]
    passive_energy = float(np.dot(m, passive))
    ergotropy = max(0.0, energy_ss - passive_energy)
    closed = ergotropy_closed_form(n, x, theta)

    gap = abs(closed - ergotropy / n)
    if gap > 1e-8 * max(1.0, abs(closed)):
        logger.warning("Closed-form ergotropy differs from passive-state value by %.3e (N=%d, x=%g)", gap, n, x)
    if r is None:
        r = float(x * np.tan(theta / 2) ** 4)
    return ErgotropyReport(
        n_atoms=n,
        x=float(x),
        theta=float(theta),
        r=float(r),
        populations=pops,
        energy_ss=energy_ss,
        passive_energy=passive_energy,
        ergotropy=ergotropy,
        ergotropy_per_atom_closed=closed,
    )


def ergotropy_asymptotic(x: float, theta: float, r: float) -> float:
    """Large-N per-atom ergotropy: cos^2(theta/2) for x < 1, sin^2(theta/2) for x > 1.

    The trigonometric value is cross-checked against 1/(1 + sqrt(r/x)) or
    1/(1 + sqrt(x/r)); ``x``, ``theta`` and ``r`` must be consistent.
    """
    x = _check_x(x)
    if x == 1.0:
        _fail("ergotropy_asymptotic is undefined at the branch point x = 1")
    if r <= 0:
        _fail(f"r must be positive, got {r}")
    if x < 1.0:
        trig = np.cos(theta / 2) ** 2
        rates = 1.0 / (1.0 + np.sqrt(r / x))
    else:
        trig = np.sin(theta / 2) ** 2
        rates = 1.0 / (1.0 + np.sqrt(x / r))
    if abs(trig - rates) > 1e-8:
        _fail(f"Inconsistent (x={x}, theta={theta}, r={r}): {trig} vs {rates}")
    return float(trig)


def ergotropy_sweep(n_atoms: int, r: float, thetas: np.ndarray) -> pd.DataFrame:
    """Per-atom ergotropy along a theta grid at fixed r.

    The asymptotic column is NaN where |x - 1| <= 1e-6.
    """
    rows = []
    for theta in np.asarray(thetas, dtype=float):
        x = mixing_x(r, theta)
        report = ergotropy_exact(n_atoms, x, theta, r)
        asym = np.nan if abs(x - 1.0) <= UNIFORM_LIMIT else ergotropy_asymptotic(x, theta, r)
        rows.append(
            {
                "n_atoms": n_atoms,
                "theta": theta,
                "x": x,
                "ergotropy_per_atom_exact_in_omega0": report.ergotropy_per_atom,
                "ergotropy_per_atom_closed_in_omega0": report.ergotropy_per_atom_closed,
                "ergotropy_per_atom_asymptotic_in_omega0": asym,
            }
        )
    logger.debug("Ergotropy sweep N=%d r=%g over %d angles", n_atoms, r, len(rows))
    return pd.DataFrame(rows)


__all__ = [
    "UNIFORM_LIMIT",
    "mixing_x",
    "steady_populations",
    "steady_energy",
    "steady_state_matrix",
    "detailed_balance_residual",
    "ErgotropyReport",
    "ergotropy_closed_form",
    "ergotropy_exact",
    "ergotropy_asymptotic",
    "ergotropy_sweep",
]
