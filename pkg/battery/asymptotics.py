from __future__ import annotations

"""Large-N analytic charging curve and the power/charge tradeoff.

Time is in units of 1/gamma_minus and energies per atom in units of omega0.
The charging curve uses tau = N Gamma t / 2 and phi0 = atanh(cos theta).
The mean-field solution keeps the exact coefficients a, b, c so that its
gap to the large-N forms can be measured.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from battery.errors import BracketFailure, ValidationError
from battery.model import DerivedParams
from config import logger as root_logger

logger = root_logger.getChild(__name__)

TAU90_BRACKET = (0.0, 100.0)
TAU90_FRACTION = 0.9


def _fail(msg: str) -> None:
    logger.error(msg)
    raise ValidationError(msg)


def _check_theta_open(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta < np.pi:
        _fail(f"theta must lie strictly between 0 and pi, got {theta}")
    return theta


# ---------------------------------------------------------------------------
# Charging curve
# ---------------------------------------------------------------------------


def _phase(t: np.ndarray | float, n_atoms: int, derived: DerivedParams) -> np.ndarray:
    return n_atoms * derived.gamma_eff * np.asarray(t, dtype=float) / 2 + derived.phi0


def energy_analytic(t: np.ndarray | float, n_atoms: int, derived: DerivedParams) -> np.ndarray:
    """E(t)/N = 1/2 - 1/2 cos(th) tanh(u) - 1/2 sin(th) cos(Omega_P t)/cosh(u), u = N Gamma t/2 + phi0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        _fail("energy_analytic needs t >= 0")
    u = _phase(t, n_atoms, derived)
    c, s = np.cos(derived.theta), np.sin(derived.theta)
    return 0.5 - 0.5 * c * np.tanh(u) - 0.5 * s * np.cos(derived.omega_p * t) / np.cosh(u)


def power_analytic(t: np.ndarray | float, n_atoms: int, derived: DerivedParams) -> np.ndarray:
    """Total charging power dE/dt = N d(E/N)/dt of the analytic curve, units omega0 gamma_minus."""
    t = np.asarray(t, dtype=float)
    u = _phase(t, n_atoms, derived)
    du = n_atoms * derived.gamma_eff / 2
    w = derived.omega_p
    c, s = np.cos(derived.theta), np.sin(derived.theta)
    sech = 1.0 / np.cosh(u)
    per_atom = (
        -0.5 * c * sech**2 * du
        + 0.5 * s * w * np.sin(w * t) * sech
        + 0.5 * s * np.cos(w * t) * np.tanh(u) * sech * du
    )
    return n_atoms * per_atom


def energy_lower_bound(tau: np.ndarray | float, theta: float) -> np.ndarray:
    """Charging curve with cos(Omega_P t) replaced by 1, as a function of tau."""
    theta = _check_theta_open(theta)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        _fail("energy_lower_bound needs tau >= 0")
    c, s = np.cos(theta), np.sin(theta)
    u = tau + np.arctanh(c)
    return 0.5 * (1.0 - c * np.tanh(u) - s / np.cosh(u))


def tau90(theta: float) -> float:
    """Dimensionless time at which the lower bound reaches 90% of sin^2(theta/2).

    Raises
    ------
    BracketFailure
        If the bound does not cross the target inside [0, 100].
    """
    theta = _check_theta_open(theta)
    target = TAU90_FRACTION * np.sin(theta / 2) ** 2

    def residual(tau: float) -> float:
        return float(energy_lower_bound(tau, theta)) - target

    lo, hi = TAU90_BRACKET
    try:
        root = brentq(residual, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=200)
    except ValueError as exc:
        msg = f"No sign change for tau90 on [{lo}, {hi}] at theta={theta}"
        logger.error(msg)
        raise BracketFailure(msg) from exc
    return float(root)


@dataclass(frozen=True)
class PowerBoundPoint:
    theta: float
    charge_fraction: float
    bound: float
    tau90: float
    admissible: bool


def power_bound_curve(
    r: float,
    thetas: np.ndarray,
    branch: Literal["x_gt_1", "x_lt_1"] = "x_gt_1",
) -> list[PowerBoundPoint]:
    """Lower bound on the average charging power, in units of N^2 omega0 gamma_minus.

    On the x > 1 branch the charge fraction is sin^2(theta/2) and the bound is
    0.9/(2 tau90) E (r(1-E)^2 - E^2). The x < 1 branch uses cos^2(theta/2) and
    E ((1-E)^2 - r E^2), with tau90 taken at the mirrored angle pi - theta.
    Points whose bound is negative lie off the branch and are flagged
    ``admissible=False``.
    """
    if branch not in ("x_gt_1", "x_lt_1"):
        _fail(f"Unknown branch {branch!r}; expected 'x_gt_1' or 'x_lt_1'")
    if r <= 0:
        _fail(f"r must be positive, got {r}")
    if branch == "x_gt_1" and r < 1:
        logger.warning("r=%g < 1: the x > 1 bound is negative for every charge above 1/2", r)
    points = []
    for theta in np.asarray(thetas, dtype=float):
        theta = _check_theta_open(theta)
        if branch == "x_gt_1":
            frac = float(np.sin(theta / 2) ** 2)
            rate = r * (1 - frac) ** 2 - frac**2
            t90 = tau90(theta)
        else:
            frac = float(np.cos(theta / 2) ** 2)
            rate = (1 - frac) ** 2 - r * frac**2
            t90 = tau90(np.pi - theta)
        bound = TAU90_FRACTION / (2 * t90) * frac * rate
        points.append(PowerBoundPoint(theta, frac, float(bound), t90, bool(rate >= 0)))
    return points


# ---------------------------------------------------------------------------
# Mean-field oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanFieldSolution:
    """<n>(t) = a - b tanh(c t + phi0) with the exact (finite-N) coefficients."""

    n_atoms: int
    a: float
    b: float
    c: float
    phi0: float
    y0: float

    def mean_n(self, t: np.ndarray | float) -> np.ndarray:
        return self.a - self.b * np.tanh(self.c * np.asarray(t, dtype=float) + self.phi0)

    def mean_n_derivative(self, t: np.ndarray | float) -> np.ndarray:
        return -self.b * self.c / np.cosh(self.c * np.asarray(t, dtype=float) + self.phi0) ** 2


def meanfield_solution(n_atoms: int, derived: DerivedParams) -> MeanFieldSolution:
    x = derived.x
    if x == 1.0:
        _fail("The mean-field solution is singular at x = 1")
    j = n_atoms / 2
    a = (x + 1) / (2 * (x - 1))
    b = float(np.sqrt(j * (j + 1) + a**2))
    arg = (a + j * np.cos(derived.theta)) / b
    if not -1.0 < arg < 1.0:
        _fail(f"Initial condition outside the tanh range (argument {arg}) for N={n_atoms}, x={x}")
    return MeanFieldSolution(
        n_atoms=n_atoms,
        a=float(a),
        b=b,
        c=float(derived.gamma_eff * b),
        phi0=float(np.arctanh(arg)),
        y0=float(-j * np.sin(derived.theta)),
    )


def mean_n_rate(n: np.ndarray | float, n_sq: np.ndarray | float, n_atoms: int, derived: DerivedParams) -> np.ndarray:
    """d<n>/dt = A[(x-1)(<n^2> - j(j+1)) - (x+1)<n>], A the upward ladder rate.

    Exact for the secular generator; closing with <n^2> = <n>^2 gives the
    mean-field equation.
    """
    j = n_atoms / 2
    x = derived.x
    n = np.asarray(n, dtype=float)
    n_sq = np.asarray(n_sq, dtype=float)
    return derived.rate_up * ((x - 1) * (n_sq - j * (j + 1)) - (x + 1) * n)


def meanfield_populations_ode(
    n_atoms: int,
    derived: DerivedParams,
    times: np.ndarray | None = None,
) -> tuple[MeanFieldSolution, float]:
    """Mean-field <n>(t) and the residual of its rate equation.

    The residual is max |d<n>/dt - rate(<n>, <n>^2)| over ``times`` scaled by
    Gamma j(j+1); it vanishes up to rounding.
    """
    sol = meanfield_solution(n_atoms, derived)
    if times is None:
        horizon = 5.0 / abs(sol.c) if sol.c else 1.0
        times = np.linspace(0.0, horizon, 201)
    n = sol.mean_n(times)
    lhs = sol.mean_n_derivative(times)
    rhs = mean_n_rate(n, n**2, n_atoms, derived)
    j = n_atoms / 2
    scale = max(1.0, abs(derived.gamma_eff) * j * (j + 1))
    residual = float(np.max(np.abs(lhs - rhs)) / scale)
    logger.debug("Mean-field residual %.3e for N=%d, x=%g", residual, n_atoms, derived.x)
    return sol, residual


def coherence_ode_solution(
    t: np.ndarray | float,
    n_atoms: int,
    derived: DerivedParams,
    gamma0: float | None = None,
) -> np.ndarray:
    """<J_+'>(t) from the closed coherence equation.

    y = y0 exp[i Omega_P t - 1/2 gamma0 sin^2(th) t - Gamma t/2] cosh(phi0)/cosh(c t + phi0).
    ``gamma0`` defaults to the dephasing already contained in ``derived``.
    """
    sol = meanfield_solution(n_atoms, derived)
    t = np.asarray(t, dtype=float)
    dephasing = derived.dephasing if gamma0 is None else gamma0 * np.sin(derived.theta) ** 2
    exponent = 1j * derived.omega_p * t - 0.5 * dephasing * t - 0.5 * derived.gamma_eff * t
    return sol.y0 * np.exp(exponent) * np.cosh(sol.phi0) / np.cosh(sol.c * t + sol.phi0)


def coherence_reduced(t: np.ndarray | float, n_atoms: int, derived: DerivedParams) -> np.ndarray:
    """Large-N Re<J_+'>(t) = -(N/2) sin(th) cos(Omega_P t) cosh(phi0)/cosh(N Gamma t/2 + phi0)."""
    t = np.asarray(t, dtype=float)
    u = _phase(t, n_atoms, derived)
    return -(n_atoms / 2) * np.sin(derived.theta) * np.cos(derived.omega_p * t) * np.cosh(derived.phi0) / np.cosh(u)


__all__ = [
    "TAU90_BRACKET",
    "TAU90_FRACTION",
    "energy_analytic",
    "power_analytic",
    "energy_lower_bound",
    "tau90",
    "PowerBoundPoint",
    "power_bound_curve",
    "MeanFieldSolution",
    "meanfield_solution",
    "mean_n_rate",
    "meanfield_populations_ode",
    "coherence_ode_solution",
    "coherence_reduced",
]
