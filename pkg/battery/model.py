from __future__ import annotations

"""Physical parameters, dressed-frame quantities and Hamiltonians.

Rates are measured in units of gamma_minus and energies in units of omega0.
The mixing angle is theta = atan2(rabi, delta) in [0, pi].
"""

import dataclasses
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from battery.errors import DegenerateAngle, ValidationError
from battery.spin_algebra import RotationMatrix, SpinOperators, rotate_operator
from config import logger as root_logger

logger = root_logger.getChild(__name__)

# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def _fail(msg: str) -> None:
    logger.error(msg)
    raise ValidationError(msg)


@dataclass(frozen=True)
class ModelParams:
    """Inputs of the charging model.

    Attributes
    ----------
    n_atoms
        Number of two-level atoms N.
    delta
        Detuning omega0 - omega_P.
    rabi
        Rabi frequency Omega_R of the pump, non-negative.
    gamma0, gamma_plus, gamma_minus
        Decay rates at omega_P and omega_P +/- Omega_P. gamma_minus is the
        rate unit and must be positive.
    omega0
        Atomic frequency; only scales reported energies.
    """

    n_atoms: int
    delta: float
    rabi: float
    gamma0: float = 1.0
    gamma_plus: float = 1.0
    gamma_minus: float = 1.0
    omega0: float = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.n_atoms, bool) or int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            _fail(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        for name in ("delta", "rabi", "gamma0", "gamma_plus", "gamma_minus", "omega0"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                _fail(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.rabi < 0:
            _fail(f"rabi must be >= 0 so that theta lies in [0, pi], got {self.rabi}")
        if self.delta == 0 and self.rabi == 0:
            _fail("delta and rabi cannot both vanish (Omega_P must be positive)")
        for name in ("gamma0", "gamma_plus"):
            if getattr(self, name) < 0:
                _fail(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.gamma_minus <= 0:
            _fail(f"gamma_minus is the rate unit and must be > 0, got {self.gamma_minus}")

    @classmethod
    def from_theta(
        cls,
        n_atoms: int,
        theta: float,
        omega_p: float,
        gamma0: float = 1.0,
        gamma_plus: float = 1.0,
        gamma_minus: float = 1.0,
        omega0: float = 1.0,
    ) -> "ModelParams":
        """Build parameters at fixed Omega_P and mixing angle theta."""
        if not 0.0 <= theta <= np.pi:
            _fail(f"theta must lie in [0, pi], got {theta}")
        if omega_p <= 0:
            _fail(f"omega_p must be positive, got {omega_p}")
        return cls(
            n_atoms=n_atoms,
            delta=omega_p * np.cos(theta),
            rabi=max(0.0, omega_p * np.sin(theta)),
            gamma0=gamma0,
            gamma_plus=gamma_plus,
            gamma_minus=gamma_minus,
            omega0=omega0,
        )

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ModelParams":
        """Build parameters from a flat config mapping.

        An optional ``theta`` entry re-expresses the drive at the Omega_P
        implied by ``delta`` and ``rabi``.
        """
        fields = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in values.items() if k in fields and v is not None}
        theta = values.get("theta")
        if theta is not None:
            omega_p = float(np.hypot(kwargs.get("delta", 0.0), kwargs.get("rabi", 0.0))) or 1.0
            kwargs.pop("delta", None)
            kwargs.pop("rabi", None)
            return cls.from_theta(theta=float(theta), omega_p=omega_p, **kwargs)
        return cls(**kwargs)

    def with_overrides(self, **changes: Any) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    """Dressed-frame quantities computed from :class:`ModelParams`.

    ``rate_up`` and ``rate_down`` are the secular ladder rates
    gamma_minus sin^4(theta/2) and gamma_plus cos^4(theta/2); ``dephasing`` is
    gamma0 sin^2(theta).
    """

    omega_p: float
    theta: float
    ratio_r: float
    x: float
    gamma_eff: float
    phi0: float
    rate_up: float
    rate_down: float
    dephasing: float

    @property
    def charge_fraction(self) -> float:
        """sin^2(theta/2), the large-N steady charge per atom when x > 1."""
        return float(np.sin(self.theta / 2) ** 2)

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


def derive(p: ModelParams) -> DerivedParams:
    """Compute Omega_P, theta, r, x, Gamma and phi0 for ``p``.

    Raises
    ------
    DegenerateAngle
        If theta is 0 or pi, where x = r cot^4(theta/2) is singular.
    """
    omega_p = float(np.hypot(p.delta, p.rabi))
    theta = float(np.arctan2(p.rabi, p.delta))
    if theta <= 0.0 or theta >= np.pi:
        msg = f"theta={theta} is degenerate (delta={p.delta}, rabi={p.rabi}); x is singular"
        logger.error(msg)
        raise DegenerateAngle(msg)
    if p.gamma_plus <= 0:
        _fail("gamma_plus must be > 0 for x to be positive and finite")
    sin_half4 = np.sin(theta / 2) ** 4
    cos_half4 = np.cos(theta / 2) ** 4
    ratio_r = p.gamma_plus / p.gamma_minus
    x = ratio_r * cos_half4 / sin_half4
    rate_up = p.gamma_minus * sin_half4
    rate_down = p.gamma_plus * cos_half4
    return DerivedParams(
        omega_p=omega_p,
        theta=theta,
        ratio_r=float(ratio_r),
        x=float(x),
        gamma_eff=float(rate_down - rate_up),
        phi0=float(np.arctanh(np.cos(theta))),
        rate_up=float(rate_up),
        rate_down=float(rate_down),
        dephasing=float(p.gamma0 * np.sin(theta) ** 2),
    )


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hamiltonians:
    h0: np.ndarray
    h1: np.ndarray
    h1_dressed: np.ndarray


def _check_ops(p: ModelParams, ops: SpinOperators) -> None:
    if ops.n_atoms != p.n_atoms:
        _fail(f"Spin operators built for N={ops.n_atoms} but parameters have N={p.n_atoms}")


def build_hamiltonians(p: ModelParams, ops: SpinOperators) -> Hamiltonians:
    """H0 = omega0 J_z, H1 = delta J_z - rabi J_x and its dressed form Omega_P J_z'."""
    _check_ops(p, ops)
    omega_p = float(np.hypot(p.delta, p.rabi))
    return Hamiltonians(
        h0=p.omega0 * ops.jz,
        h1=p.delta * ops.jz - p.rabi * ops.jx,
        h1_dressed=omega_p * ops.jz,
    )


def jminus_decomposition_check(p: ModelParams | None, ops: SpinOperators, r: RotationMatrix) -> float:
    """Max elementwise residual of the dressed-basis decomposition of J_-.

    J_- = -sin(t) J_z' - (1 - cos t)/2 J_+' + (1 + cos t)/2 J_-' with t the
    rotation angle of ``r``; primes are rotations by ``r``.
    """
    if p is not None:
        _check_ops(p, ops)
    c, s = np.cos(r.theta), np.sin(r.theta)
    rebuilt = (
        -s * rotate_operator(r, ops.jz)
        - 0.5 * (1 - c) * rotate_operator(r, ops.jp)
        + 0.5 * (1 + c) * rotate_operator(r, ops.jm)
    )
    return float(np.max(np.abs(ops.jm - rebuilt)))


__all__ = [
    "ModelParams",
    "DerivedParams",
    "Hamiltonians",
    "derive",
    "build_hamiltonians",
    "jminus_decomposition_check",
]
