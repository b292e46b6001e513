from __future__ import annotations

"""Collective angular-momentum operators on the symmetric j = N/2 subspace.

Basis index ``k`` corresponds to ``m = k - N/2`` (ascending), so index 0 is
the bare ground state |-N/2>. hbar = 1 throughout.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from battery.errors import ValidationError
from config import logger as root_logger

logger = root_logger.getChild(__name__)

# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpinOperators:
    """Dense J_z, J_+, J_-, J_x, J_y for N atoms (read-only arrays)."""

    n_atoms: int
    jz: np.ndarray
    jp: np.ndarray
    jm: np.ndarray
    jx: np.ndarray
    jy: np.ndarray

    @property
    def dim(self) -> int:
        return self.n_atoms + 1

    @property
    def j(self) -> float:
        return self.n_atoms / 2

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(self.dim) - self.j

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


@dataclass(frozen=True, eq=False)
class RotationMatrix:
    """exp(i J_y theta) on the same basis as the generating SpinOperators."""

    theta: float
    u: np.ndarray

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def inverse(self) -> "RotationMatrix":
        """Rotation by -theta (u^dagger); outside the [0, pi] constructor range."""
        u_inv = self.u.conj().T.copy()
        u_inv.setflags(write=False)
        return RotationMatrix(theta=-self.theta, u=u_inv)


def _freeze(*arrays: np.ndarray) -> None:
    for arr in arrays:
        arr.setflags(write=False)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64, typed=True)
def build_spin_operators(n_atoms: int) -> SpinOperators:
    """Return the collective spin operators for ``n_atoms`` two-level atoms.

    <m+1|J_+|m> = sqrt(j(j+1) - m(m+1)) with j = N/2. Results are memoised per
    N and the arrays are flagged read-only so they can be shared freely.
    """
    if isinstance(n_atoms, bool) or int(n_atoms) != n_atoms or n_atoms < 1:
        msg = f"n_atoms must be a positive integer, got {n_atoms!r}"
        logger.error(msg)
        raise ValidationError(msg)
    n_atoms = int(n_atoms)
    j = n_atoms / 2
    m = np.arange(n_atoms + 1) - j

    jz = np.diag(m).astype(complex)
    ladder = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    jp = np.diag(ladder, k=-1).astype(complex)
    jm = jp.conj().T.copy()
    jx = 0.5 * (jp + jm)
    jy = (jp - jm) / 2j
    _freeze(jz, jp, jm, jx, jy)
    logger.debug("Built spin operators for N=%d (dim=%d)", n_atoms, n_atoms + 1)
    return SpinOperators(n_atoms=n_atoms, jz=jz, jp=jp, jm=jm, jx=jx, jy=jy)


def algebra_residual(ops: SpinOperators) -> float:
    """Largest elementwise violation of [J_z, J_+] = J_+ and [J_+, J_-] = 2J_z."""
    c1 = ops.jz @ ops.jp - ops.jp @ ops.jz - ops.jp
    c2 = ops.jp @ ops.jm - ops.jm @ ops.jp - 2 * ops.jz
    return float(max(np.max(np.abs(c1)), np.max(np.abs(c2))))


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not 0.0 <= theta <= np.pi:
        msg = f"theta must lie in [0, pi], got {theta}"
        logger.error(msg)
        raise ValidationError(msg)
    return theta


def wigner_small_d(ops: SpinOperators, theta: float) -> np.ndarray:
    """Closed-form matrix of exp(i J_y theta), i.e. Wigner d^j(-theta).

    Element [k', k] is <m'|exp(i J_y theta)|m>. Factorials are evaluated
    through log-gamma so moderately large N stays finite.
    """
    j = ops.j
    beta = -float(theta)
    cos_half = np.cos(beta / 2)
    sin_half = np.sin(beta / 2)
    m_vals = ops.m_values
    d = np.zeros((ops.dim, ops.dim))
    for row, mp in enumerate(m_vals):
        for col, m in enumerate(m_vals):
            log_root = 0.5 * (
                gammaln(j + m + 1) + gammaln(j - m + 1) + gammaln(j + mp + 1) + gammaln(j - mp + 1)
            )
            k_min = int(round(max(0.0, m - mp)))
            k_max = int(round(min(j + m, j - mp)))
            total = 0.0
            for k in range(k_min, k_max + 1):
                log_den = (
                    gammaln(j + m - k + 1)
                    + gammaln(k + 1)
                    + gammaln(j - k - mp + 1)
                    + gammaln(k - m + mp + 1)
                )
                p_cos = int(round(2 * j - 2 * k + m - mp))
                p_sin = int(round(2 * k - m + mp))
                sign = -1.0 if (k - m + mp) % 2 else 1.0
                total += sign * np.exp(log_root - log_den) * cos_half**p_cos * sin_half**p_sin
            d[row, col] = total
    return d.astype(complex)


def rotation_matrix(ops: SpinOperators, theta: float, method: str = "expm") -> RotationMatrix:
    """Return exp(i J_y theta) for 0 <= theta <= pi.

    ``method="expm"`` uses scaling-and-squaring Pade (scipy); ``"wigner"``
    uses the closed-form small-d construction. Both agree to 1e-10.
    """
    theta = _check_theta(theta)
    if method == "expm":
        u = expm(1j * theta * ops.jy)
    elif method == "wigner":
        u = wigner_small_d(ops, theta)
    else:
        msg = f"Unknown rotation method {method!r}; expected 'expm' or 'wigner'"
        logger.error(msg)
        raise ValidationError(msg)
    u = np.ascontiguousarray(u)
    _freeze(u)
    return RotationMatrix(theta=theta, u=u)


def _check_square(r: RotationMatrix, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != r.dim:
        msg = f"Operator of shape {a.shape} does not match rotation dimension {r.dim}"
        logger.error(msg)
        raise ValidationError(msg)
    return a


def rotate_operator(r: RotationMatrix, a: np.ndarray) -> np.ndarray:
    """Primed operator u a u^dagger."""
    a = _check_square(r, a)
    return r.u @ a @ r.u.conj().T


def unrotate_operator(r: RotationMatrix, a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotate_operator`: u^dagger a u."""
    a = _check_square(r, a)
    return r.u.conj().T @ a @ r.u


def dressed_state(r: RotationMatrix, m: float) -> np.ndarray:
    """|e_m> = u|m>, the m-th dressed eigenvector in the bare basis."""
    j = (r.dim - 1) / 2
    k = m + j
    if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < r.dim:
        msg = f"m={m} is not a level of the j={j} multiplet"
        logger.error(msg)
        raise ValidationError(msg)
    return r.u[:, int(round(k))].copy()


__all__ = [
    "SpinOperators",
    "RotationMatrix",
    "build_spin_operators",
    "algebra_residual",
    "wigner_small_d",
    "rotation_matrix",
    "rotate_operator",
    "unrotate_operator",
    "dressed_state",
]
