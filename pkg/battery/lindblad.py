from __future__ import annotations

"""Lindblad generators and density-matrix integration.

Two generators are provided:

* the full collective-decay master equation in the bare basis,
  ``-i[H, rho] + gamma L[J_-] rho``;
* the secular (dressed-state) master equation in the dressed basis, with
  dephasing at gamma0 sin^2(theta) and ladder rates gamma_minus sin^4(theta/2)
  (up) and gamma_plus cos^4(theta/2) (down).

Every secular dissipator keeps ``k - l`` fixed for element ``rho[k, l]``, so it
commutes with the dressed Hamiltonian. :class:`SecularGenerator` therefore
integrates the dissipative part only and restores the Omega_P phases when a
sample is stored; the result is identical to integrating the literal
right-hand side but does not have to resolve the Omega_P oscillation.

Integration uses an embedded Dormand-Prince 5(4) pair on the complex matrix,
or fixed-step RK4 for cross-checks. After each accepted step the state is
re-hermitised; trace and positivity are monitored at every sample.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence

import numpy as np
import pandas as pd

from battery.errors import NumericalError, PositivityViolation, StepUnderflow, ValidationError
from battery.model import DerivedParams
from battery.spin_algebra import RotationMatrix, SpinOperators, build_spin_operators
from config import logger as root_logger

logger = root_logger.getChild(__name__)

# ---------------------------------------------------------------------------
# Tolerances
# ---------------------------------------------------------------------------

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_TOL = 1e-8
TRACE_DRIFT_WARN = 1e-8

# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


class Basis(str, Enum):
    BARE = "bare"
    DRESSED = "dressed"


def _fail(msg: str) -> None:
    logger.error(msg)
    raise ValidationError(msg)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A (N+1)x(N+1) density matrix tagged with the basis it is written in."""

    basis_tag: Basis
    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            _fail(f"Density matrix must be square, got shape {rho.shape}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "basis_tag", Basis(self.basis_tag))

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def trace_error(self) -> float:
        return float(abs(np.trace(self.rho) - 1.0))

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(_hermitize(self.rho))[0])

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()

    def validate(
        self,
        herm_tol: float = HERMITICITY_TOL,
        trace_tol: float = TRACE_TOL,
        eig_tol: float = EIGENVALUE_TOL,
    ) -> "DensityMatrix":
        """Raise ValidationError unless Hermitian, unit-trace and PSD within tolerance."""
        if self.hermiticity_error > herm_tol:
            _fail(f"Density matrix not Hermitian (error {self.hermiticity_error:.3e})")
        if self.trace_error > trace_tol:
            _fail(f"Density matrix trace off by {self.trace_error:.3e}")
        if self.min_eigenvalue < -eig_tol:
            _fail(f"Density matrix has negative eigenvalue {self.min_eigenvalue:.3e}")
        return self

    @classmethod
    def pure(cls, basis: Basis | str, vector: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(vector, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(basis, np.outer(psi, psi.conj()))


def ground_state(ops: SpinOperators) -> DensityMatrix:
    """Bare ground state |-N/2><-N/2|."""
    rho = np.zeros((ops.dim, ops.dim), dtype=complex)
    rho[0, 0] = 1.0
    return DensityMatrix(Basis.BARE, rho)


def to_dressed(state: DensityMatrix, rotation: RotationMatrix) -> DensityMatrix:
    """Express a bare-basis state in the dressed basis: u^dagger rho u."""
    if state.basis_tag is Basis.DRESSED:
        return state
    u = rotation.u
    return DensityMatrix(Basis.DRESSED, u.conj().T @ state.rho @ u)


def to_bare(state: DensityMatrix, rotation: RotationMatrix) -> DensityMatrix:
    """Express a dressed-basis state in the bare basis: u rho u^dagger."""
    if state.basis_tag is Basis.BARE:
        return state
    u = rotation.u
    return DensityMatrix(Basis.BARE, u @ state.rho @ u.conj().T)


def initial_dressed_state(ops: SpinOperators, rotation: RotationMatrix) -> DensityMatrix:
    """Bare ground state written in the dressed basis.

    Its dressed J_z' expectation must equal -(N/2) cos(theta).
    """
    state = to_dressed(ground_state(ops), rotation)
    mean_n = expectation(state, ops.jz).real
    expected = -ops.j * np.cos(rotation.theta)
    if abs(mean_n - expected) > 1e-10 * max(1.0, ops.j):
        msg = f"Initial dressed <J_z'>={mean_n} differs from -(N/2)cos(theta)={expected}"
        logger.error(msg)
        raise NumericalError(msg)
    return state


def expectation(rho: DensityMatrix | np.ndarray, obs: np.ndarray) -> complex:
    """Tr(rho obs)."""
    mat = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    obs = np.asarray(obs)
    if mat.shape != obs.shape:
        _fail(f"Observable of shape {obs.shape} does not match state of shape {mat.shape}")
    return complex(np.einsum("ij,ji->", mat, obs))


def trace_distance(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    """Half the trace norm of a - b."""
    ma = a.rho if isinstance(a, DensityMatrix) else np.asarray(a)
    mb = b.rho if isinstance(b, DensityMatrix) else np.asarray(b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(_hermitize(ma - mb)))))


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def lindblad_dissipator(jump: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """L rho L^dagger - 1/2 {L^dagger L, rho}."""
    jump = np.asarray(jump)
    rho = np.asarray(rho)
    if jump.shape != rho.shape:
        _fail(f"Jump operator of shape {jump.shape} does not match state of shape {rho.shape}")
    jump_dag = jump.conj().T
    k = jump_dag @ jump
    return jump @ rho @ jump_dag - 0.5 * (k @ rho + rho @ k)


def _commutator_term(h: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return -1j * (h @ rho - rho @ h)


def _require_basis(rho: DensityMatrix, basis: Basis) -> None:
    if rho.basis_tag is not basis:
        _fail(f"Expected a {basis.value}-basis state, got {rho.basis_tag.value}")


def rhs_full(rho: DensityMatrix, h1: np.ndarray, gamma: float) -> np.ndarray:
    """-i[H1, rho] + gamma L[J_-] rho in the bare basis."""
    _require_basis(rho, Basis.BARE)
    ops = build_spin_operators(rho.dim - 1)
    return _commutator_term(h1, rho.rho) + gamma * lindblad_dissipator(ops.jm, rho.rho)


def rhs_secular(rho: DensityMatrix, derived: DerivedParams, ops: SpinOperators) -> np.ndarray:
    """Secular master equation written with the dressed-basis (primed) operators."""
    _require_basis(rho, Basis.DRESSED)
    r = rho.rho
    return (
        _commutator_term(derived.omega_p * ops.jz, r)
        + derived.dephasing * lindblad_dissipator(ops.jz, r)
        + derived.rate_up * lindblad_dissipator(ops.jp, r)
        + derived.rate_down * lindblad_dissipator(ops.jm, r)
    )


class Generator(Protocol):
    """Autonomous right-hand side usable by :func:`integrate`."""

    basis: Basis

    def __call__(self, rho: np.ndarray) -> np.ndarray: ...

    def to_lab(self, rho: np.ndarray, t: float) -> np.ndarray: ...


class LindbladGenerator:
    """-i[H, rho] + sum_k rate_k L[L_k] rho with precomputed L^dagger L."""

    def __init__(
        self,
        basis: Basis | str,
        hamiltonian: np.ndarray | None,
        jumps: Sequence[tuple[float, np.ndarray]] = (),
    ) -> None:
        self.basis = Basis(basis)
        self._h = None if hamiltonian is None or not np.any(hamiltonian) else np.asarray(hamiltonian)
        self._jumps = [
            (float(rate), np.asarray(op), np.asarray(op).conj().T, np.asarray(op).conj().T @ np.asarray(op))
            for rate, op in jumps
            if rate != 0
        ]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = _commutator_term(self._h, rho) if self._h is not None else np.zeros_like(rho)
        for rate, op, op_dag, k in self._jumps:
            out += rate * (op @ rho @ op_dag - 0.5 * (k @ rho + rho @ k))
        return out

    def to_lab(self, rho: np.ndarray, t: float) -> np.ndarray:
        return rho


class FullGenerator(LindbladGenerator):
    """Bare-basis generator -i[H1 + frame_shift J_z, rho] + gamma L[J_-] rho.

    Pass ``h1=None`` for the undriven frame rotating at omega0.
    """

    def __init__(
        self,
        h1: np.ndarray | None,
        ops: SpinOperators,
        gamma: float,
        frame_shift: float = 0.0,
    ) -> None:
        h = np.zeros((ops.dim, ops.dim), dtype=complex) if h1 is None else np.asarray(h1, dtype=complex)
        if h.shape != (ops.dim, ops.dim):
            _fail(f"Hamiltonian of shape {h.shape} does not match N={ops.n_atoms}")
        if frame_shift:
            h = h + frame_shift * ops.jz
        super().__init__(Basis.BARE, h, [(gamma, ops.jm)])
        self.gamma = gamma
        self.frame_shift = frame_shift


class SecularGenerator(LindbladGenerator):
    """Dressed-basis secular generator.

    With ``interaction_picture`` (default) the Omega_P J_z' term is applied
    analytically in :meth:`to_lab` instead of being integrated.
    """

    def __init__(self, derived: DerivedParams, ops: SpinOperators, interaction_picture: bool = True) -> None:
        hamiltonian = None if interaction_picture else derived.omega_p * ops.jz
        super().__init__(
            Basis.DRESSED,
            hamiltonian,
            [(derived.rate_up, ops.jp), (derived.rate_down, ops.jm)],
        )
        m = ops.m_values
        self.derived = derived
        self.interaction_picture = interaction_picture
        self._dm = m[:, None] - m[None, :]
        self._dephase = -0.5 * derived.dephasing * self._dm**2

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = super().__call__(rho)
        out += self._dephase * rho
        return out

    def to_lab(self, rho: np.ndarray, t: float) -> np.ndarray:
        if not self.interaction_picture or t == 0.0:
            return rho
        return rho * np.exp(-1j * self.derived.omega_p * self._dm * t)


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


class BatteryObservables:
    """Bare-frame battery observables evaluated on states of either basis.

    energy_per_atom is the charge (<J_z> + N/2)/N in units of omega0,
    coherence_jp is <J_+> and energy_variance is Var(J_z) in units of omega0^2.
    """

    def __init__(self, ops: SpinOperators, rotation: RotationMatrix | None = None) -> None:
        self.ops = ops
        self.rotation = rotation
        jz2 = ops.jz @ ops.jz
        self._bare = (ops.jz, jz2, ops.jp)
        if rotation is not None:
            u = rotation.u
            self._dressed = tuple(u.conj().T @ a @ u for a in self._bare)
        else:
            self._dressed = None

    def __call__(self, state: DensityMatrix) -> tuple[float, complex, float]:
        if state.basis_tag is Basis.DRESSED:
            if self._dressed is None:
                _fail("A rotation is required to evaluate observables on dressed states")
            jz, jz2, jp = self._dressed
        else:
            jz, jz2, jp = self._bare
        mean_jz = expectation(state, jz).real
        mean_jz2 = expectation(state, jz2).real
        n = self.ops.n_atoms
        energy = (mean_jz + n / 2) / n
        variance = mean_jz2 - mean_jz**2
        return float(energy), expectation(state, jp), float(variance)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


class Scheme(str, Enum):
    RK45_ADAPTIVE = "rk45_adaptive"
    RK4_FIXED = "rk4_fixed"


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings; ``max_step`` is the fixed step for rk4_fixed."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    scheme_tag: Scheme = Scheme.RK45_ADAPTIVE
    min_step: float = 1e-14
    positivity_tol: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme_tag", Scheme(self.scheme_tag))
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            _fail(f"Tolerances must be positive, got rel_tol={self.rel_tol}, abs_tol={self.abs_tol}")
        if self.max_step <= 0:
            _fail(f"max_step must be positive, got {self.max_step}")
        if self.scheme_tag is Scheme.RK4_FIXED and not math.isfinite(self.max_step):
            _fail("rk4_fixed needs a finite max_step (its fixed step size)")


@dataclass(eq=False)
class Trajectory:
    """Sampled states with bare-frame observables and health diagnostics."""

    times: np.ndarray
    states: list[DensityMatrix]
    energy_per_atom: np.ndarray
    coherence_jp: np.ndarray
    energy_variance: np.ndarray
    trace_errors: np.ndarray
    hermiticity_errors: np.ndarray
    min_eigvals: np.ndarray
    stats: dict[str, int] = field(default_factory=dict)

    @property
    def final_state(self) -> DensityMatrix:
        return self.states[-1]

    @property
    def max_trace_error(self) -> float:
        return float(np.max(self.trace_errors))

    @property
    def max_hermiticity_error(self) -> float:
        return float(np.max(self.hermiticity_errors))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.min_eigvals))

    def diagnostics(self) -> dict[str, float]:
        return {
            "max_trace_error": self.max_trace_error,
            "max_hermiticity_error": self.max_hermiticity_error,
            "min_eigenvalue": self.min_eigenvalue,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t_in_inverse_gamma_minus": self.times,
                "energy_per_atom_in_omega0": self.energy_per_atom,
                "re_jp": self.coherence_jp.real,
                "im_jp": self.coherence_jp.imag,
                "energy_variance_in_omega0_sq": self.energy_variance,
                "trace_error": self.trace_errors,
                "min_eigval": self.min_eigvals,
            }
        )


# Dormand-Prince 5(4) tableau.
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


def _dopri_step(f: Generator, y: np.ndarray, k1: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ks = [k1]
    for row in _DP_A[1:]:
        incr = sum(a * k for a, k in zip(row, ks) if a)
        ks.append(f(y + h * incr))
    y_new = y + h * sum(b * k for b, k in zip(_DP_B, ks) if b)
    k7 = f(y_new)
    ks.append(k7)
    err = h * sum(e * k for e, k in zip(_DP_E, ks) if e)
    return y_new, k7, err


def _rk4_step(f: Generator, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _error_norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, cfg: IntegratorConfig) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f: Generator, y: np.ndarray, k1: np.ndarray, cfg: IntegratorConfig) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    d0 = np.sqrt(np.mean(np.abs(y / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(k1 / scale) ** 2))
    h = 1e-6 if not d0 >= 1e-5 or not d1 >= 1e-5 else 0.01 * d0 / d1
    return float(min(h, cfg.max_step))


def _sample_times(t_end: float, sample_every: float | None) -> np.ndarray:
    if sample_every is None or sample_every >= t_end:
        return np.array([0.0, t_end])
    n_intervals = int(math.ceil(t_end / sample_every - 1e-9))
    return np.linspace(0.0, t_end, n_intervals + 1)


def integrate(
    rho0: DensityMatrix,
    rhs: Generator,
    t_end: float,
    cfg: IntegratorConfig | None = None,
    sample_every: float | None = None,
    observables: BatteryObservables | None = None,
    keep_states: bool = True,
) -> Trajectory:
    """Integrate ``rhs`` from ``rho0`` to ``t_end`` and sample at a fixed cadence.

    With ``keep_states=False`` only the final state is kept; observables and
    diagnostics are still recorded at every sample.

    Raises
    ------
    StepUnderflow
        The adaptive controller asked for a step below ``cfg.min_step``.
    PositivityViolation
        A sampled state has an eigenvalue below ``-cfg.positivity_tol``.
    """
    cfg = cfg or IntegratorConfig()
    if rho0.basis_tag is not rhs.basis:
        _fail(f"Initial state is in the {rho0.basis_tag.value} basis, generator expects {rhs.basis.value}")
    if not t_end > 0:
        _fail(f"t_end must be positive, got {t_end}")
    rho0.validate()

    targets = _sample_times(float(t_end), sample_every)
    n_samples = len(targets)
    states: list[DensityMatrix] = []
    energy = np.full(n_samples, np.nan)
    jp = np.full(n_samples, np.nan + 0j, dtype=complex)
    variance = np.full(n_samples, np.nan)
    trace_err = np.empty(n_samples)
    herm_err = np.empty(n_samples)
    min_eig = np.empty(n_samples)
    stats = {"accepted": 0, "rejected": 0, "evaluations": 0}

    def f(y: np.ndarray) -> np.ndarray:
        stats["evaluations"] += 1
        return rhs(y)

    def record(i: int, t: float, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            msg = f"Non-finite density matrix at t={t:.6g}; integration diverged"
            logger.error(msg)
            raise PositivityViolation(msg)
        state = DensityMatrix(rhs.basis, rhs.to_lab(y, t))
        trace_err[i] = state.trace_error
        herm_err[i] = state.hermiticity_error
        min_eig[i] = state.min_eigenvalue
        if min_eig[i] < -cfg.positivity_tol:
            msg = f"Min eigenvalue {min_eig[i]:.3e} at t={t:.6g} below -{cfg.positivity_tol:g}; integration diverged"
            logger.error(msg)
            raise PositivityViolation(msg)
        if trace_err[i] > TRACE_DRIFT_WARN:
            logger.warning("Trace drift %.3e at t=%.6g", trace_err[i], t)
        if observables is not None:
            energy[i], jp[i], variance[i] = observables(state)
        if keep_states or i == n_samples - 1:
            states.append(state)

    y = rho0.rho.astype(complex, copy=True)
    t = 0.0
    record(0, t, y)
    k1 = f(y)
    h_prop = _initial_step(f, y, k1, cfg) if cfg.scheme_tag is Scheme.RK45_ADAPTIVE else cfg.max_step

    for i in range(1, n_samples):
        t_target = float(targets[i])
        while t < t_target:
            remaining = t_target - t
            if remaining <= 1e-12 * max(1.0, t_target):
                t = t_target
                break
            h = min(h_prop, remaining, cfg.max_step)
            if cfg.scheme_tag is Scheme.RK4_FIXED:
                stats["evaluations"] += 4
                y = _hermitize(_rk4_step(rhs, y, h))
                t = t_target if h == remaining else t + h
                stats["accepted"] += 1
                continue
            y_new, k7, err = _dopri_step(f, y, k1, h)
            err_norm = _error_norm(err, y, y_new, cfg)
            if err_norm <= 1.0:
                t = t_target if h == remaining else t + h
                y = _hermitize(y_new)
                k1 = k7
                stats["accepted"] += 1
                factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
                # A step clipped to the sample boundary says little about the
                # controller's preferred size, so never shrink on it.
                h_prop = max(h_prop, h * factor) if h < h_prop else h * factor
            else:
                stats["rejected"] += 1
                h_prop = h * (max(_MIN_FACTOR, _SAFETY * err_norm**-0.2) if math.isfinite(err_norm) else _MIN_FACTOR)
                logger.debug("Rejected step h=%.3e at t=%.6g (error norm %.3g)", h, t, err_norm)
                if h_prop < cfg.min_step:
                    msg = f"Step size {h_prop:.3e} fell below {cfg.min_step:g} at t={t:.6g}"
                    logger.error(msg)
                    raise StepUnderflow(msg)
        record(i, t_target, y)

    logger.debug(
        "Integrated to t=%.6g: %d accepted, %d rejected, %d evaluations",
        t_end,
        stats["accepted"],
        stats["rejected"],
        stats["evaluations"],
    )
    return Trajectory(
        times=targets,
        states=states,
        energy_per_atom=energy,
        coherence_jp=jp,
        energy_variance=variance,
        trace_errors=trace_err,
        hermiticity_errors=herm_err,
        min_eigvals=min_eig,
        stats=stats,
    )


__all__ = [
    "Basis",
    "DensityMatrix",
    "ground_state",
    "to_bare",
    "to_dressed",
    "initial_dressed_state",
    "expectation",
    "trace_distance",
    "lindblad_dissipator",
    "rhs_full",
    "rhs_secular",
    "Generator",
    "LindbladGenerator",
    "SecularGenerator",
    "FullGenerator",
    "BatteryObservables",
    "Scheme",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
]
