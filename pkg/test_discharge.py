import numpy as np
import pytest

from battery.discharge import (
    charged_bare_state,
    emission_half_time,
    initial_coherence,
    run_discharge,
    variance_scaling,
)
from battery.errors import ValidationError
from battery.lindblad import BatteryObservables, DensityMatrix, ground_state
from battery.model import ModelParams, build_hamiltonians, derive
from battery.spin_algebra import build_spin_operators, rotation_matrix
from battery.steady_ergotropy import ergotropy_exact, steady_state_matrix


def fig_derived(n, theta=1.87, r=10.0):
    return derive(ModelParams.from_theta(n_atoms=n, theta=theta, omega_p=40.0, gamma_plus=r))


@pytest.fixture(scope="module")
def fig_runs():
    runs = {}
    for n in (2, 4, 8):
        rho0, _ = charged_bare_state(n, fig_derived(n))
        runs[n] = run_discharge(rho0, 1.0)
    return runs


class TestInitialCoherence:
    """Dipole stored in the charged steady state."""

    @pytest.mark.parametrize("n", [3, 8])
    def test_matches_bare_trace(self, n):
        d = fig_derived(n)
        ops = build_spin_operators(n)
        rot = rotation_matrix(ops, d.theta)
        rho = steady_state_matrix(n, d.x)
        value = initial_coherence(rho, d, ops, rot)
        bare = steady_state_matrix(n, d.x, "bare", rot)
        assert value == pytest.approx(complex(np.trace(bare.rho @ ops.jp)), abs=1e-10)
        assert abs(value.imag) <= 1e-12

    def test_large_n_limit(self):
        d = fig_derived(20)
        ratios = []
        for n in (20, 80, 320):
            ops = build_spin_operators(n)
            value = initial_coherence(steady_state_matrix(n, d.x), d, ops)
            ratios.append(abs(value) / (n / 2))
        assert ratios[0] < ratios[1] < ratios[2]
        assert ratios[2] == pytest.approx(np.sin(1.87), rel=5e-3)

    def test_vanishes_near_ground(self):
        d = fig_derived(6, theta=0.05, r=1.0)
        ops = build_spin_operators(6)
        assert abs(initial_coherence(steady_state_matrix(6, d.x), d, ops)) < 0.2

    def test_requires_dressed_state(self):
        ops = build_spin_operators(2)
        with pytest.raises(ValidationError):
            initial_coherence(ground_state(ops), fig_derived(2), ops)


class TestRunDischarge:
    """Collective decay of the charged battery."""

    def test_ground_state_emits_nothing(self):
        result = run_discharge(ground_state(build_spin_operators(3)), 1.0, t_end=2.0)
        assert np.allclose(result.coherent_energy, 0.0)
        assert np.allclose(result.energy, 0.0)
        assert result.coherent_fraction == 0.0
        assert np.isnan(emission_half_time(result))

    def test_single_excited_atom_has_no_coherent_power(self):
        excited = DensityMatrix("bare", np.diag([0.0, 1.0]))
        result = run_discharge(excited, 1.0, t_end=3.0)
        assert np.allclose(result.coherent_power, 0.0)
        assert result.energy == pytest.approx(np.exp(-result.times), rel=1e-6)
        assert emission_half_time(result) == pytest.approx(np.log(2.0), abs=1e-4)

    def test_initial_energy_is_steady_charge(self):
        n = 4
        d = fig_derived(n)
        rho0, _ = charged_bare_state(n, d)
        result = run_discharge(rho0, 1.0, t_end=0.5)
        expected = n * ergotropy_exact(n, d.x, d.theta).energy_per_atom
        assert result.stored_energy_initial == pytest.approx(expected, abs=1e-10)

    def test_dressed_input_is_rotated(self):
        n = 3
        d = fig_derived(n)
        rho0, rot = charged_bare_state(n, d)
        a = run_discharge(rho0, 1.0, t_end=0.5)
        b = run_discharge(steady_state_matrix(n, d.x), 1.0, t_end=0.5, rotation=rot)
        assert a.energy == pytest.approx(b.energy, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_invariants(self, fig_runs, n):
        result = fig_runs[n]
        assert np.all(result.coherent_power >= 0)
        assert np.all(np.diff(result.coherent_energy) >= 0)
        assert 0 <= result.coherent_fraction <= 1 + 1e-6
        assert result.energy_balance_margin >= -1e-6 * n

    def test_fraction_grows_and_emission_speeds_up(self, fig_runs):
        fractions = [fig_runs[n].coherent_fraction for n in (2, 4, 8)]
        half_times = [emission_half_time(fig_runs[n]) for n in (2, 4, 8)]
        assert fractions[0] < fractions[1] < fractions[2]
        assert half_times[0] > half_times[1] > half_times[2]

    def test_frame_shift_only_rotates_phase(self):
        n = 4
        rho0, _ = charged_bare_state(n, fig_derived(n))
        plain = run_discharge(rho0, 1.0, t_end=1.0)
        shifted = run_discharge(rho0, 1.0, t_end=1.0, frame_shift=2.5)
        assert shifted.coherent_power == pytest.approx(plain.coherent_power, rel=1e-6, abs=1e-9)
        assert shifted.energy == pytest.approx(plain.energy, abs=1e-9)
        assert not np.allclose(shifted.trajectory.coherence_jp, plain.trajectory.coherence_jp)

    def test_driven_frame_keeps_pump(self):
        n = 2
        p = ModelParams.from_theta(n_atoms=n, theta=1.87, omega_p=5.0, gamma_plus=10.0)
        h1 = build_hamiltonians(p, build_spin_operators(n)).h1
        result = run_discharge(ground_state(build_spin_operators(n)), 1.0, "driven", t_end=1.0, h1=h1)
        assert result.frame == "driven"
        assert np.max(result.energy) > 0.1

    def test_to_frame(self):
        rho0, _ = charged_bare_state(2, fig_derived(2))
        result = run_discharge(rho0, 1.0, t_end=0.2, stored_energy_reference=0.6)
        df = result.to_frame()
        assert list(df.columns) == [
            "t_times_n_gamma0",
            "energy_per_atom_in_omega0",
            "coherent_power_in_omega0_gamma_minus",
            "coherent_energy_in_omega0",
            "stored_energy_reference_in_omega0",
            "energy_variance_in_omega0_sq",
        ]
        assert df["t_times_n_gamma0"].iloc[-1] == pytest.approx(0.4)
        assert (df["stored_energy_reference_in_omega0"] == 0.6).all()

    def test_columns_are_in_omega0_units(self):
        rho0, _ = charged_bare_state(3, fig_derived(3))
        unit = run_discharge(rho0, 1.0, t_end=0.5, stored_energy_reference=1.2)
        scaled = run_discharge(rho0, 1.0, t_end=0.5, omega0=2.5, stored_energy_reference=3.0)
        assert scaled.energy == pytest.approx(2.5 * unit.energy, rel=1e-12)
        assert scaled.energy_variance_series == pytest.approx(6.25 * unit.energy_variance_series, rel=1e-12)
        a, b = unit.to_frame(), scaled.to_frame()
        for column in a.columns:
            assert b[column].to_numpy() == pytest.approx(a[column].to_numpy(), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"gamma0": 0.0},
            {"gamma0": 1.0, "frame_tag": "lab"},
            {"gamma0": 1.0, "frame_tag": "driven"},
        ],
    )
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(ValidationError):
            run_discharge(ground_state(build_spin_operators(2)), **kwargs)

    def test_dressed_state_needs_rotation(self):
        with pytest.raises(ValidationError):
            run_discharge(steady_state_matrix(2, 2.0), 1.0)

    @pytest.mark.slow
    def test_superradiant_half_time(self):
        scaled = []
        for n in (16, 32):
            rho0, _ = charged_bare_state(n, fig_derived(n))
            result = run_discharge(rho0, 1.0, t_end=6.0 / n)
            scaled.append(n * emission_half_time(result))
        assert scaled[1] == pytest.approx(scaled[0], rel=0.15)


class TestEnergyVariance:
    """Energy fluctuations of the battery."""

    def test_zero_for_ground_state(self):
        ops = build_spin_operators(5)
        _, _, variance = BatteryObservables(ops)(ground_state(ops))
        assert variance == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("n", [2, 5, 10])
    def test_uniform_state(self, n):
        ops = build_spin_operators(n)
        rot = rotation_matrix(ops, np.pi / 2)
        rho = steady_state_matrix(n, 1.0)
        j = n / 2
        _, _, variance = BatteryObservables(ops, rot)(rho)
        assert variance == pytest.approx(j * (j + 1) / 3, rel=1e-12)

    def test_needs_four_sizes(self):
        with pytest.raises(ValidationError):
            variance_scaling([2, 4, 8], fig_derived(2))

    @pytest.mark.slow
    def test_linear_in_n(self):
        slope = variance_scaling([4, 8, 16, 32], fig_derived(4))
        assert 0.8 <= slope <= 1.2
