import dataclasses

import numpy as np
import pytest

from battery.asymptotics import (
    coherence_ode_solution,
    coherence_reduced,
    energy_analytic,
    energy_lower_bound,
    mean_n_rate,
    meanfield_populations_ode,
    meanfield_solution,
    power_analytic,
    power_bound_curve,
    tau90,
)
from battery.errors import ValidationError
from battery.lindblad import BatteryObservables, SecularGenerator, expectation, initial_dressed_state, integrate
from battery.model import ModelParams, derive
from battery.spin_algebra import build_spin_operators, rotation_matrix
from battery.steady_ergotropy import ergotropy_exact


def derived_for(n, theta=1.87, r=10.0, omega_p=None):
    omega_p = 10.0 * n if omega_p is None else omega_p
    return derive(ModelParams.from_theta(n_atoms=n, theta=theta, omega_p=omega_p, gamma_plus=r))


def charge_numerically(n, d, times):
    ops = build_spin_operators(n)
    rot = rotation_matrix(ops, d.theta)
    traj = integrate(
        initial_dressed_state(ops, rot),
        SecularGenerator(d, ops),
        float(times[-1]),
        sample_every=float(times[1] - times[0]),
        observables=BatteryObservables(ops, rot),
        keep_states=False,
    )
    return traj.times, traj.energy_per_atom


class TestChargingCurve:
    """Large-N charging curve and its power."""

    def test_starts_empty(self):
        d = derived_for(20)
        assert energy_analytic(0.0, 20, d) == pytest.approx(0.0, abs=1e-14)

    def test_saturates_at_charge_fraction(self):
        d = derived_for(20)
        assert energy_analytic(50.0, 20, d) == pytest.approx(np.sin(0.935) ** 2, abs=1e-10)

    def test_rejects_negative_time(self):
        with pytest.raises(ValidationError):
            energy_analytic(-1.0, 4, derived_for(4))

    @pytest.mark.parametrize("n", [4, 32])
    def test_power_is_derivative(self, n):
        d = derived_for(n)
        t = np.linspace(0.0, 4.0 / (n * d.gamma_eff), 20001)
        numeric = n * np.gradient(energy_analytic(t, n, d), t)
        exact = power_analytic(t, n, d)
        inner = slice(5, -5)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(numeric[inner] - exact[inner])) <= 1e-4 * scale

    def test_average_power_scales_as_n_squared(self):
        tau = tau90(1.87)
        averages = []
        for n in (8, 16):
            d = derived_for(n)
            t = 2 * tau / (n * d.gamma_eff)
            averages.append(n * float(energy_analytic(t, n, d)) / t)
        assert averages[1] / averages[0] == pytest.approx(4.0, rel=1e-10)

    @pytest.mark.parametrize("n", [50, 100, 200])
    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
    def test_power_doubles_n_quadruples(self, n, tau):
        small, large = derived_for(n), derived_for(2 * n)
        p_small = power_analytic(2 * tau / (n * small.gamma_eff), n, small)
        p_large = power_analytic(2 * tau / (2 * n * large.gamma_eff), 2 * n, large)
        assert abs(p_small) > 0
        assert 3.9 <= float(p_large / p_small) <= 4.1

    def test_lower_bound_below_curve(self):
        n = 16
        d = derived_for(n)
        t = np.linspace(0.0, 6.0 / (n * d.gamma_eff), 500)
        tau = n * d.gamma_eff * t / 2
        assert np.all(energy_lower_bound(tau, d.theta) <= energy_analytic(t, n, d) + 1e-14)


class TestTau90:
    """Time for the lower bound to reach 90% of the steady charge."""

    def test_quarter_turn(self):
        assert tau90(np.pi / 2) == pytest.approx(np.arccosh(10.0), abs=1e-10)

    @pytest.mark.parametrize("theta", [0.3, 0.5, 0.7, 0.9])
    def test_flat_for_small_angles(self, theta):
        assert tau90(theta) == pytest.approx(2.973, abs=0.005)

    def test_default_drive_angle(self):
        assert tau90(1.87) == pytest.approx(3.012, abs=0.005)

    def test_increasing(self):
        values = [tau90(t) for t in np.linspace(0.8, 2.5, 12)]
        assert np.all(np.diff(values) > 0)

    def test_reaches_target(self):
        theta = 1.2
        assert energy_lower_bound(tau90(theta), theta) == pytest.approx(0.9 * np.sin(0.6) ** 2, abs=1e-12)

    @pytest.mark.parametrize("theta", [0.0, np.pi, 4.0])
    def test_rejects_degenerate_angle(self, theta):
        with pytest.raises(ValidationError):
            tau90(theta)


class TestPowerBound:
    """Charge/power tradeoff."""

    def test_r_one_vanishes_at_half_charge(self):
        (point,) = power_bound_curve(1.0, [np.pi / 2])
        assert point.bound == pytest.approx(0.0, abs=1e-15)

    def test_formula(self):
        frac = 0.3
        theta = 2 * np.arcsin(np.sqrt(frac))
        (point,) = power_bound_curve(5.0, [theta])
        expected = 0.9 / (2 * tau90(theta)) * frac * (5 * (1 - frac) ** 2 - frac**2)
        assert point.charge_fraction == pytest.approx(frac)
        assert point.bound == pytest.approx(expected, rel=1e-12)
        assert point.admissible

    def test_unimodal_for_r_ten(self):
        r = 10.0
        e_max = np.sqrt(r) / (1 + np.sqrt(r))
        thetas = np.linspace(0.1, 2 * np.arcsin(np.sqrt(e_max)) - 1e-3, 60)
        bounds = np.array([p.bound for p in power_bound_curve(r, thetas)])
        assert np.all(bounds > 0)
        peak = int(np.argmax(bounds))
        assert 0 < peak < len(bounds) - 1
        assert np.all(np.diff(bounds[: peak + 1]) > 0)
        assert np.all(np.diff(bounds[peak:]) < 0)

    def test_inadmissible_points_flagged(self):
        points = power_bound_curve(10.0, [0.5, 2.8])
        assert points[0].admissible
        assert not points[1].admissible
        assert points[1].bound < 0

    def test_lower_branch_mirrors_upper(self):
        r, theta = 4.0, 2.2
        (lower,) = power_bound_curve(r, [theta], branch="x_lt_1")
        (upper,) = power_bound_curve(1 / r, [np.pi - theta])
        assert lower.charge_fraction == pytest.approx(np.cos(theta / 2) ** 2)
        assert lower.tau90 == pytest.approx(upper.tau90)
        assert lower.bound == pytest.approx(r * upper.bound, rel=1e-12)

    def test_rejects_unknown_branch(self):
        with pytest.raises(ValidationError):
            power_bound_curve(1.0, [1.0], branch="both")

    @pytest.mark.slow
    @pytest.mark.parametrize("r, theta", [(10.0, 1.87), (5.0, 1.2), (1.0, 1.0)])
    def test_bound_holds_numerically(self, r, theta):
        n = 32
        d = derived_for(n, theta=theta, r=r)
        (point,) = power_bound_curve(r, [theta])
        t90 = 2 * point.tau90 / (n * d.gamma_eff)
        times, energy = charge_numerically(n, d, np.linspace(0.0, t90, 101))
        average_power = n * energy[-1] / times[-1]
        assert average_power / n**2 >= 0.98 * point.bound


class TestMeanField:
    """Closed-form mean-field population and coherence."""

    @pytest.mark.parametrize("n", [1, 4, 16, 64])
    @pytest.mark.parametrize("theta, r", [(1.87, 10.0), (2.4, 0.1), (1.0, 1.0)])
    def test_residual(self, n, theta, r):
        _, residual = meanfield_populations_ode(n, derived_for(n, theta, r))
        assert residual <= 1e-9

    def test_initial_and_final_values(self):
        n = 12
        d = derived_for(n)
        sol = meanfield_solution(n, d)
        assert sol.mean_n(0.0) == pytest.approx(-6 * np.cos(d.theta), abs=1e-12)
        assert sol.y0 == pytest.approx(-6 * np.sin(d.theta))
        assert sol.mean_n(1e3) == pytest.approx(sol.a - sol.b)

    def test_singular_at_x_one(self):
        r = 3.0
        d = derived_for(4, theta=2 * np.arctan(r**0.25), r=r)
        d = dataclasses.replace(d, x=1.0)
        with pytest.raises(ValidationError):
            meanfield_solution(4, d)

    def test_rate_matches_generator(self):
        n = 7
        d = derived_for(n)
        ops = build_spin_operators(n)
        rng = np.random.default_rng(11)
        a = rng.normal(size=(n + 1, n + 1)) + 1j * rng.normal(size=(n + 1, n + 1))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        drift = expectation(SecularGenerator(d, ops)(rho), ops.jz).real
        mean = expectation(rho, ops.jz).real
        mean_sq = expectation(rho, ops.jz @ ops.jz).real
        assert drift == pytest.approx(float(mean_n_rate(mean, mean_sq, n, d)), abs=1e-10)

    def test_coherence_starts_at_tilted_spin(self):
        n = 10
        d = derived_for(n)
        assert coherence_ode_solution(0.0, n, d) == pytest.approx(-5 * np.sin(d.theta))
        assert coherence_reduced(0.0, n, d) == pytest.approx(-5 * np.sin(d.theta))

    def test_dephasing_only_damps(self):
        n = 10
        d = derived_for(n)
        t = np.linspace(0.0, 1.0, 50)
        with_dephasing = np.abs(coherence_ode_solution(t, n, d))
        without = np.abs(coherence_ode_solution(t, n, d, gamma0=0.0))
        assert np.all(with_dephasing <= without + 1e-15)

    @pytest.mark.parametrize("ratio", [0.5, 2.0])
    def test_reduced_form_approaches_ode_solution(self, ratio):
        gaps = []
        for n in (10, 100, 1000):
            d = derived_for(n)
            gamma0 = ratio * d.gamma_eff
            t = np.linspace(0.0, 10.0 / (n * d.gamma_eff), 400)
            ode = coherence_ode_solution(t, n, d, gamma0=gamma0).real
            undamped = coherence_ode_solution(t, n, d, gamma0=0.0).real
            assert not np.allclose(ode, undamped)
            gaps.append(np.max(np.abs(ode - coherence_reduced(t, n, d))) / n)
        assert gaps[0] > gaps[1] > gaps[2]


class TestFiniteNCharging:
    """Finite-N dynamics against the large-N curve."""

    @pytest.mark.parametrize("n", [8, 32])
    def test_plateau(self, n):
        report = ergotropy_exact(n, derived_for(n).x, 1.87)
        limit = np.sin(0.935) ** 2
        assert report.energy_per_atom < limit
        assert report.energy_per_atom == pytest.approx(limit - 0.15 / n, abs=0.01)

    def test_plateau_within_one_percent_at_32(self):
        report = ergotropy_exact(32, derived_for(32).x, 1.87)
        assert report.energy_per_atom == pytest.approx(np.sin(0.935) ** 2, rel=0.01)

    @pytest.mark.slow
    def test_deviation_shrinks_with_n(self):
        deviations = []
        for n in (8, 16, 32):
            d = derived_for(n)
            times = np.linspace(0.0, 8.0 / (n * d.gamma_eff), 201)
            t, energy = charge_numerically(n, d, times)
            deviations.append(np.max(np.abs(energy - energy_analytic(t, n, d))))
        assert deviations[0] > deviations[1] > deviations[2]
