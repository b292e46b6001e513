import numpy as np
import pytest

from battery.errors import DegenerateAngle, ValidationError
from battery.model import ModelParams, build_hamiltonians, derive, jminus_decomposition_check
from battery.spin_algebra import build_spin_operators, rotation_matrix, unrotate_operator

THETA = 1.87


def fig_params(n=4, r=10.0, theta=THETA, omega_p=40.0):
    return ModelParams.from_theta(n_atoms=n, theta=theta, omega_p=omega_p, gamma_plus=r)


class TestModelParams:
    """Validation and construction of the model inputs."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_atoms": 0, "delta": 1.0, "rabi": 1.0},
            {"n_atoms": 2, "delta": 1.0, "rabi": -1.0},
            {"n_atoms": 2, "delta": 0.0, "rabi": 0.0},
            {"n_atoms": 2, "delta": 1.0, "rabi": 1.0, "gamma_minus": 0.0},
            {"n_atoms": 2, "delta": 1.0, "rabi": 1.0, "gamma0": -1.0},
            {"n_atoms": 2, "delta": float("inf"), "rabi": 1.0},
            {"n_atoms": True, "delta": 1.0, "rabi": 1.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            ModelParams(**kwargs)

    def test_from_theta_round_trip(self):
        p = fig_params(omega_p=25.0)
        d = derive(p)
        assert d.theta == pytest.approx(THETA, abs=1e-12)
        assert d.omega_p == pytest.approx(25.0)

    def test_from_mapping_with_theta_keeps_omega_p(self):
        p = ModelParams.from_mapping({"n_atoms": 3, "delta": 3.0, "rabi": 4.0, "theta": 1.0, "gamma_plus": 2.0})
        assert np.hypot(p.delta, p.rabi) == pytest.approx(5.0)
        assert derive(p).theta == pytest.approx(1.0)
        assert p.gamma_plus == 2.0

    def test_from_mapping_without_theta(self):
        p = ModelParams.from_mapping({"n_atoms": 3, "delta": -11.79, "rabi": 38.223})
        assert p.delta == -11.79 and p.rabi == 38.223

    def test_with_overrides_is_immutable_update(self):
        p = fig_params()
        q = p.with_overrides(n_atoms=8)
        assert q.n_atoms == 8 and p.n_atoms == 4
        assert q.as_dict()["gamma_plus"] == p.gamma_plus


class TestDerive:
    """Dressed-frame quantities."""

    def test_default_regime_values(self):
        d = derive(fig_params())
        assert np.cos(d.theta) == pytest.approx(-0.29475, abs=1e-5)
        assert np.sin(d.theta) == pytest.approx(0.95557, abs=1e-5)
        assert d.x == pytest.approx(10 / np.tan(THETA / 2) ** 4)
        assert d.x == pytest.approx(2.96, abs=0.02)
        assert d.charge_fraction == pytest.approx(0.64738, abs=1e-5)

    def test_rates(self):
        d = derive(fig_params())
        assert d.rate_up == pytest.approx(np.sin(THETA / 2) ** 4)
        assert d.rate_down == pytest.approx(10 * np.cos(THETA / 2) ** 4)
        assert d.gamma_eff == pytest.approx(d.rate_down - d.rate_up)
        assert d.gamma_eff == pytest.approx(d.rate_up * (d.x - 1))
        assert d.dephasing == pytest.approx(np.sin(THETA) ** 2)
        assert np.tanh(d.phi0) == pytest.approx(np.cos(THETA))

    def test_x_below_one_gives_negative_gamma(self):
        d = derive(fig_params(r=0.1, theta=2.4))
        assert d.x < 1
        assert d.gamma_eff < 0

    @pytest.mark.parametrize("delta", [1.0, -1.0])
    def test_degenerate_angle(self, delta):
        with pytest.raises(DegenerateAngle):
            derive(ModelParams(n_atoms=2, delta=delta, rabi=0.0))

    def test_needs_positive_gamma_plus(self):
        with pytest.raises(ValidationError):
            derive(ModelParams(n_atoms=2, delta=1.0, rabi=1.0, gamma_plus=0.0))


class TestHamiltonians:
    """Bare and dressed pump Hamiltonians."""

    @pytest.mark.parametrize("n", [1, 4, 7])
    def test_dressed_form_is_diagonal(self, n):
        p = fig_params(n=n)
        ops = build_spin_operators(n)
        h = build_hamiltonians(p, ops)
        r = rotation_matrix(ops, derive(p).theta)
        assert np.allclose(unrotate_operator(r, h.h1), h.h1_dressed, atol=1e-10)

    def test_h0(self):
        p = fig_params().with_overrides(omega0=2.0)
        ops = build_spin_operators(4)
        assert np.allclose(build_hamiltonians(p, ops).h0, 2.0 * ops.jz)

    def test_mismatched_operators(self):
        with pytest.raises(ValidationError):
            build_hamiltonians(fig_params(n=4), build_spin_operators(3))

    @pytest.mark.parametrize("n", range(1, 13))
    def test_jminus_decomposition(self, n):
        ops = build_spin_operators(n)
        for theta in (0.4, THETA, 2.7):
            r = rotation_matrix(ops, theta)
            assert jminus_decomposition_check(None, ops, r) <= 1e-10
