import math

import numpy as np
import pytest
from scipy.integrate import quad

from errors import DataFormatError, DomainError
from turbine import (CavitationTable, CharacteristicCurves, In_integral, TurbineSpec,
                     cubic_correction_ratio, efficiency, fit_even_polynomial, linear_damping_Lambda,
                     mean_power_coefficients, min_pressure_bound, omega_t_for_lambda,
                     pressure_bound_samples, pressure_jump, reynolds_number, torque)


def test_turbine_spec_validation():
    with pytest.raises(DomainError):
        TurbineSpec(0.74, 0.8, 0.38, 7, 0.75)
    with pytest.raises(DomainError):
        TurbineSpec(0.74, 0.45, 0.38, 7, 0.70)
    with pytest.raises(DomainError):
        TurbineSpec(0.74, 0.45, 0.38, 7, 0.75, omega_min=10.0, omega_max=5.0)


def test_scaled_turbine_keeps_solidity(turbine):
    big = turbine.scaled(2.0)
    assert big.tip_radius == pytest.approx(1.48)
    assert big.solidity == pytest.approx(turbine.solidity, rel=1e-14)
    assert big.flow_area == pytest.approx(4.0 * turbine.flow_area, rel=1e-14)


def test_synthetic_curve_peak(curves):
    assert curves.phi_opt == pytest.approx(0.25, abs=5e-3)
    assert float(curves.ct(curves.phi_opt)) == pytest.approx(0.17, abs=2e-3)
    assert curves.phi_max_model == pytest.approx(0.30)
    assert curves.fit_residual < 1e-3


def test_curves_are_clamped_beyond_the_table(curves, caplog):
    top = float(curves.ct(curves.phi_max_model))
    assert float(curves.ct(0.5)) == pytest.approx(top)
    assert "beyond the turbine table" in caplog.text


def test_curves_are_even_in_phi(curves):
    assert float(curves.ca(-0.1)) == pytest.approx(float(curves.ca(0.1)))
    assert float(curves.ct(-0.1)) == pytest.approx(float(curves.ct(0.1)))


@pytest.mark.parametrize("phi,ca,ct", [
    ([0.1, 0.2, 0.3], [0.0, 1.0, 2.0], [0.0, 0.1, 0.0]),
    ([0.0, 0.2, 0.1], [0.0, 1.0, 2.0], [0.0, 0.1, 0.0]),
    ([0.0, 0.1], [0.0, 1.0], [0.0, 0.1]),
])
def test_bad_curve_tables(phi, ca, ct):
    with pytest.raises(DataFormatError):
        CharacteristicCurves(phi, ca, ct)


def test_even_fit_raises_degree_until_tolerance():
    phi = np.linspace(0.0, 0.3, 16)
    coeffs, residual = fit_even_polynomial(phi, 1.0 + 3.0 * phi ** 2, 1e-10)
    assert len(coeffs) == 2
    np.testing.assert_allclose(coeffs, [1.0, 3.0], rtol=1e-9)
    assert residual < 1e-10
    with pytest.raises(DomainError):
        fit_even_polynomial(phi, np.abs(phi - 0.15), 1e-12, max_half_degree=2)


def test_cavitation_table(cavitation):
    assert cavitation.c_tilde == pytest.approx(-(0.6 + 25 * 0.09))
    assert float(cavitation.at(-0.1)) == pytest.approx(-(0.6 + 25 * 0.01))
    with pytest.raises(DataFormatError):
        CavitationTable(np.array([0.0, 0.1]), np.array([-0.5, 0.2]))


def test_pressure_jump_and_torque_signs(turbine, curves):
    dp = pressure_jump(np.array([-1.0, 0.0, 1.0]), 20.0, turbine, curves)
    assert dp[0] == pytest.approx(-dp[2])
    assert dp[1] == 0.0
    tq = torque(np.array([-1.0, 1.0]), 20.0, turbine, curves)
    assert tq[0] == pytest.approx(tq[1])


def test_linear_damping_is_the_slope_at_zero_flow(turbine, curves):
    omega_t = 15.0
    v = 1e-6
    slope = float(pressure_jump(v, omega_t, turbine, curves)) / (turbine.flow_area * v)
    assert linear_damping_Lambda(omega_t, turbine, curves) == pytest.approx(slope, rel=1e-4)
    lam = linear_damping_Lambda(omega_t, turbine, curves)
    assert omega_t_for_lambda(lam, turbine, curves) == pytest.approx(omega_t, rel=1e-14)


def test_efficiency_and_diagnostics(turbine, curves):
    eta = efficiency(np.array([0.0, 0.2]), curves)
    assert eta[0] == 0.0
    assert eta[1] == pytest.approx(float(curves.ct(0.2)) / (0.2 * float(curves.ca(0.2))))
    assert cubic_correction_ratio(0.1) == pytest.approx(0.01)
    re = reynolds_number(0.0, 10.0, turbine)
    assert re == pytest.approx(0.74 * 10.0 * 0.38 / 1e-6)


@pytest.mark.parametrize("n", range(11))
def test_sine_power_means(n):
    value, _ = quad(lambda t: math.sin(t) ** n, 0.0, 2.0 * math.pi, epsabs=1e-15, epsrel=1e-15)
    assert float(In_integral(n)) == pytest.approx(value / (2.0 * math.pi), abs=1e-12)


@pytest.mark.parametrize("omega_t", [6.0, 12.0, 25.0])
def test_mean_power_series_matches_cycle_average(turbine, curves, omega_t):
    s0 = math.pi * 0.75 ** 2
    series = mean_power_coefficients(turbine, curves, omega_t, s0)
    assert len(series.coeffs) == len(curves.ct_coeffs) + 1
    omega = 0.8
    theta = np.linspace(0.0, 2.0 * math.pi, 512, endpoint=False)
    for phi_hat in (0.05, 0.15, 0.29):
        amplitude = phi_hat / (series.phi_scale * omega)
        v_hat = omega * amplitude * s0 / turbine.flow_area
        inst = torque(v_hat * np.sin(theta), omega_t, turbine, curves) * omega_t
        assert float(series.power(omega, amplitude)) == pytest.approx(float(np.mean(inst)), rel=1e-8)
        assert series.within_model(omega, amplitude)
    assert not series.within_model(omega, 0.31 / (series.phi_scale * omega))


def test_amplitude_gradient_is_twice_the_conjugate_derivative(turbine, curves):
    series = mean_power_coefficients(turbine, curves, 12.0, math.pi * 0.75 ** 2)
    omega = 0.9
    zeta = 0.3 * np.exp(0.7j)
    h = 1e-7
    d_re = (series.power(omega, zeta + h) - series.power(omega, zeta - h)) / (2 * h)
    d_im = (series.power(omega, zeta + 1j * h) - series.power(omega, zeta - 1j * h)) / (2 * h)
    np.testing.assert_allclose(series.amplitude_gradient(omega, zeta), d_re + 1j * d_im, rtol=1e-6)


@pytest.mark.parametrize("omega,amplitude", [(0.8, 1.0), (2.0, 1.0), (1.5, 0.3)])
def test_pressure_bound_minimum_matches_sampling(turbine, cavitation, const, omega, amplitude):
    s0 = math.pi * 0.75 ** 2
    phases = np.linspace(0.0, 2.0 * math.pi, 100_001)
    sampled = pressure_bound_samples(amplitude, omega, 20.0, -3.65, turbine, cavitation.c_tilde,
                                     const, s0, phases)
    analytic = min_pressure_bound(amplitude, omega, 20.0, -3.65, turbine, cavitation, const, s0)
    assert analytic == pytest.approx(float(sampled.min()), rel=1e-9)
    assert analytic <= float(sampled.min()) * (1 + 1e-12)


def test_pressure_bound_needs_submerged_turbine(turbine, cavitation, const):
    with pytest.raises(DomainError):
        min_pressure_bound(1.0, 1.0, 20.0, 0.5, turbine, cavitation, const, 1.0)
