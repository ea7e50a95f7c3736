"""Coefficient laws and manufactured-solution field consistency."""

import numpy as np
import pytest

from boussivem.coefficients import (Coefficients, ProblemData,
                                    TemperatureCoefficient)
from boussivem.exceptions import CoefficientOutOfBounds, ConfigError
from boussivem.manufactured import ManufacturedSolution, trig_square_solution


def test_coefficient_laws():
    phi = np.array([-1.0, 0.0, 2.0])
    const = TemperatureCoefficient("const", value=3.5)
    np.testing.assert_allclose(const(phi), 3.5)
    np.testing.assert_allclose(const.derivative(phi), 0.0)

    exp = TemperatureCoefficient("exp", a=-0.25)
    np.testing.assert_allclose(exp(phi), np.exp(-0.25 * phi))
    np.testing.assert_allclose(exp.derivative(phi),
                               -0.25 * np.exp(-0.25 * phi))


def test_coefficient_round_trip_and_equality():
    for coeff in (TemperatureCoefficient("const", value=2.0),
                  TemperatureCoefficient("exp", a=0.5)):
        back = TemperatureCoefficient.from_dict(coeff.to_dict())
        assert back == coeff
    assert TemperatureCoefficient("const") != TemperatureCoefficient(
        "const", value=2.0)


def test_unknown_coefficient_kind_rejected():
    with pytest.raises(ConfigError):
        TemperatureCoefficient("linear", value=1.0)


def test_scales_enter_effective_coefficients():
    co = Coefficients(TemperatureCoefficient("const", 2.0),
                      TemperatureCoefficient("const", 3.0),
                      g=(0.0, 1.0), viscous_scale=4.0, buoyancy_scale=10.0)
    phi = np.zeros(3)
    np.testing.assert_allclose(co.mu_eff(phi), 8.0)
    np.testing.assert_allclose(co.kappa_val(phi), 3.0)  # kappa is unscaled
    np.testing.assert_allclose(co.buoyancy(), [0.0, 10.0])


def test_nonpositive_coefficients_rejected():
    bad_mu = Coefficients(TemperatureCoefficient("const", -1.0),
                          TemperatureCoefficient("const", 1.0))
    with pytest.raises(CoefficientOutOfBounds):
        bad_mu.mu_eff(np.zeros(2))
    bad_kappa = Coefficients(TemperatureCoefficient("const", 1.0),
                             TemperatureCoefficient("const", 0.0))
    with pytest.raises(CoefficientOutOfBounds):
        bad_kappa.kappa_val(np.zeros(2))


def test_problem_data_default_dirichlet_is_zero():
    co = Coefficients(TemperatureCoefficient("const", 1.0),
                      TemperatureCoefficient("const", 1.0))
    problem = ProblemData(co)
    np.testing.assert_allclose(problem.phi_D(np.zeros((4, 2))), 0.0)
    assert problem.f_src is None and problem.q_src is None


def test_manufactured_velocity_must_be_divergence_free():
    import sympy
    x, _ = sympy.symbols("x y", real=True)  # the module's symbol convention
    co = Coefficients(TemperatureCoefficient("const", 1.0),
                      TemperatureCoefficient("const", 1.0))
    with pytest.raises(ConfigError):
        ManufacturedSolution((x, sympy.Integer(0)), sympy.Integer(0),
                             sympy.Integer(0), co)


def grad_fd(f, pts, h=1e-6):
    """Central-difference gradient of a scalar field, shape (npts, 2)."""
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    return np.column_stack(((f(pts + ex) - f(pts - ex)) / (2 * h),
                            (f(pts + ey) - f(pts - ey)) / (2 * h)))


def test_manufactured_field_definitions_against_differences():
    """All derived fields follow from velocity/pressure/temperature by the
    stated definitions; verify with central differences at random points."""
    exact = trig_square_solution()
    co = exact.coefficients
    rng = np.random.default_rng(2468)
    pts = rng.uniform(-0.8, 0.8, size=(12, 2))

    u = exact.velocity(pts)
    du0 = grad_fd(lambda p: exact.velocity(p)[:, 0], pts)
    du1 = grad_fd(lambda p: exact.velocity(p)[:, 1], pts)

    # incompressibility and the vorticity convention (curl/2)
    np.testing.assert_allclose(du0[:, 0] + du1[:, 1], 0.0, atol=1e-8)
    np.testing.assert_allclose(exact.vorticity(pts),
                               0.5 * (du0[:, 1] - du1[:, 0]), atol=1e-8)

    # pseudostress = mu * strain - u (x) u - p I
    phi = exact.temperature(pts)
    mu = co.mu_eff(phi)
    p = exact.pressure(pts)
    sig = np.empty((len(pts), 2, 2))
    sig[:, 0, 0] = mu * du0[:, 0] - u[:, 0] * u[:, 0] - p
    sig[:, 0, 1] = 0.5 * mu * (du0[:, 1] + du1[:, 0]) - u[:, 0] * u[:, 1]
    sig[:, 1, 0] = sig[:, 0, 1]
    sig[:, 1, 1] = mu * du1[:, 1] - u[:, 1] * u[:, 1] - p
    np.testing.assert_allclose(exact.pseudostress(pts), sig, atol=1e-7)

    # pseudoheat = kappa grad phi - u phi
    gphi = grad_fd(exact.temperature, pts)
    rho = co.kappa_val(phi)[:, None] * gphi - u * phi[:, None]
    np.testing.assert_allclose(exact.pseudoheat(pts), rho, atol=1e-7)

    # the divergences and sources close the system
    dsig = np.empty((len(pts), 2))
    for i in range(2):
        gx = grad_fd(lambda p, i=i: exact.pseudostress(p)[:, i, 0], pts)
        gy = grad_fd(lambda p, i=i: exact.pseudostress(p)[:, i, 1], pts)
        dsig[:, i] = gx[:, 0] + gy[:, 1]
    np.testing.assert_allclose(exact.sigma_divergence(pts), dsig, atol=1e-5)
    np.testing.assert_allclose(
        exact.momentum_source(pts),
        -dsig - phi[:, None] * co.buoyancy()[None, :], atol=1e-5)

    g0 = grad_fd(lambda p: exact.pseudoheat(p)[:, 0], pts)
    g1 = grad_fd(lambda p: exact.pseudoheat(p)[:, 1], pts)
    drho = g0[:, 0] + g1[:, 1]
    np.testing.assert_allclose(exact.rho_divergence(pts), drho, atol=1e-5)
    np.testing.assert_allclose(exact.heat_source(pts), -drho, atol=1e-5)


def test_problem_data_from_manufactured_solution():
    exact = trig_square_solution()
    problem = exact.problem_data()
    pts = np.array([[0.2, -0.3], [-0.7, 0.4]])
    np.testing.assert_allclose(problem.phi_D(pts), exact.temperature(pts))
    np.testing.assert_allclose(problem.f_src(pts),
                               exact.momentum_source(pts))
    np.testing.assert_allclose(problem.q_src(pts), exact.heat_source(pts))
