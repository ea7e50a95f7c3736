"""Local virtual element spaces, projectors and discrete forms."""

import numpy as np
import pytest

from conftest import UNIT_SQUARE, random_polygon

from boussivem.coefficients import Coefficients, TemperatureCoefficient
from boussivem.exceptions import CoefficientOutOfBounds
from boussivem.polyspace import PolygonGeometry, l2_project, n_monomials
from boussivem.vemlocal import (ElementKit, LocalVemSpace, deviator_matrix,
                                edge_dirichlet_load, local_forms,
                                source_moments, tensor_proj)


def unit_coefficients():
    return Coefficients(TemperatureCoefficient("const", 1.0),
                        TemperatureCoefficient("const", 1.0))


def square_space(degree):
    return LocalVemSpace(PolygonGeometry(UNIT_SQUARE), degree)


def constant_field(v):
    return lambda p: np.tile(np.asarray(v, dtype=float), (len(p), 1))


def test_dof_counts():
    sp0 = square_space(0)
    assert (sp0.n_dofs, sp0.n_grad_dofs, sp0.n_perp_dofs) == (4, 0, 0)
    sp1 = square_space(1)
    # 2 edge moments on each of 4 edges + 2 gradient + 1 perp interior dof
    assert (sp1.n_dofs, sp1.n_grad_dofs, sp1.n_perp_dofs) == (11, 2, 1)


def test_constant_field_edge_dofs():
    """The zeroth edge moment is int_e eta.n, so a unit x-field on the unit
    square reads 0 on the bottom, +1 right, 0 top, -1 left."""
    sp0 = square_space(0)
    dofs = sp0.compute_dofs(constant_field((1.0, 0.0)))
    np.testing.assert_allclose(dofs, [0.0, 1.0, 0.0, -1.0], atol=1e-14)
    dofs = sp0.compute_dofs(constant_field((0.0, 1.0)))
    np.testing.assert_allclose(dofs, [-1.0, 0.0, 1.0, 0.0], atol=1e-14)


def test_identity_tensor_dofs():
    sp0 = square_space(0)
    dofs = sp0.compute_tensor_dofs(
        lambda p: np.tile(np.eye(2), (len(p), 1, 1)))
    np.testing.assert_allclose(
        dofs, [0.0, 1.0, 0.0, -1.0, -1.0, 0.0, 1.0, 0.0], atol=1e-14)


def test_polynomial_reproduction_on_random_polygons():
    rng = np.random.default_rng(101)
    for degree in (0, 1):
        for _ in range(20):
            geom = PolygonGeometry(random_polygon(rng))
            space = LocalVemSpace(geom, degree)
            assert space.poly_reproduction_error < 1e-12
            coeff = rng.standard_normal((space.n_r, 2))
            basis = geom.basis(degree)
            dofs = space.compute_dofs(lambda p: basis.eval(p) @ coeff)
            pts = geom.quadrature(4).points
            np.testing.assert_allclose(space.projected_values(dofs, pts),
                                       basis.eval(pts) @ coeff, atol=1e-12)


def test_divergence_of_linear_interpolant():
    space = square_space(1)
    dofs = space.compute_dofs(lambda p: p)  # eta = (x, y), div = 2
    np.testing.assert_allclose(space.divergence_values(dofs), 2.0, atol=1e-12)


def test_divergence_commutes_with_interpolation():
    """div of the interpolant equals the L2 projection of the divergence."""
    rng = np.random.default_rng(55)

    def field(p):
        return np.column_stack((np.sin(p[:, 0]) * p[:, 1] ** 2,
                                np.exp(p[:, 0] - p[:, 1])))

    def divergence(p):
        return (np.cos(p[:, 0]) * p[:, 1] ** 2
                - np.exp(p[:, 0] - p[:, 1]))

    for degree in (0, 1):
        for _ in range(10):
            geom = PolygonGeometry(random_polygon(rng))
            space = LocalVemSpace(geom, degree)
            dofs = space.compute_dofs(field)
            proj = l2_project(geom, degree, divergence, exactness=16)
            pts = geom.quadrature(4).points
            np.testing.assert_allclose(
                space.divergence_values(dofs, pts),
                geom.basis(degree).eval(pts) @ proj, atol=1e-11)


def test_stabilization_annihilates_polynomial_interpolants():
    rng = np.random.default_rng(77)
    for degree in (0, 1):
        for _ in range(10):
            geom = PolygonGeometry(random_polygon(rng))
            space = LocalVemSpace(geom, degree)
            assert np.abs(space.S_base
                          - space.S_base.T).max() < 1e-14
            assert np.linalg.eigvalsh(space.S_base).min() > -1e-13
            coeff = rng.standard_normal((space.n_r, 2))
            basis = geom.basis(degree)
            dofs = space.compute_dofs(lambda p: basis.eval(p) @ coeff)
            assert np.abs(space.S_base @ dofs).max() < 1e-11


def test_unit_viscosity_deviatoric_form():
    """With mu = 1 the flow form of q = diag(1,-1) gives int q:q = 2|E|,
    while the identity tensor is pure trace and produces zero."""
    space = square_space(0)
    kit = ElementKit(space)
    forms = local_forms(kit, unit_coefficients(), np.zeros(space.n_r),
                        np.zeros(2 * space.n_r))
    t_q = space.compute_tensor_dofs(
        lambda p: np.tile(np.diag((1.0, -1.0)), (len(p), 1, 1)))
    t_id = space.compute_tensor_dofs(
        lambda p: np.tile(np.eye(2), (len(p), 1, 1)))
    assert t_q @ forms.A_S @ t_q == pytest.approx(2.0, abs=1e-12)
    assert abs(t_id @ forms.A_S @ t_id) < 1e-12
    assert kit.trace_row @ t_id == pytest.approx(2.0, abs=1e-12)


def test_zero_advection_kills_coupling_forms():
    space = square_space(1)
    kit = ElementKit(space)
    forms = local_forms(kit, unit_coefficients(), np.zeros(space.n_r),
                        np.zeros(2 * space.n_r))
    assert np.abs(forms.O_S).max() == 0.0
    assert np.abs(forms.O_T).max() == 0.0


def test_nonpositive_viscosity_rejected():
    space = square_space(0)
    kit = ElementKit(space)
    bad = Coefficients(TemperatureCoefficient("const", -1.0),
                       TemperatureCoefficient("const", 1.0))
    with pytest.raises(CoefficientOutOfBounds):
        local_forms(kit, bad, np.zeros(space.n_r), np.zeros(2 * space.n_r))
    # exp coefficients stay positive for any temperature, so nothing raises
    safe = Coefficients(TemperatureCoefficient("exp", a=-1.0),
                        TemperatureCoefficient("exp", a=1.0))
    local_forms(kit, safe, np.full(space.n_r, -40.0),
                np.zeros(2 * space.n_r))


def test_edge_dirichlet_load_conventions():
    space = square_space(1)
    load = edge_dirichlet_load(space, 2, lambda p: np.ones(len(p)))
    np.testing.assert_allclose(load, [1.0, 0.0], atol=1e-14)
    # linear data on the top edge (traversed right-to-left in cell order)
    load = edge_dirichlet_load(space, 2, lambda p: p[:, 0])
    assert load[0] == pytest.approx(0.5, abs=1e-13)
    assert abs(load[1]) == pytest.approx(1.0 / (2.0 * np.sqrt(3.0)),
                                         abs=1e-13)


def test_source_moments_constant_vector():
    space = square_space(0)
    mom = source_moments(space, lambda p: np.tile((2.0, 3.0), (len(p), 1)),
                         vector=True)
    np.testing.assert_allclose(mom, [2.0, 3.0], atol=1e-13)
    smom = source_moments(space, lambda p: np.full(len(p), 4.0))
    np.testing.assert_allclose(smom, [4.0], atol=1e-13)


def test_deviator_matrix_examples():
    Dm = deviator_matrix(1)
    np.testing.assert_allclose(Dm @ np.array([1.0, 0.0, 0.0, 1.0]), 0.0,
                               atol=1e-15)
    q = np.array([1.0, 0.5, -0.25, -1.0])
    np.testing.assert_allclose(Dm @ q, q, atol=1e-15)
    # idempotent on any coefficient vector
    rng = np.random.default_rng(9)
    v = rng.standard_normal(4 * n_monomials(1))
    D2 = deviator_matrix(n_monomials(1))
    np.testing.assert_allclose(D2 @ (D2 @ v), D2 @ v, atol=1e-14)


def test_tensor_projection_reproduces_polynomial_tensors():
    rng = np.random.default_rng(123)
    for degree in (0, 1):
        geom = PolygonGeometry(random_polygon(rng))
        space = LocalVemSpace(geom, degree)
        P = tensor_proj(space)
        n_r = space.n_r
        coeff = rng.standard_normal(4 * n_r)
        basis = geom.basis(degree)

        def tensor(p):
            vals = basis.eval(p)
            out = np.empty((len(p), 2, 2))
            out[:, 0, 0] = vals @ coeff[:n_r]
            out[:, 0, 1] = vals @ coeff[n_r:2 * n_r]
            out[:, 1, 0] = vals @ coeff[2 * n_r:3 * n_r]
            out[:, 1, 1] = vals @ coeff[3 * n_r:]
            return out

        dofs = space.compute_tensor_dofs(tensor)
        np.testing.assert_allclose(P @ dofs, coeff, atol=1e-11)
