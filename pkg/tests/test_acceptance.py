"""End-to-end acceptance checks for the five-field scheme.

Covers the refinement sweeps with their rate windows and time budgets, the
published hexagonal error anchors, exactness of the local projectors against
independent oracles, Jacobian/finite-difference agreement, the stability
constants of the two divergence couplings, and the two physical benchmarks
(heated cavity, shell-and-tube disk). Failures here are meaningful: the one
known red is the lowest-order pressure rate, which superconverges past its
first-order window (see the field-by-field sweep test).
"""

import functools
import time

import numpy as np
import pytest

from conftest import random_polygon

from boussivem.assembly import Assembler, GlobalDofMap, inf_sup_constants
from boussivem.cli import example2_config, example3_config, run_example2, \
    run_example3
from boussivem.coefficients import (Coefficients, ProblemData,
                                    TemperatureCoefficient)
from boussivem.manufactured import trig_square_solution
from boussivem.mesh import MeshFamily, Rectangle, generate
from boussivem.polyspace import (PolygonGeometry, gradient_coefficients,
                                 l2_project, n_monomials, polygon_quadrature)
from boussivem.postprocess import (ErrorReport, RateTable, boundary_flux,
                                   compute_errors, max_velocity)
from boussivem.solver import (SolverConfig, newton_solve, picard_solve,
                              picard_warm_start)
from boussivem.vemlocal import (ElementKit, LocalVemSpace, deviator_matrix,
                                local_forms, tensor_proj)

WIDTH2 = Rectangle(-1.0, -1.0, 1.0, 1.0)


def silent(*args, **kwargs):
    pass


@functools.lru_cache(maxsize=None)
def refinement_rates(degree):
    """Rates between the two finest of n = 8..64 uniform quads, plus the
    wall time of the whole sweep."""
    exact = trig_square_solution()
    problem = exact.problem_data()
    reports = []
    start = time.monotonic()
    for n in (8, 16, 32, 64):
        mesh = generate(MeshFamily("UniformQuad", n), WIDTH2)
        solution, _ = picard_solve(mesh, problem, SolverConfig(),
                                   degree=degree)
        reports.append(compute_errors(solution, exact))
    elapsed = time.monotonic() - start
    return RateTable(reports).final_rates(), elapsed


@pytest.mark.parametrize("field", ErrorReport.FIELDS)
def test_lowest_order_rates_on_uniform_quads(field):
    """All six fields should report first-order rates in [0.85, 1.25].

    Known failure: the recovered pressure superconverges (observed rate
    about 1.8 on the finest pair, and the slope keeps steepening under
    refinement), so e_p lands far above this window. The window is asserted
    as specified rather than widened to make the discrepancy visible.
    """
    rates, _ = refinement_rates(0)
    assert 0.85 <= rates[field] <= 1.25


def test_lowest_order_sweep_fits_its_time_budget():
    _, elapsed = refinement_rates(0)
    assert elapsed <= 120.0


@pytest.mark.parametrize("field", ErrorReport.FIELDS)
def test_degree_one_rates_on_uniform_quads(field):
    """Second-order windows [1.8, 2.2]; the superconvergent pressure only
    has to clear the lower edge."""
    rates, _ = refinement_rates(1)
    assert rates[field] >= 1.8
    if field != "e_p":
        assert rates[field] <= 2.2


def test_degree_one_sweep_fits_its_time_budget():
    _, elapsed = refinement_rates(1)
    assert elapsed <= 600.0


def test_hexagonal_errors_near_published_anchors():
    """Lowest-order hexagonal run at mesh size 3.125e-2: the relative flux
    and temperature errors must land within a factor of three of the
    published values 9.403e-2 and 3.994e-2."""
    exact = trig_square_solution()
    mesh = generate(MeshFamily("Hexagonal", 80), WIDTH2)
    assert mesh.h <= 3.125e-2
    solution, trace = picard_solve(mesh, exact.problem_data(),
                                   SolverConfig())
    assert trace.converged
    report = compute_errors(solution, exact)
    for got, anchor in ((report.e_sigma, 9.403e-2),
                        (report.e_phi, 3.994e-2)):
        assert anchor / 3.0 <= got <= anchor * 3.0


def test_l2_projection_matches_dense_gram_oracle():
    """Project random quintic polynomials so that both the package rule and
    an independently refined rule integrate every moment exactly; the
    projection coefficients must then agree to 1e-12 relative."""
    rng = np.random.default_rng(1207)
    for trial in range(100):
        geom = PolygonGeometry(random_polygon(rng))
        degree = trial % 3
        fbasis = geom.basis(5)
        fcoeff = rng.standard_normal(n_monomials(5))

        def f(p):
            return fbasis.eval(p) @ fcoeff

        got = l2_project(geom, degree, f)

        quad = polygon_quadrature(geom.vertices, 5 + degree + 3)
        vals = geom.basis(degree).eval(quad.points)
        gram = vals.T @ (quad.weights[:, None] * vals)
        rhs = vals.T @ (quad.weights * f(quad.points))
        want = np.linalg.solve(gram, rhs)
        err = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert err <= 1e-12


def test_interpolation_reproduces_polynomials_and_commutes_with_div():
    """Two exactness properties of the canonical flux interpolant on random
    polygons: the element projection returns interpolated polynomials
    unchanged, and taking the divergence commutes with interpolation."""
    rng = np.random.default_rng(808)
    for trial in range(100):
        degree = trial % 2
        geom = PolygonGeometry(random_polygon(rng))
        space = LocalVemSpace(geom, degree)
        basis = geom.basis(degree)
        pts = geom.quadrature(4).points

        coeff = rng.standard_normal((space.n_r, 2))
        dofs = space.compute_dofs(lambda p: basis.eval(p) @ coeff)
        got = space.projected_values(dofs, pts)
        want = basis.eval(pts) @ coeff
        assert np.abs(got - want).max() <= 1e-12 * max(
            1.0, np.abs(want).max())

        rich = geom.basis(degree + 1)
        rcoeff = rng.standard_normal((n_monomials(degree + 1), 2))
        dofs = space.compute_dofs(lambda p: rich.eval(p) @ rcoeff)
        Gx, Gy = gradient_coefficients(degree + 1, geom.diameter)
        div_coeff = Gx @ rcoeff[:, 0] + Gy @ rcoeff[:, 1]
        got = space.divergence_values(dofs, pts)
        want = basis.eval(pts) @ div_coeff
        assert np.abs(got - want).max() <= 1e-12 * max(
            1.0, np.abs(want).max())


def test_constant_viscosity_flow_form_is_exact_on_interpolants():
    """Patch test for the weighted flow form: with constant viscosity the
    stabilization contributes nothing on interpolated polynomial tensors,
    and pairing such an interpolant with any discrete tensor reproduces the
    weighted deviatoric integral exactly."""
    mu_value = 2.5
    co = Coefficients(TemperatureCoefficient("const", mu_value),
                      TemperatureCoefficient("const", 1.0))
    rng = np.random.default_rng(606)
    for trial in range(40):
        degree = trial % 2
        geom = PolygonGeometry(random_polygon(rng))
        space = LocalVemSpace(geom, degree)
        kit = ElementKit(space)
        forms = local_forms(kit, co, np.zeros(space.n_r),
                            np.zeros(2 * space.n_r))
        n_r = space.n_r
        basis = geom.basis(degree)
        qcoeff = rng.standard_normal(4 * n_r)

        def tensor(p):
            vals = basis.eval(p)
            out = np.empty((len(p), 2, 2))
            out[:, 0, 0] = vals @ qcoeff[:n_r]
            out[:, 0, 1] = vals @ qcoeff[n_r:2 * n_r]
            out[:, 1, 0] = vals @ qcoeff[2 * n_r:3 * n_r]
            out[:, 1, 1] = vals @ qcoeff[3 * n_r:]
            return out

        q_dofs = space.compute_tensor_dofs(tensor)
        assert np.abs(kit.S2 @ q_dofs).max() <= 1e-11

        tau = rng.standard_normal(2 * space.n_dofs)
        got = q_dofs @ forms.A_S @ tau

        Dm = deviator_matrix(n_r)
        dev_q = Dm @ qcoeff
        dev_tau = Dm @ (tensor_proj(space) @ tau)
        quad = geom.quadrature(2 * degree + 4)
        vals = basis.eval(quad.points)
        want = 0.0
        for comp in range(4):
            sl = slice(comp * n_r, (comp + 1) * n_r)
            want += quad.weights @ ((vals @ dev_q[sl])
                                    * (vals @ dev_tau[sl]))
        want /= mu_value
        assert abs(got - want) <= 1e-11 * max(1.0, abs(want))


def test_coupled_jacobian_matches_central_differences():
    """Assembled Jacobian of the five-field residual vs a full central
    finite-difference Jacobian at a random state, entrywise to 1e-6 of the
    largest entry."""
    mesh = generate(MeshFamily("UniformQuad", 4), WIDTH2)
    exact = trig_square_solution()
    asm = Assembler(mesh, GlobalDofMap(mesh, 0), exact.problem_data())
    rng = np.random.default_rng(4242)
    x = 0.1 * rng.standard_normal(asm.coupled_size)
    jac = asm.coupled(x)[1].toarray()
    fd = np.empty_like(jac)
    h = 1e-6
    for j in range(asm.coupled_size):
        step = np.zeros(asm.coupled_size)
        step[j] = h
        rp = asm.coupled(x + step, jacobian=False)[0]
        rm = asm.coupled(x - step, jacobian=False)[0]
        fd[:, j] = (rp - rm) / (2.0 * h)
    assert np.abs(jac - fd).max() <= 1e-6 * np.abs(jac).max()


def test_iteration_budgets_and_scheme_agreement():
    """On the n=16 benchmark mesh the fixed-point iteration meets 1e-6
    within 30 sweeps, Newton from a single warm-start sweep within 8 steps,
    and the two solvers agree to 1e-8 on every coefficient when both are
    pushed to a tight tolerance."""
    exact = trig_square_solution()
    problem = exact.problem_data()
    mesh = generate(MeshFamily("UniformQuad", 16), WIDTH2)

    _, tr_picard = picard_solve(mesh, problem,
                                SolverConfig(tolerance=1e-6,
                                             max_iterations=30))
    assert tr_picard.converged
    assert tr_picard.n_iterations <= 30

    asm = Assembler(mesh, GlobalDofMap(mesh, 0), problem)
    warm = picard_warm_start(asm, sweeps=1)
    _, tr_newton = newton_solve(
        mesh, problem,
        SolverConfig(mode="newton", tolerance=1e-6, max_iterations=8,
                     initial="given"),
        assembler=asm, initial_state=warm)
    assert tr_newton.converged
    assert tr_newton.n_iterations <= 8

    tight_p, _ = picard_solve(mesh, problem,
                              SolverConfig(tolerance=1e-11,
                                           max_iterations=60))
    tight_n, _ = newton_solve(
        mesh, problem,
        SolverConfig(mode="newton", tolerance=1e-11, max_iterations=20,
                     initial="given"),
        assembler=asm, initial_state=warm)
    assert np.abs(tight_p.state - tight_n.state).max() <= 1e-8


def test_divergence_coupling_stability_constants():
    """Smallest scaled singular values of the flow and heat couplings on
    the degree-1 uniform-quad ladder, frozen when first measured; a drift
    beyond 20% signals a change in the discrete inf-sup behaviour."""
    frozen = {4: (0.336306, 0.910767),
              8: (0.323523, 0.911797),
              16: (0.317754, 0.911863),
              32: (0.316268, 0.911867)}
    for n, (want_flow, want_heat) in frozen.items():
        mesh = generate(MeshFamily("UniformQuad", n), WIDTH2)
        beta_flow, beta_heat = inf_sup_constants(mesh, degree=1)
        assert abs(beta_flow - want_flow) <= 0.2 * want_flow
        assert abs(beta_heat - want_heat) <= 0.2 * want_heat


def test_zero_buoyancy_and_data_give_exact_zero():
    co = Coefficients(TemperatureCoefficient("const", 1.0),
                      TemperatureCoefficient("const", 1.0), g=(0.0, 0.0))
    mesh = generate(MeshFamily("DistortedQuad", 4), WIDTH2)
    solution, trace = picard_solve(mesh, ProblemData(co),
                                   SolverConfig(tolerance=1e-12))
    assert trace.converged
    assert trace.n_iterations == 1
    assert np.abs(solution.state).max() == 0.0


def test_heated_cavity_benchmark(tmp_path):
    """The cavity at Ra = 4000, Pr = 0.5 converges with the preset solver,
    and scaling Ra down to 1e-6 collapses the convective velocity by more
    than three orders of magnitude."""
    solution, trace = run_example2(
        example2_config(output_dir=str(tmp_path)), log=silent)
    assert trace.converged
    strong = max_velocity(solution)
    assert strong > 1.0

    weak_sol, weak_trace = run_example2(
        example2_config(output_dir=str(tmp_path), ra=1e-6), log=silent)
    assert weak_trace.converged
    assert max_velocity(weak_sol) <= 1e-3 * strong


def test_shell_and_tube_benchmark(tmp_path):
    """The disk-with-holes configuration at Ra = 100, Pr = 1 converges and
    conserves energy: the signed boundary fluxes of the pseudoheat cancel
    to 1e-8 of their gross (absolute) total."""
    solution, trace = run_example3(
        example3_config(output_dir=str(tmp_path)), log=silent)
    assert trace.converged
    total, per_edge = boundary_flux(solution)
    gross = sum(abs(v) for v in per_edge.values())
    assert gross > 0.0
    assert abs(total) <= 1e-8 * gross
