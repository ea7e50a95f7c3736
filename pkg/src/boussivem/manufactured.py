"""Closed-form benchmark solutions and their forcing terms.

Given exact (u, p, phi) in closed form plus a coefficient pair, every other
field of the five-field system follows by differentiation: the vorticity
gamma = (grad u - grad u^t)/2, the pseudostress
sigma = mu(phi) e(u) - u (x) u - p I, the pseudoheat
rho = kappa(phi) grad(phi) - u phi, and the momentum/energy sources the
chosen fields leave behind. The symbolic work happens once at construction;
all public fields are vectorized numpy callables over (npts, 2) arrays.
"""

import numpy as np
import sympy as sp

from .coefficients import Coefficients, ProblemData, TemperatureCoefficient
from .exceptions import ConfigError

_X, _Y = sp.symbols("x y", real=True)


def _scalar_fn(expr):
    fn = sp.lambdify((_X, _Y), expr, modules="numpy")

    def call(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float)
        # constant expressions lambdify to scalars
        return np.broadcast_to(out, (pts.shape[0],)).copy()

    return call


def _vector_fn(ex, ey):
    fx, fy = _scalar_fn(ex), _scalar_fn(ey)

    def call(points):
        return np.column_stack((fx(points), fy(points)))

    return call


def _tensor_fn(mat):
    comp = [_scalar_fn(mat[i, j]) for i in range(2) for j in range(2)]

    def call(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((pts.shape[0], 2, 2))
        for k in range(4):
            out[:, k // 2, k % 2] = comp[k](pts)
        return out

    return call


def coefficient_expression(coefficient, phi_expr):
    """Symbolic form of a whitelisted coefficient composed with phi."""
    if coefficient.kind == "const":
        return sp.Float(coefficient.value)
    return sp.exp(coefficient.a * phi_expr)


class ManufacturedSolution:
    """Exact fields of a manufactured benchmark plus residual sources.

    ``velocity`` is a pair of sympy expressions (or strings) in x and y and
    must be divergence-free; ``pressure`` should have zero mean over the
    target domain, matching the gauge of the discrete solver. Momentum and
    energy sources are whatever the chosen fields leave of the strong-form
    equations, so the tuple always solves the forced system exactly.
    """

    def __init__(self, velocity, pressure, temperature, coefficients):
        u1, u2 = (sp.sympify(c) for c in velocity)
        p = sp.sympify(pressure)
        phi = sp.sympify(temperature)

        div_u = sp.expand(u1.diff(_X) + u2.diff(_Y))
        if div_u != 0 and sp.simplify(div_u) != 0:
            raise ConfigError("manufactured velocity must be divergence-free")

        mu = coefficients.viscous_scale * coefficient_expression(
            coefficients.mu, phi)
        kappa = coefficient_expression(coefficients.kappa, phi)
        grad_u = sp.Matrix([[u1.diff(_X), u1.diff(_Y)],
                            [u2.diff(_X), u2.diff(_Y)]])
        strain = (grad_u + grad_u.T) / 2
        uu = sp.Matrix([[u1 * u1, u1 * u2], [u2 * u1, u2 * u2]])
        sigma = mu * strain - uu - p * sp.eye(2)
        rho = sp.Matrix([kappa * phi.diff(_X) - u1 * phi,
                         kappa * phi.diff(_Y) - u2 * phi])

        div_sigma = sp.Matrix([sigma[0, 0].diff(_X) + sigma[0, 1].diff(_Y),
                               sigma[1, 0].diff(_X) + sigma[1, 1].diff(_Y)])
        div_rho = rho[0].diff(_X) + rho[1].diff(_Y)
        g = coefficients.buoyancy()
        f_mom = -div_sigma - phi * sp.Matrix([float(g[0]), float(g[1])])

        self.coefficients = coefficients
        self.velocity = _vector_fn(u1, u2)
        self.pressure = _scalar_fn(p)
        self.temperature = _scalar_fn(phi)
        self.vorticity = _scalar_fn((u1.diff(_Y) - u2.diff(_X)) / 2)
        self.pseudostress = _tensor_fn(sigma)
        self.pseudoheat = _vector_fn(rho[0], rho[1])
        self.sigma_divergence = _vector_fn(div_sigma[0], div_sigma[1])
        self.rho_divergence = _scalar_fn(div_rho)
        self.momentum_source = _vector_fn(f_mom[0], f_mom[1])
        self.heat_source = _scalar_fn(-div_rho)

    def problem_data(self):
        """Bundle coefficients, boundary data, and sources for assembly."""
        return ProblemData(self.coefficients, phi_D=self.temperature,
                           f_src=self.momentum_source,
                           q_src=self.heat_source)


def trig_square_solution(coefficients=None):
    """Smooth benchmark on (-1, 1)^2 with exponentially varying coefficients.

    The velocity derives from the stream function
    sin(pi x) sin(pi y) (x^2 - 1)(y^2 - 1), hence is divergence-free with a
    no-slip boundary; the temperature (x^2 - 1)(y^2 - 1) and the zero-mean
    pressure x^2 - y^2 complete the tuple. The default coefficients are
    mu = exp(-phi/4), kappa = exp(phi/4), g = (0, 1); pass a Coefficients
    instance to rederive the forcing terms for a different material law.
    """
    psi = sp.sin(sp.pi * _X) * sp.sin(sp.pi * _Y) * (_X**2 - 1) * (_Y**2 - 1)
    if coefficients is None:
        coefficients = Coefficients(TemperatureCoefficient("exp", a=-0.25),
                                    TemperatureCoefficient("exp", a=0.25),
                                    g=(0.0, 1.0))
    return ManufacturedSolution((psi.diff(_Y), -psi.diff(_X)),
                                _X**2 - _Y**2, (_X**2 - 1) * (_Y**2 - 1),
                                coefficients)
