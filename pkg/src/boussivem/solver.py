"""Nonlinear drivers for the five-field system.

The Picard iteration mirrors the decoupling used in the analysis: given the
lagged pair (z, phi), first solve the heat subproblem for (rho*, phi*), then
the flow subproblem with (z, phi*) for (sigma*, u*, gamma*), and update
(z, phi) <- (u*, phi*). Newton solves the fully coupled residual with an
analytic Jacobian. Both report convergence through the l2 norm of the
increment of ALL global DoFs.
"""

import json

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Assembler, GlobalDofMap, LinearSystem
from .exceptions import (ConfigError, LinearSolveFailure, NoConvergence,
                         SingularJacobian, SingularMatrix)

_MODES = ("picard", "newton")
_INITS = ("zero", "given")


class SolverConfig:
    def __init__(self, mode="picard", tolerance=1e-6, max_iterations=30,
                 initial="zero", damping=1.0):
        if mode not in _MODES:
            raise ConfigError(f"mode {mode!r} not in {_MODES}")
        if initial not in _INITS:
            raise ConfigError(f"initial {initial!r} not in {_INITS}")
        if not tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if int(max_iterations) < 1:
            raise ConfigError("max_iterations must be at least 1")
        if not 0.0 < damping <= 1.0:
            raise ConfigError("damping must lie in (0, 1]")
        self.mode = mode
        self.tolerance = float(tolerance)
        self.max_iterations = int(max_iterations)
        self.initial = initial
        self.damping = float(damping)


class SolveTrace:
    """Per-iteration increment/residual record, JSON-serializable."""

    def __init__(self, mode, tolerance):
        self.mode = mode
        self.tolerance = tolerance
        self.iterations = []
        self.converged = False

    def record(self, increment, residual, linear_residuals):
        self.iterations.append({
            "iteration": len(self.iterations) + 1,
            "increment": float(increment),
            "residual": float(residual),
            "linear_residuals": [float(r) for r in linear_residuals],
        })

    @property
    def n_iterations(self):
        return len(self.iterations)

    def to_dict(self):
        return {
            "mode": self.mode,
            "tolerance": self.tolerance,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class DiscreteSolution:
    """Five-field coefficient vectors over a mesh."""

    def __init__(self, assembler, state):
        self.assembler = assembler
        self.mesh = assembler.mesh
        self.dofmap = assembler.dofmap
        self.state = state
        parts = assembler.split_state(state)
        self.sigma = parts["sigma"]
        self.u = parts["u"]
        self.gamma = parts["gamma"]
        self.lam = float(parts["lam"])
        self.rho = parts["rho"]
        self.phi = parts["phi"]


def _gauge_elimination(mat, rhs, gidx):
    """Solve a system whose only wide coupling is one gauge row/column.

    The trace-gauge multiplier row is dense across the stress DoFs, which
    wrecks the fill-in of a direct factorization of the full matrix (two
    orders of magnitude at moderate resolutions).  Instead factor the
    gauge-free block, regularized by pinning the DoF with the strongest
    gauge weight, and recover the multiplier together with the pinned DoF
    from a 2x2 Schur system.  The caller re-checks the residual of the
    assembled system, so a badly chosen pin can only cost time, never
    accuracy.
    """
    n = mat.shape[0]
    keep = np.ones(n, dtype=bool)
    keep[gidx] = False
    block = mat[keep][:, keep].tocsc()
    ucol = mat[:, [gidx]].toarray().ravel()[keep]
    vrow = mat[[gidx], :].toarray().ravel()[keep]
    theta = mat[gidx, gidx]
    j = int(np.argmax(np.abs(ucol)))
    if ucol[j] == 0.0:
        raise RuntimeError("gauge column is empty")
    c = float(abs(block).max())
    pin = sp.coo_matrix(([c], ([j], [j])), shape=block.shape)
    lu = spla.splu((block + pin).tocsc())
    xb = lu.solve(rhs[keep])
    xa = lu.solve(ucol)
    ej = np.zeros(n - 1)
    ej[j] = 1.0
    xe = lu.solve(ej)
    small = np.array([[1.0 - c * xe[j], xa[j]],
                      [c * (vrow @ xe), theta - vrow @ xa]])
    small_rhs = np.array([xb[j], rhs[gidx] - vrow @ xb])
    xj, lam = np.linalg.solve(small, small_rhs)
    x = np.empty(n)
    x[keep] = xb + c * xj * xe - lam * xa
    x[gidx] = lam
    return x


def linear_solve(system):
    """Direct sparse solve; returns (x, relative residual)."""
    mat = system.matrix.tocsc()
    rhs = system.rhs
    nb = np.linalg.norm(rhs)
    if system.gauge_index is not None:
        try:
            x = _gauge_elimination(mat, rhs, system.gauge_index)
        except (RuntimeError, np.linalg.LinAlgError):
            x = None
        if x is not None and np.all(np.isfinite(x)):
            resid = np.linalg.norm(mat @ x - rhs) / (nb if nb > 0 else 1.0)
            if resid <= 1e-8:
                return x, resid
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("factorization produced non-finite values")
    resid = np.linalg.norm(mat @ x - rhs) / (nb if nb > 0 else 1.0)
    if resid > 1e-8:
        raise LinearSolveFailure(f"linear residual {resid:.3e}")
    return x, resid


def _pack(dofmap, flow_x, heat_x):
    return np.concatenate((flow_x, heat_x))


def picard_solve(mesh, problem, config, degree=0, assembler=None,
                 initial_state=None):
    """Heat-then-flow fixed-point iteration.

    Returns (DiscreteSolution, SolveTrace); raises NoConvergence with the
    trace attached when max_iterations is exhausted.
    """
    if assembler is None:
        assembler = Assembler(mesh, GlobalDofMap(mesh, degree), problem)
    dofmap = assembler.dofmap
    trace = SolveTrace("picard", config.tolerance)

    state = np.zeros(assembler.coupled_size)
    if config.initial == "given" and initial_state is not None:
        state = initial_state.copy()
    parts = assembler.split_state(state)
    z, phi = parts["u"].copy(), parts["phi"].copy()

    for _ in range(config.max_iterations):
        heat = assembler.heat_system(z, phi)
        heat_x, r_heat = linear_solve(heat)
        phi_star = heat_x[dofmap.phi_offset:]
        flow = assembler.flow_system(z, phi_star)
        flow_x, r_flow = linear_solve(flow)

        new_state = _pack(dofmap, flow_x, heat_x)
        increment = np.linalg.norm(new_state - state)
        state = new_state
        z = flow_x[dofmap.u_offset:dofmap.u_offset + dofmap.n_u].copy()
        phi = phi_star.copy()
        residual = np.linalg.norm(assembler.coupled(state, jacobian=False)[0])
        trace.record(increment, residual, [r_heat, r_flow])
        if increment <= config.tolerance:
            trace.converged = True
            return DiscreteSolution(assembler, state), trace

    raise NoConvergence(
        f"picard did not reach tol {config.tolerance:g} in "
        f"{config.max_iterations} iterations", trace=trace)


def picard_warm_start(assembler, sweeps=1):
    """State after a fixed number of Picard sweeps (no convergence test)."""
    dofmap = assembler.dofmap
    z = np.zeros(dofmap.n_u)
    phi = np.zeros(dofmap.n_phi)
    state = None
    for _ in range(sweeps):
        heat_x, _ = linear_solve(assembler.heat_system(z, phi))
        phi = heat_x[dofmap.phi_offset:]
        flow_x, _ = linear_solve(assembler.flow_system(z, phi))
        z = flow_x[dofmap.u_offset:dofmap.u_offset + dofmap.n_u]
        state = _pack(dofmap, flow_x, heat_x)
    return state


def newton_solve(mesh, problem, config, degree=0, assembler=None,
                 initial_state=None):
    """Damped Newton on the coupled residual."""
    if assembler is None:
        assembler = Assembler(mesh, GlobalDofMap(mesh, degree), problem)
    trace = SolveTrace("newton", config.tolerance)

    x = np.zeros(assembler.coupled_size)
    if config.initial == "given" and initial_state is not None:
        x = initial_state.copy()

    for _ in range(config.max_iterations):
        res, jac = assembler.coupled(x)
        try:
            step, r_lin = linear_solve(LinearSystem(
                jac, -res, gauge_index=assembler.dofmap.lam_index))
        except SingularMatrix as exc:
            raise SingularJacobian(str(exc)) from exc
        x = x + config.damping * step
        increment = config.damping * np.linalg.norm(step)
        trace.record(increment, np.linalg.norm(res), [r_lin])
        if increment <= config.tolerance:
            trace.converged = True
            return DiscreteSolution(assembler, x), trace

    raise NoConvergence(
        f"newton did not reach tol {config.tolerance:g} in "
        f"{config.max_iterations} iterations", trace=trace)
