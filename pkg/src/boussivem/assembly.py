"""Global DoF numbering and sparse assembly of the coupled systems.

Unknown ordering: the flow block is [sigma, u, gamma, lambda] where lambda
is the single Lagrange multiplier of the zero-mean-trace constraint; the
heat block is [rho, phi]. The coupled Newton state concatenates both.

Shared edge DoFs are stored once with a global orientation (edge direction
from the lower to the higher vertex index); a cell traversing an edge
against that direction sees the moment against the reversed Legendre
parameter and the flipped normal, which multiplies dof j by (-1)^(j+1).
"""

import numpy as np
import scipy.sparse as sp

from .coefficients import ProblemData
from .mesh import GAMMA_D, GAMMA_N
from .vemlocal import (ElementKit, LocalVemSpace, edge_dirichlet_load,
                       local_forms, newton_blocks, source_moments)


class GlobalDofMap:
    """Five-field DoF numbering over a mesh for one polynomial degree."""

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = r = int(degree)
        # probe one cell for the (mesh-independent) interior dof count
        probe = LocalVemSpace(mesh.cell_geometry(0), r)
        self.n_r = probe.n_r
        self.n_int = probe.n_grad_dofs + probe.n_perp_dofs

        ne, nc = len(mesh.edges), len(mesh.cells)
        per_edge = r + 1
        self.per_edge = per_edge
        self.n_sigma = 2 * per_edge * ne + 2 * self.n_int * nc
        self.n_u = 2 * self.n_r * nc
        self.n_gamma = self.n_r * nc
        self.n_rho = per_edge * ne + self.n_int * nc
        self.n_phi = self.n_r * nc

        self.sigma_int_offset = 2 * per_edge * ne
        self.rho_int_offset = per_edge * ne
        self.flow_size = self.n_sigma + self.n_u + self.n_gamma + 1
        self.heat_size = self.n_rho + self.n_phi
        self.u_offset = self.n_sigma
        self.gamma_offset = self.n_sigma + self.n_u
        self.lam_index = self.flow_size - 1
        self.phi_offset = self.n_rho

        # rho edge DoFs on Gamma_N are essential (eta.n = 0)
        constrained = []
        for e in mesh.boundary_edges(GAMMA_N):
            constrained.extend(range(per_edge * e, per_edge * (e + 1)))
        self.constrained_rho = np.asarray(sorted(constrained), dtype=int)

        self._build_cell_maps()

    def _build_cell_maps(self):
        mesh, r = self.mesh, self.degree
        per_edge = self.per_edge
        self.rho_index, self.rho_sign = [], []
        self.u_slices, self.gamma_slices, self.phi_slices = [], [], []
        flip = np.array([(-1.0) ** (j + 1) for j in range(per_edge)])
        for c, cell in enumerate(mesh.cells):
            idx, sgn = [], []
            for edge_id, same_dir in mesh.cell_edges[c]:
                base = per_edge * edge_id
                idx.extend(range(base, base + per_edge))
                sgn.extend(np.ones(per_edge) if same_dir else flip)
            base = self.rho_int_offset + self.n_int * c
            idx.extend(range(base, base + self.n_int))
            sgn.extend(np.ones(self.n_int))
            self.rho_index.append(np.asarray(idx, dtype=int))
            self.rho_sign.append(np.asarray(sgn))
            self.u_slices.append(slice(2 * self.n_r * c, 2 * self.n_r * (c + 1)))
            self.gamma_slices.append(slice(self.n_r * c, self.n_r * (c + 1)))
            self.phi_slices.append(slice(self.n_r * c, self.n_r * (c + 1)))

    def sigma_maps(self, c):
        """Global indices/signs of the stacked tensor dofs of cell c."""
        mesh = self.mesh
        per_edge, n_int = self.per_edge, self.n_int
        rows = []
        for row in (0, 1):
            for edge_id, _ in mesh.cell_edges[c]:
                base = 2 * per_edge * edge_id + row * per_edge
                rows.extend(range(base, base + per_edge))
            base = self.sigma_int_offset + 2 * n_int * c + row * n_int
            rows.extend(range(base, base + n_int))
        idx = np.asarray(rows, dtype=int)
        local_sign = self.rho_sign[c]
        return idx, np.concatenate((local_sign, local_sign))


def build_dofmap(mesh, degree):
    return GlobalDofMap(mesh, degree)


class LinearSystem:
    """Triplet-assembled sparse system with constraint bookkeeping.

    gauge_index marks the row/column of the trace-gauge multiplier when the
    system has one; the linear solver eliminates it separately because the
    row is dense across the stress DoFs.
    """

    def __init__(self, matrix, rhs, constrained=(), gauge_index=None):
        self.matrix = matrix
        self.rhs = rhs
        self.constrained = np.asarray(constrained, dtype=int)
        self.gauge_index = gauge_index


def _compress(rows, cols, vals, size, constrained=()):
    """Deterministic triplet compression with symmetric elimination.

    Triplets are sorted canonically so assembly order (e.g. rotated cell
    vertex cycles) cannot change the floating-point result.
    """
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if len(constrained):
        mask = np.ones(size, dtype=bool)
        mask[constrained] = False
        keep = mask[rows] & mask[cols]
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        rows = np.concatenate((rows, constrained))
        cols = np.concatenate((cols, constrained))
        vals = np.concatenate((vals, np.ones(len(constrained))))
    order = np.lexsort((vals, cols, rows))
    mat = sp.coo_matrix(
        (vals[order], (rows[order], cols[order])), shape=(size, size))
    return mat.tocsr()


class Assembler:
    """Element caches plus the three system assembly entry points."""

    def __init__(self, mesh, dofmap, problem):
        if not isinstance(problem, ProblemData):
            raise TypeError("problem must be a ProblemData")
        self.mesh = mesh
        self.dofmap = dofmap
        self.problem = problem
        r = dofmap.degree

        self.spaces = [LocalVemSpace(mesh.cell_geometry(c), r)
                       for c in range(len(mesh.cells))]
        self.kits = [ElementKit(s) for s in self.spaces]
        self.sigma_maps = [dofmap.sigma_maps(c) for c in range(len(mesh.cells))]

        coeffs = problem.coefficients
        self.g = coeffs.buoyancy()
        self.f_mom = [source_moments(s, problem.f_src, vector=True)
                      if problem.f_src is not None else None
                      for s in self.spaces]
        self.q_mom = [source_moments(s, problem.q_src)
                      if problem.q_src is not None else None
                      for s in self.spaces]
        self._heat_loads()

    def _heat_loads(self):
        """Per-cell Dirichlet load vectors <eta.n, phi_D> over Gamma_D."""
        mesh, dofmap = self.mesh, self.dofmap
        r = dofmap.degree
        self.F_T = []
        for c in range(len(mesh.cells)):
            space = self.spaces[c]
            load = np.zeros(space.n_dofs)
            for i, (edge_id, _) in enumerate(mesh.cell_edges[c]):
                if mesh.edge_tags[edge_id] != GAMMA_D:
                    continue
                if mesh.edge_cells[edge_id][1] != -1:
                    continue  # interior edge, not a boundary segment
                sl = space.edge_slice(i)
                load[sl] = edge_dirichlet_load(space, i, self.problem.phi_D,
                                               npts=max(10, r + 2))
            self.F_T.append(load)

    # -- load helpers ------------------------------------------------------

    def _flow_rhs_cell(self, c, phi_cell):
        """Moment vector of -(phi g + f) against the velocity basis."""
        Hr = self.spaces[c].Hr
        hp = Hr @ phi_cell
        rhs = -np.concatenate((self.g[0] * hp, self.g[1] * hp))
        if self.f_mom[c] is not None:
            rhs -= self.f_mom[c]
        return rhs

    # -- linear subproblem systems -----------------------------------------

    def flow_system(self, z_global, phi_global):
        """Saddle system of the flow subproblem at lagged (z, phi)."""
        dofmap = self.dofmap
        size = dofmap.flow_size
        rows, cols, vals = [], [], []
        rhs = np.zeros(size)
        lam = dofmap.lam_index
        for c in range(len(self.mesh.cells)):
            kit = self.kits[c]
            phi_cell = phi_global[dofmap.phi_slices[c]]
            z_cell = z_global[dofmap.u_slices[c]]
            forms = local_forms(kit, self.problem.coefficients, phi_cell,
                                z_cell)
            sidx, ssgn = self.sigma_maps[c]
            uidx = np.arange(dofmap.u_offset + dofmap.u_slices[c].start,
                             dofmap.u_offset + dofmap.u_slices[c].stop)
            gidx = np.arange(dofmap.gamma_offset + dofmap.gamma_slices[c].start,
                             dofmap.gamma_offset + dofmap.gamma_slices[c].stop)

            _scatter(rows, cols, vals, forms.A_S, sidx, sidx, ssgn, ssgn)
            tau_u = forms.O_S + kit.B_S_div.T
            _scatter(rows, cols, vals, tau_u, sidx, uidx, ssgn, None)
            _scatter(rows, cols, vals, kit.B_S_div, uidx, sidx, None, ssgn)
            _scatter(rows, cols, vals, kit.B_S_skw.T, sidx, gidx, ssgn, None)
            _scatter(rows, cols, vals, kit.B_S_skw, gidx, sidx, None, ssgn)
            trow = kit.trace_row * ssgn
            rows.append(sidx)
            cols.append(np.full(len(sidx), lam))
            vals.append(trow)
            rows.append(np.full(len(sidx), lam))
            cols.append(sidx)
            vals.append(trow)
            rhs[uidx] += self._flow_rhs_cell(c, phi_cell)
        return LinearSystem(_compress(rows, cols, vals, size), rhs,
                            gauge_index=lam)

    def heat_system(self, z_global, phi_global):
        """Saddle system of the heat subproblem at lagged (z, phi)."""
        dofmap = self.dofmap
        size = dofmap.heat_size
        rows, cols, vals = [], [], []
        rhs = np.zeros(size)
        for c in range(len(self.mesh.cells)):
            kit = self.kits[c]
            phi_cell = phi_global[dofmap.phi_slices[c]]
            z_cell = z_global[dofmap.u_slices[c]]
            forms = local_forms(kit, self.problem.coefficients, phi_cell,
                                z_cell)
            ridx = dofmap.rho_index[c]
            rsgn = dofmap.rho_sign[c]
            pidx = np.arange(dofmap.phi_offset + dofmap.phi_slices[c].start,
                             dofmap.phi_offset + dofmap.phi_slices[c].stop)

            _scatter(rows, cols, vals, forms.A_T, ridx, ridx, rsgn, rsgn)
            _scatter(rows, cols, vals, forms.O_T + kit.B_T.T, ridx, pidx,
                     rsgn, None)
            _scatter(rows, cols, vals, kit.B_T, pidx, ridx, None, rsgn)
            rhs[ridx] += rsgn * self.F_T[c]
            if self.q_mom[c] is not None:
                rhs[pidx] -= self.q_mom[c]
        cons = self.dofmap.constrained_rho
        matrix = _compress(rows, cols, vals, size, cons)
        rhs[cons] = 0.0
        return LinearSystem(matrix, rhs, cons)

    # -- coupled residual and Jacobian -------------------------------------

    def split_state(self, x):
        """Views of the coupled state [sigma,u,gamma,lam,rho,phi]."""
        d = self.dofmap
        o = d.flow_size
        return {
            "sigma": x[:d.n_sigma],
            "u": x[d.u_offset:d.u_offset + d.n_u],
            "gamma": x[d.gamma_offset:d.gamma_offset + d.n_gamma],
            "lam": x[d.lam_index],
            "rho": x[o:o + d.n_rho],
            "phi": x[o + d.phi_offset:o + d.phi_offset + d.n_phi],
        }

    @property
    def coupled_size(self):
        return self.dofmap.flow_size + self.dofmap.heat_size

    def coupled(self, x, jacobian=True):
        """Residual (and Jacobian) of the full five-field scheme at x."""
        dofmap = self.dofmap
        size = self.coupled_size
        parts = self.split_state(x)
        lam = dofmap.lam_index
        off = dofmap.flow_size
        res = np.zeros(size)
        rows, cols, vals = [], [], []
        coeffs = self.problem.coefficients

        for c in range(len(self.mesh.cells)):
            kit = self.kits[c]
            phi_cell = parts["phi"][dofmap.phi_slices[c]]
            u_cell = parts["u"][dofmap.u_slices[c]]
            gam_cell = parts["gamma"][dofmap.gamma_slices[c]]
            forms = local_forms(kit, coeffs, phi_cell, u_cell)

            sidx, ssgn = self.sigma_maps[c]
            ridx = dofmap.rho_index[c]
            rsgn = dofmap.rho_sign[c]
            uidx = np.arange(dofmap.u_offset + dofmap.u_slices[c].start,
                             dofmap.u_offset + dofmap.u_slices[c].stop)
            gidx = np.arange(dofmap.gamma_offset + dofmap.gamma_slices[c].start,
                             dofmap.gamma_offset + dofmap.gamma_slices[c].stop)
            pidx = off + dofmap.phi_offset + np.arange(
                dofmap.phi_slices[c].start, dofmap.phi_slices[c].stop)
            hidx = off + ridx

            sig_loc = ssgn * parts["sigma"][sidx]
            rho_loc = rsgn * parts["rho"][ridx]

            res_tau = (forms.A_S @ sig_loc + forms.O_S @ u_cell
                       + kit.B_S_div.T @ u_cell + kit.B_S_skw.T @ gam_cell
                       + kit.trace_row * parts["lam"])
            res[sidx] += ssgn * res_tau
            res[uidx] += (kit.B_S_div @ sig_loc
                          - self._flow_rhs_cell(c, phi_cell))
            res[gidx] += kit.B_S_skw @ sig_loc
            res[lam] += kit.trace_row @ sig_loc
            res_eta = (forms.A_T @ rho_loc + forms.O_T @ phi_cell
                       + kit.B_T.T @ phi_cell - self.F_T[c])
            res[hidx] += rsgn * res_eta
            qm = self.q_mom[c]
            res[pidx] += kit.B_T @ rho_loc + (qm if qm is not None else 0.0)

            if not jacobian:
                continue
            K_tau_u, K_tau_phi, K_eta_u, K_eta_phi = newton_blocks(
                kit, coeffs, forms, sig_loc, u_cell, rho_loc, phi_cell)

            _scatter(rows, cols, vals, forms.A_S, sidx, sidx, ssgn, ssgn)
            _scatter(rows, cols, vals, K_tau_u + kit.B_S_div.T, sidx, uidx,
                     ssgn, None)
            _scatter(rows, cols, vals, K_tau_phi, sidx, pidx, ssgn, None)
            _scatter(rows, cols, vals, kit.B_S_skw.T, sidx, gidx, ssgn, None)
            trow = kit.trace_row * ssgn
            rows.append(sidx)
            cols.append(np.full(len(sidx), lam))
            vals.append(trow)
            rows.append(np.full(len(sidx), lam))
            cols.append(sidx)
            vals.append(trow)

            _scatter(rows, cols, vals, kit.B_S_div, uidx, sidx, None, ssgn)
            Hr = self.spaces[c].Hr
            gbuoy = np.vstack((self.g[0] * Hr, self.g[1] * Hr))
            _scatter(rows, cols, vals, gbuoy, uidx, pidx, None, None)
            _scatter(rows, cols, vals, kit.B_S_skw, gidx, sidx, None, ssgn)

            _scatter(rows, cols, vals, forms.A_T, hidx, hidx, rsgn, rsgn)
            _scatter(rows, cols, vals,
                     forms.O_T + kit.B_T.T + K_eta_phi, hidx, pidx, rsgn, None)
            _scatter(rows, cols, vals, K_eta_u, hidx, uidx, rsgn, None)
            _scatter(rows, cols, vals, kit.B_T, pidx, hidx, None, rsgn)

        cons = off + self.dofmap.constrained_rho
        res[cons] = 0.0
        if not jacobian:
            return res, None
        matrix = _compress(rows, cols, vals, size, cons)
        return res, matrix


def _scatter(rows, cols, vals, block, ridx, cidx, rsgn, csgn):
    """Append the dense block's triplets with orientation signs applied."""
    b = block
    if rsgn is not None:
        b = rsgn[:, None] * b
    if csgn is not None:
        b = b * csgn[None, :]
    rows.append(np.repeat(ridx, len(cidx)))
    cols.append(np.broadcast_to(cidx, b.shape).ravel())
    vals.append(b.ravel())


def export_matrix_market(system, path):
    """Write the compressed matrix (and rhs) for external validation."""
    from scipy.io import mmwrite

    mmwrite(str(path), system.matrix)
    np.savetxt(str(path) + ".rhs.txt", system.rhs, fmt="%.17e")


def _smallest_coupling_value(B, G, M):
    """sqrt of the smallest eigenvalue of the pencil (B G^-1 B^T, M)."""
    import scipy.linalg
    import scipy.sparse.linalg as spla

    lu = spla.splu(G.tocsc())
    X = lu.solve(B.toarray().T)
    S = np.asarray(B @ X)
    lam = scipy.linalg.eigh(S, M.toarray(), eigvals_only=True,
                            subset_by_index=[0, 0])
    return float(np.sqrt(max(lam[0], 0.0)))


def inf_sup_constants(mesh, degree=1):
    """Smallest scaled singular values of the two divergence couplings.

    For the flow coupling this is the generalized singular value

        min over (v, delta)  max over tau  b_S(tau, (v, delta))
                                           / (|tau|_flux |(v, delta)|_0)

    and analogously for the heat coupling over (psi, eta). The flux norm
    is the computable Hilbert surrogate: the stabilized projected L2
    inner product plus the exact divergence L2 term (the divergence of a
    flux field is a known polynomial). The vorticity slot carries the
    Frobenius norm of its skew tensor. The continuous analysis uses
    non-Hilbert exponents, so these values are monitoring quantities: a
    stable discretization keeps them bounded away from zero under
    refinement.

    Monitoring defaults to degree 1: at the lowest order the skew
    coupling alone is not uniformly stable in these surrogate norms (its
    scaled singular value shrinks linearly with the mesh size, the usual
    weak-symmetry gap of lowest-order flux elements), while the
    divergence pairings are uniform at every degree. Returns
    (beta_flow, beta_heat).
    """
    dm = GlobalDofMap(mesh, degree)
    nc = len(mesh.cells)
    b_f, g_f, m_f = ([], [], []), ([], [], []), ([], [], [])
    b_h, g_h, m_h = ([], [], []), ([], [], []), ([], [], [])
    for c in range(nc):
        space = LocalVemSpace(mesh.cell_geometry(c), degree)
        kit = ElementKit(space)
        n_r, n = space.n_r, space.n_dofs
        dd = space.DivMap.T @ space.Hr @ space.DivMap

        sidx, ssgn = dm.sigma_maps(c)
        uidx = np.arange(dm.u_slices[c].start, dm.u_slices[c].stop)
        gidx = dm.n_u + np.arange(dm.gamma_slices[c].start,
                                  dm.gamma_slices[c].stop)
        _scatter(*b_f, kit.B_S_div, uidx, sidx, None, ssgn)
        _scatter(*b_f, kit.B_S_skw, gidx, sidx, None, ssgn)
        G = kit.S2.copy()
        for comp in range(4):
            blk = kit.P[comp * n_r:(comp + 1) * n_r]
            G += blk.T @ space.Hr @ blk
        G[:n, :n] += dd
        G[n:, n:] += dd
        _scatter(*g_f, G, sidx, sidx, ssgn, ssgn)
        _scatter(*m_f, space.H2, uidx, uidx, None, None)
        _scatter(*m_f, 2.0 * space.Hr, gidx, gidx, None, None)

        ridx, rsgn = dm.rho_index[c], dm.rho_sign[c]
        pidx = np.arange(dm.phi_slices[c].start, dm.phi_slices[c].stop)
        _scatter(*b_h, kit.B_T, pidx, ridx, None, rsgn)
        Gt = space.S_base + dd
        for comp in range(2):
            blk = space.ProjMap[comp * n_r:(comp + 1) * n_r]
            Gt += blk.T @ space.Hr @ blk
        _scatter(*g_h, Gt, ridx, ridx, rsgn, rsgn)
        _scatter(*m_h, space.Hr, pidx, pidx, None, None)

    def build(trip, shape):
        return sp.coo_matrix(
            (np.concatenate(trip[2]),
             (np.concatenate(trip[0]), np.concatenate(trip[1]))),
            shape=shape).tocsr()

    n_w = dm.n_u + dm.n_gamma
    beta_flow = _smallest_coupling_value(
        build(b_f, (n_w, dm.n_sigma)), build(g_f, (dm.n_sigma, dm.n_sigma)),
        build(m_f, (n_w, n_w)))
    beta_heat = _smallest_coupling_value(
        build(b_h, (dm.n_phi, dm.n_rho)), build(g_h, (dm.n_rho, dm.n_rho)),
        build(m_h, (dm.n_phi, dm.n_phi)))
    return beta_flow, beta_heat
