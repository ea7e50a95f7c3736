"""Local divergence-conforming virtual element spaces on one polygon.

The vector space X_r(E) contains fields with polynomial divergence (degree r),
polynomial rotor (degree r-1) and polynomial edge-normal traces (degree r per
edge). Its degrees of freedom are

* edge moments of the normal trace against a dimensionless Legendre basis
  (the zeroth moment is the plain net flux through the edge),
* interior moments against an L2-orthonormalized basis of grad(P_r) \ {0},
* interior moments against an L2-orthonormal basis of P_r^perp.

The interior test sets are orthonormalized so the plain dofi-dofi
stabilization is spectrally equivalent to the L2 form with mesh-independent
constants.

The tensor space is two independent row copies of the vector space; tensor
dof vectors are stacked [row0, row1] and tensor polynomial coefficients
[row0_x, row0_y, row1_x, row1_y].
"""

import numpy as np

from . import polyspace
from .exceptions import RankDeficiency
from .polyspace import (edge_legendre, edge_rule, gradient_columns,
                        n_monomials, orthonormalize, solve_gram, vector_gram)


def _embed_vector(cols, n_from, n_to):
    """Zero-pad stacked vector coefficients from degree block n_from to n_to."""
    out = np.zeros((2 * n_to, cols.shape[1]))
    out[:n_from] = cols[:n_from]
    out[n_to:n_to + n_from] = cols[n_from:]
    return out


class LocalVemSpace:
    """Projectors, divergence and stabilization matrices for X_r(E)."""

    def __init__(self, geom, degree):
        self.geom = geom
        self.degree = r = int(degree)
        n_r = n_monomials(r)
        n_r1 = n_monomials(r + 1)
        self.n_r, self.n_r1 = n_r, n_r1

        self.exactness = 2 * r + 6
        self.quad = geom.quadrature(self.exactness)
        basis1 = geom.basis(r + 1)
        self.Bs1 = basis1.eval(self.quad.points)      # (nq, n_r1)
        self.Bs = self.Bs1[:, :n_r]
        w = self.quad.weights
        self.H1 = (self.Bs1 * w[:, None]).T @ self.Bs1
        self.Hr = self.H1[:n_r, :n_r]
        self.H2 = vector_gram(self.Hr)
        self.area_row = self.H1[0, :n_r]              # integrals of monomials

        # edge tables: Legendre x monomial integrals per edge
        self.edge_npts = r + 2
        self.edge_tables = []
        for i in range(geom.n_edges):
            pts, ew, t = edge_rule(geom.edge_starts[i], geom.edge_ends[i],
                                   self.edge_npts)
            phi = edge_legendre(t, r)                  # (npts, r+1)
            mono = basis1.eval(pts)                    # (npts, n_r1)
            self.edge_tables.append(phi.T @ (ew[:, None] * mono))

        # interior test sets
        if r > 0:
            grads = _embed_vector(gradient_columns(r, geom.diameter),
                                  n_monomials(r - 1), n_r)
            self.Qgrad, self.Rgrad = orthonormalize(grads, self.H2)
        else:
            self.Qgrad = np.zeros((2 * n_r, 0))
            self.Rgrad = np.zeros((0, 0))
        self.Qperp = polyspace.perp_basis(geom, r, self.Hr)

        k = geom.n_edges
        self.n_edge_dofs = k * (r + 1)
        self.n_grad_dofs = n_r - 1
        self.n_perp_dofs = self.Qperp.shape[1]
        self.n_dofs = self.n_edge_dofs + self.n_grad_dofs + self.n_perp_dofs
        self.d2_offset = self.n_edge_dofs
        self.d3_offset = self.n_edge_dofs + self.n_grad_dofs

        self._build_divergence()
        self._build_projector()
        self._build_dof_matrix()

        PiDof = self.D @ self.ProjMap
        resid = self.ProjMap @ self.D - np.eye(2 * n_r)
        self.poly_reproduction_error = float(np.abs(resid).max())
        if self.poly_reproduction_error > 1e-6:
            raise RankDeficiency(
                f"projector lost rank on cell (residual "
                f"{self.poly_reproduction_error:.2e})")
        I_minus = np.eye(self.n_dofs) - PiDof
        self.S_base = I_minus.T @ I_minus

    # -- construction ------------------------------------------------------

    def edge_slice(self, i):
        r1 = self.degree + 1
        return slice(i * r1, (i + 1) * r1)

    def _build_divergence(self):
        """Moments of div(eta) against P_r from edge data and grad moments."""
        geom, r, n_r = self.geom, self.degree, self.n_r
        mom = np.zeros((n_r, self.n_dofs))
        for i in range(geom.n_edges):
            mom[:, self.edge_slice(i)] += \
                (self.edge_tables[i][:, :n_r] / geom.edge_lengths[i]).T
        if r > 0:
            # int eta . grad(m_beta) = sum_k Rgrad[k, beta-1] dof_k
            mom[1:, self.d2_offset:self.d3_offset] -= self.Rgrad.T
        self.div_moments = mom                     # rows: int m_beta div(eta)
        self.DivMap = solve_gram(self.Hr, mom)     # div coefficients

    def _build_projector(self):
        """L2 projection onto vector P_r via the grad/perp decomposition."""
        geom, n_r, n_r1 = self.geom, self.n_r, self.n_r1
        n_w = (n_r1 - 1) + self.n_perp_dofs        # = 2 n_r
        mom = np.zeros((n_w, self.n_dofs))
        for i in range(geom.n_edges):
            mom[:n_r1 - 1, self.edge_slice(i)] += \
                (self.edge_tables[i][:, 1:] / geom.edge_lengths[i]).T
        mom[:n_r1 - 1] -= self.H1[:n_r, 1:].T @ self.DivMap
        if self.n_perp_dofs:
            mom[n_r1 - 1:, self.d3_offset:] = np.eye(self.n_perp_dofs)

        W = np.hstack((gradient_columns(self.degree + 1, geom.diameter),
                       self.Qperp))
        G = W.T @ self.H2 @ W
        try:
            X = np.linalg.solve(G, mom)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiency("projection system singular") from exc
        self.ProjMap = W @ X                       # (2 n_r, n_dofs)

    def _build_dof_matrix(self):
        """DoFs of the vector monomial basis fields, shape (n_dofs, 2 n_r)."""
        geom, n_r = self.geom, self.n_r
        D = np.zeros((self.n_dofs, 2 * n_r))
        for i in range(geom.n_edges):
            nx, ny = geom.edge_normals[i]
            block = self.edge_tables[i][:, :n_r]
            D[self.edge_slice(i), :n_r] = nx * block
            D[self.edge_slice(i), n_r:] = ny * block
        D[self.d2_offset:self.d3_offset] = self.Qgrad.T @ self.H2
        D[self.d3_offset:] = self.Qperp.T @ self.H2
        self.D = D

    # -- interpolation -----------------------------------------------------

    def compute_dofs(self, f, edge_npts=None, exactness=None):
        """DoFs of a smooth vector field (the canonical interpolant).

        The defaults use richer rules than the minimal polynomial-exact ones
        so smooth fields are interpolated to near machine precision.
        """
        geom, r = self.geom, self.degree
        if edge_npts is None:
            edge_npts = max(r + 2, 10)
        if exactness is None:
            exactness = 2 * r + 10
        dofs = np.zeros(self.n_dofs)
        for i in range(geom.n_edges):
            pts, ew, t = edge_rule(geom.edge_starts[i], geom.edge_ends[i],
                                   edge_npts)
            fn = np.asarray(f(pts)) @ geom.edge_normals[i]
            dofs[self.edge_slice(i)] = edge_legendre(t, r).T @ (ew * fn)
        if self.n_grad_dofs or self.n_perp_dofs:
            quad = geom.quadrature(exactness)
            vals = np.asarray(f(quad.points))
            mono = geom.basis(r).eval(quad.points)
            mx = mono.T @ (quad.weights * vals[:, 0])
            my = mono.T @ (quad.weights * vals[:, 1])
            moments = np.concatenate((mx, my))
            dofs[self.d2_offset:self.d3_offset] = self.Qgrad.T @ moments
            dofs[self.d3_offset:] = self.Qperp.T @ moments
        return dofs

    def compute_tensor_dofs(self, f, **kw):
        """Row-wise interpolation of a smooth tensor field.

        ``f`` maps (npts, 2) points to (npts, 2, 2) tensors.
        """
        row0 = self.compute_dofs(lambda p: np.asarray(f(p))[:, 0, :], **kw)
        row1 = self.compute_dofs(lambda p: np.asarray(f(p))[:, 1, :], **kw)
        return np.concatenate((row0, row1))

    # -- evaluation helpers ------------------------------------------------

    def projected_values(self, dofs, points=None):
        """Values of the projected polynomial at points (default: quad)."""
        coeff = self.ProjMap @ dofs
        B = self.Bs if points is None else self.geom.basis(self.degree).eval(points)
        return np.column_stack((B @ coeff[:self.n_r], B @ coeff[self.n_r:]))

    def divergence_values(self, dofs, points=None):
        coeff = self.DivMap @ dofs
        B = self.Bs if points is None else self.geom.basis(self.degree).eval(points)
        return B @ coeff

    def mean_value_row(self):
        """Row vector mapping P_r coefficients to the cell mean."""
        return self.area_row / self.geom.area


def edge_dirichlet_load(space, edge_index, phi_D, npts=8):
    """Local edge load <eta.n, phi_D>_e in the local edge dof basis."""
    geom, r = space.geom, space.degree
    pts, ew, t = edge_rule(geom.edge_starts[edge_index],
                           geom.edge_ends[edge_index], max(npts, r + 2))
    vals = np.asarray(phi_D(pts), dtype=float)
    phi = edge_legendre(t, r)
    return (phi.T @ (ew * vals)) / geom.edge_lengths[edge_index]


# ---------------------------------------------------------------------------
# tensor helpers


def deviator_matrix(n_r):
    """Linear map taking stacked tensor coefficients to their deviator."""
    I = np.eye(n_r)
    Dm = np.zeros((4 * n_r, 4 * n_r))
    # component blocks: [00, 01, 10, 11] = [r0x, r0y, r1x, r1y]
    Dm[0 * n_r:1 * n_r, 0 * n_r:1 * n_r] = 0.5 * I
    Dm[0 * n_r:1 * n_r, 3 * n_r:4 * n_r] = -0.5 * I
    Dm[3 * n_r:4 * n_r, 3 * n_r:4 * n_r] = 0.5 * I
    Dm[3 * n_r:4 * n_r, 0 * n_r:1 * n_r] = -0.5 * I
    Dm[1 * n_r:2 * n_r, 1 * n_r:2 * n_r] = I
    Dm[2 * n_r:3 * n_r, 2 * n_r:3 * n_r] = I
    return Dm


def tensor_proj(space):
    """Projection map for the tensor space, (4 n_r, 2 n_dofs)."""
    n = space.n_dofs
    n_r = space.n_r
    P = np.zeros((4 * n_r, 2 * n))
    P[:2 * n_r, :n] = space.ProjMap
    P[2 * n_r:, n:] = space.ProjMap
    return P


# ---------------------------------------------------------------------------
# local discrete forms


class ElementKit:
    """Iteration-independent element data for the five-field forms.

    Precomputes the tensor/vector projection values at the master quadrature
    points and the linear blocks (divergence couplings, skew coupling, trace
    row, stabilization skeleton) so that each nonlinear iteration only has to
    re-weight small Gram matrices.
    """

    def __init__(self, space):
        self.space = space
        n_r, n = space.n_r, space.n_dofs
        self.W = space.quad.weights
        self.Bs = space.Bs

        P = tensor_proj(space)                     # (4 n_r, 2n)
        self.P = P
        self.Pdev = deviator_matrix(n_r) @ P
        # component values at quadrature points: Tvals[c] is (nq, 2n)
        self.Tvals = np.einsum("qa,caj->cqj", space.Bs,
                               P.reshape(4, n_r, 2 * n))
        self.Vvals = np.einsum("qa,caj->cqj", space.Bs,
                               space.ProjMap.reshape(2, n_r, n))

        S2 = np.zeros((2 * n, 2 * n))
        S2[:n, :n] = space.S_base
        S2[n:, n:] = space.S_base
        self.S2 = S2

        # B_S(tau,(v,.)): moments of the row-wise divergence
        Bdiv = np.zeros((2 * n_r, 2 * n))
        Bdiv[:n_r, :n] = space.div_moments
        Bdiv[n_r:, n:] = space.div_moments
        self.B_S_div = Bdiv
        # B_S(tau,(.,omega)) with omega = m_k [[0,1],[-1,0]]
        self.B_S_skw = space.Hr @ (P[n_r:2 * n_r] - P[2 * n_r:3 * n_r])
        self.B_T = space.div_moments
        # l(tau) = integral of tr(PP tau)
        self.trace_row = space.area_row @ (P[:n_r] + P[3 * n_r:])
        self.mean_row = space.area_row / space.geom.area

    def phi_values(self, phi_coeff):
        return self.Bs @ phi_coeff

    def velocity_values(self, z_coeff):
        n_r = self.space.n_r
        return self.Bs @ z_coeff[:n_r], self.Bs @ z_coeff[n_r:]


class LocalForms:
    """Weighted element matrices of one nonlinear iteration."""

    __slots__ = ("A_S", "A_T", "O_S", "O_T", "wmu", "wka", "phi_q",
                 "stab_S", "stab_T")


def local_forms(kit, coeffs, phi_coeff, z_coeff):
    """Element matrices with the coefficient weights at the lagged state.

    ``phi_coeff`` is the lagged temperature (P_r coefficients), ``z_coeff``
    the lagged velocity (stacked P_r coefficients). Raises
    CoefficientOutOfBounds if a coefficient loses positivity at a quadrature
    point or at the element mean.
    """
    space = kit.space
    n_r = space.n_r
    out = LocalForms()
    out.phi_q = phi_q = kit.phi_values(phi_coeff)
    out.wmu = wmu = kit.W / coeffs.mu_eff(phi_q)
    out.wka = wka = kit.W / coeffs.kappa_val(phi_q)

    Bw_mu = wmu[:, None] * kit.Bs
    Bw_ka = wka[:, None] * kit.Bs
    Mmu = Bw_mu.T @ kit.Bs
    Mka = Bw_ka.T @ kit.Bs

    phi_bar = kit.mean_row @ phi_coeff
    out.stab_S = 1.0 / abs(float(coeffs.mu_eff(phi_bar)))
    out.stab_T = 1.0 / abs(float(coeffs.kappa_val(phi_bar)))

    A_S = out.stab_S * kit.S2
    for c in range(4):
        blk = kit.Pdev[c * n_r:(c + 1) * n_r]
        A_S += blk.T @ Mmu @ blk
    out.A_S = A_S

    A_T = out.stab_T * space.S_base
    for c in range(2):
        blk = space.ProjMap[c * n_r:(c + 1) * n_r]
        A_T += blk.T @ Mka @ blk
    out.A_T = A_T

    z0, z1 = kit.velocity_values(z_coeff)
    D1 = kit.Tvals[0] - kit.Tvals[3]
    G0 = 0.5 * z0[:, None] * D1 + z1[:, None] * kit.Tvals[2]
    G1 = -0.5 * z1[:, None] * D1 + z0[:, None] * kit.Tvals[1]
    O_S = np.empty((2 * space.n_dofs, 2 * n_r))
    O_S[:, :n_r] = G0.T @ Bw_mu
    O_S[:, n_r:] = G1.T @ Bw_mu
    out.O_S = O_S

    Gt = z0[:, None] * kit.Vvals[0] + z1[:, None] * kit.Vvals[1]
    out.O_T = Gt.T @ Bw_ka
    return out


def newton_blocks(kit, coeffs, forms, sigma_dofs, u_coeff, rho_dofs,
                  phi_coeff):
    """Derivative blocks of the coupled residual beyond the bilinear ones.

    Returns (K_tau_u, K_tau_phi, K_eta_u, K_eta_phi_extra):

    * K_tau_u: derivative of O_S(u; u, tau) in BOTH velocity slots,
    * K_tau_phi: coefficient derivative of A_S + O_S plus the derivative of
      the stabilization scale through the element mean of phi,
    * K_eta_u: derivative of O_T(u; phi, eta) in the velocity slot,
    * K_eta_phi_extra: coefficient/stabilization derivatives of A_T + O_T
      (the bilinear part O_T + B_T^T is added by the caller).
    """
    space = kit.space
    n_r, n = space.n_r, space.n_dofs
    W, Bs = kit.W, kit.Bs
    phi_q = forms.phi_q
    mu_q = coeffs.mu_eff(phi_q)
    ka_q = coeffs.kappa_val(phi_q)

    u0, u1 = kit.velocity_values(u_coeff)
    D1 = kit.Tvals[0] - kit.Tvals[3]

    # -- flow row, velocity column: z-slot derivative added to O_S
    Bw_mu = (W / mu_q)[:, None] * Bs
    G0 = 0.5 * u0[:, None] * D1 + u1[:, None] * kit.Tvals[1]
    G1 = -0.5 * u1[:, None] * D1 + u0[:, None] * kit.Tvals[2]
    K_tau_u = forms.O_S.copy()
    K_tau_u[:, :n_r] += G0.T @ Bw_mu
    K_tau_u[:, n_r:] += G1.T @ Bw_mu

    # -- flow row, temperature column
    sig_q = np.einsum("cqj,j->cq", kit.Tvals, sigma_dofs)
    sig_q[0] += u0 * u0
    sig_q[1] += u0 * u1
    sig_q[2] += u1 * u0
    sig_q[3] += u1 * u1
    tr_half = 0.5 * (sig_q[0] + sig_q[3])
    sig_q[0] -= tr_half
    sig_q[3] -= tr_half
    Fq = np.einsum("cq,cqj->qj", sig_q, kit.Tvals)
    dws = -W * coeffs.mu_eff_prime(phi_q) / mu_q ** 2
    K_tau_phi = Fq.T @ (dws[:, None] * Bs)
    phi_bar = kit.mean_row @ phi_coeff
    mu_bar = float(coeffs.mu_eff(phi_bar))
    ds = -float(coeffs.mu_eff_prime(phi_bar)) / mu_bar ** 2
    K_tau_phi += np.outer(kit.S2 @ sigma_dofs, ds * kit.mean_row)

    # -- heat row, velocity column
    phi_vals = Bs @ phi_coeff
    Bw_ka = (W / ka_q)[:, None] * Bs
    K_eta_u = np.empty((n, 2 * n_r))
    K_eta_u[:, :n_r] = (phi_vals[:, None] * kit.Vvals[0]).T @ Bw_ka
    K_eta_u[:, n_r:] = (phi_vals[:, None] * kit.Vvals[1]).T @ Bw_ka

    # -- heat row, temperature column (beyond O_T + B_T^T)
    rho_q = np.einsum("cqj,j->cq", kit.Vvals, rho_dofs)
    rho_q[0] += u0 * phi_vals
    rho_q[1] += u1 * phi_vals
    Gq = np.einsum("cq,cqj->qj", rho_q, kit.Vvals)
    dwt = -W * coeffs.kappa_prime(phi_q) / ka_q ** 2
    K_eta_phi = Gq.T @ (dwt[:, None] * Bs)
    ka_bar = float(coeffs.kappa_val(phi_bar))
    dst = -float(coeffs.kappa_prime(phi_bar)) / ka_bar ** 2
    K_eta_phi += np.outer(space.S_base @ rho_dofs, dst * kit.mean_row)

    return K_tau_u, K_tau_phi, K_eta_u, K_eta_phi


def source_moments(space, f, vector=False, exactness=None):
    """Element load moments of a smooth source against the P_r basis."""
    geom, r = space.geom, space.degree
    quad = geom.quadrature(2 * r + 6 if exactness is None else exactness)
    mono = geom.basis(r).eval(quad.points)
    vals = np.asarray(f(quad.points), dtype=float)
    if vector:
        return np.concatenate((mono.T @ (quad.weights * vals[:, 0]),
                               mono.T @ (quad.weights * vals[:, 1])))
    return mono.T @ (quad.weights * vals)
