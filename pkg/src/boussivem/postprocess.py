"""Pressure recovery, error norms, convergence rates, and field export.

The pseudostress carries a one-constant gauge: the solver pins the projected
trace mean to zero, and the physically meaningful field is recovered by the
constant shift sigma + c I with c = -(1/(2|Omega|)) int tr(u_h (x) u_h).
Everything here works on that shifted field. Stress-like errors combine the
L2 distance to the computable projection with the L^{6/5} distance of the
exact elementwise divergence.
"""

import numpy as np

from .exceptions import DuplicateMeshSize, IoFailure

CSV_HEADER = ("h,e_sigma,r_sigma,e_u,r_u,e_gamma,r_gamma,"
              "e_p,r_p,e_rho,r_rho,e_phi,r_phi")


def trace_shift(solution):
    """Gauge constant c = -(1/(2|Omega|)) sum_E int |u_h|^2."""
    dm = solution.dofmap
    total = 0.0
    for c in range(solution.mesh.n_cells):
        space = solution.assembler.spaces[c]
        ucf = solution.u[dm.u_slices[c]]
        n = space.n_r
        total += ucf[:n] @ space.Hr @ ucf[:n] + ucf[n:] @ space.Hr @ ucf[n:]
    return -total / (2.0 * solution.mesh.total_area())


def _cell_quadrature(solution, c):
    space = solution.assembler.spaces[c]
    r = space.degree
    quad = space.geom.quadrature(max(2 * r + 6, 12))
    basis = space.geom.basis(r).eval(quad.points)
    return space, quad, basis


def _sigma_components(solution, c, basis, shift):
    """Projected (shifted) pseudostress components at the basis points."""
    space = solution.assembler.spaces[c]
    kit = solution.assembler.kits[c]
    sidx, ssgn = solution.assembler.sigma_maps[c]
    sdofs = solution.sigma[sidx] * ssgn
    coeff = kit.P @ sdofs
    n = space.n_r
    comps = [basis @ coeff[i * n:(i + 1) * n] for i in range(4)]
    comps[0] += shift
    comps[3] += shift
    return comps, sdofs


def recover_pressure(solution, shift=None):
    """Per-cell coefficients of p_h = -(tr sigma_hat + |u_h|^2)/2.

    The product |u_h|^2 has degree 2r, so the pressure lives in P_{2r};
    the returned vectors are exact expansion coefficients in the scaled
    monomial basis of that degree. Their piecewise integral sums to zero,
    which is the gauge the shift enforces.
    """
    if shift is None:
        shift = trace_shift(solution)
    dm = solution.dofmap
    out = []
    for c in range(solution.mesh.n_cells):
        space = solution.assembler.spaces[c]
        r = space.degree
        geom = space.geom
        quad = geom.quadrature(4 * r + 2)
        basis_r = geom.basis(r).eval(quad.points)
        comps, _ = _sigma_components(solution, c, basis_r, shift)
        ucf = solution.u[dm.u_slices[c]]
        n = space.n_r
        uh0, uh1 = basis_r @ ucf[:n], basis_r @ ucf[n:]
        pvals = -0.5 * (comps[0] + comps[3] + uh0 ** 2 + uh1 ** 2)
        basis_2r = geom.basis(2 * r).eval(quad.points)
        gram = basis_2r.T @ (quad.weights[:, None] * basis_2r)
        out.append(np.linalg.solve(gram, basis_2r.T @ (quad.weights * pvals)))
    return out


class ErrorReport:
    """Errors of one solve in the norms of the five-field analysis."""

    FIELDS = ("e_sigma", "e_u", "e_gamma", "e_p", "e_rho", "e_phi")

    def __init__(self, h, e_sigma, e_u, e_gamma, e_p, e_rho, e_phi):
        self.h = float(h)
        self.e_sigma = float(e_sigma)
        self.e_u = float(e_u)
        self.e_gamma = float(e_gamma)
        self.e_p = float(e_p)
        self.e_rho = float(e_rho)
        self.e_phi = float(e_phi)

    def values(self):
        return [getattr(self, f) for f in self.FIELDS]

    def to_dict(self):
        d = {"h": self.h}
        d.update({f: getattr(self, f) for f in self.FIELDS})
        return d

    def __repr__(self):
        body = ", ".join(f"{f}={getattr(self, f):.3e}" for f in self.FIELDS)
        return f"ErrorReport(h={self.h:.4e}, {body})"


def compute_errors(solution, exact, shift=None):
    """Six-field ErrorReport against closed-form exact fields.

    sigma/rho compare the exact fields with the computable projections in
    L2 plus the exact discrete divergence in L^{6/5} (sum of the two parts);
    u and phi are measured in L6, gamma and p in L2. gamma uses the full
    skew tensor, hence the factor 2 under the square root.

    Errors are relative: each is divided by the norm of the exact field
    measured the same way. This matters because the stress/heat divergence
    parts track the manufactured sources, whose absolute size is set by the
    benchmark, not the method. A field with zero norm falls back to the
    absolute error, so zero-data runs report plain zeros.
    """
    if shift is None:
        shift = trace_shift(solution)
    dm = solution.dofmap
    acc = np.zeros(8)
    ref = np.zeros(8)
    for c in range(solution.mesh.n_cells):
        space, quad, basis = _cell_quadrature(solution, c)
        w, pts = quad.weights, quad.points
        n = space.n_r

        comps, sdofs = _sigma_components(solution, c, basis, shift)
        Sx = exact.pseudostress(pts)
        acc[0] += w @ ((Sx[:, 0, 0] - comps[0]) ** 2
                       + (Sx[:, 0, 1] - comps[1]) ** 2
                       + (Sx[:, 1, 0] - comps[2]) ** 2
                       + (Sx[:, 1, 1] - comps[3]) ** 2)
        ref[0] += w @ (Sx ** 2).sum(axis=(1, 2))
        nd = space.n_dofs
        d0 = basis @ (space.DivMap @ sdofs[:nd])
        d1 = basis @ (space.DivMap @ sdofs[nd:])
        Dx = exact.sigma_divergence(pts)
        acc[1] += w @ np.hypot(Dx[:, 0] - d0, Dx[:, 1] - d1) ** 1.2
        ref[1] += w @ np.hypot(Dx[:, 0], Dx[:, 1]) ** 1.2

        ucf = solution.u[dm.u_slices[c]]
        uh0, uh1 = basis @ ucf[:n], basis @ ucf[n:]
        Ux = exact.velocity(pts)
        acc[2] += w @ ((Ux[:, 0] - uh0) ** 2 + (Ux[:, 1] - uh1) ** 2) ** 3
        ref[2] += w @ (Ux[:, 0] ** 2 + Ux[:, 1] ** 2) ** 3

        gh = basis @ solution.gamma[dm.gamma_slices[c]]
        gx = exact.vorticity(pts)
        acc[3] += 2.0 * (w @ (gx - gh) ** 2)
        ref[3] += 2.0 * (w @ gx ** 2)

        ph = -0.5 * (comps[0] + comps[3] + uh0 ** 2 + uh1 ** 2)
        px = exact.pressure(pts)
        acc[4] += w @ (px - ph) ** 2
        ref[4] += w @ px ** 2

        rdofs = solution.rho[dm.rho_index[c]] * dm.rho_sign[c]
        Rh = space.projected_values(rdofs, pts)
        Rx = exact.pseudoheat(pts)
        acc[5] += w @ ((Rx - Rh) ** 2).sum(axis=1)
        ref[5] += w @ (Rx ** 2).sum(axis=1)
        dvh = space.divergence_values(rdofs, pts)
        dvx = exact.rho_divergence(pts)
        acc[6] += w @ np.abs(dvx - dvh) ** 1.2
        ref[6] += w @ np.abs(dvx) ** 1.2

        fh = basis @ solution.phi[dm.phi_slices[c]]
        fx = exact.temperature(pts)
        acc[7] += w @ (fx - fh) ** 6
        ref[7] += w @ fx ** 6

    def norm_pair(i_l2, i_div):
        err = np.sqrt(acc[i_l2]) + acc[i_div] ** (5.0 / 6.0)
        den = np.sqrt(ref[i_l2]) + ref[i_div] ** (5.0 / 6.0)
        return err / (den if den > 0 else 1.0)

    def norm_single(i, power):
        err, den = acc[i] ** power, ref[i] ** power
        return err / (den if den > 0 else 1.0)

    return ErrorReport(h=solution.mesh.h,
                       e_sigma=norm_pair(0, 1),
                       e_u=norm_single(2, 1.0 / 6.0),
                       e_gamma=norm_single(3, 0.5),
                       e_p=norm_single(4, 0.5),
                       e_rho=norm_pair(5, 6),
                       e_phi=norm_single(7, 1.0 / 6.0))


class RateTable:
    """Error reports sorted by decreasing h with per-pair observed rates."""

    def __init__(self, reports):
        if len(reports) < 2:
            raise ValueError("need at least two reports for rates")
        rows = sorted(reports, key=lambda rep: -rep.h)
        for a, b in zip(rows, rows[1:]):
            if a.h == b.h:
                raise DuplicateMeshSize(f"two reports share h={a.h!r}")
        self.reports = rows
        self.rates = [dict.fromkeys(ErrorReport.FIELDS, None)]
        for a, b in zip(rows, rows[1:]):
            scale = np.log(a.h / b.h)
            row = {}
            for f in ErrorReport.FIELDS:
                ea, eb = getattr(a, f), getattr(b, f)
                row[f] = (np.log(ea / eb) / scale) if ea > 0 and eb > 0 \
                    else None
            self.rates.append(row)

    def final_rates(self):
        """Observed rates between the two finest meshes."""
        return dict(self.rates[-1])

    def to_csv(self):
        lines = [CSV_HEADER]
        for rep, rates in zip(self.reports, self.rates):
            cells = [f"{rep.h:.16e}"]
            for f in ErrorReport.FIELDS:
                cells.append(f"{getattr(rep, f):.16e}")
                r = rates[f]
                cells.append("--" if r is None else f"{r:.3f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def rate_table(reports):
    return RateTable(reports)


def write_rate_csv(table, path):
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(table.to_csv())
    except OSError as exc:
        raise IoFailure(f"cannot write rate table {path}: {exc}") from exc


def boundary_flux(solution, tag=None):
    """Outward flux of rho_h through each boundary edge.

    The zeroth edge DoF of the pseudoheat field is the net flux through
    its edge, so no quadrature is involved; the sign is resolved to the
    domain-outward direction through the owning cell's orientation.
    Returns (total, per_edge) with per_edge mapping edge id -> flux.
    Since div rho_h = 0 holds elementwise when the energy source is zero,
    the total telescopes to zero up to solver tolerance.
    """
    mesh, dm = solution.mesh, solution.dofmap
    per_edge = {}
    for e in mesh.boundary_edges(tag):
        c = int(mesh.edge_cells[e, 0])
        pos = next(k for k, (ge, _) in enumerate(mesh.cell_edges[c])
                   if ge == e)
        sgn = dm.rho_sign[c][pos * dm.per_edge]
        per_edge[e] = float(sgn * solution.rho[dm.per_edge * e])
    return sum(per_edge.values()), per_edge


def max_velocity(solution):
    """Largest |u_h| over all cell quadrature points."""
    vmax = 0.0
    for c in range(solution.mesh.n_cells):
        space, quad, basis = _cell_quadrature(solution, c)
        ucf = solution.u[solution.dofmap.u_slices[c]]
        n = space.n_r
        vals = np.hypot(basis @ ucf[:n], basis @ ucf[n:])
        vmax = max(vmax, float(vals.max()))
    return vmax


# ---------------------------------------------------------------------------
# VTK legacy export (cell data)

_VTK_POLYGON = 7


def _cell_means(solution, shift):
    """Cell-average export fields: stress diag, |u|, |gamma|, p, |rho|, phi."""
    dm = solution.dofmap
    nc = solution.mesh.n_cells
    arrays = {name: np.zeros(nc) for name in
              ("sigma_11", "sigma_22", "u_mag", "gamma_mag", "p",
               "rho_mag", "phi")}
    for c in range(nc):
        space, quad, basis = _cell_quadrature(solution, c)
        w = quad.weights
        area = space.geom.area
        comps, _ = _sigma_components(solution, c, basis, shift)
        ucf = solution.u[dm.u_slices[c]]
        n = space.n_r
        uh0, uh1 = basis @ ucf[:n], basis @ ucf[n:]
        gh = basis @ solution.gamma[dm.gamma_slices[c]]
        rdofs = solution.rho[dm.rho_index[c]] * dm.rho_sign[c]
        Rh = space.projected_values(rdofs, quad.points)
        fh = basis @ solution.phi[dm.phi_slices[c]]
        arrays["sigma_11"][c] = w @ comps[0] / area
        arrays["sigma_22"][c] = w @ comps[3] / area
        arrays["u_mag"][c] = w @ np.hypot(uh0, uh1) / area
        arrays["gamma_mag"][c] = w @ (np.sqrt(2.0) * np.abs(gh)) / area
        arrays["p"][c] = w @ (-0.5 * (comps[0] + comps[3]
                                      + uh0 ** 2 + uh1 ** 2)) / area
        arrays["rho_mag"][c] = w @ np.hypot(Rh[:, 0], Rh[:, 1]) / area
        arrays["phi"][c] = w @ fh / area
    return arrays


def export_vtk(solution, path, shift=None):
    """Legacy-ASCII unstructured grid with seven cell-data arrays."""
    if shift is None:
        shift = trace_shift(solution)
    mesh = solution.mesh
    arrays = _cell_means(solution, shift)
    lines = ["# vtk DataFile Version 3.0",
             "five-field solution (cell means)",
             "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.12e} {v[1]:.12e} 0.0")
    total = sum(len(cell) + 1 for cell in mesh.cells)
    lines.append(f"CELLS {mesh.n_cells} {total}")
    for cell in mesh.cells:
        lines.append(" ".join(str(int(i)) for i in (len(cell), *cell)))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend([str(_VTK_POLYGON)] * mesh.n_cells)
    lines.append(f"CELL_DATA {mesh.n_cells}")
    for name, vals in arrays.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.12e}" for v in vals)
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write VTK file {path}: {exc}") from exc
