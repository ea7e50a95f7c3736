"""Polynomial toolbox on polygons.

Scaled monomial bases, polygon quadrature (ear clipping plus collapsed
Gauss-Legendre triangle rules), Gram matrices, L2 projection and the
complement basis P_r^perp used by the divergence-conforming element spaces.

Coefficient conventions used everywhere in the package:

* scalar polynomial of degree d: coefficients ``c`` of length ``n_d`` in the
  scaled monomial basis ``m_a(x) = ((x - x_E)/h_E)^a`` with graded
  lexicographic exponent order (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
* vector polynomial: stacked ``[c_x, c_y]`` of length ``2 n_d``.
* tensor polynomial: stacked rows ``[row0_x, row0_y, row1_x, row1_y]``.
"""

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .exceptions import NegativeArea, SingularGram, TriangulationFailure


def monomial_exponents(degree):
    """Exponent pairs (a, b) of all monomials with a + b <= degree."""
    return [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]


def n_monomials(degree):
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def _exponent_index(degree):
    return {e: i for i, e in enumerate(monomial_exponents(degree))}


class ScaledMonomialBasis:
    """Monomials ((x - xc)/h)^a (y - yc)/h)^b up to a total degree."""

    def __init__(self, centroid, diameter, degree):
        self.centroid = np.asarray(centroid, dtype=float)
        self.diameter = float(diameter)
        self.degree = int(degree)
        self.exponents = monomial_exponents(degree)
        self.dim = len(self.exponents)

    def eval(self, points):
        """Values at points, shape (npts, dim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts[:, 0] - self.centroid[0]) / self.diameter
        eta = (pts[:, 1] - self.centroid[1]) / self.diameter
        max_d = self.degree
        xp = np.vander(xi, max_d + 1, increasing=True)
        yp = np.vander(eta, max_d + 1, increasing=True)
        vals = np.empty((pts.shape[0], self.dim))
        for i, (a, b) in enumerate(self.exponents):
            vals[:, i] = xp[:, a] * yp[:, b]
        return vals

    def eval_grad(self, points):
        """Gradients at points, shape (npts, dim, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts[:, 0] - self.centroid[0]) / self.diameter
        eta = (pts[:, 1] - self.centroid[1]) / self.diameter
        xp = np.vander(xi, self.degree + 1, increasing=True)
        yp = np.vander(eta, self.degree + 1, increasing=True)
        out = np.zeros((pts.shape[0], self.dim, 2))
        for i, (a, b) in enumerate(self.exponents):
            if a > 0:
                out[:, i, 0] = a * xp[:, a - 1] * yp[:, b] / self.diameter
            if b > 0:
                out[:, i, 1] = b * xp[:, a] * yp[:, b - 1] / self.diameter
        return out


def gradient_coefficients(degree, diameter):
    """Coefficient matrices of x/y derivatives of the degree-``degree`` basis.

    Returns (Gx, Gy), each of shape (n_{degree-1}, n_degree); column j holds
    the scaled-monomial coefficients (one degree lower) of the derivative of
    monomial j.
    """
    exps = monomial_exponents(degree)
    idx_lo = _exponent_index(degree - 1) if degree > 0 else {}
    n_lo = n_monomials(degree - 1)
    Gx = np.zeros((n_lo, len(exps)))
    Gy = np.zeros((n_lo, len(exps)))
    for j, (a, b) in enumerate(exps):
        if a > 0:
            Gx[idx_lo[(a - 1, b)], j] = a / diameter
        if b > 0:
            Gy[idx_lo[(a, b - 1)], j] = b / diameter
    return Gx, Gy


# ---------------------------------------------------------------------------
# polygon geometry and quadrature


def polygon_area_centroid(vertices):
    """Signed area and area centroid of a polygon (shoelace)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, v.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def polygon_diameter(vertices):
    v = np.asarray(vertices, dtype=float)
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2)).max())


def _point_in_triangle_closed(p, a, b, c, eps):
    """Point in the closed CCW triangle abc (boundary counts as inside)."""
    d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    return d1 >= -eps and d2 >= -eps and d3 >= -eps


def _segments_cross(p1, p2, p3, p4, eps):
    """Proper (interior) intersection of segments p1p2 and p3p4."""

    def side(a, b, p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    o1, o2 = side(p1, p2, p3), side(p1, p2, p4)
    o3, o4 = side(p3, p4, p1), side(p3, p4, p2)
    return ((o1 > eps and o2 < -eps or o1 < -eps and o2 > eps)
            and (o3 > eps and o4 < -eps or o3 < -eps and o4 > eps))


def _point_in_polygon(p, poly):
    """Crossing-number point-in-polygon test (half-open edge rule)."""
    inside = False
    m = len(poly)
    for i in range(m):
        y1, y2 = poly[i][1], poly[(i + 1) % m][1]
        if (y1 > p[1]) != (y2 > p[1]):
            x1, x2 = poly[i][0], poly[(i + 1) % m][0]
            xi = x1 + (p[1] - y1) * (x2 - x1) / (y2 - y1)
            if xi > p[0]:
                inside = not inside
    return inside


def _is_internal_diagonal(v, remaining, pos, eps):
    """Whether the chord of the ear candidate at ``pos`` lies inside.

    Three-part test: no other remaining vertex may touch the closed ear
    triangle (a vertex exactly on the chord signals a boundary chain
    doubling back through it), no remaining edge that avoids the ear's
    corners may cross the chord, and the chord midpoint must land inside
    the remaining polygon.
    """
    n = len(remaining)
    ia = remaining[(pos - 1) % n]
    ib = remaining[pos]
    ic = remaining[(pos + 1) % n]
    a, b, c = v[ia], v[ib], v[ic]
    for j in remaining:
        if j in (ia, ib, ic):
            continue
        if _point_in_triangle_closed(v[j], a, b, c, eps):
            return False
    for t in range(n):
        p, q = remaining[t], remaining[(t + 1) % n]
        if ia in (p, q) or ic in (p, q):
            continue
        if _segments_cross(a, c, v[p], v[q], eps):
            return False
    mid = (0.5 * (a[0] + c[0]), 0.5 * (a[1] + c[1]))
    return _point_in_polygon(mid, [v[i] for i in remaining])


def triangulate_polygon(vertices):
    """Ear-clipping triangulation of a simple CCW polygon.

    Returns index triples into ``vertices``. The vertex cycle is rotated to
    start at the lexicographically smallest vertex first, so the result does
    not depend on which vertex the input cycle happens to start at. Corners
    with zero area (straight chains and zero-width spikes, which clipping
    itself can create) are dropped before ears are searched; an ear is
    clipped only if its chord is a genuine internal diagonal, which keeps
    boundary chains that pass back through a chord from being cut off.
    """
    v = np.asarray(vertices, dtype=float)
    k = len(v)
    if k < 3:
        raise TriangulationFailure("polygon with fewer than 3 vertices")
    start = min(range(k), key=lambda i: (v[i, 0], v[i, 1]))
    order = [(start + i) % k for i in range(k)]
    scale = polygon_diameter(v)
    eps = 1e-14 * scale * scale

    remaining = list(order)
    triangles = []
    guard = 0
    while len(remaining) > 3:
        guard += 1
        if guard > 2 * k * k + 16:
            raise TriangulationFailure("ear clipping failed to converge")
        clipped = False
        n = len(remaining)
        for pos in range(n):
            i0, i1, i2 = (remaining[(pos - 1) % n], remaining[pos],
                          remaining[(pos + 1) % n])
            a, b, c = v[i0], v[i1], v[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if abs(cross) <= eps:
                remaining.pop(pos)  # degenerate corner contributes no area
                clipped = True
                break
        if clipped:
            continue
        for pos in range(n):
            i0, i1, i2 = (remaining[(pos - 1) % n], remaining[pos],
                          remaining[(pos + 1) % n])
            a, b, c = v[i0], v[i1], v[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= eps:
                continue  # reflex corner, not an ear
            if not _is_internal_diagonal(v, remaining, pos, eps):
                continue
            triangles.append((i0, i1, i2))
            remaining.pop(pos)
            clipped = True
            break
        if not clipped:
            raise TriangulationFailure("no ear found (polygon not simple?)")
    a, b, c = (v[i] for i in remaining)
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if cross > eps:
        triangles.append(tuple(remaining))
    if not triangles:
        raise TriangulationFailure("triangulation produced no triangles")
    return triangles


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def triangle_rule(v0, v1, v2, exactness):
    """Conical-product quadrature on a triangle, exact to ``exactness``."""
    n = max(1, math.ceil((exactness + 2) / 2))
    x, w = _gauss_legendre(n)
    u = 0.5 * (x + 1.0)          # [0, 1]
    wu = 0.5 * w
    v = 0.5 * (x + 1.0)
    wv = 0.5 * w
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    l2 = U * (1.0 - V)
    l3 = U * V
    l1 = 1.0 - l2 - l3
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (v0, v1, v2))
    area2 = abs((p1[0] - p0[0]) * (p2[1] - p0[1])
                - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    pts = (l1[..., None] * p0 + l2[..., None] * p1 + l3[..., None] * p2)
    wts = WU * WV * U * area2
    return pts.reshape(-1, 2), wts.reshape(-1)


class QuadratureRule:
    """Positive-weight rule over a polygon; weights sum to its area."""

    def __init__(self, points, weights, exactness):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.exactness = int(exactness)

    def integrate(self, values):
        return self.weights @ values


def polygon_quadrature(vertices, exactness):
    """Quadrature on a (possibly non-convex) simple polygon."""
    v = np.asarray(vertices, dtype=float)
    pts, wts = [], []
    for (i, j, k) in triangulate_polygon(v):
        p, w = triangle_rule(v[i], v[j], v[k], exactness)
        pts.append(p)
        wts.append(w)
    rule = QuadratureRule(np.vstack(pts), np.concatenate(wts), exactness)
    # ear clipping can return locally valid ears on a self-intersecting
    # polygon; the area mismatch flags that loudly instead of corrupting
    # every integral downstream
    area, _ = polygon_area_centroid(v)
    if abs(rule.weights.sum() - area) > 1e-9 * abs(area):
        raise TriangulationFailure(
            "triangulated area disagrees with the shoelace area "
            "(self-intersecting polygon?)")
    return rule


def edge_rule(p0, p1, npts):
    """Gauss rule on the segment p0->p1.

    Returns (points, weights, t) where t in [-1, 1] is the affine edge
    coordinate with t(p0) = -1.
    """
    t, w = _gauss_legendre(npts)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    mid, half = 0.5 * (p0 + p1), 0.5 * (p1 - p0)
    pts = mid[None, :] + t[:, None] * half[None, :]
    length = float(np.hypot(*(p1 - p0)))
    return pts, 0.5 * length * w, t


def edge_legendre(t, r):
    """Dimensionless Legendre edge basis phi_j(t) = sqrt(2j+1) P_j(t).

    L2(e)-orthogonal with ||phi_j||^2 = |e|; phi_0 = 1, so the zeroth edge
    moment of a flux is the plain net flux through the edge.
    """
    t = np.asarray(t, dtype=float)
    vander = npleg.legvander(t, r)
    return vander * np.sqrt(2.0 * np.arange(r + 1) + 1.0)


class PolygonGeometry:
    """Geometry of one polygonal cell plus cached quadrature rules."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        area, centroid = polygon_area_centroid(v)
        if area <= 0.0:
            raise NegativeArea("cell is not a positively oriented polygon")
        self.vertices = v
        self.area = area
        self.centroid = centroid
        self.diameter = polygon_diameter(v)
        self.n_edges = len(v)
        starts = v
        ends = np.roll(v, -1, axis=0)
        tangents = ends - starts
        self.edge_lengths = np.sqrt((tangents ** 2).sum(axis=1))
        self.edge_tangents = tangents / self.edge_lengths[:, None]
        # right-hand normal of the CCW traversal points outward
        self.edge_normals = np.column_stack(
            (self.edge_tangents[:, 1], -self.edge_tangents[:, 0]))
        self.edge_starts = starts
        self.edge_ends = ends
        self._quad_cache = {}

    def quadrature(self, exactness):
        rule = self._quad_cache.get(exactness)
        if rule is None:
            rule = polygon_quadrature(self.vertices, exactness)
            self._quad_cache[exactness] = rule
        return rule

    def basis(self, degree):
        return ScaledMonomialBasis(self.centroid, self.diameter, degree)


def gram_matrix(geom, degree, exactness=None, weight=None):
    """Gram matrix of the scaled monomial basis on a polygon.

    ``weight`` is an optional array of values at the quadrature points of the
    rule actually used (callers must pass values consistent with
    ``exactness``).
    """
    if exactness is None:
        exactness = 2 * degree
    quad = geom.quadrature(exactness)
    vals = geom.basis(degree).eval(quad.points)
    w = quad.weights if weight is None else quad.weights * weight
    return (vals * w[:, None]).T @ vals


def solve_gram(H, rhs):
    try:
        c = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("Gram matrix is not SPD") from exc
    y = np.linalg.solve(c, rhs)
    return np.linalg.solve(c.T, y)


def l2_project(geom, degree, f, exactness=None):
    """Coefficients of the L2(E) projection of ``f`` onto P_degree(E).

    ``f`` maps an (npts, 2) point array to (npts,) or (npts, k) values;
    vector/tensor fields are projected componentwise via the columns.
    """
    if exactness is None:
        exactness = 2 * degree + 6
    quad = geom.quadrature(exactness)
    basis = geom.basis(degree)
    vals = basis.eval(quad.points)
    H = (vals * quad.weights[:, None]).T @ vals
    fv = np.asarray(f(quad.points), dtype=float)
    rhs = vals.T @ (quad.weights[:, None] * fv.reshape(len(quad.weights), -1))
    coeffs = solve_gram(H, rhs)
    return coeffs[:, 0] if fv.ndim == 1 else coeffs


def orthonormalize(columns, H):
    """Orthonormalize coefficient columns w.r.t. the inner product matrix H.

    Returns (Q, R) with columns = Q @ R and Q^T H Q = I.
    """
    G = columns.T @ H @ columns
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("dependent columns in orthonormalization") from exc
    Q = np.linalg.solve(L, columns.T).T
    return Q, L.T


def vector_gram(H):
    """Gram of the stacked vector monomial basis (block diagonal)."""
    n = H.shape[0]
    H2 = np.zeros((2 * n, 2 * n))
    H2[:n, :n] = H
    H2[n:, n:] = H
    return H2


def gradient_columns(degree_hi, diameter):
    """Vector-basis coefficients of grad(m_beta), beta non-constant of
    degree <= degree_hi, as columns of shape (2 n_{degree_hi - 1}, n_hi - 1)."""
    Gx, Gy = gradient_coefficients(degree_hi, diameter)
    return np.vstack((Gx[:, 1:], Gy[:, 1:]))


def perp_basis(geom, degree, H=None):
    """L2(E)-orthonormal basis of P_degree^perp(E).

    P_degree^perp is the orthogonal complement of grad(P_{degree+1}) inside
    the vector polynomials of degree ``degree``; dimension 0 for degree 0 and
    1 for degree 1. Columns are coefficients in the stacked vector basis.
    """
    if H is None:
        H = gram_matrix(geom, degree, exactness=2 * degree + 2)
    H2 = vector_gram(H)
    grad_cols = gradient_columns(degree + 1, geom.diameter)
    n_perp = 2 * n_monomials(degree) - (n_monomials(degree + 1) - 1)
    if n_perp == 0:
        return np.zeros((2 * n_monomials(degree), 0))
    # nullspace of (grad columns)^T H2
    A = grad_cols.T @ H2
    _, _, vt = np.linalg.svd(A)
    null = vt[-n_perp:].T
    Q, _ = orthonormalize(null, H2)
    return Q
