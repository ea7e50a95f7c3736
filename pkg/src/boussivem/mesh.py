"""Polygonal meshes: construction, validation, families, diagnostics, JSON I/O.

A mesh is a conforming collection of simple CCW polygons. Interior edges are
shared by exactly two cells with opposite traversal; boundary edges carry a
GammaD or GammaN tag (GammaD by default). Meshes are immutable once built;
every consumer treats them as read-only.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (DanglingVertex, IoFailure, NegativeArea,
                         NonManifoldEdge, UnsupportedDomain)
from .polyspace import PolygonGeometry, polygon_area_centroid

INTERIOR = "Interior"
GAMMA_D = "GammaD"
GAMMA_N = "GammaN"

FAMILY_KINDS = ("UniformQuad", "DistortedQuad", "Hexagonal", "NonConvex",
                "FromFile")


@dataclass(frozen=True)
class MeshFamily:
    """Mesh family selector with resolution parameter n (or file path)."""
    kind: str
    n: int = 8
    path: str = ""

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise UnsupportedDomain(f"unknown mesh family {self.kind!r}")


@dataclass(frozen=True)
class Rectangle:
    xmin: float = 0.0
    ymin: float = 0.0
    xmax: float = 1.0
    ymax: float = 1.0


@dataclass(frozen=True)
class DiskWithHoles:
    """Disk of given radius with four circular holes (shell-and-tube)."""
    radius: float = 1.0
    hole_radius: float = 0.125
    hole_centers: tuple = ((0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5))


class PolygonalMesh:
    """Validated conforming polygonal mesh. Read-only after construction."""

    def __init__(self, vertices, cells, edges, cell_edges, edge_cells,
                 edge_tags):
        self.vertices = vertices          # (nv, 2) float
        self.cells = cells                # list of vertex index lists (CCW)
        self.edges = edges                # (ne, 2) int, lo < hi
        self.cell_edges = cell_edges      # per cell: list of (edge_id, same_dir)
        self.edge_cells = edge_cells      # (ne, 2) int, -1 marks boundary side
        self.edge_tags = edge_tags        # list of Interior/GammaD/GammaN
        self._geom = [None] * len(cells)
        self.h = max(self.cell_geometry(i).diameter for i in range(len(cells)))

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    def cell_geometry(self, i):
        if self._geom[i] is None:
            self._geom[i] = PolygonGeometry(self.vertices[self.cells[i]])
        return self._geom[i]

    def boundary_edges(self, tag=None):
        """Edge ids on the boundary, optionally filtered by tag."""
        out = []
        for e, t in enumerate(self.edge_tags):
            if t == INTERIOR:
                continue
            if tag is None or t == tag:
                out.append(e)
        return out

    def edge_midpoint(self, e):
        a, b = self.edges[e]
        return 0.5 * (self.vertices[a] + self.vertices[b])

    def total_area(self):
        return sum(self.cell_geometry(i).area for i in range(self.n_cells))


def build_from_arrays(vertices, cells, boundary=None):
    """Build and validate a mesh.

    ``boundary`` is either a list of {"edge": [i, j], "tag": ...} entries
    (unlisted boundary edges default to GammaD), or a callable mapping an edge
    midpoint to a tag, or None (all GammaD).
    """
    vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float))
    cells = [list(map(int, c)) for c in cells]
    nv = len(vertices)

    used = np.zeros(nv, dtype=bool)
    for c, cell in enumerate(cells):
        if len(cell) < 3 or len(set(cell)) != len(cell):
            raise NegativeArea(f"cell {c} is degenerate")
        area, _ = polygon_area_centroid(vertices[cell])
        if area <= 0.0:
            raise NegativeArea(f"cell {c} has non-positive area {area:.3e}")
        used[cell] = True
    if not used.all():
        missing = int(np.flatnonzero(~used)[0])
        raise DanglingVertex(f"vertex {missing} not referenced by any cell")

    edge_ids = {}
    edges = []
    cell_edges = []
    edge_uses = []  # per edge: list of (cell, same_dir)
    for c, cell in enumerate(cells):
        row = []
        k = len(cell)
        for i in range(k):
            a, b = cell[i], cell[(i + 1) % k]
            key = (a, b) if a < b else (b, a)
            e = edge_ids.get(key)
            if e is None:
                e = len(edges)
                edge_ids[key] = e
                edges.append(key)
                edge_uses.append([])
            same_dir = key[0] == a
            edge_uses[e].append((c, same_dir))
            row.append((e, same_dir))
        cell_edges.append(row)
    edges = np.asarray(edges, dtype=int)

    ne = len(edges)
    edge_cells = -np.ones((ne, 2), dtype=int)
    for e, uses in enumerate(edge_uses):
        if len(uses) > 2:
            raise NonManifoldEdge(f"edge {tuple(edges[e])} used by "
                                  f"{len(uses)} cells")
        if len(uses) == 2:
            if uses[0][1] == uses[1][1]:
                raise NonManifoldEdge(f"edge {tuple(edges[e])} traversed "
                                      "twice in the same direction")
            edge_cells[e, 0] = uses[0][0]
            edge_cells[e, 1] = uses[1][0]
        else:
            edge_cells[e, 0] = uses[0][0]

    listed = {}
    if boundary is not None and not callable(boundary):
        for entry in boundary:
            i, j = entry["edge"]
            key = (i, j) if i < j else (j, i)
            if key not in edge_ids:
                raise NonManifoldEdge(f"boundary entry names unknown edge "
                                      f"{entry['edge']}")
            listed[edge_ids[key]] = entry["tag"]

    edge_tags = []
    for e in range(ne):
        if edge_cells[e, 1] >= 0:
            edge_tags.append(INTERIOR)
        elif callable(boundary):
            a, b = edges[e]
            tag = boundary(0.5 * (vertices[a] + vertices[b]))
            edge_tags.append(tag if tag in (GAMMA_D, GAMMA_N) else GAMMA_D)
        else:
            edge_tags.append(listed.get(e, GAMMA_D))

    for e, t in listed.items():
        if edge_tags[e] == INTERIOR:
            raise NonManifoldEdge(f"edge {tuple(edges[e])} tagged as boundary "
                                  "but is interior")
        if t not in (GAMMA_D, GAMMA_N):
            raise IoFailure(f"unknown boundary tag {t!r}")

    return PolygonalMesh(vertices, cells, edges, cell_edges, edge_cells,
                         edge_tags)


# ---------------------------------------------------------------------------
# families


def _grid_vertices(rect, n):
    xs = np.linspace(rect.xmin, rect.xmax, n + 1)
    ys = np.linspace(rect.ymin, rect.ymax, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack((X.ravel(), Y.ravel())), xs, ys


def _uniform_quads(rect, n, boundary_rule):
    verts, _, _ = _grid_vertices(rect, n)
    cells = []
    for i in range(n):
        for j in range(n):
            v00 = i * (n + 1) + j
            v10 = (i + 1) * (n + 1) + j
            cells.append([v00, v10, v10 + 1, v00 + 1])
    return build_from_arrays(verts, cells, boundary_rule)


def _distorted_quads(rect, n, boundary_rule):
    verts, xs, ys = _grid_vertices(rect, n)
    hgrid = (rect.xmax - rect.xmin) / n
    interior_x = (verts[:, 0] > xs[0]) & (verts[:, 0] < xs[-1])
    interior_y = (verts[:, 1] > ys[0]) & (verts[:, 1] < ys[-1])
    mask = interior_x & interior_y
    s = np.sin(2 * np.pi * verts[:, 0]) * np.sin(2 * np.pi * verts[:, 1])
    shift = 0.1 * hgrid * s * mask
    verts = verts + np.column_stack((shift, shift))
    cells = []
    for i in range(n):
        for j in range(n):
            v00 = i * (n + 1) + j
            v10 = (i + 1) * (n + 1) + j
            cells.append([v00, v10, v10 + 1, v00 + 1])
    return build_from_arrays(verts, cells, boundary_rule)


def _nonconvex_cells(rect, n, boundary_rule):
    """Each grid square split into two interlocking non-convex hexagons.

    All construction points live on the quarter grid, so shared vertices get
    identical integer keys across neighboring squares.
    """
    dx = (rect.xmax - rect.xmin) / n
    dy = (rect.ymax - rect.ymin) / n
    vid = {}
    verts = []

    def vertex(qx, qy):
        key = (qx, qy)
        if key not in vid:
            vid[key] = len(verts)
            verts.append((rect.xmin + qx * dx / 4.0,
                          rect.ymin + qy * dy / 4.0))
        return vid[key]

    cells = []
    for i in range(n):
        for j in range(n):
            x, y = 4 * i, 4 * j
            lower = [(x, y), (x + 4, y), (x + 4, y + 2), (x + 3, y + 3),
                     (x + 1, y + 1), (x, y + 2)]
            upper = [(x, y + 2), (x + 1, y + 1), (x + 3, y + 3),
                     (x + 4, y + 2), (x + 4, y + 4), (x, y + 4)]
            cells.append([vertex(*q) for q in lower])
            cells.append([vertex(*q) for q in upper])
    return build_from_arrays(np.asarray(verts), cells, boundary_rule)


def _hex_lattice(rect, pitch, pad):
    """Triangular lattice points covering the padded rectangle."""
    dy = pitch * math.sqrt(3.0) / 2.0
    pts = []
    jmin = int(math.floor((rect.ymin - pad) / dy)) - 1
    jmax = int(math.ceil((rect.ymax + pad) / dy)) + 1
    imin = int(math.floor((rect.xmin - pad) / pitch)) - 1
    imax = int(math.ceil((rect.xmax + pad) / pitch)) + 1
    for j in range(jmin, jmax + 1):
        off = 0.5 * pitch if j % 2 else 0.0
        y = j * dy
        for i in range(imin, imax + 1):
            pts.append((i * pitch + off, y))
    return np.asarray(pts)


def _hexagonal(rect, n, boundary_rule):
    """Voronoi honeycomb clipped to the rectangle by the mirror trick.

    Lattice pitch is chosen so interior hexagon diameters are about L/n with
    L the larger rectangle side, matching the dyadic h values used by the
    quadrilateral families.
    """
    from scipy.spatial import Voronoi

    L = max(rect.xmax - rect.xmin, rect.ymax - rect.ymin)
    pitch = math.sqrt(3.0) * L / (2.0 * n)
    pts = _hex_lattice(rect, pitch, 0.0)
    eps = 1e-9 * L
    inside = ((pts[:, 0] > rect.xmin + eps) & (pts[:, 0] < rect.xmax - eps)
              & (pts[:, 1] > rect.ymin + eps) & (pts[:, 1] < rect.ymax - eps))
    pts = pts[inside]

    mirrored = [pts]
    for axis, value in ((0, rect.xmin), (0, rect.xmax),
                        (1, rect.ymin), (1, rect.ymax)):
        m = pts.copy()
        m[:, axis] = 2.0 * value - m[:, axis]
        mirrored.append(m)
    corners = [(rect.xmin, rect.ymin), (rect.xmax, rect.ymin),
               (rect.xmax, rect.ymax), (rect.xmin, rect.ymax)]
    for cx, cy in corners:
        m = pts.copy()
        m[:, 0] = 2.0 * cx - m[:, 0]
        m[:, 1] = 2.0 * cy - m[:, 1]
        keep = (np.abs(m[:, 0] - cx) < 3 * pitch) & \
               (np.abs(m[:, 1] - cy) < 3 * pitch)
        mirrored.append(m[keep])
    seeds = np.vstack(mirrored)

    vor = Voronoi(seeds)
    n_interior = len(pts)
    snap = 1e-9 * L

    vmap = {}
    verts = []

    def vertex(p):
        x = rect.xmin if abs(p[0] - rect.xmin) < 1e3 * snap else p[0]
        x = rect.xmax if abs(x - rect.xmax) < 1e3 * snap else x
        y = rect.ymin if abs(p[1] - rect.ymin) < 1e3 * snap else p[1]
        y = rect.ymax if abs(y - rect.ymax) < 1e3 * snap else y
        key = (round(x / snap), round(y / snap))
        if key not in vmap:
            vmap[key] = len(verts)
            verts.append((key[0] * snap, key[1] * snap))
        return vmap[key]

    cells = []
    for s in range(n_interior):
        region = vor.regions[vor.point_region[s]]
        if not region or -1 in region:
            raise UnsupportedDomain("unbounded Voronoi cell in hexagonal "
                                    "mesh construction")
        poly = vor.vertices[region]
        ang = np.arctan2(poly[:, 1] - seeds[s, 1], poly[:, 0] - seeds[s, 0])
        ordered = poly[np.argsort(ang)]
        ids = []
        for p in ordered:
            i = vertex(p)
            if not ids or (i != ids[-1] and i != ids[0]):
                ids.append(i)
        cells.append(ids)
    return build_from_arrays(np.asarray(verts), cells, boundary_rule)


def _circle_polygon(center, radius, m):
    ang = 2.0 * np.pi * np.arange(m) / m
    return np.column_stack((center[0] + radius * np.cos(ang),
                            center[1] + radius * np.sin(ang)))


def _in_convex(points, poly):
    """Vectorized inside test for a convex CCW polygon."""
    inside = np.ones(len(points), dtype=bool)
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        cross = ((b[0] - a[0]) * (points[:, 1] - a[1])
                 - (b[1] - a[1]) * (points[:, 0] - a[0]))
        inside &= cross > 0.0
    return inside


def _disk_with_holes(domain, n, boundary_rule):
    """Shell-and-tube geometry: triangulated hexagonal lattice.

    Circles are approximated by inscribed polygons; segment counts scale with
    the lattice pitch (documented here: outer max(32, ~2*pi*R/pitch), holes
    max(12, ~2*pi*r/pitch)).
    """
    from scipy.spatial import Delaunay

    R = domain.radius
    pitch = 2.0 * R / n
    m_out = max(32, int(round(2.0 * np.pi * R / pitch)))
    m_hole = max(12, int(round(2.0 * np.pi * domain.hole_radius / pitch)))
    outer = _circle_polygon((0.0, 0.0), R, m_out)
    holes = [_circle_polygon(c, domain.hole_radius, m_hole)
             for c in domain.hole_centers]

    rect = Rectangle(-R, -R, R, R)
    lattice = _hex_lattice(rect, pitch, 0.0)
    keep = np.sqrt((lattice ** 2).sum(axis=1)) < R - 0.55 * pitch
    for c in domain.hole_centers:
        d = np.sqrt(((lattice - np.asarray(c)) ** 2).sum(axis=1))
        keep &= d > domain.hole_radius + 0.55 * pitch
    pts = np.vstack([lattice[keep], outer] + holes)

    tri = Delaunay(pts)
    centroids = pts[tri.simplices].mean(axis=1)
    good = _in_convex(centroids, outer)
    for hole in holes:
        good &= ~_in_convex(centroids, hole)
    simplices = tri.simplices[good]

    used = np.unique(simplices)
    remap = -np.ones(len(pts), dtype=int)
    remap[used] = np.arange(len(used))
    cells = []
    for t in simplices:
        cell = [int(remap[v]) for v in t]
        area, _ = polygon_area_centroid(pts[t])
        if area < 0:
            cell.reverse()
        cells.append(cell)
    if boundary_rule is None:
        boundary_rule = lambda mid: GAMMA_D
    return build_from_arrays(pts[used], cells, boundary_rule)


def generate(family, domain=None, boundary_rule=None):
    """Generate a mesh of the given family over a domain descriptor."""
    if family.kind == "FromFile":
        return load_json(family.path)
    if domain is None:
        domain = Rectangle()
    if isinstance(domain, DiskWithHoles):
        if family.kind != "Hexagonal":
            raise UnsupportedDomain(
                f"family {family.kind} not implemented on DiskWithHoles")
        return _disk_with_holes(domain, family.n, boundary_rule)
    if not isinstance(domain, Rectangle):
        raise UnsupportedDomain(f"unknown domain descriptor {domain!r}")
    builder = {"UniformQuad": _uniform_quads,
               "DistortedQuad": _distorted_quads,
               "Hexagonal": _hexagonal,
               "NonConvex": _nonconvex_cells}[family.kind]
    return builder(domain, family.n, boundary_rule)


# ---------------------------------------------------------------------------
# diagnostics


def _clip_halfplane(poly, a, b):
    """Keep the part of ``poly`` left of the directed line a->b."""
    out = []
    k = len(poly)
    for i in range(k):
        p, q = poly[i], poly[(i + 1) % k]
        sp = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        sq = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
        if sp >= 0:
            out.append(p)
        if (sp > 0 > sq) or (sp < 0 < sq):
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _kernel_chebyshev_radius(verts):
    """Radius of the largest disk inside the star-shape kernel of a polygon."""
    from scipy.optimize import linprog

    poly = [tuple(p) for p in verts]
    kernel = poly
    k = len(poly)
    for i in range(k):
        kernel = _clip_halfplane(kernel, poly[i], poly[(i + 1) % k])
        if len(kernel) < 3:
            return 0.0
    # maximize r subject to n_i . c + r <= n_i . p_i for kernel edges
    m = len(kernel)
    A, bvec = [], []
    for i in range(m):
        p, q = np.asarray(kernel[i]), np.asarray(kernel[(i + 1) % m])
        t = q - p
        nrm = np.hypot(*t)
        if nrm < 1e-300:
            continue
        nvec = np.array([t[1], -t[0]]) / nrm  # outward for CCW kernel
        A.append([nvec[0], nvec[1], 1.0])
        bvec.append(float(nvec @ p))
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=bvec,
                  bounds=[(None, None), (None, None), (0.0, None)],
                  method="highs")
    return float(res.x[2]) if res.success else 0.0


def mesh_diagnostics(mesh):
    """Shape-regularity report: h, min edge ratio, star-shapedness bound."""
    min_edge_ratio = math.inf
    star = math.inf
    for i in range(mesh.n_cells):
        g = mesh.cell_geometry(i)
        min_edge_ratio = min(min_edge_ratio,
                             g.edge_lengths.min() / g.diameter)
        star = min(star, _kernel_chebyshev_radius(g.vertices) / g.diameter)
    return {"h": mesh.h,
            "min_edge_ratio": float(min_edge_ratio),
            "star_shapedness_estimate": float(star)}


# ---------------------------------------------------------------------------
# JSON interchange


def save_json(mesh, path):
    boundary = []
    for e in mesh.boundary_edges():
        i, j = (int(v) for v in mesh.edges[e])
        boundary.append({"edge": [i, j], "tag": mesh.edge_tags[e]})
    doc = {"vertices": [[float(x), float(y)] for x, y in mesh.vertices],
           "cells": [list(map(int, c)) for c in mesh.cells],
           "boundary": boundary}
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_json(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(str(exc)) from exc
    return build_from_arrays(doc["vertices"], doc["cells"],
                             doc.get("boundary"))
