"""Triangle-mesh connectivity and discrete differential operators.

The mesh is static: vertex positions never change while displacement fields
defined on it evolve. Gradients of a per-vertex scalar field are piecewise
constant per triangle (the gradient of the linear interpolant) and are
averaged onto vertices with triangle-area weights. Smoothing of per-vertex
fields uses the umbrella operator, the mean of the one-ring minus the center,
in explicit diffusion steps.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

__all__ = [
    "TriMesh",
    "TriangleGeometry",
    "build_adjacency",
    "triangle_gradient",
    "vertex_gradient",
    "vertex_gradient_all",
    "umbrella",
    "build_laplacian",
    "smooth_displacement",
]

DEGENERATE_AREA = 1e-9


class TriMesh:
    """Static 2-D triangulation with one-ring connectivity.

    Parameters
    ----------
    vertices : (n, 2) array_like
        Continuous pixel coordinates of the mesh nodes.
    triangles : (m, 3) array_like
        Vertex index triples. Rows are reoriented counter-clockwise
        (positive signed area) on construction.

    Attributes
    ----------
    vertices : (n, 2) float64 array
    triangles : (m, 3) int64 array, all counter-clockwise
    rings : list of int64 arrays
        Sorted one-ring neighbor vertex indices per vertex.
    incident : list of int64 arrays
        Sorted incident triangle indices per vertex.
    valence : (n,) int64 array
        One-ring sizes; every vertex has valence >= 2.
    boundary : (n,) bool array
        True when the vertex touches an edge used by exactly one triangle.
    edges : (e, 2) int64 array
        Unique undirected edges, each row sorted.
    """

    def __init__(self, vertices, triangles):
        V = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        T = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        if V.ndim != 2 or V.shape[1] != 2:
            raise ValueError(f"vertices must be (n, 2), got {V.shape}")
        if T.ndim != 2 or T.shape[1] != 3 or T.shape[0] < 1:
            raise ValueError(f"triangles must be (m, 3) with m >= 1, got {T.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("vertex coordinates must be finite")
        n = V.shape[0]
        if T.min() < 0 or T.max() >= n:
            raise ValueError("triangle index out of range")
        if np.any((T[:, 0] == T[:, 1]) | (T[:, 1] == T[:, 2]) | (T[:, 0] == T[:, 2])):
            raise ValueError("triangle with repeated vertex index")

        area2 = _signed_area2(V, T)
        if np.any(np.abs(area2) <= 2.0 * DEGENERATE_AREA):
            worst = int(np.argmin(np.abs(area2)))
            raise ValueError(
                f"degenerate triangle {worst} (area {abs(area2[worst]) / 2.0:g})"
            )
        flip = area2 < 0
        if np.any(flip):
            T = T.copy()
            T[flip] = T[flip][:, [0, 2, 1]]

        self.vertices = V
        self.triangles = T
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self._build_connectivity()
        self._geometry = None

    def _build_connectivity(self):
        n = self.vertices.shape[0]
        T = self.triangles
        # Undirected edges with multiplicity; every edge must be used by one
        # (boundary) or two (interior) triangles.
        raw = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]], axis=0)
        raw = np.sort(raw, axis=1)
        edges, counts = np.unique(raw, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise ValueError("non-manifold edge shared by more than two triangles")
        ring_sets = [set() for _ in range(n)]
        for a, b in edges:
            ring_sets[a].add(int(b))
            ring_sets[b].add(int(a))
        incident_lists = [[] for _ in range(n)]
        for t, (a, b, c) in enumerate(T):
            incident_lists[a].append(t)
            incident_lists[b].append(t)
            incident_lists[c].append(t)

        boundary = np.zeros(n, dtype=bool)
        for a, b in edges[counts == 1]:
            boundary[a] = True
            boundary[b] = True

        self.rings = [np.array(sorted(s), dtype=np.int64) for s in ring_sets]
        self.incident = [np.array(s, dtype=np.int64) for s in incident_lists]
        self.valence = np.array([len(r) for r in self.rings], dtype=np.int64)
        self.boundary = boundary
        self.edges = edges
        if np.any(self.valence < 2):
            lone = int(np.argmin(self.valence))
            raise ValueError(f"vertex {lone} has valence {self.valence[lone]} (< 2)")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def geometry(self):
        """Cached :class:`TriangleGeometry` for this mesh."""
        if self._geometry is None:
            self._geometry = TriangleGeometry(self)
        return self._geometry

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_triangles} triangles)"


def build_adjacency(vertices, triangles):
    """Construct a :class:`TriMesh`, validating and orienting the input."""
    return TriMesh(vertices, triangles)


def _signed_area2(V, T):
    a = V[T[:, 0]]
    b = V[T[:, 1]]
    c = V[T[:, 2]]
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
        b[:, 1] - a[:, 1]
    )


class TriangleGeometry:
    """Per-triangle areas and gradient coefficients for a fixed mesh.

    For triangle ``(i, j, k)`` the gradient of a per-vertex scalar field is a
    fixed linear combination of the corner values ``f_i, f_j, f_k``; those
    coefficient vectors are assembled once. ``grad_x_op``/``grad_y_op`` are
    sparse (m, n) operators taking vertex values to per-triangle gradient
    components; ``vertex_average_op`` is the sparse (n, m) area-weighted
    average from triangles back to vertices.
    """

    def __init__(self, mesh):
        V = mesh.vertices
        T = mesh.triangles
        self.triangles = T
        a = V[T[:, 0]]
        b = V[T[:, 1]]
        c = V[T[:, 2]]
        self.areas = 0.5 * _signed_area2(V, T)
        if np.any(self.areas <= DEGENERATE_AREA):
            raise ValueError("zero-area triangle in geometry")

        vij = b - a
        vjk = c - b
        vik = c - a

        def dot(u, w):
            return u[:, 0] * w[:, 0] + u[:, 1] * w[:, 1]

        # Each corner's coefficient pairs the dot products of its adjacent
        # edge vectors with the vectors to the two opposite corners.
        d_i = dot(vij, vjk)[:, None] * (c - a) + dot(vik, -vjk)[:, None] * (b - a)
        d_j = dot(-vij, vik)[:, None] * (c - b) + dot(vjk, -vik)[:, None] * (a - b)
        d_k = dot(-vjk, -vij)[:, None] * (a - c) + dot(-vik, vij)[:, None] * (b - c)
        inv4a2 = 1.0 / (4.0 * self.areas**2)
        # coeffs[t, corner, component]
        self.coeffs = np.stack([d_i, d_j, d_k], axis=1) * inv4a2[:, None, None]

        m, n = T.shape[0], V.shape[0]
        rows = np.repeat(np.arange(m), 3)
        cols = T.ravel()
        self.grad_x_op = sparse.csr_array(
            (self.coeffs[:, :, 0].ravel(), (rows, cols)), shape=(m, n)
        )
        self.grad_y_op = sparse.csr_array(
            (self.coeffs[:, :, 1].ravel(), (rows, cols)), shape=(m, n)
        )

        self.vertex_areas = np.zeros(n)
        np.add.at(self.vertex_areas, cols, np.repeat(self.areas, 3))
        weights = np.repeat(self.areas, 3) / self.vertex_areas[cols]
        self.vertex_average_op = sparse.csr_array((weights, (cols, rows)), shape=(n, m))


def triangle_gradient(geom, tri, f):
    """Gradient (gx, gy) of the linear interpolant of ``f`` on triangle ``tri``."""
    f = np.asarray(f, dtype=np.float64)
    corner_vals = f[geom.triangles[tri]]
    g = corner_vals @ geom.coeffs[tri]
    return float(g[0]), float(g[1])


def vertex_gradient(mesh, geom, f, i):
    """Area-weighted average of incident-triangle gradients at vertex ``i``."""
    tris = mesh.incident[i]
    if tris.size == 0:
        raise ValueError(f"vertex {i} has no incident triangle")
    f = np.asarray(f, dtype=np.float64)
    areas = geom.areas[tris]
    grads = np.einsum("tc,tcd->td", f[geom.triangles[tris]], geom.coeffs[tris])
    g = (areas[:, None] * grads).sum(axis=0) / areas.sum()
    return float(g[0]), float(g[1])


def vertex_gradient_all(mesh, geom, f):
    """Per-vertex gradients of a scalar field as an (n, 2) array."""
    f = np.asarray(f, dtype=np.float64)
    gx = geom.vertex_average_op @ (geom.grad_x_op @ f)
    gy = geom.vertex_average_op @ (geom.grad_y_op @ f)
    return np.stack([gx, gy], axis=1)


def umbrella(mesh, u, i):
    """Mean of the one-ring values minus the center value at vertex ``i``.

    Works per coordinate for vector-valued ``u`` of shape (n,) or (n, d).
    """
    u = np.asarray(u, dtype=np.float64)
    out = u[mesh.rings[i]].mean(axis=0) - u[i]
    return float(out) if np.ndim(out) == 0 else out


def build_laplacian(mesh):
    """Sparse row-stochastic one-ring average matrix.

    Entry (i, j) is ``1 / valence(i)`` for every ring neighbor j of i; rows sum
    to one and the diagonal is zero. The umbrella operator is this matrix
    minus the identity.
    """
    n = mesh.n_vertices
    rows = np.repeat(np.arange(n), mesh.valence)
    cols = np.concatenate(mesh.rings)
    vals = np.repeat(1.0 / mesh.valence, mesh.valence)
    return sparse.csr_array((vals, (rows, cols)), shape=(n, n))


def smooth_displacement(L, u0, lam, iterations=1):
    """Explicit diffusion steps ``u <- (1 - lam) * u + lam * (L @ u)``.

    ``lam`` must lie strictly between 0 and 1; each step is a convex
    combination, so constant fields are fixed points and the per-component
    range can never grow.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"smoothing weight must be in (0, 1), got {lam}")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    u = np.array(u0, dtype=np.float64, copy=True)
    for _ in range(iterations):
        u = (1.0 - lam) * u + lam * (L @ u)
    return u
