"""Dense displacement fields from mesh-node displacements.

Node displacements extend to every pixel by barycentric interpolation inside
the containing triangle, giving a field that is exact at the nodes and
piecewise linear (continuous) across triangle edges. Warping is backward:
the output at pixel p samples the template at p + u(p), so no holes appear.
"""

from __future__ import annotations

import struct

import numpy as np

from .image import FileFormatError, ImageGrid

__all__ = [
    "DenseField",
    "PointLocator",
    "locate",
    "densify",
    "warp_image",
    "difference_image",
    "save_field",
    "load_field",
    "save_node_displacements_csv",
]

FIELD_MAGIC = b"MRDF"
_BARY_EPS = 1e-9


class DenseField:
    """Per-pixel displacement planes ``ux``/``uy`` for a width-by-height image."""

    __slots__ = ("width", "height", "ux", "uy")

    def __init__(self, ux, uy):
        ux = np.asarray(ux, dtype=np.float64)
        uy = np.asarray(uy, dtype=np.float64)
        if ux.ndim != 2 or ux.shape != uy.shape:
            raise ValueError(f"displacement planes must match, got {ux.shape} vs {uy.shape}")
        if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
            raise ValueError("displacement planes must be finite")
        self.height, self.width = ux.shape
        self.ux = ux
        self.uy = uy

    @property
    def shape(self):
        return (self.height, self.width)

    @classmethod
    def zero(cls, width, height):
        return cls(np.zeros((height, width)), np.zeros((height, width)))


class MeshCoverageError(RuntimeError):
    """An in-domain point was not covered by any mesh triangle."""


class PointLocator:
    """Uniform-bin spatial index answering point-in-triangle queries.

    Candidate triangles are stored per bin in ascending index order, so a
    point on a shared edge resolves to the lowest-index containing triangle.
    """

    def __init__(self, mesh, cell_size=None):
        self.mesh = mesh
        V = mesh.vertices
        T = mesh.triangles
        self.lo = V.min(axis=0)
        self.hi = V.max(axis=0)
        span = np.maximum(self.hi - self.lo, 1e-9)
        if cell_size is None:
            cell_size = max(2.0, float(np.sqrt(2.0 * span[0] * span[1] / max(T.shape[0], 1))))
        self.cell = float(cell_size)
        self.nx = int(np.ceil(span[0] / self.cell)) + 1
        self.ny = int(np.ceil(span[1] / self.cell)) + 1
        bins = [[] for _ in range(self.nx * self.ny)]
        corners = V[T]  # (m, 3, 2)
        mins = corners.min(axis=1)
        maxs = corners.max(axis=1)
        for t in range(T.shape[0]):
            bx0, by0 = self._cell_of(mins[t, 0], mins[t, 1])
            bx1, by1 = self._cell_of(maxs[t, 0], maxs[t, 1])
            for by in range(by0, by1 + 1):
                for bx in range(bx0, bx1 + 1):
                    bins[by * self.nx + bx].append(t)
        self.bins = [np.array(b, dtype=np.int64) for b in bins]

    def _cell_of(self, x, y):
        bx = int((min(max(x, self.lo[0]), self.hi[0]) - self.lo[0]) / self.cell)
        by = int((min(max(y, self.lo[1]), self.hi[1]) - self.lo[1]) / self.cell)
        return min(bx, self.nx - 1), min(by, self.ny - 1)


def _barycentric(V, tri_rows, px, py):
    a = V[tri_rows[:, 0]]
    b = V[tri_rows[:, 1]]
    c = V[tri_rows[:, 2]]
    d = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    w1 = ((b[:, 0] - px) * (c[:, 1] - py) - (c[:, 0] - px) * (b[:, 1] - py)) / d
    w2 = ((c[:, 0] - px) * (a[:, 1] - py) - (a[:, 0] - px) * (c[:, 1] - py)) / d
    w3 = 1.0 - w1 - w2
    return np.stack([w1, w2, w3], axis=1)


def locate(locator, p):
    """Containing triangle index and barycentric weights for point ``p``.

    Ties on shared edges go to the lowest triangle index. Raises
    :class:`MeshCoverageError` when no triangle contains the point.
    """
    px, py = float(p[0]), float(p[1])
    mesh = locator.mesh
    bx, by = locator._cell_of(px, py)
    for cand in (locator.bins[by * locator.nx + bx], np.arange(mesh.n_triangles)):
        if cand.size == 0:
            continue
        w = _barycentric(mesh.vertices, mesh.triangles[cand], px, py)
        ok = np.nonzero(np.min(w, axis=1) >= -_BARY_EPS)[0]
        if ok.size:
            k = ok[0]
            return int(cand[k]), w[k]
    raise MeshCoverageError(f"point ({px}, {py}) not covered by any triangle")


def densify(mesh, u, width=None, height=None):
    """Barycentric interpolation of node displacements onto the pixel grid.

    The grid defaults to the integer bounding box of the mesh (images meshed
    by this package anchor nodes at the corner pixels, so that is the image
    rectangle). Exact at mesh nodes; raises :class:`MeshCoverageError` if any
    pixel center is left uncovered.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_vertices, 2):
        raise ValueError(f"displacement shape {u.shape} != ({mesh.n_vertices}, 2)")
    V = mesh.vertices
    T = mesh.triangles
    if width is None:
        width = int(round(V[:, 0].max())) + 1
    if height is None:
        height = int(round(V[:, 1].max())) + 1

    tri_of = np.full((height, width), -1, dtype=np.int64)
    weights = np.zeros((height, width, 3))
    corners = V[T]
    mins = corners.min(axis=1)
    maxs = corners.max(axis=1)
    # Ascending triangle order and assign-if-unassigned implements the
    # lowest-index tie-break on shared edges.
    for t in range(T.shape[0]):
        x0 = max(int(np.ceil(mins[t, 0] - _BARY_EPS)), 0)
        x1 = min(int(np.floor(maxs[t, 0] + _BARY_EPS)), width - 1)
        y0 = max(int(np.ceil(mins[t, 1] - _BARY_EPS)), 0)
        y1 = min(int(np.floor(maxs[t, 1] + _BARY_EPS)), height - 1)
        if x1 < x0 or y1 < y0:
            continue
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        px = gx.ravel().astype(np.float64)
        py = gy.ravel().astype(np.float64)
        w = _barycentric(V, T[[t]].repeat(px.size, axis=0), px, py)
        inside = np.min(w, axis=1) >= -_BARY_EPS
        free = tri_of[py.astype(int), px.astype(int)] < 0
        sel = inside & free
        if not sel.any():
            continue
        sy = py[sel].astype(int)
        sx = px[sel].astype(int)
        tri_of[sy, sx] = t
        weights[sy, sx] = w[sel]

    missing = tri_of < 0
    if missing.any():
        locator = PointLocator(mesh)
        for y, x in zip(*np.nonzero(missing)):
            t, w = locate(locator, (float(x), float(y)))
            tri_of[y, x] = t
            weights[y, x] = w

    node_ids = T[tri_of]  # (h, w, 3)
    ux = (weights * u[node_ids, 0]).sum(axis=2)
    uy = (weights * u[node_ids, 1]).sum(axis=2)
    return DenseField(ux, uy)


def warp_image(template, field):
    """Backward-warp ``template`` by a dense field: out(p) = Te(p + u(p))."""
    if (field.height, field.width) != template.shape:
        raise ValueError(f"field {field.shape} does not match image {template.shape}")
    gx, gy = np.meshgrid(
        np.arange(field.width, dtype=np.float64),
        np.arange(field.height, dtype=np.float64),
    )
    vals = template.sample(gx + field.ux, gy + field.uy)
    return ImageGrid(field.width, field.height, vals)


def difference_image(a, b):
    """Per-pixel absolute difference image."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return ImageGrid(a.width, a.height, np.abs(a.data - b.data))


# ---------------------------------------------------------------------------
# Binary field format: 16-byte header (magic "MRDF", u32 version, u32 width,
# u32 height, little-endian) followed by the ux plane then the uy plane as
# row-major little-endian float32.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIII")


def save_field(field, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, 1, field.width, field.height))
        fh.write(field.ux.astype("<f4").tobytes())
        fh.write(field.uy.astype("<f4").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FileFormatError(f"truncated field file {path!r}")
    magic, version, width, height = _HEADER.unpack_from(blob)
    if magic != FIELD_MAGIC:
        raise FileFormatError(f"bad field magic in {path!r}")
    if version != 1:
        raise FileFormatError(f"unsupported field version {version} in {path!r}")
    n = width * height
    expected = _HEADER.size + 2 * 4 * n
    if len(blob) != expected:
        raise FileFormatError(f"field file {path!r} has {len(blob)} bytes, expected {expected}")
    planes = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    ux = planes[:n].reshape(height, width).astype(np.float64)
    uy = planes[n:].reshape(height, width).astype(np.float64)
    return DenseField(ux, uy)


def save_node_displacements_csv(mesh, u, path):
    """Write one ``x,y,ux,uy`` row per mesh node."""
    u = np.asarray(u, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,y,ux,uy\n")
        for (x, y), (dx, dy) in zip(mesh.vertices, u):
            fh.write(f"{float(x)!r},{float(y)!r},{float(dx)!r},{float(dy)!r}\n")
