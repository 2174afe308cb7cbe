"""Content-adaptive triangular meshing of an image.

Node placement combines three samplers: edge points from a Canny detector,
texture points from Floyd-Steinberg halftoning of a gradient-magnitude
density map, and a regular fallback grid that always contributes the four
image corners. The combined points are Delaunay-triangulated, relaxed toward
intensity-weighted centroids (CVT step) and circumcenter averages (ODT step),
and finally cleaned with edge flips. The four corners never move, so the
triangulation always covers the full image rectangle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .delaunay import circumcircles, dedupe_points, delaunay, delaunay_violations, flip_edges
from .image import FileFormatError
from .mesh import TriMesh, DEGENERATE_AREA

__all__ = [
    "NodeBudget",
    "MeshGenConfig",
    "canny_sample",
    "halftone_sample",
    "uniform_sample",
    "smooth_mesh",
    "generate_mesh",
    "save_mesh",
    "load_mesh",
    "save_mesh_json",
    "load_mesh_json",
    "quality_stats",
]


@dataclass(frozen=True)
class NodeBudget:
    """How many mesh nodes to place and how to split them across samplers."""

    target_nodes: int
    canny_fraction: float = 0.4
    halftone_fraction: float = 0.4
    uniform_fraction: float = 0.2

    def __post_init__(self):
        total = self.canny_fraction + self.halftone_fraction + self.uniform_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"sampler fractions sum to {total}, expected 1")
        if min(self.canny_fraction, self.halftone_fraction, self.uniform_fraction) < 0:
            raise ValueError("sampler fractions must be non-negative")
        if self.target_nodes < 4:
            raise ValueError(f"target_nodes must be >= 4, got {self.target_nodes}")


@dataclass(frozen=True)
class MeshGenConfig:
    canny_low: float = 8.0
    canny_high: float = 24.0
    canny_sigma: float = 1.4
    min_node_spacing: float = 3.0
    cvt_iterations: int = 3
    odt_iterations: int = 2
    flip_passes: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.canny_low < self.canny_high:
            raise ValueError("canny_low must be below canny_high")
        if self.min_node_spacing < 1.0:
            raise ValueError("min_node_spacing must be >= 1 pixel")
        if min(self.cvt_iterations, self.odt_iterations, self.flip_passes) < 0:
            raise ValueError("iteration counts must be >= 0")


class _SpacingGrid:
    """Uniform hash grid enforcing a minimum distance between kept points."""

    def __init__(self, spacing):
        self.spacing = float(spacing)
        self.cells = {}

    def try_add(self, x, y):
        s = self.spacing
        cx, cy = int(x // s), int(y // s)
        for i in range(cx - 1, cx + 2):
            for j in range(cy - 1, cy + 2):
                for px, py in self.cells.get((i, j), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < s * s:
                        return False
        self.cells.setdefault((cx, cy), []).append((x, y))
        return True


def _gradient_magnitude(data, sigma):
    sm = ndimage.gaussian_filter(data, sigma, mode="nearest")
    gy, gx = np.gradient(sm)
    return np.hypot(gx, gy)


def _canny_edges(data, sigma, low, high):
    """Boolean edge mask: gradient magnitude, 4-direction thinning, hysteresis."""
    sm = ndimage.gaussian_filter(data, sigma, mode="nearest")
    gy, gx = np.gradient(sm)
    mag = np.hypot(gx, gy)

    padded = np.pad(mag, 1, constant_values=-1.0)
    shifted = {
        (dy, dx): padded[1 + dy : padded.shape[0] - 1 + dy, 1 + dx : padded.shape[1] - 1 + dx]
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
        if (dy, dx) != (0, 0)
    }
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    sector = np.floor((angle + np.pi / 8) / (np.pi / 4)).astype(int) % 4
    pairs = {0: ((0, 1), (0, -1)), 1: ((1, 1), (-1, -1)), 2: ((1, 0), (-1, 0)), 3: ((1, -1), (-1, 1))}
    keep = np.zeros_like(mag, dtype=bool)
    for s, (d1, d2) in pairs.items():
        sel = sector == s
        keep |= sel & (mag >= shifted[d1]) & (mag >= shifted[d2])

    weak = keep & (mag >= low)
    strong = keep & (mag >= high)
    if not strong.any():
        return np.zeros_like(strong)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    good = np.unique(labels[strong])
    return weak & np.isin(labels, good[good > 0])


def canny_sample(img, cfg, budget):
    """Up to ``budget`` points on Canny edge pixels, strongest edges first,
    strictly separated by ``cfg.min_node_spacing``."""
    if budget <= 0:
        return np.empty((0, 2))
    edge = _canny_edges(img.data, cfg.canny_sigma, cfg.canny_low, cfg.canny_high)
    if not edge.any():
        return np.empty((0, 2))
    mag = _gradient_magnitude(img.data, cfg.canny_sigma)
    ys, xs = np.nonzero(edge)
    order = np.lexsort((xs, ys, -mag[ys, xs]))
    grid = _SpacingGrid(cfg.min_node_spacing)
    out = []
    for k in order:
        x, y = float(xs[k]), float(ys[k])
        if grid.try_add(x, y):
            out.append((x, y))
            if len(out) >= budget:
                break
    return np.array(out) if out else np.empty((0, 2))


def _floyd_steinberg(density, serpentine_start=0):
    """Binary dot mask from error diffusion of a non-negative density map.

    Rows are scanned in alternating directions; the total number of dots
    tracks the total density mass up to boundary residue.
    """
    acc = np.asarray(density, dtype=np.float64).copy()
    h, w = acc.shape
    dots = np.zeros((h, w), dtype=bool)
    for row in range(h):
        reverse = (row + serpentine_start) % 2 == 1
        cols = range(w - 1, -1, -1) if reverse else range(w)
        step = -1 if reverse else 1
        for col in cols:
            v = acc[row, col]
            on = v >= 0.5
            dots[row, col] = on
            err = v - 1.0 if on else v
            ahead = col + step
            if 0 <= ahead < w:
                acc[row, ahead] += err * (7.0 / 16.0)
            if row + 1 < h:
                behind = col - step
                if 0 <= behind < w:
                    acc[row + 1, behind] += err * (3.0 / 16.0)
                acc[row + 1, col] += err * (5.0 / 16.0)
                if 0 <= ahead < w:
                    acc[row + 1, ahead] += err * (1.0 / 16.0)
    return dots


def halftone_sample(img, budget, spacing, seed=0):
    """Texture-following points from halftoning a gradient-density map.

    The density map is the smoothed gradient magnitude scaled so its mass is
    ``budget``; the returned dots are thinned to the requested spacing in a
    seeded random order and capped at ``budget``.
    """
    if budget <= 0:
        return np.empty((0, 2))
    mag = _gradient_magnitude(img.data, 1.0)
    total = float(mag.sum())
    if total <= 1e-12:
        return np.empty((0, 2))
    rng = np.random.default_rng(seed)
    density = mag * (float(budget) / total)
    dots = _floyd_steinberg(density, serpentine_start=int(rng.integers(2)))
    ys, xs = np.nonzero(dots)
    if ys.size == 0:
        return np.empty((0, 2))
    order = rng.permutation(ys.size)
    grid = _SpacingGrid(spacing)
    out = []
    for k in order:
        x, y = float(xs[k]), float(ys[k])
        if grid.try_add(x, y):
            out.append((x, y))
            if len(out) >= budget:
                break
    return np.array(out) if out else np.empty((0, 2))


def uniform_sample(width, height, budget):
    """Regular grid of about ``budget`` points, always including the corners.

    Layout: a k-by-k grid spanning the image, optionally topped up with cell
    centers of the (k-1)-by-(k-1) staggered grid in row-major order; k is
    chosen from floor/ceil of sqrt(budget), whichever lands closer to the
    request. budget=4 gives exactly the corners, budget=5 corners plus
    center.
    """
    if budget < 4:
        raise ValueError(f"uniform budget must be >= 4, got {budget}")
    kf = max(2, math.isqrt(budget))
    count_f = kf * kf + min(budget - kf * kf, (kf - 1) * (kf - 1))
    kc = kf + 1
    count_c = kc * kc
    if abs(count_c - budget) < abs(count_f - budget):
        k, extra = kc, 0
    else:
        k, extra = kf, min(budget - kf * kf, (kf - 1) * (kf - 1))
    xs = np.linspace(0.0, width - 1.0, k)
    ys = np.linspace(0.0, height - 1.0, k)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if extra > 0:
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        sx, sy = np.meshgrid(cx, cy)
        stagger = np.stack([sx.ravel(), sy.ravel()], axis=1)[:extra]
        pts = np.vstack([pts, stagger])
    return pts


def _bilinear(arr, x, y):
    h, w = arr.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x), w - 2 if w > 1 else 0).astype(int)
    y0 = np.minimum(np.floor(y), h - 2 if h > 1 else 0).astype(int)
    tx = x - x0
    ty = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return (
        arr[y0, x0] * (1 - tx) * (1 - ty)
        + arr[y0, x1] * tx * (1 - ty)
        + arr[y1, x0] * (1 - tx) * ty
        + arr[y1, x1] * tx * ty
    )


def smooth_mesh(mesh, img, cfg):
    """Relax node positions toward intensity-weighted one-ring targets.

    CVT passes pull each node to the density-weighted average of its incident
    triangle centroids; ODT passes use circumcenters instead. The density is
    the smoothed image gradient magnitude (constant images reduce to plain
    area-weighted centroids). Boundary nodes slide only along the image edge,
    corners stay fixed, and any move that would invert an incident triangle
    is rejected.
    """
    if cfg.cvt_iterations == 0 and cfg.odt_iterations == 0:
        return mesh
    w, h = float(img.width - 1), float(img.height - 1)
    mag = _gradient_magnitude(img.data, 1.5)
    density_floor = max(1e-3 * float(mag.max()), 1e-6)

    V = mesh.vertices.copy()
    T = mesh.triangles
    incident = mesh.incident
    kind = _node_kinds(mesh, w, h)

    def relax(use_circumcenters):
        for i in range(V.shape[0]):
            if kind[i] == _FIXED:
                continue
            tris = incident[i]
            a = V[T[tris, 0]]
            b = V[T[tris, 1]]
            c = V[T[tris, 2]]
            areas = 0.5 * (
                (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
            )
            if use_circumcenters:
                cx, cy, _ = circumcircles(V, T[tris])
                targets = np.stack([cx, cy], axis=1)
            else:
                targets = (a + b + c) / 3.0
            dens = _bilinear(mag, targets[:, 0], targets[:, 1]) + density_floor
            wgt = np.abs(areas) * dens
            total = wgt.sum()
            if total <= 0 or not np.all(np.isfinite(targets)):
                continue
            pos = (wgt[:, None] * targets).sum(axis=0) / total
            pos[0] = min(max(pos[0], 0.0), w)
            pos[1] = min(max(pos[1], 0.0), h)
            if kind[i] == _SLIDE_X:
                pos[1] = V[i, 1]
            elif kind[i] == _SLIDE_Y:
                pos[0] = V[i, 0]
            if _move_inverts(V, T, tris, i, pos):
                continue
            V[i] = pos

    for _ in range(cfg.cvt_iterations):
        relax(use_circumcenters=False)
    for _ in range(cfg.odt_iterations):
        relax(use_circumcenters=True)
    return TriMesh(V, T)


_FREE, _SLIDE_X, _SLIDE_Y, _FIXED = 0, 1, 2, 3


def _node_kinds(mesh, w, h):
    """Movement class per node: free interior, slide along a horizontal or
    vertical image edge, or fixed (corners and off-rectangle boundary)."""
    V = mesh.vertices
    tol = 1e-6
    kinds = np.full(V.shape[0], _FREE, dtype=int)
    for i in np.nonzero(mesh.boundary)[0]:
        x, y = V[i]
        on_v = x <= tol or x >= w - tol
        on_h = y <= tol or y >= h - tol
        if on_v and on_h:
            kinds[i] = _FIXED
        elif on_v:
            kinds[i] = _SLIDE_Y
        elif on_h:
            kinds[i] = _SLIDE_X
        else:
            kinds[i] = _FIXED
    return kinds


def _move_inverts(V, T, tris, i, pos):
    for t in tris:
        p = [pos if v == i else V[v] for v in T[t]]
        area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (
            p[1][1] - p[0][1]
        )
        if area2 <= 2.0 * DEGENERATE_AREA:
            return True
    return False


def generate_mesh(img, budget, cfg=None):
    """Full meshing pipeline for an image.

    Runs the three samplers against the node budget (shortfall from the edge
    and texture samplers rolls over to the uniform grid), removes duplicates,
    forces the image corners, triangulates, smooths, and flips. The node
    count of the result stays within the sampler granularity of
    ``budget.target_nodes``.
    """
    cfg = cfg or MeshGenConfig()
    w, h = img.width, img.height
    corners = np.array(
        [[0.0, 0.0], [w - 1.0, 0.0], [0.0, h - 1.0], [w - 1.0, h - 1.0]]
    )
    target = budget.target_nodes

    n_canny = int(round(target * budget.canny_fraction))
    pts_canny = canny_sample(img, cfg, n_canny)
    n_half = int(round(target * budget.halftone_fraction)) + (n_canny - len(pts_canny))
    pts_half = halftone_sample(img, n_half, cfg.min_node_spacing, seed=cfg.seed)

    partial = dedupe_points(np.vstack([corners, pts_canny, pts_half]))
    n_uniform = target - len(partial)
    if n_uniform >= 4:
        pts_uniform = uniform_sample(w, h, n_uniform)
        points = dedupe_points(np.vstack([partial, pts_uniform]))
    else:
        points = partial

    mesh = delaunay(points)
    mesh = smooth_mesh(mesh, img, cfg)
    return flip_edges(mesh, cfg.flip_passes)


# ---------------------------------------------------------------------------
# Mesh file formats: Triangle-style .node/.ele pair and single-file JSON,
# both 0-based.
# ---------------------------------------------------------------------------


def save_mesh(mesh, stem):
    """Write ``<stem>.node`` and ``<stem>.ele`` text files."""
    with open(f"{stem}.node", "w", encoding="ascii") as fh:
        fh.write(f"{mesh.n_vertices}\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i} {float(x)!r} {float(y)!r}\n")
    with open(f"{stem}.ele", "w", encoding="ascii") as fh:
        fh.write(f"{mesh.n_triangles}\n")
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i} {a} {b} {c}\n")


def load_mesh(stem):
    """Read a ``.node``/``.ele`` pair written by :func:`save_mesh`."""
    try:
        with open(f"{stem}.node", "r", encoding="ascii") as fh:
            tokens = fh.read().split()
        n = int(tokens[0])
        rows = np.array(tokens[1 : 1 + 3 * n], dtype=np.float64).reshape(n, 3)
        vertices = rows[np.argsort(rows[:, 0].astype(int))][:, 1:]
        with open(f"{stem}.ele", "r", encoding="ascii") as fh:
            tokens = fh.read().split()
        m = int(tokens[0])
        rows = np.array(tokens[1 : 1 + 4 * m], dtype=np.int64).reshape(m, 4)
        triangles = rows[np.argsort(rows[:, 0])][:, 1:]
    except (ValueError, IndexError) as exc:
        raise FileFormatError(f"malformed mesh files {stem}.node/.ele: {exc}") from exc
    return TriMesh(vertices, triangles)


def save_mesh_json(mesh, path):
    payload = {
        "nodes": [[float(x), float(y)] for x, y in mesh.vertices],
        "triangles": [[int(a), int(b), int(c)] for a, b, c in mesh.triangles],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh)


def load_mesh_json(path):
    try:
        with open(path, "r", encoding="ascii") as fh:
            payload = json.load(fh)
        nodes = np.array(payload["nodes"], dtype=np.float64)
        triangles = np.array(payload["triangles"], dtype=np.int64)
    except (ValueError, KeyError, TypeError) as exc:
        raise FileFormatError(f"malformed mesh file {path!r}: {exc}") from exc
    return TriMesh(nodes, triangles)


def quality_stats(mesh, audit_margin=1e-9):
    """Summary quality numbers used by the command-line mesh report."""
    V = mesh.vertices
    T = mesh.triangles
    a = V[T[:, 0]]
    b = V[T[:, 1]]
    c = V[T[:, 2]]
    areas = 0.5 * (
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
        - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    )
    angles = []
    for p, q, r in ((a, b, c), (b, c, a), (c, a, b)):
        u = q - p
        v = r - p
        cosang = (u * v).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return {
        "n_nodes": int(mesh.n_vertices),
        "n_triangles": int(mesh.n_triangles),
        "n_edges": int(mesh.n_edges),
        "min_area": float(areas.min()),
        "min_angle": float(np.min(angles)),
        "delaunay_violations": int(delaunay_violations(V, T, margin=audit_margin)),
    }
