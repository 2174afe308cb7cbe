"""Incremental Delaunay triangulation and edge flipping.

Points are inserted Bowyer-Watson style into a large enclosing triangle: all
triangles whose circumcircle strictly contains the new point are removed and
the star-shaped cavity is re-fanned from the point. A final flip sweep
restores the empty-circumcircle property wherever floating-point slack left a
violation and applies the deterministic tie-break for exactly cocircular
quadrilaterals: the kept diagonal is the one touching the lexicographically
smallest (x, y) vertex of the quad.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh, DEGENERATE_AREA

__all__ = [
    "delaunay",
    "flip_edges",
    "dedupe_points",
    "delaunay_violations",
    "circumcircles",
]

# Cocircularity slack, in pixels of circumcircle depth.
TIE_EPS = 1e-9


def dedupe_points(points, tol=1e-9):
    """Lexicographically sorted points with near-duplicates (within tol) removed."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    if P.shape[0] == 0:
        return P
    order = np.lexsort((P[:, 1], P[:, 0]))
    P = P[order]
    kept = [P[0]]
    for p in P[1:]:
        # Sorted by x, so only a suffix of kept points can be within tol.
        dup = False
        for q in reversed(kept):
            if p[0] - q[0] > tol:
                break
            if abs(p[1] - q[1]) <= tol and abs(p[0] - q[0]) <= tol:
                dup = True
                break
        if not dup:
            kept.append(p)
    return np.array(kept)


def circumcircles(V, T):
    """Circumcenters and squared radii of triangles, as (cx, cy, r2) arrays."""
    a = V[T[:, 0]]
    b = V[T[:, 1]]
    c = V[T[:, 2]]
    ab = b - a
    ac = c - a
    d = 2.0 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        ab2 = (ab * ab).sum(axis=1)
        ac2 = (ac * ac).sum(axis=1)
        ux = (ac[:, 1] * ab2 - ab[:, 1] * ac2) / d
        uy = (ab[:, 0] * ac2 - ac[:, 0] * ab2) / d
    bad = ~np.isfinite(ux) | ~np.isfinite(uy)
    ux[bad] = 0.0
    uy[bad] = 0.0
    r2 = ux * ux + uy * uy
    r2[bad] = np.inf
    return a[:, 0] + ux, a[:, 1] + uy, r2


def delaunay(points):
    """Delaunay triangulation of a 2-D point set as a :class:`TriMesh`.

    Near-duplicate points (within 1e-9) are removed first. Raises
    ``ValueError`` for fewer than three distinct points or an all-collinear
    set. Every triangle of the result is counter-clockwise and its
    circumcircle contains no other input point beyond the tie tolerance.
    """
    P = dedupe_points(points)
    if P.shape[0] < 3:
        raise ValueError(f"need at least 3 distinct points, got {P.shape[0]}")
    if _all_collinear(P):
        raise ValueError("all points are collinear")
    V, T = _bowyer_watson(P)
    mesh = TriMesh(V, T)
    return flip_edges(mesh, passes=100)


def _all_collinear(P, tol=1e-12):
    p0 = P[0]
    d = P - p0
    # First point with a distinct direction anchors the reference line.
    norms = np.hypot(d[:, 0], d[:, 1])
    k = int(np.argmax(norms))
    if norms[k] == 0.0:
        return True
    ref = d[k] / norms[k]
    cross = np.abs(d[:, 0] * ref[1] - d[:, 1] * ref[0])
    scale = max(norms.max(), 1.0)
    return bool(np.all(cross <= tol * scale + 1e-12))


def _bowyer_watson(P):
    n = P.shape[0]
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    center = 0.5 * (lo + hi)
    span = max(hi[0] - lo[0], hi[1] - lo[1], 1.0)
    # Enclosing triangle far enough out that circumcircles of real hull
    # triangles never reach its corners for pixel-scale point sets.
    big = 100.0 * span
    super_pts = center + 2.0 * big * np.array(
        [[np.cos(a), np.sin(a)] for a in (np.pi / 2, np.pi * 7 / 6, np.pi * 11 / 6)]
    )
    verts = np.vstack([P, super_pts])

    cap = max(4 * n + 16, 64)
    tris = np.empty((cap, 3), dtype=np.int64)
    circ = np.empty((cap, 3), dtype=np.float64)  # cx, cy, r2
    alive = np.zeros(cap, dtype=bool)
    count = 0

    def push(rows):
        """Append triangles with cached circumcircles; returns the new count."""
        nonlocal cap, tris, circ, alive
        k = len(rows)
        if count + k > cap:
            cap = max(2 * cap, count + k)
            tris = np.resize(tris, (cap, 3))
            circ = np.resize(circ, (cap, 3))
            alive = np.resize(alive, cap)
            alive[count:] = False
        rows = np.asarray(rows, dtype=np.int64)
        cx, cy, r2 = circumcircles(verts, rows)
        tris[count : count + k] = rows
        circ[count : count + k, 0] = cx
        circ[count : count + k, 1] = cy
        circ[count : count + k, 2] = r2
        alive[count : count + k] = True
        return count + k

    first = np.array([[n, n + 1, n + 2]])
    if _orient(verts[n], verts[n + 1], verts[n + 2]) < 0:
        first = first[:, [0, 2, 1]]
    count = push(first)

    for idx in range(n):
        px, py = verts[idx]
        dx = px - circ[:count, 0]
        dy = py - circ[:count, 1]
        r2 = circ[:count, 2]
        # Strictly inside only: exact cocircles stay, handled by the flip pass.
        tol = 4e-9 * np.sqrt(np.maximum(r2, 0.0)) + 1e-12
        bad = alive[:count] & (dx * dx + dy * dy < r2 - tol)
        bad_idx = np.nonzero(bad)[0]
        if bad_idx.size == 0:
            bad_idx = _containing_triangle(verts, tris, alive, count, idx)
        cavity = tris[bad_idx]
        alive[bad_idx] = False

        directed = set()
        for a, b, c in cavity:
            for u, v in ((a, b), (b, c), (c, a)):
                directed.add((int(u), int(v)))
        new_rows = [
            (u, v, idx) for (u, v) in directed if (v, u) not in directed
        ]
        count = push(new_rows)

    keep = alive[:count] & np.all(tris[:count] < n, axis=1)
    T = tris[:count][keep]
    if T.shape[0] == 0:
        raise ValueError("triangulation collapsed (points nearly collinear)")
    return P, T


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])


def _containing_triangle(verts, tris, alive, count, idx):
    # Fallback when roundoff leaves no strictly-bad triangle: take the live
    # triangle containing the point (it exists, the super-triangle covers it).
    p = verts[idx]
    for t in range(count):
        if not alive[t]:
            continue
        a, b, c = verts[tris[t, 0]], verts[tris[t, 1]], verts[tris[t, 2]]
        if (
            _orient(a, b, p) >= -1e-12
            and _orient(b, c, p) >= -1e-12
            and _orient(c, a, p) >= -1e-12
        ):
            return np.array([t])
    raise RuntimeError("insertion point not covered by current triangulation")


def flip_edges(mesh, passes=16):
    """Flip interior edges until every one satisfies the local Delaunay test.

    Runs full sweeps (at most ``passes``) and stops early once a sweep makes
    no change. Vertex positions are untouched. Exactly cocircular
    quadrilaterals are oriented by the lexicographic tie-break.
    """
    V = mesh.vertices
    T = mesh.triangles.copy()
    changed_any = False
    for _ in range(max(passes, 0)):
        n_flips, T = _flip_sweep(V, T)
        if n_flips == 0:
            break
        changed_any = True
    return TriMesh(V, T) if changed_any else mesh


def _flip_sweep(V, T):
    edge_map = {}
    for t, (a, b, c) in enumerate(T):
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            key = (u, v) if u < v else (v, u)
            edge_map.setdefault(key, []).append((t, int(w)))

    interior = [(k, e) for k, e in edge_map.items() if len(e) == 2]
    if not interior:
        return 0, T
    keys = np.array([k for k, _ in interior], dtype=np.int64)
    opp = np.array([[e[0][1], e[1][1]] for _, e in interior], dtype=np.int64)
    tri_pair = np.array([[e[0][0], e[1][0]] for _, e in interior], dtype=np.int64)

    # Depth of the second opposite vertex inside the circumcircle through
    # (u, v, first opposite); positive depth beyond the tie slack means the
    # edge is locally non-Delaunay.
    quad = np.concatenate([keys, opp], axis=1)  # u, v, c, d
    cx, cy, r2 = circumcircles(V, quad[:, [0, 1, 2]])
    d = V[quad[:, 3]]
    dist = np.hypot(d[:, 0] - cx, d[:, 1] - cy)
    depth = np.sqrt(np.maximum(r2, 0.0)) - dist

    violate = depth > TIE_EPS
    tie = np.abs(depth) <= TIE_EPS
    if np.any(tie):
        # Keep the diagonal that touches the lexicographically smallest
        # corner of the cocircular quad.
        want_flip = np.zeros(len(interior), dtype=bool)
        for i in np.nonzero(tie)[0]:
            u, v, c, q = quad[i]
            corners = sorted((u, v, c, q), key=lambda j: (V[j, 0], V[j, 1], j))
            best = corners[0]
            if best not in (u, v):
                want_flip[i] = True
        candidates = np.nonzero(violate | want_flip)[0]
    else:
        candidates = np.nonzero(violate)[0]

    if candidates.size == 0:
        return 0, T

    order = candidates[np.argsort(-np.where(violate[candidates], depth[candidates], 0.0))]
    dirty = np.zeros(T.shape[0], dtype=bool)
    n_flips = 0
    for i in order:
        t1, t2 = tri_pair[i]
        if dirty[t1] or dirty[t2]:
            continue
        u, v = keys[i]
        c, q = opp[i]
        # New triangles after replacing diagonal (u, v) with (c, q); skip
        # non-convex quads, where the flip would fold the mesh.
        a1 = _orient(V[u], V[q], V[c])
        a2 = _orient(V[q], V[v], V[c])
        if abs(a1) <= 2.0 * DEGENERATE_AREA or abs(a2) <= 2.0 * DEGENERATE_AREA:
            continue
        if (a1 > 0) != (a2 > 0):
            continue
        if a1 > 0:
            T[t1] = (u, q, c)
            T[t2] = (q, v, c)
        else:
            T[t1] = (u, c, q)
            T[t2] = (q, c, v)
        dirty[t1] = dirty[t2] = True
        n_flips += 1
    return n_flips, T


def delaunay_violations(V, T, margin=1e-9):
    """Count (triangle, vertex) pairs where a vertex sits inside a
    circumcircle deeper than ``margin`` pixels. Zero for a Delaunay mesh."""
    V = np.asarray(V, dtype=np.float64)
    T = np.asarray(T, dtype=np.int64)
    cx, cy, r2 = circumcircles(V, T)
    r = np.sqrt(np.maximum(r2, 0.0))
    total = 0
    chunk = max(1, int(2e6 // max(V.shape[0], 1)))
    for s in range(0, T.shape[0], chunk):
        e = min(s + chunk, T.shape[0])
        dist = np.hypot(
            V[None, :, 0] - cx[s:e, None], V[None, :, 1] - cy[s:e, None]
        )
        inside = dist < (r[s:e, None] - margin)
        for k in range(3):
            rows = np.arange(s, e)
            inside[rows - s, T[rows, k]] = False
        total += int(inside.sum())
    return total
