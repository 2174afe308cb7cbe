import numpy as np
import pytest

from meshreg import build_adjacency, flip_edges
from meshreg.delaunay import dedupe_points, delaunay


def brute_force_violations(V, T, margin=1e-9):
    """Independent empty-circumcircle audit: circumcenter from the normal
    equations of the perpendicular bisectors, then a distance test against
    every other vertex."""
    count = 0
    for tri in T:
        a, b, c = V[tri]
        A = 2.0 * np.array([b - a, c - a])
        rhs = np.array([b @ b - a @ a, c @ c - a @ a])
        center = np.linalg.solve(A, rhs)
        radius = np.linalg.norm(a - center)
        for j in range(V.shape[0]):
            if j in tri:
                continue
            if np.linalg.norm(V[j] - center) < radius - margin:
                count += 1
    return count


def signed_areas(mesh):
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return 0.5 * (
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
        - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    )


def edge_set(mesh):
    return {tuple(e) for e in mesh.edges.tolist()}


def convex_hull_area(P):
    from scipy.spatial import ConvexHull

    return ConvexHull(P).volume


# ---------------------------------------------------------------------------
# triangulation
# ---------------------------------------------------------------------------


def test_three_points_single_triangle():
    mesh = delaunay([(0, 0), (2, 0), (0, 3)])
    assert mesh.n_triangles == 1
    assert mesh.n_vertices == 3


def test_square_tie_break_picks_lexicographic_diagonal():
    mesh = delaunay([(0, 0), (1, 0), (0, 1), (1, 1)])
    assert mesh.n_triangles == 2
    assert mesh.n_edges == 5
    V = mesh.vertices
    idx = {tuple(v): i for i, v in enumerate(V.tolist())}
    kept = tuple(sorted((idx[(0.0, 0.0)], idx[(1.0, 1.0)])))
    dropped = tuple(sorted((idx[(1.0, 0.0)], idx[(0.0, 1.0)])))
    assert kept in edge_set(mesh)
    assert dropped not in edge_set(mesh)


def test_random_points_pass_brute_force_audit():
    rng = np.random.default_rng(7)
    P = rng.uniform(0, 100, (20, 2))
    mesh = delaunay(P)
    assert brute_force_violations(mesh.vertices, mesh.triangles) == 0
    assert (signed_areas(mesh) > 0).all()
    assert signed_areas(mesh).sum() == pytest.approx(convex_hull_area(P), rel=1e-9)


def test_grid_points_with_cocircular_ties():
    xs, ys = np.meshgrid(np.arange(5.0), np.arange(4.0))
    P = np.column_stack([xs.ravel(), ys.ravel()])
    mesh = delaunay(P)
    assert mesh.n_vertices == 20
    assert brute_force_violations(mesh.vertices, mesh.triangles) == 0
    assert signed_areas(mesh).sum() == pytest.approx(12.0)


def test_larger_random_set_audit_and_hull():
    rng = np.random.default_rng(19)
    P = rng.uniform(-50, 50, (120, 2))
    mesh = delaunay(P)
    assert brute_force_violations(mesh.vertices, mesh.triangles) == 0
    assert signed_areas(mesh).sum() == pytest.approx(convex_hull_area(P), rel=1e-9)


def test_duplicates_are_removed():
    P = [(0, 0), (1, 0), (0, 1), (1e-12, 1e-12), (1, 0)]
    mesh = delaunay(P)
    assert mesh.n_vertices == 3


def test_dedupe_tolerance():
    P = np.array([[0, 0], [0, 5e-10], [0, 2], [1, 1]])
    assert dedupe_points(P).shape[0] == 3


def test_rejects_degenerate_inputs():
    with pytest.raises(ValueError, match="at least 3"):
        delaunay([(0, 0), (1, 1)])
    with pytest.raises(ValueError, match="collinear"):
        delaunay([(0, 0), (1, 1), (2, 2), (3, 3)])
    with pytest.raises(ValueError, match="at least 3"):
        delaunay([(0, 0), (0, 0), (1, 1)])


def test_triangulation_is_deterministic():
    rng = np.random.default_rng(3)
    P = rng.uniform(0, 10, (40, 2))
    m1 = delaunay(P)
    m2 = delaunay(np.array(P[::-1]))  # same set, different order
    assert np.array_equal(m1.vertices, m2.vertices)
    assert np.array_equal(m1.triangles, m2.triangles)


# ---------------------------------------------------------------------------
# edge flipping
# ---------------------------------------------------------------------------


def test_flip_edges_fixed_point_on_delaunay_mesh():
    rng = np.random.default_rng(5)
    mesh = delaunay(rng.uniform(0, 10, (30, 2)))
    flipped = flip_edges(mesh, passes=8)
    assert flipped is mesh  # no sweep changed anything


def test_flip_edges_repairs_constructed_violation():
    # Quad where the diagonal (0,1) fails the circumcircle test: vertex 3
    # sits deep inside the circumcircle of triangle (0, 1, 2).
    V = [(0.0, 0.0), (4.0, 0.0), (2.0, 2.6), (2.0, -0.4)]
    T = [(0, 1, 2), (1, 0, 3)]
    mesh = build_adjacency(V, T)
    assert brute_force_violations(mesh.vertices, mesh.triangles) > 0
    fixed = flip_edges(mesh, passes=8)
    assert brute_force_violations(fixed.vertices, fixed.triangles) == 0
    assert tuple(sorted((2, 3))) in edge_set(fixed)
    assert np.array_equal(fixed.vertices, mesh.vertices)


def test_flip_edges_output_always_passes_audit():
    # Move interior vertices (rejecting any move that would invert an
    # incident triangle, as the mesh smoother does) so edges go locally
    # non-Delaunay while the triangulation stays valid, then flip.
    rng = np.random.default_rng(23)
    for trial in range(5):
        base = delaunay(rng.uniform(0, 40, (25, 2)))
        V = base.vertices.copy()
        T = base.triangles
        for i in np.nonzero(~base.boundary)[0]:
            proposal = V[i] + rng.uniform(-1.5, 1.5, 2)
            old = V[i].copy()
            V[i] = proposal
            a = V[T[:, 0]]
            b = V[T[:, 1]]
            c = V[T[:, 2]]
            ar = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
                b[:, 1] - a[:, 1]
            )
            if ar.min() < 1e-6:
                V[i] = old
        mesh = build_adjacency(V, T)
        assert brute_force_violations(mesh.vertices, mesh.triangles) > 0 or trial > 0
        fixed = flip_edges(mesh, passes=50)
        assert brute_force_violations(fixed.vertices, fixed.triangles) == 0
