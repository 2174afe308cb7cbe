import numpy as np
import pytest

from meshreg import ImageGrid, build_adjacency
from meshreg.delaunay import delaunay


def ramp_image(width, height, gx=2.0, gy=1.0, offset=0.0):
    xs, ys = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    return ImageGrid(width, height, offset + gx * xs + gy * ys)


def random_smooth_image(width, height, seed, amplitude=60.0):
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    data = ndimage.gaussian_filter(rng.standard_normal((height, width)), 2.0, mode="nearest")
    lo, hi = data.min(), data.max()
    return ImageGrid(width, height, 120.0 + amplitude * (data - lo) / max(hi - lo, 1e-12) - amplitude / 2)


def hexagon_fan(radius=1.0, center=(0.0, 0.0)):
    """Center vertex 0 surrounded by a six-vertex ring."""
    angles = np.linspace(0.0, 2.0 * np.pi, 7)[:-1]
    ring = np.column_stack(
        [center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)]
    )
    vertices = np.vstack([[center], ring])
    triangles = [(0, 1 + i, 1 + (i + 1) % 6) for i in range(6)]
    return build_adjacency(vertices, triangles)


def random_delaunay_mesh(seed, n_points=20, size=100.0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, size, (n_points, 2))
    return delaunay(pts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def square_mesh():
    """Unit square split along the (0,0)-(1,1) diagonal."""
    return build_adjacency(
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        [(0, 1, 2), (0, 2, 3)],
    )


@pytest.fixture
def hex_mesh():
    return hexagon_fan()
