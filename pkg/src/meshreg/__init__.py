"""Mesh-based deformable image registration.

The template image is triangulated adaptively to its content, a
sum-of-squared-differences energy over the mesh-node displacements is
minimized by gradient descent with per-iteration diffusion smoothing, and the
node displacements are interpolated back to a dense field to warp the
template onto the reference.
"""

__version__ = "0.1.0"

from .baseline import PixelField, register_pixelwise
from .delaunay import delaunay, delaunay_violations, flip_edges
from .densefield import (
    DenseField,
    MeshCoverageError,
    PointLocator,
    densify,
    difference_image,
    load_field,
    locate,
    save_field,
    warp_image,
)
from .image import FileFormatError, ImageGrid, load_image, msd, save_image
from .mesh import (
    TriMesh,
    TriangleGeometry,
    build_adjacency,
    build_laplacian,
    smooth_displacement,
    triangle_gradient,
    umbrella,
    vertex_gradient,
    vertex_gradient_all,
)
from .meshgen import (
    MeshGenConfig,
    NodeBudget,
    canny_sample,
    generate_mesh,
    halftone_sample,
    load_mesh,
    load_mesh_json,
    quality_stats,
    save_mesh,
    save_mesh_json,
    smooth_mesh,
    uniform_sample,
)
from .solver import (
    DivergenceError,
    RegistrationReport,
    SolverConfig,
    energy,
    energy_gradient,
    register,
    step,
    warp_sample,
)

__all__ = [
    "__version__",
    "ImageGrid",
    "FileFormatError",
    "load_image",
    "save_image",
    "msd",
    "TriMesh",
    "TriangleGeometry",
    "build_adjacency",
    "triangle_gradient",
    "vertex_gradient",
    "vertex_gradient_all",
    "umbrella",
    "build_laplacian",
    "smooth_displacement",
    "delaunay",
    "flip_edges",
    "delaunay_violations",
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
    "SolverConfig",
    "RegistrationReport",
    "DivergenceError",
    "warp_sample",
    "energy",
    "energy_gradient",
    "step",
    "register",
    "DenseField",
    "PointLocator",
    "MeshCoverageError",
    "locate",
    "densify",
    "warp_image",
    "difference_image",
    "save_field",
    "load_field",
    "PixelField",
    "register_pixelwise",
]
