"""Deterministic synthetic images and displacement fields.

Used by the test suite and the benchmark harness: band-limited textures with
moderate contrast, smooth Gaussian-bump displacement fields with a bounded
peak, and slice stacks where consecutive slices differ by a small smooth
deformation.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .densefield import DenseField, warp_image
from .image import ImageGrid

__all__ = [
    "smooth_texture",
    "gaussian_bump_field",
    "random_bump_field",
    "warped_pair",
    "slice_stack",
    "brain_phantom",
]


def smooth_texture(width, height, seed=0, sigma=3.0, low=78.0, high=182.0):
    """Band-limited random texture normalized to [low, high].

    The default scale and contrast give gradient magnitudes for which the
    registration defaults (step 0.005, 100 iterations) recover multi-pixel
    smooth warps.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width))
    sm = ndimage.gaussian_filter(noise, sigma, mode="nearest")
    lo, hi = float(sm.min()), float(sm.max())
    if hi - lo < 1e-12:
        data = np.full((height, width), 0.5 * (low + high))
    else:
        data = low + (sm - lo) * ((high - low) / (hi - lo))
    return ImageGrid(width, height, data)


def gaussian_bump_field(width, height, center, sigma, amplitude):
    """Dense field a * exp(-|p - c|^2 / (2 sigma^2)) with vector amplitude."""
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    r2 = (gx - center[0]) ** 2 + (gy - center[1]) ** 2
    bump = np.exp(-r2 / (2.0 * sigma * sigma))
    return DenseField(amplitude[0] * bump, amplitude[1] * bump)


def random_bump_field(width, height, seed=0, n_bumps=3, max_amplitude=4.0,
                      sigma_range=(30.0, 55.0)):
    """Sum of random Gaussian bumps rescaled so the peak magnitude equals
    ``max_amplitude`` pixels."""
    rng = np.random.default_rng(seed)
    ux = np.zeros((height, width))
    uy = np.zeros((height, width))
    for _ in range(n_bumps):
        cx = rng.uniform(0.25 * width, 0.75 * width)
        cy = rng.uniform(0.25 * height, 0.75 * height)
        sigma = rng.uniform(*sigma_range)
        ax, ay = rng.uniform(-1.0, 1.0, size=2)
        bump = gaussian_bump_field(width, height, (cx, cy), sigma, (ax, ay))
        ux += bump.ux
        uy += bump.uy
    peak = float(np.max(np.hypot(ux, uy)))
    if peak > 1e-12:
        scale = max_amplitude / peak
        ux *= scale
        uy *= scale
    return DenseField(ux, uy)


def plateau_shift_field(width, height, shift=(2.0, 0.0), frac=0.42, power=8):
    """Near-uniform translation with a smooth super-Gaussian falloff toward
    the image border (zero at the corners)."""
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    r = np.hypot((gx - cx) / (frac * width), (gy - cy) / (frac * height))
    s = np.exp(-(r**power))
    return DenseField(shift[0] * s, shift[1] * s)


def warped_pair(reference, field):
    """(reference, template) where the template is the backward-warped
    reference: Te(p) = Re(p + u(p))."""
    return reference, warp_image(reference, field)


def slice_stack(width, height, count, seed=0, max_shift=2.0):
    """Synthetic slice sequence; consecutive slices differ by a small smooth
    deformation of bounded peak displacement."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    base = smooth_texture(width, height, seed=seed)
    slices = [base]
    for k in range(1, count):
        bump = random_bump_field(
            width, height, seed=int(rng.integers(2**31)), n_bumps=2,
            max_amplitude=max_shift,
        )
        slices.append(warp_image(slices[-1], bump))
    return slices


def brain_phantom(size=512, seed=0):
    """Brain-like test image: bright outer shell, textured interior, dark
    ventricle-like lobes. Plenty of edges for the adaptive mesher."""
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64))
    cx = cy = (size - 1) / 2.0
    nx = (gx - cx) / (0.42 * size)
    ny = (gy - cy) / (0.34 * size)
    r = np.hypot(nx, ny)

    data = np.zeros((size, size))
    data[r < 1.0] = 70.0
    shell = (r >= 0.88) & (r < 1.0)
    data[shell] = 235.0
    interior = r < 0.88
    tex = ndimage.gaussian_filter(rng.standard_normal((size, size)), 6.0)
    tex = 60.0 * (tex - tex.min()) / max(tex.max() - tex.min(), 1e-12)
    data[interior] = 90.0 + tex[interior]

    for sx, sy in ((-0.16, -0.05), (0.16, -0.05)):
        vx = (gx - cx - sx * size) / (0.05 * size)
        vy = (gy - cy - sy * size) / (0.16 * size)
        data[vx * vx + vy * vy < 1.0] = 25.0
    data = ndimage.gaussian_filter(data, 1.2)
    return ImageGrid(size, size, data)
