"""Grayscale image container with continuous sub-pixel sampling.

Intensities are stored as row-major float64 in the nominal range [0, 255],
whatever the source bit depth. Sub-pixel sampling uses a Catmull-Rom bicubic
interpolant, which passes exactly through the stored values at integer pixel
coordinates. Coordinates are ``x`` = column, ``y`` = row, with the origin at
the center of pixel (0, 0); sampling outside the image rectangle clamps the
query point to the rectangle first.
"""

from __future__ import annotations

import os
import re

import numpy as np

__all__ = ["ImageGrid", "FileFormatError", "load_image", "save_image", "msd"]


class FileFormatError(ValueError):
    """A file exists but cannot be decoded (bad magic, truncation, ...)."""


class ImageGrid:
    """Immutable 2-D scalar intensity field.

    Parameters
    ----------
    width, height : int
        Image dimensions in pixels (each >= 1).
    data : array_like
        ``width * height`` finite intensities, row-major, nominally [0, 255].
    """

    __slots__ = ("width", "height", "data", "_ext")

    def __init__(self, width, height, data):
        width = int(width)
        height = int(height)
        if width < 1 or height < 1:
            raise ValueError(f"image dimensions must be positive, got {width}x{height}")
        arr = np.asarray(data, dtype=np.float64)
        if arr.size != width * height:
            raise ValueError(
                f"data has {arr.size} values, expected {width * height} for {width}x{height}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        arr = arr.reshape(height, width).copy()
        arr.setflags(write=False)
        self.width = width
        self.height = height
        self.data = arr
        self._ext = None

    @property
    def shape(self):
        """(height, width) tuple, numpy order."""
        return (self.height, self.width)

    def _extended(self):
        # One extrapolated ring around the stored grid so that every bicubic
        # tap is a plain gather. Quadratic extrapolation keeps affine images
        # affine across boundary cells (falls back to linear/constant when the
        # axis is too short).
        if self._ext is None:
            ext = _extend(_extend(self.data, axis=1), axis=0)
            ext.setflags(write=False)
            self._ext = ext
        return self._ext

    def sample(self, x, y):
        """Catmull-Rom bicubic intensity at continuous coordinates.

        Accepts scalars or arrays (broadcast together). Out-of-domain points
        are clamped to the image rectangle. Exact at integer pixel centers.
        """
        scalar, x0, y0, tx, ty = self._locate(x, y)
        taps = self._gather(x0, y0)
        wx = _cr_weights(tx)
        wy = _cr_weights(ty)
        out = np.einsum("...j,...i,...ji->...", wy, wx, taps)
        return float(out[0]) if scalar else out

    def sample_gradient(self, x, y):
        """Analytic spatial derivative (d/dx, d/dy) of the interpolant.

        This differentiates the bicubic surface itself; it is not a finite
        difference of :meth:`sample`. Out-of-domain points are clamped, so the
        returned value is the one-sided derivative at the clamped location.
        """
        scalar, x0, y0, tx, ty = self._locate(x, y)
        taps = self._gather(x0, y0)
        wx = _cr_weights(tx)
        wy = _cr_weights(ty)
        dwx = _cr_dweights(tx)
        dwy = _cr_dweights(ty)
        gx = np.einsum("...j,...i,...ji->...", wy, dwx, taps)
        gy = np.einsum("...j,...i,...ji->...", dwy, wx, taps)
        if scalar:
            return float(gx[0]), float(gy[0])
        return gx, gy

    def _locate(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        scalar = x.ndim == 0 and y.ndim == 0
        x, y = np.atleast_1d(*np.broadcast_arrays(x, y))
        xc = np.clip(x, 0.0, self.width - 1.0)
        yc = np.clip(y, 0.0, self.height - 1.0)
        # Base cell index in [0, size-2] so the four taps stay inside the
        # extended array; the right edge lands on t == 1 of the last cell.
        x0 = np.minimum(np.floor(xc), max(self.width - 2, 0)).astype(np.int64)
        y0 = np.minimum(np.floor(yc), max(self.height - 2, 0)).astype(np.int64)
        return scalar, x0, y0, xc - x0, yc - y0

    def _gather(self, x0, y0):
        ext = self._extended()
        offs = np.arange(4, dtype=np.int64)
        rows = y0[..., None, None] + offs[None, :, None]
        cols = x0[..., None, None] + offs[None, None, :]
        return ext[rows, cols]

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"ImageGrid({self.width}x{self.height})"


def _extend(a, axis):
    """Pad one extrapolated sample on each side along ``axis``."""
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    if n >= 3:
        lo = 3.0 * a[0] - 3.0 * a[1] + a[2]
        hi = 3.0 * a[-1] - 3.0 * a[-2] + a[-3]
    elif n == 2:
        lo = 2.0 * a[0] - a[1]
        hi = 2.0 * a[-1] - a[-2]
    else:
        lo = a[0]
        hi = a[0]
    out = np.concatenate([lo[None], a, hi[None]], axis=0)
    return np.moveaxis(out, 0, axis)


def _cr_weights(t):
    """Catmull-Rom tap weights for fractional offset ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    return np.stack(
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        axis=-1,
    )


def _cr_dweights(t):
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    return np.stack(
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
        axis=-1,
    )


def msd(a, b):
    """Mean squared intensity difference between two equally sized images."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a.data - b.data
    return float(np.mean(d * d))


# ---------------------------------------------------------------------------
# File I/O: PGM (P2/P5, maxval <= 65535) and grayscale PNG. All intensities
# are rescaled to [0, 255] floats on load; writers emit 8-bit.
# ---------------------------------------------------------------------------

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def load_image(path):
    """Read a PGM (P2/P5) or PNG file into an :class:`ImageGrid`.

    Color PNGs are converted to luminance (Rec. 601 weights); 16-bit sources
    are rescaled so that full scale maps to 255.0.
    """
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] in (b"P2", b"P5"):
        return _load_pgm(path)
    if head == _PNG_MAGIC:
        return _load_png(path)
    raise FileFormatError(f"unsupported image format: {path!r}")


def save_image(img, path):
    """Write an image as 8-bit binary PGM (``.pgm``) or grayscale PNG (``.png``).

    Intensities are rounded and clamped to [0, 255].
    """
    data8 = np.clip(np.rint(img.data), 0, 255).astype(np.uint8)
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
            fh.write(data8.tobytes())
    elif ext == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(data8, mode="L").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported output extension: {ext!r} (use .pgm or .png)")


def _load_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    magic = blob[:2]
    tokens, body_off = _pgm_header_tokens(blob)
    if len(tokens) < 3:
        raise FileFormatError(f"truncated PGM header in {path!r}")
    width, height, maxval = (int(t) for t in tokens[:3])
    if width < 1 or height < 1:
        raise FileFormatError(f"zero-dimension PGM image in {path!r}")
    if not 0 < maxval <= 65535:
        raise FileFormatError(f"PGM maxval {maxval} out of range in {path!r}")
    n = width * height
    if magic == b"P2":
        values = np.array(blob[body_off:].split()[:n], dtype=np.float64)
        if values.size != n:
            raise FileFormatError(f"PGM pixel data truncated in {path!r}")
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        raw = blob[body_off : body_off + n * np.dtype(dtype).itemsize]
        values = np.frombuffer(raw, dtype=dtype)
        if values.size != n:
            raise FileFormatError(f"PGM pixel data truncated in {path!r}")
        values = values.astype(np.float64)
    return ImageGrid(width, height, values * (255.0 / maxval))


def _pgm_header_tokens(blob):
    """Return the three header tokens after the magic and the body offset."""
    tokens = []
    pos = 2
    while len(tokens) < 3 and pos < len(blob):
        ch = blob[pos : pos + 1]
        if ch == b"#":
            nl = blob.find(b"\n", pos)
            pos = len(blob) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            m = re.match(rb"[0-9]+", blob[pos:])
            if m is None:
                raise FileFormatError("malformed PGM header")
            tokens.append(m.group(0))
            pos += m.end()
    # Exactly one whitespace byte separates the header from binary data.
    return tokens, pos + 1


def _load_png(path):
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        im.load()
        if im.width < 1 or im.height < 1:
            raise FileFormatError(f"zero-dimension PNG image in {path!r}")
        mode = im.mode
        if mode == "L":
            arr = np.asarray(im, dtype=np.float64)
        elif mode == "LA":
            arr = np.asarray(im.convert("L"), dtype=np.float64)
        elif mode in ("I", "I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64) * (255.0 / 65535.0)
        elif mode in ("RGB", "RGBA", "P"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            arr = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        else:
            raise FileFormatError(f"unsupported PNG mode {mode!r} in {path!r}")
    return ImageGrid(arr.shape[1], arr.shape[0], arr)
