"""Numpy image helpers: resizing, blurring, dihedral transforms, rendering.

Everything here is pure and deterministic. Resizing is bilinear with
half-pixel sample centers; blurs use reflection padding so outputs keep
the input's spatial size.
"""

import numpy as np

from .engine.ops import _correlate1d_valid

__all__ = [
    "resize_bilinear",
    "gaussian_kernel1d",
    "box_kernel1d",
    "filter_same",
    "box_blur",
    "gaussian_blur",
    "scaled_kernel_size",
    "dihedral",
    "dihedral_inverse",
    "rotate_bilinear",
    "to_uint8",
    "heatmap_rgb",
]


def resize_bilinear(image, out_h, out_w):
    """Bilinear resize of an (H, W) or (H, W, C) float array."""
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w, _ = img.shape
    if (h, w) == (out_h, out_w):
        out = img.copy()
        return out[:, :, 0] if squeeze else out
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    out = (
        img[np.ix_(y0, x0)] * (1.0 - wy) * (1.0 - wx)
        + img[np.ix_(y1, x0)] * wy * (1.0 - wx)
        + img[np.ix_(y0, x1)] * (1.0 - wy) * wx
        + img[np.ix_(y1, x1)] * wy * wx
    )
    out = out.astype(np.asarray(image).dtype, copy=False)
    return out[:, :, 0] if squeeze else out


def gaussian_kernel1d(size, sigma):
    """Normalized Gaussian taps of odd length ``size``."""
    if size % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {size}")
    r = (size - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def box_kernel1d(size):
    """Uniform averaging taps of odd length ``size``."""
    if size % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {size}")
    return np.full(size, 1.0 / size, dtype=np.float64)


def filter_same(arr, kernel, axis):
    """Same-size 1-D correlation along ``axis`` with reflection padding."""
    kernel = np.asarray(kernel, dtype=np.asarray(arr).dtype)
    k = kernel.shape[0]
    lo = (k - 1) // 2
    pads = [(0, 0)] * np.ndim(arr)
    pads[axis] = (lo, k - 1 - lo)
    padded = np.pad(arr, pads, mode="reflect")
    return _correlate1d_valid(padded, kernel, axis)


def _separable_blur(arr, kernel):
    out = filter_same(arr, kernel, axis=0)
    return filter_same(out, kernel, axis=1)


def box_blur(arr, size):
    return _separable_blur(arr, box_kernel1d(size))


def gaussian_blur(arr, size, sigma):
    return _separable_blur(arr, gaussian_kernel1d(size, sigma))


def scaled_kernel_size(base, image_side, reference_side=512):
    """Scale a reference-resolution kernel size to ``image_side``.

    Linear scaling rounded half-up, bumped to the next odd value, floor 3.
    """
    k = int(np.floor(base * image_side / reference_side + 0.5))
    k = max(3, k)
    if k % 2 == 0:
        k += 1
    return k


def dihedral(image, index):
    """Apply element ``index`` in [0, 8) of the square's symmetry group.

    Indices 0-3 are counterclockwise quarter-turns; 4-7 add a horizontal
    flip after the rotation. Index 0 is the identity.
    """
    if not 0 <= index < 8:
        raise ValueError(f"dihedral index must be in [0, 8), got {index}")
    out = np.rot90(image, k=index & 3, axes=(0, 1))
    if index & 4:
        out = np.flip(out, axis=1)
    return np.ascontiguousarray(out)


def dihedral_inverse(index):
    """Index of the inverse transform: flips are involutions."""
    if not 0 <= index < 8:
        raise ValueError(f"dihedral index must be in [0, 8), got {index}")
    if index & 4:
        return index
    return (4 - index) % 4


def _reflect_indices(idx, n):
    period = 2 * n - 2 if n > 1 else 1
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def rotate_bilinear(image, degrees):
    """Rotate about the image center, bilinear, reflected beyond borders."""
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w, _ = img.shape
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_y = cos * yy + sin * xx + cy
    src_x = -sin * yy + cos * xx + cx
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    fy = (src_y - y0)[:, :, None]
    fx = (src_x - x0)[:, :, None]
    ys0 = _reflect_indices(y0, h)
    ys1 = _reflect_indices(y0 + 1, h)
    xs0 = _reflect_indices(x0, w)
    xs1 = _reflect_indices(x0 + 1, w)
    out = (
        img[ys0, xs0] * (1 - fy) * (1 - fx)
        + img[ys1, xs0] * fy * (1 - fx)
        + img[ys0, xs1] * (1 - fy) * fx
        + img[ys1, xs1] * fy * fx
    )
    out = out.astype(np.asarray(image).dtype, copy=False)
    return out[:, :, 0] if squeeze else out


def to_uint8(image):
    """Clip to [0, 1] and quantize to 8-bit."""
    return np.clip(np.asarray(image) * 255.0 + 0.5, 0.0, 255.0).astype(np.uint8)


_HEAT_STOPS = np.array(
    [
        [0.05, 0.03, 0.35],
        [0.00, 0.40, 0.85],
        [0.10, 0.80, 0.45],
        [0.95, 0.90, 0.10],
        [0.90, 0.15, 0.05],
    ]
)


def heatmap_rgb(values, vmax=None):
    """Map a non-negative 2-D array to an RGB heat image in [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    top = float(v.max()) if vmax is None else float(vmax)
    scaled = np.clip(v / max(top, 1e-12), 0.0, 1.0)
    anchors = np.linspace(0.0, 1.0, len(_HEAT_STOPS))
    channels = [np.interp(scaled, anchors, _HEAT_STOPS[:, c]) for c in range(3)]
    return np.stack(channels, axis=-1)
