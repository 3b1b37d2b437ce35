"""Input validation helpers for array-facing entry points."""

import numpy as np

from .imgutils import resize_bilinear

__all__ = ["check_image", "check_images"]


def check_image(x, image_size=None):
    """Coerce one image to (H, H, 3) float32 in [0, 1].

    Accepts (H, W), (H, W, 1) or (H, W, 3); uint8 inputs are rescaled from
    [0, 255]. When ``image_size`` is given the image is bilinearly resized.
    """
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(
            f"expected an (H, W), (H, W, 1) or (H, W, 3) image, got shape "
            f"{np.asarray(x).shape}"
        )
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    arr = arr.astype(np.float32, copy=False)
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    if image_size is not None and arr.shape[:2] != (image_size, image_size):
        arr = np.clip(
            resize_bilinear(arr, image_size, image_size), 0.0, 1.0
        ).astype(np.float32)
    return arr


def check_images(X, image_size=None):
    """Coerce a batch (stacked array or sequence) to (n, H, H, 3) float32."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        items = list(X)
    elif isinstance(X, np.ndarray) and X.ndim == 3 and X.shape[2] in (1, 3):
        items = [X]
    else:
        items = list(X)
    if not items:
        raise ValueError("expected at least one image")
    return np.stack([check_image(item, image_size) for item in items])
