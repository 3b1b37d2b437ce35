"""Full-image reconstruction and anomaly-map generation.

Every patch of the grid is inpainted from its own near-centered window,
the reassembled reconstruction is compared against the original with a
smoothed multi-scale gradient-similarity diff, and the squared deviation
of that diff from its mean over normal training data is the anomaly map.
The pixel-wise maximum of the map is the image-level anomaly score.
"""

from dataclasses import dataclass

import numpy as np

from .engine import no_grad
from .imgutils import (
    box_blur,
    gaussian_blur,
    heatmap_rgb,
    resize_bilinear,
    scaled_kernel_size,
    to_uint8,
)
from .metrics import gms_map
from .patches import select_window, split_into_patches, window_patches, window_positions

__all__ = [
    "ReferenceDiff",
    "AnomalyMap",
    "reconstruct_image",
    "multiscale_diff",
    "build_reference",
    "anomaly_map",
    "render_triptych",
    "DIFF_SCALES",
    "BLUR_SIGMA",
]

DIFF_SCALES = ((0.5, 21), (0.25, 11))  # (scale, kernel size at 512 reference)
BLUR_SIGMA = 2.0


@dataclass
class ReferenceDiff:
    """Mean diff map over the normal training set, at model resolution."""

    mean_diff: np.ndarray  # (H, W), non-negative
    image_count: int


@dataclass
class AnomalyMap:
    """Per-pixel anomaly scores plus their maximum as the image score."""

    scores: np.ndarray  # (H, W), non-negative, model resolution
    image_score: float


def _window_batches(config):
    """Window content indices, positions and slots for every grid cell."""
    g = config.grid_side
    specs = [
        select_window(t, u, g, g, config.window_side)
        for t in range(1, g + 1)
        for u in range(1, g + 1)
    ]
    positions = np.stack([window_positions(s, g) for s in specs])
    slots = np.array([s.target_slot for s in specs])
    return specs, positions, slots


def reconstruct_image(model, image, batch_size=256):
    """Inpaint every patch of ``image`` and reassemble the result.

    The target patch is masked during its own reconstruction, so each
    output patch depends only on surrounding content. Each pixel is
    written exactly once.
    """
    cfg = model.config
    image = np.asarray(image)
    if image.shape[:2] != (cfg.image_size, cfg.image_size):
        raise ValueError(
            f"image shape {image.shape[:2]} does not match model resolution "
            f"{cfg.image_size}"
        )
    grid = split_into_patches(image, cfg.patch_size)
    specs, positions, slots = _window_batches(cfg)
    n = len(specs)

    out_patches = np.empty((n, cfg.patch_dim), dtype=np.float32)
    written = np.zeros(n, dtype=bool)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        windows = np.stack(
            [window_patches(grid, specs[i]) for i in range(start, stop)]
        )
        with no_grad():
            recon = model.inpaint_batch(
                windows, positions[start:stop], slots[start:stop]
            )
        for i in range(start, stop):
            t, u = specs[i].target
            cell = (t - 1) * grid.n_cols + (u - 1)
            if written[cell]:
                raise RuntimeError(f"patch ({t}, {u}) written twice")
            written[cell] = True
            out_patches[cell] = recon.data[i - start]
    if not written.all():
        raise RuntimeError("reconstruction did not cover every patch")

    rebuilt = type(grid)(
        grid.n_rows,
        grid.n_cols,
        grid.patch_side,
        grid.channels,
        out_patches.reshape(grid.n_rows, grid.n_cols, -1),
    )
    return rebuilt.to_image()


def multiscale_diff(original, reconstruction):
    """Smoothed gradient-dissimilarity map, averaged over two scales.

    Both images are resized to each scale, compared with 1 - GMS, box
    filtered then Gaussian blurred (kernel sizes scale linearly with the
    working resolution), resized back, and averaged pixel-wise.
    """
    x = np.asarray(original)
    y = np.asarray(reconstruction)
    if x.shape != y.shape:
        raise ValueError(f"shapes differ: {x.shape} vs {y.shape}")
    h, w = x.shape[:2]
    accumulated = np.zeros((h, w), dtype=np.float64)
    for scale, base_kernel in DIFF_SCALES:
        sh, sw = int(round(h * scale)), int(round(w * scale))
        xs = np.clip(resize_bilinear(x, sh, sw), 0.0, 1.0)
        ys = np.clip(resize_bilinear(y, sh, sw), 0.0, 1.0)
        dissim = 1.0 - gms_map(xs, ys)
        k = scaled_kernel_size(base_kernel, h)
        smoothed = gaussian_blur(box_blur(dissim, k), k, BLUR_SIGMA)
        accumulated += resize_bilinear(smoothed, h, w)
    return accumulated / len(DIFF_SCALES)


def build_reference(model, train_images, batch_size=256):
    """Pixel-wise mean diff map over the normal training images."""
    images = list(train_images)
    if not images:
        raise ValueError("reference requires at least one training image")
    total = None
    for image in images:
        diff = multiscale_diff(image, reconstruct_image(model, image, batch_size))
        total = diff if total is None else total + diff
    return ReferenceDiff(
        mean_diff=(total / len(images)).astype(np.float32),
        image_count=len(images),
    )


def anomaly_map(image, model, reference, batch_size=256):
    """Squared deviation of the image's diff map from the reference.

    The returned map lives at model resolution; resize it afterwards for
    segmentation evaluation against original-resolution masks.
    """
    if reference is None:
        raise ValueError("anomaly scoring requires a training reference diff map")
    diff = multiscale_diff(image, reconstruct_image(model, image, batch_size))
    if diff.shape != reference.mean_diff.shape:
        raise ValueError(
            f"reference shape {reference.mean_diff.shape} does not match "
            f"diff map shape {diff.shape}"
        )
    scores = np.square(diff - reference.mean_diff)
    return AnomalyMap(scores=scores, image_score=float(scores.max()))


def render_triptych(original, reconstruction, amap, path, vmax=None):
    """Write `original | reconstruction | heat map` as one 8-bit image."""
    from .data import save_image

    h, w = np.asarray(original).shape[:2]
    heat = heatmap_rgb(amap.scores, vmax=vmax)
    gap = np.ones((h, 2, 3))
    panel = np.concatenate(
        [np.asarray(original), gap, np.asarray(reconstruction), gap, heat], axis=1
    )
    save_image(path, panel)
    return to_uint8(panel)
