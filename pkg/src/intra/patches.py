"""Image <-> patch-grid conversion and patch-window placement.

Grid coordinates are 1-based throughout, matching the row/column indexing
the rest of the pipeline reasons in; array storage is 0-based internally.
Images are square (the whole pipeline resizes inputs to H = W), so the
row-major linear position of a patch is a bijection onto [1, N*N].
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PatchGrid",
    "WindowSpec",
    "split_into_patches",
    "linear_position",
    "select_window",
    "sample_training_window",
    "window_patches",
    "window_positions",
]


@dataclass(frozen=True)
class WindowSpec:
    """An L x L patch window anchored at (row, col) with one target inside."""

    row: int
    col: int
    side: int
    target: tuple

    def __post_init__(self):
        t, u = self.target
        if not (self.row <= t < self.row + self.side):
            raise ValueError(f"target row {t} outside window rows "
                             f"[{self.row}, {self.row + self.side - 1}]")
        if not (self.col <= u < self.col + self.side):
            raise ValueError(f"target col {u} outside window cols "
                             f"[{self.col}, {self.col + self.side - 1}]")

    @property
    def target_slot(self):
        """Row-major index of the target inside the window, in [0, L^2)."""
        t, u = self.target
        return (t - self.row) * self.side + (u - self.col)


@dataclass
class PatchGrid:
    """An image decomposed into an N x N grid of flattened K x K x C patches."""

    n_rows: int
    n_cols: int
    patch_side: int
    channels: int
    patches: np.ndarray  # (n_rows, n_cols, patch_side**2 * channels)

    def patch(self, i, j):
        """Flattened patch at 1-based grid position (i, j)."""
        if not (1 <= i <= self.n_rows and 1 <= j <= self.n_cols):
            raise ValueError(
                f"patch index ({i}, {j}) outside grid "
                f"{self.n_rows} x {self.n_cols}"
            )
        return self.patches[i - 1, j - 1]

    def flat(self):
        """Patches as an (N*N, K^2*C) array ordered by linear position."""
        return self.patches.reshape(self.n_rows * self.n_cols, -1)

    def to_image(self):
        """Reassemble the source image; exact inverse of the split."""
        n, m, k, c = self.n_rows, self.n_cols, self.patch_side, self.channels
        blocks = self.patches.reshape(n, m, k, k, c)
        return blocks.transpose(0, 2, 1, 3, 4).reshape(n * k, m * k, c)


def split_into_patches(image, patch_side):
    """Cut an H x W x C image (values in [0, 1]) into a grid of K-side patches.

    Patch (i, j) holds pixel rows [(i-1)K, iK) and columns [(j-1)K, jK),
    flattened row-major with channels last, so reassembly is bit-exact.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {image.shape}")
    h, w, c = image.shape
    k = int(patch_side)
    if h != w:
        raise ValueError(
            f"image must be square (got {h} x {w}); resize it before splitting"
        )
    if h % k != 0:
        raise ValueError(
            f"patch side {k} does not divide image side {h}; "
            f"resize the image to a multiple of {k}"
        )
    lo, hi = float(image.min()), float(image.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(
            f"pixel values must lie in [0, 1], got range [{lo}, {hi}]"
        )
    n = h // k
    m = w // k
    blocks = image.reshape(n, k, m, k, c).transpose(0, 2, 1, 3, 4)
    return PatchGrid(n, m, k, c, np.ascontiguousarray(blocks.reshape(n, m, k * k * c)))


def linear_position(i, j, grid_side):
    """Row-major 1-based linear index (i-1)*N + j of a grid position."""
    n = int(grid_side)
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"grid position ({i}, {j}) outside [1, {n}]^2")
    return (i - 1) * n + j


def _clamp_lo(c, side):
    return max(1, c - side // 2)


def select_window(t, u, n_rows, n_cols, side):
    """The window that centers (t, u) as well as grid bounds allow.

    The anchor is pulled toward the target by half a window and clamped so
    the window stays inside the grid on both ends.
    """
    side = int(side)
    if side > n_rows or side > n_cols:
        raise ValueError(
            f"window side {side} exceeds grid {n_rows} x {n_cols}"
        )
    if not (1 <= t <= n_rows and 1 <= u <= n_cols):
        raise ValueError(f"target ({t}, {u}) outside grid {n_rows} x {n_cols}")
    gt = _clamp_lo(t, side)
    gu = _clamp_lo(u, side)
    r = gt - max(0, gt + side - n_rows - 1)
    s = gu - max(0, gu + side - n_cols - 1)
    return WindowSpec(row=r, col=s, side=side, target=(t, u))


def sample_training_window(grid, side, rng):
    """Draw a uniform window anchor, then a uniform target inside it.

    Returns the window's L^2 patches (target content included; the model
    masks it) together with the :class:`WindowSpec`.
    """
    side = int(side)
    if side > min(grid.n_rows, grid.n_cols):
        raise ValueError(
            f"window side {side} exceeds grid {grid.n_rows} x {grid.n_cols}"
        )
    r = int(rng.integers(1, grid.n_rows - side + 2))
    s = int(rng.integers(1, grid.n_cols - side + 2))
    t = int(rng.integers(r, r + side))
    u = int(rng.integers(s, s + side))
    spec = WindowSpec(row=r, col=s, side=side, target=(t, u))
    return window_patches(grid, spec), spec


def window_patches(grid, spec):
    """The (L^2, K^2*C) patch block covered by ``spec``, row-major."""
    r0, c0, L = spec.row - 1, spec.col - 1, spec.side
    block = grid.patches[r0 : r0 + L, c0 : c0 + L]
    return block.reshape(L * L, -1)


def window_positions(spec, grid_side):
    """0-based linear positions of the window's cells, row-major (L^2,)."""
    rows = np.arange(spec.row - 1, spec.row - 1 + spec.side)
    cols = np.arange(spec.col - 1, spec.col - 1 + spec.side)
    return (rows[:, None] * grid_side + cols[None, :]).reshape(-1)
