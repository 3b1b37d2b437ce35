"""Training loop, validation, early stopping, and size selection.

Each epoch samples a fixed number of patch windows per training image
(with dihedral augmentation drawn per window), minimizes the composite
reconstruction loss with Adam, and evaluates a fixed, seed-deterministic
validation window set. Training stops once the validation loss has not
improved for ``patience`` consecutive epochs, and the weights of the best
epoch are restored.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine as E
from .imgutils import dihedral, rotate_bilinear
from .metrics import LossWeights, inpaint_loss_tensor
from .model import InpaintingTransformer
from .patches import split_into_patches

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainResult",
    "train",
    "validation_loss",
    "augment",
    "select_image_size",
    "smoothed_best_validation",
    "choose_size",
    "SizeSelection",
]


@dataclass
class TrainConfig:
    """Knobs of the training loop.

    ``augment_mode`` is "dihedral" (rotations by quarter turns plus flips,
    drawn per window) or "rotate_any" (a fresh arbitrary-angle rotation of
    each image per epoch, interpolation included).
    """

    windows_per_image: int = 600
    batch_size: int = 256
    learning_rate: float = 0.0001
    patience: int = 50
    max_epochs: int = 1000
    validation_fraction: float = 0.10
    validation_cap: int = 20
    use_validation: bool = True
    augment: bool = True
    augment_mode: str = "dihedral"
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    workers: int = 1
    deterministic: bool = False


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    best_val: float
    patience_left: int


@dataclass
class TrainResult:
    model: InpaintingTransformer
    history: list
    best_epoch: int
    best_val_loss: float
    validation_indices: tuple
    steps: int


def augment(image, rng, mode="dihedral"):
    """One random augmentation draw: rotation composed with optional flip."""
    if mode == "dihedral":
        return dihedral(image, int(rng.integers(0, 8)))
    if mode == "rotate_any":
        rotated = rotate_bilinear(image, float(rng.uniform(0.0, 360.0)))
        if rng.integers(0, 2):
            rotated = np.ascontiguousarray(np.flip(rotated, axis=1))
        return np.clip(rotated, 0.0, 1.0)
    raise ValueError(f"unknown augment mode: {mode!r}")


def _grid_stack(images, patch_size, variants):
    """Patch grids of each image under each dihedral variant.

    Returns (n_images, n_variants, grid_cells, patch_dim) float32.
    """
    stacks = []
    for image in images:
        per_variant = [
            split_into_patches(dihedral(image, v), patch_size).flat()
            for v in variants
        ]
        stacks.append(np.stack(per_variant))
    return np.asarray(np.stack(stacks), dtype=np.float32)


def _draw_windows(rng, n_images, per_image, grid_side, window_side, n_variants):
    """Vectorized draws for one epoch: every image contributes exactly
    ``per_image`` windows, in shuffled order."""
    total = n_images * per_image
    img = np.repeat(np.arange(n_images), per_image)
    rng.shuffle(img)
    variant = (
        rng.integers(0, n_variants, total)
        if n_variants > 1
        else np.zeros(total, dtype=np.intp)
    )
    top = grid_side - window_side + 1
    r = rng.integers(0, top, total)
    s = rng.integers(0, top, total)
    dt = rng.integers(0, window_side, total)
    du = rng.integers(0, window_side, total)
    return img, variant, r, s, dt, du


def _window_arrays(grids, img, variant, r, s, dt, du, grid_side, window_side):
    """Gather window content/positions/slots/targets for a draw batch."""
    offs = (
        np.arange(window_side)[:, None] * grid_side + np.arange(window_side)
    ).reshape(-1)
    anchor = r * grid_side + s
    positions = anchor[:, None] + offs[None, :]
    slots = dt * window_side + du
    target_cells = (r + dt) * grid_side + (s + du)
    windows = grids[img[:, None], variant[:, None], positions]
    targets = grids[img, variant, target_cells]
    return windows, positions, slots, targets


def _batched_loss(model, windows, positions, slots, targets, weights, batch_size,
                  optimizer=None):
    """Mean loss over all windows; takes Adam steps when given an optimizer."""
    cfg = model.config
    total = windows.shape[0]
    k, c = cfg.patch_size, cfg.channels
    loss_sum = 0.0
    for start in range(0, total, batch_size):
        stop = min(start + batch_size, total)
        b = stop - start
        target = targets[start:stop].reshape(b, k, k, c)
        if optimizer is None:
            with E.no_grad():
                recon = model.inpaint_batch(
                    windows[start:stop], positions[start:stop], slots[start:stop]
                )
                loss = inpaint_loss_tensor(
                    target, E.reshape(recon, (b, k, k, c)), weights
                )
        else:
            recon = model.inpaint_batch(
                windows[start:stop], positions[start:stop], slots[start:stop]
            )
            loss = inpaint_loss_tensor(
                target, E.reshape(recon, (b, k, k, c)), weights
            )
            grads = E.backward(loss, list(model.params.values()))
            optimizer.step(
                {name: grads[p] for name, p in model.params.items()}
            )
        loss_sum += float(loss.item()) * b
    return loss_sum / total


def _validation_arrays(images, config_model, count_per_image, seed):
    """Fixed validation window set: deterministic in ``seed``, unaugmented."""
    rng = np.random.default_rng(seed)
    grids = _grid_stack(images, config_model.patch_size, (0,))
    g = config_model.grid_side
    L = config_model.window_side
    img, variant, r, s, dt, du = _draw_windows(
        rng, len(images), count_per_image, g, L, n_variants=1
    )
    return _window_arrays(grids, img, variant, r, s, dt, du, g, L)


def validation_loss(model, images, seed, *, windows_per_image=600,
                    weights=None, batch_size=256):
    """Mean reconstruction loss over a fixed, seed-deterministic window set."""
    images = list(images)
    if not images:
        raise ValueError("validation requires at least one image")
    weights = weights or LossWeights()
    windows, positions, slots, targets = _validation_arrays(
        images, model.config, windows_per_image, seed
    )
    return _batched_loss(
        model, windows, positions, slots, targets, weights, batch_size
    )


def _progress_line(record):
    return (
        f"{record.epoch},{record.train_loss:.6f},{record.val_loss:.6f},"
        f"{record.best_val:.6f},{record.patience_left}"
    )


def train(model, dataset, config, progress=None):
    """Fit the model on a dataset's normal images (or a plain image list).

    A tenth of the images (at most ``validation_cap``) are held out for
    validation; they never contribute gradient updates. Per epoch, every
    training image contributes ``windows_per_image`` sampled windows.
    Returns the model restored to its best-validation-epoch weights.
    """
    images = list(getattr(dataset, "train_images", dataset))
    if not images:
        raise ValueError("training requires at least one image")
    if config.use_validation and len(images) < 2:
        raise ValueError(
            "training with validation requires at least two images; "
            "set use_validation=False to train on everything"
        )
    cfg = model.config
    rng = np.random.default_rng(config.seed)

    if config.use_validation:
        n_val = min(
            math.ceil(config.validation_fraction * len(images)),
            config.validation_cap,
        )
        n_val = max(n_val, 1)
        val_idx = np.sort(rng.choice(len(images), size=n_val, replace=False))
    else:
        val_idx = np.array([], dtype=np.intp)
    val_set = set(val_idx.tolist())
    train_images = [im for i, im in enumerate(images) if i not in val_set]
    val_images = [images[i] for i in val_idx]

    dihedral_variants = tuple(range(8)) if (
        config.augment and config.augment_mode == "dihedral"
    ) else (0,)
    rotate_each_epoch = config.augment and config.augment_mode == "rotate_any"
    grids = _grid_stack(train_images, cfg.patch_size, dihedral_variants)

    val_arrays = None
    if val_images:
        val_arrays = _validation_arrays(
            val_images, cfg, config.windows_per_image, config.seed + 1
        )

    optimizer = E.Adam(model.params, lr=config.learning_rate)
    g, L = cfg.grid_side, cfg.window_side
    history = []
    best_val = math.inf
    best_epoch = 0
    best_weights = model.parameter_values()
    wait = 0
    steps = 0

    for epoch in range(1, config.max_epochs + 1):
        if rotate_each_epoch:
            grids = _grid_stack(
                [augment(im, rng, "rotate_any") for im in train_images],
                cfg.patch_size,
                (0,),
            )
        img, variant, r, s, dt, du = _draw_windows(
            rng, len(train_images), config.windows_per_image, g, L,
            len(dihedral_variants),
        )
        windows, positions, slots, targets = _window_arrays(
            grids, img, variant, r, s, dt, du, g, L
        )
        try:
            train_loss = _batched_loss(
                model, windows, positions, slots, targets,
                config.loss_weights, config.batch_size, optimizer,
            )
        except E.NumericError as err:
            raise E.NumericError(
                f"non-finite loss in epoch {epoch}: {err}"
            ) from err
        steps += math.ceil(windows.shape[0] / config.batch_size)

        if val_arrays is not None:
            val_loss = _batched_loss(
                model, *val_arrays, config.loss_weights, config.batch_size
            )
        else:
            val_loss = train_loss

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_weights = model.parameter_values()
            wait = 0
        else:
            wait += 1

        record = EpochRecord(
            epoch=epoch,
            train_loss=train_loss,
            val_loss=val_loss,
            best_val=best_val,
            patience_left=max(config.patience - wait, 0),
        )
        history.append(record)
        if progress is not None:
            progress(_progress_line(record))
        if config.use_validation and wait >= config.patience:
            break

    model.load_values(best_weights)
    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        validation_indices=tuple(int(i) for i in val_idx),
        steps=steps,
    )


# -- working-resolution selection ------------------------------------------


@dataclass
class SizeSelection:
    chosen: int
    sizes: tuple
    smoothed_losses: tuple
    histories: dict


def smoothed_best_validation(val_losses, radius=5):
    """Best epoch's validation loss averaged over the surrounding epochs."""
    losses = list(val_losses)
    if not losses:
        raise ValueError("empty validation history")
    best = int(np.argmin(losses))
    lo = max(best - radius, 0)
    hi = min(best + radius + 1, len(losses))
    return float(np.mean(losses[lo:hi]))


def choose_size(sizes, smoothed_losses, threshold=1e-4):
    """Smallest size whose successor improves by less than ``threshold``."""
    for i in range(len(sizes) - 1):
        if smoothed_losses[i] - smoothed_losses[i + 1] < threshold:
            return sizes[i]
    return sizes[-1]


def select_image_size(load_dataset, model_config, train_config,
                      sizes=(256, 320, 512), epochs=200, progress=None):
    """Train one fresh model per candidate size and pick the smallest size
    beyond which validation stops improving meaningfully.

    ``load_dataset(size)`` must return the dataset resized to ``size``.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("size selection needs at least two candidate sizes")
    if list(sizes) != sorted(sizes):
        raise ValueError("candidate sizes must be ascending")
    smoothed = []
    histories = {}
    for size in sizes:
        cfg = replace(model_config, image_size=size)
        tc = replace(train_config, max_epochs=epochs, patience=epochs)
        rng = np.random.default_rng(tc.seed)
        model = InpaintingTransformer.initialize(cfg, rng)
        result = train(model, load_dataset(size), tc, progress=progress)
        losses = [rec.val_loss for rec in result.history]
        histories[size] = result.history
        smoothed.append(smoothed_best_validation(losses))
    return SizeSelection(
        chosen=choose_size(sizes, smoothed),
        sizes=sizes,
        smoothed_losses=tuple(smoothed),
        histories=histories,
    )
