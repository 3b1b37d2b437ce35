"""Dataset ingestion, synthetic texture corpus, and checkpoint files.

Datasets follow the industrial-inspection directory convention:

    <category>/train/good/*.png
    <category>/test/<defect-type>/*.png
    <category>/ground_truth/<defect-type>/<stem>_mask.png

Training images are defect-free; every anomalous test image carries a
pixel-level mask at its original resolution. Images are decoded to
unit-range channel-last float arrays and resized to the working
resolution; grayscale inputs are broadcast to three channels so a single
model code path serves every category.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .imgutils import resize_bilinear, to_uint8

__all__ = [
    "TestSample",
    "Dataset",
    "load_image",
    "save_image",
    "load_category",
    "write_dataset",
    "generate_synthetic",
    "render_texture",
    "apply_defect",
    "Checkpoint",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"INTC"
CHECKPOINT_VERSION = 1
_DTYPE_FLOAT32 = 0


@dataclass
class TestSample:
    """One test image with its label and (for anomalies) ground-truth mask."""

    name: str
    image: np.ndarray  # (H, H, 3) at working resolution, values in [0, 1]
    label: int  # 0 normal, 1 anomalous
    defect_type: str
    mask: np.ndarray | None  # boolean, original resolution; None for normals
    original_size: tuple


@dataclass
class Dataset:
    """Normal-only training images plus a labeled test set."""

    category: str
    working_size: int
    train_images: list = field(default_factory=list)
    test_samples: list = field(default_factory=list)


def _decode(img):
    if img.mode in ("I", "I;16", "I;16B"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode in ("L", "RGB"):
        arr = np.asarray(img, dtype=np.float64) / 255.0
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return np.clip(arr, 0.0, 1.0)


def load_image(path, working_size=None):
    """Decode a PNG to (H, W, 3) floats in [0, 1]; optionally resize square.

    Returns the array and the original (height, width).
    """
    with Image.open(path) as img:
        arr = _decode(img)
    original = arr.shape[:2]
    if working_size is not None:
        arr = resize_bilinear(arr, working_size, working_size)
        arr = np.clip(arr, 0.0, 1.0)
    return arr.astype(np.float32), original


def save_image(path, array):
    """Quantize a unit-range array to 8 bits and write it as PNG."""
    arr = to_uint8(array)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


def _load_mask(path):
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return arr > 0.5


def _sorted_pngs(directory):
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def load_category(root, category, working_size):
    """Load one category from the directory convention above."""
    base = Path(root) / category
    train_dir = base / "train" / "good"
    test_dir = base / "test"
    gt_dir = base / "ground_truth"
    for required in (train_dir, test_dir):
        if not required.is_dir():
            raise FileNotFoundError(f"expected dataset directory: {required}")

    dataset = Dataset(category=category, working_size=int(working_size))
    for path in _sorted_pngs(train_dir):
        image, _ = load_image(path, working_size)
        dataset.train_images.append(image)

    for defect_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
        defect = defect_dir.name
        for path in _sorted_pngs(defect_dir):
            image, original = load_image(path, working_size)
            if defect == "good":
                mask = None
                label = 0
            else:
                label = 1
                mask_path = gt_dir / defect / f"{path.stem}_mask.png"
                if not mask_path.is_file():
                    raise FileNotFoundError(
                        f"anomalous test image {path} has no mask at {mask_path}"
                    )
                mask = _load_mask(mask_path)
                if mask.shape != original:
                    raise ValueError(
                        f"mask {mask_path} has shape {mask.shape}, image is {original}"
                    )
            dataset.test_samples.append(
                TestSample(
                    name=f"{defect}/{path.name}",
                    image=image,
                    label=label,
                    defect_type=defect,
                    mask=mask,
                    original_size=original,
                )
            )

    if gt_dir.is_dir():
        test_stems = {
            (d.name, p.stem)
            for d in test_dir.iterdir()
            if d.is_dir()
            for p in _sorted_pngs(d)
        }
        for defect_dir in sorted(p for p in gt_dir.iterdir() if p.is_dir()):
            for mask_path in _sorted_pngs(defect_dir):
                stem = mask_path.stem
                if stem.endswith("_mask"):
                    stem = stem[: -len("_mask")]
                if (defect_dir.name, stem) not in test_stems:
                    raise FileNotFoundError(
                        f"mask {mask_path} has no matching test image"
                    )
    return dataset


def write_dataset(dataset, out_dir):
    """Materialize a dataset in the directory convention above."""
    base = Path(out_dir) / dataset.category
    train_dir = base / "train" / "good"
    train_dir.mkdir(parents=True, exist_ok=True)
    (base / "test" / "good").mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(dataset.train_images):
        save_image(train_dir / f"{i:03d}.png", image)
    counters = {}
    for sample in dataset.test_samples:
        idx = counters.get(sample.defect_type, 0)
        counters[sample.defect_type] = idx + 1
        img_dir = base / "test" / sample.defect_type
        img_dir.mkdir(parents=True, exist_ok=True)
        save_image(img_dir / f"{idx:03d}.png", sample.image)
        if sample.mask is not None:
            mask_dir = base / "ground_truth" / sample.defect_type
            mask_dir.mkdir(parents=True, exist_ok=True)
            save_image(mask_dir / f"{idx:03d}_mask.png", sample.mask.astype(np.float64))
    return base


# -- synthetic corpus ----------------------------------------------------


@dataclass(frozen=True)
class TextureParams:
    """Dataset-wide sinusoid family; per-image phases vary."""

    orientations: tuple
    frequencies: tuple  # cycles per image side
    amplitudes: tuple
    noise_amp: float
    base: float = 0.5


def _draw_texture_params(rng, size):
    n_waves = int(rng.integers(2, 4))
    orientations = tuple(rng.uniform(0.0, np.pi, n_waves))
    frequencies = tuple(rng.uniform(size / 24.0, size / 9.0, n_waves))
    amplitudes = tuple(rng.uniform(0.09, 0.14, n_waves))
    noise_amp = float(rng.uniform(0.01, 0.03))
    return TextureParams(orientations, frequencies, amplitudes, noise_amp)


def _value_noise(rng, size, amp):
    coarse = size // 8 + 2
    grid = rng.uniform(-1.0, 1.0, (coarse, coarse))
    return amp * resize_bilinear(grid, size, size)


def render_texture(params, size, phases, noise):
    """Deterministic oriented-sinusoid texture on a [0, 1] pixel lattice."""
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    canvas = np.full((size, size), params.base, dtype=np.float64)
    for theta, freq, amp, phase in zip(
        params.orientations, params.frequencies, params.amplitudes, phases
    ):
        coord = (xs * math.cos(theta) + ys * math.sin(theta)) / size
        canvas += amp * np.sin(2.0 * np.pi * freq * coord + phase)
    canvas += noise
    return np.clip(canvas, 0.0, 1.0)


def _region_mask(rng, size, area_fraction):
    area = area_fraction * size * size
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    if rng.random() < 0.5:
        aspect = rng.uniform(0.5, 2.0)
        a = math.sqrt(area * aspect / math.pi)
        b = area / (math.pi * a)
        cy = rng.uniform(a + 1, size - a - 1)
        cx = rng.uniform(b + 1, size - b - 1)
        mask = ((ys - cy) / a) ** 2 + ((xs - cx) / b) ** 2 <= 1.0
    else:
        aspect = rng.uniform(0.5, 2.0)
        h = math.sqrt(area * aspect)
        w = area / h
        cy = rng.uniform(h / 2 + 1, size - h / 2 - 1)
        cx = rng.uniform(w / 2 + 1, size - w / 2 - 1)
        mask = (np.abs(ys - cy) <= h / 2) & (np.abs(xs - cx) <= w / 2)
    return mask


def apply_defect(params, size, phases, noise, rng):
    """Damage a rendered texture inside a small region; returns (image, mask).

    Two defect families: a phase distortion (the pattern inside the region
    is re-rendered with shifted phases, misaligning it with its
    surroundings) and an intensity shift toward the opposite half of the
    dynamic range. The mask is exact by construction.
    """
    clean = render_texture(params, size, phases, noise)
    mask = _region_mask(rng, size, rng.uniform(0.015, 0.05))
    damaged = clean.copy()
    if rng.random() < 0.5:
        shift = rng.uniform(0.3, 0.7) * np.pi * (1 if rng.random() < 0.5 else -1)
        distorted = render_texture(
            params, size, [p + shift for p in phases], noise
        )
        damaged[mask] = distorted[mask]
    else:
        region_mean = clean[mask].mean()
        direction = -1.0 if region_mean > 0.5 else 1.0
        delta = direction * rng.uniform(0.25, 0.35)
        damaged[mask] = np.clip(clean[mask] + delta, 0.0, 1.0)
    return damaged, mask


def _to_rgb(gray):
    return np.repeat(gray[:, :, None], 3, axis=2).astype(np.float32)


def generate_synthetic(
    seed, count_train=20, count_test_normal=10, count_test_defect=10, size=64
):
    """Seed-deterministic texture dataset with exact defect masks."""
    rng = np.random.default_rng(seed)
    params = _draw_texture_params(rng, size)
    n_waves = len(params.orientations)

    def normal_image():
        phases = rng.uniform(0.0, 2.0 * np.pi, n_waves)
        noise = _value_noise(rng, size, params.noise_amp)
        return render_texture(params, size, phases, noise)

    dataset = Dataset(category="synthetic", working_size=size)
    for _ in range(count_train):
        dataset.train_images.append(_to_rgb(normal_image()))
    for i in range(count_test_normal):
        dataset.test_samples.append(
            TestSample(
                name=f"good/{i:03d}.png",
                image=_to_rgb(normal_image()),
                label=0,
                defect_type="good",
                mask=None,
                original_size=(size, size),
            )
        )
    for i in range(count_test_defect):
        phases = rng.uniform(0.0, 2.0 * np.pi, n_waves)
        noise = _value_noise(rng, size, params.noise_amp)
        damaged, mask = apply_defect(params, size, phases, noise, rng)
        dataset.test_samples.append(
            TestSample(
                name=f"defect/{i:03d}.png",
                image=_to_rgb(damaged),
                label=1,
                defect_type="defect",
                mask=mask,
                original_size=(size, size),
            )
        )
    return dataset


# -- checkpoint wire format ----------------------------------------------


class CheckpointError(ValueError):
    """Malformed checkpoint file; carries the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class Checkpoint:
    """Config text plus named float32 tensors (parameters, reference map)."""

    config_text: str
    tensors: dict
    version: int = CHECKPOINT_VERSION


def save_checkpoint(path, checkpoint):
    """Write the binary container; tensors are stored in name order."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", checkpoint.version)]
    config = checkpoint.config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(config)))
    chunks.append(config)
    names = sorted(checkpoint.tensors)
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        tensor = np.ascontiguousarray(checkpoint.tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(struct.pack("<I", _DTYPE_FLOAT32))
        chunks.append(tensor.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.blob):
            raise CheckpointError(f"truncated while reading {what}", self.offset)
        piece = self.blob[self.offset : self.offset + n]
        self.offset += n
        return piece

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path):
    """Read and validate a checkpoint; round-trips tensors bit-exactly."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", 0)
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {version}", 4)
    config_len = r.u32("config length")
    config_text = r.take(config_len, "config text").decode("utf-8")
    count = r.u32("tensor count")
    tensors = {}
    for i in range(count):
        name_len = r.u32(f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        rank = r.u32(f"tensor '{name}' rank")
        if rank > 8:
            raise CheckpointError(f"implausible rank {rank} for '{name}'", r.offset - 4)
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, f"tensor '{name}' shape"))
        dtype_tag = r.u32(f"tensor '{name}' dtype")
        if dtype_tag != _DTYPE_FLOAT32:
            raise CheckpointError(
                f"unknown dtype tag {dtype_tag} for '{name}'", r.offset - 4
            )
        n_values = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = r.take(4 * n_values, f"tensor '{name}' data")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if r.offset != len(blob):
        raise CheckpointError("trailing bytes after last tensor", r.offset)
    return Checkpoint(config_text=config_text, tensors=tensors, version=version)
