"""Category-level detection and segmentation metrics.

Detection: ROC AUC of image-level anomaly scores against image labels.
Segmentation: ROC AUC over all pixels of all test images pooled, with
anomaly maps resized back to each image's original resolution and normal
images contributing all-zero masks. A per-image pixel AUC is additionally
reported for anomalous images as a diagnostic.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .imgutils import resize_bilinear
from .metrics import roc_auc
from .scoring import anomaly_map

__all__ = ["ImageResult", "EvaluationReport", "evaluate_category"]


@dataclass
class ImageResult:
    name: str
    defect_type: str
    label: int
    score: float
    pixel_auc: float | None


@dataclass
class EvaluationReport:
    category: str
    image_auc: float | None
    pixel_auc: float | None
    image_results: list
    seconds: float
    config: dict = field(default_factory=dict)

    @property
    def mean_image_pixel_auc(self):
        values = [r.pixel_auc for r in self.image_results if r.pixel_auc is not None]
        return float(np.mean(values)) if values else None

    def to_text(self):
        """Key-value serialization, one metric per line; round-trips exactly."""
        def fmt(value):
            return "undefined" if value is None else repr(value)

        lines = [
            f"category = {self.category}",
            f"image_auc = {fmt(self.image_auc)}",
            f"pixel_auc = {fmt(self.pixel_auc)}",
            f"mean_image_pixel_auc = {fmt(self.mean_image_pixel_auc)}",
            f"images = {len(self.image_results)}",
            f"seconds = {self.seconds!r}",
        ]
        for key in sorted(self.config):
            lines.append(f"config.{key} = {self.config[key]}")
        for r in self.image_results:
            lines.append(
                f"image.{r.name} = {r.defect_type},{r.label},{r.score!r},{fmt(r.pixel_auc)}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        def parse(value):
            return None if value == "undefined" else float(value)

        fields_ = {}
        config = {}
        results = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            key, _, value = line.partition(" = ")
            if key.startswith("config."):
                config[key[len("config.") :]] = value
            elif key.startswith("image."):
                defect, label, score, pauc = value.split(",")
                results.append(
                    ImageResult(
                        name=key[len("image.") :],
                        defect_type=defect,
                        label=int(label),
                        score=float(score),
                        pixel_auc=parse(pauc),
                    )
                )
            else:
                fields_[key] = value
        return cls(
            category=fields_["category"],
            image_auc=parse(fields_["image_auc"]),
            pixel_auc=parse(fields_["pixel_auc"]),
            image_results=results,
            seconds=float(fields_["seconds"]),
            config=config,
        )

    def scores_csv(self):
        lines = ["name,defect_type,label,score,pixel_auc"]
        for r in self.image_results:
            pauc = "" if r.pixel_auc is None else repr(r.pixel_auc)
            lines.append(f"{r.name},{r.defect_type},{r.label},{r.score!r},{pauc}")
        return "\n".join(lines) + "\n"


def _score_sample(model, reference, sample, batch_size):
    amap = anomaly_map(sample.image, model, reference, batch_size)
    h, w = sample.original_size
    resized = resize_bilinear(amap.scores, h, w)
    if sample.mask is not None:
        mask = sample.mask
    else:
        mask = np.zeros((h, w), dtype=bool)
    pixel_auc = None
    if sample.mask is not None and mask.any() and not mask.all():
        pixel_auc = roc_auc(resized.reshape(-1), mask.reshape(-1).astype(int))
    return amap.image_score, resized, mask, pixel_auc


def evaluate_category(model, reference, dataset, workers=1, batch_size=256,
                      config=None):
    """Score every test image and compute detection/segmentation AUCs.

    Scoring parallelizes across images; results are merged in dataset
    order so the outcome is independent of worker scheduling.
    """
    samples = dataset.test_samples
    if not samples:
        raise ValueError("evaluation requires a non-empty test set")
    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(
                pool.map(
                    lambda s: _score_sample(model, reference, s, batch_size),
                    samples,
                )
            )
    else:
        scored = [_score_sample(model, reference, s, batch_size) for s in samples]

    results = [
        ImageResult(
            name=s.name,
            defect_type=s.defect_type,
            label=s.label,
            score=score,
            pixel_auc=pauc,
        )
        for s, (score, _, _, pauc) in zip(samples, scored)
    ]

    labels = np.array([s.label for s in samples])
    image_auc = None
    if labels.min() != labels.max():
        image_auc = roc_auc(np.array([r.score for r in results]), labels)

    pooled_scores = np.concatenate([m.reshape(-1) for _, m, _, _ in scored])
    pooled_labels = np.concatenate(
        [mask.reshape(-1).astype(int) for _, _, mask, _ in scored]
    )
    pixel_auc = None
    if pooled_labels.min() != pooled_labels.max():
        pixel_auc = roc_auc(pooled_scores, pooled_labels)

    return EvaluationReport(
        category=dataset.category,
        image_auc=image_auc,
        pixel_auc=pixel_auc,
        image_results=results,
        seconds=time.perf_counter() - start,
        config=dict(config or {}),
    )
