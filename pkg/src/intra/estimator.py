"""Scikit-learn style facade over the whole pipeline.

The detector is fit on normal images only; afterwards ``score_samples``
yields image-level anomaly scores (higher means more anomalous) and
``transform`` yields per-pixel anomaly maps, so the estimator composes
with standard tooling (``sklearn.base.clone``, ``roc_auc_score`` on the
returned scores, pipelines treating maps as features).
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .checkpointing import checkpoint_from_parts, parts_from_checkpoint
from .config import RunConfig
from .data import load_checkpoint, save_checkpoint
from .metrics import LossWeights
from .model import InpaintingTransformer
from .scoring import anomaly_map, build_reference, reconstruct_image
from .training import TrainConfig, train
from .validation import check_images

__all__ = ["InpaintingTransformerDetector"]


class InpaintingTransformerDetector(TransformerMixin, BaseEstimator):
    """Inpainting-based anomaly detector with a fit/transform surface.

    Parameters mirror the pipeline configuration; see :class:`RunConfig`
    for the paper-default values. Inputs to ``fit``/``transform`` may be a
    stacked ``(n, H, W, C)`` array or a sequence of images; they are
    resized to ``image_size`` internally.

    Attributes set by ``fit``: ``model_``, ``reference_``, ``history_``,
    ``n_features_in_`` (pixels per image at working resolution).
    """

    def __init__(
        self,
        image_size=256,
        patch_size=16,
        window_side=7,
        latent_dim=512,
        num_blocks=13,
        num_heads=8,
        use_mfsa=True,
        use_long_residuals=True,
        alpha=0.01,
        beta=0.01,
        learning_rate=0.0001,
        batch_size=256,
        windows_per_image=600,
        patience=50,
        max_epochs=1000,
        validation_fraction=0.1,
        augment=True,
        seed=0,
        workers=1,
        deterministic=False,
    ):
        self.image_size = image_size
        self.patch_size = patch_size
        self.window_side = window_side
        self.latent_dim = latent_dim
        self.num_blocks = num_blocks
        self.num_heads = num_heads
        self.use_mfsa = use_mfsa
        self.use_long_residuals = use_long_residuals
        self.alpha = alpha
        self.beta = beta
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.windows_per_image = windows_per_image
        self.patience = patience
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.augment = augment
        self.seed = seed
        self.workers = workers
        self.deterministic = deterministic

    # -- configuration plumbing -----------------------------------------

    def _run_config(self):
        return RunConfig(
            image_size=self.image_size,
            patch_size=self.patch_size,
            window_side=self.window_side,
            latent_dim=self.latent_dim,
            num_blocks=self.num_blocks,
            num_heads=self.num_heads,
            use_mfsa=self.use_mfsa,
            use_long_residuals=self.use_long_residuals,
            alpha=self.alpha,
            beta=self.beta,
            lr=self.learning_rate,
            batch_size=self.batch_size,
            windows_per_image=self.windows_per_image,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.seed,
            workers=self.workers,
            deterministic=self.deterministic,
        )

    def _train_config(self):
        return TrainConfig(
            windows_per_image=self.windows_per_image,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            patience=self.patience,
            max_epochs=self.max_epochs,
            validation_fraction=self.validation_fraction,
            augment=self.augment,
            loss_weights=LossWeights(alpha=self.alpha, beta=self.beta),
            seed=self.seed,
            workers=1 if self.deterministic else self.workers,
            deterministic=self.deterministic,
        )

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this detector is not fitted yet; call fit first")

    # -- estimator surface ------------------------------------------------

    def fit(self, X, y=None):
        """Train on normal images only and build the reference diff map."""
        images = check_images(X, self.image_size)
        run = self._run_config()
        model = InpaintingTransformer.initialize(
            run.to_model_config(), np.random.default_rng(self.seed)
        )
        result = train(model, list(images), self._train_config())
        self.model_ = result.model
        self.history_ = result.history
        self.reference_ = build_reference(
            self.model_, list(images), batch_size=self.batch_size
        )
        self.n_features_in_ = self.image_size * self.image_size
        return self

    def transform(self, X):
        """Per-pixel anomaly maps, shape (n, image_size, image_size)."""
        self._check_fitted()
        images = check_images(X, self.image_size)
        return np.stack(
            [
                anomaly_map(im, self.model_, self.reference_, self.batch_size).scores
                for im in images
            ]
        )

    def score_samples(self, X):
        """Image-level anomaly scores; larger values mean more anomalous."""
        self._check_fitted()
        images = check_images(X, self.image_size)
        return np.array(
            [
                anomaly_map(
                    im, self.model_, self.reference_, self.batch_size
                ).image_score
                for im in images
            ]
        )

    def reconstruct(self, X):
        """Full inpainted reconstructions, shape (n, H, H, 3)."""
        self._check_fitted()
        images = check_images(X, self.image_size)
        return np.stack(
            [reconstruct_image(self.model_, im, self.batch_size) for im in images]
        )

    # -- persistence ------------------------------------------------------

    def save(self, path):
        """Write a checkpoint holding weights, config, and the reference."""
        self._check_fitted()
        checkpoint = checkpoint_from_parts(
            self._run_config(), self.model_, self.reference_
        )
        save_checkpoint(path, checkpoint)
        return path

    @classmethod
    def load(cls, path):
        """Rebuild a fitted detector from a checkpoint file."""
        run, model, reference = parts_from_checkpoint(load_checkpoint(path))
        detector = cls(
            image_size=run.image_size,
            patch_size=run.patch_size,
            window_side=run.window_side,
            latent_dim=run.latent_dim,
            num_blocks=run.num_blocks,
            num_heads=run.num_heads,
            use_mfsa=run.use_mfsa,
            use_long_residuals=run.use_long_residuals,
            alpha=run.alpha,
            beta=run.beta,
            learning_rate=run.lr,
            batch_size=run.batch_size,
            windows_per_image=run.windows_per_image,
            patience=run.patience,
            max_epochs=run.max_epochs,
            seed=run.seed,
            workers=run.workers,
            deterministic=run.deterministic,
        )
        detector.model_ = model
        detector.reference_ = reference
        detector.history_ = []
        detector.n_features_in_ = run.image_size * run.image_size
        return detector
