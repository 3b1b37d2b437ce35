"""Patch-inpainting transformer for visual anomaly detection.

Trains a self-attention inpainting model on defect-free images only and
scores test images by how poorly masked patches are reconstructed from
their surroundings, yielding pixel-wise anomaly maps and image-level
anomaly scores.
"""

__version__ = "0.1.0"

__all__ = ["InpaintingTransformerDetector", "__version__"]


def __getattr__(name):
    # Deferred so that importing the numeric core never pulls in sklearn.
    if name == "InpaintingTransformerDetector":
        from .estimator import InpaintingTransformerDetector

        return InpaintingTransformerDetector
    raise AttributeError(f"module 'intra' has no attribute {name!r}")
