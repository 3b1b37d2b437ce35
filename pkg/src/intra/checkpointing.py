"""Assembly between trained models and the checkpoint container.

A checkpoint carries the effective run configuration as text (seed
included), every model parameter under ``param/``, and the training
reference diff map under ``reference/``.
"""

from . import engine as E
from .config import parse_config_text, render_config
from .data import Checkpoint
from .model import InpaintingTransformer
from .scoring import ReferenceDiff

__all__ = [
    "PARAM_PREFIX",
    "REFERENCE_KEY",
    "checkpoint_from_parts",
    "parts_from_checkpoint",
]

PARAM_PREFIX = "param/"
REFERENCE_KEY = "reference/mean_diff"
_EXTRA_KEYS = ("reference_images", "category")


def checkpoint_from_parts(run_config, model, reference, category=None):
    """Build a checkpoint from a run config, model, and optional reference."""
    tensors = {
        PARAM_PREFIX + name: values
        for name, values in model.parameter_values().items()
    }
    extras = {}
    if reference is not None:
        tensors[REFERENCE_KEY] = reference.mean_diff
        extras["reference_images"] = str(reference.image_count)
    if category is not None:
        extras["category"] = category
    return Checkpoint(
        config_text=render_config(run_config, extras), tensors=tensors
    )


def parts_from_checkpoint(checkpoint):
    """Rebuild (run config, model, reference-or-None) from a checkpoint."""
    run, extras = parse_config_text(checkpoint.config_text, extra_allowed=_EXTRA_KEYS)
    params = {}
    for key, values in checkpoint.tensors.items():
        if key.startswith(PARAM_PREFIX):
            name = key[len(PARAM_PREFIX) :]
            params[name] = E.parameter(values, name=name)
    model = InpaintingTransformer(run.to_model_config(), params)
    reference = None
    if REFERENCE_KEY in checkpoint.tensors:
        reference = ReferenceDiff(
            mean_diff=checkpoint.tensors[REFERENCE_KEY],
            image_count=int(extras.get("reference_images", "0")),
        )
    return run, model, reference
