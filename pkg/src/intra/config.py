"""Flat run configuration: `key = value` text, defaults, validation.

One schema serves the CLI (config file plus flag overrides), checkpoint
provenance (the effective config is echoed into every checkpoint), and
reports. Unknown keys are rejected so typos fail loudly.
"""

from dataclasses import dataclass, fields

__all__ = [
    "RunConfig",
    "parse_config_text",
    "render_config",
    "format_value",
]


@dataclass
class RunConfig:
    """Every tunable of the pipeline, with paper-default values."""

    image_size: int = 256
    patch_size: int = 16
    window_side: int = 7
    latent_dim: int = 512
    num_blocks: int = 13
    num_heads: int = 8
    use_mfsa: bool = True
    use_long_residuals: bool = True
    alpha: float = 0.01
    beta: float = 0.01
    lr: float = 0.0001
    batch_size: int = 256
    windows_per_image: int = 600
    patience: int = 50
    max_epochs: int = 1000
    seed: int = 0
    workers: int = 1
    deterministic: bool = False

    def to_model_config(self):
        from .model import ModelConfig

        return ModelConfig(
            image_size=self.image_size,
            patch_size=self.patch_size,
            window_side=self.window_side,
            latent_dim=self.latent_dim,
            num_blocks=self.num_blocks,
            num_heads=self.num_heads,
            channels=3,
            use_mfsa=self.use_mfsa,
            use_long_residuals=self.use_long_residuals,
        )

    def to_train_config(self):
        from .metrics import LossWeights
        from .training import TrainConfig

        return TrainConfig(
            windows_per_image=self.windows_per_image,
            batch_size=self.batch_size,
            learning_rate=self.lr,
            patience=self.patience,
            max_epochs=self.max_epochs,
            loss_weights=LossWeights(alpha=self.alpha, beta=self.beta),
            seed=self.seed,
            workers=1 if self.deterministic else self.workers,
            deterministic=self.deterministic,
        )

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(RunConfig)}


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key, text):
    kind = _TYPES[key]
    if kind == "bool" or kind is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"config key '{key}': expected a boolean, got '{text}'")
    if kind == "int" or kind is int:
        return int(text)
    if kind == "float" or kind is float:
        return float(text)
    return text


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def parse_config_text(text, extra_allowed=()):
    """Parse `key = value` lines with `#` comments.

    Returns (RunConfig, extras) where ``extras`` collects values for keys
    in ``extra_allowed``; any other unknown key raises.
    """
    values = {}
    extras = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got '{raw}'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in _TYPES:
            values[key] = _parse_value(key, val)
        elif key in extra_allowed:
            extras[key] = val
        else:
            raise ValueError(f"config line {lineno}: unknown key '{key}'")
    return RunConfig(**values), extras


def render_config(config, extras=None):
    """Render the effective configuration (plus provenance extras) as text."""
    lines = [
        f"{f.name} = {format_value(getattr(config, f.name))}"
        for f in fields(RunConfig)
    ]
    for key in sorted(extras or {}):
        lines.append(f"{key} = {extras[key]}")
    return "\n".join(lines) + "\n"
