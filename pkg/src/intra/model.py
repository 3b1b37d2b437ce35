"""The inpainting transformer.

A window of patch embeddings (one slot replaced by a learnable inpaint
token) runs through a stack of pre-norm attention blocks; the output
sequence is averaged and mapped back to pixel space through a sigmoid.
Queries and keys optionally pass through a dimension-reducing MLP
("feature self-attention") instead of plain linear maps, and long
residual connections feed early block outputs into late block inputs.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import engine as E

__all__ = [
    "ModelConfig",
    "InpaintingTransformer",
    "param_shapes",
    "count_parameters",
    "msa_parameter_delta",
]


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the inpainting transformer."""

    image_size: int = 256
    patch_size: int = 16
    window_side: int = 7
    latent_dim: int = 512
    num_blocks: int = 13
    num_heads: int = 8
    channels: int = 3
    use_mfsa: bool = True
    use_long_residuals: bool = True

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"patch size {self.patch_size} does not divide image size "
                f"{self.image_size}"
            )
        if self.window_side > self.grid_side:
            raise ValueError(
                f"window side {self.window_side} exceeds patch grid side "
                f"{self.grid_side}"
            )
        if self.window_side**2 < 2:
            raise ValueError("window must contain at least two patches")
        if self.latent_dim % self.num_heads != 0:
            raise ValueError(
                f"latent dim {self.latent_dim} not divisible by "
                f"{self.num_heads} heads"
            )
        if (self.latent_dim // 2) % self.num_heads != 0:
            raise ValueError(
                f"reduced dim {self.latent_dim // 2} not divisible by "
                f"{self.num_heads} heads"
            )

    @property
    def grid_side(self):
        return self.image_size // self.patch_size

    @property
    def seq_len(self):
        return self.window_side**2

    @property
    def patch_dim(self):
        return self.patch_size**2 * self.channels


def param_shapes(config):
    """Name -> shape for every learnable tensor, in definition order."""
    d = config.latent_dim
    p = config.patch_dim
    g2 = config.grid_side**2
    shapes = {
        "embed.patch_proj": (p, d),
        "embed.positions": (g2, d),
        "embed.inpaint_token": (d,),
    }
    for i in range(config.num_blocks):
        b = f"block{i:02d}"
        shapes[f"{b}.norm1.scale"] = (d,)
        shapes[f"{b}.norm1.shift"] = (d,)
        if config.use_mfsa:
            for qk in ("q", "k"):
                shapes[f"{b}.attn.{qk}1.weight"] = (d, 2 * d)
                shapes[f"{b}.attn.{qk}1.bias"] = (2 * d,)
                shapes[f"{b}.attn.{qk}2.weight"] = (2 * d, d // 2)
                shapes[f"{b}.attn.{qk}2.bias"] = (d // 2,)
        else:
            for qk in ("q", "k"):
                shapes[f"{b}.attn.{qk}.weight"] = (d, d)
                shapes[f"{b}.attn.{qk}.bias"] = (d,)
        shapes[f"{b}.attn.v.weight"] = (d, d)
        shapes[f"{b}.attn.v.bias"] = (d,)
        shapes[f"{b}.attn.out.weight"] = (d, d)
        shapes[f"{b}.attn.out.bias"] = (d,)
        shapes[f"{b}.norm2.scale"] = (d,)
        shapes[f"{b}.norm2.shift"] = (d,)
        shapes[f"{b}.mlp.fc1.weight"] = (d, 4 * d)
        shapes[f"{b}.mlp.fc1.bias"] = (4 * d,)
        shapes[f"{b}.mlp.fc2.weight"] = (4 * d, d)
        shapes[f"{b}.mlp.fc2.bias"] = (d,)
    shapes["head.weight"] = (d, p)
    shapes["head.bias"] = (p,)
    return shapes


def count_parameters(config):
    """Exact learnable scalar count for a configuration."""
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def msa_parameter_delta(config):
    """How many parameters switching feature attention to plain attention
    removes: per block, both query and key MLPs collapse to linear maps."""
    d = config.latent_dim
    mfsa_qk = d * 2 * d + 2 * d + 2 * d * (d // 2) + d // 2
    msa_qk = d * d + d
    return config.num_blocks * 2 * (mfsa_qk - msa_qk)


def _init_value(name, shape, d, rng):
    if name.endswith(".bias") or name.endswith(".shift"):
        return np.zeros(shape)
    if name.endswith(".scale"):
        return np.ones(shape)
    if name in ("embed.positions", "embed.inpaint_token"):
        bound = math.sqrt(6.0 / d)
    else:
        bound = math.sqrt(6.0 / shape[0])
    return rng.uniform(-bound, bound, size=shape)


class InpaintingTransformer:
    """Parameter set plus forward passes for window inpainting."""

    def __init__(self, config, params):
        self.config = config
        expected = param_shapes(config)
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        if missing or extra:
            raise ValueError(
                f"parameter set mismatch: missing={sorted(missing)}, "
                f"unexpected={sorted(extra)}"
            )
        for name, p in params.items():
            if p.data.shape != expected[name]:
                raise E.ShapeError(
                    f"parameter '{name}': expected shape {expected[name]}, "
                    f"got {p.data.shape}"
                )
        self.params = {name: params[name] for name in expected}

    @classmethod
    def initialize(cls, config, rng):
        """Fresh model with fan-in-scaled uniform weights from ``rng``."""
        d = config.latent_dim
        params = {
            name: E.parameter(_init_value(name, shape, d, rng), name=name)
            for name, shape in param_shapes(config).items()
        }
        return cls(config, params)

    def parameter_values(self):
        """Copies of all parameter arrays, keyed by name."""
        return {name: p.numpy() for name, p in self.params.items()}

    def load_values(self, values):
        """Overwrite parameters in place from a name -> array mapping."""
        for name, p in self.params.items():
            p.set_data(np.asarray(values[name], dtype=p.data.dtype))

    # -- forward passes -------------------------------------------------

    def _p(self, name):
        return self.params[name]

    def embed_batch(self, patch_windows, positions, target_slots):
        """Embed windows into latent sequences; graph tensor (B, L^2, D).

        ``patch_windows``: (B, L^2, K^2*C) window content, row-major by
        grid position, target content included (it is masked out here so
        the network never sees it). ``positions``: (B, L^2) 0-based linear
        grid positions. ``target_slots``: (B,) index of the inpainted slot.
        """
        windows = np.asarray(patch_windows)
        positions = np.asarray(positions)
        slots = np.asarray(target_slots)
        b, n, p = windows.shape
        cfg = self.config
        if n != cfg.seq_len or p != cfg.patch_dim:
            raise E.ShapeError(
                f"expected windows of shape (B, {cfg.seq_len}, {cfg.patch_dim}), "
                f"got {windows.shape}"
            )
        mask = np.ones((b, n, 1), dtype=E.default_dtype())
        mask[np.arange(b), slots, 0] = 0.0
        masked = E.mul(E.as_tensor(windows), E.as_tensor(mask))
        content = E.matmul(masked, self._p("embed.patch_proj"))
        token = E.mul(E.sub(1.0, E.as_tensor(mask)), self._p("embed.inpaint_token"))
        pos = E.gather_rows(self._p("embed.positions"), positions)
        return E.add(E.add(content, token), pos)

    def embed_window(self, context_patches, context_positions, target_position):
        """Embed one window given its L^2 - 1 context patches.

        Positions are 1-based linear grid indices; the returned (L^2, D)
        sequence is ordered row-major by grid position (ascending linear
        index), with the inpaint token standing in at the target.
        """
        cfg = self.config
        context_patches = np.asarray(context_patches)
        context_positions = [int(x) for x in context_positions]
        target_position = int(target_position)
        if len(context_patches) != cfg.seq_len - 1:
            raise ValueError(
                f"expected {cfg.seq_len - 1} context patches, "
                f"got {len(context_patches)}"
            )
        all_positions = context_positions + [target_position]
        if len(set(all_positions)) != len(all_positions):
            raise ValueError("window positions must be distinct")
        table_rows = cfg.grid_side**2
        for pos in all_positions:
            if not 1 <= pos <= table_rows:
                raise ValueError(
                    f"linear position {pos} outside the embedding table "
                    f"[1, {table_rows}]"
                )
        order = np.argsort(all_positions, kind="stable")
        windows = np.zeros((1, cfg.seq_len, cfg.patch_dim), dtype=E.default_dtype())
        positions = np.zeros((1, cfg.seq_len), dtype=np.intp)
        slot = 0
        for out_idx, src in enumerate(order):
            positions[0, out_idx] = all_positions[src] - 1
            if src == cfg.seq_len - 1:
                slot = out_idx
            else:
                windows[0, out_idx] = context_patches[src]
        return self.embed_batch(windows, positions, np.array([slot]))

    def _attention(self, x, block, attn_sink=None):
        cfg = self.config
        b = f"block{block:02d}"
        bsz, n = x.shape[0], x.shape[1]
        d = cfg.latent_dim
        heads = cfg.num_heads
        if cfg.use_mfsa:
            q = E.linear(
                E.gelu(E.linear(x, self._p(f"{b}.attn.q1.weight"), self._p(f"{b}.attn.q1.bias"))),
                self._p(f"{b}.attn.q2.weight"),
                self._p(f"{b}.attn.q2.bias"),
            )
            k = E.linear(
                E.gelu(E.linear(x, self._p(f"{b}.attn.k1.weight"), self._p(f"{b}.attn.k1.bias"))),
                self._p(f"{b}.attn.k2.weight"),
                self._p(f"{b}.attn.k2.bias"),
            )
            qk_dim = d // 2
        else:
            q = E.linear(x, self._p(f"{b}.attn.q.weight"), self._p(f"{b}.attn.q.bias"))
            k = E.linear(x, self._p(f"{b}.attn.k.weight"), self._p(f"{b}.attn.k.bias"))
            qk_dim = d
        v = E.linear(x, self._p(f"{b}.attn.v.weight"), self._p(f"{b}.attn.v.bias"))
        dk = qk_dim // heads
        dv = d // heads
        q = E.transpose(E.reshape(q, (bsz, n, heads, dk)), (0, 2, 1, 3))
        k_t = E.transpose(E.reshape(k, (bsz, n, heads, dk)), (0, 2, 3, 1))
        v = E.transpose(E.reshape(v, (bsz, n, heads, dv)), (0, 2, 1, 3))
        weights = E.softmax(E.mul(E.matmul(q, k_t), 1.0 / math.sqrt(dk)))
        if attn_sink is not None:
            attn_sink.append(weights.data)
        out = E.transpose(E.matmul(weights, v), (0, 2, 1, 3))
        out = E.reshape(out, (bsz, n, d))
        return E.linear(out, self._p(f"{b}.attn.out.weight"), self._p(f"{b}.attn.out.bias"))

    def _block(self, x, block, attn_sink=None):
        b = f"block{block:02d}"
        normed = E.layer_norm(x, self._p(f"{b}.norm1.scale"), self._p(f"{b}.norm1.shift"))
        y = E.add(x, self._attention(normed, block, attn_sink))
        normed = E.layer_norm(y, self._p(f"{b}.norm2.scale"), self._p(f"{b}.norm2.shift"))
        hidden = E.gelu(E.linear(normed, self._p(f"{b}.mlp.fc1.weight"), self._p(f"{b}.mlp.fc1.bias")))
        return E.add(y, E.linear(hidden, self._p(f"{b}.mlp.fc2.weight"), self._p(f"{b}.mlp.fc2.bias")))

    def _run_blocks(self, x):
        """Block stack with U-style long skips: block i's output is added
        to the input of block n+1-i (1-based, i up to n//2)."""
        cfg = self.config
        n = cfg.num_blocks
        outputs = {}
        current = x
        for j in range(1, n + 1):
            if cfg.use_long_residuals:
                src = n + 1 - j
                if 1 <= src <= n // 2 and src < j:
                    current = E.add(current, outputs[src])
            current = self._block(current, j - 1)
            if cfg.use_long_residuals and j <= n // 2:
                outputs[j] = current
        return current

    def _head(self, seq):
        pooled = E.mean(seq, axis=1)
        return E.sigmoid(E.linear(pooled, self._p("head.weight"), self._p("head.bias")))

    def inpaint_batch(self, patch_windows, positions, target_slots):
        """Reconstruct the masked patch of each window; graph tensor (B, P)."""
        seq = self.embed_batch(patch_windows, positions, target_slots)
        return self._head(self._run_blocks(seq))

    def forward(self, window_patches, positions, target_position):
        """Reconstruct one masked patch.

        ``window_patches``: (L^2, K^2*C) row-major window content;
        ``positions``: matching 1-based linear grid positions;
        ``target_position``: the one to inpaint (its content is ignored).
        Returns the reconstructed flattened patch, values in (0, 1).
        """
        positions = np.asarray(positions, dtype=np.intp)
        matches = np.flatnonzero(positions == int(target_position))
        if matches.size != 1:
            raise ValueError(
                f"target position {target_position} must appear exactly once "
                f"in the window positions"
            )
        with E.no_grad():
            out = self.inpaint_batch(
                np.asarray(window_patches)[None],
                positions[None] - 1,
                np.array([matches[0]]),
            )
        return out.data[0]

    def reconstruct_from_sequence(self, sequence):
        """Run an already-embedded (L^2, D) sequence through blocks + head."""
        with E.no_grad():
            out = self._head(self._run_blocks(E.as_tensor(np.asarray(sequence)[None])))
        return out.data[0]

    def run_block(self, sequence, block=0):
        """One transformer block applied to a plain (B, L^2, D) array."""
        with E.no_grad():
            return self._block(E.as_tensor(sequence), block).data

    def attention_weights(self, sequence, block=0):
        """Softmax attention weights (B, heads, L^2, L^2) for inspection."""
        sink = []
        with E.no_grad():
            self._attention(E.as_tensor(sequence), block, attn_sink=sink)
        return sink[0]
