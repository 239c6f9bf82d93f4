"""Diffusion transformer over time-aligned latents.

Each block runs, in order: adaptive layer norm driven by the diffusion
timestep, self-attention with a residual, per-frame concatenation of the
timestamp matrix followed by a projection back to the hidden width,
cross-attention over the caption features with a residual, a second
adaptive layer norm, and a feedforward network with a residual.

Initialization makes every block the identity: attention and feedforward
output projections start at zero and the concatenation projection starts as
identity on the hidden features and zero on the timestamp columns, so the
conditioning path wakes up only through training.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ShapeMismatchError, Tensor, concat
from .encoding import placeholder_vector
from .errors import TempogenError
from .validation import check_probability

__all__ = [
    "DiTConfig",
    "FrameCountError",
    "layer_norm",
    "adaln",
    "attention",
    "concat_time_aligned",
    "feed_forward",
    "dit_block",
    "sinusoidal_features",
    "DiT",
    "TOY_PRESET",
    "FULL_PRESET",
]


class FrameCountError(TempogenError):
    """Latent frames and timestamp-matrix frames disagree."""


@dataclass(frozen=True)
class DiTConfig:
    layers: int = 4
    heads: int = 4
    hidden: int = 64
    cond_dim: int = 32
    frames: int = 128
    latent_dim: int = 8
    cfg_dropout: float = 0.1
    ffn_mult: int = 4
    eps: float = 1e-5

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ShapeMismatchError(
                f"hidden size {self.hidden} not divisible by {self.heads} heads"
            )
        check_probability("cfg_dropout", self.cfg_dropout)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiTConfig":
        return cls(**d)


TOY_PRESET = DiTConfig()
# Full-scale preset (not a test target on a desktop CPU).
FULL_PRESET = DiTConfig(
    layers=24, heads=16, hidden=1024, cond_dim=1024, frames=500, latent_dim=64
)


# ---------------------------------------------------------------------------
# Layer primitives. Inputs are (T, width) or batched (B, T, width) tensors.
# ---------------------------------------------------------------------------


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt()


def _per_frame(mod: Tensor) -> Tensor:
    """Lift a (B, width) modulation to (B, 1, width) so it broadcasts per frame."""
    if mod.ndim == 2:
        return mod.reshape(mod.shape[0], 1, mod.shape[1])
    return mod


def adaln(
    x: Tensor,
    tau_embed: Tensor,
    w_scale: Tensor,
    b_scale: Tensor,
    w_shift: Tensor,
    b_shift: Tensor,
    eps: float = 1e-5,
) -> Tensor:
    """Layer norm whose scale and shift are affine in the timestep embedding."""
    if x.shape[-1] != w_scale.shape[0]:
        raise ShapeMismatchError(f"adaln width {x.shape[-1]} vs modulation {w_scale.shape}")
    gamma = _per_frame(tau_embed @ w_scale + b_scale)
    beta = _per_frame(tau_embed @ w_shift + b_shift)
    return layer_norm(x, eps) * gamma + beta


def attention(
    q_in: Tensor,
    k_in: Tensor,
    v_in: Tensor,
    heads: int,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Multi-head scaled dot-product attention including the projections.

    ``mask`` is an additive pre-softmax bias broadcastable to the score
    shape (use large negatives to hide padded keys).
    """
    if k_in.shape[-2] != v_in.shape[-2]:
        raise ShapeMismatchError(
            f"key and value lengths differ: {k_in.shape} vs {v_in.shape}"
        )
    batched = q_in.ndim == 3
    if not batched:
        q_in = q_in.reshape(1, *q_in.shape)
        k_in = k_in.reshape(1, *k_in.shape)
        v_in = v_in.reshape(1, *v_in.shape)

    hidden = wq.shape[1]
    if hidden % heads != 0:
        raise ShapeMismatchError(f"hidden {hidden} not divisible by {heads} heads")
    head_dim = hidden // heads
    b, tq = q_in.shape[0], q_in.shape[1]
    tk = k_in.shape[1]

    def split_heads(t, length):
        return t.reshape(b, length, heads, head_dim).transpose(0, 2, 1, 3)

    q = split_heads(q_in @ wq + bq, tq)
    k = split_heads(k_in @ wk + bk, tk)
    v = split_heads(v_in @ wv + bv, tk)

    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(head_dim))
    if mask is not None:
        scores = scores + Tensor(mask)
    weights = scores.softmax(axis=-1)
    mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(b, tq, hidden)
    out = mixed @ wo + bo
    return out if batched else out.reshape(tq, hidden)


def concat_time_aligned(a: Tensor, t_mat: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-frame feature concat of latent stream and timestamp rows, projected
    back to the hidden width."""
    if a.shape[-2] != t_mat.shape[-2]:
        raise FrameCountError(
            f"latent has {a.shape[-2]} frames but timestamp matrix has {t_mat.shape[-2]}"
        )
    if a.shape[-1] + t_mat.shape[-1] != w.shape[0]:
        raise ShapeMismatchError(
            f"concat width {a.shape[-1]}+{t_mat.shape[-1]} vs projection {w.shape}"
        )
    return concat([a, t_mat], axis=-1) @ w + b


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    return (x @ w1 + b1).silu() @ w2 + b2


def dit_block(
    a: Tensor,
    t_mat: Tensor,
    c: Tensor,
    tau_embed: Tensor,
    params: dict[str, Tensor],
    heads: int,
    eps: float = 1e-5,
    c_mask: np.ndarray | None = None,
) -> Tensor:
    """One transformer block; see the module docstring for the exact order."""
    p = params
    normed = adaln(
        a, tau_embed, p["mod1.w_scale"], p["mod1.b_scale"], p["mod1.w_shift"], p["mod1.b_shift"], eps
    )
    a = a + attention(
        normed, normed, normed, heads,
        p["self.wq"], p["self.bq"], p["self.wk"], p["self.bk"],
        p["self.wv"], p["self.bv"], p["self.wo"], p["self.bo"],
    )
    a = concat_time_aligned(a, t_mat, p["cat.w"], p["cat.b"])
    a = a + attention(
        a, c, c, heads,
        p["cross.wq"], p["cross.bq"], p["cross.wk"], p["cross.bk"],
        p["cross.wv"], p["cross.bv"], p["cross.wo"], p["cross.bo"],
        mask=c_mask,
    )
    normed = adaln(
        a, tau_embed, p["mod2.w_scale"], p["mod2.b_scale"], p["mod2.w_shift"], p["mod2.b_shift"], eps
    )
    return a + feed_forward(normed, p["ffn.w1"], p["ffn.b1"], p["ffn.w2"], p["ffn.b2"])


def sinusoidal_features(positions: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Standard transformer sin/cos features for positions (any real values)."""
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    angles = positions[..., None] * freqs
    feats = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    if dim % 2:
        feats = np.concatenate([feats, np.zeros_like(feats[..., :1])], axis=-1)
    return feats


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

_BLOCK_ZERO_KEYS = ("self.wo", "cross.wo", "ffn.w2")


@dataclass
class _Init:
    rng: np.random.Generator
    params: dict[str, Tensor] = field(default_factory=dict)

    def xavier(self, name: str, fan_in: int, fan_out: int):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.params[name] = Tensor(
            self.rng.uniform(-limit, limit, (fan_in, fan_out)), requires_grad=True
        )

    def zeros(self, name: str, *shape: int):
        self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

    def constant(self, name: str, value: np.ndarray):
        self.params[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True)


class DiT:
    """Velocity-predicting diffusion transformer.

    ``forward`` takes the noisy latent batch, per-item diffusion times in
    [0, 1], and per-item conditioning, where ``None`` selects the learned
    unconditional stand-ins: a constant placeholder row instead of the
    timestamp matrix and a learned null caption feature.  The same
    placeholder row also represents temporally coarse training data.
    """

    def __init__(self, config: DiTConfig, rng: np.random.Generator | int = 0):
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.config = config
        h, c, d = config.hidden, config.cond_dim, config.latent_dim

        init = _Init(rng)
        init.xavier("in_proj.w", d, h)
        init.zeros("in_proj.b", h)
        init.xavier("tau.w1", h, h)
        init.zeros("tau.b1", h)
        init.xavier("tau.w2", h, h)
        init.zeros("tau.b2", h)
        for i in range(config.layers):
            prefix = f"blocks.{i}."
            for mod in ("mod1", "mod2"):
                init.zeros(prefix + f"{mod}.w_scale", h, h)
                init.constant(prefix + f"{mod}.b_scale", np.ones(h))
                init.zeros(prefix + f"{mod}.w_shift", h, h)
                init.zeros(prefix + f"{mod}.b_shift", h)
            for attn, kdim in (("self", h), ("cross", h)):
                init.xavier(prefix + f"{attn}.wq", h, h)
                init.zeros(prefix + f"{attn}.bq", h)
                init.xavier(prefix + f"{attn}.wk", c if attn == "cross" else kdim, h)
                init.zeros(prefix + f"{attn}.bk", h)
                init.xavier(prefix + f"{attn}.wv", c if attn == "cross" else kdim, h)
                init.zeros(prefix + f"{attn}.bv", h)
                init.zeros(prefix + f"{attn}.wo", h, h)
                init.zeros(prefix + f"{attn}.bo", h)
            init.constant(
                prefix + "cat.w",
                np.concatenate([np.eye(h), np.zeros((c, h))], axis=0),
            )
            init.zeros(prefix + "cat.b", h)
            init.xavier(prefix + "ffn.w1", h, config.ffn_mult * h)
            init.zeros(prefix + "ffn.b1", config.ffn_mult * h)
            init.zeros(prefix + "ffn.w2", config.ffn_mult * h, h)
            init.zeros(prefix + "ffn.b2", h)
        init.zeros("final.w", h, d)
        init.zeros("final.b", d)
        init.constant("null_caption", 0.02 * rng.standard_normal((1, c)))
        init.constant("placeholder_row", placeholder_vector(c))
        self.params = init.params

    # -- parameter access ----------------------------------------------------

    def block_params(self, index: int) -> dict[str, Tensor]:
        prefix = f"blocks.{index}."
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.params):
            missing = set(self.params) - set(arrays)
            surplus = set(arrays) - set(self.params)
            raise ShapeMismatchError(
                f"checkpoint names mismatch (missing={sorted(missing)}, surplus={sorted(surplus)})"
            )
        for name, arr in arrays.items():
            if tuple(arr.shape) != self.params[name].shape:
                raise ShapeMismatchError(
                    f"{name}: checkpoint shape {arr.shape} != model shape {self.params[name].shape}"
                )
            self.params[name].data = np.asarray(arr, dtype=np.float64).copy()

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    # -- conditioning assembly -------------------------------------------------

    def _assemble_matrices(self, t_mats, frames: int) -> Tensor:
        cdim = self.config.cond_dim
        pieces = []
        for m in t_mats:
            if m is None:
                pieces.append(
                    self.params["placeholder_row"].reshape(1, 1, cdim).broadcast_to((1, frames, cdim))
                )
                continue
            arr = m.values if hasattr(m, "values") else np.asarray(m, dtype=np.float64)
            if arr.shape != (frames, cdim):
                raise FrameCountError(
                    f"timestamp matrix shape {arr.shape} != ({frames}, {cdim})"
                )
            pieces.append(Tensor(arr).reshape(1, frames, cdim))
        return concat(pieces, axis=0)

    def _assemble_captions(self, captions) -> tuple[Tensor, np.ndarray]:
        cdim = self.config.cond_dim
        lengths = [1 if c is None else np.asarray(c).shape[0] for c in captions]
        width = max(lengths)
        pieces = []
        mask = np.zeros((len(captions), 1, 1, width))
        for row, cap in enumerate(captions):
            if cap is None:
                piece = self.params["null_caption"]
            else:
                arr = np.asarray(cap, dtype=np.float64)
                if arr.ndim != 2 or arr.shape[1] != cdim:
                    raise ShapeMismatchError(
                        f"caption features must be (n, {cdim}), got {arr.shape}"
                    )
                piece = Tensor(arr)
            n = piece.shape[0]
            if n < width:
                piece = concat([piece, Tensor(np.zeros((width - n, cdim)))], axis=0)
                mask[row, :, :, n:] = -1e9
            pieces.append(piece.reshape(1, width, cdim))
        return concat(pieces, axis=0), mask

    # -- forward ----------------------------------------------------------------

    def forward(self, x_t, t, t_mats, captions) -> Tensor:
        """Predict velocity for a batch.

        x_t: (B, T, latent_dim) array or Tensor; t: (B,) times in [0, 1];
        t_mats and captions: length-B sequences (entries may be None).
        """
        x = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=np.float64))
        if x.ndim != 3 or x.shape[2] != self.config.latent_dim:
            raise ShapeMismatchError(
                f"latent batch must be (B, T, {self.config.latent_dim}), got {x.shape}"
            )
        b, frames = x.shape[0], x.shape[1]
        if len(t_mats) != b or len(captions) != b:
            raise ShapeMismatchError("conditioning lists must match the batch size")

        h = x @ self.params["in_proj.w"] + self.params["in_proj.b"]
        h = h + Tensor(sinusoidal_features(np.arange(frames), self.config.hidden))

        t = np.asarray(t, dtype=np.float64).reshape(b)
        tau_feats = Tensor(sinusoidal_features(t * 1000.0, self.config.hidden))
        tau = (tau_feats @ self.params["tau.w1"] + self.params["tau.b1"]).silu()
        tau = tau @ self.params["tau.w2"] + self.params["tau.b2"]

        t_mat = self._assemble_matrices(t_mats, frames)
        caps, mask = self._assemble_captions(captions)

        for i in range(self.config.layers):
            h = dit_block(
                h, t_mat, caps, tau, self.block_params(i), self.config.heads,
                eps=self.config.eps, c_mask=mask,
            )
        h = layer_norm(h, self.config.eps)
        return h @ self.params["final.w"] + self.params["final.b"]
