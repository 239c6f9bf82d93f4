"""Velocity-target training for the diffusion transformer.

A training item carries a clean latent plus its conditioning: caption
features (per-clause embedding rows) and, for temporally strong data, a
timestamp matrix.  Weak items pass ``t_mat=None`` and train the learned
placeholder row.  Each step additionally drops the full conditioning with
probability ``cfg_dropout``, which trains the unconditional branch used by
classifier-free guidance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Tensor
from .diffusion import cfg_sample, q_sample, velocity_target
from .dit import DiT, DiTConfig
from .errors import TempogenError
from .validation import check_probability, ensure_rng

__all__ = ["TrainingItem", "Adam", "training_step", "train", "LatentDiffusionGenerator"]


@dataclass
class TrainingItem:
    latent: np.ndarray  # (frames, latent_dim)
    caption: np.ndarray | None  # (clauses, cond_dim) features, None only via dropout
    t_mat: np.ndarray | None  # (frames, cond_dim), None for temporally coarse data


class Adam:
    """Adam with optional L2 weight decay folded into the gradient."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        b1, b2 = self.betas
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for name, tensor in self.params.items():
            if tensor.grad is None:
                continue
            grad = tensor.grad
            if self.weight_decay:
                grad = grad + self.weight_decay * tensor.data
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            tensor.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()


def training_step(model: DiT, items: list[TrainingItem], rng, cfg_dropout: float | None = None):
    """One loss/backward pass; returns the scalar loss with gradients populated.

    Per item the step draws a diffusion time, a noise sample, and a
    conditioning-dropout coin, in that order, so a reseeded rng reproduces
    the step exactly.
    """
    if not items:
        raise TempogenError("training step needs at least one item")
    rng = ensure_rng(rng)
    dropout = model.config.cfg_dropout if cfg_dropout is None else cfg_dropout
    check_probability("cfg_dropout", dropout)

    noisy, targets, times, t_mats, captions = [], [], [], [], []
    for item in items:
        t = float(rng.uniform())
        eps = rng.standard_normal(item.latent.shape)
        noisy.append(q_sample(item.latent, eps, t))
        targets.append(velocity_target(item.latent, eps, t))
        times.append(t)
        if rng.uniform() < dropout:
            t_mats.append(None)
            captions.append(None)
        else:
            t_mats.append(item.t_mat)
            captions.append(item.caption)

    x_t = np.stack(noisy)
    v_target = np.stack(targets)
    v_hat = model.forward(x_t, np.array(times), t_mats, captions)
    diff = v_hat - Tensor(v_target)
    loss = (diff * diff).mean()

    model.zero_grad()
    loss.backward()
    return loss


def train(
    model: DiT,
    item_stream,
    steps: int,
    batch_size: int = 8,
    lr: float = 1e-3,
    weight_decay: float = 1e-6,
    seed: int = 0,
    cfg_dropout: float | None = None,
    linear_decay: bool = True,
) -> list[float]:
    """Run ``steps`` optimizer updates over batches pulled from ``item_stream``.

    The learning rate decays linearly from ``lr`` to zero over the budget.
    Returns the per-step losses.
    """
    rng = ensure_rng(seed)
    optimizer = Adam(model.params, lr=lr, weight_decay=weight_decay)
    stream = iter(item_stream)
    losses = []
    for step_index in range(steps):
        batch = list(itertools.islice(stream, batch_size))
        if not batch:
            raise TempogenError("training stream exhausted")
        loss = training_step(model, batch, rng, cfg_dropout)
        lr_now = lr * (1.0 - step_index / steps) if linear_decay else lr
        optimizer.step(lr_now)
        losses.append(float(loss.data))
    return losses


class LatentDiffusionGenerator(BaseEstimator):
    """Estimator wrapper: fit on training items, sample latents afterwards.

    Construction only records hyperparameters (scikit-learn convention);
    ``fit`` builds and trains the transformer, ``sample`` runs the guided
    reverse process for the given conditioning.
    """

    def __init__(
        self,
        layers: int = 4,
        heads: int = 4,
        hidden: int = 64,
        cond_dim: int = 32,
        frames: int = 128,
        latent_dim: int = 8,
        cfg_dropout: float = 0.1,
        steps: int = 400,
        batch_size: int = 8,
        lr: float = 1e-3,
        weight_decay: float = 1e-6,
        seed: int = 0,
    ):
        self.layers = layers
        self.heads = heads
        self.hidden = hidden
        self.cond_dim = cond_dim
        self.frames = frames
        self.latent_dim = latent_dim
        self.cfg_dropout = cfg_dropout
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def _config(self) -> DiTConfig:
        return DiTConfig(
            layers=self.layers,
            heads=self.heads,
            hidden=self.hidden,
            cond_dim=self.cond_dim,
            frames=self.frames,
            latent_dim=self.latent_dim,
            cfg_dropout=self.cfg_dropout,
        )

    def fit(self, X, y=None):
        """X: iterable of TrainingItem (finite iterables are cycled)."""
        items = list(X) if not hasattr(X, "__next__") else X
        stream = itertools.cycle(items) if isinstance(items, list) else items
        self.model_ = DiT(self._config(), rng=np.random.default_rng(self.seed))
        self.losses_ = train(
            self.model_,
            stream,
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            seed=self.seed + 1,
        )
        return self

    def sample(self, captions, t_mats, steps: int = 50, scale: float = 7.5, seed: int = 0):
        if not hasattr(self, "model_"):
            raise TempogenError("generator is not fitted")
        return cfg_sample(
            self.model_, captions, t_mats, steps=steps, scale=scale,
            rng=np.random.default_rng(seed),
        )
