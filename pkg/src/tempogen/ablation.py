"""Three-arm toy experiment: timestamp matrix and training-mix ablations.

All arms share the same toy-latent data per seed.  The event vocabulary
lives in two domains: "real" clips built from the canonical templates the
evaluator detects with, and "sim" clips built from a shifted template bank
with a fixed small cosine to the canonical one, standing in for the
simulation-to-real distribution gap.

Arms:
  full      conditioning = coarse caption features + timestamp matrix,
            trained on weak real + strong (sim + real) at the mix ratio
  wot       timestamp matrix withheld (placeholder row instead); event
            timing is pushed into the caption text itself
  sim_only  same conditioning as full but trained only on the sim subset

Each arm trains for the same step budget, generates latents for a held-out
disjoint real-domain evaluation set, recovers event timestamps with the
template detector, and reports micro segment-F1 against the references.
The winning condition is a median margin over seeds, not absolute scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .captions import TimedCaption
from .curation import mix_sampler
from .diffusion import cfg_sample
from .dit import DiT, DiTConfig
from .embedding import HashingTextEmbedder
from .encoding import build_timestamp_matrix
from .metrics import evaluate_set
from .toyspace import ToyRecord, detect_latent_events, draw_toy_record, make_template_banks
from .training import TrainingItem, train
from .validation import derived_rng

__all__ = ["AblationConfig", "ArmResult", "AblationReport", "run_ablation"]

ARMS = ("full", "wot", "sim_only")

_PHRASES = ("a {} sounding", "the {} is heard", "some {} noise")


@dataclass
class AblationConfig:
    seed: int = 7
    n_seeds: int = 3
    labels: tuple[str, ...] = ("alarm", "dog", "engine", "speech")
    latent_dim: int = 12
    cond_dim: int = 16
    duration: float = 5.0
    frame_duration: float = 0.05
    n_sim_strong: int = 180
    n_real_strong: int = 180
    n_real_weak: int = 180
    n_eval: int = 48
    n_events: tuple[int, int] = (2, 4)
    event_seconds: tuple[float, float] = (0.6, 1.4)
    shift_cos: float = 0.25
    noise_scale: float = 0.05
    layers: int = 3
    heads: int = 4
    hidden: int = 48
    train_steps: int = 350
    batch_size: int = 8
    lr: float = 2e-3
    weight_decay: float = 1e-6
    cfg_dropout: float = 0.1
    mix_ratio: tuple[int, int] = (1, 2)
    sample_steps: int = 12
    cfg_scale: float = 3.0
    detect_threshold: float = 0.4
    segment_length: float = 1.0
    margin: float = 0.05

    @property
    def frames(self) -> int:
        return int(round(self.duration / self.frame_duration))

    def model_config(self) -> DiTConfig:
        return DiTConfig(
            layers=self.layers,
            heads=self.heads,
            hidden=self.hidden,
            cond_dim=self.cond_dim,
            frames=self.frames,
            latent_dim=self.latent_dim,
            cfg_dropout=self.cfg_dropout,
        )

    def mapping(self) -> dict[str, list[str]]:
        return {label: [p.format(label) for p in _PHRASES] for label in self.labels}


@dataclass
class SeedData:
    templates: dict[str, np.ndarray]
    sim_templates: dict[str, np.ndarray]
    sim_strong: list[ToyRecord]
    real_strong: list[ToyRecord]
    real_weak: list[ToyRecord]
    eval_records: list[ToyRecord]


def make_seed_data(config: AblationConfig, seed: int) -> SeedData:
    templates, sim_templates = make_template_banks(
        config.labels, config.latent_dim, derived_rng(seed, 0), config.shift_cos
    )
    mapping = config.mapping()

    def batch(n, key, bank, domain, strong, disjoint=False):
        records = []
        for i in range(n):
            records.append(
                draw_toy_record(
                    derived_rng(seed, key, i), config.labels, mapping, bank,
                    duration=config.duration, frame_duration=config.frame_duration,
                    n_events=config.n_events, event_seconds=config.event_seconds,
                    domain=domain, strong=strong, disjoint=disjoint,
                    noise_scale=config.noise_scale,
                )
            )
        return records

    return SeedData(
        templates=templates,
        sim_templates=sim_templates,
        sim_strong=batch(config.n_sim_strong, 1, sim_templates, "sim", True),
        real_strong=batch(config.n_real_strong, 2, templates, "real", True),
        real_weak=batch(config.n_real_weak, 3, templates, "real", False),
        eval_records=batch(config.n_eval, 4, templates, "real", True, disjoint=True),
    )


# ---------------------------------------------------------------------------
# Conditioning
# ---------------------------------------------------------------------------


def _timed_clauses(caption: TimedCaption) -> list[str]:
    clauses = []
    for event in caption.events:
        spans = ", ".join(f"{iv.onset:.2f}-{iv.offset:.2f}" for iv in event.intervals)
        clauses.append(f"{event.description} at {spans}")
    return clauses


def record_conditioning(
    record: ToyRecord,
    arm: str,
    embedder: HashingTextEmbedder,
    frame_duration: float,
) -> tuple[np.ndarray, np.ndarray | None]:
    """(caption features, timestamp matrix or None) for one record and arm.

    The "wot" arm folds event timing into the caption clauses and never
    builds a matrix; the other arms keep the coarse caption and, for strong
    records, add the time-aligned matrix.
    """
    if arm == "wot":
        if record.strong:
            texts = _timed_clauses(record.caption())
        else:
            texts = list(record.descriptions)
        return np.stack([embedder.embed(t) for t in texts]), None

    caps = np.stack([embedder.embed(d) for d in record.descriptions])
    t_mat = None
    if record.strong:
        t_mat = build_timestamp_matrix(record.caption(), embedder, frame_duration).values
    return caps, t_mat


def make_items(records, arm, embedder, frame_duration) -> list[TrainingItem]:
    items = []
    for record in records:
        caps, t_mat = record_conditioning(record, arm, embedder, frame_duration)
        items.append(TrainingItem(latent=record.latent, caption=caps, t_mat=t_mat))
    return items


def _shuffled_cycle(items, seed):
    rng = np.random.default_rng(seed)
    while True:
        for i in rng.permutation(len(items)):
            yield items[i]


# ---------------------------------------------------------------------------
# Arms
# ---------------------------------------------------------------------------


def train_arm(config: AblationConfig, data: SeedData, arm: str, seed: int) -> DiT:
    embedder = HashingTextEmbedder(dim=config.cond_dim, seed=0)
    if arm == "sim_only":
        strong_items = make_items(data.sim_strong, "full", embedder, config.frame_duration)
        stream = _shuffled_cycle(strong_items, seed)
    else:
        weak_items = make_items(data.real_weak, arm, embedder, config.frame_duration)
        strong_items = make_items(
            data.sim_strong + data.real_strong, arm, embedder, config.frame_duration
        )
        stream = mix_sampler(weak_items, strong_items, config.mix_ratio, seed=seed)

    model = DiT(config.model_config(), rng=np.random.default_rng([seed, ARMS.index(arm)]))
    train(
        model, stream,
        steps=config.train_steps, batch_size=config.batch_size, lr=config.lr,
        weight_decay=config.weight_decay, seed=seed + 1,
    )
    return model


def evaluate_arm(config: AblationConfig, data: SeedData, arm: str, model: DiT, seed: int):
    embedder = HashingTextEmbedder(dim=config.cond_dim, seed=0)
    caps, mats = [], []
    for record in data.eval_records:
        c, m = record_conditioning(record, arm, embedder, config.frame_duration)
        caps.append(c)
        mats.append(m)
    latents = cfg_sample(
        model, caps, mats,
        steps=config.sample_steps, scale=config.cfg_scale,
        rng=derived_rng(seed, 9),
    )
    pairs = []
    for record, latent in zip(data.eval_records, latents):
        hypothesis = detect_latent_events(
            latent, data.templates,
            threshold=config.detect_threshold,
            frame_duration=config.frame_duration,
        )
        pairs.append((record.label_annotation(), hypothesis))
    return evaluate_set(pairs, segment_length=config.segment_length)


@dataclass
class ArmResult:
    name: str
    seg_f1: list[float] = field(default_factory=list)
    seg_f1_me: list[float] = field(default_factory=list)

    @property
    def median_f1(self) -> float:
        return median(self.seg_f1)

    @property
    def median_f1_me(self) -> float:
        return median(self.seg_f1_me) if self.seg_f1_me else 0.0


@dataclass
class AblationReport:
    arms: dict[str, ArmResult]
    margin: float
    seeds: list[int]

    @property
    def matrix_margin(self) -> float:
        return self.arms["full"].median_f1 - self.arms["wot"].median_f1

    @property
    def data_margin(self) -> float:
        return self.arms["full"].median_f1 - self.arms["sim_only"].median_f1

    @property
    def passed(self) -> bool:
        return self.matrix_margin >= self.margin and self.data_margin >= self.margin

    def to_json(self) -> dict:
        return {
            "seeds": self.seeds,
            "margin_required": self.margin,
            "matrix_margin": self.matrix_margin,
            "data_margin": self.data_margin,
            "passed": self.passed,
            "arms": {
                name: {
                    "seg_f1_per_seed": arm.seg_f1,
                    "seg_f1_median": arm.median_f1,
                    "seg_f1_me_per_seed": arm.seg_f1_me,
                    "seg_f1_me_median": arm.median_f1_me,
                }
                for name, arm in self.arms.items()
            },
        }

    def format_table(self) -> str:
        lines = [
            f"{'arm':<10} {'Seg-F1 (median)':>16} {'Seg-F1-ME (median)':>19} per-seed",
        ]
        for name, arm in self.arms.items():
            per_seed = ", ".join(f"{v:.3f}" for v in arm.seg_f1)
            lines.append(
                f"{name:<10} {arm.median_f1:>16.3f} {arm.median_f1_me:>19.3f} [{per_seed}]"
            )
        lines.append(
            f"timestamp-matrix margin: {self.matrix_margin:+.3f} "
            f"(needs >= {self.margin:+.3f})"
        )
        lines.append(
            f"training-data margin:    {self.data_margin:+.3f} "
            f"(needs >= {self.margin:+.3f})"
        )
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def run_ablation(config: AblationConfig | None = None, progress=None) -> AblationReport:
    """Train and evaluate all arms over the configured seeds."""
    config = config or AblationConfig()
    seeds = [config.seed + k for k in range(config.n_seeds)]
    arms = {name: ArmResult(name=name) for name in ARMS}
    for seed in seeds:
        data = make_seed_data(config, seed)
        for name in ARMS:
            model = train_arm(config, data, name, seed)
            summary = evaluate_arm(config, data, name, model, seed)
            arms[name].seg_f1.append(summary.overall.f1)
            if summary.multi_event is not None:
                arms[name].seg_f1_me.append(summary.multi_event.f1)
            if progress is not None:
                progress(seed, name, summary.overall.f1)
    return AblationReport(arms=arms, margin=config.margin, seeds=seeds)
