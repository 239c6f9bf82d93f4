"""Temporally controllable audio generation toolkit.

Pipeline stages: simulate labelled scenes (or ingest grounded real data),
encode timed captions into timestamp matrices, train a velocity-target
diffusion transformer on the mix of weak and strong records, sample with
classifier-free guidance, and score temporal control with segment-based F1.
"""

from .autodiff import Tensor, gradient_check, no_grad
from .captions import (
    Annotation,
    Interval,
    TimedCaption,
    TimedEvent,
    parse_tdc,
    render_tdc,
)
from .curation import curate, detect_omissions, detect_overlaps, mix_sampler
from .diffusion import cfg_sample, noise_schedule, velocity_target
from .dit import DiT, DiTConfig
from .embedding import HashingTextEmbedder, PrecomputedEmbedder
from .encoding import TimestampEncoder, TimestampMatrix, build_timestamp_matrix, coarse_placeholder
from .errors import TempogenError
from .manifest import DataRecord, read_manifest, write_manifest
from .metrics import EvalResult, SegmentGrid, evaluate_set, segment_activity, segment_f1
from .simulate import SceneSpec, build_demo_bank, generate_dataset, simulate_scene
from .toyspace import LatentEventDetector, detect_latent_events, make_template_banks
from .training import Adam, LatentDiffusionGenerator, TrainingItem, train, training_step

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Annotation",
    "DataRecord",
    "DiT",
    "DiTConfig",
    "EvalResult",
    "HashingTextEmbedder",
    "Interval",
    "LatentDiffusionGenerator",
    "LatentEventDetector",
    "PrecomputedEmbedder",
    "SceneSpec",
    "SegmentGrid",
    "TempogenError",
    "Tensor",
    "TimedCaption",
    "TimedEvent",
    "TimestampEncoder",
    "TimestampMatrix",
    "TrainingItem",
    "build_demo_bank",
    "build_timestamp_matrix",
    "cfg_sample",
    "coarse_placeholder",
    "curate",
    "detect_latent_events",
    "detect_omissions",
    "detect_overlaps",
    "evaluate_set",
    "generate_dataset",
    "gradient_check",
    "make_template_banks",
    "mix_sampler",
    "no_grad",
    "noise_schedule",
    "parse_tdc",
    "read_manifest",
    "render_tdc",
    "segment_activity",
    "segment_f1",
    "simulate_scene",
    "train",
    "training_step",
    "velocity_target",
    "write_manifest",
]
