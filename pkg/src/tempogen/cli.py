"""Command-line entry point wiring all pipeline stages.

Every artifact gets a ``<name>.provenance.json`` sidecar recording the
command, resolved arguments, and the SHA-256 of each input, so any output
can be regenerated byte-for-byte from its sidecar.  Exit codes: 0 success,
1 pipeline error (with a positioned message), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import AblationConfig, make_seed_data, run_ablation
from .captions import TimedCaption, parse_tdc
from .config import ConfigError, load_config
from .curation import curate, load_groundings, mix_sampler
from .diffusion import cfg_sample
from .dit import DiT, DiTConfig
from .embedding import HashingTextEmbedder, PrecomputedEmbedder
from .encoding import build_timestamp_matrix, frame_count
from .errors import TempogenError
from .formats import (
    load_checkpoint,
    read_latent,
    save_checkpoint,
    write_latent,
    write_matrix,
)
from .manifest import read_manifest, resolve_audio_path, write_manifest
from .metrics import evaluate_set
from .simulate import SimulationConfig, generate_dataset, load_event_bank, load_mapping_table
from .toyspace import detect_latent_events, load_templates, save_templates, write_toy_dataset
from .training import TrainingItem, train


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_provenance(artifact, command: str, arguments: dict, inputs: list) -> None:
    """Deterministic sidecar next to ``artifact`` (no timestamps)."""
    artifact = Path(artifact)
    sidecar = artifact.parent / (artifact.name + ".provenance.json")
    payload = {
        "tool": "tempogen",
        "version": __version__,
        "command": command,
        "arguments": {k: v for k, v in sorted(arguments.items()) if v is not None},
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "artifact": artifact.name,
    }
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = SimulationConfig(
        clip_seconds=args.clip_seconds,
        max_events=args.max_events,
        disjoint_only=args.disjoint_only,
    )
    bank = load_event_bank(args.bank, sample_rate=config.sample_rate)
    table = load_mapping_table(args.mapping)
    records = generate_dataset(args.n, config, bank, table, args.out_dir, seed=args.seed)
    manifest = Path(args.out_dir) / "manifest.jsonl"
    write_provenance(manifest, "simulate", vars(args), [args.bank, args.mapping])
    print(f"wrote {len(records)} records to {manifest}")
    return 0


def cmd_filter(args) -> int:
    records = read_manifest(args.manifest)
    groundings = load_groundings(args.groundings)
    strong, report = curate(records, groundings)
    write_manifest(strong, args.out)
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_provenance(args.out, "filter", vars(args), [args.manifest, args.groundings])
    write_provenance(args.report, "filter", vars(args), [args.manifest, args.groundings])
    print(
        f"kept {report.kept} strong, rejected {report.rejected_overlap} overlap "
        f"+ {report.rejected_omission} omission of {report.total}"
    )
    return 0


def cmd_encode(args) -> int:
    caption = parse_tdc(args.tdc, duration=args.duration)
    if args.embeddings:
        embedder = PrecomputedEmbedder.from_file(args.embeddings)
    else:
        embedder = HashingTextEmbedder(dim=args.dim)
    matrix = build_timestamp_matrix(caption, embedder, frame_duration=args.frame_ms / 1000.0)
    write_matrix(args.out, matrix)
    write_provenance(args.out, "encode", vars(args), [args.embeddings])
    print(f"wrote {matrix.frames}x{matrix.channels} matrix to {args.out}")
    return 0


def _load_toy_items(manifest_path, cond_dim: int):
    """Latent-space training items from a toy manifest (see write_toy_dataset)."""
    records = read_manifest(manifest_path)
    embedder = HashingTextEmbedder(dim=cond_dim, seed=0)
    items, frame_seconds, frames, latent_dim = [], None, None, None
    for record in records:
        latent, fs, duration = read_latent(resolve_audio_path(manifest_path, record))
        frame_seconds = fs if frame_seconds is None else frame_seconds
        frames, latent_dim = latent.shape
        descriptions = record.extra.get("descriptions")
        if descriptions is None:
            descriptions = [e.description for e in record.tdc.events] if record.tdc else [record.tcc]
        caps = np.stack([embedder.embed(d) for d in descriptions])
        t_mat = None
        if record.tdc is not None:
            caption = TimedCaption(events=record.tdc.events, duration=duration)
            t_mat = build_timestamp_matrix(caption, embedder, fs).values
        items.append((record, TrainingItem(latent=latent, caption=caps, t_mat=t_mat)))
    return items, frame_seconds, frames, latent_dim


def cmd_train_toy(args) -> int:
    pipeline = load_config(args.config, {"seed": args.seed})
    pairs, frame_seconds, frames, latent_dim = _load_toy_items(args.manifest, args.cond_dim)
    if not pairs:
        raise TempogenError(f"{args.manifest}: no records")
    weak = [item for record, item in pairs if not record.is_strong]
    strong = [item for record, item in pairs if record.is_strong]
    if weak and strong:
        stream = mix_sampler(weak, strong, pipeline.mix_ratio, seed=pipeline.seed)
    else:
        pool = weak or strong
        rng = np.random.default_rng(pipeline.seed)

        def cycle(items=pool, rng=rng):
            while True:
                for i in rng.permutation(len(items)):
                    yield items[i]

        stream = cycle()

    config = DiTConfig(
        layers=args.layers, heads=args.heads, hidden=args.hidden,
        cond_dim=args.cond_dim, frames=frames, latent_dim=latent_dim,
        cfg_dropout=args.cfg_dropout,
    )
    model = DiT(config, rng=np.random.default_rng(pipeline.seed))
    losses = train(
        model, stream, steps=args.steps, batch_size=args.batch_size,
        lr=args.lr, weight_decay=args.weight_decay, seed=pipeline.seed + 1,
    )
    ckpt_config = dict(config.to_dict(), frame_seconds=frame_seconds)
    save_checkpoint(args.ckpt, model.state_arrays(), ckpt_config)
    write_provenance(args.ckpt, "train-toy", vars(args), [args.manifest, args.config])
    print(f"trained {args.steps} steps; loss {losses[0]:.4f} -> {losses[-1]:.4f}; saved {args.ckpt}")
    return 0


def _load_model(ckpt_path):
    arrays, config = load_checkpoint(ckpt_path)
    frame_seconds = config.pop("frame_seconds", 0.02)
    model = DiT(DiTConfig.from_dict(config), rng=np.random.default_rng(0))
    model.load_state_arrays(arrays)
    return model, frame_seconds


def cmd_sample(args) -> int:
    model, frame_seconds = _load_model(args.ckpt)
    duration = model.config.frames * frame_seconds
    embedder = HashingTextEmbedder(dim=model.config.cond_dim, seed=0)
    if args.tdc:
        caption = parse_tdc(args.tdc, duration=duration)
        caps = np.stack([embedder.embed(e.description) for e in caption.events])
        t_mat = build_timestamp_matrix(caption, embedder, frame_seconds).values
    else:
        table = PrecomputedEmbedder.from_file(args.tcc_embed)
        caps = np.stack([table.embed(text) for text in table.table])
        if caps.shape[1] != model.config.cond_dim:
            raise TempogenError(
                f"embedding dim {caps.shape[1]} != model cond_dim {model.config.cond_dim}"
            )
        t_mat = None
    latents = cfg_sample(
        model, [caps], [t_mat], steps=args.steps, scale=args.scale,
        rng=np.random.default_rng(args.seed),
    )
    write_latent(args.out, latents[0], frame_seconds, duration)
    write_provenance(args.out, "sample", vars(args), [args.ckpt, args.tcc_embed])
    print(f"wrote latent {latents[0].shape} to {args.out}")
    return 0


def _annotations_from_manifest(path):
    annotations = []
    for record in read_manifest(path):
        if record.tdc is None:
            raise TempogenError(f"{path}: record {record.audio_path} has no tdc")
        annotations.append(record.tdc)
    return annotations


def cmd_eval(args) -> int:
    refs = _annotations_from_manifest(args.ref_manifest)
    hyps = _annotations_from_manifest(args.hyp_manifest)
    if len(refs) != len(hyps):
        raise TempogenError(
            f"manifest lengths differ: {len(refs)} references vs {len(hyps)} hypotheses"
        )
    summary = evaluate_set(zip(refs, hyps), segment_length=args.segment_sec)
    payload = summary.to_json()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_provenance(args.report, "eval", vars(args),
                         [args.ref_manifest, args.hyp_manifest])
    me = summary.multi_event.f1 if summary.multi_event else None
    print(f"Seg-F1: {summary.overall.f1:.4f}"
          + (f"  Seg-F1-ME: {me:.4f}" if me is not None else "  (no multi-event records)"))
    return 0


def cmd_eval_latents(args) -> int:
    model, frame_seconds = _load_model(args.ckpt)
    templates = load_templates(args.templates)
    duration = model.config.frames * frame_seconds
    embedder = HashingTextEmbedder(dim=model.config.cond_dim, seed=0)

    records = read_manifest(args.test_manifest)
    caps, mats, references = [], [], []
    for record in records:
        if record.tdc is None:
            raise TempogenError(f"record {record.audio_path} has no tdc")
        caption = TimedCaption(events=record.tdc.events, duration=duration)
        caps.append(np.stack([embedder.embed(e.description) for e in caption.events]))
        mats.append(build_timestamp_matrix(caption, embedder, frame_seconds).values)
        labels = record.extra.get("labels", [e.description for e in caption.events])
        from .captions import Annotation

        items = [
            (label, iv)
            for label, event in zip(labels, caption.events)
            for iv in event.intervals
        ]
        references.append(Annotation(items=items, duration=duration))

    latents = cfg_sample(model, caps, mats, steps=args.steps, scale=args.scale,
                         rng=np.random.default_rng(args.seed))
    pairs = []
    for reference, latent in zip(references, latents):
        hypothesis = detect_latent_events(
            latent, templates, threshold=args.threshold, frame_duration=frame_seconds
        )
        pairs.append((reference, hypothesis))
    summary = evaluate_set(pairs, segment_length=args.segment_sec)
    payload = summary.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_provenance(args.out, "eval-latents", vars(args),
                         [args.ckpt, args.test_manifest, args.templates])
    me = summary.multi_event.f1 if summary.multi_event else None
    print(f"Seg-F1: {summary.overall.f1:.4f}"
          + (f"  Seg-F1-ME: {me:.4f}" if me is not None else ""))
    return 0


def cmd_ablate(args) -> int:
    config = AblationConfig(seed=args.seed, n_seeds=args.n_seeds)
    if args.steps:
        config.train_steps = args.steps
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(seed, arm, f1):
        print(f"  seed {seed}  {arm:<9} Seg-F1 {f1:.3f}", flush=True)

    report = run_ablation(config, progress=progress)
    print(report.format_table())

    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_provenance(report_path, "ablate", vars(args), [])

    # Materialize the first seed's data so train-toy / eval-latents can rerun
    # the experiment from files.
    data = make_seed_data(config, config.seed)
    save_templates(out_dir / "templates.json", data.templates)
    write_toy_dataset(
        data.sim_strong + data.real_strong + data.real_weak,
        out_dir / "train", config.frame_duration,
    )
    write_toy_dataset(data.eval_records, out_dir / "eval", config.frame_duration)
    write_provenance(out_dir / "templates.json", "ablate", vars(args), [])
    print(f"report and first-seed datasets written under {out_dir}")
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempogen",
        description="Temporally controllable audio generation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"tempogen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize multi-event scenes from an event bank")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bank", required=True, help="event bank JSONL")
    p.add_argument("--mapping", required=True, help="label-to-descriptions JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--disjoint-only", action="store_true")
    p.add_argument("--max-events", type=int, default=4)
    p.add_argument("--clip-seconds", type=float, default=10.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="curate grounded real data into strong records")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groundings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("encode", help="timestamp matrix from timed-caption text")
    p.add_argument("--tdc", required=True)
    p.add_argument("--frame-ms", type=float, default=20.0)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--embeddings", default=None, help="precomputed embeddings JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train-toy", help="train a toy model on a latent manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None, help="pipeline config TOML")
    p.add_argument("--steps", type=int, default=350)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--hidden", type=int, default=48)
    p.add_argument("--cond-dim", type=int, default=16)
    p.add_argument("--cfg-dropout", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--weight-decay", type=float, default=1e-6)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("sample", help="generate a latent clip from a checkpoint")
    p.add_argument("--ckpt", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--tdc", help="timed-caption text conditioning")
    group.add_argument("--tcc-embed", help="precomputed caption embedding JSONL (weak path)")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--scale", type=float, default=7.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="segment-F1 between two annotated manifests")
    p.add_argument("--ref-manifest", required=True)
    p.add_argument("--hyp-manifest", required=True)
    p.add_argument("--segment-sec", type=float, default=1.0)
    p.add_argument("--report", default=None, help="write EvalResult JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-latents", help="end-to-end toy eval of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--templates", required=True)
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--scale", type=float, default=3.0)
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--segment-sec", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_latents)

    p = sub.add_parser("ablate", help="three-arm toy experiment with margins")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-seeds", type=int, default=3)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out-dir", default="ablation")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TempogenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
