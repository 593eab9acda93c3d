"""Command-line entry point wiring every pipeline stage.

Subcommands: synth, ingest, preprocess, train, generate, evaluate,
study serve, study analyze. Everything is driven by a JSON run-config file
(unknown keys rejected) plus a seed; flags can override scalar values.
Log verbosity comes from the NVBGEN_LOG environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys

import numpy as np
import torch

from .features import (
    BEHAVIOR_FEATURES,
    SPEECH_FEATURES,
    NormStats,
    behavior_track,
    denormalize_matrix,
    normalize_matrix,
)
from .ingest import (
    add_derivatives,
    attach_speaking_flag,
    downsample_speech,
    export_track_csv,
    load_corpus,
    parse_opensmile_csv,
    read_turns_csv,
)
from .metrics import build_report
from .models import ArchConfig, load_checkpoint, make_noise
from .preprocess import (
    OutlierPolicy,
    assign_splits,
    load_clips,
    preprocess_pair,
    save_clips,
    segment,
)
from .synthetic import SynthConfig, export_corpus
from .training import TrainConfig, train
from .study import RecordStore, StudyConfig, analyze_records, format_analysis
from .study_service import serve

log = logging.getLogger("nvbgen")


def _from_dict(cls, payload: dict, context: str):
    """Build a config dataclass, rejecting unknown keys."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ValueError(f"{context}: unknown keys {unknown}")
    converted = dict(payload)
    for f in dataclasses.fields(cls):
        if f.name in converted and isinstance(converted[f.name], list):
            converted[f.name] = tuple(converted[f.name])
    return cls(**converted)


DEFAULT_STUDY = {
    "sequences": ["seq1", "seq2", "seq3", "seq4"],
    "conditions": ["GTS", "m1", "m2", "m3"],
    "video_uri_template": "/videos/{criterion}_{sequence}_{condition}.mp4",
    "host": "127.0.0.1",
    "port": 8000,
}

DEFAULT_PREPROCESS = {
    "median_window": 7,
    "segment_length": 100,
    "stride": None,
    "test_fraction": 0.25,
    "remove_outliers": True,
    "smooth": True,
    "center": True,
    "clamp": True,
}

_SECTIONS = ("seed", "paths", "synth", "outliers", "preprocess", "arch",
             "train", "evaluate", "study")

_PATH_KEYS = ("corpus_dir", "ingested_dir", "clips_dir", "checkpoints_dir",
              "reports_dir", "records_store", "videos_dir", "frontend_dir")


class RunConfig:
    """Structured run configuration backing every subcommand."""

    def __init__(self, payload: dict, out_dir: str, seed_override=None):
        unknown = sorted(set(payload) - set(_SECTIONS))
        if unknown:
            raise ValueError(f"config: unknown sections {unknown}")
        self.seed = int(payload.get("seed", 0)) if seed_override is None else seed_override

        paths = dict(payload.get("paths", {}))
        unknown = sorted(set(paths) - set(_PATH_KEYS))
        if unknown:
            raise ValueError(f"config.paths: unknown keys {unknown}")
        defaults = {
            "corpus_dir": os.path.join(out_dir, "corpus"),
            "ingested_dir": os.path.join(out_dir, "ingested"),
            "clips_dir": os.path.join(out_dir, "clips"),
            "checkpoints_dir": os.path.join(out_dir, "checkpoints"),
            "reports_dir": os.path.join(out_dir, "reports"),
            "records_store": os.path.join(out_dir, "records.jsonl"),
            "videos_dir": os.path.join(out_dir, "videos"),
            "frontend_dir": None,
        }
        defaults.update(paths)
        self.paths = defaults

        synth = dict(payload.get("synth", {}))
        synth.setdefault("seed", self.seed)
        self.synth = _from_dict(SynthConfig, synth, "config.synth")
        self.outliers = _from_dict(OutlierPolicy, payload.get("outliers", {}), "config.outliers")

        preprocess = dict(DEFAULT_PREPROCESS)
        unknown = sorted(set(payload.get("preprocess", {})) - set(DEFAULT_PREPROCESS))
        if unknown:
            raise ValueError(f"config.preprocess: unknown keys {unknown}")
        preprocess.update(payload.get("preprocess", {}))
        self.preprocess = preprocess

        self.arch = _from_dict(ArchConfig, payload.get("arch", {}), "config.arch")
        train_payload = dict(payload.get("train", {}))
        train_payload.setdefault("seed", self.seed)
        self.train = _from_dict(TrainConfig, train_payload, "config.train")

        evaluate = dict(payload.get("evaluate", {}))
        unknown = sorted(set(evaluate) - {"conditions", "split", "seed"})
        if unknown:
            raise ValueError(f"config.evaluate: unknown keys {unknown}")
        evaluate.setdefault("conditions", {})
        evaluate.setdefault("split", "test")
        evaluate.setdefault("seed", self.seed)
        self.evaluate = evaluate

        study = dict(DEFAULT_STUDY)
        unknown = sorted(set(payload.get("study", {}))
                         - (set(DEFAULT_STUDY) | {"video_uris", "seed"}))
        if unknown:
            raise ValueError(f"config.study: unknown keys {unknown}")
        study.update(payload.get("study", {}))
        study.setdefault("seed", self.seed)
        self.study = study

    def study_config(self) -> StudyConfig:
        sequences = tuple(self.study["sequences"])
        conditions = tuple(self.study["conditions"])
        uris = self.study.get("video_uris")
        if uris is None:
            template = self.study["video_uri_template"]
            uris = {
                (criterion, sequence, condition): template.format(
                    criterion=criterion, sequence=sequence, condition=condition
                )
                for criterion in ("believability", "coordination")
                for sequence in sequences
                for condition in conditions
            }
        else:
            uris = {tuple(k.split("/")): v for k, v in uris.items()}
        return StudyConfig(sequences=sequences, conditions=conditions, video_uris=uris)


def load_run_config(path, out_dir, seed_override=None) -> RunConfig:
    payload = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    return RunConfig(payload, out_dir, seed_override)


def cmd_synth(config: RunConfig, args) -> str:
    synth = config.synth
    if args.n_tracks is not None:
        synth = dataclasses.replace(synth, n_tracks=args.n_tracks)
    track_ids = export_corpus(synth, config.paths["corpus_dir"])
    return f"synth: wrote {len(track_ids)} track pairs to {config.paths['corpus_dir']}"


def cmd_ingest(config: RunConfig, args) -> str:
    corpus_dirs = config.paths["corpus_dir"]
    if isinstance(corpus_dirs, str):
        corpus_dirs = [corpus_dirs]
    out_dir = config.paths["ingested_dir"]
    os.makedirs(out_dir, exist_ok=True)
    count = 0
    for corpus_dir in corpus_dirs:
        for speech, behavior in load_corpus(corpus_dir):
            export_track_csv(speech, os.path.join(out_dir, f"{speech.source_id}_speech22.csv"))
            export_track_csv(behavior, os.path.join(out_dir, f"{behavior.source_id}_behavior28.csv"))
            count += 1
    return f"ingest: aligned {count} track pairs into {out_dir}"


def cmd_preprocess(config: RunConfig, args) -> str:
    from .features import compute_norm_stats

    corpus_dirs = config.paths["corpus_dir"]
    if isinstance(corpus_dirs, str):
        corpus_dirs = [corpus_dirs]
    pairs = []
    for corpus_dir in corpus_dirs:
        pairs.extend(load_corpus(corpus_dir))

    options = config.preprocess
    processed = []
    for speech, behavior in pairs:
        processed.append(preprocess_pair(
            speech, behavior,
            policy=config.outliers,
            median_window=options["median_window"],
            remove_outliers=options["remove_outliers"],
            smooth=options["smooth"],
            center=options["center"],
            clamp=options["clamp"],
        ))

    splits = assign_splits(
        [speech.source_id for speech, _ in processed],
        test_fraction=options["test_fraction"],
        rng=np.random.default_rng(config.seed),
    )
    clips = []
    for speech, behavior in processed:
        clips.extend(segment(speech, behavior, options["segment_length"], options["stride"]))

    train_tracks = [t for pair in processed for t in pair
                    if splits[pair[0].source_id] == "train"]
    if not train_tracks:
        raise ValueError("no training tracks after split assignment")
    stats = compute_norm_stats(train_tracks)
    save_clips(config.paths["clips_dir"], clips, splits, stats)
    n_train = sum(1 for c in clips if splits[c.source_id] == "train")
    n_test = len(clips) - n_train
    return (
        f"preprocess: {len(clips)} clips ({n_train} train / {n_test} test) "
        f"into {config.paths['clips_dir']}"
    )


def cmd_train(config: RunConfig, args) -> str:
    clips, _, stats = load_clips(config.paths["clips_dir"], split="train")
    if not clips:
        raise ValueError("no training clips found; run preprocess first")
    checkpoint_dir = config.paths["checkpoints_dir"]
    os.makedirs(checkpoint_dir, exist_ok=True)
    result = train(
        clips, stats, config.arch, config.train,
        checkpoint_dir=checkpoint_dir,
        log_path=os.path.join(checkpoint_dir, "losses.tsv"),
    )
    return (
        f"train: {result.steps} optimizer steps, "
        f"loss_g {result.initial_loss_g:.4f} -> {result.final_loss_g:.4f}, "
        f"final checkpoint {result.final_checkpoint}"
    )


def _generate_window(checkpoint, speech_window: np.ndarray, rng) -> np.ndarray:
    noise = make_noise(rng)
    speech_tensor = torch.from_numpy(speech_window).float()
    with torch.no_grad():
        out = checkpoint.generator(speech_tensor, noise.as_channels())
    return out.numpy().astype(float)


def generate_behavior(checkpoint, speech_data: np.ndarray, seed: int = 0) -> np.ndarray:
    """Normalize, window, generate, and denormalize a full speech track.

    The trailing remainder is padded with the final frame and trimmed after
    generation, so the output length always equals the input length.
    """
    window = checkpoint.arch.seq_len
    normalized = normalize_matrix(speech_data, SPEECH_FEATURES, checkpoint.stats)
    n = normalized.shape[0]
    n_windows = max(1, math.ceil(n / window))
    padded = np.concatenate(
        [normalized, np.tile(normalized[-1:], (n_windows * window - n, 1))]
    )
    rng = np.random.default_rng(seed)
    outputs = [
        _generate_window(checkpoint, padded[w * window:(w + 1) * window], rng)
        for w in range(n_windows)
    ]
    generated = np.concatenate(outputs)[:n]
    return denormalize_matrix(generated, BEHAVIOR_FEATURES, checkpoint.stats)


def cmd_generate(config: RunConfig, args) -> str:
    checkpoint = load_checkpoint(args.checkpoint)
    rows = parse_opensmile_csv(args.speech_csv)
    with_deltas = add_derivatives(rows)
    ts50 = np.array([r.timestamp for r in rows])
    values25, ts25 = downsample_speech(with_deltas, ts50)
    if args.turns:
        turns = read_turns_csv(args.turns)
    else:
        # without annotations the whole input counts as speaking
        turns = [(float(ts25[0]), float(ts25[-1]) + 1.0)]
    speech_data = attach_speaking_flag(values25, ts25, turns)
    generated = generate_behavior(checkpoint, speech_data, seed=config.seed)
    track = behavior_track(generated, source_id=os.path.basename(args.speech_csv))
    export_track_csv(track, args.out_csv)
    return f"generate: {generated.shape[0]} frames -> {args.out_csv}"


def cmd_evaluate(config: RunConfig, args) -> str:
    conditions_cfg = config.evaluate["conditions"]
    if not conditions_cfg:
        raise ValueError("config.evaluate.conditions is empty; map names to checkpoints")
    clips, clip_ids, stats = load_clips(
        config.paths["clips_dir"], split=config.evaluate["split"]
    )
    if not clips:
        raise ValueError(f"no clips in split {config.evaluate['split']!r}")

    ground_truth = {
        cid: behavior_track(clip.behavior, source_id=cid)
        for cid, clip in zip(clip_ids, clips)
    }
    conditions = {}
    for name, checkpoint_path in conditions_cfg.items():
        checkpoint = load_checkpoint(checkpoint_path)
        rng = np.random.default_rng(config.evaluate["seed"])
        generated = {}
        for cid, clip in zip(clip_ids, clips):
            normalized = normalize_matrix(clip.speech, SPEECH_FEATURES, checkpoint.stats)
            out = _generate_window(checkpoint, normalized, rng)
            denorm = denormalize_matrix(out, BEHAVIOR_FEATURES, checkpoint.stats)
            generated[cid] = behavior_track(denorm, source_id=cid)
        conditions[name] = generated

    report = build_report(conditions, ground_truth)
    os.makedirs(config.paths["reports_dir"], exist_ok=True)
    tsv_path = os.path.join(config.paths["reports_dir"], "objective_metrics.tsv")
    table_path = os.path.join(config.paths["reports_dir"], "objective_metrics.txt")
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_tsv())
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_table())
    return (
        f"evaluate: {len(report.conditions)} conditions over {report.n_clips} clips "
        f"-> {tsv_path}"
    )


def cmd_study_serve(config: RunConfig, args) -> str:
    study_config = config.study_config()
    server = serve(
        study_config,
        config.paths["records_store"],
        host=str(config.study["host"]),
        port=int(config.study["port"]) if args.port is None else args.port,
        videos_dir=config.paths["videos_dir"],
        frontend_dir=config.paths["frontend_dir"],
        seed=int(config.study["seed"]),
    )
    host, port = server.server_address[:2]
    print(f"study serve: listening on http://{host}:{port} "
          f"(records -> {config.paths['records_store']})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return "study serve: stopped"


def cmd_study_analyze(config: RunConfig, args) -> str:
    store = RecordStore(config.paths["records_store"])
    records = store.read_all()
    study_config = config.study_config()
    per_session = study_config.total_pages * len(study_config.conditions)
    analysis = analyze_records(records, total_records_per_session=per_session)
    text = format_analysis(analysis)
    os.makedirs(config.paths["reports_dir"], exist_ok=True)
    out_path = os.path.join(config.paths["reports_dir"], "study_analysis.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return f"study analyze: {analysis['n_records']} records -> {out_path}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvbgen",
        description="speech-driven non-verbal facial behavior generation pipeline",
    )
    parser.add_argument("--config", default=None, help="path to a JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default="runs", help="base directory for default paths")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate the synthetic corpus CSVs")
    synth.add_argument("--n-tracks", type=int, default=None)

    sub.add_parser("ingest", help="parse and align corpus CSVs, re-export canonical tracks")
    sub.add_parser("preprocess", help="clean tracks and cut training clips")
    sub.add_parser("train", help="run adversarial training on the train split")

    generate = sub.add_parser("generate", help="generate behavior for a speech CSV")
    generate.add_argument("checkpoint")
    generate.add_argument("speech_csv")
    generate.add_argument("out_csv")
    generate.add_argument("--turns", default=None, help="speaking-turn annotation CSV")

    sub.add_parser("evaluate", help="objective metrics report over the test split")

    study = sub.add_parser("study", help="perceptual study service and analysis")
    study_sub = study.add_subparsers(dest="study_command", required=True)
    serve_parser = study_sub.add_parser("serve", help="run the rating service")
    serve_parser.add_argument("--port", type=int, default=None)
    study_sub.add_parser("analyze", help="analyze persisted rating records")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("NVBGEN_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_run_config(args.config, args.out, args.seed)
        if args.command == "study":
            handler = cmd_study_serve if args.study_command == "serve" else cmd_study_analyze
            summary = handler(config, args)
        else:
            summary = COMMANDS[args.command](config, args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for stage errors
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
