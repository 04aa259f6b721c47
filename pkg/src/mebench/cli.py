"""Command-line entry point wiring the modules into reproducible runs.

Subcommands: manifest, flow, loso, prima-facie, gradcam, report. Every
run writes a provenance sidecar sufficient to replay it; all randomness
derives from one root seed fanned out by labeled derivation. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 internal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    CommandPredictor,
    Dataset,
    Gender,
    Manifest,
    RawEthnicity,
    SynthSpec,
    TablePredictor,
    annotate_attributes,
    apply_heuristic_corrections,
    build_manifest,
    finalize_mappings,
    ingest_dataset_index,
    load_ledger,
    load_manifest,
    save_manifest,
    summarize_distribution,
    synthesize_desk_corpus,
)
from .errors import ConfigError, DataError, MebenchError
from .flowcore import FlowParams, load_frame, read_flow_image
from .model import (
    EncoderConfig,
    FrozenEncoder,
    ModelConfig,
    ModelInputs,
    TrainConfig,
    Variant,
    extract_frozen_features,
    gradcam,
    load_checkpoint,
    save_checkpoint,
    train_fold,
    export_activation_map,
)
from .pipeline import (
    EMOTION_CLASSES,
    flow_image_path,
    load_train_samples,
    materialize_flow_images,
    sample_key,
)
from .protocol import ForestConfig, ScenarioKind, run_benchmark, run_prima_facie
from .runutil import atomic_write_text, derive_seed, hash_file, stable_hash

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MEBENCH_THREADS", "1")))
    except ValueError:
        return 1


def _write_provenance(out_dir: Path, command: str, payload: dict) -> None:
    payload = {
        "command": command,
        "package_version": __version__,
        **payload,
    }
    payload["provenance_hash"] = stable_hash(payload)
    atomic_write_text(out_dir / "provenance.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _deviations(flow_params: FlowParams | None = None, train: TrainConfig | None = None) -> dict:
    """Configured values for settings the source protocol leaves unstated."""
    out = {
        "encoders": "desk-scale conv / 2-block patch transformer instead of pretrained backbones",
    }
    if flow_params is not None:
        out["flow_solver"] = {
            "note": "variational solver parameters are a configuration choice",
            **flow_params.to_dict(),
        }
    if train is not None:
        out["training"] = {
            "note": "decay factor, batch size, and input resolution are configuration choices",
            "lr_gamma": train.lr_gamma,
            "batch_size": train.batch_size,
        }
    return out


# ------------------------------------------------------------------ manifest


def _load_predictor(args):
    if args.predictor_cmd:
        return CommandPredictor(args.predictor_cmd.split())
    table = {}
    if args.predictor_table:
        raw = json.loads(Path(args.predictor_table).read_text(encoding="utf-8"))
        for subject, entry in raw.items():
            if isinstance(entry, str):
                table[subject] = RawEthnicity(entry)
            else:
                table[subject] = (Gender(entry[0]), int(entry[1]), RawEthnicity(entry[2]))
        return TablePredictor(table)
    warnings.warn(
        "no predictor given; the default stub marks every subject Others/unknown "
        "(supply --predictor-table, --predictor-cmd, or correction rules)",
        stacklevel=2,
    )
    return TablePredictor({}, default=(Gender.UNKNOWN, 0, RawEthnicity.OTHERS))


def cmd_manifest(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.synth:
        spec = SynthSpec(
            subjects_per_group=args.subjects_per_group,
            clips_per_subject=args.clips_per_subject,
            image_size=args.image_size,
            shift_strength=args.shift_strength,
        )
        manifest, _truths = synthesize_desk_corpus(spec, seed=args.seed, out_dir=out_dir)
        print(f"synthesized {len(manifest.records)} clips under {out_dir}")
    else:
        if not (args.casme2 or args.samm):
            raise ConfigError("give --synth, or at least one of --casme2 / --samm")
        records = []
        if args.casme2:
            records += ingest_dataset_index(args.casme2, Dataset.CASME2)
        if args.samm:
            records += ingest_dataset_index(args.samm, Dataset.SAMM)

        predictor = _load_predictor(args)
        annotated = []
        by_subject = {}
        for rec in records:
            by_subject.setdefault(rec.subject_id, []).append(rec)
        from dataclasses import replace

        for subject, recs in sorted(by_subject.items()):
            try:
                attrs = annotate_attributes(load_frame(recs[0].apex_path), predictor, subject)
            except DataError as exc:
                if args.on_annotation_error == "fail":
                    raise
                print(f"warning: {exc}; subject left unannotated", file=sys.stderr)
                attrs = None
            for rec in recs:
                if attrs is None:
                    annotated.append(
                        replace(rec, raw_ethnicity=RawEthnicity.OTHERS, gender=Gender.UNKNOWN, age=0)
                    )
                else:
                    annotated.append(
                        replace(
                            rec,
                            raw_ethnicity=attrs.raw_ethnicity,
                            gender=attrs.gender,
                            age=attrs.age,
                        )
                    )

        ledger = []
        ledger_hash = ""
        if args.ledger:
            if Path(args.ledger).exists():
                ledger = load_ledger(args.ledger)
                ledger_hash = hash_file(args.ledger)
            else:
                warnings.warn(f"ledger {args.ledger} not found; continuing with an empty ledger", stacklevel=2)
        corrected, audit = apply_heuristic_corrections(annotated, ledger)
        if audit:
            audit_lines = [json.dumps(vars(entry), sort_keys=True) for entry in audit]
            atomic_write_text(out_dir / "correction_audit.jsonl", "\n".join(audit_lines) + "\n")
            print(f"applied {len(audit)} corrections (audit log written)")

        final_records = finalize_mappings(corrected)
        manifest = build_manifest(
            final_records,
            provenance={
                "seed": args.seed,
                "predictor": getattr(predictor, "name", "unknown"),
                "ledger_hash": ledger_hash,
            },
        )
        save_manifest(manifest, out_dir / "manifest.jsonl")

    report = summarize_distribution(manifest)
    print("\n".join(report.to_lines()))
    _write_provenance(
        out_dir,
        "manifest",
        {
            "seed": args.seed,
            "synth": bool(args.synth),
            "manifest_hash": hash_file(out_dir / "manifest.jsonl"),
            "deviations": _deviations(),
        },
    )
    return EXIT_OK


# ------------------------------------------------------------------ flow


def _flow_params(args) -> FlowParams:
    return FlowParams(
        smoothness_alpha=args.alpha,
        iterations=args.iterations,
        pyramid_levels=args.levels,
        pyramid_scale=args.scale,
        zero_init=not args.coarse_init,
    )


def cmd_flow(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    params = _flow_params(args)
    stats = materialize_flow_images(manifest, params, out_dir, force=args.force, workers=_workers())
    fractions = np.array(list(stats.clip_fractions.values())) if stats.clip_fractions else np.zeros((1, 3))
    print(
        f"flow images: {stats.computed} computed, {stats.cached} cached "
        f"(clip fraction mean fx={fractions[:, 0].mean():.4f} fy={fractions[:, 1].mean():.4f} "
        f"strain={fractions[:, 2].mean():.4f}, max={fractions.max():.4f})"
    )
    _write_provenance(
        out_dir,
        "flow",
        {
            "manifest": str(args.manifest),
            "manifest_hash": hash_file(args.manifest),
            "flow_params": params.to_dict(),
            "flow_params_hash": stable_hash(params.to_dict()),
            "deviations": _deviations(flow_params=params),
        },
    )
    return EXIT_OK


# ------------------------------------------------------------------ loso


def _model_config(args) -> ModelConfig:
    return ModelConfig.small(image_size=args.image_size, feature_dim=args.feature_dim)


def cmd_loso(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        variants = [Variant(v.strip()) for v in args.variants.split(",")]
    except ValueError as exc:
        raise ConfigError(f"unknown variant: {exc}") from exc
    model_config = _model_config(args)
    train_config = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, base_lr=args.lr, lr_gamma=args.lr_gamma
    )
    checkpoint_dir = None if args.no_resume else out_dir / "folds"
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    report = run_benchmark(
        manifest,
        variants,
        model_config,
        train_config,
        args.flow_dir,
        seed=args.seed,
        checkpoint_dir=checkpoint_dir,
        workers=_workers(),
    )
    atomic_write_text(out_dir / "benchmark.tsv", report.to_tsv() + "\n")
    atomic_write_text(out_dir / "benchmark.md", report.to_markdown() + "\n")
    atomic_write_text(
        out_dir / "benchmark.json", json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    )
    print(report.to_markdown())

    # full-data checkpoint per variant, for activation-map analysis
    for variant in variants:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            samples = load_train_samples(manifest.eligible(), args.flow_dir, need_rgb=variant.needs_rgb)
            params, _ = train_fold(
                samples, model_config, variant, train_config, derive_seed(args.seed, "full", variant.value)
            )
        save_checkpoint(out_dir / f"model_{variant.value}.meck", params, model_config, variant)

    _write_provenance(
        out_dir,
        "loso",
        {
            "manifest": str(args.manifest),
            "manifest_hash": hash_file(args.manifest),
            "seed": args.seed,
            "variants": [v.value for v in variants],
            "model": model_config.to_dict(),
            "train": train_config.to_dict(),
            "report_hash": report.provenance_hash,
            "deviations": _deviations(train=train_config),
        },
    )
    return EXIT_OK


# ------------------------------------------------------------------ prima facie


def cmd_prima_facie(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.encoder_file:
        encoder = FrozenEncoder.from_file(args.encoder_file)
    else:
        encoder = FrozenEncoder.random_fallback(
            EncoderConfig(feature_dim=args.feature_dim), seed=derive_seed(args.seed, "frozen-encoder")
        )
    features = {}
    for record in manifest.eligible():
        image = read_flow_image(flow_image_path(args.flow_dir, record))
        features[sample_key(record)] = extract_frozen_features(image.as_array(), encoder)

    try:
        kinds = [ScenarioKind(k.strip()) for k in args.scenarios.split(",")] if args.scenarios else None
    except ValueError as exc:
        raise ConfigError(f"unknown scenario: {exc}") from exc
    forest_config = ForestConfig(n_trees=args.trees, max_depth=args.depth)
    seeds = [derive_seed(args.seed, "prima-facie", i) for i in range(args.seeds)]
    report = run_prima_facie(
        manifest,
        features,
        seeds=seeds,
        forest_config=forest_config,
        scenario_kinds=kinds,
        subject_budget=args.budget,
        encoder_origin=encoder.origin,
    )
    atomic_write_text(out_dir / "prima_facie.tsv", report.to_tsv() + "\n")
    atomic_write_text(out_dir / "prima_facie.md", report.to_markdown() + "\n")
    atomic_write_text(
        out_dir / "prima_facie.json", json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    )
    print(report.to_markdown())
    _write_provenance(
        out_dir,
        "prima-facie",
        {
            "manifest": str(args.manifest),
            "manifest_hash": hash_file(args.manifest),
            "seed": args.seed,
            "n_seeds": args.seeds,
            "budget": args.budget,
            "forest": forest_config.to_dict(),
            "encoder": encoder.origin,
            "report_hash": report.provenance_hash,
            "deviations": {
                **_deviations(),
                "frozen_features": "deterministic random-feature fallback unless --encoder-file is given",
            },
        },
    )
    return EXIT_OK


# ------------------------------------------------------------------ gradcam


def cmd_gradcam(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params, model_config, variant, _extra = load_checkpoint(args.checkpoint)
    class_filter = [c.strip() for c in args.classes.split(",")]
    for name in class_filter:
        if name not in EMOTION_CLASSES:
            raise ConfigError(f"unknown class {name!r}; choose from {EMOTION_CLASSES}")

    sidecar_lines = []
    n_maps = 0
    for record in manifest.eligible():
        emotion_name = {"Negative": "Negative", "Positive": "Positive", "Surprise": "Surprise"}[
            record.mapped_emotion.value
        ]
        if emotion_name not in class_filter:
            continue
        image = read_flow_image(flow_image_path(args.flow_dir, record))
        inputs = ModelInputs(flow=image.as_array()[None])
        amap = gradcam(
            params,
            model_config,
            variant,
            inputs,
            EMOTION_CLASSES.index(emotion_name),
            branch=args.branch,
        )
        group_dir = out_dir / record.mapped_ethnicity.value / emotion_name
        stem = f"{record.dataset.value}_{record.subject_id}_{record.clip_id}"
        export_activation_map(
            amap,
            group_dir / f"{stem}.pgm",
            group_dir / f"{stem}.json",
            meta={"subject": record.subject_id, "clip": record.clip_id, "emotion": emotion_name},
        )
        sidecar_lines.append(
            json.dumps(
                {
                    "sample": stem,
                    "ethnicity": record.mapped_ethnicity.value,
                    "class": emotion_name,
                    "branch": amap.branch,
                    "argmax_x": amap.argmax_xy[0],
                    "argmax_y": amap.argmax_xy[1],
                },
                sort_keys=True,
            )
        )
        n_maps += 1
    atomic_write_text(out_dir / "maps.jsonl", "\n".join(sidecar_lines) + ("\n" if sidecar_lines else ""))
    print(f"wrote {n_maps} activation maps grouped by ethnicity under {out_dir}")
    _write_provenance(
        out_dir,
        "gradcam",
        {
            "manifest": str(args.manifest),
            "manifest_hash": hash_file(args.manifest),
            "checkpoint": str(args.checkpoint),
            "checkpoint_hash": hash_file(args.checkpoint),
            "classes": class_filter,
            "branch": args.branch,
            "deviations": _deviations(),
        },
    )
    return EXIT_OK


# ------------------------------------------------------------------ report


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise DataError(f"run directory not found: {run_dir}")
    sidecars = sorted(run_dir.rglob("provenance.json"))
    if not sidecars:
        raise DataError(f"no provenance sidecars under {run_dir}; refusing to report unattributed artifacts")

    lines = ["# Run report", ""]
    for sidecar in sidecars:
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
        rel = sidecar.parent.relative_to(run_dir)
        lines.append(f"## {payload.get('command', '?')} ({rel if str(rel) != '.' else 'run root'})")
        lines.append("")
        lines.append(f"- provenance hash: `{payload.get('provenance_hash', '')}`")
        for key in ("manifest_hash", "flow_params_hash", "report_hash", "checkpoint_hash", "seed"):
            if key in payload:
                lines.append(f"- {key}: `{payload[key]}`")
        deviations = payload.get("deviations", {})
        if deviations:
            lines.append("- configured deviations:")
            for key, value in sorted(deviations.items()):
                lines.append(f"  - {key}: {json.dumps(value, sort_keys=True)}")
        lines.append("")
        for artifact in ("benchmark.md", "prima_facie.md"):
            artifact_path = sidecar.parent / artifact
            if artifact_path.exists():
                lines.append(artifact_path.read_text(encoding="utf-8").rstrip())
                lines.append("")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"report written to {args.out}")
    else:
        print(text)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mebench",
        description="Desk-scale workbench for ethnicity-aware micro-expression recognition",
    )
    parser.add_argument("--version", action="version", version=f"mebench {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("manifest", help="build the annotated joint manifest (or a synthetic corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--casme2", help="CASME2 index table (csv/tsv)")
    p.add_argument("--samm", help="SAMM index table (csv/tsv)")
    p.add_argument("--ledger", help="correction-ledger file (one JSON rule per line)")
    p.add_argument("--predictor-table", help="JSON file: subject -> ethnicity or [gender, age, ethnicity]")
    p.add_argument("--predictor-cmd", help="external predictor command (PGM path appended)")
    p.add_argument("--on-annotation-error", choices=("fail", "skip"), default="fail")
    p.add_argument("--synth", action="store_true", help="generate the synthetic desk corpus instead")
    p.add_argument("--subjects-per-group", type=int, default=4)
    p.add_argument("--clips-per-subject", type=int, default=3)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--shift-strength", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("flow", help="materialize optical flow images (OFI1) for every sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="recompute even when cached")
    p.add_argument("--alpha", type=float, default=15.0)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--scale", type=float, default=0.5)
    p.add_argument("--coarse-init", action="store_true", help="integer-shift init instead of zero init")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("loso", help="LOSO benchmark over model variants")
    p.add_argument("--manifest", required=True)
    p.add_argument("--flow-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--variants",
        default="motion_only,dual_motion",
        help="comma list of: motion_only,dual_motion,motion_plus_rgb_conv,motion_plus_rgb_patch",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-gamma", type=float, default=0.9)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--no-resume", action="store_true", help="ignore fold checkpoints")
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("prima-facie", help="mono- vs mixed-ethnicity frozen-feature study")
    p.add_argument("--manifest", required=True)
    p.add_argument("--flow-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=5, help="number of sampling seeds")
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--budget", type=int, default=16, help="subjects per scenario")
    p.add_argument("--scenarios", help="comma list of AsianOnly,NonAsianOnly,Mixed (default all)")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--encoder-file", help="frozen-encoder checkpoint instead of the random fallback")
    p.set_defaults(func=cmd_prima_facie)

    p = sub.add_parser("gradcam", help="activation maps grouped by ethnicity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--flow-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="Positive,Surprise")
    p.add_argument("--branch", default="fusion", choices=("emotion", "ethnicity", "fusion"))
    p.set_defaults(func=cmd_gradcam)

    p = sub.add_parser("report", help="consolidated markdown report for a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
