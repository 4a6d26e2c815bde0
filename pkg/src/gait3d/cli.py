"""Command-line entry point for the whole workflow.

    gait3d synth      --subjects 10 --sequences 12 --seed 42 --out data/
    gait3d preprocess --manifest data/manifest.tsv --out prep/
    gait3d stages     --sequence data/001/NM-01/090 --out stages/
    gait3d train      --manifest data/manifest.tsv --out run/
    gait3d eval       --model run/model.g3dc --manifest data/manifest.tsv
    gait3d predict    --model run/model.g3dc --sequence data/001/NM-01/090
    gait3d compare    --manifest data/manifest.tsv --out cmp/

Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage error.
Every numeric setting can come from a `key = value` config file (--config);
explicit flags override file values, and the fully resolved configuration is
echoed into the run's output directory for the record.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import imageio, segmentation, skeleton, synthgait
from .dataset import Manifest, build_clips, preprocess_sequence, split_dataset
from .errors import DatasetError, GaitError, ParameterError
from .neural import default_model_spec, load_model, save_model
from .pipeline import (
    INPUT_MODES,
    TrainConfig,
    compare_modes,
    evaluate,
    mode_transform,
    predict,
    prepare_clips,
    train,
)

log = logging.getLogger(__name__)

_CONVERTERS = {
    "clip_len": int,
    "stride": int,
    "epochs": int,
    "learning_rate": float,
    "batch_size": int,
    "split_ratio": float,
    "seed": int,
    "input_mode": str,
    "threshold": int,
    "min_area_frac": float,
    "out_h": int,
    "out_w": int,
    "threads": int,
}


def read_config_file(path) -> dict[str, str]:
    """Line-oriented `key = value` settings; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected `key = value`")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ParameterError(f"{path}:{lineno}: unknown setting {key!r}")
        values[key] = value
    return values


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """Defaults <- config file <- explicit flags, with type checking."""
    merged = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    merged["threads"] = os.cpu_count() or 1
    if getattr(args, "config", None):
        for key, raw in read_config_file(args.config).items():
            try:
                merged[key] = _CONVERTERS[key](raw)
            except ValueError as exc:
                raise ParameterError(f"config value {key} = {raw!r}: {exc}") from exc
    for key in _CONVERTERS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return TrainConfig(**merged)


def echo_config(config: TrainConfig, out_dir: Path, extra: dict | None = None) -> None:
    lines = [f"{key} = {getattr(config, key)}" for key in sorted(_CONVERTERS)]
    for key, value in sorted((extra or {}).items()):
        lines.append(f"{key} = {value}")
    (out_dir / "config.resolved").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _add_config_flags(p: argparse.ArgumentParser, training: bool = True) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value settings file")
    p.add_argument("--seed", type=int, help="root seed for every random choice")
    p.add_argument("--threads", type=int, help="worker threads for preprocessing")
    p.add_argument("--threshold", type=int, help="background subtraction threshold")
    p.add_argument("--min-area-frac", type=float, help="min component area, frame fraction")
    p.add_argument("--out-h", type=int, help="silhouette height")
    p.add_argument("--out-w", type=int, help="silhouette width")
    p.add_argument("--clip-len", type=int, help="frames per clip")
    if training:
        p.add_argument("--stride", type=int, help="clip window stride")
        p.add_argument("--epochs", type=int, help="training epochs")
        p.add_argument("--learning-rate", type=float, help="SGD learning rate")
        p.add_argument("--batch-size", type=int, help="clips per SGD step")
        p.add_argument("--split-ratio", type=float, help="train fraction per subject")
        p.add_argument("--input-mode", choices=INPUT_MODES, help="network input variant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gait3d",
        description="Gait-based person identification on silhouette or skeleton clips.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--sequences", type=int, default=12, help="sequences per subject")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--statuses", default="NM,NM,CL,BG",
                   help="comma list cycled over takes (NM, CL, BG)")
    p.add_argument("--frames", type=int, default=20, help="walker frames per sequence")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="extract silhouettes and skeletons to disk")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p, training=False)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stages", help="dump every preprocessing stage of one sequence")
    p.add_argument("--sequence", required=True, help="directory of frame_*.pgm files")
    p.add_argument("--out", required=True)
    p.add_argument("--background", help="explicit background image (default: frame 0)")
    _add_config_flags(p, training=False)
    p.set_defaults(func=cmd_stages)

    p = sub.add_parser("train", help="train a classifier on a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on the held-out split")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="optional directory for eval.txt")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--sequence", required=True, help="directory of frame_*.pgm files")
    p.add_argument("--start", type=int, default=0, help="first silhouette of the clip")
    p.add_argument("--background", help="explicit background image (default: frame 0)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="train under both input modes and report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    return parser


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_frames(seq_dir: Path) -> list[np.ndarray]:
    if not seq_dir.is_dir():
        raise DatasetError(f"sequence directory not found: {seq_dir}")
    paths = sorted(seq_dir.glob("frame_*.pgm")) + sorted(seq_dir.glob("frame_*.png"))
    if not paths:
        raise DatasetError(f"no frame_* images in {seq_dir}")
    return [imageio.read_gray(p) for p in paths]


def cmd_synth(args) -> int:
    statuses = tuple(s.strip().upper() for s in args.statuses.split(",") if s.strip())
    out = _out_dir(args.out)
    manifest = synthgait.generate_dataset(
        n_subjects=args.subjects,
        sequences_per_subject=args.sequences,
        statuses=statuses,
        seed=args.seed,
        out_root=out,
        n_frames=args.frames,
    )
    print(f"wrote {len(manifest.records)} sequences under {out} (manifest.tsv)")
    return 0


def cmd_preprocess(args) -> int:
    config = resolve_config(args)
    manifest = Manifest.load(args.manifest)
    manifest.validate()
    out = _out_dir(args.out)
    echo_config(config, out, {"manifest": args.manifest})
    total = 0
    for record in manifest.records:
        frames = [imageio.read_gray(p) for p in manifest.frame_paths(record)]
        pairs = preprocess_sequence(
            frames,
            threshold=config.threshold,
            min_area_frac=config.min_area_frac,
            out_h=config.out_h,
            out_w=config.out_w,
            with_indices=True,
        )
        seq_out = out / record.sequence_dir
        seq_out.mkdir(parents=True, exist_ok=True)
        for k, sil in pairs:
            imageio.write_mask(seq_out / f"{k:04d}_sil.pgm", sil)
            imageio.write_mask(seq_out / f"{k:04d}_skel.pgm", skeleton.thin(sil))
        total += len(pairs)
    print(f"wrote silhouettes and skeletons for {total} frames under {out}")
    return 0


def cmd_stages(args) -> int:
    config = resolve_config(args)
    seq_dir = Path(args.sequence)
    frames = _load_frames(seq_dir)
    if args.background:
        background = imageio.read_gray(args.background)
        start = 0
    else:
        background, frames = frames[0], frames[1:]
        start = 1
    out = _out_dir(args.out)
    echo_config(config, out, {"sequence": str(seq_dir)})
    min_area = max(1, int(round(config.min_area_frac * background.size)))
    prev_box = None
    written = 0
    for k, frame in enumerate(frames, start=start):
        raw = segmentation.background_subtract(frame, background, config.threshold)
        den = segmentation.denoise(raw)
        boxes = segmentation.component_boxes(den, min_area)
        box = segmentation.select_tracked(boxes, prev_box)
        if box is None:
            log.warning("frame %d: nothing detected; skipped", k)
            continue
        prev_box = box
        sil = segmentation.extract_silhouette(den, box, config.out_h, config.out_w)
        imageio.write_gray(out / f"{k:04d}_gray.pgm", frame)
        imageio.write_mask(out / f"{k:04d}_mask.pgm", raw)
        imageio.write_mask(out / f"{k:04d}_denoised.pgm", den)
        imageio.write_mask(out / f"{k:04d}_sil.pgm", sil)
        imageio.write_mask(out / f"{k:04d}_skel.pgm", skeleton.thin(sil))
        written += 1
    print(f"wrote 5 stage images for each of {written} frames under {out}")
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args)
    manifest = Manifest.load(args.manifest)
    manifest.validate()
    out = _out_dir(args.out)
    echo_config(config, out, {"manifest": args.manifest})
    train_records, test_records = split_dataset(manifest, config.split_ratio, config.seed)
    train_clips = prepare_clips(manifest, train_records, config)
    test_clips = prepare_clips(manifest, test_records, config)
    n_classes = len(manifest.subjects())
    spec = default_model_spec(
        n_classes, input_shape=(1, config.clip_len, config.out_h, config.out_w)
    )
    params, metrics = train(spec, train_clips, test_clips, config)
    save_model(params, spec, out / "model.g3dc")
    metrics.save(out / "metrics.csv")
    last = metrics.rows[-1]
    print(
        f"trained {config.epochs} epochs on {len(train_clips)} clips "
        f"({config.input_mode}); final val_acc {last[5]:.4f}; wrote {out}/model.g3dc"
    )
    return 0


def cmd_eval(args) -> int:
    config = resolve_config(args)
    params, spec = load_model(args.model)
    manifest = Manifest.load(args.manifest)
    manifest.validate()
    _, test_records = split_dataset(manifest, config.split_ratio, config.seed)
    test_clips = prepare_clips(manifest, test_records, config)
    m = evaluate(params, spec, test_clips)
    line = f"val_loss {m.loss:.12g}  val_acc {m.accuracy:.12g}  val_mae {m.mae:.12g}"
    print(line)
    if args.out:
        out = _out_dir(args.out)
        echo_config(config, out, {"manifest": args.manifest, "model": args.model})
        (out / "eval.txt").write_text(line + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    config = resolve_config(args)
    params, spec = load_model(args.model)
    frames = _load_frames(Path(args.sequence))
    background = imageio.read_gray(args.background) if args.background else None
    silhouettes = preprocess_sequence(
        frames,
        threshold=config.threshold,
        min_area_frac=config.min_area_frac,
        out_h=config.out_h,
        out_w=config.out_w,
        background=background,
    )
    transform = mode_transform(config.input_mode)
    masks = [transform(m) for m in silhouettes]
    if args.start < 0 or args.start + config.clip_len > len(masks):
        raise ParameterError(
            f"clip [{args.start}, {args.start + config.clip_len}) outside the "
            f"{len(masks)} usable frames"
        )
    clips = build_clips(
        masks[args.start : args.start + config.clip_len], config.clip_len, 1
    )
    subject, probs = predict(params, spec, clips[0])
    print(f"subject {subject}")
    print("probs " + " ".join(f"{p:.6f}" for p in probs))
    return 0


def cmd_compare(args) -> int:
    config = resolve_config(args)
    manifest = Manifest.load(args.manifest)
    manifest.validate()
    out = _out_dir(args.out)
    echo_config(config, out, {"manifest": args.manifest})
    report = compare_modes(manifest, None, config)
    for mode, result in report.results.items():
        result.log.save(out / f"metrics_{mode}.csv")
        save_model(result.params, result.spec, out / f"model_{mode}.g3dc")
    text = report.render()
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GAIT3D_LOGLEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GaitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
