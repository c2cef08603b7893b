"""Command-line entry point: generate, oracle-pred, eval, render.

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 data-format
error. All configuration is validated before any files are touched.
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from pathlib import Path

import numpy as np

from .dataset_io import (
    DatasetManifest,
    LabelParseError,
    RenderSettings,
    read_label_file,
    render_scene,
    split_counts,
    write_dataset,
    write_label_file,
)
from .channel import NoiseModel
from .evaluator import map_metrics
from .scene_model import (
    CLASS_NAMES,
    ConfigurationError,
    Scenario,
    SceneConfig,
    mix_seed,
    sample_scene,
    scene_from_dict,
)
from .spectro import StftConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3

_CLASS_COLORS = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; remap to the documented
    # usage-error code by raising instead.
    def error(self, message):
        raise _UsageError(message)


def _add_stft_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stft-window", default="hann",
                   choices=("hann", "hamming", "rectangular"))
    p.add_argument("--stft-window-length", type=int, default=256)
    p.add_argument("--stft-fft-size", type=int, default=256)
    p.add_argument("--stft-hop", type=int, default=64)


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    _add_stft_flags(p)
    p.add_argument("--image-size", type=int, default=640)
    p.add_argument("--dynamic-range", type=float, default=60.0,
                   help="dB span kept below the spectrogram peak")
    p.add_argument("--colormap", default="viridis")
    p.add_argument("--noise-sigma2", type=float, default=1.0,
                   help="AWGN per-sample variance")


def _settings_from_args(args) -> RenderSettings:
    return RenderSettings(
        stft=StftConfig(window=args.stft_window,
                        window_length=args.stft_window_length,
                        fft_size=args.stft_fft_size,
                        hop=args.stft_hop),
        image_size=args.image_size,
        dynamic_range=args.dynamic_range,
        colormap=args.colormap,
        noise=NoiseModel(sigma2=args.noise_sigma2),
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="rfscene",
                     description="Synthetic congested-RF-spectrum dataset "
                                 "generator and detection scorer")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[], help="generate a labeled dataset")
    gen.add_argument("--scenario", required=True,
                     choices=[s.value for s in Scenario])
    gen.add_argument("--scenes", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--split", type=float, nargs=3,
                     default=(0.70, 0.20, 0.10),
                     metavar=("TRAIN", "VAL", "TEST"))
    gen.add_argument("--p-emit", type=float, default=0.5,
                     help="per class x timeslot emission probability "
                          "(comms scenario)")
    gen.add_argument("--workers", type=int, default=1)
    gen.add_argument("--force", action="store_true",
                     help="overwrite an existing dataset directory")
    gen.add_argument("--shuffle-seed", type=int, default=None,
                     help="shuffle scene-to-split assignment (recorded "
                          "in the manifest)")
    _add_render_flags(gen)
    gen.set_defaults(func=cmd_generate)

    orc = sub.add_parser("oracle-pred",
                         help="synthesize predictions from ground truth")
    orc.add_argument("--gt", required=True, help="label directory")
    orc.add_argument("--out", required=True)
    orc.add_argument("--jitter", type=float, default=0.0,
                     help="stddev of additive box-coordinate noise")
    orc.add_argument("--drop", type=float, default=0.0,
                     help="probability of dropping each box")
    orc.add_argument("--conf-mode", choices=("fixed", "random"),
                     default="fixed")
    orc.add_argument("--conf-value", type=float, default=1.0)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle_pred)

    ev = sub.add_parser("eval", help="score predictions against labels")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--out", default=None, help="report JSON path")
    ev.add_argument("--manifest", default=None,
                    help="dataset manifest supplying class names")
    ev.add_argument("--conf-thr", type=float, default=0.25,
                    help="confusion-matrix confidence threshold")
    ev.add_argument("--iou-thr", type=float, default=0.45,
                    help="confusion-matrix IoU threshold")
    ev.add_argument("--confusion-image", default=None,
                    help="write the normalized confusion matrix as an image")
    ev.set_defaults(func=cmd_eval)

    ren = sub.add_parser("render",
                         help="re-synthesize a scene sidecar to an image")
    ren.add_argument("--sidecar", required=True)
    ren.add_argument("--out", required=True)
    ren.add_argument("--annotated", action="store_true",
                     help="overlay ground-truth boxes")
    _add_render_flags(ren)
    ren.set_defaults(func=cmd_render)
    return parser


def cmd_generate(args) -> int:
    config = SceneConfig(scenario=Scenario(args.scenario), p_emit=args.p_emit)
    config.validate()
    settings = _settings_from_args(args)
    settings.stft.validate()
    if args.scenes < 1:
        raise ConfigurationError("scenes: must be >= 1")
    counts = split_counts(args.scenes, args.split)  # validates fractions
    scenes = [sample_scene(config, args.seed, i) for i in range(args.scenes)]
    manifest = write_dataset(scenes, args.out, split=args.split,
                             settings=settings, workers=max(1, args.workers),
                             force=args.force, shuffle_seed=args.shuffle_seed)
    print(f"manifest {Path(args.out) / 'manifest.json'}")
    for name, count in zip(("train", "val", "test"), counts):
        print(f"{name} {count}")
    return EXIT_OK


def cmd_oracle_pred(args) -> int:
    gt_dir = Path(args.gt)
    out_dir = Path(args.out)
    label_files = sorted(gt_dir.glob("*.txt"))
    if not gt_dir.is_dir() or not label_files:
        print(f"error: no label files in {gt_dir}", file=sys.stderr)
        return EXIT_IO
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in label_files:
        # Seed per file from (seed, stem) so output is independent of
        # listing order and stable under partial regeneration.
        rng = np.random.default_rng(
            mix_seed(args.seed, zlib.crc32(path.stem.encode())))
        lines = []
        for box in read_label_file(path):
            if rng.random() < args.drop:
                continue
            x, y, w, h = (box.x, box.y, box.w, box.h)
            if args.jitter > 0:
                x, y, w, h = (v + args.jitter * rng.standard_normal()
                              for v in (x, y, w, h))
                w, h = max(w, 1e-4), max(h, 1e-4)
                x, y = min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)
            conf = (args.conf_value if args.conf_mode == "fixed"
                    else rng.uniform(0.25, 1.0))
            lines.append(f"{box.class_id} {conf:.6f} {x:.6f} {y:.6f} "
                         f"{w:.6f} {h:.6f}\n")
        (out_dir / path.name).write_text("".join(lines))
    print(f"wrote {len(label_files)} prediction files to {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    class_names = None
    if args.manifest:
        class_names = DatasetManifest.load(Path(args.manifest)).class_names
    report = map_metrics(args.pred, args.gt, class_names=class_names,
                         conf_thr=args.conf_thr,
                         confusion_iou_thr=args.iou_thr)
    print(f"mAP50 {report.map50:.4f}")
    print(f"mAP50-95 {report.map50_95:.4f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json())
    if args.confusion_image:
        _save_confusion_image(report, Path(args.confusion_image))
    return EXIT_OK


def _save_confusion_image(report, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = report.class_names or [str(c) for c in report.per_class_ap]
    labels = list(names) + ["background"]
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(report.confusion_normalized, cmap="Blues",
                   vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("ground truth")
    ax.set_ylabel("predicted")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_render(args) -> int:
    sidecar_path = Path(args.sidecar)
    try:
        data = json.loads(sidecar_path.read_text())
        scene = scene_from_dict(data)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: cannot parse sidecar {sidecar_path}: {exc}",
              file=sys.stderr)
        return EXIT_FORMAT
    settings = _settings_from_args(args)
    img, boxes, _ = render_scene(scene, settings,
                                 noise_seed=data.get("noise_seed"))
    if args.annotated:
        from PIL import ImageDraw

        draw = ImageDraw.Draw(img)
        w, h = img.size
        for box in boxes:
            left, top, right, bottom = box.corners()
            color = _CLASS_COLORS[box.class_id % len(_CLASS_COLORS)]
            draw.rectangle([left * (w - 1), top * (h - 1),
                            right * (w - 1), bottom * (h - 1)],
                           outline=color, width=2)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    img.save(out)
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        if isinstance(exc, LabelParseError):
            print(f"format error: {exc}", file=sys.stderr)
            return EXIT_FORMAT
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
