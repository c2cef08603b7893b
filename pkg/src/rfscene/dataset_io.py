"""Dataset rendering and persistence: images, labels, sidecars, manifest.

Label geometry follows the normalized XYWH convention: box center x is
(t_start + t_end) / (2 * total_samples), center y is fc / fs measured
from the top image edge (row 0 = 0 Hz), width is duration / total_samples
and height is bw / fs. Label lines are `class_id x y w h` with six
fraction digits.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from matplotlib import colormaps
from PIL import Image

from .channel import NoiseModel, compose_scene
from .scene_model import (
    CLASS_NAMES,
    Scene,
    SignalSpec,
    mix_seed,
    scene_to_dict,
)
from .spectro import Spectrogram, StftConfig, stft
from .waveforms import ShapingConfig

DATASET_FORMAT_VERSION = "rfscene-dataset-v1"
SPLIT_NAMES = ("train", "val", "test")
_SCENE_FILE_FMT = "scene_%06d"


class LabelParseError(ValueError):
    """A label or prediction file line does not match the grammar."""

    def __init__(self, path: Path | str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass
class BBox:
    """Normalized XYWH box; y runs downward from the top edge (0 Hz)."""

    class_id: int
    x: float
    y: float
    w: float
    h: float

    def corners(self) -> tuple[float, float, float, float]:
        """(left, top, right, bottom) in normalized coordinates."""
        return (self.x - self.w / 2, self.y - self.h / 2,
                self.x + self.w / 2, self.y + self.h / 2)

    def area(self) -> float:
        return self.w * self.h

    def to_line(self) -> str:
        return (f"{self.class_id} {self.x:.6f} {self.y:.6f} "
                f"{self.w:.6f} {self.h:.6f}")


def bbox_from_spec(spec: SignalSpec, total_samples: int, fs: float) -> BBox:
    """Ground-truth box of one emission, clamped to the unit square."""
    left = spec.t_start / total_samples
    right = spec.t_end / total_samples
    top = (spec.fc - spec.bw / 2) / fs
    bottom = (spec.fc + spec.bw / 2) / fs
    left, right = max(0.0, left), min(1.0, right)
    top, bottom = max(0.0, top), min(1.0, bottom)
    return BBox(class_id=spec.class_id,
                x=(left + right) / 2, y=(top + bottom) / 2,
                w=right - left, h=bottom - top)


def write_label_file(path: Path, boxes: Iterable[BBox]) -> None:
    path.write_text("".join(box.to_line() + "\n" for box in boxes))


def read_label_file(path: Path) -> list[BBox]:
    boxes = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise LabelParseError(path, line_no,
                                  f"expected 5 fields, got {len(parts)}")
        try:
            boxes.append(BBox(class_id=int(parts[0]),
                              x=float(parts[1]), y=float(parts[2]),
                              w=float(parts[3]), h=float(parts[4])))
        except ValueError as exc:
            raise LabelParseError(path, line_no, str(exc)) from None
    return boxes


def render_image(spec: Spectrogram, size: int | tuple[int, int] = 640,
                 dynamic_range: float = 60.0,
                 colormap: str = "viridis") -> Image.Image:
    """Render the dB matrix to an RGB image, frequency 0 at the top row.

    The matrix is clipped to [max - dynamic_range, max], min-max scaled
    (constant input maps to mid-scale), colormapped, then bilinearly
    resized.
    """
    if spec.db.size == 0:
        raise ValueError("empty spectrogram")
    if isinstance(size, int):
        size = (size, size)
    db = spec.db
    hi = float(db.max())
    clipped = np.clip(db, hi - dynamic_range, hi)
    lo, hi2 = float(clipped.min()), float(clipped.max())
    if hi2 > lo:
        norm = (clipped - lo) / (hi2 - lo)
    else:
        norm = np.full_like(clipped, 0.5)
    rgb = colormaps[colormap](norm)[:, :, :3]
    img = Image.fromarray((rgb * 255.0).round().astype(np.uint8))
    return img.resize(size, Image.BILINEAR)


def split_counts(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Deterministic split sizes: floor each share, remainder to train."""
    if len(fractions) != 3:
        raise ValueError("expected 3 split fractions (train, val, test)")
    if any(f < 0 for f in fractions):
        raise ValueError("split fractions must be non-negative")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"split fractions must sum to 1, got {sum(fractions)}")
    counts = [int(math.floor(n * f)) for f in fractions]
    counts[0] += n - sum(counts)
    return tuple(counts)


@dataclass
class DatasetManifest:
    """Everything needed to audit or regenerate an emitted dataset."""

    format_version: str
    scenario: str
    class_names: list[str]
    master_seed: int
    scene_count: int
    split_fractions: list[float]
    splits: dict[str, dict[str, Any]]
    sample_rate: float
    total_samples: int
    stft: dict[str, Any]
    image_size: int
    dynamic_range: float
    colormap: str
    noise_sigma2: float
    shuffle_seed: int | None
    config: dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class RenderSettings:
    """Per-scene pipeline knobs shared by write_dataset and the CLI."""

    stft: StftConfig = StftConfig()
    image_size: int = 640
    dynamic_range: float = 60.0
    colormap: str = "viridis"
    noise: NoiseModel = NoiseModel()
    shaping: ShapingConfig = ShapingConfig()


def render_scene(scene: Scene,
                 settings: RenderSettings = RenderSettings(),
                 noise_seed: int | None = None,
                 ) -> tuple[Image.Image, list[BBox], Spectrogram]:
    """Run one scene through compose -> stft -> render."""
    if noise_seed is None:
        noise_seed = scene.noise_seed
    capture = compose_scene(scene, noise_seed, noise=settings.noise,
                            shaping=settings.shaping)
    spg = stft(capture.iq, settings.stft)
    img = render_image(spg, settings.image_size, settings.dynamic_range,
                       settings.colormap)
    boxes = [bbox_from_spec(s, scene.config.total_samples,
                            scene.config.sample_rate)
             for s in scene.signals]
    return img, boxes, spg


def _scene_paths(out_dir: Path, split: str, index: int) -> dict[str, Path]:
    stem = _SCENE_FILE_FMT % index
    return {
        "image": out_dir / "images" / split / f"{stem}.png",
        "label": out_dir / "labels" / split / f"{stem}.txt",
        "sidecar": out_dir / "sidecars" / split / f"{stem}.json",
    }


def _write_one_scene(job: tuple[Scene, str, str, RenderSettings]) -> None:
    scene, split, out_dir, settings = job
    img, boxes, _ = render_scene(scene, settings)
    paths = _scene_paths(Path(out_dir), split, scene.scene_index)
    img.save(paths["image"])
    write_label_file(paths["label"], boxes)
    paths["sidecar"].write_text(
        json.dumps(scene_to_dict(scene), indent=2) + "\n")


def write_dataset(scenes: Sequence[Scene], out_dir: Path | str,
                  split: Sequence[float] = (0.70, 0.20, 0.10),
                  settings: RenderSettings = RenderSettings(),
                  workers: int = 1, force: bool = False,
                  shuffle_seed: int | None = None) -> DatasetManifest:
    """Render scenes to images/labels/sidecars plus a manifest.

    Scenes are assigned to train/val/test by contiguous blocks of their
    list position (optionally shuffled by a recorded seed). Output is
    byte-identical for a given input regardless of worker count.
    """
    if not scenes:
        raise ValueError("no scenes to write")
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists() or (out_dir / "images").exists():
        if not force:
            raise FileExistsError(
                f"{out_dir} already holds a dataset; pass force to overwrite")
    counts = split_counts(len(scenes), split)

    order = list(range(len(scenes)))
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    assignment: list[tuple[Scene, str]] = []
    pos = 0
    for split_name, count in zip(SPLIT_NAMES, counts):
        for k in order[pos:pos + count]:
            assignment.append((scenes[k], split_name))
        pos += count

    for split_name in SPLIT_NAMES:
        for sub in ("images", "labels", "sidecars"):
            (out_dir / sub / split_name).mkdir(parents=True, exist_ok=True)

    jobs = [(scene, split_name, str(out_dir), settings)
            for scene, split_name in assignment]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            for _ in pool.imap_unordered(_write_one_scene, jobs):
                pass
    else:
        for job in jobs:
            _write_one_scene(job)

    cfg = scenes[0].config
    manifest = DatasetManifest(
        format_version=DATASET_FORMAT_VERSION,
        scenario=cfg.scenario.value,
        class_names=list(CLASS_NAMES[cfg.scenario]),
        master_seed=scenes[0].master_seed,
        scene_count=len(scenes),
        split_fractions=list(split),
        splits={
            name: {
                "images": f"images/{name}",
                "labels": f"labels/{name}",
                "sidecars": f"sidecars/{name}",
                "count": count,
            }
            for name, count in zip(SPLIT_NAMES, counts)
        },
        sample_rate=cfg.sample_rate,
        total_samples=cfg.total_samples,
        stft={
            "window": settings.stft.window,
            "window_length": settings.stft.window_length,
            "fft_size": settings.stft.fft_size,
            "hop": settings.stft.hop,
        },
        image_size=settings.image_size,
        dynamic_range=settings.dynamic_range,
        colormap=settings.colormap,
        noise_sigma2=settings.noise.sigma2,
        shuffle_seed=shuffle_seed,
        config={**{k: (v.value if hasattr(v, "value") else v)
                   for k, v in scenes[0].config.__dict__.items()}},
    )
    manifest_path.write_text(manifest.to_json())
    return manifest
