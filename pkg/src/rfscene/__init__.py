"""Synthetic congested-RF-spectrum scenes, spectrogram datasets, and
detection scoring."""

from .scene_model import (
    CLASS_NAMES,
    ConfigurationError,
    Scenario,
    Scene,
    SceneConfig,
    SignalSpec,
    mix_seed,
    sample_scene,
    validate_scene,
)
from .waveforms import IQBuffer, PhaseCode, ShapingConfig, synthesize
from .channel import CompositeCapture, NoiseModel, compose_scene
from .spectro import Spectrogram, StftConfig, band_energy_fraction, stft
from .dataset_io import (
    BBox,
    DatasetManifest,
    RenderSettings,
    bbox_from_spec,
    render_image,
    write_dataset,
)
from .evaluator import Detection, EvalReport, iou, map_metrics

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CLASS_NAMES",
    "CompositeCapture",
    "ConfigurationError",
    "DatasetManifest",
    "Detection",
    "EvalReport",
    "IQBuffer",
    "NoiseModel",
    "PhaseCode",
    "RenderSettings",
    "Scenario",
    "Scene",
    "SceneConfig",
    "ShapingConfig",
    "SignalSpec",
    "Spectrogram",
    "StftConfig",
    "band_energy_fraction",
    "bbox_from_spec",
    "compose_scene",
    "iou",
    "map_metrics",
    "mix_seed",
    "render_image",
    "sample_scene",
    "stft",
    "synthesize",
    "validate_scene",
    "write_dataset",
]
