"""Carrier mixing, per-signal SNR calibration, and aggregate composition.

SNR is defined in-band: signal power over the noise power that falls
inside the signal's occupied bandwidth, so a 0 dB emission still stands
out of the wideband floor on a spectrogram. Noise is complex AWGN with a
fixed per-sample variance, generated once per scene over the full capture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene_model import Scene
from .waveforms import IQBuffer, ShapingConfig, synthesize


class CompositionError(RuntimeError):
    """A scene emission cannot be placed into the aggregate capture."""


@dataclass(frozen=True)
class NoiseModel:
    """Complex AWGN floor with per-sample variance sigma2 (PSD sigma2/fs)."""

    sigma2: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")

    def psd(self, fs: float) -> float:
        return self.sigma2 / fs


@dataclass
class CompositeCapture:
    """The aggregate received signal of one scene."""

    iq: IQBuffer
    scene: Scene
    noise_seed: int


def mix_to_carrier(iq: IQBuffer, fc: float, t_offset: int = 0) -> IQBuffer:
    """Rotate a baseband buffer up to carrier fc.

    y[n] = x[n] * exp(j*2*pi*fc*(n + t_offset)/fs); t_offset keeps the
    carrier phase referenced to absolute scene time so placement commutes
    with mixing. Power is preserved exactly (unit-modulus rotation).
    """
    if not 0 <= fc < iq.fs:
        raise ValueError(f"carrier {fc:.4g} Hz outside [0, fs)")
    if fc == 0.0:
        return IQBuffer(samples=iq.samples.copy(), fs=iq.fs)
    n = np.arange(len(iq)) + t_offset
    return IQBuffer(samples=iq.samples * np.exp(2j * np.pi * fc * n / iq.fs),
                    fs=iq.fs)


def calibrate_snr(iq: IQBuffer, snr_db: float, bw: float,
                  noise: NoiseModel, fs: float) -> IQBuffer:
    """Scale a ~unit-power buffer to hit an in-band SNR target.

    Target power is 10^(snr_db/10) * N0 * bw with N0 = sigma2/fs, i.e. the
    noise power inside the occupied bandwidth times the linear SNR.
    """
    if bw <= 0:
        raise ValueError(f"bandwidth must be > 0, got {bw}")
    target = 10.0 ** (snr_db / 10.0) * noise.sigma2 * bw / fs
    power = iq.mean_power
    if power <= 0:
        raise ValueError("cannot calibrate an all-zero buffer")
    return IQBuffer(samples=iq.samples * math.sqrt(target / power), fs=iq.fs)


def compose_scene(scene: Scene, noise_seed: int,
                  noise: NoiseModel | None = NoiseModel(),
                  shaping: ShapingConfig = ShapingConfig()) -> CompositeCapture:
    """Sum all mixed, SNR-scaled emissions plus one AWGN realization.

    Emissions are accumulated in signal-list order so the result is
    bit-reproducible for a given (scene, noise_seed). Passing noise=None
    composes the noiseless aggregate with SNR still calibrated against a
    unit-variance floor: the vanishing-noise limit used by the
    label-validation oracles.
    """
    cfg = scene.config
    fs = cfg.sample_rate
    total = cfg.total_samples
    calib = noise if noise is not None else NoiseModel(1.0)
    aggregate = np.zeros(total, dtype=np.complex128)
    for k, spec in enumerate(scene.signals):
        if spec.t_start < 0 or spec.t_end > total:
            raise CompositionError(
                f"emission {k} ({spec.class_name}) spans "
                f"[{spec.t_start}, {spec.t_end}) outside the "
                f"{total}-sample capture")
        base = synthesize(spec, cfg, shaping)
        scaled = calibrate_snr(base, spec.snr_db, spec.bw, calib, fs)
        mixed = mix_to_carrier(scaled, spec.fc, spec.t_start)
        aggregate[spec.t_start:spec.t_end] += mixed.samples
    if noise is not None:
        rng = np.random.default_rng(noise_seed)
        scale = math.sqrt(noise.sigma2 / 2.0)
        aggregate += scale * (rng.standard_normal(total)
                              + 1j * rng.standard_normal(total))
    return CompositeCapture(iq=IQBuffer(samples=aggregate, fs=fs),
                            scene=scene, noise_seed=noise_seed)
