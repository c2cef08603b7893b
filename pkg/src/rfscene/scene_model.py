"""Scenario configurations and deterministic randomized scene sampling.

A Scene is the unit of dataset generation: a seeded list of SignalSpec
emissions plus the global capture configuration. Sampling is a pure
function of (config, master_seed, scene_index), so scenes can be drawn
independently and in parallel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

# Stream tags keep the per-purpose RNG streams of one (seed, index) pair apart.
_SCENE_STREAM = 0x5343454E  # scene parameter draws
_NOISE_STREAM = 0x4E4F4953  # per-scene AWGN realization

#: Two-sided occupied bandwidth over chip rate for the polyphase pulses.
#: A rectangular chip stream concentrates ~91% of its power within
#: +/-1.25 chip rates of its spectral center, so this ratio keeps the
#: label box enclosing the visible energy with margin.
RADAR_CHIP_RATE_DIVISOR = 2.5


class ConfigurationError(ValueError):
    """A SceneConfig field (or field combination) is unusable."""


class Scenario(str, Enum):
    COMMS = "comms"
    PULSE_RADAR = "pulse-radar"
    LFMCW = "lfmcw"


#: Class-name lists are emitted verbatim into dataset manifests; ids are
#: the zero-based positions and are stable per scenario.
CLASS_NAMES: dict[Scenario, tuple[str, ...]] = {
    Scenario.COMMS: (
        "QPSK", "8PSK", "16PSK", "32PSK",
        "16QAM", "32QAM", "CDMA-QPSK", "OFDM-QPSK",
    ),
    Scenario.PULSE_RADAR: ("Frank", "P1", "P2", "P3", "P4"),
    Scenario.LFMCW: ("LFMCW-echo",),
}

RADAR_FAMILIES = CLASS_NAMES[Scenario.PULSE_RADAR]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed via a splitmix64 chain.

    Used to derive independent sub-seeds (per scene, per emission, per
    noise realization) from a single master seed without shared state.
    """
    acc = 0x9E3779B97F4A7C15
    for part in parts:
        acc = _splitmix64(acc ^ (int(part) & _MASK64))
    return acc


@dataclass(frozen=True)
class SceneConfig:
    """Capture geometry, parameter ranges, and emission-policy knobs.

    Defaults reproduce the published setup: a 500 MHz complex-sampled
    band observed for 4 timeslots of 4096 samples, with carrier,
    bandwidth, duty-cycle and SNR ranges from the digital-modulation
    scenario table.
    """

    scenario: Scenario = Scenario.COMMS
    sample_rate: float = 500e6        # Hz; displayed band is [0, fs)
    total_samples: int = 16384
    timeslots: int = 4
    fc_min: float = 60e6              # Hz
    fc_max: float = 440e6
    bw_min: float = 20e6              # Hz, two-sided occupied bandwidth
    bw_max: float = 60e6
    dt_min: float = 0.2               # duration as fraction of a timeslot
    dt_max: float = 1.0
    snr_min: float = 0.0              # dB, in-band SNR
    snr_max: float = 25.0
    p_emit: float = 0.5               # scenario A: P(emit) per class x slot
    # Scenario C (LFMCW echo) knobs.
    sweep_bw_min: float = 100e6       # Hz, transmit sweep bandwidth
    sweep_bw_max: float = 300e6
    echo_count_min: int = 2
    echo_count_max: int = 5
    echo_delay_min: float = 0.05      # fraction of scene duration
    echo_delay_max: float = 0.30
    echo_min_separation: int = 64     # samples between distinct echo delays

    @property
    def samples_per_slot(self) -> int:
        return self.total_samples // self.timeslots

    def violations(self) -> list[str]:
        """Return a list of violated config invariants (empty = valid)."""
        out = []
        if self.sample_rate <= 0:
            out.append("sample_rate: must be positive")
        if self.timeslots < 1:
            out.append("timeslots: must be >= 1")
        elif self.total_samples % self.timeslots != 0:
            out.append("total_samples: not divisible by timeslots")
        if self.total_samples < 2:
            out.append("total_samples: must be >= 2")
        if self.bw_min <= 0:
            out.append("bw_min: must be > 0")
        for name, lo, hi in (
            ("fc", self.fc_min, self.fc_max),
            ("bw", self.bw_min, self.bw_max),
            ("dt", self.dt_min, self.dt_max),
            ("snr", self.snr_min, self.snr_max),
            ("sweep_bw", self.sweep_bw_min, self.sweep_bw_max),
            ("echo_delay", self.echo_delay_min, self.echo_delay_max),
        ):
            if not lo < hi:
                out.append(f"{name}_min/{name}_max: empty range ({lo} >= {hi})")
        if not 0.0 <= self.dt_min:
            out.append("dt_min: must be >= 0")
        if self.dt_max > 1.0:
            out.append("dt_max: must be <= 1 (emission confined to one slot)")
        if not 0.0 <= self.p_emit <= 1.0:
            out.append("p_emit: must be in [0, 1]")
        if self.fc_max + self.bw_max / 2 >= self.sample_rate:
            out.append("fc_max: fc_max + bw_max/2 must stay below sample_rate")
        if self.fc_min - self.bw_max / 2 <= 0:
            out.append("fc_min: fc_min - bw_max/2 must stay above 0 Hz")
        if not 1 <= self.echo_count_min <= self.echo_count_max:
            out.append("echo_count_min/echo_count_max: invalid range")
        if self.sweep_bw_max >= self.sample_rate:
            out.append("sweep_bw_max: must stay below sample_rate")
        return out

    def validate(self) -> None:
        bad = self.violations()
        if bad:
            raise ConfigurationError("; ".join(bad))


@dataclass
class SignalSpec:
    """Ground truth for one emission.

    ``bw`` is the two-sided occupied bandwidth (also the label-box height
    source); ``extras`` carries class-specific synthesis parameters such
    as the polyphase order or the echo delay.
    """

    class_id: int
    class_name: str
    fc: float                 # Hz, carrier / spectral center
    bw: float                 # Hz, two-sided occupied bandwidth
    t_start: int              # sample index, inclusive
    t_end: int                # sample index, exclusive
    snr_db: float
    sub_seed: int             # seeds payload bits / PN state
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


@dataclass
class Scene:
    """A seeded, fully specified collection of emissions."""

    config: SceneConfig
    master_seed: int
    scene_index: int
    signals: list[SignalSpec] = field(default_factory=list)

    @property
    def noise_seed(self) -> int:
        return mix_seed(self.master_seed, self.scene_index, _NOISE_STREAM)


def _uniform_open(rng: np.random.Generator, lo: float, hi: float) -> float:
    # Redraw on the measure-zero event of landing exactly on an endpoint,
    # so sampled parameters are strictly inside the configured interval.
    while True:
        v = rng.uniform(lo, hi)
        if lo < v < hi:
            return v


def radar_chip_layout(bw: float, duration_samples: float, fs: float,
                      family: str) -> tuple[int, int, int] | None:
    """Snap a drawn pulse duration to the chip grid of a polyphase code.

    Returns (order, chip_count, samples_per_chip) or None when the
    duration cannot hold even the smallest valid code.

    The chip rate is bw / RADAR_CHIP_RATE_DIVISOR rounded to an integer
    number of samples per chip. Frank/P1/P2 use chip_count = M^2 with the
    largest fitting order (P2 requires even M >= 2); P3/P4 use the largest
    fitting chip count directly.
    """
    chip_rate = bw / RADAR_CHIP_RATE_DIVISOR
    if chip_rate <= 0 or chip_rate > fs:
        return None
    spc = int(round(fs / chip_rate))
    if spc < 1:
        return None
    available = int(duration_samples // spc)
    if family in ("Frank", "P1", "P2"):
        m = int(math.isqrt(available))
        if family == "P2" and m % 2 == 1:
            m -= 1
        if m < (2 if family == "P2" else 1):
            return None
        return m, m * m, spc
    if available < 1:
        return None
    return available, available, spc


def _sample_comms(config: SceneConfig, rng: np.random.Generator,
                  master_seed: int, scene_index: int) -> list[SignalSpec]:
    names = CLASS_NAMES[Scenario.COMMS]
    sps = config.samples_per_slot
    signals = []
    for slot in range(config.timeslots):
        for class_id, name in enumerate(names):
            if rng.random() >= config.p_emit:
                continue
            fc = _uniform_open(rng, config.fc_min, config.fc_max)
            bw = _uniform_open(rng, config.bw_min, config.bw_max)
            dt = _uniform_open(rng, config.dt_min, config.dt_max)
            snr = _uniform_open(rng, config.snr_min, config.snr_max)
            # ceil keeps duration >= dt_min * sps even after rounding
            duration = min(sps, math.ceil(dt * sps))
            offset = int(rng.integers(0, sps - duration + 1))
            t_start = slot * sps + offset
            ordinal = slot * len(names) + class_id
            signals.append(SignalSpec(
                class_id=class_id,
                class_name=name,
                fc=fc,
                bw=bw,
                t_start=t_start,
                t_end=t_start + duration,
                snr_db=snr,
                sub_seed=mix_seed(master_seed, scene_index, ordinal),
            ))
    return signals


def _sample_pulse_radar(config: SceneConfig, rng: np.random.Generator,
                        master_seed: int, scene_index: int) -> list[SignalSpec]:
    sps = config.samples_per_slot
    signals = []
    for class_id, family in enumerate(RADAR_FAMILIES):
        layout = None
        fc = bw = snr = 0.0
        for _ in range(8):  # redraw degenerate (zero-chip) durations
            fc = _uniform_open(rng, config.fc_min, config.fc_max)
            bw = _uniform_open(rng, config.bw_min, config.bw_max)
            snr = _uniform_open(rng, config.snr_min, config.snr_max)
            dt = _uniform_open(rng, config.dt_min, config.dt_max)
            layout = radar_chip_layout(bw, dt * sps, config.sample_rate, family)
            if layout is not None:
                break
        if layout is None:
            logger.warning("scene %d: skipping %s pulse, duration too short "
                           "for one chip after 8 redraws", scene_index, family)
            continue
        order, chips, spc = layout
        duration = chips * spc
        t_start = int(rng.integers(0, config.total_samples - duration + 1))
        signals.append(SignalSpec(
            class_id=class_id,
            class_name=family,
            fc=fc,
            bw=bw,
            t_start=t_start,
            t_end=t_start + duration,
            snr_db=snr,
            sub_seed=mix_seed(master_seed, scene_index, class_id),
            extras={"order": order, "chips": chips, "samples_per_chip": spc},
        ))
    return signals


def _sample_lfmcw(config: SceneConfig, rng: np.random.Generator,
                  master_seed: int, scene_index: int) -> list[SignalSpec]:
    total = config.total_samples
    sweep_bw = _uniform_open(rng, config.sweep_bw_min, config.sweep_bw_max)
    signals = []

    def chirp_spec(delay: int, ordinal: int) -> SignalSpec:
        # A delayed copy of the full-scene sweep: visible from `delay` to
        # the end, rising from 0 Hz to sweep_bw * (1 - delay/total).
        bw_eff = sweep_bw * (total - delay) / total
        return SignalSpec(
            class_id=0,
            class_name="LFMCW-echo",
            fc=bw_eff / 2,
            bw=bw_eff,
            t_start=delay,
            t_end=total,
            snr_db=_uniform_open(rng, config.snr_min, config.snr_max),
            sub_seed=mix_seed(master_seed, scene_index, ordinal),
            extras={"sweep_bw_hz": sweep_bw, "delay_samples": delay},
        )

    signals.append(chirp_spec(0, 0))  # direct-path transmit sweep
    n_echoes = int(rng.integers(config.echo_count_min, config.echo_count_max + 1))
    delays: list[int] = []
    for k in range(n_echoes):
        placed = False
        for _ in range(8):
            delay = int(round(_uniform_open(rng, config.echo_delay_min,
                                            config.echo_delay_max) * total))
            if all(abs(delay - d) >= config.echo_min_separation for d in delays):
                delays.append(delay)
                signals.append(chirp_spec(delay, k + 1))
                placed = True
                break
        if not placed:
            logger.warning("scene %d: skipping echo %d, no delay slot found "
                           "after 8 redraws", scene_index, k)
    return signals


def sample_scene(config: SceneConfig, master_seed: int,
                 scene_index: int) -> Scene:
    """Draw one randomized Scene; deterministic in all three arguments."""
    config.validate()
    rng = np.random.default_rng(mix_seed(master_seed, scene_index, _SCENE_STREAM))
    if config.scenario == Scenario.COMMS:
        signals = _sample_comms(config, rng, master_seed, scene_index)
    elif config.scenario == Scenario.PULSE_RADAR:
        signals = _sample_pulse_radar(config, rng, master_seed, scene_index)
    elif config.scenario == Scenario.LFMCW:
        signals = _sample_lfmcw(config, rng, master_seed, scene_index)
    else:  # pragma: no cover - enum is closed
        raise ConfigurationError(f"scenario: unknown value {config.scenario!r}")
    return Scene(config=config, master_seed=master_seed,
                 scene_index=scene_index, signals=signals)


def validate_scene(scene: Scene) -> list[str]:
    """Collect violated invariants; an empty list means the scene is valid."""
    out = [f"config: {v}" for v in scene.config.violations()]
    cfg = scene.config
    fs = cfg.sample_rate
    sps = cfg.samples_per_slot
    for k, sig in enumerate(scene.signals):
        tag = f"signal {k} ({sig.class_name})"
        if sig.t_start >= sig.t_end:
            out.append(f"{tag}: empty duration (t_start={sig.t_start}, "
                       f"t_end={sig.t_end})")
        if sig.t_start < 0 or sig.t_end > cfg.total_samples:
            out.append(f"{tag}: span outside capture")
        # Touching 0 or fs exactly is legal (the LFMCW sweep starts at
        # the band bottom); only strictly out-of-band edges are flagged.
        if sig.fc - sig.bw / 2 < 0:
            out.append(f"{tag}: band edge below 0 Hz")
        if sig.fc + sig.bw / 2 > fs:
            out.append(f"{tag}: band edge exceeds fs")
        if not cfg.snr_min <= sig.snr_db <= cfg.snr_max:
            out.append(f"{tag}: snr_db outside configured range")
        if cfg.scenario == Scenario.COMMS and sig.t_start < sig.t_end:
            if sig.duration < cfg.dt_min * sps:
                out.append(f"{tag}: duration below dt_min fraction of slot")
            if sig.t_start // sps != (sig.t_end - 1) // sps:
                out.append(f"{tag}: emission crosses a timeslot boundary")
        if cfg.scenario == Scenario.PULSE_RADAR:
            order = sig.extras.get("order")
            chips = sig.extras.get("chips")
            spc = sig.extras.get("samples_per_chip")
            if None in (order, chips, spc):
                out.append(f"{tag}: missing radar chip layout extras")
                continue
            if sig.duration != chips * spc:
                out.append(f"{tag}: duration is not chips x samples_per_chip")
            if sig.class_name in ("Frank", "P1", "P2") and chips != order ** 2:
                out.append(f"{tag}: chip count is not order^2")
            if sig.class_name == "P2" and order % 2 == 1:
                out.append(f"{tag}: P2 order must be even")
    return out


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    """Serialize a Scene to the ground-truth sidecar structure (v1)."""
    cfg = asdict(scene.config)
    cfg["scenario"] = scene.config.scenario.value
    return {
        "format_version": 1,
        "scenario": scene.config.scenario.value,
        "master_seed": scene.master_seed,
        "scene_index": scene.scene_index,
        "noise_seed": scene.noise_seed,
        "config": cfg,
        "signals": [
            {
                "class_id": s.class_id,
                "class_name": s.class_name,
                "fc_hz": s.fc,
                "bw_hz": s.bw,
                "t_start": s.t_start,
                "t_end": s.t_end,
                "snr_db": s.snr_db,
                "sub_seed": s.sub_seed,
                "extras": s.extras,
            }
            for s in scene.signals
        ],
    }


def scene_from_dict(data: dict[str, Any]) -> Scene:
    """Rebuild a Scene from its sidecar structure."""
    if data.get("format_version") != 1:
        raise ValueError(f"unsupported sidecar format_version: "
                         f"{data.get('format_version')!r}")
    cfg_data = dict(data["config"])
    cfg_data["scenario"] = Scenario(cfg_data["scenario"])
    config = SceneConfig(**cfg_data)
    signals = [
        SignalSpec(
            class_id=s["class_id"],
            class_name=s["class_name"],
            fc=s["fc_hz"],
            bw=s["bw_hz"],
            t_start=s["t_start"],
            t_end=s["t_end"],
            snr_db=s["snr_db"],
            sub_seed=s["sub_seed"],
            extras=dict(s.get("extras", {})),
        )
        for s in data["signals"]
    ]
    return Scene(config=config, master_seed=data["master_seed"],
                 scene_index=data["scene_index"], signals=signals)
