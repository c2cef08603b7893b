"""Unit-power complex-baseband synthesis for all 14 signal classes.

Linear modulations (M-PSK, M-QAM, CDMA) are root-raised-cosine shaped at
symbol rate bw/(1+rolloff); OFDM places 64 QPSK subcarriers at spacing
bw/64; the polyphase pulses hold rectangular chips at rate
bw/RADAR_CHIP_RATE_DIVISOR; the LFMCW class is a phase-only linear sweep.
Every generator is a pure function of its SignalSpec, with payload
randomness derived from spec.sub_seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sp_signal

from .scene_model import (
    RADAR_CHIP_RATE_DIVISOR,
    SceneConfig,
    SignalSpec,
)

#: Chips per symbol for the CDMA-QPSK class.
CDMA_SPREADING_FACTOR = 8
#: PN register length; the sequence period is 2^7 - 1 = 127 chips.
PN_STAGES = 7
#: Subcarriers for the OFDM-QPSK class.
OFDM_SUBCARRIERS = 64

_PSK_ORDERS = (4, 8, 16, 32)
_QAM_ORDERS = (16, 32)


class UnsupportedClassError(ValueError):
    """synthesize() received a SignalSpec with an unknown class name."""


@dataclass
class IQBuffer:
    """A complex baseband sample sequence at a fixed sample rate."""

    samples: np.ndarray
    fs: float

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass
class PhaseCode:
    """Chip phases of a polyphase pulse code, emitted row-major."""

    phases: np.ndarray
    code_family: str
    order: int

    def chips(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def __len__(self) -> int:
        return len(self.phases)


@dataclass(frozen=True)
class ShapingConfig:
    """Root-raised-cosine pulse-shaping parameters."""

    rolloff: float = 0.25
    span: int = 10  # filter length in symbols

    def validate(self) -> None:
        if not 0.0 < self.rolloff <= 1.0:
            raise ValueError(f"rolloff must be in (0, 1], got {self.rolloff}")
        if self.span < 4:
            raise ValueError(f"span must be >= 4 symbols, got {self.span}")


def _gray_decode(v: np.ndarray) -> np.ndarray:
    # Inverse Gray map: returns k with k ^ (k >> 1) == v.
    k = v.copy()
    shift = v >> 1
    while np.any(shift):
        k ^= shift
        shift >>= 1
    return k


def _bits_to_ints(bits: np.ndarray, width: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size % width != 0:
        raise ValueError(f"bit count {bits.size} is not a multiple of {width}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0/1")
    groups = bits.reshape(-1, width)
    weights = 1 << np.arange(width - 1, -1, -1)  # MSB first
    return groups @ weights


def map_psk(bits: np.ndarray, order: int) -> np.ndarray:
    """Gray-map bits onto exp(j(2*pi*k/M + pi/M)) constellation points.

    Adjacent points on the circle carry bit patterns differing in exactly
    one bit; bit groups are read MSB first.
    """
    if order not in _PSK_ORDERS:
        raise ValueError(f"PSK order must be one of {_PSK_ORDERS}, got {order}")
    k = _gray_decode(_bits_to_ints(bits, int(math.log2(order))))
    return np.exp(1j * (2 * np.pi * k / order + np.pi / order))


# Gray-coded 4-PAM: bit pairs 00,01,11,10 map to levels -3,-1,+1,+3.
_PAM4_BY_INT = np.array([-3, -1, 3, 1], dtype=np.float64)


def _cross32_table() -> np.ndarray:
    # 6x6 grid of odd levels minus the four corners, row-major from the
    # top row; indexed directly by the 5-bit group value. A cross
    # constellation admits no perfect Gray labeling, so this table is
    # simply documented and fixed.
    pts = []
    for q in (5, 3, 1, -1, -3, -5):
        for i in (-5, -3, -1, 1, 3, 5):
            if abs(i) == 5 and abs(q) == 5:
                continue
            pts.append(i + 1j * q)
    return np.array(pts) / math.sqrt(20.0)


_CROSS32 = _cross32_table()


def map_qam(bits: np.ndarray, order: int) -> np.ndarray:
    """Map bits onto unit-mean-energy 16QAM (Gray) or cross 32QAM points."""
    if order not in _QAM_ORDERS:
        raise ValueError(f"QAM order must be one of {_QAM_ORDERS}, got {order}")
    if order == 16:
        v = _bits_to_ints(bits, 4)
        i = _PAM4_BY_INT[v >> 2]
        q = _PAM4_BY_INT[v & 3]
        return (i + 1j * q) / math.sqrt(10.0)
    return _CROSS32[_bits_to_ints(bits, 5)]


def rrc_taps(sps: int, span: int, rolloff: float) -> np.ndarray:
    """Root-raised-cosine impulse response, unit energy, span*sps+1 taps."""
    beta = rolloff
    n = np.arange(-span * sps // 2, span * sps // 2 + 1)
    t = n / sps  # in symbol periods
    taps = np.empty_like(t)
    near_zero = np.isclose(t, 0.0)
    sing = np.isclose(np.abs(t), 1.0 / (4 * beta))
    regular = ~(near_zero | sing)
    tr = t[regular]
    taps[regular] = (
        np.sin(np.pi * tr * (1 - beta))
        + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    ) / (np.pi * tr * (1 - (4 * beta * tr) ** 2))
    taps[near_zero] = 1.0 + beta * (4 / np.pi - 1)
    taps[sing] = (beta / math.sqrt(2)) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * beta))
        + (1 - 2 / np.pi) * math.cos(np.pi / (4 * beta))
    )
    return taps / np.linalg.norm(taps)


def shape(symbols: np.ndarray, rate: float, cfg: ShapingConfig,
          fs: float) -> IQBuffer:
    """RRC-shape a symbol sequence to sample rate fs at the given baud rate.

    Shaping runs at the nearest integer oversampling; a polyphase rational
    resample then lands the exact rate (residual symbol-rate error below
    0.1%, typically ~1e-6). Output is normalized to unit mean power.
    """
    cfg.validate()
    if rate <= 0 or rate > fs / (2 * (1 + cfg.rolloff)):
        raise ValueError(
            f"symbol rate {rate:.4g} Hz unrealizable at fs {fs:.4g} Hz "
            f"with rolloff {cfg.rolloff}")
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.size == 0:
        raise ValueError("empty symbol sequence")
    sps_exact = fs / rate
    sps = max(2, int(round(sps_exact)))
    taps = rrc_taps(sps, cfg.span, cfg.rolloff)
    x = sp_signal.upfirdn(taps, symbols, up=sps)
    ratio = sps_exact / sps
    if not math.isclose(ratio, 1.0, rel_tol=1e-12):
        frac = Fraction(ratio).limit_denominator(1024)
        x = sp_signal.resample_poly(x, frac.numerator, frac.denominator)
    power = np.mean(np.abs(x) ** 2)
    if power > 0:
        x = x / math.sqrt(power)
    return IQBuffer(samples=x, fs=fs)


def pn_sequence(sub_seed: int, length: int = 2 ** PN_STAGES - 1) -> np.ndarray:
    """Maximal-length +/-1 sequence from a 7-stage LFSR (taps x^7 + x^6 + 1).

    The nonzero initial register state is derived from sub_seed, selecting
    one of the 127 cyclic phases of the m-sequence.
    """
    state = (sub_seed % (2 ** PN_STAGES - 1)) + 1
    chips = np.empty(length, dtype=np.float64)
    for n in range(length):
        bit = state & 1
        chips[n] = 1.0 - 2.0 * bit
        feedback = ((state >> 6) ^ (state >> 5)) & 1
        state = ((state << 1) | feedback) & (2 ** PN_STAGES - 1)
    return chips


def spread_chips(symbols: np.ndarray, pn: np.ndarray,
                 sf: int = CDMA_SPREADING_FACTOR) -> np.ndarray:
    """Spread symbols by sf chips each, multiplied by the running PN."""
    chips = np.repeat(np.asarray(symbols, dtype=np.complex128), sf)
    idx = np.arange(chips.size) % pn.size
    return chips * pn[idx]


def despread_chips(chips: np.ndarray, pn: np.ndarray,
                   sf: int = CDMA_SPREADING_FACTOR) -> np.ndarray:
    """Invert spread_chips: average each sf-chip block against the PN."""
    chips = np.asarray(chips, dtype=np.complex128)
    n_sym = chips.size // sf
    chips = chips[: n_sym * sf]
    idx = np.arange(chips.size) % pn.size
    return (chips * pn[idx]).reshape(n_sym, sf).mean(axis=1)


def _payload_bits(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.integers(0, 2, size=count, dtype=np.int64)


def _trim_normalize(x: np.ndarray, n: int, fs: float) -> IQBuffer:
    if x.size < n:
        x = np.pad(x, (0, n - x.size))
    x = x[:n]
    power = np.mean(np.abs(x) ** 2)
    if power > 0:
        x = x / math.sqrt(power)
    return IQBuffer(samples=x, fs=fs)


def _gen_linear(spec: SignalSpec, cfg: ShapingConfig, fs: float,
                mapper, order: int) -> IQBuffer:
    rate = spec.bw / (1 + cfg.rolloff)
    n = spec.duration
    n_sym = math.ceil(n * rate / fs) + cfg.span + 2
    rng = np.random.default_rng(spec.sub_seed)
    bits = _payload_bits(rng, n_sym * int(math.log2(order)))
    shaped = shape(mapper(bits, order), rate, cfg, fs)
    return _trim_normalize(shaped.samples, n, fs)


def gen_cdma_qpsk(spec: SignalSpec, cfg: ShapingConfig, fs: float,
                  sf: int = CDMA_SPREADING_FACTOR) -> IQBuffer:
    """QPSK spread by a 127-chip m-sequence at chip rate bw/(1+rolloff)."""
    chip_rate = spec.bw / (1 + cfg.rolloff)
    symbol_rate = chip_rate / sf
    n = spec.duration
    if symbol_rate * n / fs < 1.0:
        raise ValueError(
            f"bandwidth {spec.bw:.4g} Hz too small to fit one symbol at "
            f"spreading factor {sf} over {n} samples")
    n_chips = math.ceil(n * chip_rate / fs) + cfg.span + 2
    n_sym = math.ceil(n_chips / sf)
    rng = np.random.default_rng(spec.sub_seed)
    symbols = map_psk(_payload_bits(rng, 2 * n_sym), 4)
    pn = pn_sequence(spec.sub_seed)
    chips = spread_chips(symbols, pn, sf)
    shaped = shape(chips, chip_rate, cfg, fs)
    return _trim_normalize(shaped.samples, n, fs)


def ofdm_symbol_layout(bw: float, fs: float) -> tuple[int, int, np.ndarray]:
    """Return (symbol_samples, cp_samples, subcarrier_bins) for a bandwidth.

    The subcarrier spacing is snapped so one core symbol is an integer
    sample count (error < 0.1%); the 64 subcarriers sit symmetrically at
    bins +/-1..+/-32 (DC unused), so the occupied band spans exactly
    64 spacings edge to edge.
    """
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    n_sym = int(round(OFDM_SUBCARRIERS * fs / bw))
    if n_sym < OFDM_SUBCARRIERS + 1:
        raise ValueError(
            f"bandwidth {bw:.4g} Hz leaves subcarrier spacing unresolvable "
            f"at fs {fs:.4g} Hz")
    cp = int(round(n_sym / 8))
    half = OFDM_SUBCARRIERS // 2
    bins = np.concatenate([np.arange(1, half + 1),
                           np.arange(n_sym - half, n_sym)])
    return n_sym, cp, bins


def gen_ofdm_qpsk(spec: SignalSpec, fs: float) -> IQBuffer:
    """64-subcarrier QPSK OFDM with a 1/8-symbol cyclic prefix."""
    n_sym, cp, bins = ofdm_symbol_layout(spec.bw, fs)
    n = spec.duration
    n_ofdm = math.ceil(n / (n_sym + cp))
    rng = np.random.default_rng(spec.sub_seed)
    blocks = []
    for _ in range(n_ofdm):
        data = map_psk(_payload_bits(rng, 2 * OFDM_SUBCARRIERS), 4)
        grid = np.zeros(n_sym, dtype=np.complex128)
        grid[bins] = data
        core = np.fft.ifft(grid) * (n_sym / math.sqrt(OFDM_SUBCARRIERS))
        blocks.append(np.concatenate([core[-cp:], core]))
    return _trim_normalize(np.concatenate(blocks), n, fs)


def ofdm_demod(samples: np.ndarray, bw: float, fs: float) -> np.ndarray:
    """Recover subcarrier symbols from whole OFDM symbols (loopback check).

    Returns a (n_symbols, 64) matrix; partial trailing symbols are dropped.
    """
    n_sym, cp, bins = ofdm_symbol_layout(bw, fs)
    block = n_sym + cp
    n_full = len(samples) // block
    out = np.empty((n_full, OFDM_SUBCARRIERS), dtype=np.complex128)
    for k in range(n_full):
        core = samples[k * block + cp:(k + 1) * block]
        out[k] = np.fft.fft(core)[bins] * (math.sqrt(OFDM_SUBCARRIERS) / n_sym)
    return out


def polyphase_code(family: str, size: int) -> PhaseCode:
    """Chip phases for the Frank, P1, P2 (order M) or P3, P4 (length N) codes.

    Matrix codes are emitted row-major: row j = 1..M holds chips i = 1..M,
    and the chip index is (j-1)*M + (i-1). Phases are computed as pi times
    an exact rational factor, so small-order fixtures match hand values
    bit for bit.
    """
    if size < 1:
        raise ValueError(f"code size must be >= 1, got {size}")
    if family in ("Frank", "P1", "P2"):
        m = size
        if family == "P2" and m % 2 == 1:
            raise ValueError(f"P2 requires an even order, got {m}")
        j = np.arange(1, m + 1, dtype=np.float64)[:, None]  # row
        i = np.arange(1, m + 1, dtype=np.float64)[None, :]  # chip in row
        if family == "Frank":
            ratio = 2.0 * (i - 1) * (j - 1) / m
        elif family == "P1":
            ratio = -((m - (2 * j - 1)) * ((j - 1) * m + (i - 1))) / m
        else:  # P2
            ratio = -((2 * i - 1 - m) * (2 * j - 1 - m)) / (2.0 * m)
        return PhaseCode(phases=(np.pi * ratio).ravel(),
                         code_family=family, order=m)
    if family in ("P3", "P4"):
        n = np.arange(1, size + 1, dtype=np.float64)
        ratio = (n - 1) ** 2 / size
        if family == "P4":
            ratio = ratio - (n - 1)
        return PhaseCode(phases=np.pi * ratio, code_family=family, order=size)
    raise ValueError(f"unknown code family {family!r}")


def code_center_offset(code: PhaseCode, chip_rate: float) -> float:
    """Spectral center of a code's frequency sweep, relative to 0 Hz.

    Frank and P3 step from 0 up to ~chip_rate (single-sided); P1, P2 and
    P4 already sweep symmetrically about 0. Subtracting this offset at
    synthesis time centers every pulse on its carrier.
    """
    if code.code_family in ("Frank", "P3"):
        m = code.order
        return chip_rate * (m - 1) / (2 * m)
    return 0.0


def gen_radar_pulse(code: PhaseCode, chip_rate: float, fs: float) -> IQBuffer:
    """Hold each chip for round(fs/chip_rate) samples at unit amplitude."""
    if len(code) == 0:
        raise ValueError("zero-length phase code")
    if chip_rate <= 0 or chip_rate > fs:
        raise ValueError(f"chip rate {chip_rate:.4g} Hz outside (0, fs]")
    spc = int(round(fs / chip_rate))
    if spc < 1:
        raise ValueError("chip rate rounds to zero samples per chip")
    return IQBuffer(samples=np.repeat(code.chips(), spc), fs=fs)


def gen_lfmcw(sweep_bw: float, duration_s: float, fs: float) -> IQBuffer:
    """Linear FM sweep exp(j*pi*(B/T)*t^2): 0 Hz up to B over T seconds."""
    if sweep_bw < 0 or sweep_bw >= fs:
        raise ValueError(f"sweep bandwidth {sweep_bw:.4g} Hz outside [0, fs)")
    n = int(round(duration_s * fs))
    if n < 2:
        raise ValueError("sweep must span at least 2 samples")
    t = np.arange(n) / fs
    return IQBuffer(samples=np.exp(1j * np.pi * (sweep_bw / duration_s) * t * t),
                    fs=fs)


def synthesize(spec: SignalSpec, cfg: SceneConfig,
               shaping: ShapingConfig = ShapingConfig()) -> IQBuffer:
    """Produce the unit-mean-power baseband for one emission.

    The returned buffer has exactly t_end - t_start samples, spectrally
    centered at 0 Hz (Frank/P3 pulses and chirps are shifted down by
    their sweep midpoint so the carrier mix lands the occupied band on
    spec.fc). Payload bits and PN state derive from spec.sub_seed.
    """
    fs = cfg.sample_rate
    name = spec.class_name
    if spec.duration <= 0:
        raise ValueError(f"empty duration for signal {name}")

    if name in ("QPSK", "8PSK", "16PSK", "32PSK"):
        order = {"QPSK": 4, "8PSK": 8, "16PSK": 16, "32PSK": 32}[name]
        return _gen_linear(spec, shaping, fs, map_psk, order)
    if name in ("16QAM", "32QAM"):
        return _gen_linear(spec, shaping, fs, map_qam, int(name[:2]))
    if name == "CDMA-QPSK":
        return gen_cdma_qpsk(spec, shaping, fs)
    if name == "OFDM-QPSK":
        return gen_ofdm_qpsk(spec, fs)

    if name in ("Frank", "P1", "P2", "P3", "P4"):
        try:
            order = spec.extras["order"]
            spc = spec.extras["samples_per_chip"]
        except KeyError as exc:
            raise ValueError(f"radar spec missing extras field {exc}") from exc
        code = polyphase_code(name, order)
        if len(code) * spc != spec.duration:
            raise ValueError(
                f"{name} spec duration {spec.duration} != chips "
                f"{len(code)} x samples_per_chip {spc}")
        chip_rate = fs / spc
        pulse = gen_radar_pulse(code, chip_rate, fs)
        offset = code_center_offset(code, chip_rate)
        if offset != 0.0:
            n = np.arange(len(pulse))
            pulse.samples = pulse.samples * np.exp(-2j * np.pi * offset * n / fs)
        return pulse

    if name == "LFMCW-echo":
        sweep_bw = spec.extras.get("sweep_bw_hz")
        if sweep_bw is None:
            raise ValueError("LFMCW spec missing extras field 'sweep_bw_hz'")
        duration_s = cfg.total_samples / fs  # full-scene sweep
        chirp = gen_lfmcw(sweep_bw, duration_s, fs)
        x = chirp.samples[: spec.duration]
        # Center the visible portion of the sweep on the carrier.
        bw_eff = sweep_bw * spec.duration / cfg.total_samples
        n = np.arange(x.size)
        x = x * np.exp(-1j * np.pi * bw_eff * n / fs)
        return IQBuffer(samples=x, fs=fs)

    raise UnsupportedClassError(f"no generator for signal class {name!r}")
