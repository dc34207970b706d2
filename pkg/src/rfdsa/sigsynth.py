"""Seeded synthesis of 128-sample baseband I/Q frames.

Ten modulations are covered (PSK/QAM/PAM with raised-cosine shaping, CPFSK and
GFSK with continuous phase, and three analog kinds driven by a band-limited
message), plus idle frames that carry noise only.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np
from scipy import signal as sps

from rfdsa.seeding import substream

FRAME_LEN = 128
SAMPLES_PER_SYMBOL = 8
ROLLOFF = 0.35
PULSE_SPAN = 8  # symbols on each side of the pulse peak
CPFSK_INDEX = 0.5
GFSK_INDEX = 0.5
GFSK_BT = 0.35
WBFM_DEVIATION = 0.1  # cycles/sample per unit-RMS message
AM_DSB_DEPTH = 0.5
DEFAULT_SNR_GRID = tuple(float(s) for s in range(0, 20, 2))

_LEAD = 24  # symbols of lead-in for phase-continuous kinds


class SingularMixing(ValueError):
    """Mixing matrix is (numerically) singular."""


class ModulationKind(str, enum.Enum):
    QPSK = "QPSK"
    PSK8 = "8PSK"
    CPFSK = "CPFSK"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    PAM4 = "PAM4"
    WBFM = "WBFM"
    AM_SSB = "AM-SSB"
    AM_DSB = "AM-DSB"
    GFSK = "GFSK"

    def __str__(self) -> str:
        return self.value


IDLE = "idle"
Kind = Union[ModulationKind, str]


class SignalClass(enum.IntEnum):
    """Channel status categories; the integer value is the protocol type code."""

    IDLE = 0
    IN_NETWORK = 1
    JAMMER = 2
    OUT_NETWORK = 3

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self]


_CLASS_LABELS = {
    SignalClass.IDLE: "Idle",
    SignalClass.IN_NETWORK: "InNetwork",
    SignalClass.JAMMER: "Jammer",
    SignalClass.OUT_NETWORK: "OutNetwork",
}

_CLASS_MAP = {
    ModulationKind.QPSK: SignalClass.IN_NETWORK,
    ModulationKind.PSK8: SignalClass.IN_NETWORK,
    ModulationKind.CPFSK: SignalClass.IN_NETWORK,
    ModulationKind.QAM16: SignalClass.JAMMER,
    ModulationKind.QAM64: SignalClass.JAMMER,
    ModulationKind.PAM4: SignalClass.JAMMER,
    ModulationKind.WBFM: SignalClass.JAMMER,
    ModulationKind.AM_SSB: SignalClass.OUT_NETWORK,
    ModulationKind.AM_DSB: SignalClass.OUT_NETWORK,
    ModulationKind.GFSK: SignalClass.OUT_NETWORK,
}


def parse_kind(kind: Kind) -> Kind:
    """Normalize a modulation name (or ``"idle"``) to its canonical value."""
    if isinstance(kind, ModulationKind):
        return kind
    if str(kind).lower() == IDLE:
        return IDLE
    return ModulationKind(str(kind))


def class_of(kind: Kind) -> SignalClass:
    kind = parse_kind(kind)
    if kind == IDLE:
        return SignalClass.IDLE
    return _CLASS_MAP[kind]


def kinds_of_class(cls: SignalClass) -> list[Kind]:
    if cls == SignalClass.IDLE:
        return [IDLE]
    return [k for k in ModulationKind if _CLASS_MAP[k] == cls]


@dataclass(frozen=True)
class IQFrame:
    samples: np.ndarray
    snr_db: float
    modkind: Kind

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.shape != (FRAME_LEN,):
            raise ValueError(f"frame must have {FRAME_LEN} samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("frame samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def as_channels(self) -> np.ndarray:
        """(128, 2) real array of I and Q."""
        return np.stack([self.samples.real, self.samples.imag], axis=-1)


# --- constellations -----------------------------------------------------------

def _square_qam(order: int) -> np.ndarray:
    side = int(round(math.sqrt(order)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


CONSTELLATIONS = {
    ModulationKind.QPSK: np.exp(1j * (np.pi / 4 + np.arange(4) * np.pi / 2)),
    ModulationKind.PSK8: np.exp(1j * np.arange(8) * np.pi / 4),
    ModulationKind.QAM16: _square_qam(16),
    ModulationKind.QAM64: _square_qam(64),
    ModulationKind.PAM4: np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(5.0) + 0j,
}

# Fixed symbol indices used when a frame carries a known preamble.
_PREAMBLE_INDEX = np.random.default_rng(0x5EED).integers(0, 1 << 30, size=64)


def raised_cosine(t: np.ndarray, rolloff: float = ROLLOFF) -> np.ndarray:
    """Raised-cosine pulse evaluated at ``t`` (in symbol periods)."""
    t = np.asarray(t, dtype=float)
    out = np.sinc(t)
    denom = 1.0 - (2.0 * rolloff * t) ** 2
    singular = np.abs(denom) < 1e-10
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(singular, np.pi / 4 * np.sinc(1.0 / (2.0 * rolloff)),
                       out * np.cos(np.pi * rolloff * t) / denom)
    return out


_N = np.arange(FRAME_LEN)
_SYM_IDX = np.arange(-PULSE_SPAN, FRAME_LEN // SAMPLES_PER_SYMBOL + PULSE_SPAN)
_T = _N[:, None] / SAMPLES_PER_SYMBOL - _SYM_IDX[None, :]
_RC_MATRIX = np.where(np.abs(_T) <= PULSE_SPAN, raised_cosine(_T), 0.0)


def _linear(kind: ModulationKind, rng: np.random.Generator, preamble: int) -> np.ndarray:
    const = CONSTELLATIONS[kind]
    idx = rng.integers(0, len(const), size=_SYM_IDX.size)
    if preamble:
        first = PULSE_SPAN  # position of symbol 0 (sample 0) in _SYM_IDX
        idx[first:first + preamble] = _PREAMBLE_INDEX[:preamble] % len(const)
    return _RC_MATRIX @ const[idx]


def _phase_modulate(freq: np.ndarray, index: float) -> np.ndarray:
    # freq in symbols units (+-1 nominal); phase advances pi*h per symbol
    phase = np.cumsum(np.pi * index * freq / SAMPLES_PER_SYMBOL)
    return np.exp(1j * phase)


def _cpfsk(rng: np.random.Generator) -> np.ndarray:
    nsym = FRAME_LEN // SAMPLES_PER_SYMBOL + _LEAD
    bits = rng.integers(0, 2, size=nsym) * 2.0 - 1.0
    freq = np.repeat(bits, SAMPLES_PER_SYMBOL)
    return _phase_modulate(freq, CPFSK_INDEX)[-FRAME_LEN:]


def _gaussian_taps(bt: float, span: int = 4) -> np.ndarray:
    t = np.arange(-span * SAMPLES_PER_SYMBOL, span * SAMPLES_PER_SYMBOL + 1) / SAMPLES_PER_SYMBOL
    sigma = math.sqrt(math.log(2.0)) / (2.0 * math.pi * bt)
    taps = np.exp(-(t ** 2) / (2.0 * sigma ** 2))
    return taps / taps.sum()


_GAUSS = _gaussian_taps(GFSK_BT)


def _gfsk(rng: np.random.Generator) -> np.ndarray:
    nsym = FRAME_LEN // SAMPLES_PER_SYMBOL + _LEAD
    bits = rng.integers(0, 2, size=nsym) * 2.0 - 1.0
    freq = np.convolve(np.repeat(bits, SAMPLES_PER_SYMBOL), _GAUSS, mode="same")
    return _phase_modulate(freq, GFSK_INDEX)[-FRAME_LEN - 2 * SAMPLES_PER_SYMBOL:-2 * SAMPLES_PER_SYMBOL]


_MSG_LPF = sps.firwin(65, 0.06)


def _message(rng: np.random.Generator, length: int) -> np.ndarray:
    """Unit-RMS band-limited message: three low tones plus filtered noise."""
    n = np.arange(length)
    freqs = rng.uniform(0.004, 0.03, size=3)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    amps = rng.uniform(0.5, 1.0, size=3)
    tones = (amps[:, None] * np.cos(2 * np.pi * freqs[:, None] * n + phases[:, None])).sum(axis=0)
    noise = np.convolve(rng.standard_normal(length + 64), _MSG_LPF, mode="same")[32:32 + length]
    noise *= 0.5 * np.std(tones) / max(np.std(noise), 1e-12)
    m = tones + noise
    m -= m.mean()
    return m / np.sqrt(np.mean(m ** 2))


def _analog(kind: ModulationKind, rng: np.random.Generator) -> np.ndarray:
    pad = 64
    m = _message(rng, FRAME_LEN + 2 * pad)
    if kind == ModulationKind.AM_DSB:
        x = 1.0 + AM_DSB_DEPTH * m / np.max(np.abs(m)) + 0j
    elif kind == ModulationKind.AM_SSB:
        x = sps.hilbert(m)
    else:  # WBFM
        x = np.exp(1j * 2 * np.pi * WBFM_DEVIATION * np.cumsum(m))
    return x[pad:pad + FRAME_LEN]


def _clean(kind: Kind, rng: np.random.Generator, preamble: int = 0) -> np.ndarray:
    kind = parse_kind(kind)
    if kind == IDLE:
        return np.zeros(FRAME_LEN, dtype=np.complex128)
    if kind in CONSTELLATIONS:
        x = _linear(kind, rng, preamble)
    elif kind == ModulationKind.CPFSK:
        x = _cpfsk(rng)
    elif kind == ModulationKind.GFSK:
        x = _gfsk(rng)
    else:
        x = _analog(kind, rng)
    x = np.asarray(x, dtype=np.complex128)
    return x / np.sqrt(np.mean(np.abs(x) ** 2))


def noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return signal_power / 10.0 ** (snr_db / 10.0)


def apply_awgn(frame: IQFrame, snr_db: float, rng: np.random.Generator) -> IQFrame:
    """Add complex white Gaussian noise realizing ``snr_db``.

    Idle frames have no signal power; their noise is drawn at the level a
    unit-power signal would see at the same SNR.
    """
    power = frame.power if parse_kind(frame.modkind) != IDLE else 1.0
    var = noise_variance(snr_db, power)
    if var == 0.0:
        return IQFrame(frame.samples.copy(), snr_db, frame.modkind)
    noise = rng.standard_normal((2, FRAME_LEN)) * math.sqrt(var / 2.0)
    return IQFrame(frame.samples + noise[0] + 1j * noise[1], snr_db, frame.modkind)


def synth_clean(kind: Kind, rng: np.random.Generator, preamble: int = 0) -> IQFrame:
    """Noiseless unit-power frame (all-zero for idle)."""
    return IQFrame(_clean(kind, rng, preamble), math.inf, parse_kind(kind))


def synth_frame(kind: Kind, snr_db: float, rng: np.random.Generator,
                preamble: int = 0) -> IQFrame:
    """Synthesize one frame of ``kind`` at ``snr_db``.

    ``preamble`` fixes the first symbols of a linear modulation to a known
    sequence (used for packets whose absolute phase must be observable).
    """
    if not math.isfinite(snr_db) and not (math.isinf(snr_db) and snr_db > 0):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    return apply_awgn(synth_clean(kind, rng, preamble), snr_db, rng)


def rotate_frame(frame: IQFrame, theta: float) -> IQFrame:
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    return IQFrame(frame.samples * np.exp(1j * theta), frame.snr_db, frame.modkind)


def superimpose(a: IQFrame, b: IQFrame, mixing) -> tuple[IQFrame, IQFrame]:
    """Two observations, each a row-weighted linear combination of ``a`` and ``b``."""
    mixing = np.asarray(mixing, dtype=float)
    if mixing.shape != (2, 2):
        raise ValueError("mixing must be 2x2")
    if abs(np.linalg.det(mixing)) <= 1e-6:
        raise SingularMixing(f"|det| = {abs(np.linalg.det(mixing)):.3g}")
    out = []
    for row in mixing:
        dominant = a.modkind if abs(row[0]) >= abs(row[1]) else b.modkind
        out.append(IQFrame(row[0] * a.samples + row[1] * b.samples,
                           min(a.snr_db, b.snr_db), dominant))
    return out[0], out[1]


# --- datasets -----------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    modulations: Sequence[Kind] = tuple(ModulationKind)
    snr_grid_db: Sequence[float] = DEFAULT_SNR_GRID
    per_mod_count: int = 1000
    seed: int = 0

    def __post_init__(self):
        if len(self.snr_grid_db) == 0:
            raise ValueError("snr grid must be non-empty")
        if self.per_mod_count <= 0:
            raise ValueError("per_mod_count must be positive")
        if len(self.modulations) == 0:
            raise ValueError("at least one modulation is required")
        object.__setattr__(self, "modulations", tuple(parse_kind(k) for k in self.modulations))
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))


@dataclass
class Dataset:
    """Frames stored as arrays: ``iq`` is (n, 128) complex."""

    iq: np.ndarray
    modkinds: np.ndarray
    snr_db: np.ndarray
    classes: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.classes is None:
            self.classes = np.array([int(class_of(k)) for k in self.modkinds], dtype=int)

    def __len__(self) -> int:
        return len(self.iq)

    def __iter__(self) -> Iterator[tuple[IQFrame, Kind, SignalClass]]:
        for x, k, s, c in zip(self.iq, self.modkinds, self.snr_db, self.classes):
            kind = parse_kind(k)
            yield IQFrame(x, float(s), kind), kind, SignalClass(int(c))

    def channels(self) -> np.ndarray:
        """(n, 128, 2) real network input."""
        return np.stack([self.iq.real, self.iq.imag], axis=-1)

    def subset(self, mask) -> "Dataset":
        return Dataset(self.iq[mask], self.modkinds[mask], self.snr_db[mask], self.classes[mask])

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        return Dataset(np.concatenate([p.iq for p in parts]),
                       np.concatenate([p.modkinds for p in parts]),
                       np.concatenate([p.snr_db for p in parts]),
                       np.concatenate([p.classes for p in parts]))


def make_dataset(spec: DatasetSpec, preamble: int = 0) -> Dataset:
    """``per_mod_count`` frames per (modulation, SNR) pair, deterministic in ``spec.seed``."""
    iq, kinds, snrs = [], [], []
    for kind in spec.modulations:
        for snr in spec.snr_grid_db:
            rng = substream(spec.seed, "sigsynth", str(kind), repr(snr))
            for _ in range(spec.per_mod_count):
                iq.append(synth_frame(kind, snr, rng, preamble).samples)
                kinds.append(str(kind))
                snrs.append(snr)
    return Dataset(np.array(iq), np.array(kinds, dtype=object), np.array(snrs, dtype=float))


def write_dataset_csv(ds: Dataset, path) -> None:
    """One row per frame: frame_id, modkind, snr_db, I[0..127], Q[0..127], class."""
    header = (["frame_id", "modkind", "snr_db"] + [f"i{k}" for k in range(FRAME_LEN)]
              + [f"q{k}" for k in range(FRAME_LEN)] + ["class"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for fid, (frame, kind, cls) in enumerate(ds):
            w.writerow([fid, str(kind), repr(float(frame.snr_db))]
                       + [repr(float(v)) for v in frame.samples.real]
                       + [repr(float(v)) for v in frame.samples.imag] + [cls.label])


def read_dataset_csv(path) -> Dataset:
    iq, kinds, snrs = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            kinds.append(row[1])
            snrs.append(float(row[2]))
            vals = np.array(row[3:3 + 2 * FRAME_LEN], dtype=float)
            iq.append(vals[:FRAME_LEN] + 1j * vals[FRAME_LEN:])
    return Dataset(np.array(iq), np.array(kinds, dtype=object), np.array(snrs, dtype=float))
