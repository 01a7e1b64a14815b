"""Sound source localization: azimuth estimation and binning.

Azimuth convention: degrees in [-90, 90], negative to the agent's left,
0 straight ahead. Two-channel audio is ordered (left ear, right ear).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

AZIMUTH_MIN = -90.0
AZIMUTH_MAX = 90.0
BIN_EDGE = 30.0
SPEED_OF_SOUND = 343.0  # m/s
MIC_SPACING = 0.15  # m, ear-to-ear


class AzimuthBin(enum.Enum):
    LEFT = "Left"
    CENTER = "Center"
    RIGHT = "Right"

    def __str__(self) -> str:
        return self.value

    @property
    def center(self) -> float:
        return {AzimuthBin.LEFT: -60.0, AzimuthBin.CENTER: 0.0, AzimuthBin.RIGHT: 60.0}[self]

    @classmethod
    def parse(cls, text: str) -> "AzimuthBin":
        for b in cls:
            if b.value.lower() == text.strip().lower():
                return b
        raise ValueError(f"unknown azimuth bin {text!r}")


def bin_azimuth(azimuth: float) -> AzimuthBin:
    """Map an azimuth to its 60-degree bin. The ±30 boundaries go to Center."""
    azimuth = float(azimuth)
    if not (AZIMUTH_MIN <= azimuth <= AZIMUTH_MAX):
        raise ValueError(f"azimuth {azimuth} outside [-90, 90]")
    if azimuth < -BIN_EDGE:
        return AzimuthBin.LEFT
    if azimuth > BIN_EDGE:
        return AzimuthBin.RIGHT
    return AzimuthBin.CENTER


def bin_edges(b: AzimuthBin) -> tuple[float, float]:
    return {
        AzimuthBin.LEFT: (AZIMUTH_MIN, -BIN_EDGE),
        AzimuthBin.CENTER: (-BIN_EDGE, BIN_EDGE),
        AzimuthBin.RIGHT: (BIN_EDGE, AZIMUTH_MAX),
    }[b]


@dataclass(frozen=True)
class AudioEvent:
    """A block of int16 PCM with shape (n_samples, n_channels)."""

    samples: np.ndarray
    sample_rate: int
    true_azimuth: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 1:
            s = s[:, None]
        if s.dtype != np.int16:
            raise TypeError("samples must be int16 PCM")
        if s.ndim != 2 or s.shape[1] not in (1, 2):
            raise ValueError(f"expected 1 or 2 channels, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not (AZIMUTH_MIN <= self.true_azimuth <= AZIMUTH_MAX):
            raise ValueError("true_azimuth outside [-90, 90]")
        object.__setattr__(self, "samples", s)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def as_float(self) -> np.ndarray:
        return self.samples.astype(np.float64) / 32768.0


class UnsupportedInput(ValueError):
    pass


class NoisyOracleEstimator:
    """Ground-truth azimuth plus zero-mean Gaussian noise, clamped to range."""

    def __init__(self, sigma: float = 5.0, seed: int = 0):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.sigma = float(sigma)
        self.rng = np.random.default_rng(seed)

    def __call__(self, event: AudioEvent) -> float:
        noise = self.rng.normal(0.0, self.sigma) if self.sigma > 0 else 0.0
        return float(np.clip(event.true_azimuth + noise, AZIMUTH_MIN, AZIMUTH_MAX))


def itd_for_azimuth(azimuth: float, spacing: float = MIC_SPACING) -> float:
    """Right-minus-left arrival delay (s) of a far-field source."""
    return -spacing * np.sin(np.deg2rad(azimuth)) / SPEED_OF_SOUND


class GccPhatEstimator:
    """Time-difference-of-arrival estimator using GCC-PHAT on a stereo pair.

    The cross-power spectrum is whitened, zero-padded by `upsample` for
    sub-sample lag resolution and searched within the physically possible
    lag range.
    """

    def __init__(self, spacing: float = MIC_SPACING, upsample: int = 16):
        self.spacing = spacing
        self.upsample = upsample

    def delay(self, event: AudioEvent) -> float:
        if event.n_channels != 2:
            raise UnsupportedInput("cross-correlation estimator needs 2 channels")
        x = event.as_float()
        left, right = x[:, 0], x[:, 1]
        n = 2 * len(left)
        spec = np.fft.rfft(right, n) * np.conj(np.fft.rfft(left, n))
        mag = np.abs(spec)
        spec = np.where(mag > 1e-12, spec / np.maximum(mag, 1e-12), 0.0)
        cc = np.fft.irfft(spec, n * self.upsample)
        fs = event.sample_rate * self.upsample
        max_shift = int(np.ceil(self.spacing / SPEED_OF_SOUND * fs))
        cc = np.concatenate([cc[-max_shift:], cc[: max_shift + 1]])
        lag = int(np.argmax(cc)) - max_shift
        return lag / fs

    def __call__(self, event: AudioEvent) -> float:
        tau = self.delay(event)
        s = np.clip(-tau * SPEED_OF_SOUND / self.spacing, -1.0, 1.0)
        return float(np.rad2deg(np.arcsin(s)))


def estimate_azimuth(event: AudioEvent, estimator) -> float:
    if event.samples.shape[0] == 0:
        raise ValueError("empty audio event")
    return estimator(event)
