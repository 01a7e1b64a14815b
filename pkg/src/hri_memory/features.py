"""Preprocessing: face alignment, audio chunking, energy VAD and
gammatonegram extraction on an ERB-spaced filterbank."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .mot import BoundingBox
from .sls import AudioEvent

ALIGNED_SIZE = 180
N_FILTERS = 128
FRAMES_PER_CHANNEL = 96
CHUNK_SECONDS = 1.0
HOP_SECONDS = 0.25
SUBFRAME_SECONDS = 0.03
VAD_MIN_FRACTION = 0.8
VAD_MARGIN_DB = 3.0
ABSOLUTE_FLOOR_DBFS = -60.0
F_MIN = 50.0
IR_SECONDS = 0.1
ERB_Q, ERB_MIN_BW = 9.26449, 24.7  # Glasberg & Moore


class FeatureError(ValueError):
    pass


# ---- faces --------------------------------------------------------------

def align_face(image: np.ndarray, bbox: BoundingBox, size: int = ALIGNED_SIZE) -> np.ndarray:
    """Square crop centred on the box, bilinearly resampled to size x size.

    The square side is the longer box side. Sample points falling outside
    the image are zero.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FeatureError("align_face expects a 2-D grayscale image")
    h, w = img.shape
    if bbox.x1 >= w or bbox.y1 >= h:
        raise FeatureError(f"box {bbox} lies outside the {w}x{h} image")
    cx, cy = bbox.center
    side = max(bbox.width, bbox.height)
    # pixel-centre mapping so that a full-frame box at the same size is the identity
    coords = (np.arange(size) + 0.5) * side / size - side / 2
    xs = cx + coords - 0.5
    ys = cy + coords - 0.5
    inside = (((xs >= -0.5) & (xs <= w - 0.5))[None, :]
              & ((ys >= -0.5) & (ys <= h - 0.5))[:, None])
    xs_c = np.clip(xs, 0, w - 1)
    ys_c = np.clip(ys, 0, h - 1)
    x0 = np.minimum(np.floor(xs_c).astype(int), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys_c).astype(int), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs_c - x0)[None, :]
    fy = (ys_c - y0)[:, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = np.where(inside, top * (1 - fy) + bot * fy, 0.0)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def align_crop(crop: np.ndarray, size: int = ALIGNED_SIZE) -> np.ndarray:
    """Align a detector crop whose box is the whole crop."""
    h, w = np.asarray(crop).shape
    return align_face(crop, BoundingBox(0.0, 0.0, float(w), float(h)), size)


# ---- audio chunks and VAD ----------------------------------------------

def _as_float(signal) -> np.ndarray:
    if isinstance(signal, AudioEvent):
        return signal.as_float()
    x = np.asarray(signal)
    if x.dtype == np.int16:
        return x.astype(np.float64) / 32768.0
    return x.astype(np.float64)


def chunk_audio(signal, sample_rate: int, window: float = CHUNK_SECONDS,
                hop: float = HOP_SECONDS) -> list[np.ndarray]:
    """Overlapping windows; chunk k covers [k*hop, k*hop + window) seconds.

    Signals shorter than one window give no chunks.
    """
    x = np.asarray(signal)
    win = int(round(window * sample_rate))
    step = int(round(hop * sample_rate))
    if win <= 0 or step <= 0:
        raise FeatureError("window and hop must be positive")
    if len(x) < win:
        return []
    n = (len(x) - win) // step + 1
    return [x[k * step:k * step + win] for k in range(n)]


def subframe_power(chunk, sample_rate: int, subframe: float = SUBFRAME_SECONDS) -> np.ndarray:
    """Mean-square power of consecutive non-overlapping subframes, averaged
    over channels. A trailing partial subframe is dropped."""
    x = _as_float(chunk)
    if x.ndim == 1:
        x = x[:, None]
    n = int(round(subframe * sample_rate))
    k = len(x) // n
    if k == 0:
        return np.zeros(0)
    return np.mean(x[:k * n].reshape(k, n, -1) ** 2, axis=(1, 2))


def estimate_noise_floor(recording, sample_rate: int, subframe: float = SUBFRAME_SECONDS) -> float:
    """Noise power from a noise-only recording (median subframe power)."""
    p = subframe_power(recording, sample_rate, subframe)
    if p.size == 0:
        raise FeatureError("noise recording is shorter than one subframe")
    return float(np.median(p))


def vad_threshold(noise_floor: float | None, margin_db: float = VAD_MARGIN_DB) -> float:
    floor = 10 ** (ABSOLUTE_FLOOR_DBFS / 10) if noise_floor is None else noise_floor
    return floor * 10 ** (margin_db / 10)


def vad_fraction(chunk, sample_rate: int = 16000, noise_floor: float | None = None,
                 margin_db: float = VAD_MARGIN_DB) -> float:
    """Fraction of 30 ms subframes whose power exceeds the noise floor by
    more than `margin_db`. Without a measured floor a fixed -60 dBFS floor
    is used."""
    p = subframe_power(chunk, sample_rate)
    if p.size == 0:
        return 0.0
    return float(np.mean(p > vad_threshold(noise_floor, margin_db)))


def voiced_chunks(signal, sample_rate: int, noise_floor: float | None = None,
                  min_fraction: float = VAD_MIN_FRACTION) -> list[np.ndarray]:
    return [c for c in chunk_audio(signal, sample_rate)
            if vad_fraction(c, sample_rate, noise_floor) >= min_fraction]


# ---- ERB filterbank -----------------------------------------------------

def erb_rate(f):
    return 21.4 * np.log10(0.00437 * np.asarray(f, dtype=np.float64) + 1.0)


def inverse_erb_rate(e):
    return (10 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 0.00437


def erb_bandwidth(f):
    return ERB_MIN_BW + np.asarray(f, dtype=np.float64) / ERB_Q


def erb_center_frequencies(n: int, f_min: float, f_max: float) -> np.ndarray:
    """n frequencies from f_min to f_max, equally spaced in ERB rate."""
    if n < 2:
        raise FeatureError("need at least two filters")
    if not (0 < f_min < f_max) or not math.isfinite(f_max):
        raise FeatureError(f"invalid range ({f_min}, {f_max})")
    e = np.linspace(erb_rate(f_min), erb_rate(f_max), n)
    out = inverse_erb_rate(e)
    out[0], out[-1] = f_min, f_max
    return out


@lru_cache(maxsize=8)
def _filterbank(n_filters: int, sample_rate: int, n_fft: int, f_max: float) -> np.ndarray:
    """Frequency responses (n_filters, n_fft//2 + 1) of 4th-order gammatone
    impulse responses, each scaled to unit peak gain."""
    cf = erb_center_frequencies(n_filters, F_MIN, f_max)
    t = np.arange(int(IR_SECONDS * sample_rate)) / sample_rate
    b = 1.019 * erb_bandwidth(cf)[:, None]
    ir = t ** 3 * np.exp(-2 * np.pi * b * t) * np.cos(2 * np.pi * cf[:, None] * t)
    h = sfft.rfft(ir, n_fft, axis=1)
    h /= np.abs(h).max(axis=1, keepdims=True)
    h = h.astype(np.complex64)  # single precision halves the cost of the inverse transforms
    h.flags.writeable = False
    return h


def default_f_max(sample_rate: int) -> float:
    return 0.95 * sample_rate / 2


def _frame_edges(n: int, frames: int) -> np.ndarray:
    return np.round(np.arange(frames) * n / frames).astype(int)


def filterbank_energy(x: np.ndarray, sample_rate: int, n_filters: int = N_FILTERS,
                      frames: int = FRAMES_PER_CHANNEL, f_max: float | None = None) -> np.ndarray:
    """(n_filters, frames) mean-square filter output per frame of one channel."""
    n = len(x)
    ir_len = int(IR_SECONDS * sample_rate)
    n_fft = sfft.next_fast_len(n + ir_len - 1, real=True)
    h = _filterbank(n_filters, sample_rate, n_fft, f_max or default_f_max(sample_rate))
    spec = sfft.rfft(np.asarray(x, dtype=np.float32), n_fft)
    y = sfft.irfft(spec[None, :] * h, n_fft, axis=1)[:, :n]
    edges = _frame_edges(n, frames)
    counts = np.diff(np.append(edges, n))
    return np.add.reduceat(np.square(y, dtype=np.float64), edges, axis=1) / counts


def gammatonegram(chunk, sample_rate: int = 16000, n_filters: int = N_FILTERS,
                  log: bool = False, f_max: float | None = None) -> np.ndarray:
    """Gammatone energies of a 1 s chunk: rows are filters from low to high
    centre frequency, columns are 96 frames of channel 0 then 96 of
    channel 1. A mono chunk is used for both channels.

    With `log`, energies are mapped through log10(e + 1e-10).
    """
    x = _as_float(chunk)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] not in (1, 2):
        raise FeatureError(f"expected mono or stereo audio, got shape {x.shape}")
    if x.shape[0] != int(round(CHUNK_SECONDS * sample_rate)):
        raise FeatureError(f"expected a {CHUNK_SECONDS:g} s chunk, got {x.shape[0]} samples")
    if x.shape[1] == 1:
        x = np.repeat(x, 2, axis=1)
    g = np.hstack([filterbank_energy(x[:, c], sample_rate, n_filters, f_max=f_max) for c in range(2)])
    g = np.maximum(g, 0.0)
    return np.log10(g + 1e-10) if log else g

