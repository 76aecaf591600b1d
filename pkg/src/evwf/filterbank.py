"""Mel filterbank analysis, log-FB features and least-squares inverse synthesis."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dsp import AudioBuffer, StftConfig, power_of, split_mag_phase, stft

DEFAULT_CHANNELS = 23
DEFAULT_FLOOR = 1e-10


def mel_from_hz(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def hz_from_mel(m):
    m = np.asarray(m, dtype=np.float64)
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    """Triangular mel analysis weights and their cached left inverse.

    ``weights`` is N x M (bins x channels); ``pinv`` is M x N with
    ``pinv @ weights == I_M``.
    """

    sample_rate: float
    dft_size: int
    boundary_hz: np.ndarray
    boundary_bins: np.ndarray
    weights: np.ndarray
    pinv: np.ndarray
    ridge: float = 0.0

    @property
    def n_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin"] + [f"ch{m}" for m in range(self.n_channels)])
        for k, row in enumerate(self.weights):
            w.writerow([k] + [repr(float(v)) for v in row])
        return buf.getvalue()


def triangle_weights(boundary_bins: np.ndarray, n_bins: int) -> np.ndarray:
    """Piecewise-linear filters: rise over [b[m-1], b[m]], fall over [b[m], b[m+1]]."""
    b = np.asarray(boundary_bins, dtype=np.float64)
    n_channels = b.shape[0] - 2
    k = np.arange(n_bins, dtype=np.float64)[:, None]
    lo, mid, hi = b[:-2], b[1:-1], b[2:]
    rising = (k - lo) / (mid - lo)
    falling = (hi - k) / (hi - mid)
    w = np.where(k <= mid, rising, falling)
    w[(k < lo) | (k > hi)] = 0.0
    assert w.shape == (n_bins, n_channels)
    return np.clip(w, 0.0, 1.0)


def build_filterbank(sample_rate: float = 50000, dft_size: int = 2048,
                     channels: int = DEFAULT_CHANNELS, ridge: float = 0.0) -> MelFilterbank:
    """Mel filterbank with boundaries equally spaced in mel from 0 Hz to Nyquist.

    Boundary frequencies map to DFT bins as ``floor(dft_size * f / sample_rate)``.
    The left inverse solves ``(W^T W + ridge I) pinv = W^T``.
    """
    if channels < 1:
        raise ValueError("need at least one channel")
    if dft_size < 2 * channels:
        raise ValueError(f"dft_size {dft_size} too small for {channels} channels")
    nyquist = sample_rate / 2.0
    mels = np.linspace(0.0, mel_from_hz(nyquist), channels + 2)
    hz = hz_from_mel(mels)
    hz[0], hz[-1] = 0.0, nyquist
    bins = np.floor(dft_size * hz / sample_rate + 1e-9).astype(np.int64)
    if np.any(np.diff(bins) <= 0):
        bad = int(np.argmax(np.diff(bins) <= 0))
        raise ValueError(
            f"{channels} channels too many for a {dft_size}-point DFT at {sample_rate} Hz: "
            f"boundary {bad} and {bad + 1} fall in the same bin ({bins[bad]})")
    n_bins = dft_size // 2 + 1
    weights = triangle_weights(bins, n_bins)
    gram = weights.T @ weights
    if ridge:
        gram = gram + ridge * np.eye(channels)
    pinv = scipy.linalg.solve(gram, weights.T, assume_a="pos")
    for a in (weights, pinv, hz, bins):
        a.setflags(write=False)
    return MelFilterbank(float(sample_rate), int(dft_size), hz, bins, weights, pinv, ridge)


@dataclass(frozen=True)
class LogFbFeatures:
    frames: np.ndarray  # T x M natural-log energies
    floor_eps: float = DEFAULT_FLOOR

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _check_width(x: np.ndarray, width: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != width:
        raise ValueError(f"{what} has width {x.shape[-1]}, expected {width}")
    return x


def analysis(fb: MelFilterbank, power: np.ndarray) -> np.ndarray:
    """Filterbank energies ``power @ weights`` (T x N -> T x M)."""
    return _check_width(power, fb.n_bins, "power spectrum") @ fb.weights


def synthesis(fb: MelFilterbank, energies: np.ndarray,
              spectral_floor: float | None = DEFAULT_FLOOR) -> np.ndarray:
    """Least-squares power spectrum ``energies @ pinv``, clamped to ``spectral_floor``.

    The unclamped least-squares solution can dip below zero between channels of
    very different energy; pass ``spectral_floor=None`` to get it raw.
    """
    spec = _check_width(energies, fb.n_channels, "filterbank energies") @ fb.pinv
    if spectral_floor is None:
        return spec
    return np.maximum(spec, spectral_floor)


def log_compress(energies: np.ndarray, floor_eps: float = DEFAULT_FLOOR) -> LogFbFeatures:
    if floor_eps <= 0:
        raise ValueError("floor_eps must be positive")
    return LogFbFeatures(np.log(np.maximum(energies, floor_eps)), floor_eps)


def exp_expand(feat: LogFbFeatures | np.ndarray) -> np.ndarray:
    frames = feat.frames if isinstance(feat, LogFbFeatures) else feat
    return np.exp(frames)


def extract_logfb(audio: AudioBuffer, cfg: StftConfig, fb: MelFilterbank,
                  floor_eps: float = DEFAULT_FLOOR) -> LogFbFeatures:
    if cfg.dft_size != fb.dft_size:
        raise ValueError(f"STFT uses {cfg.dft_size} points but filterbank was built for {fb.dft_size}")
    mag, _ = split_mag_phase(stft(audio, cfg))
    return log_compress(analysis(fb, power_of(mag)), floor_eps)
