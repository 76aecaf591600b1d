"""Framing, Hamming analysis and overlap-add resynthesis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SAMPLE_RATE = 50000


class NonFiniteError(ValueError):
    """NaN or infinity where finite samples are required."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("AudioBuffer is mono: samples must be 1-D")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("AudioBuffer samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters. Defaults: 800-sample frames, hop 500, 2048-point DFT."""

    frame_len: int = 800
    hop: int = 500
    dft_size: int = 2048
    window: str = "hamming"

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len <= self.dft_size:
            raise ValueError(
                f"need 0 < hop <= frame_len <= dft_size, got "
                f"hop={self.hop} frame_len={self.frame_len} dft_size={self.dft_size}")
        if self.dft_size & (self.dft_size - 1):
            raise ValueError(f"dft_size must be a power of two, got {self.dft_size}")
        if self.window != "hamming":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.dft_size // 2 + 1

    @classmethod
    def for_vps(cls, vectors_per_second: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
                frame_len: int = 800, dft_size: int = 2048) -> "StftConfig":
        """Hop chosen so the frame rate is ``vectors_per_second`` (75 -> hop 667 at 50 kHz)."""
        hop = math.ceil(sample_rate / vectors_per_second)
        return cls(frame_len=frame_len, hop=hop, dft_size=dft_size)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            return 0
        return 1 + (n_samples - self.frame_len) // self.hop

    def output_length(self, n_frames: int) -> int:
        return (n_frames - 1) * self.hop + self.frame_len


@dataclass(frozen=True)
class ComplexSpectrogram:
    frames: np.ndarray  # T x (dft_size/2 + 1), complex
    config: StftConfig = field(default_factory=StftConfig)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hamming_window(n: int) -> np.ndarray:
    """Symmetric Hamming window, ``0.54 - 0.46 cos(2 pi i / (n - 1))``."""
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    i = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * i / (n - 1))


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Strided T x frame_len view of ``x`` (no padding, trailing remainder dropped)."""
    x = np.ascontiguousarray(x)
    n_frames = 1 + (x.shape[0] - frame_len) // hop
    return np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, frame_len),
        strides=(x.strides[0] * hop, x.strides[0]), writeable=False)


def stft(audio: AudioBuffer, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """One-sided STFT with a Hamming window and zero padding to ``cfg.dft_size``.

    Parameters
    ----------
    audio : AudioBuffer
        Input signal; must hold at least one full frame.
    cfg : StftConfig
        Frame length, hop and DFT size.

    Returns
    -------
    ComplexSpectrogram
        ``T = 1 + (len - frame_len) // hop`` frames of ``dft_size // 2 + 1`` bins.
    """
    if len(audio) < cfg.frame_len:
        raise ValueError(
            f"audio has {len(audio)} samples, shorter than one frame ({cfg.frame_len})")
    frames = frame_signal(audio.samples, cfg.frame_len, cfg.hop) * hamming_window(cfg.frame_len)
    spec = np.fft.rfft(frames, n=cfg.dft_size, axis=1)
    return ComplexSpectrogram(spec, cfg)


def split_mag_phase(spec: ComplexSpectrogram) -> tuple[np.ndarray, np.ndarray]:
    z = spec.frames if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    # np.angle(0) is already 0
    return np.abs(z), np.angle(z)


def power_of(mag: np.ndarray) -> np.ndarray:
    return np.square(mag)


def istft_overlap_add(mag: np.ndarray, phase: np.ndarray,
                      cfg: StftConfig = StftConfig(),
                      sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Weighted overlap-add inverse of :func:`stft`.

    Each inverse frame is multiplied by the analysis window, accumulated, and
    divided by the accumulated squared window (floored at 1e-8), which inverts
    the analysis exactly for any hop <= frame_len.
    """
    mag = np.asarray(mag, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if mag.shape != phase.shape:
        raise ValueError(f"magnitude {mag.shape} and phase {phase.shape} differ in shape")
    if mag.ndim != 2 or mag.shape[1] != cfg.n_bins:
        raise ValueError(f"expected T x {cfg.n_bins} spectrogram, got {mag.shape}")
    n_frames = mag.shape[0]
    if n_frames == 0:
        return AudioBuffer(np.zeros(0), sample_rate)

    frames = np.fft.irfft(mag * np.exp(1j * phase), n=cfg.dft_size, axis=1)[:, :cfg.frame_len]
    win = hamming_window(cfg.frame_len)
    out_len = cfg.output_length(n_frames)
    out = np.zeros(out_len)
    wsum = np.zeros(out_len)
    for t in range(n_frames):
        s = t * cfg.hop
        out[s:s + cfg.frame_len] += frames[t] * win
        wsum[s:s + cfg.frame_len] += win * win
    return AudioBuffer(out / np.maximum(wsum, 1e-8), sample_rate)


def resynthesize(spec: ComplexSpectrogram, mag: np.ndarray,
                 sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Rebuild audio from a modified magnitude and the phase of ``spec``."""
    _, phase = split_mag_phase(spec)
    return istft_overlap_add(mag, phase, spec.config, sample_rate)
