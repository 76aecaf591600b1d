"""Audio-only comparison methods: power spectral subtraction and Log-MMSE.

Both estimate the noise spectrum from the leading frames of the utterance, so
inputs are expected to start with a few frames of noise-only content.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .dsp import AudioBuffer, StftConfig, power_of, resynthesize, split_mag_phase, stft


@dataclass(frozen=True)
class NoiseEstimate:
    psd: np.ndarray
    frames_used: int


@dataclass(frozen=True)
class SsConfig:
    oversubtraction: float = 1.0
    floor: float = 0.02
    noise_frames: int = 6
    track_noise: bool = False
    vad_threshold_db: float = 30.0

    def __post_init__(self):
        if self.oversubtraction < 0:
            raise ValueError("oversubtraction must be >= 0")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError("floor must lie in [0, 1)")
        if self.noise_frames < 1:
            raise ValueError("noise_frames must be >= 1")


@dataclass(frozen=True)
class LogMmseConfig:
    dd_alpha: float = 0.98
    xi_min_db: float = -25.0
    noise_frames: int = 6
    track_noise: bool = False
    vad_threshold_db: float = 30.0

    def __post_init__(self):
        if not 0.0 < self.dd_alpha < 1.0:
            raise ValueError("dd_alpha must lie in (0, 1)")
        if self.noise_frames < 1:
            raise ValueError("noise_frames must be >= 1")


def estimate_noise_initial(noisy_mag: np.ndarray, n_frames: int) -> NoiseEstimate:
    """Mean power of the first ``n_frames`` frames, per bin."""
    noisy_mag = np.asarray(noisy_mag, dtype=np.float64)
    if n_frames < 1 or noisy_mag.ndim != 2 or noisy_mag.shape[0] < n_frames:
        raise ValueError(
            f"need at least {max(n_frames, 1)} frames for noise estimation, "
            f"got {noisy_mag.shape[0] if noisy_mag.ndim == 2 else 0}")
    return NoiseEstimate(power_of(noisy_mag[:n_frames]).mean(axis=0), n_frames)


def energy_vad(frame_energies, threshold_db_below_peak: float) -> np.ndarray:
    """Frames whose energy lies within ``threshold_db_below_peak`` of the loudest frame."""
    e = np.asarray(frame_energies, dtype=np.float64)
    if e.size == 0:
        raise ValueError("energy_vad needs at least one frame")
    return e >= e.max() * 10.0 ** (-threshold_db_below_peak / 10.0)


def track_noise(power: np.ndarray, initial: NoiseEstimate, speech: np.ndarray,
                smoothing: float = 0.9) -> np.ndarray:
    """Per-frame noise PSD, recursively averaged over non-speech frames."""
    out = np.empty_like(power)
    psd = initial.psd.copy()
    for t in range(power.shape[0]):
        if not speech[t]:
            psd = smoothing * psd + (1.0 - smoothing) * power[t]
        out[t] = psd
    return out


def _noise_track(power, mag, n_frames, tracked, vad_db):
    est = estimate_noise_initial(mag, n_frames)
    if not tracked:
        return np.broadcast_to(est.psd, power.shape)
    return track_noise(power, est, energy_vad(power.sum(axis=1), vad_db))


def subtract_power(power: np.ndarray, noise_psd: np.ndarray,
                   oversubtraction: float, floor: float) -> np.ndarray:
    """``max(|Y|^2 - a N, b |Y|^2)`` per bin."""
    return np.maximum(power - oversubtraction * noise_psd, floor * power)


def spectral_subtract(noisy: AudioBuffer, cfg: SsConfig = SsConfig(),
                      stft_cfg: StftConfig = StftConfig()) -> AudioBuffer:
    spec = stft(noisy, stft_cfg)
    mag, _ = split_mag_phase(spec)
    power = power_of(mag)
    noise = _noise_track(power, mag, cfg.noise_frames, cfg.track_noise, cfg.vad_threshold_db)
    clean_power = subtract_power(power, noise, cfg.oversubtraction, cfg.floor)
    return resynthesize(spec, np.sqrt(clean_power), noisy.sample_rate)


def exp1(v) -> np.ndarray:
    """Exponential integral E1(v) for v > 0."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0):
        raise ValueError("exp1 is defined here for positive arguments only")
    return special.exp1(v)


def logmmse_gain(xi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Log-spectral amplitude gain ``xi/(1+xi) * exp(E1(v)/2)``, capped at 1."""
    v = np.maximum(xi * gamma / (1.0 + xi), 1e-300)
    g = xi / (1.0 + xi) * np.exp(0.5 * np.minimum(exp1(v), 1400.0))
    return np.minimum(g, 1.0)


def logmmse_gains(power: np.ndarray, noise_psd: np.ndarray,
                  cfg: LogMmseConfig = LogMmseConfig()) -> np.ndarray:
    """Frame-recursive gains with decision-directed a-priori SNR."""
    power = np.asarray(power, dtype=np.float64)
    noise_psd = np.maximum(np.broadcast_to(noise_psd, power.shape), 1e-20)
    xi_min = 10.0 ** (cfg.xi_min_db / 10.0)
    a = cfg.dd_alpha
    gains = np.empty_like(power)
    prev_clean = None
    for t in range(power.shape[0]):
        gamma = power[t] / noise_psd[t]
        ml = np.maximum(gamma - 1.0, 0.0)
        if prev_clean is None:
            xi = a + (1.0 - a) * ml
        else:
            xi = a * prev_clean / noise_psd[t] + (1.0 - a) * ml
        xi = np.maximum(xi, xi_min)
        g = logmmse_gain(xi, gamma)
        gains[t] = g
        prev_clean = g * g * power[t]
    return gains


def logmmse(noisy: AudioBuffer, cfg: LogMmseConfig = LogMmseConfig(),
            stft_cfg: StftConfig = StftConfig()) -> AudioBuffer:
    spec = stft(noisy, stft_cfg)
    mag, _ = split_mag_phase(spec)
    power = power_of(mag)
    noise = _noise_track(power, mag, cfg.noise_frames, cfg.track_noise, cfg.vad_threshold_db)
    gains = logmmse_gains(power, noise, cfg)
    return resynthesize(spec, mag * gains, noisy.sample_rate)
