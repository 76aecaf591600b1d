"""Filterbank-domain Wiener filtering driven by externally supplied clean features.

The clean-speech estimate arrives as log filterbank energies (from a lip-reading
model, a file, or the clean reference itself).  Numerator and denominator of the
Wiener ratio are each lifted to full spectral resolution with the filterbank's
least-squares inverse, and the resulting per-bin gain scales the noisy magnitude.
No noise estimate or voice activity detection is involved.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .dsp import AudioBuffer, StftConfig, power_of, resynthesize, split_mag_phase, stft
from .filterbank import (
    DEFAULT_FLOOR,
    LogFbFeatures,
    MelFilterbank,
    analysis,
    exp_expand,
    extract_logfb,
    log_compress,
    synthesis,
)

log = logging.getLogger(__name__)

MAX_FRAME_SLACK = 2


class AlignmentError(ValueError):
    """Clean features and noisy audio disagree on frame count by more than the slack."""


@dataclass(frozen=True)
class EvwfConfig:
    gain_floor: float = 0.0
    spectral_floor: float = DEFAULT_FLOOR
    gain_exponent: str = "direct"  # or "sqrt_power"
    feature_domain: str = "logfb"  # or "linearfb"

    def __post_init__(self):
        if not 0.0 <= self.gain_floor < 1.0:
            raise ValueError(f"gain_floor must lie in [0, 1), got {self.gain_floor}")
        if self.spectral_floor <= 0:
            raise ValueError("spectral_floor must be positive")
        if self.gain_exponent not in ("direct", "sqrt_power"):
            raise ValueError(f"unknown gain_exponent {self.gain_exponent!r}")
        if self.feature_domain not in ("logfb", "linearfb"):
            raise ValueError(f"unknown feature_domain {self.feature_domain!r}")


def fb_wiener_gain(clean_fb: np.ndarray, noisy_fb: np.ndarray,
                   cfg: EvwfConfig = EvwfConfig()) -> np.ndarray:
    """Channel gains ``clean / noisy``, the noisy energy standing in for clean + noise."""
    clean_fb = np.asarray(clean_fb, dtype=np.float64)
    noisy_fb = np.asarray(noisy_fb, dtype=np.float64)
    if clean_fb.shape != noisy_fb.shape:
        raise ValueError(f"shape mismatch: clean {clean_fb.shape} vs noisy {noisy_fb.shape}")
    g = clean_fb / np.maximum(noisy_fb, cfg.spectral_floor)
    return np.clip(g, cfg.gain_floor, 1.0)


def _uncovered_bins(fb: MelFilterbank) -> tuple[np.ndarray, np.ndarray]:
    """Bins no filter touches, and the nearest covered bin for each."""
    covered = np.flatnonzero(fb.weights.sum(axis=1) > 0)
    holes = np.flatnonzero(fb.weights.sum(axis=1) == 0)
    nearest = covered[np.abs(holes[:, None] - covered[None, :]).argmin(axis=1)]
    return holes, nearest


def expand_gain(fb: MelFilterbank, clean_fb: np.ndarray, noisy_fb: np.ndarray,
                cfg: EvwfConfig = EvwfConfig()) -> np.ndarray:
    """Per-bin Wiener gain from filterbank energies (M or T x M -> N or T x N).

    Both energy sets are synthesized to N bins and floored, the ratio is clamped
    to ``[gain_floor, 1]``.

    Two kinds of bin get no usable ratio.  Where the least-squares noisy
    spectrum undershoots to the floor, the gain falls back to the channel
    gains interpolated by the filter weights.  Bins outside every filter's
    support (DC and Nyquist for the standard layout) take the gain of the
    nearest covered bin.
    """
    clean_fb = np.asarray(clean_fb, dtype=np.float64)
    noisy_fb = np.asarray(noisy_fb, dtype=np.float64)
    if clean_fb.shape != noisy_fb.shape:
        raise ValueError(f"shape mismatch: clean {clean_fb.shape} vs noisy {noisy_fb.shape}")
    num = synthesis(fb, clean_fb, cfg.spectral_floor)
    den_raw = synthesis(fb, noisy_fb, None)
    den = np.maximum(den_raw, cfg.spectral_floor)
    gain = np.clip(num / den, cfg.gain_floor, 1.0)
    undershoot = den_raw <= cfg.spectral_floor
    if np.any(undershoot):
        w = fb.weights
        coverage = np.maximum(w.sum(axis=1), 1e-300)
        interp = np.clip((fb_wiener_gain(clean_fb, noisy_fb, cfg) @ w.T) / coverage, cfg.gain_floor, 1.0)
        gain = np.where(undershoot, interp, gain)
    holes, nearest = _uncovered_bins(fb)
    if holes.size:
        gain[..., holes] = gain[..., nearest]
    if cfg.gain_exponent == "sqrt_power":
        gain = np.sqrt(gain)
    return gain


def apply_gain(noisy_mag: np.ndarray, gain: np.ndarray) -> np.ndarray:
    noisy_mag = np.asarray(noisy_mag, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    if noisy_mag.shape != gain.shape:
        raise ValueError(f"magnitude {noisy_mag.shape} and gain {gain.shape} differ in shape")
    return noisy_mag * gain


def _align(clean: np.ndarray, n_noisy: int) -> int:
    n_clean = clean.shape[0]
    if n_clean == n_noisy:
        return n_noisy
    if abs(n_clean - n_noisy) > MAX_FRAME_SLACK:
        raise AlignmentError(
            f"clean features have {n_clean} frames but noisy audio has {n_noisy}")
    warnings.warn(f"trimming to {min(n_clean, n_noisy)} frames "
                  f"(clean {n_clean}, noisy {n_noisy})", stacklevel=3)
    return min(n_clean, n_noisy)


def evwf_gains(noisy: AudioBuffer, clean_feat: LogFbFeatures | np.ndarray,
               fb: MelFilterbank, stft_cfg: StftConfig = StftConfig(),
               evwf_cfg: EvwfConfig = EvwfConfig()):
    """Return ``(spectrogram, gain)`` for ``noisy``, both trimmed to the aligned frame count."""
    spec = stft(noisy, stft_cfg)
    mag, _ = split_mag_phase(spec)
    floor_eps = clean_feat.floor_eps if isinstance(clean_feat, LogFbFeatures) else DEFAULT_FLOOR
    noisy_feat = log_compress(analysis(fb, power_of(mag)), floor_eps)
    frames = clean_feat.frames if isinstance(clean_feat, LogFbFeatures) else np.asarray(clean_feat)
    n = _align(frames, spec.n_frames)
    if evwf_cfg.feature_domain == "logfb":
        clean_fb = exp_expand(frames[:n])
    else:
        clean_fb = np.asarray(frames[:n], dtype=np.float64)
    noisy_fb = exp_expand(noisy_feat.frames[:n])
    gain = expand_gain(fb, clean_fb, noisy_fb, evwf_cfg)
    if n != spec.n_frames:
        spec = type(spec)(spec.frames[:n], spec.config)
    return spec, gain


def enhance_utterance(noisy: AudioBuffer, clean_feat: LogFbFeatures | np.ndarray,
                      fb: MelFilterbank, stft_cfg: StftConfig = StftConfig(),
                      evwf_cfg: EvwfConfig = EvwfConfig()) -> AudioBuffer:
    """Enhance ``noisy`` with the Wiener gain implied by ``clean_feat``.

    ``clean_feat`` must have the same frame count as the STFT of ``noisy``;
    a difference of up to two frames is trimmed with a warning.  The noisy
    phase is reused for resynthesis.
    """
    spec, gain = evwf_gains(noisy, clean_feat, fb, stft_cfg, evwf_cfg)
    mag, _ = split_mag_phase(spec)
    return resynthesize(spec, apply_gain(mag, gain), noisy.sample_rate)


def ideal_mapping_features(clean: AudioBuffer, fb: MelFilterbank,
                           stft_cfg: StftConfig = StftConfig(),
                           floor_eps: float = DEFAULT_FLOOR) -> LogFbFeatures:
    """Oracle clean features taken from the clean reference ("ideal mapping")."""
    return extract_logfb(clean, stft_cfg, fb, floor_eps)
