"""16-bit PCM mono WAV reading and writing."""
from __future__ import annotations

import os
import wave

import numpy as np

from .dsp import AudioBuffer

_SCALE = 32768.0


class WavFormatError(ValueError):
    pass


def read_wav(path: str | os.PathLike) -> AudioBuffer:
    try:
        with wave.open(os.fspath(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise WavFormatError(f"{path}: expected mono, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / _SCALE, rate)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Clip to [-1, 1], scale by 32768 and round half away from zero."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * _SCALE
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(path: str | os.PathLike, audio: AudioBuffer) -> None:
    with wave.open(os.fspath(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(audio.sample_rate))
        fh.writeframes(quantize(audio.samples).tobytes())
