"""Visually derived Wiener filtering: lip-reading driven speech enhancement."""
from .dsp import AudioBuffer, ComplexSpectrogram, NonFiniteError, StftConfig, istft_overlap_add, stft
from .enhance import EvwfConfig, enhance_utterance, evwf_gains
from .filterbank import LogFbFeatures, MelFilterbank, build_filterbank, extract_logfb

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "ComplexSpectrogram", "NonFiniteError", "StftConfig", "istft_overlap_add",
    "stft", "EvwfConfig", "enhance_utterance", "evwf_gains", "LogFbFeatures", "MelFilterbank",
    "build_filterbank", "extract_logfb",
]
