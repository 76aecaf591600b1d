"""Visual features, AV alignment, noise mixing, dataset splits and a synthetic AV corpus."""
from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .dsp import DEFAULT_SAMPLE_RATE, AudioBuffer, StftConfig
from .filterbank import LogFbFeatures, MelFilterbank, build_filterbank, extract_logfb

N_DCT = 50
UPSAMPLE = 3
RATIOS_70_10_20 = (0.7, 0.1, 0.2)
RATIOS_80_10_10 = (0.8, 0.1, 0.1)
NOISE_LABELS = ("cafe", "street", "bus", "pedestrian", "white", "file")
SNR_GRID = (-12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0)


# --- visual features ---------------------------------------------------------

def dct2(img: np.ndarray) -> np.ndarray:
    """Orthonormal type-II 2-D DCT."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("dct2 needs a non-empty 2-D image")
    return scipy.fft.dctn(img, type=2, norm="ortho")


def idct2(coeffs: np.ndarray) -> np.ndarray:
    return scipy.fft.idctn(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho")


def zigzag_indices(n_rows: int, n_cols: int) -> list[tuple[int, int]]:
    """JPEG zigzag order: (0,0), (0,1), (1,0), (2,0), (1,1), (0,2), ..."""
    out = []
    for s in range(n_rows + n_cols - 1):
        lo, hi = max(0, s - n_cols + 1), min(s, n_rows - 1)
        rows = range(lo, hi + 1) if s % 2 else range(hi, lo - 1, -1)
        out.extend((i, s - i) for i in rows)
    return out


def zigzag_select(coeffs: np.ndarray, count: int = N_DCT) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    if count > coeffs.size:
        raise ValueError(f"asked for {count} coefficients from a {coeffs.shape} matrix")
    idx = zigzag_indices(*coeffs.shape)[:count]
    return np.array([coeffs[i, j] for i, j in idx])


def visual_features(frames, count: int = N_DCT) -> np.ndarray:
    """V lip images -> V x ``count`` zigzag DCT features."""
    return np.stack([zigzag_select(dct2(f), count) for f in frames])


def upsample_triplicate(visual_seq: np.ndarray) -> np.ndarray:
    """Repeat every visual vector three times (25 fps -> 75 vectors/s)."""
    visual_seq = np.asarray(visual_seq)
    if visual_seq.shape[0] == 0:
        raise ValueError("empty visual sequence")
    return np.repeat(visual_seq, UPSAMPLE, axis=0)


# --- alignment and context windows -------------------------------------------

@dataclass
class AlignedUtterance:
    visual: np.ndarray  # T x 50, already at the audio frame rate
    audio_feat: LogFbFeatures  # T x 23
    id: str = ""
    speaker: str = ""

    def __post_init__(self):
        if self.visual.shape[0] != self.audio_feat.n_frames:
            raise ValueError(
                f"{self.id}: {self.visual.shape[0]} visual rows vs "
                f"{self.audio_feat.n_frames} audio frames")

    @property
    def n_frames(self) -> int:
        return self.visual.shape[0]


def build_context_windows(utt: AlignedUtterance, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Windows of the current and ``k`` prior visual rows, oldest first.

    Returns inputs of shape (T-k, k+1, D) and targets of shape (T-k, 23).
    """
    T = utt.n_frames
    if k < 0 or T < k + 1:
        raise ValueError(f"{utt.id}: {T} frames cannot hold a context of {k} prior frames")
    v = np.ascontiguousarray(utt.visual)
    windows = np.lib.stride_tricks.sliding_window_view(v, k + 1, axis=0)  # (T-k, D, k+1)
    inputs = np.ascontiguousarray(np.swapaxes(windows, 1, 2))
    return inputs, utt.audio_feat.frames[k:].copy()


def stack_windows(utterances, k: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = zip(*(build_context_windows(u, k) for u in utterances))
    return np.concatenate(xs), np.concatenate(ys)


# --- noise and mixing ---------------------------------------------------------

@dataclass(frozen=True)
class NoiseMixSpec:
    snr_db: float
    noise_label: str = "white"

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.noise_label not in NOISE_LABELS:
            raise ValueError(f"unknown noise label {self.noise_label!r}")


def mean_power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def mix_at_snr(clean: AudioBuffer, noise: AudioBuffer, spec: NoiseMixSpec) -> AudioBuffer:
    """Add ``noise`` scaled so the full-utterance SNR equals ``spec.snr_db``.

    Noise shorter than the clean signal is tiled cyclically; longer noise is
    truncated to the clean length.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError(f"sample rates differ: {clean.sample_rate} vs {noise.sample_rate}")
    n = len(clean)
    nz = noise.samples
    if len(nz) == 0:
        raise ValueError("empty noise signal")
    if len(nz) < n:
        nz = np.tile(nz, -(-n // len(nz)))
    nz = nz[:n]
    pc, pn = mean_power(clean.samples), mean_power(nz)
    if pc == 0.0 or pn == 0.0:
        raise ValueError("clean and noise must both have non-zero power")
    gain = math.sqrt(pc / (pn * 10.0 ** (spec.snr_db / 10.0)))
    return AudioBuffer(clean.samples + gain * nz, clean.sample_rate)


def measured_snr(clean: np.ndarray, mixture: np.ndarray) -> float:
    return 10.0 * math.log10(mean_power(clean) / mean_power(mixture - clean))


def _shaped_noise(n: int, sample_rate: int, rng, tilt_db_per_oct: float,
                  lowcut: float = 20.0) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = np.where(f < lowcut, 0.0, (np.maximum(f, lowcut) / 1000.0) ** (tilt_db_per_oct / 6.0206))
    x = np.fft.irfft(spec * shape, n)
    return x / np.sqrt(mean_power(x))


def _modulation(n: int, sample_rate: int, rng, rate_hz: float, depth: float) -> np.ndarray:
    t = np.arange(n) / sample_rate
    m = np.zeros(n)
    for _ in range(3):
        f = rate_hz * rng.uniform(0.5, 1.5)
        m += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return 1.0 + depth * m / 3.0


def make_noise(label: str, n_samples: int, sample_rate: int = DEFAULT_SAMPLE_RATE,
               seed: int = 0) -> AudioBuffer:
    """Synthetic stand-ins for the four environment noises, plus white noise.

    The colored variants differ in spectral tilt, low-frequency content and
    amplitude modulation; they are not recordings.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sample_rate
    if label == "white":
        x = rng.standard_normal(n_samples)
    elif label == "cafe":
        babble = _shaped_noise(n_samples, sample_rate, rng, -4.0, lowcut=150.0)
        x = babble * _modulation(n_samples, sample_rate, rng, 4.0, 0.6)
    elif label == "street":
        x = _shaped_noise(n_samples, sample_rate, rng, -6.0)
        x *= _modulation(n_samples, sample_rate, rng, 0.5, 0.5)
    elif label == "bus":
        hum = sum(np.sin(2 * np.pi * 42.0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in range(1, 8))
        x = _shaped_noise(n_samples, sample_rate, rng, -8.0) + 0.5 * hum / np.sqrt(mean_power(hum))
    elif label == "pedestrian":
        x = _shaped_noise(n_samples, sample_rate, rng, -3.0)
        x *= _modulation(n_samples, sample_rate, rng, 1.5, 0.8)
    else:
        raise ValueError(f"cannot synthesize noise {label!r}")
    return AudioBuffer(x / np.sqrt(mean_power(x)), sample_rate)


# --- dataset splits ------------------------------------------------------------

def split_counts(n: int, ratios) -> list[int]:
    """Item counts per split: floor for the first, round-half-up for the middle ones,
    the remainder to the last.  Reproduces 989 -> 692/99/198 at 70/10/20."""
    ratios = [float(r) for r in ratios]
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")
    counts = [math.floor(ratios[0] * n + 1e-9)]
    for r in ratios[1:-1]:
        counts.append(math.floor(r * n + 0.5))
    counts.append(n - sum(counts))
    if counts[-1] < 0:
        raise ValueError(f"ratios {ratios} over-allocate {n} items")
    return counts


def _speaker_of(item):
    if isinstance(item, dict):
        return item.get("speaker", "")
    return getattr(item, "speaker", "")


def split_dataset(utterances, ratios=RATIOS_70_10_20, seed: int = 0,
                  names=("train", "val", "test")) -> dict[str, list]:
    """Per-speaker stratified random split; deterministic for a given seed."""
    utterances = list(utterances)
    if not utterances:
        raise ValueError("cannot split an empty dataset")
    if len(names) != len(ratios):
        raise ValueError("need one name per ratio")
    rng = np.random.default_rng(seed)
    groups: dict[str, list] = {}
    for u in utterances:
        groups.setdefault(_speaker_of(u), []).append(u)
    out = {name: [] for name in names}
    for spk in sorted(groups):
        items = groups[spk]
        perm = rng.permutation(len(items))
        start = 0
        for name, c in zip(names, split_counts(len(items), ratios)):
            out[name].extend(items[i] for i in perm[start:start + c])
            start += c
    return out


# --- synthetic AV corpus ----------------------------------------------------------

@dataclass(frozen=True)
class SpeakerStyle:
    name: str
    f0: float
    tract_scale: float
    lip_width: float
    skin: float


SPEAKERS = (
    SpeakerStyle("spk1", 115.0, 1.00, 9.0, 0.78),
    SpeakerStyle("spk2", 205.0, 1.15, 8.0, 0.70),
    SpeakerStyle("spk3", 140.0, 1.05, 10.0, 0.62),
)


@dataclass(frozen=True)
class CorpusConfig:
    n_utterances: int = 200
    video_frames: int = 25
    lead_in_frames: int = 3
    n_speakers: int = 3
    image_shape: tuple = (24, 32)
    sample_rate: int = DEFAULT_SAMPLE_RATE
    fps: float = 25.0
    lag_smoothing: float = 0.75
    pixel_noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_utterances < 1:
            raise ValueError("n_utterances must be >= 1")
        if self.video_frames < self.lead_in_frames + 2:
            raise ValueError("utterances need at least two frames after the lead-in")
        if not 1 <= self.n_speakers <= len(SPEAKERS):
            raise ValueError(f"n_speakers must lie in [1, {len(SPEAKERS)}]")

    @property
    def stft(self) -> StftConfig:
        return StftConfig.for_vps(self.fps * UPSAMPLE, self.sample_rate)

    def n_samples(self) -> int:
        return self.stft.output_length(UPSAMPLE * self.video_frames)


@dataclass
class SynthUtterance:
    id: str
    speaker: str
    trajectory: np.ndarray  # V x 3 articulator positions in [-1, 1]
    lip_frames: np.ndarray  # V x H x W
    clean: AudioBuffer
    aligned: AlignedUtterance = field(repr=False)


def articulator_trajectory(n_frames: int, lead_in: int, fps: float, rng) -> np.ndarray:
    """Smooth random 3-D articulator path; the mouth stays closed during the lead-in."""
    t = np.arange(n_frames) / fps
    z = np.zeros((n_frames, 3))
    for d in range(3):
        acc = np.zeros(n_frames)
        for _ in range(3):
            acc += rng.uniform(0.4, 1.0) * np.sin(2 * np.pi * rng.uniform(1.0, 5.0) * t
                                                   + rng.uniform(0, 2 * np.pi))
        z[:, d] = np.tanh(acc)
    ramp = np.clip((np.arange(n_frames) - lead_in + 1) / 2.0, 0.0, 1.0)
    z[:, 0] = -1.0 + ramp * (z[:, 0] + 1.0)
    return z


def render_lips(z: np.ndarray, style: SpeakerStyle, shape=(24, 32)) -> np.ndarray:
    """Anti-aliased elliptical mouth: opening from z[0], spread from z[1], teeth from z[2]."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    half_w = style.lip_width + 3.0 * z[1]
    half_h = 0.6 + 4.5 * (z[0] + 1.0) / 2.0
    r = np.sqrt(((xx - cx) / half_w) ** 2 + ((yy - cy) / half_h) ** 2)
    r_lip = np.sqrt(((xx - cx) / (half_w + 2.5)) ** 2 + ((yy - cy) / (half_h + 2.5)) ** 2)
    inside = 1.0 / (1.0 + np.exp((r - 1.0) * 8.0))
    lips = 1.0 / (1.0 + np.exp((r_lip - 1.0) * 8.0))
    teeth = 0.9 * (z[2] + 1.0) / 2.0 * np.exp(-((yy - cy + 0.4 * half_h) / 1.2) ** 2)
    img = style.skin * (1.0 - lips) + 0.45 * lips
    img = img * (1.0 - inside) + inside * (0.08 + teeth)
    return np.clip(img, 0.0, 1.0)


def _formant_envelope(freqs, formants, bandwidths):
    env = np.zeros_like(freqs)
    for fc, bw in zip(formants, bandwidths):
        env += 1.0 / (1.0 + ((freqs - fc) / bw) ** 2)
    return env


def vocal_state(trajectory: np.ndarray, smoothing: float) -> np.ndarray:
    """Per-audio-frame articulatory state: a leaky integral of the triplicated lip path.

    Acoustics lag the visible articulators, so each audio frame depends on the
    recent history of lip positions rather than the current one alone.
    """
    z = np.repeat(trajectory, UPSAMPLE, axis=0)
    s = np.empty_like(z)
    acc = z[0].copy()
    for t in range(z.shape[0]):
        acc = smoothing * acc + (1.0 - smoothing) * z[t]
        s[t] = acc
    return s


def render_clean_audio(trajectory: np.ndarray, style: SpeakerStyle, cfg: CorpusConfig,
                       noise_seed: int) -> AudioBuffer:
    """Harmonic voice with a formant envelope and level set by the lagged articulator state."""
    stft_cfg = cfg.stft
    state = vocal_state(trajectory, cfg.lag_smoothing)
    n = cfg.n_samples()
    sr = cfg.sample_rate
    centers = np.arange(state.shape[0]) * stft_cfg.hop + stft_cfg.frame_len / 2.0
    samples = np.arange(n)

    def track(x):
        return np.interp(samples, centers, x)

    opening = (state[:, 0] + 1.0) / 2.0
    amp = track(0.05 * opening ** 1.5)
    f0 = track(style.f0 * (1.0 + 0.08 * state[:, 2]))
    f1 = track(style.tract_scale * (300.0 + 550.0 * opening))
    f2 = track(style.tract_scale * (1100.0 + 900.0 * state[:, 1]))
    f3 = track(style.tract_scale * (2600.0 + 400.0 * state[:, 2]))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    voice = np.zeros(n)
    n_harm = int(10000.0 / style.f0)
    formants = (f1, f2, f3)
    bws = (90.0, 120.0, 180.0)
    for h in range(1, n_harm + 1):
        fh = h * f0
        env = _formant_envelope(fh, formants, bws)
        voice += env * np.sin(h * phase) / np.sqrt(h)
    rng = np.random.default_rng(noise_seed)
    # fricative-like high band tied to teeth visibility
    hiss = np.diff(rng.standard_normal(n + 1))
    hiss *= track(0.15 * ((state[:, 2] + 1.0) / 2.0) ** 2)
    floor = 1e-4 * rng.standard_normal(n)
    return AudioBuffer(amp * (voice + hiss) + floor, sr)


def synth_utterance(index: int, cfg: CorpusConfig, fb: MelFilterbank | None = None) -> SynthUtterance:
    seed_seq = np.random.SeedSequence([cfg.seed, index])
    traj_seed, noise_seed, pix_seed = seed_seq.spawn(3)
    style = SPEAKERS[index % cfg.n_speakers]
    rng = np.random.default_rng(traj_seed)
    traj = articulator_trajectory(cfg.video_frames, cfg.lead_in_frames, cfg.fps, rng)
    pix = np.random.default_rng(pix_seed)
    lips = np.stack([render_lips(z, style, cfg.image_shape) for z in traj])
    lips = np.clip(lips + cfg.pixel_noise * pix.standard_normal(lips.shape), 0.0, 1.0)
    clean = render_clean_audio(traj, style, cfg, int(noise_seed.generate_state(1)[0]))
    fb = fb or build_filterbank(cfg.sample_rate, cfg.stft.dft_size)
    feat = extract_logfb(clean, cfg.stft, fb)
    visual = upsample_triplicate(visual_features(lips))
    uid = f"utt{index:04d}"
    return SynthUtterance(uid, style.name, traj, lips, clean,
                          AlignedUtterance(visual, feat, uid, style.name))


def synth_av_corpus(cfg: CorpusConfig = CorpusConfig()) -> list[SynthUtterance]:
    """Deterministic synthetic corpus; utterance ``i`` depends only on ``(seed, i)``."""
    fb = build_filterbank(cfg.sample_rate, cfg.stft.dft_size)
    return [synth_utterance(i, cfg, fb) for i in range(cfg.n_utterances)]


# --- file formats ----------------------------------------------------------------

AVFB_MAGIC = b"AVFB"


class FormatError(ValueError):
    pass


def write_avfb(path, matrix: np.ndarray) -> None:
    """``AVFB`` magic, u32 rows, u32 cols, row-major little-endian float32."""
    m = np.asarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError("AVFB holds a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(AVFB_MAGIC + struct.pack("<II", *m.shape))
        fh.write(np.ascontiguousarray(m).tobytes())


def read_avfb(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != AVFB_MAGIC or len(data) < 12:
        raise FormatError(f"{path}: not an AVFB file")
    rows, cols = struct.unpack("<II", data[4:12])
    body = data[12:]
    if len(body) != rows * cols * 4:
        raise FormatError(f"{path}: expected {rows}x{cols} floats, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


def write_pgm(path, img: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM from intensities in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    q = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = w * h
    pix = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if pix.size != count or w * h == 0:
        raise FormatError(f"{path}: truncated image data")
    return pix.reshape(h, w).astype(np.float64) / maxval


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve(manifest_path, rel) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), rel)
