"""Objective quality metrics, feature MSE and Welch's t-test, plus report rendering.

Segmental SNR and log-spectral distance stand in for PESQ, which is not
implemented here.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .dsp import AudioBuffer, StftConfig, split_mag_phase, stft
from .filterbank import LogFbFeatures

SEG_SNR_MIN = -10.0
SEG_SNR_MAX = 35.0
SILENCE_ENERGY = 1e-8

METHODS = ("noisy", "evwf_ideal", "evwf_model", "ss", "lmmse")
REPORT_FIELDS = ("method", "snr_db", "utterance", "seg_snr_db", "lsd_db", "feature_mse")
TTEST_FIELDS = ("snr_db", "p_value", "reject_h0")
PESQ_FOOTER = ("Quality metrics: segmental SNR and log-spectral distance "
               "(PESQ substituted; not computed).")


class NoValidFramesError(ValueError):
    pass


def _trimmed(clean: AudioBuffer, processed: AudioBuffer) -> tuple[np.ndarray, np.ndarray]:
    if clean.sample_rate != processed.sample_rate:
        raise ValueError(f"sample rates differ: {clean.sample_rate} vs {processed.sample_rate}")
    n = min(len(clean), len(processed))
    return clean.samples[:n], processed.samples[:n]


def segmental_snr(clean: AudioBuffer, processed: AudioBuffer, frame_len: int = 800) -> float:
    """Mean per-frame SNR in dB over non-overlapping frames.

    Per-frame values are clamped to [-10, 35] dB; frames whose clean energy is
    below 1e-8 are skipped.
    """
    c, p = _trimmed(clean, processed)
    n_frames = len(c) // frame_len
    c = c[:n_frames * frame_len].reshape(n_frames, frame_len)
    p = p[:n_frames * frame_len].reshape(n_frames, frame_len)
    sig = np.sum(c * c, axis=1)
    err = np.sum((c - p) ** 2, axis=1)
    keep = sig >= SILENCE_ENERGY
    if not np.any(keep):
        raise NoValidFramesError("clean signal has no frames above the silence threshold")
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(sig[keep] / err[keep])
    return float(np.mean(np.clip(snr, SEG_SNR_MIN, SEG_SNR_MAX)))


def log_spectral_distance(clean: AudioBuffer, processed: AudioBuffer,
                          stft_cfg: StftConfig = StftConfig(),
                          dynamic_range_db: float = 60.0) -> float:
    """RMS over frames and bins of ``20 log10 |C| - 20 log10 |P|``.

    Both magnitudes are floored ``dynamic_range_db`` below the clean peak so that
    bins a method drives to (near) zero count as "very quiet", not as -200 dB.
    """
    nc = stft_cfg.n_frames(len(clean))
    np_ = stft_cfg.n_frames(len(processed))
    if abs(nc - np_) > 1:
        raise ValueError(f"frame counts differ by more than one: {nc} vs {np_}")
    c, p = _trimmed(clean, processed)
    cm, _ = split_mag_phase(stft(AudioBuffer(c, clean.sample_rate), stft_cfg))
    pm, _ = split_mag_phase(stft(AudioBuffer(p, clean.sample_rate), stft_cfg))
    floor = max(float(cm.max()), 1e-10) * 10.0 ** (-dynamic_range_db / 20.0)
    d = 20.0 * (np.log10(np.maximum(cm, floor)) - np.log10(np.maximum(pm, floor)))
    return float(np.sqrt(np.mean(d * d)))


def feature_mse(est, ref) -> float:
    """Mean squared difference over frames and channels (no 0.5 factor)."""
    e = est.frames if isinstance(est, LogFbFeatures) else np.asarray(est, dtype=np.float64)
    r = ref.frames if isinstance(ref, LogFbFeatures) else np.asarray(ref, dtype=np.float64)
    if e.shape != r.shape:
        raise ValueError(f"shape mismatch: {e.shape} vs {r.shape}")
    return float(np.mean((e - r) ** 2))


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    degrees_of_freedom: float
    p_value: float
    reject_at_0_05: bool


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def two_sample_ttest(a, b, alpha: float = 0.05) -> TTestResult:
    """Unpaired Welch t-test of equal means."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, float(a.size + b.size - 2), 1.0, False)
        t = math.copysign(math.inf, diff)
        return TTestResult(t, float(a.size + b.size - 2), 0.0, True)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = min(max(student_t_sf2(t, df), 0.0), 1.0)
    return TTestResult(float(t), float(df), p, p < alpha)


@dataclass(frozen=True)
class EvalRow:
    method: str
    snr_db: float
    utterance: str
    seg_snr_db: float
    lsd_db: float
    feature_mse: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("seg_snr_db", "lsd_db", "feature_mse"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite for {self.method}/{self.utterance}")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _snr_str(x: float) -> str:
    return f"{x:g}"


def _sorted(rows):
    order = {m: i for i, m in enumerate(METHODS)}
    return sorted(rows, key=lambda r: (order[r.method], r.snr_db, r.utterance))


def render_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in _sorted(rows):
        w.writerow([r.method, _snr_str(r.snr_db), r.utterance,
                    _fmt(r.seg_snr_db), _fmt(r.lsd_db), _fmt(r.feature_mse)])
    return buf.getvalue()


def aggregate(rows) -> dict:
    groups = defaultdict(list)
    for r in rows:
        groups[(r.method, r.snr_db)].append(r)
    out = {}
    for key, rs in groups.items():
        out[key] = tuple(float(np.mean([getattr(r, f) for r in rs]))
                         for f in ("seg_snr_db", "lsd_db", "feature_mse"))
    return out


def render_table(rows) -> str:
    agg = aggregate(rows)
    order = {m: i for i, m in enumerate(METHODS)}
    lines = [f"{'method':<12}{'snr_db':>8}{'seg_snr_db':>12}{'lsd_db':>10}{'feature_mse':>13}"]
    for (method, snr) in sorted(agg, key=lambda k: (order[k[0]], k[1])):
        s, l, m = agg[(method, snr)]
        lines.append(f"{method:<12}{_snr_str(snr):>8}{s:>12.3f}{l:>10.3f}{m:>13.4f}")
    lines.append("")
    lines.append(PESQ_FOOTER)
    return "\n".join(lines) + "\n"


def render_report(rows) -> tuple[str, str]:
    """CSV rows (ordered by method, SNR, utterance) and an aggregated text table."""
    rows = list(rows)
    return render_csv(rows), render_table(rows)


def ttest_table(rows, method_a: str, method_b: str, metric: str = "seg_snr_db",
                alpha: float = 0.05) -> str:
    """Per-SNR comparison of two methods in the ``snr_db,p_value,reject_h0`` layout."""
    by = defaultdict(dict)
    for r in rows:
        if r.method in (method_a, method_b):
            by[r.snr_db].setdefault(r.method, []).append(getattr(r, metric))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TTEST_FIELDS)
    for snr in sorted(by):
        if len(by[snr]) < 2:
            continue
        res = two_sample_ttest(by[snr][method_a], by[snr][method_b], alpha)
        w.writerow([_snr_str(snr), f"{res.p_value:.6g}", "(+)" if res.reject_at_0_05 else "(-)"])
    return buf.getvalue()
