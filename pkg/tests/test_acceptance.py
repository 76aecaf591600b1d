"""Acceptance criteria 1-13, one test each.

Every test prints a single ``PASS [n] ...`` or ``FAIL [n] ...`` line (also echoed
in the pytest terminal summary) and then asserts.
"""
import filecmp
import itertools
import json
import time

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import ACCEPTANCE_LINES
from evwf import cli
from evwf.avdata import (
    SNR_GRID,
    RATIOS_70_10_20,
    CorpusConfig,
    NoiseMixSpec,
    make_noise,
    measured_snr,
    mix_at_snr,
    split_counts,
    split_dataset,
    stack_windows,
    synth_av_corpus,
)
from evwf.baselines import LogMmseConfig, SsConfig, exp1, logmmse, logmmse_gains, spectral_subtract
from evwf.dsp import AudioBuffer, StftConfig, istft_overlap_add, split_mag_phase, stft
from evwf.enhance import enhance_utterance, ideal_mapping_features
from evwf.filterbank import LogFbFeatures, analysis, build_filterbank, synthesis
from evwf.metrics import EvalRow, feature_mse, segmental_snr, ttest_table, two_sample_ttest
from evwf.neural import LstmNetwork, MlpNetwork, RmsPropState, TrainConfig, loss_and_grads, rmsprop_step, train


def report(n: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{n}] {name}" + (f": {detail}" if detail else "")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# --- 1 ----------------------------------------------------------------------------

def test_01_pseudoinverse_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for ridge in (0.0,):
        fb = build_filterbank(50000, 2048, 23, ridge)
        worst = max(worst, float(np.abs(fb.pinv @ fb.weights - np.eye(23)).max()))
    elapsed = time.perf_counter() - t0
    report(1, "pseudoinverse identity max|alpha.Phi - I| < 1e-8", worst < 1e-8 and elapsed < 1.0,
           f"max error {worst:.2e}, {elapsed:.3f} s")


# --- 2 ----------------------------------------------------------------------------

def test_02_filterbank_round_trip(fb):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    f = rng.uniform(0.0, 10.0, size=(100, 23))
    back = analysis(fb, synthesis(fb, f, None))
    err = float(np.abs(back - f).max())
    elapsed = time.perf_counter() - t0
    report(2, "filterbank round trip analysis(synthesis(f)) = f within 1e-8",
           err < 1e-8 and elapsed < 1.0, f"max error {err:.2e} over 100 vectors, {elapsed:.3f} s")


# --- 3 ----------------------------------------------------------------------------

def test_03_stft_istft_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for hop in (300, 500, 667):
        cfg = StftConfig(frame_len=800, hop=hop, dft_size=2048)
        for _ in range(100):
            x = AudioBuffer(rng.standard_normal(50000), 50000)
            mag, phase = split_mag_phase(stft(x, cfg))
            y = istft_overlap_add(mag, phase, cfg, 50000).samples
            lo, hi = cfg.frame_len, len(y) - cfg.frame_len
            ref = x.samples[lo:hi]
            rel = np.sqrt(np.mean((y[lo:hi] - ref) ** 2) / np.mean(ref ** 2))
            worst = max(worst, float(rel))
    elapsed = time.perf_counter() - t0
    report(3, "STFT/ISTFT round trip interior relative RMS < 1e-6",
           worst < 1e-6 and elapsed < 10.0, f"worst {worst:.2e} at hops 300/500/667, {elapsed:.2f} s")


# --- 4 ----------------------------------------------------------------------------

def test_04_evwf_gain_sanity(fb):
    cfg = StftConfig()
    rng = np.random.default_rng(4)
    noisy = AudioBuffer(0.1 * rng.standard_normal(50000), 50000)
    mag, phase = split_mag_phase(stft(noisy, cfg))
    plain = istft_overlap_add(mag, phase, cfg, 50000).samples

    same = ideal_mapping_features(noisy, fb, cfg)
    out_same = enhance_utterance(noisy, same, fb, cfg).samples
    rms_diff = float(np.sqrt(np.mean((out_same - plain) ** 2)))

    at_floor = LogFbFeatures(np.full_like(same.frames, np.log(same.floor_eps)))
    out_floor = enhance_utterance(noisy, at_floor, fb, cfg).samples
    ratio = float(np.sqrt(np.mean(out_floor ** 2)) / np.sqrt(np.mean(noisy.samples ** 2)))
    report(4, "EVWF ideal-mapping sanity (identity within 1e-6 RMS; floor output < 1e-4 of input)",
           rms_diff < 1e-6 and ratio < 1e-4, f"identity RMS diff {rms_diff:.2e}, floor RMS ratio {ratio:.2e}")


# --- 5 ----------------------------------------------------------------------------

def test_05_enhancement_efficacy():
    t0 = time.perf_counter()
    ccfg = CorpusConfig(n_utterances=20, seed=5)
    corpus = synth_av_corpus(ccfg)
    stft_cfg = ccfg.stft
    fb = build_filterbank(ccfg.sample_rate, stft_cfg.dft_size)
    snrs = (-12.0, -6.0, -3.0, 0.0)
    failures, lines = [], []
    for label in ("white", "cafe"):
        for si, snr in enumerate(snrs):
            scores = {m: [] for m in ("noisy", "evwf", "ss", "lmmse")}
            for ui, u in enumerate(corpus):
                noise = make_noise(label, len(u.clean), ccfg.sample_rate, seed=1000 * ui + si)
                noisy = mix_at_snr(u.clean, noise, NoiseMixSpec(snr, label))
                outs = {
                    "noisy": noisy,
                    "evwf": enhance_utterance(noisy, ideal_mapping_features(u.clean, fb, stft_cfg), fb, stft_cfg),
                    "ss": spectral_subtract(noisy, SsConfig(), stft_cfg),
                    "lmmse": logmmse(noisy, LogMmseConfig(), stft_cfg),
                }
                for m, y in outs.items():
                    scores[m].append(segmental_snr(u.clean, y))
            mean = {m: float(np.mean(v)) for m, v in scores.items()}
            lines.append(f"{label} {snr:g} dB: " + " ".join(f"{m}={v:.2f}" for m, v in mean.items()))
            if not mean["evwf"] - mean["noisy"] >= 3.0:
                failures.append(f"{label}@{snr:g}: improvement {mean['evwf'] - mean['noisy']:.2f} dB")
            if snr <= -6 and not (mean["evwf"] > mean["ss"] and mean["evwf"] > mean["lmmse"]):
                failures.append(f"{label}@{snr:g}: EVWF not above both baselines")
    elapsed = time.perf_counter() - t0
    print("\n".join(lines))
    report(5, "EVWF(ideal) >= 3 dB seg-SNR gain at every SNR <= 0 and beats SS and LMMSE at -12/-6 dB",
           not failures and elapsed < 120.0,
           (("; ".join(failures) + "; ") if failures else "") + f"{elapsed:.1f} s")


# --- 6 ----------------------------------------------------------------------------

def _relative_error(a, n):
    scale = max(np.abs(a).max(), np.abs(n).max())
    return 0.0 if scale == 0 else float(np.abs(a - n).max() / scale)


def _grad_check(net, X, Y, dropout, seed, h=1e-5):
    def loss():
        return loss_and_grads(net, X, Y, dropout > 0, np.random.default_rng(seed), dropout)[0]

    _, grads = loss_and_grads(net, X, Y, dropout > 0, np.random.default_rng(seed), dropout)
    worst = 0.0
    for p, g in zip(net.arrays(), grads):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        worst = max(worst, _relative_error(g, num))
    return worst


def test_06_gradient_checks():
    t0 = time.perf_counter()
    worst = {"lstm": 0.0, "mlp": 0.0}
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((3, 3, 4))
        Y = rng.standard_normal((3, 2))
        lstm = LstmNetwork.init((4, 3), 4, 2, 2, rng)
        worst["lstm"] = max(worst["lstm"], _grad_check(lstm, X, Y, 0.25, seed))
        act = "tanh" if seed % 2 == 0 else "sigmoid"
        mlp = MlpNetwork.init((5, 4), 4, 2, 2, act, rng)
        worst["mlp"] = max(worst["mlp"], _grad_check(mlp, X, Y, 0.0, seed))
    elapsed = time.perf_counter() - t0
    report(6, "LSTM and MLP gradients match central differences within 1e-5 (20 seeds)",
           max(worst.values()) < 1e-5 and elapsed < 30.0,
           f"max rel error LSTM {worst['lstm']:.2e}, MLP {worst['mlp']:.2e}, {elapsed:.1f} s")


# --- 7 ----------------------------------------------------------------------------

def test_07_rmsprop_single_step():
    p = np.zeros(3)
    cfg = TrainConfig(lr=1e-3, rms_rho=0.9, rms_eps=0.0)
    rmsprop_step(RmsPropState.like([p]), [p], [np.ones(3)], cfg)
    expected = -1e-3 / np.sqrt(0.1)
    err = float(np.abs(p - expected).max())
    report(7, "RMSProp first step equals -1e-3/sqrt(0.1) within 1e-12", err < 1e-12,
           f"step {p[0]:.15f}, error {err:.1e}")


# --- 8 ----------------------------------------------------------------------------

MLP_GRID = [(10,), (50,), (150,), (10, 10), (50, 50), (150, 150)]


@pytest.mark.slow
def test_08_context_trend():
    t0 = time.perf_counter()
    corpus = synth_av_corpus(CorpusConfig(n_utterances=200, seed=0))
    parts = split_dataset(corpus, RATIOS_70_10_20, seed=0)
    cfg = TrainConfig(epochs=15, rng_seed=0)

    def data(k):
        return {name: stack_windows([u.aligned for u in parts[name]], k) for name in parts}

    def fit(net, d):
        model = train(net, d["train"], d["val"], cfg).model
        return feature_mse(model.predict(d["test"][0]), d["test"][1])

    d1, d8 = data(1), data(8)
    dims = d8["train"][0].shape[-1], d8["train"][1].shape[-1]
    lstm1 = fit(LstmNetwork.init((32, 48), *dims, 1, np.random.default_rng(0)), d1)
    lstm8 = fit(LstmNetwork.init((32, 48), *dims, 8, np.random.default_rng(0)), d8)
    mlp = {h: fit(MlpNetwork.init(h, *dims, 8, "tanh", np.random.default_rng(0)), d8) for h in MLP_GRID}
    best_h = min(mlp, key=mlp.get)
    elapsed = time.perf_counter() - t0
    gain = 1.0 - lstm8 / lstm1
    ok = gain >= 0.10 and lstm8 < mlp[best_h] and elapsed < 900
    print("MLP(k=8) test MSE: " + ", ".join(f"{h}={v:.3f}" for h, v in mlp.items()))
    report(8, "LSTM k=8 >= 10% below k=1 and below the best MLP(k=8)", ok,
           f"LSTM k=1 {lstm1:.3f}, k=8 {lstm8:.3f} ({100 * gain:.0f}% lower); "
           f"best MLP {best_h} {mlp[best_h]:.3f}; {elapsed:.0f} s")


# --- 9 ----------------------------------------------------------------------------

def test_09_snr_mixing_exactness():
    rng = np.random.default_rng(9)
    clean = AudioBuffer(rng.standard_normal(50000) * np.hanning(50000), 50000)
    worst = 0.0
    for label in ("white", "cafe", "street"):
        noise = make_noise(label, 30000, 50000, seed=9)  # shorter than the clean signal: tiled
        for snr in SNR_GRID:
            mix = mix_at_snr(clean, noise, NoiseMixSpec(snr, label))
            worst = max(worst, abs(measured_snr(clean.samples, mix.samples) - snr))
    report(9, "mixed SNR within 0.01 dB of target on the -12..12 dB grid", worst < 0.01,
           f"max deviation {worst:.2e} dB")


# --- 10 ---------------------------------------------------------------------------

def _welch_t(a, b):
    return (a.mean() - b.mean()) / np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)


def _permutation_p(a, b):
    """Exact two-sided permutation p-value of the Welch statistic over all relabelings."""
    pool = np.concatenate([a, b])
    n, N = a.size, pool.size
    observed = abs(_welch_t(a, b))
    hits = total = 0
    for idx in itertools.combinations(range(N), n):
        mask = np.zeros(N, bool)
        mask[list(idx)] = True
        total += 1
        hits += abs(_welch_t(pool[mask], pool[~mask])) >= observed - 1e-12
    return hits / total


TTEST_FIXTURES = [(8, 8, 0.0), (8, 8, 0.8), (7, 9, 0.5), (9, 7, 1.2), (8, 8, 0.3)]


def test_10_ttest_validity():
    diffs = []
    for seed, (na, nb, shift) in enumerate(TTEST_FIXTURES):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal(na) + shift, r.standard_normal(nb)
        diffs.append(abs(two_sample_ttest(a, b).p_value - _permutation_p(a, b)))
    same = np.array([1.0, 2.0, 3.5, 4.0])
    p_same = two_sample_ttest(same, same.copy()).p_value
    rows = [EvalRow(m, -6.0, f"u{i}", v, 1.0, 1.0)
            for i in range(4) for m, v in (("evwf_ideal", 5.0 + i), ("ss", 0.1 * i))]
    table = ttest_table(rows, "evwf_ideal", "ss")
    lines = table.splitlines()
    fmt_ok = lines[0] == "snr_db,p_value,reject_h0" and lines[1].startswith("-6,") and lines[1].endswith(",(+)")
    ok = max(diffs) < 0.02 and p_same == 1.0 and fmt_ok
    report(10, "Welch p within 0.02 of permutation oracle, identical samples p=1, table format", ok,
           f"max |p - p_perm| {max(diffs):.4f}, p(identical) {p_same}, header {lines[0]!r}")


# --- 11 ---------------------------------------------------------------------------

def test_11_split_counts():
    counts = split_counts(989, RATIOS_70_10_20)
    report(11, "989 items at 70/10/20 split 692/99/198", counts == [692, 99, 198], f"got {counts}")


# --- 12 ---------------------------------------------------------------------------

def test_12_exp1_and_logmmse_gains():
    oracle, _ = quad(lambda t: np.exp(-t) / t, 1.0, np.inf, epsabs=1e-14, epsrel=1e-14)
    err = abs(float(exp1(np.array([1.0]))[0]) - oracle)
    rng = np.random.default_rng(12)
    lo, hi = np.inf, -np.inf
    for _ in range(50):
        T, K = rng.integers(1, 20), rng.integers(1, 40)
        power = 10.0 ** rng.uniform(-12, 6, size=(T, K))
        noise = 10.0 ** rng.uniform(-12, 6, size=K)
        g = logmmse_gains(power, noise, LogMmseConfig(dd_alpha=rng.uniform(0.5, 0.999)))
        lo, hi = min(lo, g.min()), max(hi, g.max())
    ok = err < 1e-8 and lo > 0 and hi <= 1.0
    report(12, "E1(1) within 1e-8 of quadrature; Log-MMSE gains in (0, 1] on fuzz inputs", ok,
           f"|E1(1) - oracle| {err:.1e}; gains in [{lo:.3g}, {hi:.3g}]")


# --- 13 ---------------------------------------------------------------------------

def _pipeline(root, jobs):
    root.mkdir(parents=True)
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps({"seed": 13, "train": {"epochs": 2},
                               "model": {"hidden": [8, 8], "context": 2},
                               "mix": {"snrs": [-6, 0]}}))
    c, j = ["--config", str(cfg)], ["--jobs", str(jobs)]
    man = str(root / "corpus" / "manifest.json")
    mixes = str(root / "mix" / "mixtures.json")
    steps = [
        ["synth-corpus", *c, *j, "--out", str(root / "corpus"), "--n", "30"],
        ["extract", *c, *j, "--manifest", man],
        ["train", *c, "--manifest", man, "--out", str(root / "m.avnn"), "--history", str(root / "h.csv")],
        ["mix", *c, "--manifest", man, "--out", str(root / "mix")],
        ["enhance", *c, *j, "--method", "ss", "--batch", mixes, "--out-dir", str(root / "enh")],
        ["enhance", *c, *j, "--method", "lmmse", "--batch", mixes, "--out-dir", str(root / "enh")],
        ["enhance", *c, *j, "--method", "evwf", "--features", "ideal", "--batch", mixes,
         "--out-dir", str(root / "enh")],
        ["enhance", *c, *j, "--method", "evwf", "--features", f"model:{root / 'm.avnn'}",
         "--batch", mixes, "--out-dir", str(root / "enh")],
        ["evaluate", *c, *j, "--batch", mixes, "--enhanced-dir", str(root / "enh"),
         "--methods", "noisy,evwf_ideal,evwf_model,ss,lmmse", "--out", str(root / "rep" / "report.csv")],
    ]
    for argv in steps:
        assert cli.main(argv) == 0, argv
    return sorted((root / "rep").glob("*.csv")) + [root / "h.csv"]


@pytest.mark.slow
def test_13_pipeline_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("EVWF_SEED", raising=False)
    t0 = time.perf_counter()
    first = _pipeline(tmp_path / "run1", jobs=1)
    second = _pipeline(tmp_path / "run2", jobs=2)
    names = [p.name for p in first]
    same = names == [p.name for p in second] and all(
        filecmp.cmp(a, b, shallow=False) for a, b in zip(first, second))
    report(13, "full CLI pipeline twice with one seed gives byte-identical CSV reports", same,
           f"{len(first)} CSV files compared ({', '.join(names)}); {time.perf_counter() - t0:.0f} s")
