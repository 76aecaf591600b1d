"""Seg-SNR and LSD of EVWF (ideal mapping), spectral subtraction and Log-MMSE across SNRs and noises.

Writes an EvalRow CSV, the aggregated table and one t-test table per baseline.
Usage: python3 scripts/snr_benchmark.py [--n 20] [--noises white,cafe] [--snrs=-12,-6,0] [--out-dir bench]
"""
import argparse
import os
import sys

from evwf.avdata import SNR_GRID, CorpusConfig, NoiseMixSpec, make_noise, mix_at_snr, synth_av_corpus
from evwf.baselines import logmmse, spectral_subtract
from evwf.enhance import enhance_utterance, ideal_mapping_features
from evwf.filterbank import build_filterbank, extract_logfb
from evwf.metrics import EvalRow, feature_mse, log_spectral_distance, render_report, segmental_snr, ttest_table


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noises", default="white,cafe")
    p.add_argument("--snrs", default=",".join(f"{s:g}" for s in SNR_GRID))
    p.add_argument("--out-dir", default="bench")
    args = p.parse_args(argv)

    ccfg = CorpusConfig(n_utterances=args.n, seed=args.seed)
    stft_cfg = ccfg.stft
    fb = build_filterbank(ccfg.sample_rate, stft_cfg.dft_size)
    corpus = synth_av_corpus(ccfg)
    snrs = [float(s) for s in args.snrs.split(",")]
    os.makedirs(args.out_dir, exist_ok=True)
    for label in args.noises.split(","):
        rows = []
        for si, snr in enumerate(snrs):
            for ui, u in enumerate(corpus):
                noise = make_noise(label, len(u.clean), ccfg.sample_rate, seed=1000 * ui + si)
                noisy = mix_at_snr(u.clean, noise, NoiseMixSpec(snr, label))
                ref = ideal_mapping_features(u.clean, fb, stft_cfg)
                outs = {"noisy": noisy, "evwf_ideal": enhance_utterance(noisy, ref, fb, stft_cfg),
                        "ss": spectral_subtract(noisy, stft_cfg=stft_cfg),
                        "lmmse": logmmse(noisy, stft_cfg=stft_cfg)}
                for method, y in outs.items():
                    feat = extract_logfb(y, stft_cfg, fb)
                    n = min(feat.n_frames, ref.n_frames)
                    rows.append(EvalRow(method, snr, u.id, segmental_snr(u.clean, y),
                                        log_spectral_distance(u.clean, y, stft_cfg),
                                        feature_mse(feat.frames[:n], ref.frames[:n])))
        csv_text, table = render_report(rows)
        with open(os.path.join(args.out_dir, f"{label}.csv"), "w") as fh:
            fh.write(csv_text)
        for base in ("ss", "lmmse"):
            with open(os.path.join(args.out_dir, f"{label}_ttest_evwf_vs_{base}.csv"), "w") as fh:
                fh.write(ttest_table(rows, "evwf_ideal", base))
        print(f"== {label} noise ==")
        print(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
