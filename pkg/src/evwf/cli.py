"""Command-line front end: synth-corpus, extract, train, mix, enhance, evaluate.

Exit codes: 0 ok, 2 usage or configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import avdata
from .avdata import (
    AlignedUtterance,
    NoiseMixSpec,
    make_noise,
    mix_at_snr,
    read_avfb,
    read_manifest,
    read_pgm,
    resolve,
    split_dataset,
    stack_windows,
    synth_utterance,
    upsample_triplicate,
    visual_features,
    write_avfb,
    write_manifest,
    write_pgm,
)
from .baselines import logmmse, spectral_subtract
from .config import ConfigError, RunConfig, load_config
from .dsp import AudioBuffer, NonFiniteError, StftConfig
from .enhance import AlignmentError, enhance_utterance
from .filterbank import LogFbFeatures, build_filterbank, extract_logfb
from .metrics import (
    EvalRow,
    feature_mse,
    log_spectral_distance,
    render_report,
    segmental_snr,
    ttest_table,
)
from .neural import LstmNetwork, MlpNetwork, load_model, save_model, train
from .neural.modelfile import ModelFormatError
from .wavio import WavFormatError, read_wav, write_wav

log = logging.getLogger("evwf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# --- helpers -------------------------------------------------------------------

def _stft_from(d: dict) -> StftConfig:
    return StftConfig(**{k: d[k] for k in ("frame_len", "hop", "dft_size")})


def _fb_for(cfg: RunConfig, sample_rate, stft_cfg: StftConfig):
    return build_filterbank(sample_rate, stft_cfg.dft_size, cfg.filterbank.channels,
                            cfg.filterbank.ridge)


def _map(fn, items, jobs: int):
    """Apply ``fn`` to every item; results keep input order whatever the completion order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _checked(audio: AudioBuffer, what: str) -> AudioBuffer:
    if not np.all(np.isfinite(audio.samples)):
        raise NonFiniteError(f"{what}: non-finite samples")
    return audio


def _read_features(path) -> LogFbFeatures:
    m = read_avfb(path)
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{path}: non-finite feature values")
    return LogFbFeatures(m)


def _manifest_stft(man: dict) -> StftConfig:
    return _stft_from(man["stft"])


def _load_aligned(man_path: str, entry: dict) -> AlignedUtterance:
    for key in ("audio_features", "visual_features"):
        if key not in entry:
            raise DataError(f"{entry['id']}: no {key}; run 'evwf extract' first")
    visual = read_avfb(resolve(man_path, entry["visual_features"]))
    audio = _read_features(resolve(man_path, entry["audio_features"]))
    try:
        return AlignedUtterance(visual, audio, entry["id"], entry["speaker"])
    except ValueError as exc:
        raise DataError(str(exc)) from exc


# --- synth-corpus ------------------------------------------------------------------

def _synth_one(args):
    index, corpus_cfg, out_dir = args
    u = synth_utterance(index, corpus_cfg)
    wav = os.path.join("wav", f"{u.id}.wav")
    write_wav(os.path.join(out_dir, wav), u.clean)
    lip_dir = os.path.join("lips", u.id)
    os.makedirs(os.path.join(out_dir, lip_dir), exist_ok=True)
    for v, img in enumerate(u.lip_frames):
        write_pgm(os.path.join(out_dir, lip_dir, f"f{v:03d}.pgm"), img)
    traj = os.path.join("trajectory", f"{u.id}.avfb")
    write_avfb(os.path.join(out_dir, traj), u.trajectory)
    return {"id": u.id, "speaker": u.speaker, "clean_wav": wav, "lip_dir": lip_dir,
            "n_video_frames": int(u.lip_frames.shape[0]), "trajectory": traj}


def cmd_synth_corpus(cfg: RunConfig, args) -> int:
    corpus_cfg = cfg.corpus
    if args.n is not None:
        corpus_cfg = replace(corpus_cfg, n_utterances=args.n)
    out = args.out
    for sub in ("wav", "lips", "trajectory"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)
    entries = _map(_synth_one, [(i, corpus_cfg, out) for i in range(corpus_cfg.n_utterances)], args.jobs)
    entries.sort(key=lambda e: e["id"])
    ratios = cfg.split.resolved()
    parts = split_dataset(entries, ratios, seed=cfg.seed)
    for name, items in parts.items():
        for e in items:
            e["split"] = name
    stft_cfg = corpus_cfg.stft
    manifest = {
        "version": 1,
        "sample_rate": corpus_cfg.sample_rate,
        "fps": corpus_cfg.fps,
        "stft": {"frame_len": stft_cfg.frame_len, "hop": stft_cfg.hop, "dft_size": stft_cfg.dft_size},
        "seed": corpus_cfg.seed,
        "split_ratios": list(ratios),
        "utterances": entries,
    }
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    print(f"wrote {len(entries)} utterances to {out}")
    return EXIT_OK


# --- extract -------------------------------------------------------------------------

def _lip_frames(lip_dir: str) -> list[np.ndarray]:
    names = sorted(n for n in os.listdir(lip_dir) if n.endswith(".pgm"))
    if not names:
        raise DataError(f"{lip_dir}: no PGM images")
    return [read_pgm(os.path.join(lip_dir, n)) for n in names]


def _extract_one(args):
    man_path, entry, stft_d, fb_args, floor_eps = args
    stft_cfg = _stft_from(stft_d)
    audio = read_wav(resolve(man_path, entry["clean_wav"]))
    fb = build_filterbank(audio.sample_rate, stft_cfg.dft_size, *fb_args)
    feat = extract_logfb(audio, stft_cfg, fb, floor_eps)
    visual = upsample_triplicate(visual_features(_lip_frames(resolve(man_path, entry["lip_dir"]))))
    a_rel = os.path.join("features", f"{entry['id']}.logfb.avfb")
    v_rel = os.path.join("features", f"{entry['id']}.visual.avfb")
    write_avfb(resolve(man_path, a_rel), feat.frames)
    write_avfb(resolve(man_path, v_rel), visual)
    return {**entry, "audio_features": a_rel, "visual_features": v_rel}


def cmd_extract(cfg: RunConfig, args) -> int:
    fb_args = (cfg.filterbank.channels, cfg.filterbank.ridge)
    if args.manifest:
        man = read_manifest(args.manifest)
        os.makedirs(resolve(args.manifest, "features"), exist_ok=True)
        work = [(args.manifest, e, man["stft"], fb_args, cfg.filterbank.floor_eps)
                for e in man["utterances"]]
        man["utterances"] = sorted(_map(_extract_one, work, args.jobs), key=lambda e: e["id"])
        write_manifest(args.manifest, man)
        print(f"extracted features for {len(work)} utterances")
        return EXIT_OK
    if not args.out or not (args.wav or args.lips):
        raise UsageError("extract needs --manifest, or --wav/--lips with --out")
    if args.wav:
        audio = read_wav(args.wav)
        stft_cfg = cfg.stft_config()
        feat = extract_logfb(audio, stft_cfg, _fb_for(cfg, audio.sample_rate, stft_cfg),
                             cfg.filterbank.floor_eps)
        write_avfb(args.out, feat.frames)
    else:
        vis = visual_features(_lip_frames(args.lips))
        write_avfb(args.out, vis if args.no_upsample else upsample_triplicate(vis))
    return EXIT_OK


# --- train ----------------------------------------------------------------------------

def _split_utts(man_path: str, man: dict, name: str) -> list[AlignedUtterance]:
    return [_load_aligned(man_path, e) for e in man["utterances"] if e.get("split") == name]


def cmd_train(cfg: RunConfig, args) -> int:
    spec = cfg.model
    kind = args.model or spec.kind
    k = spec.context if args.context is None else args.context
    hidden = tuple(int(h) for h in args.hidden.split(",")) if args.hidden else spec.layer_sizes
    if kind == "lstm" and args.full_scale:
        hidden = (250, 300)
    man = read_manifest(args.manifest)
    sets = {name: _split_utts(args.manifest, man, name) for name in ("train", "val", "test")}
    for name in ("train", "val"):
        if not sets[name]:
            raise DataError(f"split '{name}' is empty")
    try:
        data = {name: stack_windows(utts, k) for name, utts in sets.items() if utts}
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    train_cfg = cfg.train if args.epochs is None else replace(cfg.train, epochs=args.epochs)
    rng = np.random.default_rng(train_cfg.rng_seed)
    d_in = data["train"][0].shape[-1]
    d_out = data["train"][1].shape[-1]
    if kind == "lstm":
        net = LstmNetwork.init(hidden, d_in, d_out, k, rng)
    else:
        net = MlpNetwork.init(hidden, d_in, d_out, k, spec.activation, rng)
    result = train(net, data["train"], data["val"], train_cfg)
    save_model(args.out, result.model)
    if args.history:
        with open(args.history, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_mse", "val_loss", "val_mse"])
            for row in result.history:
                w.writerow([row["epoch"]] + [f"{row[c]:.8f}" for c in
                                             ("train_loss", "train_mse", "val_loss", "val_mse")])
    summary = {"model": kind, "context": k, "hidden": list(hidden), "best_epoch": result.best_epoch,
               "val_mse": result.history[result.best_epoch]["val_mse"]}
    if "test" in data:
        X, Y = data["test"]
        pred = result.model.predict(X)
        summary["test_mse"] = feature_mse(pred, Y)
        # the same error as a per-frame half sum of squares (0.5 * sum over channels)
        summary["test_half_sse"] = float(np.mean(0.5 * np.sum((pred - Y) ** 2, axis=1)))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# --- mix ---------------------------------------------------------------------------------

def _noise_for(cfg: RunConfig, label: str, n: int, sample_rate: int, seed: int) -> AudioBuffer:
    if label == "file":
        noise = read_wav(cfg.mix.noise_file)
        if noise.sample_rate != sample_rate:
            raise DataError(f"noise file rate {noise.sample_rate} != {sample_rate}")
        return noise
    return make_noise(label, n, sample_rate, seed)


def cmd_mix(cfg: RunConfig, args) -> int:
    man = read_manifest(args.manifest)
    snrs = [float(s) for s in args.snrs.split(",")] if args.snrs else list(cfg.mix.snrs)
    label = args.noise or cfg.mix.noise_label
    out = args.out
    os.makedirs(os.path.join(out, "noisy"), exist_ok=True)
    entries = []
    utts = [e for e in man["utterances"] if args.split == "all" or e.get("split") == args.split]
    if not utts:
        raise DataError(f"no utterances in split '{args.split}'")
    for ui, e in enumerate(utts):
        clean_path = resolve(args.manifest, e["clean_wav"])
        clean = read_wav(clean_path)
        for si, snr in enumerate(snrs):
            seed = int(np.random.SeedSequence([cfg.seed, ui, si]).generate_state(1)[0])
            noise = _noise_for(cfg, label, len(clean), clean.sample_rate, seed)
            noisy = mix_at_snr(clean, noise, NoiseMixSpec(snr, label))
            name = f"{e['id']}_{snr:g}dB.wav"
            write_wav(os.path.join(out, "noisy", name), noisy)
            entry = {"utterance": e["id"], "snr_db": snr, "noise": label,
                     "noisy_wav": os.path.join("noisy", name),
                     "clean_wav": os.path.relpath(clean_path, out)}
            for key in ("audio_features", "visual_features"):
                if key in e:
                    entry[key] = os.path.relpath(resolve(args.manifest, e[key]), out)
            entries.append(entry)
    batch = {"version": 1, "stft": man["stft"], "sample_rate": man["sample_rate"], "mixtures": entries}
    write_manifest(os.path.join(out, "mixtures.json"), batch)
    print(f"wrote {len(entries)} mixtures to {out}")
    return EXIT_OK


# --- enhance --------------------------------------------------------------------------------

def _parse_features(spec: str | None):
    if spec is None:
        raise UsageError("--method evwf needs --features ideal:<clean.wav> | file:<feat.avfb> "
                         "| model:<model.avnn>+<visual.avfb>")
    kind, _, rest = spec.partition(":")
    if kind not in ("ideal", "file", "model"):
        raise UsageError(f"unknown feature source {spec!r}")
    return kind, rest


def _model_features(model, visual: np.ndarray) -> LogFbFeatures:
    pred = model.predict_sequence(visual)
    if not np.all(np.isfinite(pred)):
        raise NonFiniteError("model produced non-finite features")
    return LogFbFeatures(pred)


def enhance_audio(cfg: RunConfig, method: str, noisy: AudioBuffer, stft_cfg: StftConfig,
                  clean_feat: LogFbFeatures | None = None) -> AudioBuffer:
    if method == "ss":
        return spectral_subtract(noisy, cfg.ss, stft_cfg)
    if method == "lmmse":
        return logmmse(noisy, cfg.lmmse, stft_cfg)
    fb = _fb_for(cfg, noisy.sample_rate, stft_cfg)
    return enhance_utterance(noisy, clean_feat, fb, stft_cfg, cfg.evwf)


def _enhance_single(cfg: RunConfig, args) -> int:
    if not args.noisy or not args.output:
        raise UsageError("enhance needs NOISY and OUT paths (or --batch)")
    stft_cfg = cfg.stft_config()
    noisy = read_wav(args.noisy)
    clean_feat = None
    if args.method == "evwf":
        kind, rest = _parse_features(args.features)
        if kind == "ideal":
            clean = read_wav(rest)
            clean_feat = extract_logfb(clean, stft_cfg, _fb_for(cfg, clean.sample_rate, stft_cfg),
                                       cfg.filterbank.floor_eps)
        elif kind == "file":
            clean_feat = _read_features(rest)
        else:
            model_path, plus, visual_path = rest.partition("+")
            if not plus:
                raise UsageError("model features need model:<model.avnn>+<visual.avfb>")
            clean_feat = _model_features(load_model(model_path), read_avfb(visual_path))
    out = _checked(enhance_audio(cfg, args.method, noisy, stft_cfg, clean_feat), "enhanced audio")
    write_wav(args.output, out)
    return EXIT_OK


def _method_name(method: str, features: str | None) -> str:
    if method != "evwf":
        return method
    kind, _ = _parse_features(features)
    if kind == "file":
        raise UsageError("batch mode supports ideal and model feature sources")
    return "evwf_ideal" if kind == "ideal" else "evwf_model"


def _enhance_batch_one(args):
    cfg, batch_path, entry, method, name, model_path, out_dir = args
    stft_cfg = _stft_from(read_manifest(batch_path)["stft"])
    noisy = read_wav(resolve(batch_path, entry["noisy_wav"]))
    clean_feat = None
    if name == "evwf_ideal":
        clean = read_wav(resolve(batch_path, entry["clean_wav"]))
        clean_feat = extract_logfb(clean, stft_cfg, _fb_for(cfg, clean.sample_rate, stft_cfg),
                                   cfg.filterbank.floor_eps)
    elif name == "evwf_model":
        if "visual_features" not in entry:
            raise DataError(f"{entry['utterance']}: no visual features for model-driven EVWF")
        clean_feat = _model_features(load_model(model_path),
                                     read_avfb(resolve(batch_path, entry["visual_features"])))
    out = _checked(enhance_audio(cfg, method, noisy, stft_cfg, clean_feat), "enhanced audio")
    rel = os.path.join(name, os.path.basename(entry["noisy_wav"]))
    write_wav(os.path.join(out_dir, rel), out)
    return rel


def cmd_enhance(cfg: RunConfig, args) -> int:
    if args.method == "evwf" and not args.features:
        _parse_features(None)
    if not args.batch:
        return _enhance_single(cfg, args)
    if not args.out_dir:
        raise UsageError("--batch needs --out-dir")
    name = _method_name(args.method, args.features)
    model_path = None
    if name == "evwf_model":
        model_path = args.features.partition(":")[2]
        load_model(model_path)
    batch = read_manifest(args.batch)
    os.makedirs(os.path.join(args.out_dir, name), exist_ok=True)
    work = [(cfg, args.batch, e, args.method, name, model_path, args.out_dir) for e in batch["mixtures"]]
    _map(_enhance_batch_one, work, args.jobs)
    print(f"enhanced {len(work)} mixtures with {name}")
    return EXIT_OK


# --- evaluate --------------------------------------------------------------------------------

def _evaluate_one(args):
    cfg, batch_path, entry, methods, enhanced_dir = args
    stft_cfg = _stft_from(read_manifest(batch_path)["stft"])
    clean = read_wav(resolve(batch_path, entry["clean_wav"]))
    fb = _fb_for(cfg, clean.sample_rate, stft_cfg)
    ref = extract_logfb(clean, stft_cfg, fb, cfg.filterbank.floor_eps)
    rows = []
    for method in methods:
        if method == "noisy":
            path = resolve(batch_path, entry["noisy_wav"])
        else:
            path = os.path.join(enhanced_dir, method, os.path.basename(entry["noisy_wav"]))
        if not os.path.exists(path):
            raise DataError(f"missing enhanced output {path}")
        proc = read_wav(path)
        feat = extract_logfb(proc, stft_cfg, fb, cfg.filterbank.floor_eps)
        n = min(feat.n_frames, ref.n_frames)
        rows.append(EvalRow(method, float(entry["snr_db"]), entry["utterance"],
                            segmental_snr(clean, proc), log_spectral_distance(clean, proc, stft_cfg),
                            feature_mse(feat.frames[:n], ref.frames[:n])))
    return rows


def cmd_evaluate(cfg: RunConfig, args) -> int:
    batch = read_manifest(args.batch)
    methods = args.methods.split(",")
    work = [(cfg, args.batch, e, methods, args.enhanced_dir) for e in batch["mixtures"]]
    rows = [r for rs in _map(_evaluate_one, work, args.jobs) for r in rs]
    csv_text, table = render_report(rows)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        fh.write(csv_text)
    stem = os.path.splitext(args.out)[0]
    with open(stem + ".txt", "w") as fh:
        fh.write(table)
    for ours in [m for m in methods if m.startswith("evwf")]:
        for base in [m for m in methods if m in ("ss", "lmmse")]:
            with open(f"{stem}.ttest_{ours}_vs_{base}.csv", "w", newline="") as fh:
                fh.write(ttest_table(rows, ours, base))
    sys.stdout.write(table)
    return EXIT_OK


# --- entry point -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evwf", description="Lip-reading driven Wiener filtering toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        sp.add_argument("--vps", type=float, help="set the hop for this many frames per second (e.g. 75)")

    sp = sub.add_parser("synth-corpus", help="generate a synthetic audio-visual corpus")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--n", type=int, help="number of utterances (overrides corpus.n_utterances)")
    sp.set_defaults(func=cmd_synth_corpus)

    sp = sub.add_parser("extract", help="log-FB audio and DCT visual features")
    common(sp)
    sp.add_argument("--manifest", help="extract every utterance of a corpus manifest")
    sp.add_argument("--wav", help="single WAV file -> log-FB AVFB")
    sp.add_argument("--lips", help="directory of PGM lip images -> visual AVFB")
    sp.add_argument("--no-upsample", action="store_true", help="keep visual features at video rate")
    sp.add_argument("--out", help="output AVFB path for single-file mode")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="train a lip-reading regression model")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--model", choices=("lstm", "mlp"))
    sp.add_argument("--context", type=int, help="number of prior visual frames")
    sp.add_argument("--hidden", help="comma-separated layer sizes")
    sp.add_argument("--full-scale", action="store_true", help="LSTM layers of 250 and 300 cells")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--out", required=True, help="model file (.avnn)")
    sp.add_argument("--history", help="loss-history CSV")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("mix", help="mix corpus utterances with noise at given SNRs")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--split", default="test", help="train, val, test or all")
    sp.add_argument("--snrs", help="comma-separated SNRs in dB")
    sp.add_argument("--noise", choices=avdata.NOISE_LABELS)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_mix)

    sp = sub.add_parser("enhance", help="enhance noisy speech")
    common(sp)
    sp.add_argument("--method", choices=("evwf", "ss", "lmmse"), required=True)
    sp.add_argument("--features", help="ideal:<clean.wav> | file:<feat.avfb> | model:<model.avnn>+<visual.avfb>; "
                                       "in --batch mode: ideal | model:<model.avnn>")
    sp.add_argument("--batch", help="mixtures.json written by 'evwf mix'")
    sp.add_argument("--out-dir", help="output directory for --batch")
    sp.add_argument("noisy", nargs="?")
    sp.add_argument("output", nargs="?")
    sp.set_defaults(func=cmd_enhance)

    sp = sub.add_parser("evaluate", help="score enhanced outputs and run t-tests")
    common(sp)
    sp.add_argument("--batch", required=True, help="mixtures.json written by 'evwf mix'")
    sp.add_argument("--enhanced-dir", required=True)
    sp.add_argument("--methods", default="noisy,evwf_ideal,ss,lmmse")
    sp.add_argument("--out", required=True, help="report CSV path")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.vps:
            cfg = replace(cfg, vps=args.vps)
        return args.func(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"evwf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"evwf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, AlignmentError, WavFormatError, ModelFormatError, avdata.FormatError,
            OSError, KeyError, ValueError) as exc:
        print(f"evwf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
