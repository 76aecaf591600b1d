"""Test feature-MSE of LSTM and MLP lip-reading models as the visual context grows.

Usage: python3 scripts/context_sweep.py [--n 200] [--epochs 15] [--contexts 0,1,2,4,8,12,18] [--out sweep.csv]
"""
import argparse
import csv
import sys
import time

import numpy as np

from evwf.avdata import RATIOS_70_10_20, CorpusConfig, split_dataset, stack_windows, synth_av_corpus
from evwf.metrics import feature_mse
from evwf.neural import DESK_HIDDEN, LstmNetwork, MlpNetwork, TrainConfig, train


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--contexts", default="0,1,2,4,8,12,18")
    p.add_argument("--mlp-hidden", default="150", help="comma-separated MLP layer sizes")
    p.add_argument("--out", default="context_sweep.csv")
    args = p.parse_args(argv)

    corpus = synth_av_corpus(CorpusConfig(n_utterances=args.n, seed=args.seed))
    parts = split_dataset(corpus, RATIOS_70_10_20, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, rng_seed=args.seed)
    mlp_hidden = tuple(int(h) for h in args.mlp_hidden.split(","))
    rows = []
    for k in (int(c) for c in args.contexts.split(",")):
        data = {name: stack_windows([u.aligned for u in items], k) for name, items in parts.items()}
        d_in, d_out = data["train"][0].shape[-1], data["train"][1].shape[-1]
        for kind in ("lstm", "mlp"):
            rng = np.random.default_rng(args.seed)
            net = (LstmNetwork.init(DESK_HIDDEN, d_in, d_out, k, rng) if kind == "lstm"
                   else MlpNetwork.init(mlp_hidden, d_in, d_out, k, "tanh", rng))
            t0 = time.perf_counter()
            model = train(net, data["train"], data["val"], cfg).model
            mse = feature_mse(model.predict(data["test"][0]), data["test"][1])
            rows.append({"model": kind, "context": k, "test_mse": f"{mse:.6f}",
                         "seconds": f"{time.perf_counter() - t0:.1f}"})
            print(f"{kind:<5} k={k:<3} test MSE {mse:.4f}", flush=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
