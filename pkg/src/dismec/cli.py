"""``dismec`` command line: gen, train, predict, evaluate, sweep-delta, stats.

Several ``dismec train`` processes pointed at the same ``--out`` directory
cooperate on one model; each trains whichever batches it claims first.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .data import FormatError, load_xmc, save_xmc
from .engine import (
    DEFAULT_CLAIM_TIMEOUT,
    IncompleteModelError,
    TrainConfig,
    n_batches,
    prepare_features,
    run_training,
    train_batch,
)
from .metrics import evaluate, evaluate_rankings
from .powerlaw import InfeasibleSpecError, PowerLawSpec, generate_powerlaw, train_test_split
from .predict import BlockModel, load_model, predict_batch, predict_file
from .store import ModelManifest, model_stats, read_manifest
from .sweep import sweep_delta
from .tron import SolverConfig

logger = logging.getLogger("dismec")

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INCOMPLETE = 3

VALIDATION_GRID = (0.1, 1.0, 10.0)


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or min(vals) < 0:
        raise argparse.ArgumentTypeError("values must be non-negative")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="dismec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a power-law train/test dataset")
    g.add_argument("--labels", type=int, required=True)
    g.add_argument("--features", type=int, required=True)
    g.add_argument("--head-size", type=int, required=True)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--out-prefix", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rows", type=int, default=None, help="total rows before the split")
    g.add_argument("--test-fraction", type=float, default=0.2)
    g.add_argument("--prototype-nnz", type=int, default=20)
    g.add_argument("--noise-nnz", type=int, default=20)
    g.add_argument("--noise-scale", type=float, default=1.0)

    t = sub.add_parser("train", help="train (or join training of) a block model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--c", type=float, default=1.0)
    t.add_argument("--delta", type=float, default=0.01)
    t.add_argument("--batch-size", type=int, default=1000)
    t.add_argument("--threads", type=int, default=None,
                   help="labels trained in parallel per batch (default: $DISMEC_THREADS or 1)")
    t.add_argument("--no-normalize", action="store_true")
    t.add_argument("--bias", action="store_true")
    t.add_argument("--eps", type=float, default=0.01)
    t.add_argument("--resume", action="store_true",
                   help="continue an existing model directory (must exist)")
    t.add_argument("--validate", action="store_true",
                   help=f"pick C from {VALIDATION_GRID} on a 10%% holdout by P@1")
    t.add_argument("--seed", type=int, default=0, help="holdout split seed for --validate")
    t.add_argument("--claim-timeout", type=float, default=DEFAULT_CLAIM_TIMEOUT)
    t.add_argument("--worker-id", default=None)

    pr = sub.add_parser("predict", help="write top-k predictions for a dataset")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--topk", type=int, default=5)
    pr.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="P@k and nDCG@k of a predictions file")
    e.add_argument("--gold", required=True)
    e.add_argument("--preds", required=True)
    e.add_argument("--k", type=_int_list, default=[1, 3, 5])
    e.add_argument("--json", action="store_true")

    s = sub.add_parser("sweep-delta", help="re-prune a delta=0 model at several thresholds")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--gold", default=None, help="gold labels file (default: --data)")
    s.add_argument("--deltas", type=_float_list, default=[0.0, 0.001, 0.01, 0.1])
    s.add_argument("--k", type=_int_list, default=[1, 3, 5])
    s.add_argument("--json", action="store_true")

    st = sub.add_parser("stats", help="model size and weight histogram")
    st.add_argument("--model", required=True)
    return p


def _validate(args, parser):
    if args.command == "train":
        if not args.c > 0:
            parser.error("--c must be > 0")
        if args.delta < 0:
            parser.error("--delta must be >= 0")
        if args.batch_size < 1:
            parser.error("--batch-size must be >= 1")
        if args.threads is None:
            env = os.environ.get("DISMEC_THREADS")
            try:
                args.threads = int(env) if env else 1
            except ValueError:
                parser.error(f"DISMEC_THREADS must be an integer, got {env!r}")
        if args.threads < 1:
            parser.error("--threads must be >= 1")
        if not 0 < args.eps < 1:
            parser.error("--eps must lie in (0, 1)")
        if args.claim_timeout <= 0:
            parser.error("--claim-timeout must be > 0")
        if args.resume and args.validate:
            parser.error("--resume and --validate cannot be combined")
    elif args.command == "predict":
        if args.topk < 1:
            parser.error("--topk must be >= 1")
    elif args.command == "gen":
        if args.labels < 1 or args.features < 1 or args.head_size < 1:
            parser.error("--labels, --features and --head-size must be >= 1")
        if not args.beta > 0:
            parser.error("--beta must be > 0")
        if not 0 <= args.test_fraction < 1:
            parser.error("--test-fraction must lie in [0, 1)")


def _train_config(args, C):
    return TrainConfig(
        C=C, delta=args.delta, batch_size=args.batch_size, workers_per_batch=args.threads,
        solver=SolverConfig(C=C, eps=args.eps),
        normalize=not args.no_normalize, bias=args.bias,
    )


def _pick_c(dataset, args):
    train, hold = train_test_split(dataset, 0.1, seed=args.seed)
    golds = [hold.labels.row(i) for i in range(hold.n_rows)]
    best = None
    for C in VALIDATION_GRID:
        cfg = _train_config(args, C)
        X = prepare_features(train.features, cfg.normalize, cfg.bias)
        blocks = [train_batch(X, train.labels, b, cfg)
                  for b in range(n_batches(train.n_labels, cfg.batch_size))]
        manifest = ModelManifest("validation", train.n_labels, train.n_features,
                                 cfg.batch_size, len(blocks), cfg.delta, C,
                                 cfg.normalize, cfg.bias)
        preds = predict_batch(hold.features, BlockModel(manifest, blocks), 1)
        p1 = evaluate_rankings(golds, ([l for l, _ in p] for p in preds), [1]).p_at_k[1]
        logger.info("validation: C=%g P@1=%.4f", C, p1)
        if best is None or p1 > best[1]:
            best = (C, p1)
    return best[0]


def cmd_train(args):
    manifest_path = os.path.join(args.out, "manifest.json")
    if args.resume and not os.path.exists(manifest_path):
        print(f"error: --resume given but {manifest_path} does not exist", file=sys.stderr)
        return EXIT_ERROR
    dataset = load_xmc(args.data)
    C = args.c
    if os.path.exists(manifest_path):
        existing = read_manifest(args.out)
        if existing.complete and existing.total_nnz is not None:
            if not existing.same_run(ModelManifest(
                    "", dataset.n_labels, dataset.n_features, args.batch_size,
                    n_batches(dataset.n_labels, args.batch_size), args.delta,
                    existing.C if args.validate else C, not args.no_normalize, args.bias)):
                print(f"error: {args.out} holds a model trained with different settings",
                      file=sys.stderr)
                return EXIT_ERROR
            logger.info("model in %s is already complete", args.out)
            return 0
        if args.validate:
            C = existing.C
    elif args.validate:
        C = _pick_c(dataset, args)
        print(f"selected C={C:g}", file=sys.stderr)
    cfg = _train_config(args, C)
    manifest = run_training(dataset, cfg, args.out, worker_id=args.worker_id,
                            claim_timeout=args.claim_timeout)
    print(json.dumps({"model": args.out, "B": manifest.B, "total_nnz": manifest.total_nnz}))
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    dataset = load_xmc(args.data)
    predict_file(dataset, model, args.topk, args.out)
    return 0


def cmd_evaluate(args):
    report = evaluate(args.gold, args.preds, args.k)
    print(report.to_json() if args.json else report.table())
    return 0


def cmd_sweep_delta(args):
    test = load_xmc(args.data)
    gold = load_xmc(args.gold).labels if args.gold else None
    rows = sweep_delta(args.model, test, gold, args.deltas, args.k)
    if args.json:
        print(json.dumps(rows))
        return 0
    cols = ["delta", "bytes", "nnz"] + [f"p@{k}" for k in args.k]
    print("  ".join(f"{c:>10}" for c in cols))
    for r in rows:
        cells = [f"{r['delta']:>10g}", f"{r['bytes']:>10d}", f"{r['nnz']:>10d}"]
        cells += [f"{r[f'p@{k}']:>10.4f}" for k in args.k]
        print("  ".join(cells))
    return 0


def cmd_gen(args):
    spec = PowerLawSpec(
        n_labels=args.labels, head_size=args.head_size, beta=args.beta,
        n_features=args.features, prototype_nnz=args.prototype_nnz,
        noise_nnz=args.noise_nnz, seed=args.seed, n_rows=args.rows,
        noise_scale=args.noise_scale,
    )
    ds = generate_powerlaw(spec)
    train, test = train_test_split(ds, args.test_fraction, seed=args.seed)
    paths = {"train": f"{args.out_prefix}train.txt", "test": f"{args.out_prefix}test.txt"}
    d = os.path.dirname(args.out_prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    save_xmc(train, paths["train"])
    save_xmc(test, paths["test"])
    print(json.dumps({**paths, "n_train": train.n_rows, "n_test": test.n_rows,
                      "positives": int(ds.labels.nnz)}))
    return 0


def cmd_stats(args):
    stats = model_stats(args.model)
    print(json.dumps(stats, default=lambda o: float(o) if isinstance(o, np.floating) else o))
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sweep-delta": cmd_sweep_delta,
    "stats": cmd_stats,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except IncompleteModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (FormatError, InfeasibleSpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
