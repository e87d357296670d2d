"""Command-line entry point: ``heco {train,embed,evaluate,gen-corpus,sweep}``."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from .config import VARIANTS, RunConfig
from .errors import HecoError
from .evaluation import EvalReport, evaluate_embeddings
from .model import HeCo
from .tensor import Tensor
from .train import GAN_COLUMNS, LOSS_COLUMNS, train

OUTPUT_ENV = "HECO_OUTPUT_DIR"
log = logging.getLogger("heco")


def output_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUTPUT_ENV, "runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(path: str | None, l2: bool = False) -> hio.Dataset:
    return hio.load_dataset(path or hio.toy_acm_path(), l2_normalize=l2)


def _config(args) -> RunConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "variant": args.variant, "seed": args.seed, "epochs": args.epochs, "lr": args.lr,
        "dim": args.dim, "tau": args.tau, "lam": args.lam, "lambda1": args.lambda1,
        "lambda2": args.lambda2, "aleph": args.aleph, "t_pos": args.t_pos, "patience": args.patience,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(base)


def _labelled(ds: hio.Dataset, cfg: RunConfig) -> np.ndarray | None:
    if cfg.variant != "hecopp_semi":
        return None
    if cfg.semi_labels in ds.splits:
        return ds.splits[cfg.semi_labels].train
    if ds.splits:
        return ds.splits[min(ds.splits)].train
    return None


def build_model(ds: hio.Dataset, cfg: RunConfig) -> HeCo:
    return HeCo(ds.graph, cfg, labelled=_labelled(ds, cfg))


def run_train(
    ds: hio.Dataset, cfg: RunConfig, out: Path, early_stop: bool = True, data: dict | None = None
) -> HeCo:
    model = build_model(ds, cfg)
    res = train(model, early_stop=early_stop)
    params = {k: v.data for k, v in model.named_parameters().items()}
    hio.save_checkpoint(params, cfg.to_dict(), cfg.digest(), out / "checkpoint.zip", data)
    hio.write_csv(out / "loss.csv", LOSS_COLUMNS, res.loss_log)
    hio.write_csv(out / "attention.csv", ("epoch", "level", "name", "beta"), res.attention_log)
    if res.gan_log:
        hio.write_csv(out / "gan.csv", GAN_COLUMNS, res.gan_log)
    log.info("trained %s for %d epochs (best %d)", cfg.variant, res.epochs_run, res.best_epoch)
    return model


def restore_model(ds: hio.Dataset, checkpoint: Path) -> HeCo:
    params, meta = hio.load_checkpoint(checkpoint)
    cfg = RunConfig.from_dict(meta["config"])
    if cfg.digest() != meta["config_hash"]:
        raise HecoError("checkpoint config hash mismatch")
    model = build_model(ds, cfg)
    named = model.named_parameters()
    if set(named) != set(params):
        raise HecoError("checkpoint tensors do not match the model built from its config")
    for k, t in named.items():
        if t.shape != params[k].shape:
            raise HecoError(f"tensor {k}: checkpoint {params[k].shape} vs model {t.shape}")
        t.data = params[k].copy()
    return model


def cmd_train(args) -> int:
    cfg = _config(args)
    out = output_dir(args.out)
    data = {"dataset": str(Path(args.dataset).resolve()) if args.dataset else None,
            "l2_normalize": args.l2_normalize}
    run_train(_dataset(args.dataset, args.l2_normalize), cfg, out, not args.no_early_stop, data)
    print(out / "checkpoint.zip")
    return 0


def cmd_embed(args) -> int:
    if args.dataset is None:
        # default to the graph the checkpoint was trained on
        data = hio.load_checkpoint(args.checkpoint)[1].get("data", {})
        ds = _dataset(data.get("dataset"), data.get("l2_normalize", False) or args.l2_normalize)
    else:
        ds = _dataset(args.dataset, args.l2_normalize)
    model = restore_model(ds, Path(args.checkpoint))
    out = output_dir(args.out)
    path = hio.export_embeddings(model.embeddings(args.view), out / "embeddings.tsv",
                                 model.config.variant, model.config.seed)
    print(path)
    return 0


def cmd_evaluate(args) -> int:
    ds = _dataset(args.dataset)
    if not ds.splits:
        raise HecoError("dataset bundle has no splits_<L>.json files")
    z, meta = hio.load_embeddings(args.embeddings)
    if len(z) != ds.graph.num_targets:
        raise HecoError(f"{len(z)} embedding rows for {ds.graph.num_targets} target nodes")
    report = evaluate_embeddings(z, ds.graph.labels, ds.splits, seed=args.seed, runs=args.runs)
    out = output_dir(args.out)
    (out / "report.csv").write_text(report.to_csv())
    print(report.table())
    return 0


def cmd_gen_corpus(args) -> int:
    kwargs = json.loads(Path(args.spec).read_text()) if args.spec else {}
    ds = hio.generate_synthetic_hin(hio.SynthSpec(**kwargs), args.seed)
    print(hio.save_dataset(ds, args.out))
    return 0


def cmd_sweep(args) -> int:
    """Train every grid combination, probe its embeddings, aggregate one report."""
    grid = json.loads(Path(args.grid).read_text())
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    ds = _dataset(args.dataset)
    out = output_dir(args.out)
    keys = sorted(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cfg = RunConfig.from_dict({**base, **dict(zip(keys, combo))})
        run_dir = out / cfg.digest()
        run_dir.mkdir(exist_ok=True)
        model = run_train(ds, cfg, run_dir)
        report = evaluate_embeddings(model.embeddings(), ds.graph.labels, ds.splits, seed=cfg.seed, runs=args.runs)
        (run_dir / "report.csv").write_text(report.to_csv())
        tag = " ".join(f"{k}={v}" for k, v in zip(keys, combo))
        for m, s, mu, sd in report.rows:
            rows.append([cfg.digest(), tag, m, s, repr(mu), repr(sd)])
        print(tag)
        print(report.table())
    hio.write_csv(out / "sweep.csv", ("run", "params", "metric", "split", "mean", "std"), rows)
    return 0


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--aleph", type=float)
    p.add_argument("--t-pos", dest="t_pos", type=int)
    p.add_argument("--patience", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heco", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, write checkpoint and loss/attention logs")
    p.add_argument("--dataset", help="bundle directory (default: bundled toy ACM)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--l2-normalize", action="store_true", help="row-normalise dense features on load")
    p.add_argument("--no-early-stop", action="store_true")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="export target embeddings from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--dataset", help="bundle directory (default: the one recorded at training time)")
    p.add_argument("--out")
    p.add_argument("--view", choices=("mp", "sc", "concat"))
    p.add_argument("--l2-normalize", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("evaluate", help="probe and cluster an embeddings file")
    p.add_argument("embeddings")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-corpus", help="write a synthetic planted-partition bundle")
    p.add_argument("out")
    p.add_argument("--spec", help="JSON file with SynthSpec fields")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("sweep", help="train and evaluate every combination of a config grid")
    p.add_argument("grid", help="JSON object mapping RunConfig fields to lists of values")
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (HecoError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"heco {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
