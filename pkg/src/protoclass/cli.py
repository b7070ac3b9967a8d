"""Command-line orchestration of the full pipeline.

Commands: ingest, synth, train, eval, predict, baseline. Every command
resolves its parameters as defaults < config file (--config, TOML or
JSON) < explicit flags, prints the resulting config digest, and embeds it
in its outputs (JSON keys, CSV comment lines, checkpoint sidecars). All
randomness flows from a single seed, which falls back to the
PROTOCLASS_SEED environment variable when not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from .episodes import EpisodeConfig
from .errors import ProtoclassError
from .evaluation import evaluate, predict, predictions_to_csv
from .heads import HeadKind, ProjectionHead, load_head, save_head
from .inference import Metric
from .runconfig import RunConfig, load_config_file, merge_config
from .store import Split, StoreFormat, load_store, save_store
from .synth import LongTail, SynthConfig, Uniform, generate
from .training import AdamHyper, OptimizerKind, TrainConfig, train

SEED_ENV_VAR = "PROTOCLASS_SEED"


def _parse_splits(text: str) -> frozenset[Split]:
    return frozenset(Split.parse(part) for part in text.split(",") if part.strip())


def _parse_metric(text: str) -> Metric:
    aliases = {
        "cosine": Metric.COSINE,
        "neg-sq-euclidean": Metric.NEG_SQ_EUCLIDEAN,
        "neg_sq_euclidean": Metric.NEG_SQ_EUCLIDEAN,
        "sq-euclidean": Metric.NEG_SQ_EUCLIDEAN,
    }
    key = text.strip().lower()
    if key not in aliases:
        raise ValueError(f"unknown metric {text!r}")
    return aliases[key]


def _parse_k_list(text: str) -> list[int]:
    ks = [int(part) for part in text.split(",") if part.strip()]
    if not ks or any(k < 1 for k in ks):
        raise ValueError(f"bad k list {text!r}")
    return ks


def _resolve_seed(flag_value, config: RunConfig) -> int:
    if flag_value is not None:
        return int(flag_value)
    if config.get("seed") is not None:
        return int(config.fields["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return 0


def _write_meta(path: Path, payload: dict) -> None:
    with open(Path(str(path) + ".meta.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_digest(config: RunConfig) -> None:
    print(f"config_digest={config.digest}")


# -- commands -----------------------------------------------------------------


def _cmd_ingest(args, file_config) -> int:
    config = merge_config(
        "ingest",
        {"csv": str(args.csv), "out": str(args.out)},
        file_config,
        {},
    )
    _print_digest(config)
    store = load_store(args.csv, StoreFormat.CSV)
    save_store(store, args.out)
    _write_meta(Path(args.out), {"config_digest": config.digest,
                                 "n": len(store), "dimension": store.dimension})
    print(f"wrote {args.out}: n={len(store)} dimension={store.dimension}")
    return 0


def _cmd_synth(args, file_config) -> int:
    defaults = {
        "classes": 100,
        "dim": 64,
        "law": "longtail",
        "count": 4,
        "tail_low": 1,
        "tail_high": 4,
        "sigma": 0.05,
        "val_fraction": 0.0,
        "test_per_class": 2,
        "seed": None,
        "out": str(args.out),
    }
    flags = {
        "classes": args.classes,
        "dim": args.dim,
        "law": args.law,
        "count": args.count,
        "tail_low": args.tail_low,
        "tail_high": args.tail_high,
        "sigma": args.sigma,
        "val_fraction": args.val_fraction,
        "test_per_class": args.test_per_class,
    }
    config = merge_config("synth", defaults, file_config, flags)
    seed = _resolve_seed(args.seed, config)
    config.fields["seed"] = seed
    _print_digest(config)

    law_name = str(config.fields["law"]).lower()
    if law_name == "uniform":
        law = Uniform(int(config.fields["count"]))
    elif law_name == "longtail":
        law = LongTail(int(config.fields["tail_low"]), int(config.fields["tail_high"]))
    else:
        raise ValueError(f"unknown count law {law_name!r}")
    synth_config = SynthConfig(
        num_classes=int(config.fields["classes"]),
        dimension=int(config.fields["dim"]),
        law=law,
        sigma=float(config.fields["sigma"]),
        val_fraction=float(config.fields["val_fraction"]),
        test_per_class=int(config.fields["test_per_class"]),
        seed=seed,
    )
    store = generate(synth_config)
    save_store(store, args.out)
    _write_meta(Path(args.out), {"config_digest": config.digest,
                                 "n": len(store), "dimension": store.dimension})
    print(f"wrote {args.out}: n={len(store)} dimension={store.dimension}")
    return 0


def _build_initial_head(config: RunConfig, dimension: int, seed: int) -> ProjectionHead:
    arch = str(config.fields["arch"]).lower()
    proj_dim = config.fields["proj_dim"] or dimension
    if arch == "affine":
        if proj_dim == dimension:
            return ProjectionHead.identity(dimension)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11F]))
        return ProjectionHead.random(HeadKind.AFFINE, dimension, proj_dim, rng=rng)
    if arch == "mlp":
        hidden = config.fields["hidden"] or dimension
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x317D]))
        return ProjectionHead.random(
            HeadKind.MLP_ONE_HIDDEN, dimension, proj_dim, hidden, rng=rng
        )
    raise ValueError(f"unknown architecture {arch!r}")


def _cmd_train(args, file_config) -> int:
    defaults = {
        "store": str(args.store),
        "ways": 75,
        "shots": 3,
        "queries": 1,
        "episodes": 750,
        "lr": 1e-5,
        "swa_lr": 5e-5,
        "swa_start": None,
        "optimizer": "adam",
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "splits": "train",
        "normalize": True,
        "arch": "affine",
        "proj_dim": None,
        "hidden": None,
        "checkpoint_every": 0,
        "seed": None,
        "out": str(args.out),
    }
    flags = {
        "ways": args.ways,
        "shots": args.shots,
        "queries": args.queries,
        "episodes": args.episodes,
        "lr": args.lr,
        "swa_lr": args.swa_lr,
        "swa_start": args.swa_start,
        "optimizer": args.optimizer,
        "beta1": args.beta1,
        "beta2": args.beta2,
        "eps": args.eps,
        "splits": args.splits,
        "normalize": args.normalize,
        "arch": args.arch,
        "proj_dim": args.proj_dim,
        "hidden": args.hidden,
        "checkpoint_every": args.checkpoint_every,
    }
    config = merge_config("train", defaults, file_config, flags)
    seed = _resolve_seed(args.seed, config)
    config.fields["seed"] = seed
    _print_digest(config)

    store = load_store(args.store)
    episodes = int(config.fields["episodes"])
    swa_start = config.fields["swa_start"]
    train_config = TrainConfig(
        episodes=episodes,
        episode=EpisodeConfig(
            ways=int(config.fields["ways"]),
            shots=int(config.fields["shots"]),
            queries=int(config.fields["queries"]),
            splits=_parse_splits(str(config.fields["splits"])),
            seed=seed,
        ),
        base_lr=float(config.fields["lr"]),
        swa_lr=float(config.fields["swa_lr"]),
        swa_start_episode=None if swa_start is None else int(swa_start),
        optimizer=OptimizerKind(str(config.fields["optimizer"]).lower()),
        adam=AdamHyper(
            beta1=float(config.fields["beta1"]),
            beta2=float(config.fields["beta2"]),
            eps=float(config.fields["eps"]),
        ),
        checkpoint_every=int(config.fields["checkpoint_every"]),
        normalize_inputs=bool(config.fields["normalize"]),
    )
    initial_head = _build_initial_head(config, store.dimension, seed)

    out_path = Path(args.out)

    def checkpoint(ep_index: int, head: ProjectionHead) -> None:
        ckpt = out_path.with_name(f"{out_path.stem}.ep{ep_index + 1}{out_path.suffix}")
        save_head(head, ckpt)
        _write_meta(ckpt, {"episode_index": ep_index,
                           "config_digest": config.digest,
                           "snapshot_count": 0})

    if episodes == 0:
        final_head, log = initial_head, None
        snapshot_count = 0
    else:
        final_head, train_log = train(store, train_config, initial_head, checkpoint)
        log = train_log
        snapshot_count = max(episodes - train_config.swa_start, 0)

    save_head(final_head, out_path)
    _write_meta(out_path, {"episode_index": episodes - 1,
                           "config_digest": config.digest,
                           "snapshot_count": snapshot_count})
    if args.log is not None:
        if log is None:
            Path(args.log).write_text(
                f"# config_digest={config.digest}\nepisode,loss,lr,episode_accuracy\n"
            )
        else:
            log.to_csv(args.log, header_comment=f"config_digest={config.digest}")
    print(f"wrote {out_path}")
    return 0


def _cmd_eval(args, file_config, with_report: bool = True) -> int:
    command = "eval" if with_report else "predict"
    defaults = {
        "store": str(args.store),
        "head": str(args.head),
        "method": "proto",
        "support_splits": "train",
        "query_split": "test",
        "k": "5,10" if with_report else "5",
        "metric": "cosine",
        "normalize": True,
        "normalize_prototypes": False,
    }
    flags = {
        "method": args.method,
        "support_splits": args.support_splits,
        "query_split": args.query_split,
        "k": args.k,
        "metric": args.metric,
        "normalize": args.normalize,
        "normalize_prototypes": args.normalize_prototypes,
    }
    config = merge_config(command, defaults, file_config, flags)
    _print_digest(config)

    store = load_store(args.store)
    head = load_head(args.head)
    k_list = _parse_k_list(str(config.fields["k"]))
    common = dict(
        method=str(config.fields["method"]),
        support_splits=_parse_splits(str(config.fields["support_splits"])),
        query_split=Split.parse(str(config.fields["query_split"])),
        metric=_parse_metric(str(config.fields["metric"])),
        normalize_inputs=bool(config.fields["normalize"]),
        normalize_prototypes=bool(config.fields["normalize_prototypes"]),
    )
    if with_report:
        report, predictions = evaluate(store, head, k_list=k_list, **common)
        report.config_digest = config.digest
        report.to_json(args.report)
        for k in sorted(report.recall_at):
            print(f"recall@{k}={report.recall_at[k]:.5f}")
        if args.predictions is not None:
            predictions_to_csv(
                predictions, args.predictions,
                header_comment=f"config_digest={config.digest}",
            )
        print(f"wrote {args.report}")
    else:
        predictions = predict(store, head, k=max(k_list), **common)
        predictions_to_csv(
            predictions, args.out, header_comment=f"config_digest={config.digest}"
        )
        print(f"wrote {args.out}")
    return 0


def _cmd_baseline(args, file_config) -> int:
    defaults = {
        "store": str(args.store),
        "support_splits": "train",
        "query_split": "test",
        "k": "5,10",
    }
    flags = {
        "support_splits": args.support_splits,
        "query_split": args.query_split,
        "k": args.k,
    }
    config = merge_config("baseline", defaults, file_config, flags)
    _print_digest(config)

    store = load_store(args.store)
    report, rankings = baseline_mod.run_baseline(
        store,
        _parse_splits(str(config.fields["support_splits"])),
        Split.parse(str(config.fields["query_split"])),
        _parse_k_list(str(config.fields["k"])),
    )
    doc = {
        "n": report["n"],
        "recall_at": {str(k): v for k, v in sorted(report["recall_at"].items())},
        "config_digest": config.digest,
    }
    with open(args.report, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for k, v in sorted(report["recall_at"].items()):
        print(f"recall@{k}={v:.5f}")
    if args.predictions is not None:
        with open(args.predictions, "w") as fh:
            fh.write(f"# config_digest={config.digest}\n")
            fh.write("record_id,rank,label_id,score\n")
            for record_id, ranked in rankings:
                for rank, (label, score) in enumerate(ranked, start=1):
                    fh.write(f"{record_id},{rank},{label},{score}\n")
    print(f"wrote {args.report}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoclass",
        description="Few-shot embedding classification: episodic prototype "
        "training, retrieval baselines, and Recall@k evaluation.",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML or JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a CSV fixture to an FSEB store")
    p.add_argument("csv", type=Path)
    p.add_argument("out", type=Path)

    p = sub.add_parser("synth", help="generate a synthetic FSEB store")
    p.add_argument("out", type=Path)
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--law", choices=["longtail", "uniform"])
    p.add_argument("--count", type=int, help="per-class count for the uniform law")
    p.add_argument("--tail-low", dest="tail_low", type=int)
    p.add_argument("--tail-high", dest="tail_high", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--test-per-class", dest="test_per_class", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="episodic training of a projection head")
    p.add_argument("store", type=Path)
    p.add_argument("--out", type=Path, required=True, help="head checkpoint path")
    p.add_argument("--log", type=Path, default=None, help="training log CSV path")
    p.add_argument("--ways", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--queries", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--swa-lr", dest="swa_lr", type=float)
    p.add_argument("--swa-start", dest="swa_start", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--splits", help="episode source splits, e.g. train or train,val")
    p.add_argument("--normalize", dest="normalize", action="store_true", default=None)
    p.add_argument("--no-normalize", dest="normalize", action="store_false")
    p.add_argument("--arch", choices=["affine", "mlp"])
    p.add_argument("--proj-dim", dest="proj_dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--seed", type=int)

    for name in ("eval", "predict"):
        p = sub.add_parser(
            name,
            help="evaluate Recall@k" if name == "eval" else "write top-k predictions",
        )
        p.add_argument("store", type=Path)
        p.add_argument("head", type=Path)
        p.add_argument("--method", choices=["proto", "nn"])
        p.add_argument("--support-splits", dest="support_splits")
        p.add_argument("--query-split", dest="query_split")
        p.add_argument("--k")
        p.add_argument("--metric")
        p.add_argument("--normalize", dest="normalize", action="store_true", default=None)
        p.add_argument("--no-normalize", dest="normalize", action="store_false")
        p.add_argument("--normalize-prototypes", dest="normalize_prototypes",
                       action="store_true", default=None)
        if name == "eval":
            p.add_argument("--report", type=Path, required=True)
            p.add_argument("--predictions", type=Path, default=None)
        else:
            p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("baseline", help="independent prototype-averaging cross-check")
    p.add_argument("store", type=Path)
    p.add_argument("--support-splits", dest="support_splits")
    p.add_argument("--query-split", dest="query_split")
    p.add_argument("--k")
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--predictions", type=Path, default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_config = None
    if args.config is not None:
        try:
            file_config = load_config_file(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    handlers = {
        "ingest": _cmd_ingest,
        "synth": _cmd_synth,
        "train": _cmd_train,
        "eval": lambda a, c: _cmd_eval(a, c, with_report=True),
        "predict": lambda a, c: _cmd_eval(a, c, with_report=False),
        "baseline": _cmd_baseline,
    }
    try:
        return handlers[args.command](args, file_config)
    except (ProtoclassError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
