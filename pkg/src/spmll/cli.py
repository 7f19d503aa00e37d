"""Command-line surface: one subcommand per experiment step.

Exit codes: 0 success, 1 validation/config error, 2 I/O error. Stdout carries
output data paths; diagnostics go to stderr. Every run is seeded via --seed
(default 0) and the train subcommand writes its effective config as the first
record of the training log before any computation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings

import numpy as np

from . import __version__
from .adversarial import ADV_METHODS, AdvConfig
from .corrgraph import build_graph, load_class_semantics, load_graph, save_graph
from .data import SynthConfig, dataset_stats, gen_synthetic, load_jsonl, save_jsonl, synthetic_class_semantics
from .errors import SpmllError, TrainingDivergedError
from .evaluate import evaluate_scores, write_report
from .gradcheck import run_gradcheck
from .losses import LOSS_KINDS
from .model import checkpoint_graph_path, export_centers, load_checkpoint
from .trainer import TrainConfig, train


class CliError(Exception):
    """Argument or config problem surfaced to the user; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise CliError(message)


# key -> (type caster, default) for the flat key=value config file
_CONFIG_SCHEMA: dict[str, tuple] = {
    "lr": (float, 2e-4),
    "gamma_lr": (float, 0.9),
    "hidden": (int, 1024),
    "layers": (int, 2),
    "embed_dim": (int, None),
    "cosine_scale": (float, 10.0),
    "gcn_layers": (int, 2),
    "knn_k": (int, 3),
    "smooth_s": (float, 0.5),
    "epochs": (int, 30),
    "batch": (int, 64),
    "seed": (int, 0),
    "loss": (str, "bce"),
    "gamma": (float, 2.0),
    "alpha": (float, 0.25),
    "adv.method": (str, "none"),
    "adv.epsilon": (float, 0.0125),
    "adv.ball_radius": (float, 0.05),
    "adv.steps": (int, 5),
    "adv.random_start": (bool, False),
}


def _cast(key: str, raw: str):
    caster = _CONFIG_SCHEMA[key][0]
    if caster is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise CliError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return caster(raw.strip())
    except ValueError as exc:
        raise CliError(f"config key {key}: {exc}") from exc


def parse_config(path: str | None, overrides: dict | None = None) -> tuple[TrainConfig, dict]:
    """defaults <- file <- flag overrides; returns the config and its flat dict."""
    values = {k: default for k, (_, default) in _CONFIG_SCHEMA.items()}
    if path is not None:
        seen: set[str] = set()
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{line_no}: expected key=value, got {line!r}")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in _CONFIG_SCHEMA:
                    raise CliError(
                        f"{path}:{line_no}: unknown key {key!r}; valid keys: "
                        + ", ".join(sorted(_CONFIG_SCHEMA))
                    )
                if key in seen:
                    print(f"warning: duplicate config key {key!r}; last occurrence wins",
                          file=sys.stderr)
                seen.add(key)
                values[key] = _cast(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _CONFIG_SCHEMA:
            raise CliError(f"unknown config override {key!r}")
        values[key] = value
    config = TrainConfig(
        epochs=values["epochs"],
        batch=values["batch"],
        seed=values["seed"],
        loss=values["loss"],
        gamma=values["gamma"],
        alpha=values["alpha"],
        adv=AdvConfig(
            method=values["adv.method"],
            epsilon=values["adv.epsilon"],
            ball_radius=values["adv.ball_radius"],
            steps=values["adv.steps"],
            random_start=values["adv.random_start"],
        ),
        hidden=values["hidden"],
        layers=values["layers"],
        embed_dim=values["embed_dim"],
        gcn_layers=values["gcn_layers"],
        cosine_scale=values["cosine_scale"],
        lr=values["lr"],
        gamma_lr=values["gamma_lr"],
        knn_k=values["knn_k"],
        smooth_s=values["smooth_s"],
    )
    return config, values


def config_fingerprint(values: dict) -> str:
    canonical = json.dumps(values, sort_keys=True).encode()
    return hashlib.sha256(canonical).hexdigest()


def _build_parser() -> _Parser:
    parser = _Parser(prog="spmll", description="SPMLL verb-classifier toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", parents=[], help="build the class-correlation graph")
    p.add_argument("--classes", required=True, help="class metadata JSONL")
    p.add_argument("--k", type=int, default=3, help="neighbors kept per class")
    p.add_argument("--s", type=float, default=0.5, help="smoothing weight in (0,1)")
    p.add_argument("--out", required=True, help="graph JSON output path")

    p = sub.add_parser("synth", help="generate the synthetic ambiguous benchmark")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--l", type=int, default=10, help="class count")
    p.add_argument("--groups", default="4,3,3", help="comma-separated group sizes")
    p.add_argument("--samples", type=int, default=50, help="samples per class per split")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--overlap", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--train", required=True, dest="train_path", help="training records JSONL")
    p.add_argument("--graph", help="correlation graph JSON (required when gcn layers > 0)")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=LOSS_KINDS)
    p.add_argument("--adv", choices=ADV_METHODS)
    p.add_argument("--gcn-layers", type=int)
    p.add_argument("--gcn", choices=("on", "off"), help="off is shorthand for --gcn-layers 0")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled test set")
    p.add_argument("--ckpt", required=True, help="checkpoint JSON")
    p.add_argument("--test", required=True, dest="test_path", help="test records JSONL")
    p.add_argument("--graph", help="override the checkpoint's graph path")
    p.add_argument("--metrics", required=True, help="metrics report output path")

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--models", type=int, default=24)

    p = sub.add_parser("export-centers", help="dump pre/post-refinement class centers as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", help="override the checkpoint's graph path")
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="label statistics of a fully annotated dataset")
    p.add_argument("--data", required=True, help="records JSONL with full label sets")
    p.add_argument("--out", help="write the JSON summary here instead of stdout")
    return parser


def _cmd_build_graph(args) -> int:
    semantics = load_class_semantics(args.classes)
    graph = build_graph(semantics, k=args.k, s=args.s)
    save_graph(graph, args.out)
    print(args.out)
    return 0


def _cmd_synth(args) -> int:
    import os

    sizes = [int(v) for v in args.groups.split(",") if v.strip()]
    if sum(sizes) != args.l:
        raise CliError(f"group sizes {sizes} must sum to --l {args.l}")
    groups, start = [], 0
    for size in sizes:
        groups.append(tuple(range(start, start + size)))
        start += size
    cfg = SynthConfig(
        n_classes=args.l,
        groups=tuple(groups),
        samples_per_class=args.samples,
        cluster_separation=args.separation,
        overlap_radius=args.overlap,
        noise_scale=args.noise,
        d_in=args.dim,
        seed=args.seed,
    )
    train_ds, test_ds = gen_synthetic(cfg)
    semantics = synthetic_class_semantics(cfg)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.jsonl")
    test_path = os.path.join(args.out, "test.jsonl")
    classes_path = os.path.join(args.out, "classes.jsonl")
    save_jsonl(train_ds, train_path)
    save_jsonl(test_ds, test_path)
    with open(f"{classes_path}.tmp", "w", encoding="utf-8") as fh:
        for sem in semantics:
            fh.write(
                json.dumps(
                    {
                        "class_id": sem.class_id,
                        "name": sem.name,
                        "definition": sem.definition,
                        "embedding": [float(v) for v in sem.embedding],
                    }
                )
                + "\n"
            )
    os.replace(f"{classes_path}.tmp", classes_path)
    print(train_path)
    print(test_path)
    print(classes_path)
    return 0


def _cmd_train(args) -> int:
    overrides = {
        "seed": args.seed,
        "loss": args.loss,
        "adv.method": args.adv,
        "gcn_layers": args.gcn_layers,
        "epochs": args.epochs,
        "batch": args.batch,
        "lr": args.lr,
    }
    if args.gcn == "off":
        overrides["gcn_layers"] = 0
    config, values = parse_config(args.config, overrides)
    config = config.with_overrides(graph_path=args.graph, checkpoint_out=args.out)
    if config.gcn_layers > 0 and args.graph is None:
        raise CliError("gcn layers > 0 but no --graph given (use --gcn off for the plain head)")
    dataset = load_jsonl(args.train_path, expect_labels=False, split="train")

    log_path = f"{args.out}.log.jsonl"
    fingerprint = config_fingerprint(values)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": values, "config_fingerprint": fingerprint}) + "\n")
        fh.flush()
        try:
            model, log = train(dataset, config)
        except TrainingDivergedError as exc:
            diag = {
                "error": str(exc),
                "epoch": exc.epoch,
                "batch": exc.batch,
                "param_norms": exc.param_norms,
            }
            fh.write(json.dumps(diag) + "\n")
            raise
        for record in log:
            fh.write(json.dumps(record) + "\n")
    print(args.out)
    print(log_path)
    return 0


def _eval_scores(model, dataset, batch: int = 256) -> np.ndarray:
    chunks = [
        model.forward(dataset.embeddings[i : i + batch])
        for i in range(0, len(dataset), batch)
    ]
    return np.vstack(chunks)


def _load_model(ckpt: str, graph_flag: str | None):
    graph_path = graph_flag if graph_flag is not None else checkpoint_graph_path(ckpt)
    graph = load_graph(graph_path) if graph_path else None
    return load_checkpoint(ckpt, graph=graph)


def _cmd_eval(args) -> int:
    model = _load_model(args.ckpt, args.graph)
    dataset = load_jsonl(args.test_path, expect_labels=False, split="test")
    scores = _eval_scores(model, dataset)
    report = evaluate_scores(scores, dataset.positives, dataset.labels)
    with open(args.ckpt, "rb") as fh:
        fingerprint = hashlib.sha256(fh.read()).hexdigest()
    write_report(report, args.metrics, config_fingerprint=fingerprint)
    summary = f"top1={report.top1:.4f} top5={report.top5:.4f} map=" + (
        f"{report.map:.4f}" if report.map is not None else "n/a"
    )
    print(summary, file=sys.stderr)
    print(args.metrics)
    return 0


def _cmd_gradcheck(args) -> int:
    result = run_gradcheck(args.seed, n_models=args.models)
    print(f"max relative error {result.max_rel_err:.3e} ({result.worst_tensor})")
    return 0 if result.max_rel_err < 1e-4 else 1


def _cmd_export_centers(args) -> int:
    model = _load_model(args.ckpt, args.graph)
    export_centers(model, args.out)
    print(args.out)
    return 0


def _cmd_stats(args) -> int:
    dataset = load_jsonl(args.data, expect_labels=True, split="test")
    summary = dataset_stats(dataset)
    text = json.dumps(summary, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(args.out)
    else:
        print(text)
    return 0


_COMMANDS = {
    "build-graph": _cmd_build_graph,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "export-centers": _cmd_export_centers,
    "stats": _cmd_stats,
}


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            args = parser.parse_args(argv)
            return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SpmllError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
