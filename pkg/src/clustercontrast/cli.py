"""Command-line entry point: ``clustercontrast {generate,train,eval,ablate}``.

Exit codes: 0 success, 1 I/O, 2 bad configuration, 3 training aborted.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__, ablation
from .core import ClusterContrastError, make_rng
from .datagen import GenParams, RetrievalSplit, generate, load_dataset, make_split, save_dataset
from .encoder import Encoder
from .evaluation import evaluate, make_monitor, write_eval_json, write_rankings
from .trainer import TrainConfig, TrainingAborted, train

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
CHECKPOINT_FORMAT = "clustercontrast-checkpoint"
CHECKPOINT_VERSION = 1
EVAL_DEFAULTS = {"query_fraction": 0.1, "junk_rule": True, "eval_every": 0}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_json_arg(value: str, what: str):
    """Accept either a path to a JSON file or an inline JSON document."""
    path = Path(value)
    try:
        text = path.read_text() if path.is_file() else value
    except OSError as exc:
        raise CliError(f"cannot read {what}: {exc}", EXIT_IO) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON in {what}: {exc}", EXIT_CONFIG) from None


def _parse_run_config(data) -> tuple[TrainConfig, dict]:
    if not isinstance(data, dict):
        raise CliError("config must be a JSON object", EXIT_CONFIG)
    data = dict(data)
    eval_cfg = {**EVAL_DEFAULTS, **data.pop("eval", {})}
    unknown = set(eval_cfg) - set(EVAL_DEFAULTS)
    if unknown:
        raise CliError(f"unknown keys in 'eval': {sorted(unknown)}", EXIT_CONFIG)
    try:
        return TrainConfig.from_dict(data), eval_cfg
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad config: {exc}", EXIT_CONFIG) from None


def _prepare_out_dir(path: Path, force: bool) -> None:
    if path.exists():
        if not force:
            raise CliError(f"{path} already exists (use --force to overwrite)", EXIT_IO)
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    try:
        path.mkdir(parents=True)
    except OSError as exc:
        raise CliError(f"cannot create {path}: {exc}", EXIT_IO) from None


def _load_data(path: str):
    try:
        return load_dataset(path)
    except OSError as exc:
        raise CliError(f"cannot read dataset: {exc}", EXIT_IO) from None
    except ClusterContrastError as exc:
        raise CliError(f"bad dataset {path}: {exc}", EXIT_IO) from None


def _git_stamp() -> str | None:
    head = Path(__file__).resolve().parents[2] / ".git" / "HEAD"
    try:
        ref = head.read_text().strip()
        if ref.startswith("ref: "):
            return (head.parent / ref[5:]).read_text().strip()
        return ref
    except OSError:
        return None


def _write_manifest(out: Path, command: str, config: dict, started: float, files: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "git": _git_stamp(),
        "config": config,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "elapsed_s": round(time.time() - started, 3),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def save_checkpoint(path, cfg: TrainConfig, encoder: Encoder, rng_state: dict, reports: list[dict]) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "encoder": {"weights": encoder.weights.tolist(), "bias": encoder.bias.tolist()},
        "rng_state": rng_state,
        "epochs": reports,
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_checkpoint(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
    data["encoder"] = Encoder(np.array(data["encoder"]["weights"], dtype=np.float64),
                              np.array(data["encoder"]["bias"], dtype=np.float64))
    return data


def _write_epochs(path: Path, reports: list[dict]) -> None:
    with open(path, "a") as fh:
        for r in reports:
            fh.write(json.dumps(r) + "\n")


def cmd_generate(args) -> int:
    data = _read_json_arg(args.params, "--params")
    try:
        params = GenParams.from_json(json.dumps(data))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad generator params: {exc}", EXIT_CONFIG) from None
    dataset = generate(params)
    try:
        save_dataset(dataset, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    print(f"wrote {args.out}: N={dataset.n} ids={params.n_ids} cameras={params.n_cameras} d_in={params.d_in}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    cfg, eval_cfg = _parse_run_config(_read_json_arg(args.config, "--config") if args.config else {})
    dataset = _load_data(args.data)
    out = Path(args.out)
    _prepare_out_dir(out, args.force)
    split = make_split(dataset, eval_cfg["query_fraction"], make_rng(cfg.seed), eval_cfg["junk_rule"])
    (out / "split.json").write_text(split.to_json() + "\n")
    monitor = make_monitor(dataset, split, eval_cfg["eval_every"], eval_cfg["junk_rule"])
    config_echo = {**cfg.to_dict(), "eval": eval_cfg}
    try:
        result = train(dataset, cfg, monitor)
    except TrainingAborted as exc:
        _write_epochs(out / "epochs.jsonl", [r.to_dict() for r in exc.reports])
        _write_manifest(out, "train", config_echo, started, ["split.json", "epochs.jsonl"])
        print(f"training aborted at epoch {exc.epoch}: K={exc.k} clusters, need {exc.needed}",
              file=sys.stderr)
        return EXIT_ABORT
    reports = [r.to_dict() for r in result.reports]
    _write_epochs(out / "epochs.jsonl", reports)
    save_checkpoint(out / "checkpoint.json", cfg, result.encoder, result.rng_state, reports)
    report = evaluate(result.encoder, dataset, split, eval_cfg["junk_rule"])
    write_eval_json(report, out / "eval.json")
    _write_manifest(out, "train", config_echo, started,
                    ["split.json", "epochs.jsonl", "checkpoint.json", "eval.json"])
    print(f"trained {cfg.epochs} epochs ({cfg.variant}): mAP={report.map:.4f} top1={report.top(1):.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = _load_data(args.data)
    try:
        ckpt = load_checkpoint(args.checkpoint)
        split = RetrievalSplit.from_json(Path(args.split).read_text())
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad checkpoint or split: {exc}", EXIT_CONFIG) from None
    out = Path(args.out)
    _prepare_out_dir(out, args.force)
    report = evaluate(ckpt["encoder"], dataset, split, not args.no_junk_rule)
    write_eval_json(report, out / "eval.json")
    files = ["eval.json"]
    if args.rankings:
        write_rankings(out / "rankings.csv", ckpt["encoder"], dataset, split, args.rankings,
                       not args.no_junk_rule)
        files.append("rankings.csv")
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_ablate(args) -> int:
    started = time.time()
    cfg, eval_cfg = _parse_run_config(_read_json_arg(args.config, "--config") if args.config else {})
    dataset = _load_data(args.data)
    out = Path(args.out)
    _prepare_out_dir(out, args.force)
    split = make_split(dataset, eval_cfg["query_fraction"], make_rng(cfg.seed), eval_cfg["junk_rule"])
    try:
        rows = ablation.run_suite(args.suite, dataset, split, cfg, seeds=args.seeds,
                                  junk_rule=eval_cfg["junk_rule"])
    except TrainingAborted as exc:
        print(f"ablation run aborted at epoch {exc.epoch}: K={exc.k} clusters, need {exc.needed}",
              file=sys.stderr)
        return EXIT_ABORT
    ablation.write_csv(rows, out / f"{args.suite}.csv")
    _write_manifest(out, f"ablate:{args.suite}", {**cfg.to_dict(), "eval": eval_cfg, "seeds": args.seeds},
                    started, [f"{args.suite}.csv"])
    for row in rows:
        print(f"{row.setting:32s} mAP={row.map:.4f} top1={row.top1:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustercontrast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic identity dataset as TSV")
    p.add_argument("--params", required=True, help="generator parameters: JSON file or inline JSON")
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run the unsupervised training pipeline")
    p.add_argument("--data", required=True, help="dataset TSV")
    p.add_argument("--config", help="training config: JSON file or inline JSON (defaults if omitted)")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--force", action="store_true", help="replace an existing run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a query/gallery split")
    p.add_argument("--data", required=True, help="dataset TSV")
    p.add_argument("--checkpoint", required=True, help="checkpoint.json from a training run")
    p.add_argument("--split", required=True, help="split JSON with 'query' and 'gallery' id lists")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rankings", type=int, default=0, metavar="K",
                   help="also write the top-K gallery list per query to rankings.csv")
    p.add_argument("--no-junk-rule", action="store_true",
                   help="keep same-identity same-camera gallery items")
    p.add_argument("--force", action="store_true", help="replace an existing output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation sweep and write a CSV")
    p.add_argument("--suite", required=True, choices=ablation.SUITES)
    p.add_argument("--data", required=True, help="dataset TSV")
    p.add_argument("--config", help="base training config: JSON file or inline JSON")
    p.add_argument("--seeds", type=int, nargs="+", default=[0], help="training seeds to average over")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="replace an existing output directory")
    p.set_defaults(func=cmd_ablate)
    return parser


def _thread_limit():
    value = os.environ.get("CC_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with _thread_limit():
            return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
