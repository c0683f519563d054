"""Command-line interface: curate, train, enhance, eval, gradcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 verification failure.  A plain ``key = value`` config file supplies
defaults; explicit command-line flags override it.  Every run echoes its
resolved settings to ``<out>/resolved_config.txt`` before doing work.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as dt
from . import metrics as mt
from . import verify
from .train import PairDataset, TrainConfig
from .train import train as run_training
from .autodiff import ContractError, Tensor
from .model import (CheckpointError, ConfigError, EnhancementModel, ModelConfig,
                    load_checkpoint, save_checkpoint)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

log = logging.getLogger("lcenhance")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}", EXIT_USAGE)
    values: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise CliError(f"{path}:{lineno}: expected 'key = value'", EXIT_USAGE)
        values[key.strip()] = value.strip()
    return values


def _coerce(name: str, raw: str, kind):
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise CliError(f"config key {name!r}: cannot parse {raw!r} as "
                       f"{kind.__name__}", EXIT_USAGE) from None


def _resolve(args, file_cfg: dict[str, str], schema: dict[str, type]) -> dict:
    """File values first, then any explicitly passed command-line flag."""
    resolved = {}
    for name, kind in schema.items():
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            resolved[name] = cli_val
        elif name in file_cfg:
            resolved[name] = _coerce(name, file_cfg[name], kind)
    unknown = set(file_cfg) - set(schema)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_USAGE)
    return resolved


def _prepare_out(args, resolved: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"command = {args.command}", f"seed = {args.seed}"]
    lines += [f"{k} = {v}" for k, v in sorted(resolved.items())]
    (out / "resolved_config.txt").write_text("\n".join(lines) + "\n")
    return out


def _model_config(resolved: dict) -> ModelConfig:
    config = ModelConfig()
    if "base_width" in resolved:
        config.base_width = resolved["base_width"]
    if "stages" in resolved:
        config.stages = resolved["stages"]
        config.heads_per_stage = tuple(min(2 ** s, 8)
                                       for s in range(config.stages))
    try:
        config.validate()
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE)
    return config


# -- subcommands ------------------------------------------------------------

_CURATE_SCHEMA = {"patch_size": int, "stride": int,
                  "brightness_threshold": float, "confidence_threshold": float}


def _cmd_curate(args, file_cfg) -> int:
    resolved = _resolve(args, file_cfg, _CURATE_SCHEMA)
    out = _prepare_out(args, resolved)
    try:
        records, skipped = dt.curate_corpus(
            args.corpus,
            patch_size=resolved.get("patch_size", 32),
            stride=resolved.get("stride") or None,
            brightness_threshold=resolved.get("brightness_threshold",
                                              dt.BRIGHTNESS_THRESHOLD),
            confidence_threshold=resolved.get("confidence_threshold",
                                              dt.CONFIDENCE_THRESHOLD))
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_DATA)
    (out / "manifest.tsv").write_text(
        "\n".join(dt.manifest_lines(records)) + "\n")
    accepted = sum(1 for r in records if r.accepted)
    print(f"curate: {len(records)} patches, {accepted} accepted, "
          f"{len(skipped)} sources skipped")
    if not records and skipped:
        raise CliError("no usable image pairs in corpus", EXIT_DATA)
    return EXIT_OK


_TRAIN_SCHEMA = {"steps": int, "batch_size": int, "patch": int, "lr": float,
                 "lambda_r": float, "val_interval": int,
                 "checkpoint_interval": int, "scheduler_start_step": int,
                 "synthetic": int, "base_width": int, "stages": int}


def _cmd_train(args, file_cfg) -> int:
    resolved = _resolve(args, file_cfg, _TRAIN_SCHEMA)
    out = _prepare_out(args, resolved)
    config = TrainConfig(seed=args.seed)
    for name in ("steps", "batch_size", "patch", "lr", "lambda_r",
                 "val_interval", "checkpoint_interval", "scheduler_start_step"):
        if name in resolved:
            setattr(config, name, resolved[name])

    n_synth = resolved.get("synthetic", 0)
    if n_synth:
        pairs = [dt.synthetic_pair(args.seed + i, size=max(config.patch, 8))
                 for i in range(n_synth)]
    elif args.corpus:
        records, _ = dt.curate_corpus(args.corpus, patch_size=config.patch)
        pairs = [(r.low, r.reference) for r in records if r.accepted]
        if not pairs:
            raise CliError("curation accepted no training pairs", EXIT_DATA)
    else:
        raise CliError("train needs --corpus DIR or synthetic pairs "
                       "(--synthetic N)", EXIT_USAGE)

    ckpt = out / "model.ckpt"
    if args.resume:
        try:
            model = load_checkpoint(args.resume)
        except (CheckpointError, OSError) as exc:
            raise CliError(f"cannot resume: {exc}", EXIT_DATA)
    else:
        model = EnhancementModel(_model_config(resolved), seed=args.seed)

    if config.steps == 0:
        save_checkpoint(model, ckpt)
        print(f"train: wrote initialized checkpoint to {ckpt}")
        return EXIT_OK

    dataset = PairDataset(pairs)
    try:
        state, history = run_training(model, dataset, config,
                                  log_path=out / "train_log.tsv",
                                  checkpoint_path=ckpt)
    except ContractError as exc:
        raise CliError(f"training aborted: {exc}", EXIT_VERIFY)
    print(f"train: {state.step} steps, loss {history[0]:.6f} -> "
          f"{history[-1]:.6f}, checkpoint {ckpt}")
    return EXIT_OK


def _cmd_enhance(args, file_cfg) -> int:
    resolved = _resolve(args, file_cfg, {})
    out = _prepare_out(args, resolved)
    try:
        model = load_checkpoint(args.checkpoint)
    except (CheckpointError, OSError) as exc:
        raise CliError(f"cannot load checkpoint: {exc}", EXIT_DATA)
    failures = 0
    processed = 0
    for name in args.images:
        src = Path(name)
        try:
            img = dt.load_image(src)
            _, i_ref = model.forward(Tensor(img), training=False)
            dt.save_image(i_ref.data, out / f"{src.stem}_enhanced{src.suffix}")
            processed += 1
        except (dt.ImageFormatError, OSError) as exc:
            log.error("%s: %s", name, exc)
            failures += 1
    print(f"enhance: {processed} images written, {failures} failed")
    if failures:
        raise CliError(f"{failures} of {len(args.images)} images failed",
                       EXIT_DATA)
    if not processed:
        raise CliError("no input images given", EXIT_USAGE)
    return EXIT_OK


def _cmd_eval(args, file_cfg) -> int:
    resolved = _resolve(args, file_cfg, {})
    out = _prepare_out(args, resolved)
    model = None
    if not args.identity:
        try:
            model = load_checkpoint(args.checkpoint)
        except (CheckpointError, OSError, TypeError) as exc:
            raise CliError(f"cannot load checkpoint: {exc}", EXIT_DATA)
    try:
        records, _ = dt.curate_corpus(args.corpus, patch_size=args.patch)
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_DATA)
    pairs = [(r.low, r.reference, f"{r.source_id}:{r.origin[0]},{r.origin[1]}")
             for r in records if r.accepted]
    if not pairs:
        raise CliError("no accepted evaluation pairs", EXIT_DATA)
    rows = []
    for low, ref, name in pairs:
        pred = low if model is None else model.forward(Tensor(low))[1].data
        rows.append((name, mt.psnr(pred, ref), mt.ssim(pred, ref)))
    table = mt.results_table(rows)
    (out / "eval.tsv").write_text(table)
    print(table, end="")
    return EXIT_OK


def _cmd_gradcheck(args, file_cfg) -> int:
    resolved = _resolve(args, file_cfg, {})
    out = _prepare_out(args, resolved)
    config = ModelConfig(base_width=8, stages=2, heads_per_stage=(1, 2),
                         bottleneck_heads=2, refine_width=4)
    results = verify.gradcheck_blocks(config, seed=args.seed)
    lines = []
    worst_err = 0.0
    for name, err in results.items():
        status = "pass" if err < verify.TOLERANCE else "FAIL"
        worst_err = max(worst_err, err)
        lines.append(f"{name}\t{err:.3e}\t{status}")
    report = "\n".join(lines) + "\n"
    (out / "gradcheck.tsv").write_text(report)
    print(report, end="")
    if worst_err >= verify.TOLERANCE:
        raise CliError(f"gradient check failed (max error {worst_err:.3e})",
                       EXIT_VERIFY)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcenhance",
        description="Luminance-chrominance low-light image enhancement")
    parser.add_argument("--config", metavar="PATH",
                        help="key = value settings file")
    parser.add_argument("--seed", type=int, default=0, metavar="N")
    parser.add_argument("--out", default="out", metavar="DIR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="filter a low/ref corpus into patches")
    p.add_argument("corpus", help="directory with low/ and ref/ subdirs")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--brightness-threshold", dest="brightness_threshold",
                   type=float)
    p.add_argument("--confidence-threshold", dest="confidence_threshold",
                   type=float)

    p = sub.add_parser("train", help="optimize a model on curated pairs")
    p.add_argument("--corpus", help="directory with low/ and ref/ subdirs")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="train on N generated degradation pairs instead")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--resume", metavar="CKPT",
                   help="continue from an existing checkpoint")

    p = sub.add_parser("enhance", help="run a checkpoint over image files")
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="*")

    p = sub.add_parser("eval", help="PSNR/SSIM table over a corpus")
    p.add_argument("--checkpoint")
    p.add_argument("--identity", action="store_true",
                   help="score the unmodified low image (no model)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--patch", type=int, default=32)

    sub.add_parser("gradcheck",
                   help="finite-difference verification of every block")
    return parser


_COMMANDS = {
    "curate": _cmd_curate,
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        file_cfg = _read_config_file(args.config)
        return _COMMANDS[args.command](args, file_cfg)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
