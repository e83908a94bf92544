"""Command-line entry points: ``train``, ``infer`` and ``eval``.

Exit codes: 0 ok, 1 runtime/IO failure, 2 configuration error, 3 dataset
problem, 4 filename mismatch in eval, 5 per-pair error in eval.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, parse_config
from .data import Image, load_dataset, load_ppm, sample_batch, save_ppm
from .errors import ConfigError, GDCAError
from .metrics import evaluate_dirs
from .models import Generator
from .tensor import SINGLE
from .train import TrainState, run_training

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATASET, EXIT_MISMATCH, EXIT_PAIR = 0, 1, 2, 3, 4, 5


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_config(path, seed: int | None = None) -> Config:
    text = Path(path).read_text(encoding="utf-8")
    cfg = parse_config(text)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    return cfg.validate()


def cmd_train(config_path, seed: int | None = None, print_config: bool = False) -> int:
    try:
        cfg = load_config(config_path, seed)
    except (ConfigError, OSError, UnicodeDecodeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if print_config:
        sys.stdout.write(cfg.to_text())
        return EXIT_OK

    base = Path(config_path).resolve().parent
    data_dir = _resolve(base, cfg.dataset_dir)
    ckpt_path = _resolve(base, cfg.checkpoint_path)
    try:
        images = load_dataset(data_dir) if data_dir.is_dir() else []
    except (GDCAError, OSError) as exc:
        _err(f"cannot read dataset {data_dir}: {exc}")
        return EXIT_DATASET
    if not images:
        _err(f"dataset directory {data_dir} has no .ppm images")
        return EXIT_DATASET
    hp = 4 * cfg.patch_size
    small = [n for n, im in images if im.height < hp or im.width < hp]
    if small:
        _err(f"images smaller than the {hp}x{hp} HR patch: {', '.join(small)}")
        return EXIT_DATASET

    schedule = cfg.schedule()
    state = TrainState.fresh(cfg.generator_config(), schedule, cfg.extractor_seed, SINGLE)
    if cfg.resume and ckpt_path.exists():
        try:
            tensors, stored_seed = load_checkpoint(ckpt_path)
            if stored_seed != cfg.extractor_seed:
                raise ConfigError(f"checkpoint extractor seed {stored_seed} != config {cfg.extractor_seed}")
            state.load(tensors)
        except ConfigError as exc:
            _err(str(exc))
            return EXIT_CONFIG
        except (GDCAError, KeyError, OSError) as exc:
            _err(f"cannot resume from {ckpt_path}: {exc}")
            return EXIT_RUNTIME

    log_file = open(_resolve(base, cfg.log_path), "a", encoding="utf-8") if cfg.log_path else None

    def log(line: str):
        print(line)
        if log_file:
            log_file.write(line + "\n")

    def checkpoint(s: TrainState):
        save_checkpoint(ckpt_path, s.tensors(), cfg.extractor_seed)

    try:
        log(f"# start {time.strftime('%Y-%m-%dT%H:%M:%S')} step {state.step}")
        run_training(
            state, schedule, cfg.loss_weights(),
            next_batch=lambda step: sample_batch(images, cfg.patch_size, cfg.batch_size, cfg.seed, step,
                                                 augment_pairs=cfg.augment, precision=SINGLE),
            log=log, on_checkpoint=checkpoint, checkpoint_interval=cfg.checkpoint_interval,
        )
        checkpoint(state)
        log(f"# done {time.strftime('%Y-%m-%dT%H:%M:%S')} step {state.step}")
    except OSError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    finally:
        if log_file:
            log_file.close()
    return EXIT_OK


def load_generator(checkpoint_path) -> Generator:
    tensors, _ = load_checkpoint(checkpoint_path)
    g = Generator(Generator.config_from_state(tensors), precision=SINGLE)
    g.load_state(tensors, "g.")
    return g


def cmd_infer(checkpoint_path, in_path, out_path) -> int:
    try:
        g = load_generator(checkpoint_path)
        lr = load_ppm(in_path)
        if lr.height < 8 or lr.width < 8:
            raise GDCAError(f"input {lr.height}x{lr.width} is smaller than 8x8")
        sr = g.super_resolve(lr.to_tensor(SINGLE))
        save_ppm(out_path, Image.from_tensor(sr))
    except (GDCAError, KeyError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_eval(sr_dir, hr_dir, csv_path=None) -> int:
    try:
        report, mismatched = evaluate_dirs(sr_dir, hr_dir)
    except (GDCAError, OSError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    if mismatched:
        _err("filenames present in only one directory:")
        for name in mismatched:
            print(f"  {name}", file=sys.stderr)
        return EXIT_MISMATCH
    sys.stdout.write(report.to_table())
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_csv())
    return EXIT_PAIR if len(report.valid_rows) != len(report.rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdca", description="GDCA x4 super-resolution")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train", help="pretrain with MAE, then GAN-train")
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    t.add_argument("--print-config", action="store_true", default=argparse.SUPPRESS)

    i = sub.add_parser("infer", help="upscale one PPM image x4")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--in", dest="in_path", required=True)
    i.add_argument("--out", dest="out_path", required=True)

    e = sub.add_parser("eval", help="RMSE/PSNR between matching PPM files")
    e.add_argument("--sr", required=True)
    e.add_argument("--hr", required=True)
    e.add_argument("--csv", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command is None or (args.command == "train" and args.config is None):
        if args.print_config:
            cfg = Config() if args.seed is None else Config(seed=args.seed)
            sys.stdout.write(cfg.to_text())
            return EXIT_OK
        _err("a command is required (train --config <path>, infer, eval)")
        return EXIT_CONFIG
    if args.command == "train":
        return cmd_train(args.config, args.seed, args.print_config)
    if args.command == "infer":
        return cmd_infer(args.checkpoint, args.in_path, args.out_path)
    return cmd_eval(args.sr, args.hr, args.csv)


if __name__ == "__main__":
    sys.exit(main())
