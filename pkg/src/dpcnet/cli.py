"""Command-line surface: train / infer / eval / gradcheck.

Exit codes: 0 success, 2 configuration or checkpoint/model mismatch,
3 data error, 4 NaN training abort, 5 gradient-check failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as gradcheck_mod
from .checkpoint import CheckpointError, apply_checkpoint, load_checkpoint
from .config import RunConfig
from .data import DataError, PairedCorpus, load_png, save_png
from .metrics import psnr_y, ssim_y
from .model import DPCNet
from .tensor import ConfigError, Tensor
from .train import NaNLossError, train_loop
from .verify import run_gradcheck_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NAN = 4
EXIT_GRADCHECK = 5


def _load_config(args) -> RunConfig:
    return RunConfig.load(
        path=args.config,
        overrides=args.set or [],
        env_seed=os.environ.get("DPCNET_SEED"),
    )


def _echo(cfg: RunConfig) -> None:
    print("# resolved configuration")
    print(cfg.echo())


def cmd_train(args) -> int:
    try:
        cfg = _load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _echo(cfg)
    root = Path(cfg.data_root)
    try:
        corpus = PairedCorpus(root)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    net = DPCNet(cfg.model_config())
    log_path = out_dir / "train.log"
    try:
        with open(log_path, "w") as log_file:
            def sink(line: str) -> None:
                log_file.write(line + "\n")

            train_loop(
                net,
                corpus.pairs(),
                cfg.schedule(),
                seed=cfg.seed,
                weights=cfg.loss_weights(),
                sink=sink,
                eval_every=int(cfg.values["train.eval_every"]),
                checkpoint_every=int(cfg.values["train.checkpoint_every"]),
                out_dir=out_dir,
                clip_norm=float(cfg.values["train.clip_norm"]),
            )
    except NaNLossError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_NAN
    print(f"checkpoint: {out_dir / 'checkpoint_final.ckpt'}")
    print(f"log: {log_path}")
    return EXIT_OK


def _pow2_pad(a: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Reflect-pad H/W up to the next power of two (>= 4)."""
    _, _, h, w = a.shape
    th = max(4, 1 << (h - 1).bit_length())
    tw = max(4, 1 << (w - 1).bit_length())
    if (th, tw) == (h, w):
        return a, h, w
    return np.pad(a, ((0, 0), (0, 0), (0, th - h), (0, tw - w)), mode="reflect"), h, w


def cmd_infer(args) -> int:
    try:
        cfg = _load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _echo(cfg)
    net = DPCNet(cfg.model_config())
    try:
        apply_checkpoint(net, load_checkpoint(args.checkpoint))
    except (CheckpointError, OSError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    in_path = Path(args.input)
    if in_path.is_dir():
        inputs = sorted(in_path.glob("*.png"))
    elif in_path.exists():
        inputs = [in_path]
    else:
        print(f"data error: input not found: {in_path}", file=sys.stderr)
        return EXIT_DATA
    if not inputs:
        print(f"data error: no PNG inputs under {in_path}", file=sys.stderr)
        return EXIT_DATA
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in inputs:
        try:
            img = load_png(src)
        except DataError as exc:
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        padded, h, w = _pow2_pad(img.data)
        out = net.derain(Tensor(padded)).data[:, :, :h, :w]
        dst = out_dir / f"{src.stem}_derained.png"
        save_png(out, dst)
        print(f"{src} -> {dst}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_ids = {p.stem for p in pred_dir.glob("*.png")}
    gt_ids = {p.stem for p in gt_dir.glob("*.png")}
    # allow infer-style "<id>_derained.png" predictions against plain gt ids
    alias = {p: p[: -len("_derained")] for p in pred_ids if p.endswith("_derained")}
    matched = sorted(
        (p, alias.get(p, p)) for p in pred_ids if alias.get(p, p) in gt_ids
    )
    unmatched = sorted(p for p in pred_ids if alias.get(p, p) not in gt_ids) + sorted(
        g for g in gt_ids if g not in {m[1] for m in matched}
    )
    if not matched or unmatched:
        print(f"data error: unmatched ids: {unmatched}", file=sys.stderr)
        return EXIT_DATA
    psnrs, ssims = [], []
    for pid, gid in matched:
        pred = load_png(pred_dir / f"{pid}.png")
        gt = load_png(gt_dir / f"{gid}.png")
        p, s = psnr_y(pred, gt), ssim_y(pred, gt)
        psnrs.append(p)
        ssims.append(s)
        print(f"{gid}: psnr={p:.4f} ssim={s:.6f}")
    print(f"mean_psnr={float(np.mean(psnrs)):.4f} mean_ssim={float(np.mean(ssims)):.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    try:
        cfg = _load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _echo(cfg)
    if args.sabotage:
        gradcheck_mod.SABOTAGE_OP = args.sabotage
    reports = run_gradcheck_suite()
    failed = []
    for r in reports:
        print(r)
        if not r.passed:
            failed.append(r.op)
    if failed:
        print(f"gradcheck FAILED for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GRADCHECK
    print("gradcheck passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpcnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p_train = sub.add_parser("train", help="train a model on a paired corpus")
    common(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_infer = sub.add_parser("infer", help="derain PNG image(s) with a checkpoint")
    common(p_infer)
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--input", required=True, help="PNG file or directory")
    p_infer.add_argument("--output", required=True, help="output directory")
    p_infer.set_defaults(fn=cmd_infer)

    p_eval = sub.add_parser("eval", help="PSNR/SSIM of predictions vs ground truth")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.set_defaults(fn=cmd_eval)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p_gc)
    p_gc.add_argument("--sabotage", default=None, help=argparse.SUPPRESS)
    p_gc.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
