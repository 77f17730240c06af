"""Deterministic training loop: progressive stages, cosine-annealed Adam,
metrics log, periodic checkpoints."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import ops
from .checkpoint import save_checkpoint
from .data import ImagePair, patch_sample
from .losses import LossWeights, PerceptualExtractor, total_loss
from .metrics import psnr_y
from .model import DPCNet
from .optim import Adam, Schedule, clip_grad_norm, cosine_lr
from .tensor import Tensor


class NaNLossError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}; aborting")
        self.step = step


@dataclass
class LogEntry:
    step: int
    lr: float
    loss: float
    psnr: Optional[float] = None
    patch_size: int = 0
    batch_size: int = 0

    def line(self) -> str:
        s = f"step={self.step} lr={self.lr:.8g} loss={self.loss:.6g}"
        if self.psnr is not None:
            s += f" psnr={self.psnr:.4f}"
        return s


def _batch(pairs: list[ImagePair], stage, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    idx = rng.integers(0, len(pairs), size=stage.batch_size)
    crops = [patch_sample(pairs[i], stage.patch_size, rng) for i in idx]
    rainy = np.concatenate([c.rainy.data for c in crops], axis=0)
    clean = np.concatenate([c.clean.data for c in crops], axis=0)
    return Tensor(rainy), Tensor(clean)


def train_loop(
    net: DPCNet,
    pairs: list[ImagePair],
    sched: Schedule,
    seed: int = 42,
    weights: LossWeights = LossWeights(),
    extractor: Optional[PerceptualExtractor] = None,
    sink: Optional[Callable[[str], None]] = None,
    eval_every: int = 50,
    checkpoint_every: int = 0,
    out_dir=None,
    clip_norm: float = 1.0,
) -> list[LogEntry]:
    """Run `sched.total_steps` optimization steps over the paired corpus.

    Fully deterministic for a fixed (seed, config, corpus).  Emits one
    log line per step via `sink`; eval PSNR (on the current batch
    prediction) every `eval_every` steps.  Raises NaNLossError on a
    non-finite loss.
    """
    if not pairs:
        raise ValueError("training corpus is empty")
    if extractor is None and weights.perceptual:
        extractor = PerceptualExtractor()
    rng = np.random.default_rng(seed)
    named = list(net.named_parameters())
    opt = Adam(named)
    log: list[LogEntry] = []

    for step in range(sched.total_steps):
        stage = sched.stage_at(step)
        rainy, clean = _batch(pairs, stage, rng)
        net.zero_grad()
        pred = net(rainy)
        loss = total_loss(pred, clean, weights, extractor)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise NaNLossError(step)
        loss.backward()
        clip_grad_norm(named, clip_norm)
        lr = cosine_lr(step, sched)
        opt.step(lr)

        entry = LogEntry(
            step=step,
            lr=lr,
            loss=loss_val,
            patch_size=stage.patch_size,
            batch_size=stage.batch_size,
        )
        if eval_every and (step % eval_every == 0 or step == sched.total_steps - 1):
            clipped = np.clip(pred.data, 0.0, 1.0)
            entry.psnr = psnr_y(clipped, clean.data)
        log.append(entry)
        if sink is not None:
            sink(entry.line())
        if checkpoint_every and out_dir is not None and (step + 1) % checkpoint_every == 0:
            save_checkpoint(named, Path(out_dir) / f"checkpoint_{step + 1:06d}.ckpt")

    if out_dir is not None:
        save_checkpoint(named, Path(out_dir) / "checkpoint_final.ckpt")
    return log


def evaluate(net: DPCNet, pairs: list[ImagePair]) -> dict[str, float]:
    """Mean derained and rainy-input PSNR over full images."""
    derained, rainy_base = [], []
    for p in pairs:
        out = net.derain(p.rainy)
        derained.append(psnr_y(out, p.clean))
        rainy_base.append(psnr_y(p.rainy, p.clean))
    return {
        "mean_psnr_derained": float(np.mean(derained)),
        "mean_psnr_rainy": float(np.mean(rainy_base)),
    }
