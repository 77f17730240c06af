"""Paired-corpus handling: PNG I/O, synthetic rain streaks, patch
sampling, and a deterministic procedural corpus generator.

Directory layout for a corpus root:  <root>/rainy/<id>.png and
<root>/clean/<id>.png, matched by id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import ConfigError, Tensor


class DataError(RuntimeError):
    """Raised for unreadable or malformed image files."""


@dataclass
class ImagePair:
    rainy: Tensor  # 1x3xHxW in [0,1]
    clean: Tensor
    id: str


@dataclass(frozen=True)
class RainParams:
    density: float = 0.01  # Bernoulli rate of streak seeds
    angle: float = 10.0  # degrees from vertical
    length: int = 9  # streak extent in pixels
    intensity: float = 0.6
    seed: int = 0


def load_png(path) -> Tensor:
    path = Path(path)
    if not path.exists():
        raise DataError(f"image file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"corrupt or unreadable PNG: {path}: {exc}") from exc
    if img.mode != "RGB":
        raise DataError(f"expected 8-bit RGB PNG, got mode {img.mode!r}: {path}")
    arr = np.asarray(img, dtype=np.float32) / 255.0  # HWC
    return Tensor(arr.transpose(2, 0, 1)[None])


def save_png(t: Tensor, path) -> None:
    a = np.asarray(getattr(t, "data", t))
    if a.ndim == 4:
        a = a[0]
    if a.ndim != 3 or a.shape[0] != 3:
        raise ConfigError(f"save_png expects a 3xHxW image, got shape {a.shape}")
    bytes_ = np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(bytes_.transpose(1, 2, 0), mode="RGB").save(path)


def streak_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Oriented line kernel: points splatted bilinearly along the streak
    direction, peak normalized to 1."""
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = (size - 1) / 2.0
    theta = math.radians(angle_deg)
    for t in np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 4 * length):
        y = c + t * math.cos(theta)
        x = c + t * math.sin(theta)
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        fy, fx = y - y0, x - x0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                if 0 <= y0 + dy < size and 0 <= x0 + dx < size:
                    k[y0 + dy, x0 + dx] += wy * wx
    peak = k.max()
    return k / peak if peak > 0 else k


def rain_layer(h: int, w: int, p: RainParams) -> np.ndarray:
    """Additive streak layer in [0, ~intensity], deterministic per seed."""
    if p.density * p.intensity == 0:
        return np.zeros((h, w), dtype=np.float32)
    rng = np.random.default_rng(p.seed)
    seeds = (rng.random((h, w)) < p.density).astype(np.float64)
    kernel = streak_kernel(p.length, p.angle)
    size = kernel.shape[0]
    half = size // 2
    padded = np.pad(seeds, half)
    layer = np.zeros((h, w))
    for i, j in zip(*np.nonzero(kernel)):
        layer += kernel[i, j] * padded[i : i + h, j : j + w]
    return (p.intensity * np.clip(layer, 0.0, 1.0)).astype(np.float32)


def synth_rain(clean: Tensor, p: RainParams, id: str = "synthetic") -> ImagePair:
    """rainy = clamp(clean + streaks, 0, 1); streaks shared across RGB."""
    c = clean.data
    if c.ndim != 4 or c.shape[1] != 3:
        raise ConfigError(f"synth_rain expects 1x3xHxW clean image, got {c.shape}")
    layer = rain_layer(c.shape[2], c.shape[3], p)
    if not layer.any():
        return ImagePair(Tensor(c.copy()), Tensor(c.copy()), id)
    rainy = np.clip(c + layer[None, None], 0.0, 1.0).astype(c.dtype)
    return ImagePair(Tensor(rainy), Tensor(c.copy()), id)


def patch_sample(pair: ImagePair, size: int, rng: np.random.Generator, flip: bool = True) -> ImagePair:
    """Identical random crop (and optional shared horizontal flip) of
    both images."""
    _, _, h, w = pair.rainy.shape
    if size > h or size > w:
        raise ConfigError(f"patch size {size} exceeds image extents {h}x{w}")
    if size & (size - 1):
        raise ConfigError(f"patch size {size} must be a power of two")
    y0 = int(rng.integers(0, h - size + 1))
    x0 = int(rng.integers(0, w - size + 1))
    r = pair.rainy.data[:, :, y0 : y0 + size, x0 : x0 + size]
    c = pair.clean.data[:, :, y0 : y0 + size, x0 : x0 + size]
    if flip and rng.random() < 0.5:
        r = r[:, :, :, ::-1]
        c = c[:, :, :, ::-1]
    return ImagePair(Tensor(np.ascontiguousarray(r)), Tensor(np.ascontiguousarray(c)), pair.id)


class PairedCorpus:
    """Sorted, deterministic view of a rainy/clean directory pair."""

    def __init__(self, root):
        self.root = Path(root)
        rainy_dir = self.root / "rainy"
        clean_dir = self.root / "clean"
        if not rainy_dir.is_dir() or not clean_dir.is_dir():
            raise DataError(f"corpus root {self.root} needs rainy/ and clean/ subdirs")
        rainy_ids = {p.stem for p in rainy_dir.glob("*.png")}
        clean_ids = {p.stem for p in clean_dir.glob("*.png")}
        self.ids = sorted(rainy_ids & clean_ids)
        if not self.ids:
            raise DataError(f"corpus root {self.root} has no matched image pairs")

    def __len__(self) -> int:
        return len(self.ids)

    def load(self, id: str) -> ImagePair:
        return ImagePair(
            load_png(self.root / "rainy" / f"{id}.png"),
            load_png(self.root / "clean" / f"{id}.png"),
            id,
        )

    def pairs(self) -> list[ImagePair]:
        return [self.load(i) for i in self.ids]


# ---------------------------------------------------------------------------
# procedural corpus generation
# ---------------------------------------------------------------------------


def make_clean_image(rng: np.random.Generator, size: int = 64) -> Tensor:
    """Procedural 'scene': smooth color field plus a few solid shapes."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((3, size, size))
    base = rng.uniform(0.2, 0.8, size=3)
    for ch in range(3):
        img[ch] = base[ch] + 0.25 * (
            (2 * rng.random() - 1) * xx + (2 * rng.random() - 1) * yy
        )
        for _ in range(2):
            fx, fy = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            img[ch] += 0.12 * np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
    for _ in range(3):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        ry, rx = rng.uniform(0.05, 0.25, size=2)
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        color = rng.uniform(0.05, 0.95, size=3)
        for ch in range(3):
            img[ch][mask] = color[ch]
    return Tensor(np.clip(img, 0.0, 1.0).astype(np.float32)[None])


def generate_corpus(
    root,
    n_train: int = 24,
    n_test: int = 8,
    size: int = 64,
    seed: int = 1234,
) -> None:
    """Write train/ and test/ paired corpora under `root` as 8-bit PNGs."""
    rng = np.random.default_rng(seed)
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            clean = make_clean_image(rng, size)
            params = RainParams(
                density=float(rng.uniform(0.004, 0.02)),
                angle=float(rng.uniform(-25.0, 25.0)),
                length=int(rng.integers(5, 12)),
                intensity=float(rng.uniform(0.4, 0.8)),
                seed=int(rng.integers(0, 2**63 - 1)),
            )
            pair = synth_rain(clean, params, id=f"{split}_{i:03d}")
            save_png(pair.clean, Path(root) / split / "clean" / f"{pair.id}.png")
            save_png(pair.rainy, Path(root) / split / "rainy" / f"{pair.id}.png")
