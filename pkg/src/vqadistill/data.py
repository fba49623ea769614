"""Deterministic synthetic compressed-video dataset.

Procedural pristine clips (three content patterns), parametric
compression-style distortions (DCT-block quantization, Gaussian blur,
frame drops), and a monotone MOS proxy derived from the distortion recipe.
Everything is a pure function of (spec, seed), so datasets are reproducible
bit for bit and labels are exactly known.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import torch
from scipy import ndimage
from scipy.fft import dctn, idctn

from .errors import ConfigError

PATTERNS = ("moving_gradient", "textured_noise_field", "translating_shapes")
FAMILIES = ("block_dct_quant", "gaussian_blur", "temporal_drop")

# Per-family label slope: mos = 1 - strength * severity.
FAMILY_SEVERITY = {
    "block_dct_quant": 1.0,
    "gaussian_blur": 0.8,
    "temporal_drop": 0.6,
}

DCT_QUANT_STEP_MAX = 0.5   # quantization step at strength 1
BLUR_SIGMA_MAX = 2.0       # per-frame Gaussian sigma at strength 1

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class PristineClipSpec:
    content_id: int
    pattern: str
    frames: int
    height: int
    width: int
    motion_px_per_frame: float

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        for name in ("frames", "height", "width"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.motion_px_per_frame < 0:
            raise ConfigError("motion_px_per_frame must be >= 0")


@dataclass(frozen=True)
class DistortionRecipe:
    codec_sim: str
    strength: float
    block_size: int = 8

    def __post_init__(self):
        if self.codec_sim not in FAMILIES:
            raise ConfigError(f"unknown codec_sim {self.codec_sim!r}; expected one of {FAMILIES}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"strength must be in [0, 1], got {self.strength}")
        if self.block_size <= 0:
            raise ValueError(f"block_size must be positive, got {self.block_size}")


@dataclass
class LabeledClip:
    clip: torch.Tensor  # [frames, 3, height, width] float32 in [0, 1]
    mos: float
    content_id: int
    recipe: DistortionRecipe


@dataclass
class DatasetSplit:
    train: List[LabeledClip]
    test: List[LabeledClip]

    def content_ids(self, part: str) -> set:
        return {c.content_id for c in getattr(self, part)}


@dataclass(frozen=True)
class DataConfig:
    """Generation parameters for one synthetic dataset."""

    num_contents: int = 20
    strengths_per_family: int = 4
    source_frames: int = 16
    source_height: int = 64
    source_width: int = 64
    crop_frames: int = 8
    crop_height: int = 32
    crop_width: int = 32
    block_size: int = 8
    train_fraction: float = 0.8


def _entropy(seed: int, *keys) -> list:
    """Stable nonnegative entropy words for numpy's SeedSequence."""
    words = [seed & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode()))
        else:
            words.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    return words


def _rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(_entropy(seed, *keys))


def derived_seed(seed: int, *keys) -> int:
    """A child integer seed, stable across runs and platforms."""
    return int(np.random.SeedSequence(_entropy(seed, *keys)).generate_state(1)[0])


def _moving_gradient(spec: PristineClipSpec, rng: np.random.Generator) -> np.ndarray:
    t, h, w = spec.frames, spec.height, spec.width
    theta = rng.uniform(0, 2 * np.pi)
    period = rng.uniform(8.0, 24.0)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    proj = xx * np.cos(theta) + yy * np.sin(theta)
    frames = np.empty((t, 3, h, w), dtype=np.float64)
    for ti in range(t):
        shift = spec.motion_px_per_frame * ti
        for c in range(3):
            frames[ti, c] = 0.5 + 0.5 * np.sin(
                2 * np.pi * (proj - shift) / period + phases[c])
    return frames


def _textured_noise_field(spec: PristineClipSpec, rng: np.random.Generator) -> np.ndarray:
    t, h, w = spec.frames, spec.height, spec.width
    pad = int(math.ceil(spec.motion_px_per_frame * max(t - 1, 1))) + 2
    field = rng.random((3, h + 2 * pad, w + 2 * pad))
    field = ndimage.gaussian_filter(field, sigma=(0, 0.8, 0.8))
    lo, hi = field.min(), field.max()
    field = (field - lo) / (hi - lo)
    angle = rng.uniform(0, 2 * np.pi)
    dx_per_frame = np.cos(angle) * spec.motion_px_per_frame
    dy_per_frame = np.sin(angle) * spec.motion_px_per_frame
    frames = np.empty((t, 3, h, w), dtype=np.float64)
    for ti in range(t):
        sx, sy = dx_per_frame * ti, dy_per_frame * ti
        ix, iy = int(math.floor(sx)), int(math.floor(sy))
        fx, fy = sx - ix, sy - iy
        y0, x0 = pad + iy, pad + ix
        window = lambda oy, ox: field[:, y0 + oy:y0 + oy + h, x0 + ox:x0 + ox + w]
        frames[ti] = ((1 - fy) * (1 - fx) * window(0, 0)
                      + (1 - fy) * fx * window(0, 1)
                      + fy * (1 - fx) * window(1, 0)
                      + fy * fx * window(1, 1))
    return frames


def _translating_shapes(spec: PristineClipSpec, rng: np.random.Generator) -> np.ndarray:
    t, h, w = spec.frames, spec.height, spec.width
    num_shapes = int(rng.integers(6, 11))
    background = rng.uniform(0.2, 0.5, size=3)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    frames = np.empty((t, 3, h, w), dtype=np.float64)
    frames[:] = background[None, :, None, None]
    shapes = []
    for _ in range(num_shapes):
        shapes.append({
            "kind": "circle" if rng.random() < 0.5 else "rect",
            "cx": rng.uniform(0, w),
            "cy": rng.uniform(0, h),
            "size": rng.uniform(min(h, w) * 0.08, min(h, w) * 0.22),
            "color": rng.uniform(0, 1, size=3),
            "angle": rng.uniform(0, 2 * np.pi),
            "speed": spec.motion_px_per_frame * rng.uniform(0.75, 1.5),
        })
    for ti in range(t):
        for s in shapes:
            cx = (s["cx"] + np.cos(s["angle"]) * s["speed"] * ti) % w
            cy = (s["cy"] + np.sin(s["angle"]) * s["speed"] * ti) % h
            if s["kind"] == "circle":
                mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= s["size"] ** 2
            else:
                mask = (np.abs(xx - cx) <= s["size"]) & (np.abs(yy - cy) <= s["size"])
            for c in range(3):
                frames[ti, c][mask] = s["color"][c]
    return frames


_PATTERN_FNS = {
    "moving_gradient": _moving_gradient,
    "textured_noise_field": _textured_noise_field,
    "translating_shapes": _translating_shapes,
}


def generate_pristine(spec: PristineClipSpec, seed: int) -> torch.Tensor:
    """Deterministic reference clip in [0, 1], shape [frames, 3, H, W]."""
    rng = _rng(seed, "pristine", spec.content_id)
    frames = _PATTERN_FNS[spec.pattern](spec, rng)
    return torch.from_numpy(np.clip(frames, 0.0, 1.0).astype(np.float32))


def apply_distortion(clip: torch.Tensor, recipe: DistortionRecipe) -> torch.Tensor:
    """Apply one parametric distortion; strength 0 is a bit-exact identity."""
    if recipe.strength == 0.0:
        return clip.clone()
    x = clip.numpy().astype(np.float32, copy=True)
    t, c, h, w = x.shape
    if recipe.codec_sim == "block_dct_quant":
        bs = recipe.block_size
        if h % bs != 0 or w % bs != 0:
            raise ValueError(
                f"block_size {bs} does not divide frame dims {h}x{w}")
        step = DCT_QUANT_STEP_MAX * recipe.strength
        blocks = x.reshape(t, c, h // bs, bs, w // bs, bs)
        coefs = dctn(blocks, axes=(3, 5), norm="ortho")
        coefs = step * np.round(coefs / step)
        x = idctn(coefs, axes=(3, 5), norm="ortho").reshape(t, c, h, w)
    elif recipe.codec_sim == "gaussian_blur":
        sigma = BLUR_SIGMA_MAX * recipe.strength
        x = ndimage.gaussian_filter(x, sigma=(0, 0, sigma, sigma))
    else:  # temporal_drop: freeze the last ceil(strength*(T-1)) frames
        k = math.ceil(recipe.strength * (t - 1))
        for ti in range(t - k, t):
            x[ti] = x[ti - 1]
    return torch.from_numpy(np.clip(x, 0.0, 1.0).astype(np.float32))


def mos_proxy(recipe: DistortionRecipe) -> float:
    """Label model: 1 - strength * family_severity, strictly decreasing."""
    return 1.0 - recipe.strength * FAMILY_SEVERITY[recipe.codec_sim]


def sample_crop(clip: torch.Tensor, frames: int, height: int, width: int,
                seed: int) -> torch.Tensor:
    """Seed-deterministic contiguous spatiotemporal crop."""
    t, _, h, w = clip.shape
    if frames > t or height > h or width > w:
        raise ValueError(
            f"crop {frames}x{height}x{width} exceeds source {t}x{h}x{w}")
    rng = _rng(seed, "crop")
    t0 = int(rng.integers(0, t - frames + 1))
    y0 = int(rng.integers(0, h - height + 1))
    x0 = int(rng.integers(0, w - width + 1))
    return clip[t0:t0 + frames, :, y0:y0 + height, x0:x0 + width].clone()


def strength_grid(count: int) -> List[float]:
    return [(i + 1) / count for i in range(count)]


def _content_specs(config: DataConfig, seed: int) -> List[PristineClipSpec]:
    specs = []
    for cid in range(config.num_contents):
        motion = float(_rng(seed, "content", cid).uniform(0.5, 2.5))
        specs.append(PristineClipSpec(
            content_id=cid,
            pattern=PATTERNS[cid % len(PATTERNS)],
            frames=config.source_frames,
            height=config.source_height,
            width=config.source_width,
            motion_px_per_frame=motion,
        ))
    return specs


def _split_content_ids(num_contents: int, train_fraction: float, seed: int):
    perm = _rng(seed, "split").permutation(num_contents)
    n_test = max(1, round(num_contents * (1.0 - train_fraction)))
    n_test = min(n_test, num_contents - 1)
    test_ids = set(int(i) for i in perm[:n_test])
    train_ids = set(range(num_contents)) - test_ids
    return train_ids, test_ids


def _make_labeled_clip(spec: PristineClipSpec, recipe: DistortionRecipe,
                       crop: Sequence[int], crop_seed: int,
                       seed: int) -> LabeledClip:
    pristine = generate_pristine(spec, seed)
    distorted = apply_distortion(pristine, recipe)
    cropped = sample_crop(distorted, *crop, seed=crop_seed)
    return LabeledClip(clip=cropped, mos=mos_proxy(recipe),
                       content_id=spec.content_id, recipe=recipe)


def build_dataset(num_contents: int, strengths_per_family: int,
                  crop: Sequence[int], seed: int,
                  config: DataConfig | None = None) -> DatasetSplit:
    """Contents x families x strengths, content-disjoint 80/20 split.

    Clips are ordered by (content_id, family, strength); the whole split is
    a deterministic function of (config, seed).
    """
    if num_contents < 2:
        raise ConfigError(
            "num_contents must be >= 2 to form a content-disjoint split")
    if config is None:
        config = DataConfig()
    config = DataConfig(**{**config.__dict__,
                           "num_contents": num_contents,
                           "strengths_per_family": strengths_per_family,
                           "crop_frames": crop[0], "crop_height": crop[1],
                           "crop_width": crop[2]})
    specs = _content_specs(config, seed)
    strengths = strength_grid(strengths_per_family)
    train_ids, test_ids = _split_content_ids(num_contents,
                                             config.train_fraction, seed)
    train, test = [], []
    for spec in specs:
        for fam_idx, family in enumerate(FAMILIES):
            for s_idx, strength in enumerate(strengths):
                recipe = DistortionRecipe(family, strength, config.block_size)
                crop_seed = derived_seed(seed, "crop", spec.content_id,
                                         fam_idx, s_idx)
                item = _make_labeled_clip(spec, recipe, crop, crop_seed, seed)
                (train if spec.content_id in train_ids else test).append(item)
    return DatasetSplit(train=train, test=test)


def build_dataset_from_config(config: DataConfig, seed: int) -> DatasetSplit:
    crop = (config.crop_frames, config.crop_height, config.crop_width)
    return build_dataset(config.num_contents, config.strengths_per_family,
                         crop, seed, config=config)


def dataset_manifest(config: DataConfig, seed: int) -> Dict:
    """One record per clip; clips are regenerable from the manifest alone."""
    specs = _content_specs(config, seed)
    strengths = strength_grid(config.strengths_per_family)
    train_ids, _ = _split_content_ids(config.num_contents,
                                      config.train_fraction, seed)
    records = []
    for spec in specs:
        for fam_idx, family in enumerate(FAMILIES):
            for s_idx, strength in enumerate(strengths):
                recipe = DistortionRecipe(family, strength, config.block_size)
                crop_seed = derived_seed(seed, "crop", spec.content_id,
                                         fam_idx, s_idx)
                records.append({
                    "content_id": spec.content_id,
                    "pattern": spec.pattern,
                    "motion_px_per_frame": spec.motion_px_per_frame,
                    "family": family,
                    "strength": strength,
                    "block_size": config.block_size,
                    "mos": mos_proxy(recipe),
                    "seed": crop_seed,
                    "shape": [config.crop_frames, 3,
                              config.crop_height, config.crop_width],
                    "split": "train" if spec.content_id in train_ids else "test",
                })
    return {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "config": config.__dict__,
        "records": records,
    }


def write_manifest(manifest: Dict, path: Path) -> None:
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def read_manifest(path: Path) -> Dict:
    return json.loads(Path(path).read_text())


def clip_from_record(record: Dict, manifest: Dict) -> LabeledClip:
    """Regenerate one labeled clip from its manifest record."""
    cfg = manifest["config"]
    spec = PristineClipSpec(
        content_id=record["content_id"], pattern=record["pattern"],
        frames=cfg["source_frames"], height=cfg["source_height"],
        width=cfg["source_width"],
        motion_px_per_frame=record["motion_px_per_frame"])
    recipe = DistortionRecipe(record["family"], record["strength"],
                              record["block_size"])
    crop = (cfg["crop_frames"], cfg["crop_height"], cfg["crop_width"])
    return _make_labeled_clip(spec, recipe, crop, record["seed"],
                              manifest["seed"])


def split_from_manifest(manifest: Dict) -> DatasetSplit:
    train, test = [], []
    for record in manifest["records"]:
        item = clip_from_record(record, manifest)
        (train if record["split"] == "train" else test).append(item)
    return DatasetSplit(train=train, test=test)


def save_clip_cache(path: Path, clip: torch.Tensor) -> None:
    """Binary cache: .npy header (shape + dtype) and row-major float32 body."""
    np.save(path, clip.numpy().astype(np.float32, copy=False))


def load_clip_cache(path: Path) -> torch.Tensor:
    return torch.from_numpy(np.load(path))


def cache_split(split: DatasetSplit, directory: Path) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for part in ("train", "test"):
        for i, item in enumerate(getattr(split, part)):
            p = directory / f"{part}_{i:04d}.npy"
            save_clip_cache(p, item.clip)
            paths.append(p)
    return paths
